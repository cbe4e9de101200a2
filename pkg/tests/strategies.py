"""hypothesis 策略：随机 RFOL 公式、STL 公式、整数网格与非均匀网格轨迹

生成时跟踪每个变量的绝对取值范围，保证不会读到负时刻。
"""
import numpy as np
from hypothesis import strategies as st

from src.core.ast_nodes import (
    And,
    Binary,
    Const,
    Exists,
    Forall,
    Interval,
    Literal,
    Minus,
    Or,
    Plus,
    Pred,
    SignalAt,
    SignalDecl,
    Spec,
    Unary,
    Var,
    make_term,
)
from src.core.semantics import reach
from src.core.stl import Atom, Finally, Globally, Not, Release, StlAnd, StlOr, Until, STL_RELATIONS
from src.core.trace import Trace

SIGNALS = ("a", "b", "c")
SPEC = Spec([SignalDecl(name) for name in SIGNALS])

# 不会产生 NaN 或无穷的运算
SAFE_UNARY = ("neg", "abs", "sin", "cos")
SAFE_BINARY = ("add", "sub", "mul", "min", "max")
RELATIONS = ("<", "<=", ">", ">=", "=", "!=")

MAX_GRID = 200


@st.composite
def time_indices(draw, var, lo):
    options = ["const"]
    if var is not None:
        options += ["var", "var", "plus"]
        if lo >= 1:
            options += ["minus", "minus"]
    kind = draw(st.sampled_from(options))
    if kind == "const":
        return Const(float(draw(st.integers(0, 3))))
    if kind == "var":
        return Var(var)
    if kind == "plus":
        return Plus(var, float(draw(st.integers(1, 2))))
    return Minus(var, float(draw(st.integers(1, min(2, lo)))))


@st.composite
def signal_terms(draw, var, lo, depth=2):
    kinds = ["at", "at", "at"]
    if depth > 0:
        kinds += ["unary", "binary", "binary"]
    kinds.append("literal")
    kind = draw(st.sampled_from(kinds))
    if kind == "at":
        return SignalAt(draw(st.sampled_from(SIGNALS)), draw(time_indices(var, lo)))
    if kind == "literal":
        return Literal(float(draw(st.integers(-2, 2))))
    if kind == "unary":
        return Unary(draw(st.sampled_from(SAFE_UNARY)), draw(signal_terms(var, lo, depth - 1)))
    return Binary(
        draw(st.sampled_from(SAFE_BINARY)),
        draw(signal_terms(var, lo, depth - 1)),
        draw(signal_terms(var, lo, depth - 1)),
    )


@st.composite
def predicates(draw, var, lo):
    return Pred(
        draw(signal_terms(var, lo)),
        draw(st.sampled_from(RELATIONS)),
        float(draw(st.integers(-2, 2))),
    )


@st.composite
def _formula(draw, var, lo, hi, depth, names):
    kinds = ["pred"]
    if depth > 0:
        kinds += ["and", "or", "quant", "quant"]
    kind = draw(st.sampled_from(kinds))
    if kind == "pred":
        return draw(predicates(var, lo))
    if kind in ("and", "or"):
        cls = And if kind == "and" else Or
        return cls(
            draw(_formula(var, lo, hi, depth - 1, names)),
            draw(_formula(var, lo, hi, depth - 1, names)),
        )

    v = f"v{len(names)}"
    names.append(v)
    shapes = ["const"]
    if var is not None:
        shapes += ["window", "window"]
        if lo - 2 >= 0:
            shapes.append("mixed")
    shape = draw(st.sampled_from(shapes))
    if shape == "const":
        c = draw(st.integers(0, 4))
        w = draw(st.integers(0, 4))
        lower, upper, v_lo, v_hi = Const(float(c)), Const(float(c + w)), c, c + w
    elif shape == "window":
        a = draw(st.integers(max(-3, -lo), 3))
        b = draw(st.integers(a, a + 3))
        lower, upper, v_lo, v_hi = make_term(var, a), make_term(var, b), lo + a, hi + b
    else:
        b = draw(st.integers(-2, 2))
        c = draw(st.integers(0, lo + b))
        lower, upper, v_lo, v_hi = Const(float(c)), make_term(var, b), c, hi + b
    iv = Interval(lower, upper, draw(st.booleans()), draw(st.booleans()))
    body = draw(_formula(v, v_lo, v_hi, depth - 1, names))
    cls = draw(st.sampled_from((Forall, Exists)))
    return cls(v, iv, body)


@st.composite
def rfol_formulas(draw, max_depth=4):
    """闭的、良构的随机 RFOL 公式，量词嵌套不超过 max_depth 层"""
    depth = draw(st.integers(1, max_depth))
    return draw(_formula(None, 0, 0, depth, []))


@st.composite
def traces(draw, end, signals=SIGNALS, values=None):
    """整数网格 0..end 上的分段线性轨迹"""
    end = int(np.ceil(end))
    n = end + 1
    values = values or st.integers(-3, 3)
    columns = {
        name: np.array([float(draw(values)) for _ in range(n)])
        for name in signals
    }
    return Trace(np.arange(n, dtype=np.float64), columns)


@st.composite
def dyadic_traces(draw, end, signals=SIGNALS, values=None):
    """非均匀网格上的分段线性轨迹

    以长度 4 的段为单位随机二分，段长都是 2 的幂（1/8 到 4），
    整数值在这些点之间插值没有舍入误差。网格终点不小于 end。
    """
    span = 4 * int(np.ceil(max(end, 1.0) / 4))
    points = []

    def split(a, length):
        if length > 0.125 and draw(st.booleans()):
            split(a, length / 2)
            split(a + length / 2, length / 2)
        else:
            points.append(a)

    for a in range(0, span, 4):
        split(float(a), 4.0)
    points.append(float(span))
    values = values or st.integers(-3, 3)
    columns = {
        name: np.array([float(draw(values)) for _ in points])
        for name in signals
    }
    return Trace(np.array(points), columns)


@st.composite
def outer_only_formulas(draw):
    """内层量词的体只读取外层变量：Q t∈[a,b]: Q' t1∈⟨t+c, t+d⟩: ψ(t)"""
    a = draw(st.integers(0, 4))
    b = a + draw(st.integers(0, 4))
    c = draw(st.sampled_from([0.0, 0.25, 0.5, 1.0]))
    d = c + draw(st.sampled_from([0.0, 0.25, 0.5, 1.0, 2.0]))
    inner_iv = Interval(make_term("t", c), make_term("t", d), draw(st.booleans()), draw(st.booleans()))
    body = draw(predicates("t", a))
    inner = draw(st.sampled_from((Forall, Exists)))("t1", inner_iv, body)
    outer_iv = Interval(Const(float(a)), Const(float(b)), draw(st.booleans()), draw(st.booleans()))
    return draw(st.sampled_from((Forall, Exists)))("t", outer_iv, inner)


def domain_for(*formulas) -> float:
    """覆盖所有给定公式可达时刻的最小整数域终点"""
    return float(np.ceil(max(reach(phi)[1] for phi in formulas)))


# ---------------------------------------------------------------------- STL

@st.composite
def stl_formulas(draw, depth=3, top=True):
    """有界 STL；Until/Release 只出现在所有时序算子之外"""
    kinds = ["atom"]
    if depth > 0:
        kinds += ["not", "and", "or", "F", "G"]
        if top:
            kinds += ["U", "R"]
    kind = draw(st.sampled_from(kinds))
    if kind == "atom":
        return Atom(
            draw(st.sampled_from(SIGNALS)),
            draw(st.sampled_from(STL_RELATIONS)),
            float(draw(st.integers(-2, 2))),
        )
    if kind == "not":
        return Not(draw(stl_formulas(depth - 1, top)))
    if kind in ("and", "or"):
        cls = StlAnd if kind == "and" else StlOr
        return cls(draw(stl_formulas(depth - 1, top)), draw(stl_formulas(depth - 1, top)))
    a = float(draw(st.integers(0, 3)))
    b = a + float(draw(st.integers(0, 3)))
    if kind in ("F", "G"):
        cls = Finally if kind == "F" else Globally
        return cls(a, b, draw(stl_formulas(depth - 1, False)))
    cls = Until if kind == "U" else Release
    return cls(a, b, draw(stl_formulas(depth - 1, False)), draw(stl_formulas(depth - 1, False)))
