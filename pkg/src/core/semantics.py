"""离线参考求值器：定量语义 ⟦φ⟧F ∈ [−1,1]

含一个自由变量的子公式按该变量的候选时刻数组整体求值（numpy 向量化），
在线监控器的结果与这里逐位对照。
"""
import math
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .ast_nodes import (
    And,
    Binary,
    Forall,
    Formula,
    Literal,
    Or,
    Pred,
    Quantifier,
    SignalAt,
    SignalTerm,
    TimeTerm,
    Unary,
    free_var_table,
    iter_signal_ats,
    term_offset,
    term_var,
)
from .errors import NegativeIndexReachable, UndefinedFormula, UndefinedSignalValue
from .trace import INTERPOLATIONS, Trace, interpolate


DEFAULT_EPSILON = 1e-9
DIFF_MODES = ("quantitative", "boolean")


@dataclass(frozen=True)
class EvalConfig:
    epsilon: float = DEFAULT_EPSILON
    interpolation: str = "linear"
    diff_mode: str = "quantitative"

    def __post_init__(self):
        if not 0 < self.epsilon < 1:
            raise ValueError(f"epsilon must lie in (0, 1), got {self.epsilon!r}")
        if self.interpolation not in INTERPOLATIONS:
            raise ValueError(f"interpolation must be one of {INTERPOLATIONS}")
        if self.diff_mode not in DIFF_MODES:
            raise ValueError(f"diff_mode must be one of {DIFF_MODES}")


# ---------------------------------------------------------------- functions
# 在线与离线共用同一组 numpy ufunc，保证两边的浮点结果一致

UNARY_FUNCS: Dict[str, Callable] = {
    "neg": np.negative,
    "abs": np.abs,
    "sin": np.sin,
    "cos": np.cos,
    "sqrt": np.sqrt,
    "exp": np.exp,
}

BINARY_FUNCS: Dict[str, Callable] = {
    "add": np.add,
    "sub": np.subtract,
    "mul": np.multiply,
    "div": np.divide,
    "min": np.minimum,
    "max": np.maximum,
    "pow": np.power,
}


# --------------------------------------------------------------------- diff

def _relation_holds(rel: str, mu: float) -> bool:
    if rel == "<":
        return mu < 0
    if rel == "<=":
        return mu <= 0
    if rel == ">":
        return mu > 0
    if rel == ">=":
        return mu >= 0
    if rel == "=":
        return mu == 0
    if rel == "!=":
        return mu != 0
    raise ValueError(f"unknown relation '{rel}'")


def diff(rel: str, lhs: float, r: float, epsilon: float = DEFAULT_EPSILON,
         mode: str = "quantitative") -> float:
    """谓词 lhs ∼ r 的适应度

    μ = lhs − r；≥ 取 μ/(|μ|+1)，≤ 取 −μ/(|μ|+1)，= 取 −|μ|/(|μ|+1)，
    ≠ 取 |μ|/(|μ|+1)；严格关系与 ≠ 在 μ=0 时取 −ε。
    """
    mu = lhs - r
    if mu != mu:
        return math.nan
    if mode == "boolean":
        return 1.0 if _relation_holds(rel, mu) else -1.0
    scaled = mu / (abs(mu) + 1.0)
    if rel == ">=":
        return scaled
    if rel == "<=":
        return -scaled
    if rel == ">":
        return scaled if mu != 0 else -epsilon
    if rel == "<":
        return -scaled if mu != 0 else -epsilon
    if rel == "=":
        return -abs(mu) / (abs(mu) + 1.0)
    if rel == "!=":
        return abs(mu) / (abs(mu) + 1.0) if mu != 0 else -epsilon
    raise ValueError(f"unknown relation '{rel}'")


def diff_array(rel: str, lhs: np.ndarray, r: float, epsilon: float = DEFAULT_EPSILON,
               mode: str = "quantitative") -> np.ndarray:
    mu = np.asarray(lhs, dtype=np.float64) - r
    if mode == "boolean":
        holds = {
            "<": mu < 0,
            "<=": mu <= 0,
            ">": mu > 0,
            ">=": mu >= 0,
            "=": mu == 0,
            "!=": mu != 0,
        }[rel]
        return np.where(holds, 1.0, -1.0)
    absmu = np.abs(mu)
    scaled = mu / (absmu + 1.0)
    if rel == ">=":
        return scaled
    if rel == "<=":
        return -scaled
    if rel == ">":
        return np.where(mu != 0, scaled, -epsilon)
    if rel == "<":
        return np.where(mu != 0, -scaled, -epsilon)
    if rel == "=":
        return -absmu / (absmu + 1.0)
    if rel == "!=":
        return np.where(mu != 0, absmu / (absmu + 1.0), -epsilon)
    raise ValueError(f"unknown relation '{rel}'")


# ------------------------------------------------------------------- sample

def sample(trace: Trace, f: str, t: float, cfg: Optional[EvalConfig] = None) -> float:
    cfg = cfg or EvalConfig()
    if f not in trace.values:
        raise UndefinedSignalValue(f"signal '{f}' is not in the trace")
    if not 0.0 <= t <= trace.domain_end:
        raise UndefinedSignalValue(
            f"{f}({t:g}) lies outside the time domain [0, {trace.domain_end:g}]"
        )
    return float(interpolate(trace.times, trace.values[f], float(t), cfg.interpolation))


# --------------------------------------------------------------- evaluation

class _Evaluator:
    def __init__(self, phi: Formula, trace: Trace, cfg: EvalConfig):
        self.trace = trace
        self.cfg = cfg
        self.times = trace.times
        self.end = trace.domain_end
        self.free = free_var_table(phi)

    def formula(self, node: Formula, var: Optional[str], us: np.ndarray) -> np.ndarray:
        if us.size > 1 and self.free[id(node)] is None:
            # 闭子公式与外层变量无关，只算一次
            return np.full(us.shape, self.formula(node, None, us[:1])[0])
        if isinstance(node, Pred):
            rho = self.term(node.rho, var, us)
            return diff_array(node.rel, rho, node.r, self.cfg.epsilon, self.cfg.diff_mode)
        if isinstance(node, And):
            return np.minimum(self.formula(node.left, var, us), self.formula(node.right, var, us))
        if isinstance(node, Or):
            return np.maximum(self.formula(node.left, var, us), self.formula(node.right, var, us))
        if isinstance(node, Quantifier):
            return self.quantifier(node, var, us)
        raise TypeError(f"not an RFOL formula: {node!r}")

    def term(self, node: SignalTerm, var: Optional[str], us: np.ndarray) -> np.ndarray:
        if isinstance(node, SignalAt):
            ts = self._time(node.at, var, us)
            if node.signal not in self.trace.values:
                raise UndefinedFormula(f"signal '{node.signal}' is not in the trace")
            if ts.size and (ts.min() < 0.0 or ts.max() > self.end):
                raise UndefinedFormula(
                    f"{node.signal} is read outside the time domain [0, {self.end:g}]"
                )
            return interpolate(self.times, self.trace.values[node.signal], ts, self.cfg.interpolation)
        if isinstance(node, Literal):
            return np.full(us.shape, float(node.value))
        if isinstance(node, Unary):
            with np.errstate(all="ignore"):
                out = UNARY_FUNCS[node.g](self.term(node.arg, var, us))
            return self._finite(out, node.g)
        if isinstance(node, Binary):
            left = self.term(node.left, var, us)
            right = self.term(node.right, var, us)
            with np.errstate(all="ignore"):
                out = BINARY_FUNCS[node.h](left, right)
            return self._finite(out, node.h)
        raise TypeError(f"not a signal term: {node!r}")

    @staticmethod
    def _finite(out: np.ndarray, op: str) -> np.ndarray:
        if not np.all(np.isfinite(out)):
            raise UndefinedFormula(f"'{op}' produced an undefined value")
        return out

    def _time(self, tt: TimeTerm, var: Optional[str], us: np.ndarray) -> np.ndarray:
        w = term_var(tt)
        if w is None:
            return np.full(us.shape, term_offset(tt))
        if w != var:
            raise UndefinedFormula(f"time variable '{w}' is unbound here")
        return us + term_offset(tt)

    def quantifier(self, q: Quantifier, var: Optional[str], us: np.ndarray) -> np.ndarray:
        n = us.size
        lo = self._time(q.iv.lower, var, us)
        hi = self._time(q.iv.upper, var, us)
        if n and (lo.min() < 0.0 or hi.max() > self.end):
            raise UndefinedFormula(
                f"interval of '{q.var}' leaves the time domain [0, {self.end:g}]"
            )

        # 候选时刻：区间内部的网格点，加上闭端点（必要时插值）
        times = self.times
        left = np.searchsorted(times, lo, side="right")
        right = np.searchsorted(times, hi, side="left")
        inner = np.maximum(right - left, 0)
        with_lo = q.iv.lower_closed & ((lo < hi) | ((lo == hi) & q.iv.upper_closed))
        with_hi = q.iv.upper_closed & (hi > lo)
        seg_inner = np.repeat(np.arange(n), inner)
        offsets = np.arange(seg_inner.size) - np.repeat(np.cumsum(inner) - inner, inner)
        inner_idx = np.repeat(left, inner) + offsets
        cand = np.concatenate([lo[with_lo], times[inner_idx], hi[with_hi]])
        seg = np.concatenate([np.nonzero(with_lo)[0], seg_inner, np.nonzero(with_hi)[0]])

        out = np.full(n, q.neutral)
        if cand.size == 0:
            return out

        body_var = self.free[id(q.body)]
        if body_var == q.var:
            uniq, inverse = np.unique(cand, return_inverse=True)
            vals = self.formula(q.body, q.var, uniq)[inverse.reshape(-1)]
        elif body_var is None:
            vals = np.full(cand.size, self.formula(q.body, None, cand[:1])[0])
        else:
            # 量词体只依赖外层变量：非空时取体的值，空集时取中性元
            hit = np.unique(seg)
            out[hit] = self.formula(q.body, var, us[hit])
            return out

        reducer = np.minimum if isinstance(q, Forall) else np.maximum
        reducer.at(out, seg, vals)
        return out


def evaluate(phi: Formula, trace: Trace, cfg: Optional[EvalConfig] = None) -> float:
    """⟦φ⟧F：闭公式在轨迹上的定量值

    Raises:
        UndefinedFormula: 信号在 𝕋 之外被读取、区间越出 𝕋，或算术运算无定义
    """
    cfg = cfg or EvalConfig()
    ev = _Evaluator(phi, trace, cfg)
    if ev.free[id(phi)] is not None:
        raise UndefinedFormula(f"formula has free time variable '{ev.free[id(phi)]}'")
    return float(ev.formula(phi, None, np.zeros(1))[0])


def holds(phi: Formula, trace: Trace, cfg: Optional[EvalConfig] = None) -> bool:
    return evaluate(phi, trace, cfg) >= 0


def oracle_offline(phi: Formula, traces: Sequence[Trace], cfg: Optional[EvalConfig] = None) -> float:
    """不确定模型的 k 条输出上取最小适应度"""
    if not traces:
        raise ValueError("oracle_offline needs at least one trace")
    ends = {tr.domain_end for tr in traces}
    if len(ends) > 1:
        raise ValueError(f"traces disagree on the domain end: {sorted(ends)}")
    return min(evaluate(phi, tr, cfg) for tr in traces)


# ---------------------------------------------------------- well-definedness

@dataclass(frozen=True)
class DomainCheck:
    ok: bool
    required_end: float


def variable_ranges(phi: Formula) -> Dict[str, Tuple[float, float]]:
    """每个绑定变量可能取到的绝对时间范围（用区间端点的上下确界）"""
    ranges: Dict[str, Tuple[float, float]] = {}

    def bound(tt: TimeTerm, pick: int) -> float:
        w = term_var(tt)
        if w is None:
            return term_offset(tt)
        return ranges[w][pick] + term_offset(tt)

    def visit(node):
        if isinstance(node, (And, Or)):
            visit(node.left)
            visit(node.right)
        elif isinstance(node, Quantifier):
            ranges[node.var] = (bound(node.iv.lower, 0), bound(node.iv.upper, 1))
            visit(node.body)

    visit(phi)
    return ranges


def reach(phi: Formula) -> Tuple[float, float]:
    """所有实例化中可达的最小与最大时刻（信号下标和区间端点）"""
    ranges = variable_ranges(phi)
    lows: List[float] = [0.0]
    highs: List[float] = [0.0]
    for sa in iter_signal_ats(phi):
        w = term_var(sa.at)
        off = term_offset(sa.at)
        if w is None:
            lows.append(off)
            highs.append(off)
        else:
            lows.append(ranges[w][0] + off)
            highs.append(ranges[w][1] + off)
    lows.extend(lo for lo, _ in ranges.values())
    highs.extend(hi for _, hi in ranges.values())
    return min(lows), max(highs)


def well_defined(phi: Formula, domain_end: float) -> DomainCheck:
    """检查 𝕋=[0, domain_end] 是否覆盖所有可达下标

    Raises:
        NegativeIndexReachable: 某个实例化会读取负时刻
    """
    low, high = reach(phi)
    if low < 0:
        raise NegativeIndexReachable(low)
    return DomainCheck(ok=high <= domain_end, required_end=high)
