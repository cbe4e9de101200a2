"""有界 STL 前端：解析、否定范式、翻译为 RFOL，以及离散网格上的布尔求值"""
from dataclasses import dataclass
from typing import Dict, List, Optional, Set, Tuple, Union

from lark import Lark, Transformer
from lark import exceptions as lark_exceptions

from .ast_nodes import (
    NEGATED_RELATION,
    And,
    Const,
    Exists,
    Forall,
    Formula,
    Interval,
    Or,
    Pred,
    SignalAt,
    Var,
    make_term,
)
from .errors import RfolSyntaxError, SourcePos, StlTranslationError, UndefinedFormula
from .trace import Trace


STL_RELATIONS = ("<", "<=", ">", ">=")


@dataclass(frozen=True)
class Atom:
    x: str
    rel: str
    c: float


@dataclass(frozen=True)
class Not:
    arg: "StlFormula"


@dataclass(frozen=True)
class StlAnd:
    left: "StlFormula"
    right: "StlFormula"


@dataclass(frozen=True)
class StlOr:
    left: "StlFormula"
    right: "StlFormula"


@dataclass(frozen=True)
class _Temporal:
    a: float
    b: float

    def __post_init__(self):
        if not 0 <= self.a <= self.b:
            raise ValueError(f"temporal bounds must satisfy 0 <= a <= b, got [{self.a}, {self.b}]")


@dataclass(frozen=True)
class Finally(_Temporal):
    body: "StlFormula" = None


@dataclass(frozen=True)
class Globally(_Temporal):
    body: "StlFormula" = None


@dataclass(frozen=True)
class Until(_Temporal):
    left: "StlFormula" = None
    right: "StlFormula" = None


@dataclass(frozen=True)
class Release(_Temporal):
    left: "StlFormula" = None
    right: "StlFormula" = None


StlFormula = Union[Atom, Not, StlAnd, StlOr, Finally, Globally, Until, Release]


# ------------------------------------------------------------------- parser

STL_GRAMMAR = r"""
?formula: disjunction

?disjunction: conjunction
            | disjunction ("or" | "|") conjunction     -> or_f

?conjunction: binary
            | conjunction ("and" | "&") binary         -> and_f

?binary: unary
       | unary "U" bounds unary                      -> until
       | unary "R" bounds unary                      -> release

?unary: ("not" | "!") unary                          -> not_f
      | "F" bounds unary                             -> eventually
      | "G" bounds unary                             -> always
      | "(" formula ")"
      | NAME REL number                              -> atom

bounds: "[" number "," number "]"
number: SIGNED_NUMBER

REL: "<=" | ">=" | "<" | ">"

%import common.CNAME -> NAME
%import common.SIGNED_NUMBER
%import common.WS
%ignore WS
"""

_STL_PARSER = Lark(STL_GRAMMAR, parser="lalr", start="formula")


class _StlBuilder(Transformer):
    def number(self, children):
        return float(children[0])

    def bounds(self, children):
        a, b = children
        if not 0 <= a <= b:
            raise RfolSyntaxError(f"temporal bounds must satisfy 0 <= a <= b, got [{a:g}, {b:g}]")
        return a, b

    def atom(self, children):
        name, rel, c = children
        return Atom(str(name), str(rel), c)

    def not_f(self, children):
        return Not(children[0])

    def and_f(self, children):
        return StlAnd(children[0], children[1])

    def or_f(self, children):
        return StlOr(children[0], children[1])

    def eventually(self, children):
        (a, b), body = children
        return Finally(a, b, body)

    def always(self, children):
        (a, b), body = children
        return Globally(a, b, body)

    def until(self, children):
        left, (a, b), right = children
        return Until(a, b, left, right)

    def release(self, children):
        left, (a, b), right = children
        return Release(a, b, left, right)


def parse_stl(text: str) -> StlFormula:
    try:
        tree = _STL_PARSER.parse(text)
        return _StlBuilder().transform(tree)
    except lark_exceptions.VisitError as err:
        raise err.orig_exc from None
    except lark_exceptions.UnexpectedInput as err:
        pos = SourcePos(err.line, err.column) if getattr(err, "line", -1) > 0 else None
        raise RfolSyntaxError(f"invalid STL formula near {text[err.pos_in_stream:][:10]!r}"
                              if getattr(err, "pos_in_stream", None) is not None
                              else "invalid STL formula", pos) from None


def parse_stl_file(text: str) -> List[Tuple[str, StlFormula]]:
    """每行一个公式，可写成 `名字: 公式`，# 开头为注释"""
    out: List[Tuple[str, StlFormula]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        name = f"S{len(out) + 1}"
        if ":" in line:
            name, line = (part.strip() for part in line.split(":", 1))
        try:
            out.append((name, parse_stl(line)))
        except RfolSyntaxError as err:
            column = err.pos.column if err.pos else 1
            raise RfolSyntaxError(str(err).split(": ", 1)[-1], SourcePos(lineno, column)) from None
    return out


def stl_signals(phi: StlFormula) -> Set[str]:
    if isinstance(phi, Atom):
        return {phi.x}
    if isinstance(phi, (Not, Finally, Globally)):
        return stl_signals(phi.arg if isinstance(phi, Not) else phi.body)
    return stl_signals(phi.left) | stl_signals(phi.right)


# ---------------------------------------------------------------------- NNF

def nnf(phi: StlFormula, negated: bool = False) -> StlFormula:
    """否定下推到原子后消去：¬(x<c) 变为 x≥c，¬(x≤c) 变为 x>c"""
    if isinstance(phi, Atom):
        return Atom(phi.x, NEGATED_RELATION[phi.rel], phi.c) if negated else phi
    if isinstance(phi, Not):
        return nnf(phi.arg, not negated)
    if isinstance(phi, StlAnd):
        cls = StlOr if negated else StlAnd
        return cls(nnf(phi.left, negated), nnf(phi.right, negated))
    if isinstance(phi, StlOr):
        cls = StlAnd if negated else StlOr
        return cls(nnf(phi.left, negated), nnf(phi.right, negated))
    if isinstance(phi, Finally):
        cls = Globally if negated else Finally
        return cls(phi.a, phi.b, nnf(phi.body, negated))
    if isinstance(phi, Globally):
        cls = Finally if negated else Globally
        return cls(phi.a, phi.b, nnf(phi.body, negated))
    if isinstance(phi, Until):
        cls = Release if negated else Until
        return cls(phi.a, phi.b, nnf(phi.left, negated), nnf(phi.right, negated))
    if isinstance(phi, Release):
        cls = Until if negated else Release
        return cls(phi.a, phi.b, nnf(phi.left, negated), nnf(phi.right, negated))
    raise TypeError(f"not an STL formula: {phi!r}")


# -------------------------------------------------------------- translation

class _Translator:
    def __init__(self):
        self.count = 0

    def fresh(self) -> str:
        name = f"t{self.count}"
        self.count += 1
        return name

    def interval(self, tf: Optional[str], a: float, b: float,
                 lower_closed: bool = True, upper_closed: bool = True) -> Interval:
        if tf is None:
            return Interval(Const(a), Const(b), lower_closed, upper_closed)
        return Interval(make_term(tf, a), make_term(tf, b), lower_closed, upper_closed)

    def go(self, phi: StlFormula, tf: Optional[str]) -> Formula:
        if isinstance(phi, Atom):
            at = Var(tf) if tf is not None else Const(0.0)
            return Pred(SignalAt(phi.x, at), phi.rel, phi.c)
        if isinstance(phi, StlAnd):
            return And(self.go(phi.left, tf), self.go(phi.right, tf))
        if isinstance(phi, StlOr):
            return Or(self.go(phi.left, tf), self.go(phi.right, tf))
        if isinstance(phi, Finally):
            v = self.fresh()
            return Exists(v, self.interval(tf, phi.a, phi.b), self.go(phi.body, v))
        if isinstance(phi, Globally):
            v = self.fresh()
            return Forall(v, self.interval(tf, phi.a, phi.b), self.go(phi.body, v))
        if isinstance(phi, (Until, Release)):
            if tf is not None:
                raise StlTranslationError(
                    f"{type(phi).__name__} nested under a temporal operator has no RFOL encoding"
                )
            return self.until(phi) if isinstance(phi, Until) else self.release(phi)
        raise StlTranslationError(f"negation left after NNF: {phi!r}")

    def until(self, phi: Until) -> Formula:
        # ∃t∈[a,b]: (φ2(t) ∧ ∀t'∈[a,t]: φ1(t'))
        t = self.fresh()
        inner = self.fresh()
        guard = Forall(inner, Interval(Const(phi.a), Var(t), True, True), self.go(phi.left, inner))
        return Exists(t, self.interval(None, phi.a, phi.b), And(self.go(phi.right, t), guard))

    def release(self, phi: Release) -> Formula:
        # ∃t∈[a,b]: (ψ1(t) ∧ ∀t'∈[a,t): ψ2(t')) ∨ ∀t''∈[a,b]: ψ2(t'')
        t = self.fresh()
        inner = self.fresh()
        always = self.fresh()
        guard = Forall(inner, Interval(Const(phi.a), Var(t), True, False), self.go(phi.right, inner))
        first = Exists(t, self.interval(None, phi.a, phi.b), And(self.go(phi.left, t), guard))
        second = Forall(always, self.interval(None, phi.a, phi.b), self.go(phi.right, always))
        return Or(first, second)


def stl_to_rfol(phi: StlFormula) -> Formula:
    """先求 NNF，再自根向叶翻译；嵌套算子的区间相对外层变量 t_f

    Raises:
        StlTranslationError: Until/Release 出现在另一个时序算子之内
    """
    return _Translator().go(nnf(phi), None)


# --------------------------------------------------------- boolean semantics

def _atom_holds(rel: str, value: float, c: float) -> bool:
    if rel == "<":
        return value < c
    if rel == "<=":
        return value <= c
    if rel == ">":
        return value > c
    return value >= c


class _BooleanChecker:
    def __init__(self, trace: Trace):
        self.trace = trace
        self.times = trace.times.tolist()
        self.end = trace.domain_end
        self.memo: Dict[Tuple[int, int], bool] = {}
        # Release 的否定操作数要一直存活，否则 id 可能被复用而命中错误的缓存
        self.duals: Dict[int, Tuple[StlFormula, StlFormula]] = {}

    def window(self, i: int, a: float, b: float) -> range:
        s = self.times[i]
        if s + b > self.end:
            raise UndefinedFormula(f"window [{s + a:g}, {s + b:g}] leaves the time domain")
        start = i
        while start < len(self.times) and self.times[start] < s + a:
            start += 1
        stop = start
        while stop < len(self.times) and self.times[stop] <= s + b:
            stop += 1
        return range(start, stop)

    def sat(self, phi: StlFormula, i: int) -> bool:
        key = (id(phi), i)
        if key not in self.memo:
            self.memo[key] = self._sat(phi, i)
        return self.memo[key]

    def _sat(self, phi: StlFormula, i: int) -> bool:
        if isinstance(phi, Atom):
            if phi.x not in self.trace.values:
                raise UndefinedFormula(f"signal '{phi.x}' is not in the trace")
            return _atom_holds(phi.rel, float(self.trace.values[phi.x][i]), phi.c)
        if isinstance(phi, Not):
            return not self.sat(phi.arg, i)
        if isinstance(phi, StlAnd):
            return self.sat(phi.left, i) and self.sat(phi.right, i)
        if isinstance(phi, StlOr):
            return self.sat(phi.left, i) or self.sat(phi.right, i)
        if isinstance(phi, Finally):
            return any(self.sat(phi.body, j) for j in self.window(i, phi.a, phi.b))
        if isinstance(phi, Globally):
            return all(self.sat(phi.body, j) for j in self.window(i, phi.a, phi.b))
        if isinstance(phi, Until):
            return self.until(phi.left, phi.right, i, phi.a, phi.b)
        if isinstance(phi, Release):
            if id(phi) not in self.duals:
                self.duals[id(phi)] = (Not(phi.left), Not(phi.right))
            left, right = self.duals[id(phi)]
            return not self.until(left, right, i, phi.a, phi.b)
        raise TypeError(f"not an STL formula: {phi!r}")

    def until(self, left: StlFormula, right: StlFormula, i: int, a: float, b: float) -> bool:
        win = self.window(i, a, b)
        for j in win:
            if self.sat(right, j) and all(self.sat(left, k) for k in range(win.start, j + 1)):
                return True
        return False


def eval_stl_boolean(phi: StlFormula, trace: Trace) -> bool:
    """离散网格上的标准布尔 STL 语义，在 t=0 处求值"""
    return _BooleanChecker(trace).sat(phi, 0)
