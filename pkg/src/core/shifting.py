"""把 RFOL 公式改写为可在线检查的形式 φ⇑

每个量词 Q(v) 得到一个平移量 D = d_t + d_u：区间加 D，体内 v 换成 v − D。
d_t 消除未来下标 f(v+n)；d_u 让 Q 只在其子量词的结果已经确定之后才读取它们。
后代变量的绝对取值范围不受祖先平移影响，所以先算范围、再自底向上求 D、
最后一次性改写，整体是线性的。
"""
import math
from dataclasses import dataclass, field
from typing import Dict, Optional, Set, Tuple

from .ast_nodes import (
    And,
    Binary,
    Const,
    Exists,
    Forall,
    Formula,
    Interval,
    Literal,
    Or,
    Plus,
    Pred,
    Quantifier,
    SignalAt,
    SignalTerm,
    TimeTerm,
    Unary,
    all_time_vars,
    alpha_normalize,
    free_var_table,
    make_term,
    term_offset,
    term_var,
)
from .errors import NonConstantBoundUnsupported, NotOnlineCheckable
from .semantics import reach


@dataclass(frozen=True)
class QuantifierShift:
    var: str
    d_t: float
    d_u: float

    @property
    def total(self) -> float:
        return self.d_t + self.d_u


@dataclass
class ShiftReport:
    original: Formula
    shifted: Formula
    shifts: Dict[str, QuantifierShift] = field(default_factory=dict)
    horizon_d: float = 0.0
    required_domain_end: float = 0.0
    visits: int = 0


class _Counter:
    """统计公式层与算术层节点的访问次数

    常量下标改写引入的 ∀t* 不是原公式的节点，后续各遍经过它们时不计数。
    """

    def __init__(self):
        self.visits = 0
        self.synthetic: Set[str] = set()

    def tick(self):
        self.visits += 1

    def tick_q(self, q: Quantifier):
        if q.var not in self.synthetic:
            self.visits += 1


# ---------------------------------------------------------- constant indices

def _fresh_var(taken: Set[str]) -> str:
    i = 0
    while f"tc{i}" in taken:
        i += 1
    name = f"tc{i}"
    taken.add(name)
    return name


def _term_indices(rho: SignalTerm, counter: _Counter) -> Tuple[bool, float]:
    """返回 (是否含变量下标, 最大常量下标)；无常量下标时为 −inf"""
    if isinstance(rho, SignalAt):
        if term_var(rho.at) is None:
            return False, term_offset(rho.at)
        return True, -math.inf
    if isinstance(rho, Literal):
        return False, -math.inf
    counter.tick()
    if isinstance(rho, Unary):
        return _term_indices(rho.arg, counter)
    lv, lm = _term_indices(rho.left, counter)
    rv, rm = _term_indices(rho.right, counter)
    return lv or rv, max(lm, rm)


def _anchor_constants(rho: SignalTerm, var: str, m: float) -> SignalTerm:
    if isinstance(rho, SignalAt):
        return SignalAt(rho.signal, make_term(var, term_offset(rho.at) - m))
    if isinstance(rho, Unary):
        return Unary(rho.g, _anchor_constants(rho.arg, var, m))
    if isinstance(rho, Binary):
        return Binary(rho.h, _anchor_constants(rho.left, var, m), _anchor_constants(rho.right, var, m))
    return rho


def normalize_const_index(phi: Formula, counter: Optional[_Counter] = None) -> Formula:
    """闭谓词中的常量下标 f(n1)..f(nk) 改写为 ∀t*∈[m,m] 下的 f(t* − (m − ni))，m = max ni

    同时含变量下标的谓词保持不变，由编译器用采样保持块处理。
    """
    counter = counter or _Counter()
    taken = all_time_vars(phi)

    def go(node: Formula) -> Formula:
        counter.tick()
        if isinstance(node, Pred):
            has_var, m = _term_indices(node.rho, counter)
            if has_var or m == -math.inf:
                return node
            var = _fresh_var(taken)
            counter.synthetic.add(var)
            body = Pred(_anchor_constants(node.rho, var, m), node.rel, node.r)
            return Forall(var, Interval(Const(m), Const(m), True, True), body)
        if isinstance(node, (And, Or)):
            return type(node)(go(node.left), go(node.right))
        if isinstance(node, Quantifier):
            return type(node)(node.var, node.iv, go(node.body))
        raise TypeError(f"not an RFOL formula: {node!r}")

    return go(phi)


# ------------------------------------------------------------------ planning

class _Planner:
    """计算每个量词的 (d_t, d_u)

    体只依赖外层变量 w 的量词（透明量词）只决定"候选集是否为空"，
    平移量固定为 0，它的体按 w 的作用域处理。
    """

    def __init__(self, phi: Formula, counter: _Counter, rules: bool = True):
        self.phi = phi
        self.counter = counter
        self.rules = rules
        self.ranges: Dict[str, Tuple[float, float]] = {}
        self.plan: Dict[str, QuantifierShift] = {}
        self.closed_const_pred = False
        self.free = free_var_table(phi)

    def run(self) -> Dict[str, QuantifierShift]:
        self._ranges(self.phi, None)
        self._walk_closed(self.phi)
        return self.plan

    def transparent(self, q: Quantifier) -> bool:
        return self.free[id(q.body)] not in (q.var, None)

    # 第一遍：绝对取值范围
    def _ranges(self, node: Formula, binder: Optional[str]):
        if isinstance(node, (And, Or)):
            self.counter.tick()
            self._ranges(node.left, binder)
            self._ranges(node.right, binder)
        elif isinstance(node, Quantifier):
            self.counter.tick_q(node)
            lo = self._bound(node, node.iv.lower, binder, 0)
            hi = self._bound(node, node.iv.upper, binder, 1)
            self.ranges[node.var] = (lo, hi)
            self._ranges(node.body, binder if self.transparent(node) else node.var)
        else:
            self.counter.tick()

    def _bound(self, q: Quantifier, tt: TimeTerm, binder: Optional[str], pick: int) -> float:
        w = term_var(tt)
        if w is None:
            return term_offset(tt)
        if w != binder:
            raise NonConstantBoundUnsupported(
                f"interval of '{q.var}' depends on '{w}', which is not bound by the enclosing quantifier"
            )
        return self.ranges[w][pick] + term_offset(tt)

    # 第二遍：自底向上求平移量
    def _walk_closed(self, node: Formula):
        # 根部：闭量词之间只通过 ∧/∨ 组合，没有额外约束
        if isinstance(node, (And, Or)):
            self.counter.tick()
            self._walk_closed(node.left)
            self._walk_closed(node.right)
        elif isinstance(node, Quantifier):
            self._solve(node)
        else:
            self.counter.tick()
            has_var, m = _term_indices(node.rho, self.counter)
            if not has_var and m != -math.inf:
                self.closed_const_pred = True

    def _solve(self, q: Quantifier) -> float:
        self.counter.tick_q(q)
        v = q.var
        lo_v, hi_v = self.ranges[v]
        acc = {"d_t": 0.0, "need": -math.inf}
        constant_q = q.iv.is_constant()

        def note(value: float):
            if value > acc["need"]:
                acc["need"] = value

        def child(node: Quantifier, d_c: float, weak_ok: bool):
            upper = node.iv.upper
            if not node.iv.is_constant():
                if term_var(upper) is not None:
                    note(term_offset(upper) + d_c)
                else:
                    note(term_offset(upper) + d_c - lo_v)
                return
            hi_c = term_offset(upper) + d_c
            # 同类的常量子量词在 v 的最后一个候选时刻之前完成即可；
            # 只有 v 的上端闭合时，这个候选时刻才与采样网格无关
            weak = weak_ok and constant_q and type(node) is type(q) and q.iv.upper_closed
            note(hi_c - hi_v if weak else hi_c - lo_v)

        def walk(node: Formula, matching: bool):
            if isinstance(node, Quantifier):
                if self.transparent(node):
                    self.counter.tick_q(node)
                    self.plan[node.var] = QuantifierShift(node.var, 0.0, 0.0)
                    if self.rules:
                        child(node, 0.0, False)
                    walk(node.body, False)
                    return
                d_c = self._solve(node)
                if self.rules:
                    child(node, d_c, matching)
                return
            self.counter.tick()
            if isinstance(node, And):
                walk(node.left, matching and isinstance(q, Forall))
                walk(node.right, matching and isinstance(q, Forall))
            elif isinstance(node, Or):
                walk(node.left, matching and isinstance(q, Exists))
                walk(node.right, matching and isinstance(q, Exists))
            else:
                self._scan_pred(node.rho, v, lo_v, acc, note)

        walk(q.body, True)
        d_t = acc["d_t"]
        d_u = max(0.0, acc["need"] - d_t)
        self.plan[v] = QuantifierShift(v, d_t, d_u)
        return d_t + d_u

    def _scan_pred(self, rho: SignalTerm, v: str, lo_v: float, acc, note):
        has_var, has_const = self._scan_term(rho, v, lo_v, acc, note)
        if has_const and not has_var:
            self.closed_const_pred = True

    def _scan_term(self, rho: SignalTerm, v: str, lo_v: float, acc, note) -> Tuple[bool, bool]:
        # 返回 (含变量下标, 含常量下标)
        if isinstance(rho, SignalAt):
            w = term_var(rho.at)
            off = term_offset(rho.at)
            if w is None:
                if self.rules:
                    note(off - lo_v)
                return False, True
            if off > acc["d_t"]:
                acc["d_t"] = off
            return True, False
        if isinstance(rho, Literal):
            return False, False
        self.counter.tick()
        if isinstance(rho, Unary):
            return self._scan_term(rho.arg, v, lo_v, acc, note)
        lv, lc = self._scan_term(rho.left, v, lo_v, acc, note)
        rv, rc = self._scan_term(rho.right, v, lo_v, acc, note)
        return lv or rv, lc or rc


# ------------------------------------------------------------------ rewrite

def _apply(phi: Formula, amounts: Dict[str, float], counter: _Counter) -> Formula:
    """量词 v 的区间加 amounts[v]，v 的每次出现换成 v − amounts[v]"""

    def tt(term: TimeTerm, extra: float = 0.0) -> TimeTerm:
        w = term_var(term)
        if w is None:
            return Const(term_offset(term) + extra) if extra else term
        delta = extra - amounts.get(w, 0.0)
        return make_term(w, term_offset(term) + delta) if delta else term

    def rho(node: SignalTerm) -> SignalTerm:
        if isinstance(node, SignalAt):
            return SignalAt(node.signal, tt(node.at))
        if isinstance(node, Literal):
            return node
        counter.tick()
        if isinstance(node, Unary):
            return Unary(node.g, rho(node.arg))
        return Binary(node.h, rho(node.left), rho(node.right))

    def go(node: Formula) -> Formula:
        if isinstance(node, Pred):
            counter.tick()
            return Pred(rho(node.rho), node.rel, node.r)
        if isinstance(node, (And, Or)):
            counter.tick()
            return type(node)(go(node.left), go(node.right))
        counter.tick_q(node)
        d = amounts.get(node.var, 0.0)
        iv = Interval(tt(node.iv.lower, d), tt(node.iv.upper, d), node.iv.lower_closed, node.iv.upper_closed)
        return type(node)(node.var, iv, go(node.body))

    return go(phi)


# --------------------------------------------------------------- public API

def time_shift(phi: Formula) -> Formula:
    """消除 f(t+n) 形式的未来下标：d_t = 体内谓词中 t 的最大正偏移"""
    counter = _Counter()
    plan = _Planner(phi, counter, rules=False).run()
    return _apply(phi, {v: s.d_t for v, s in plan.items()}, counter)


def interval_shift(phi: Formula) -> Formula:
    """推迟量词区间，使每个量词读取子量词时其结果已经确定"""
    counter = _Counter()
    plan = _Planner(phi, counter).run()
    return _apply(phi, {v: s.d_u for v, s in plan.items()}, counter)


def horizon(phi: Formula) -> float:
    """存在量词常量上界的最大值，之后在线适应度不再上升"""
    best = 0.0

    def visit(node):
        nonlocal best
        if isinstance(node, (And, Or)):
            visit(node.left)
            visit(node.right)
        elif isinstance(node, Quantifier):
            if isinstance(node, Exists) and term_var(node.iv.upper) is None:
                best = max(best, term_offset(node.iv.upper))
            visit(node.body)

    visit(phi)
    return best


def shift(phi: Formula) -> ShiftReport:
    """φ⇑ = interval_shift(time_shift(normalize_const_index(φ)))，一次改写完成

    先让所有绑定变量互不重名，平移计划按变量名记录。

    Raises:
        NonConstantBoundUnsupported: 区间端点引用了非直接外层的变量
    """
    counter = _Counter()
    normalized = normalize_const_index(alpha_normalize(phi), counter)
    plan = _Planner(normalized, counter).run()
    shifted = _apply(normalized, {v: s.total for v, s in plan.items()}, counter)
    _, high = reach(shifted)
    return ShiftReport(
        original=phi,
        shifted=shifted,
        shifts=plan,
        horizon_d=horizon(shifted),
        required_domain_end=high,
        visits=counter.visits,
    )


def is_online_checkable(phi: Formula) -> bool:
    """φ 的每个量词都无需再平移，且没有未来下标和闭的常量下标谓词"""
    try:
        planner = _Planner(phi, _Counter())
        plan = planner.run()
    except (NotOnlineCheckable, NonConstantBoundUnsupported):
        return False
    if planner.closed_const_pred:
        return False
    return all(s.d_t == 0 and s.d_u == 0 for s in plan.values())
