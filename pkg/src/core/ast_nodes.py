"""RFOL 抽象语法树与良构性检查

时间项 τ ⩴ t+n | t−n | t | n，信号项 ρ ⩴ f(τ) | g(ρ) | h(ρ,ρ)，
公式 φ ⩴ ρ∼r | φ∧φ | φ∨φ | ∀t∈⟨τ,τ⟩:φ | ∃t∈⟨τ,τ⟩:φ。
否定只出现在关系运算符里，AST 没有 ¬ 节点。
"""
from dataclasses import dataclass, field, replace
from typing import Dict, FrozenSet, Iterator, List, Optional, Set, Tuple, Union

from .errors import Condition1Violation, Condition2Violation, UndeclaredSignal


UNARY_OPS = ("neg", "abs", "sin", "cos", "sqrt", "exp")
BINARY_OPS = ("add", "sub", "mul", "div", "min", "max", "pow")
RELATIONS = ("<", "<=", ">", ">=", "=", "!=")

# 关系取反，用于蕴含式脱糖和 STL 的 NNF
NEGATED_RELATION = {
    "<": ">=",
    "<=": ">",
    ">": "<=",
    ">=": "<",
    "=": "!=",
    "!=": "=",
}


# ---------------------------------------------------------------- time terms

@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Const:
    n: float


@dataclass(frozen=True)
class Plus:
    var: str
    n: float


@dataclass(frozen=True)
class Minus:
    var: str
    n: float


TimeTerm = Union[Var, Const, Plus, Minus]


def term_var(tt: TimeTerm) -> Optional[str]:
    if isinstance(tt, Var):
        return tt.name
    if isinstance(tt, (Plus, Minus)):
        return tt.var
    return None


def term_offset(tt: TimeTerm) -> float:
    """带符号的常量部分：t+n → n，t−n → −n，t → 0，n → n"""
    if isinstance(tt, Var):
        return 0.0
    if isinstance(tt, Plus):
        return float(tt.n)
    if isinstance(tt, Minus):
        return -float(tt.n)
    return float(tt.n)


def make_term(var: Optional[str], offset: float) -> TimeTerm:
    offset = float(offset)
    if var is None:
        return Const(offset)
    if offset > 0:
        return Plus(var, offset)
    if offset < 0:
        return Minus(var, -offset)
    return Var(var)


def shift_term(tt: TimeTerm, var: str, amount: float) -> TimeTerm:
    """把 tt 中的 var 替换为 var − amount"""
    if term_var(tt) != var or amount == 0:
        return tt
    return make_term(var, term_offset(tt) - amount)


# -------------------------------------------------------------- signal terms

@dataclass(frozen=True)
class SignalAt:
    signal: str
    at: TimeTerm


@dataclass(frozen=True)
class Literal:
    value: float


@dataclass(frozen=True)
class Unary:
    g: str
    arg: "SignalTerm"


@dataclass(frozen=True)
class Binary:
    h: str
    left: "SignalTerm"
    right: "SignalTerm"


SignalTerm = Union[SignalAt, Literal, Unary, Binary]


# ------------------------------------------------------------------ formulas

@dataclass(frozen=True)
class Interval:
    lower: TimeTerm
    upper: TimeTerm
    lower_closed: bool = True
    upper_closed: bool = True

    def is_constant(self) -> bool:
        return isinstance(self.lower, Const) and isinstance(self.upper, Const)


@dataclass(frozen=True)
class Pred:
    rho: SignalTerm
    rel: str
    r: float


@dataclass(frozen=True)
class And:
    left: "Formula"
    right: "Formula"


@dataclass(frozen=True)
class Or:
    left: "Formula"
    right: "Formula"


@dataclass(frozen=True)
class Quantifier:
    var: str
    iv: Interval
    body: "Formula"

    # ∀ 为 +1（min 的中性元），∃ 为 −1（max 的中性元）
    neutral = 1.0
    symbol = "forall"


@dataclass(frozen=True)
class Forall(Quantifier):
    neutral = 1.0
    symbol = "forall"


@dataclass(frozen=True)
class Exists(Quantifier):
    neutral = -1.0
    symbol = "exists"


Formula = Union[Pred, And, Or, Forall, Exists]


# ---------------------------------------------------------------------- spec

@dataclass(frozen=True)
class SignalDecl:
    name: str
    unit: str = ""
    size: int = 0  # 0 表示标量；>0 表示向量，分量名为 name[i]

    def components(self) -> List[str]:
        if self.size == 0:
            return [self.name]
        return [f"{self.name}[{i}]" for i in range(self.size)]


@dataclass(frozen=True)
class Requirement:
    name: str
    formula: Formula
    text: str = ""


@dataclass
class Spec:
    signals: List[SignalDecl] = field(default_factory=list)
    time_domain_end: Optional[float] = None
    requirements: List[Requirement] = field(default_factory=list)

    def scalar_signals(self) -> List[str]:
        names: List[str] = []
        for decl in self.signals:
            names.extend(decl.components())
        return names

    def requirement(self, name: str) -> Requirement:
        for req in self.requirements:
            if req.name == name:
                return req
        raise KeyError(name)


# ------------------------------------------------------------------ traversal

def iter_subformulas(phi: Formula) -> Iterator[Formula]:
    """先序遍历所有公式层子节点（不进入信号项）"""
    yield phi
    if isinstance(phi, (And, Or)):
        yield from iter_subformulas(phi.left)
        yield from iter_subformulas(phi.right)
    elif isinstance(phi, Quantifier):
        yield from iter_subformulas(phi.body)


def iter_signal_ats(node) -> Iterator[SignalAt]:
    if isinstance(node, SignalAt):
        yield node
    elif isinstance(node, Unary):
        yield from iter_signal_ats(node.arg)
    elif isinstance(node, Binary):
        yield from iter_signal_ats(node.left)
        yield from iter_signal_ats(node.right)
    elif isinstance(node, Pred):
        yield from iter_signal_ats(node.rho)
    elif isinstance(node, (And, Or)):
        yield from iter_signal_ats(node.left)
        yield from iter_signal_ats(node.right)
    elif isinstance(node, Quantifier):
        yield from iter_signal_ats(node.body)


def signals_of(phi: Formula) -> Set[str]:
    return {sa.signal for sa in iter_signal_ats(phi)}


def bound_vars(phi: Formula) -> Set[str]:
    return {q.var for q in iter_subformulas(phi) if isinstance(q, Quantifier)}


def all_time_vars(phi: Formula) -> Set[str]:
    names = bound_vars(phi)
    for sa in iter_signal_ats(phi):
        v = term_var(sa.at)
        if v is not None:
            names.add(v)
    for q in iter_subformulas(phi):
        if isinstance(q, Quantifier):
            for tt in (q.iv.lower, q.iv.upper):
                v = term_var(tt)
                if v is not None:
                    names.add(v)
    return names


def free_time_vars(node) -> FrozenSet[str]:
    """返回 node 中未被量词绑定的时间变量"""
    if isinstance(node, SignalAt):
        v = term_var(node.at)
        return frozenset() if v is None else frozenset((v,))
    if isinstance(node, Literal):
        return frozenset()
    if isinstance(node, Unary):
        return free_time_vars(node.arg)
    if isinstance(node, Binary):
        return free_time_vars(node.left) | free_time_vars(node.right)
    if isinstance(node, Pred):
        return free_time_vars(node.rho)
    if isinstance(node, (And, Or)):
        return free_time_vars(node.left) | free_time_vars(node.right)
    if isinstance(node, Quantifier):
        inner = free_time_vars(node.body) - {node.var}
        bounds = {term_var(node.iv.lower), term_var(node.iv.upper)} - {None}
        return frozenset(inner | bounds)
    raise TypeError(f"not an RFOL node: {node!r}")


def free_var_table(phi: Formula) -> Dict[int, Optional[str]]:
    """一次性计算每个公式/信号项节点的唯一自由变量（按 id 索引）

    调用方须保证 φ 已通过 validate，否则多自由变量的节点会报错。
    """
    table: Dict[int, Optional[str]] = {}

    def visit(node) -> FrozenSet[str]:
        if isinstance(node, SignalAt):
            v = term_var(node.at)
            fv = frozenset() if v is None else frozenset((v,))
        elif isinstance(node, Literal):
            fv = frozenset()
        elif isinstance(node, Unary):
            fv = visit(node.arg)
        elif isinstance(node, Binary):
            fv = visit(node.left) | visit(node.right)
        elif isinstance(node, Pred):
            fv = visit(node.rho)
        elif isinstance(node, (And, Or)):
            fv = visit(node.left) | visit(node.right)
        elif isinstance(node, Quantifier):
            inner = visit(node.body) - {node.var}
            bounds = {term_var(node.iv.lower), term_var(node.iv.upper)} - {None}
            fv = frozenset(inner | bounds)
        else:
            raise TypeError(f"not an RFOL node: {node!r}")
        if len(fv) > 1:
            raise Condition2Violation(node, f"{sorted(fv)} are free together")
        table[id(node)] = next(iter(fv)) if fv else None
        return fv

    visit(phi)
    return table


# ------------------------------------------------------------ well-formedness

def validate(phi: Formula, signals: Optional[Set[str]] = None) -> None:
    """检查 φ 是否属于 RFOL

    Args:
        phi: 待检查的公式
        signals: 已声明的（标量）信号名集合；None 表示不检查

    Raises:
        Condition2Violation: 某个子公式有两个以上自由时间变量（报告最内层的那个）
        Condition1Violation: φ 不是闭公式
        UndeclaredSignal: 引用了未声明的信号
    """
    _check_condition2(phi)
    free = free_time_vars(phi)
    if free:
        raise Condition1Violation(phi, f"free time variable(s) {sorted(free)}")
    if signals is not None:
        for sa in iter_signal_ats(phi):
            if sa.signal not in signals:
                raise UndeclaredSignal(sa.signal)
    for q in iter_subformulas(phi):
        if isinstance(q, Quantifier) and q.iv.is_constant():
            if q.iv.lower.n > q.iv.upper.n:
                raise Condition1Violation(
                    q, f"interval lower bound {q.iv.lower.n:g} exceeds upper bound {q.iv.upper.n:g}"
                )


def _check_condition2(node) -> FrozenSet[str]:
    # 自底向上，最内层的违规先被发现
    if isinstance(node, (And, Or)):
        fv = _check_condition2(node.left) | _check_condition2(node.right)
    elif isinstance(node, Quantifier):
        inner = _check_condition2(node.body) - {node.var}
        bounds = {term_var(node.iv.lower), term_var(node.iv.upper)} - {None}
        fv = frozenset(inner | bounds)
    else:
        fv = free_time_vars(node)
    if len(fv) > 1:
        raise Condition2Violation(node, f"sub-formula has free time variables {sorted(fv)}")
    return fv


def formula_size(phi) -> int:
    """量词、∧/∨、关系谓词和算术运算符的个数"""
    if isinstance(phi, (SignalAt, Literal)):
        return 0
    if isinstance(phi, Unary):
        return 1 + formula_size(phi.arg)
    if isinstance(phi, Binary):
        return 1 + formula_size(phi.left) + formula_size(phi.right)
    if isinstance(phi, Pred):
        return 1 + formula_size(phi.rho)
    if isinstance(phi, (And, Or)):
        return 1 + formula_size(phi.left) + formula_size(phi.right)
    if isinstance(phi, Quantifier):
        return 1 + formula_size(phi.body)
    raise TypeError(f"not an RFOL node: {phi!r}")


# ------------------------------------------------------------------ rewriting

def negate(phi: Formula) -> Formula:
    """把否定推到谓词上：翻转关系，交换 ∧/∨ 与 ∀/∃"""
    if isinstance(phi, Pred):
        return Pred(phi.rho, NEGATED_RELATION[phi.rel], phi.r)
    if isinstance(phi, And):
        return Or(negate(phi.left), negate(phi.right))
    if isinstance(phi, Or):
        return And(negate(phi.left), negate(phi.right))
    if isinstance(phi, Forall):
        return Exists(phi.var, phi.iv, negate(phi.body))
    if isinstance(phi, Exists):
        return Forall(phi.var, phi.iv, negate(phi.body))
    raise TypeError(f"not an RFOL formula: {phi!r}")


def fresh_name(base: str, taken: Set[str]) -> str:
    i = 1
    while f"{base}{i}" in taken:
        i += 1
    name = f"{base}{i}"
    taken.add(name)
    return name


def rename_var_in_term(node, old: str, new: str):
    if isinstance(node, SignalAt):
        if term_var(node.at) == old:
            return SignalAt(node.signal, make_term(new, term_offset(node.at)))
        return node
    if isinstance(node, Unary):
        return Unary(node.g, rename_var_in_term(node.arg, old, new))
    if isinstance(node, Binary):
        return Binary(node.h, rename_var_in_term(node.left, old, new),
                      rename_var_in_term(node.right, old, new))
    return node


def _rename_tt(tt: TimeTerm, old: str, new: str) -> TimeTerm:
    if term_var(tt) == old:
        return make_term(new, term_offset(tt))
    return tt


def rename_free(phi: Formula, old: str, new: str) -> Formula:
    """重命名 φ 中 old 的自由出现"""
    if isinstance(phi, Pred):
        return Pred(rename_var_in_term(phi.rho, old, new), phi.rel, phi.r)
    if isinstance(phi, (And, Or)):
        return type(phi)(rename_free(phi.left, old, new), rename_free(phi.right, old, new))
    if isinstance(phi, Quantifier):
        iv = replace(phi.iv, lower=_rename_tt(phi.iv.lower, old, new),
                     upper=_rename_tt(phi.iv.upper, old, new))
        body = phi.body if phi.var == old else rename_free(phi.body, old, new)
        return type(phi)(phi.var, iv, body)
    raise TypeError(f"not an RFOL formula: {phi!r}")


def alpha_normalize(phi: Formula) -> Formula:
    """让每个量词绑定互不相同的变量名；重名（含遮蔽与并列）时重命名后出现的那个"""
    taken = all_time_vars(phi)
    seen: Set[str] = set()

    def go(node: Formula) -> Formula:
        if isinstance(node, Pred):
            return node
        if isinstance(node, (And, Or)):
            return type(node)(go(node.left), go(node.right))
        var, body = node.var, node.body
        if var in seen:
            new = fresh_name(var.rstrip("0123456789") or "t", taken)
            body = rename_free(body, var, new)
            var = new
        seen.add(var)
        return type(node)(var, node.iv, go(body))

    return go(phi)
