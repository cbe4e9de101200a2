"""RFOL 规格文件的具体语法（基于 lark 的 LALR 解析器）

文件由三类条目组成：

    signal w, q[4] "rad";
    domain 86400;
    req R1: forall t in [0, 86400): ||w(t)|| < 1.5

量词体向右延伸到公式末尾；作为 and/or 的操作数时需加括号。
"""
import math
from typing import Dict, List, Optional, Set, Tuple, Union

import numpy as np
from lark import Lark, Token, Transformer, Tree
from lark import exceptions as lark_exceptions

from .ast_nodes import (
    BINARY_OPS,
    NEGATED_RELATION,
    UNARY_OPS,
    And,
    Binary,
    Const,
    Exists,
    Forall,
    Formula,
    Interval,
    Literal,
    Minus,
    Or,
    Plus,
    Pred,
    Quantifier,
    Requirement,
    SignalAt,
    SignalDecl,
    SignalTerm,
    Spec,
    TimeTerm,
    Unary,
    Var,
    alpha_normalize,
    make_term,
    negate,
    validate,
)
from .errors import (
    RfolSyntaxError,
    SourcePos,
    UndeclaredSignal,
    WellFormednessError,
)


GRAMMAR = r"""
start: _item*

_item: signal_decl | domain_decl | requirement

signal_decl: "signal" sig_item ("," sig_item)* ESCAPED_STRING? ";"
sig_item: NAME ("[" INT "]")?
domain_decl: "domain" expr ";"
requirement: "req" NAME ":" formula ";"?

?formula: quantified
        | implication

quantified: quant NAME "in" interval ":" formula
!quant: "forall" | "exists" | "∀" | "∃"

?implication: disjunction
            | disjunction "->" formula         -> implies

?disjunction: conjunction
            | disjunction "or" conjunction     -> or_

?conjunction: fatom
            | conjunction "and" fatom          -> and_

?fatom: "(" formula ")"
      | expr REL expr                          -> predicate

interval: lbound expr "," expr rbound
!lbound: "[" | "("
!rbound: "]" | ")"

?expr: sum
?sum: product
    | sum "+" product                          -> add
    | sum "-" product                          -> sub
?product: power
        | product "*" power                    -> mul
        | product "/" power                    -> div
?power: unary
      | unary "^" power                        -> pow
?unary: primary
      | "-" unary                              -> neg
?primary: NUMBER                               -> number
        | NAME                                 -> name
        | NAME "(" expr ("," expr)* ")"        -> call
        | NAME "[" INT "]" "(" expr ")"        -> component_call
        | "||" expr "||"                       -> norm
        | "(" expr ")"

REL: "<=" | ">=" | "!=" | "<" | ">" | "=" | "≤" | "≥" | "≠"

%import common.CNAME -> NAME
%import common.NUMBER
%import common.INT
%import common.ESCAPED_STRING
%import common.WS
%ignore WS
%ignore /#[^\n]*/
"""

_REL_ALIASES = {"≤": "<=", "≥": ">=", "≠": "!="}
_MIRRORED = {"<": ">", "<=": ">=", ">": "<", ">=": "<=", "=": "=", "!=": "!="}
_FUNCTIONS = set(UNARY_OPS) | set(BINARY_OPS) | {"norm"}
_RESERVED = {"forall", "exists", "in", "and", "or", "signal", "domain", "req"}

_PARSER = Lark(GRAMMAR, parser="lalr", start=["start", "formula"])


# ------------------------------------------------------------ intermediates

class _Name:
    """表达式中出现的裸名字（只能作为时间变量）"""

    def __init__(self, name: str, pos: SourcePos):
        self.name = name
        self.pos = pos


class _TimeSum:
    """t + n 形式的中间值，只在时间项位置合法"""

    def __init__(self, var: str, offset: float, pos: SourcePos):
        self.var = var
        self.offset = offset
        self.pos = pos


class _Vec:
    """向量信号项，逐分量运算，只能通过范数变成标量"""

    def __init__(self, items: List[SignalTerm]):
        self.items = items


_Value = Union[SignalTerm, _Name, _TimeSum, _Vec]


def _pos(tok) -> Optional[SourcePos]:
    if isinstance(tok, Token) and tok.line is not None:
        return SourcePos(tok.line, tok.column)
    return None


def _fold_unary(g: str, x: float) -> float:
    with np.errstate(all="ignore"):
        fn = {
            "neg": np.negative,
            "abs": np.abs,
            "sin": np.sin,
            "cos": np.cos,
            "sqrt": np.sqrt,
            "exp": np.exp,
        }[g]
        return float(fn(np.float64(x)))


def _fold_binary(h: str, a: float, b: float) -> float:
    with np.errstate(all="ignore"):
        fn = {
            "add": np.add,
            "sub": np.subtract,
            "mul": np.multiply,
            "div": np.divide,
            "min": np.minimum,
            "max": np.maximum,
            "pow": np.power,
        }[h]
        return float(fn(np.float64(a), np.float64(b)))


class _FormulaBuilder(Transformer):
    """把 lark 语法树转换为 AST；信号表用于检查声明和展开向量"""

    def __init__(self, signals: Dict[str, SignalDecl]):
        super().__init__()
        self.signals = signals

    # ---------------------------------------------------------- time terms

    def _time_term(self, value, pos=None) -> TimeTerm:
        if isinstance(value, _Name):
            return Var(value.name)
        if isinstance(value, _TimeSum):
            return make_term(value.var, value.offset)
        if isinstance(value, Literal):
            if value.value < 0 or not math.isfinite(value.value):
                raise RfolSyntaxError(f"time constant {value.value:g} must be a nonnegative real", pos)
            return Const(float(value.value))
        raise RfolSyntaxError("expected a time term (t, t + n, t - n or n)", pos)

    # ---------------------------------------------------------- expressions

    def number(self, children):
        return Literal(float(children[0]))

    def name(self, children):
        tok = children[0]
        if str(tok) in _RESERVED:
            raise RfolSyntaxError(f"unexpected keyword '{tok}'", _pos(tok))
        return _Name(str(tok), _pos(tok))

    def _arith(self, h: str, a, b):
        if isinstance(a, Literal) and isinstance(b, Literal):
            return Literal(_fold_binary(h, a.value, b.value))
        # t ± n 只在时间项中出现
        if h in ("add", "sub") and isinstance(a, (_Name, _TimeSum)) and isinstance(b, Literal):
            base = 0.0 if isinstance(a, _Name) else a.offset
            delta = b.value if h == "add" else -b.value
            return _TimeSum(a.name if isinstance(a, _Name) else a.var, base + delta, a.pos)
        if h == "add" and isinstance(a, Literal) and isinstance(b, (_Name, _TimeSum)):
            return self._arith("add", b, a)
        for x in (a, b):
            if isinstance(x, (_Name, _TimeSum)):
                raise RfolSyntaxError(
                    f"time variable '{x.name if isinstance(x, _Name) else x.var}' used outside a signal index",
                    x.pos,
                )
        if isinstance(a, _Vec) or isinstance(b, _Vec):
            return self._vec_arith(h, a, b)
        return Binary(h, a, b)

    def _vec_arith(self, h: str, a, b) -> _Vec:
        if isinstance(a, _Vec) and isinstance(b, _Vec):
            if len(a.items) != len(b.items):
                raise RfolSyntaxError(
                    f"vector size mismatch ({len(a.items)} vs {len(b.items)})"
                )
            return _Vec([self._arith(h, x, y) for x, y in zip(a.items, b.items)])
        if isinstance(a, _Vec):
            return _Vec([self._arith(h, x, b) for x in a.items])
        return _Vec([self._arith(h, a, y) for y in b.items])

    def add(self, children):
        return self._arith("add", *children)

    def sub(self, children):
        return self._arith("sub", *children)

    def mul(self, children):
        return self._arith("mul", *children)

    def div(self, children):
        return self._arith("div", *children)

    def pow(self, children):
        return self._arith("pow", *children)

    def _apply_unary(self, g: str, x, pos=None):
        if isinstance(x, Literal):
            return Literal(_fold_unary(g, x.value))
        if isinstance(x, _Vec):
            return _Vec([self._apply_unary(g, item, pos) for item in x.items])
        if isinstance(x, (_Name, _TimeSum)):
            raise RfolSyntaxError("time variable used outside a signal index", pos or x.pos)
        return Unary(g, x)

    def neg(self, children):
        return self._apply_unary("neg", children[0])

    def norm(self, children):
        return self._norm(children[0])

    def _norm(self, x, pos=None):
        items = x.items if isinstance(x, _Vec) else [x]
        total = None
        for item in items:
            if isinstance(item, (_Name, _TimeSum)):
                raise RfolSyntaxError("time variable used outside a signal index", pos)
            sq = self._arith("mul", item, item)
            total = sq if total is None else self._arith("add", total, sq)
        return self._apply_unary("sqrt", total, pos)

    def call(self, children):
        tok = children[0]
        name = str(tok)
        args = list(children[1:])
        pos = _pos(tok)
        if name in _FUNCTIONS:
            return self._function(name, args, pos)
        if len(args) != 1:
            raise RfolSyntaxError(f"signal '{name}' takes exactly one time argument", pos)
        decl = self.signals.get(name)
        if decl is None:
            raise UndeclaredSignal(name, pos)
        at = self._time_term(args[0], pos)
        if decl.size == 0:
            return SignalAt(name, at)
        return _Vec([SignalAt(component, at) for component in decl.components()])

    def component_call(self, children):
        tok, index, arg = children
        name = str(tok)
        pos = _pos(tok)
        component = f"{name}[{int(index)}]"
        decl = self.signals.get(name)
        if decl is None or component not in decl.components():
            raise UndeclaredSignal(component, pos)
        return SignalAt(component, self._time_term(arg, pos))

    def _function(self, name: str, args, pos):
        if name == "norm":
            if len(args) != 1:
                raise RfolSyntaxError("norm takes one argument", pos)
            return self._norm(args[0], pos)
        if name in UNARY_OPS:
            if len(args) != 1:
                raise RfolSyntaxError(f"{name} takes one argument", pos)
            return self._apply_unary(name, args[0], pos)
        if len(args) != 2:
            raise RfolSyntaxError(f"{name} takes two arguments", pos)
        return self._arith(name, args[0], args[1])

    # ------------------------------------------------------------- formulas

    def predicate(self, children):
        lhs, rel_tok, rhs = children
        rel = _REL_ALIASES.get(str(rel_tok), str(rel_tok))
        pos = _pos(rel_tok)
        for side in (lhs, rhs):
            if isinstance(side, _Vec):
                raise RfolSyntaxError("vector compared without a norm", pos)
            if isinstance(side, (_Name, _TimeSum)):
                raise RfolSyntaxError("time variable used outside a signal index", pos)
        if isinstance(rhs, Literal):
            return Pred(lhs, rel, rhs.value)
        if isinstance(lhs, Literal):
            return Pred(rhs, _MIRRORED[rel], lhs.value)
        return Pred(Binary("sub", lhs, rhs), rel, 0.0)

    def and_(self, children):
        return And(children[0], children[1])

    def or_(self, children):
        return Or(children[0], children[1])

    def implies(self, children):
        return Or(negate(children[0]), children[1])

    def lbound(self, children):
        return str(children[0]) == "["

    def rbound(self, children):
        return str(children[0]) == "]"

    def interval(self, children):
        lower_closed, lo, hi, upper_closed = children
        return Interval(self._time_term(lo), self._time_term(hi), lower_closed, upper_closed)

    def quant(self, children):
        return str(children[0])

    def quantified(self, children):
        quant, var, iv, body = children
        if str(var) in _RESERVED:
            raise RfolSyntaxError(f"'{var}' cannot be a variable name", _pos(var))
        cls = Forall if quant in ("forall", "∀") else Exists
        return cls(str(var), iv, body)


# ------------------------------------------------------------------ helpers

def _raise_from_lark(err: lark_exceptions.LarkError):
    if isinstance(err, lark_exceptions.VisitError) and isinstance(err.orig_exc, Exception):
        raise err.orig_exc
    if isinstance(err, lark_exceptions.UnexpectedInput):
        pos = SourcePos(err.line, err.column) if getattr(err, "line", -1) > 0 else None
        if isinstance(err, lark_exceptions.UnexpectedToken):
            found = err.token.type if err.token.type == "$END" else repr(str(err.token))
            raise RfolSyntaxError(f"unexpected {found}", pos) from None
        if isinstance(err, lark_exceptions.UnexpectedCharacters):
            raise RfolSyntaxError(f"unexpected character {err.char!r}", pos) from None
        if isinstance(err, lark_exceptions.UnexpectedEOF):
            raise RfolSyntaxError("unexpected end of input", pos) from None
    raise RfolSyntaxError(str(err)) from None


def _tree_pos(tree) -> Optional[SourcePos]:
    for tok in tree.scan_values(lambda v: isinstance(v, Token)):
        return _pos(tok)
    return None


def _build(tree: Tree, signals: Dict[str, SignalDecl]):
    try:
        return _FormulaBuilder(signals).transform(tree)
    except lark_exceptions.VisitError as err:
        raise err.orig_exc from None


def _finish_formula(phi: Formula, scalars: Set[str], pos: Optional[SourcePos]) -> Formula:
    try:
        validate(phi, scalars)
    except WellFormednessError as err:
        if err.pos is None:
            err.pos = pos
        raise
    return alpha_normalize(phi)


# --------------------------------------------------------------- public API

def parse_spec(text: str) -> Spec:
    """解析规格文件，返回已通过良构性检查的 Spec"""
    try:
        tree = _PARSER.parse(text, start="start")
    except lark_exceptions.LarkError as err:
        _raise_from_lark(err)

    spec = Spec()
    decls: Dict[str, SignalDecl] = {}
    for item in tree.children:
        if item.data == "signal_decl":
            unit = next((c for c in item.children if isinstance(c, Token)), None)
            for sig in (c for c in item.children if isinstance(c, Tree)):
                name_tok = sig.children[0]
                size = sig.children[1] if len(sig.children) > 1 else None
                if str(name_tok) in decls:
                    raise RfolSyntaxError(f"signal '{name_tok}' declared twice", _pos(name_tok))
                decl = SignalDecl(
                    str(name_tok),
                    unit=str(unit)[1:-1] if unit is not None else "",
                    size=int(size) if size is not None else 0,
                )
                decls[decl.name] = decl
                spec.signals.append(decl)
        elif item.data == "domain_decl":
            value = _build(item.children[0], decls)
            if not isinstance(value, Literal) or value.value <= 0:
                raise RfolSyntaxError("domain end must be a positive constant", _tree_pos(item))
            spec.time_domain_end = float(value.value)

    scalars = set(spec.scalar_signals())
    seen: Set[str] = set()
    for item in tree.children:
        if item.data != "requirement":
            continue
        name_tok, body = item.children[0], item.children[1]
        if str(name_tok) in seen:
            raise RfolSyntaxError(f"requirement '{name_tok}' defined twice", _pos(name_tok))
        seen.add(str(name_tok))
        phi = _build(body, decls)
        phi = _finish_formula(phi, scalars, _pos(name_tok))
        spec.requirements.append(Requirement(str(name_tok), phi, pretty(phi)))
    return spec


def parse_formula(text: str, signals) -> Formula:
    """解析单个公式

    Args:
        text: 公式文本
        signals: 已声明的信号，可以是名字集合或 SignalDecl 列表
    """
    decls: Dict[str, SignalDecl] = {}
    for s in signals:
        decl = s if isinstance(s, SignalDecl) else _decl_from_name(str(s))
        if decl.name in decls and decl.size:
            size = max(decls[decl.name].size, decl.size)
            decl = SignalDecl(decl.name, decl.unit, size)
        decls[decl.name] = decl
    try:
        tree = _PARSER.parse(text, start="formula")
    except lark_exceptions.LarkError as err:
        _raise_from_lark(err)
    phi = _build(tree, decls)
    scalars: Set[str] = set()
    for decl in decls.values():
        scalars.update(decl.components())
    return _finish_formula(phi, scalars, None)


def _decl_from_name(name: str) -> SignalDecl:
    # 裸分量名 q[2] 视为向量 q 的声明
    if name.endswith("]") and "[" in name:
        base, index = name[:-1].split("[", 1)
        return SignalDecl(base, size=int(index) + 1)
    return SignalDecl(name)


# ----------------------------------------------------------- pretty printer

def format_number(x: float) -> str:
    x = float(x)
    if x.is_integer() and abs(x) < 1e15:
        return str(int(x))
    return repr(x)


def pretty_time(tt: TimeTerm) -> str:
    if isinstance(tt, Var):
        return tt.name
    if isinstance(tt, Plus):
        return f"{tt.var} + {format_number(tt.n)}"
    if isinstance(tt, Minus):
        return f"{tt.var} - {format_number(tt.n)}"
    return format_number(tt.n)


_INFIX = {"add": "+", "sub": "-", "mul": "*", "div": "/", "pow": "^"}


def pretty_term(rho: SignalTerm) -> str:
    if isinstance(rho, SignalAt):
        return f"{rho.signal}({pretty_time(rho.at)})"
    if isinstance(rho, Literal):
        return format_number(rho.value)
    if isinstance(rho, Unary):
        if rho.g == "neg":
            return f"-({pretty_term(rho.arg)})"
        return f"{rho.g}({pretty_term(rho.arg)})"
    if rho.h in _INFIX:
        return f"({pretty_term(rho.left)} {_INFIX[rho.h]} {pretty_term(rho.right)})"
    return f"{rho.h}({pretty_term(rho.left)}, {pretty_term(rho.right)})"


def pretty_interval(iv: Interval) -> str:
    lb = "[" if iv.lower_closed else "("
    rb = "]" if iv.upper_closed else ")"
    return f"{lb}{pretty_time(iv.lower)}, {pretty_time(iv.upper)}{rb}"


def pretty(phi: Formula) -> str:
    """打印为可重新解析的文本，重新解析得到结构相同的公式"""
    if isinstance(phi, Pred):
        return f"{pretty_term(phi.rho)} {phi.rel} {format_number(phi.r)}"
    if isinstance(phi, Quantifier):
        return f"{phi.symbol} {phi.var} in {pretty_interval(phi.iv)}: {pretty(phi.body)}"
    if isinstance(phi, And):
        left = _wrap(phi.left, (Or, Quantifier))
        right = _wrap(phi.right, (And, Or, Quantifier))
        return f"{left} and {right}"
    left = _wrap(phi.left, (Quantifier,))
    right = _wrap(phi.right, (Or, Quantifier))
    return f"{left} or {right}"


def _wrap(phi: Formula, kinds: Tuple[type, ...]) -> str:
    text = pretty(phi)
    return f"({text})" if isinstance(phi, kinds) else text


def pretty_spec(spec: Spec) -> str:
    lines: List[str] = []
    for decl in spec.signals:
        name = f"{decl.name}[{decl.size}]" if decl.size else decl.name
        unit = f' "{decl.unit}"' if decl.unit else ""
        lines.append(f"signal {name}{unit};")
    if spec.time_domain_end is not None:
        lines.append(f"domain {format_number(spec.time_domain_end)};")
    for req in spec.requirements:
        lines.append(f"req {req.name}: {pretty(req.formula)};")
    return "\n".join(lines) + "\n"
