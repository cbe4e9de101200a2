from dataclasses import dataclass
from typing import Optional


@dataclass(frozen=True)
class SourcePos:
    line: int
    column: int

    def __str__(self) -> str:
        return f"{self.line}:{self.column}"


def _rebuild(cls, args, state):
    err = Exception.__new__(cls)
    err.args = args
    err.__dict__.update(state)
    return err


class RfolError(Exception):
    """所有RFOL错误的基类"""

    # 子类的构造参数与 args 不一致，跨进程传递时按原样重建
    def __reduce__(self):
        return _rebuild, (type(self), self.args, dict(self.__dict__))


class RfolSyntaxError(RfolError):
    def __init__(self, message: str, pos: Optional[SourcePos] = None):
        self.pos = pos
        where = f" at {pos}" if pos else ""
        super().__init__(f"syntax error{where}: {message}")


class UndeclaredSignal(RfolError):
    def __init__(self, name: str, pos: Optional[SourcePos] = None):
        self.name = name
        self.pos = pos
        where = f" at {pos}" if pos else ""
        super().__init__(f"undeclared signal '{name}'{where}")


class WellFormednessError(RfolError):
    """良构性检查失败，附带违规的子公式"""

    condition = 0

    def __init__(self, subformula, detail: str, pos: Optional[SourcePos] = None):
        self.subformula = subformula
        self.detail = detail
        self.pos = pos
        super().__init__(f"condition {self.condition} violated: {detail}")


class Condition1Violation(WellFormednessError):
    condition = 1


class Condition2Violation(WellFormednessError):
    condition = 2


class UndefinedSignalValue(RfolError):
    pass


class UndefinedFormula(RfolError):
    pass


class NegativeIndexReachable(RfolError):
    def __init__(self, index: float):
        self.index = index
        super().__init__(f"signal index {index:g} < 0 is reachable")


class NonConstantBoundUnsupported(RfolError):
    pass


class NotOnlineCheckable(RfolError):
    pass


class NonMonotonicTime(RfolError):
    def __init__(self, t: float, last: float):
        self.t = t
        self.last = last
        super().__init__(f"step time {t!r} does not exceed previous step time {last!r}")


class MissingSignal(RfolError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"signal '{name}' missing from step input")


class DomainIncomplete(RfolError):
    def __init__(self, last_time: Optional[float], domain_end: float):
        self.last_time = last_time
        self.domain_end = domain_end
        super().__init__(
            f"monitor stopped at {last_time!r} before the domain end {domain_end!r}"
        )


class TraceFormatError(RfolError):
    def __init__(self, message: str, line: Optional[int] = None, path: Optional[str] = None):
        self.line = line
        self.path = path
        where = ""
        if path:
            where += f" in {path}"
        if line is not None:
            where += f" line {line}"
        super().__init__(f"trace format error{where}: {message}")


class StlTranslationError(RfolError):
    pass
