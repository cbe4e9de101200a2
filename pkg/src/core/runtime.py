"""逐步执行块图，输出在线适应度 e(t)

每一步按拓扑序求值；单位延迟在步开始时输出上一步锁存的值，在轮到它时锁存本步输入。
步的时刻是采样时刻与量词候选时刻的并集，不落在采样上的时刻按插值方式取输入。
时刻超过 horizon d 之后 e(t) 不再上升，低于阈值即可提前停止。
"""
import heapq
import math
import multiprocessing as mp
import operator
import queue
import time
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, ClassVar, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .compiler import Block, BlockGraph, BlockKind
from .errors import DomainIncomplete, MissingSignal, NonMonotonicTime, UndefinedFormula
from .semantics import UNARY_FUNCS, BINARY_FUNCS, diff
from .trace import Trace


# ------------------------------------------------------------------ verdicts

@dataclass(frozen=True)
class Running:
    e: float
    kind: ClassVar[str] = "running"


@dataclass(frozen=True)
class Stopped:
    t: float
    e: float
    kind: ClassVar[str] = "stopped"


@dataclass(frozen=True)
class Finished:
    e: float
    kind: ClassVar[str] = "finished"


Verdict = Union[Running, Stopped, Finished]


@dataclass(frozen=True)
class StepInput:
    t: float
    values: Mapping[str, float]


# ------------------------------------------------------------- interpolation

def lerp(t0: float, v0: float, t1: float, v1: float, x: float) -> float:
    """与 np.interp 的逐点公式一致：命中采样点时返回原值"""
    if x == t0:
        return v0
    if x == t1:
        return v1
    slope = (v1 - v0) / (t1 - t0)
    return slope * (x - t0) + v0


def _between(t0: float, v0: float, t1: float, v1: float, x: float, interpolation: str) -> float:
    if interpolation == "hold-previous":
        return v1 if x >= t1 else v0
    return lerp(t0, v0, t1, v1, x)


# ------------------------------------------------------------ scalar kernels
# +、−、×、min、max 与 numpy 的 IEEE 结果逐位相同，直接用 Python 浮点运算；
# 其余函数沿用离线求值器的 ufunc

def _nan_min(a: float, b: float) -> float:
    if a != a or b != b:
        return math.nan
    return a if a <= b else b


def _nan_max(a: float, b: float) -> float:
    if a != a or b != b:
        return math.nan
    return a if a >= b else b


def _quiet(ufunc: Callable) -> Callable:
    def call(*args):
        with np.errstate(all="ignore"):
            return float(ufunc(*args))
    return call


_SCALAR_UNARY: Dict[str, Callable[[float], float]] = {
    "neg": operator.neg,
    "abs": abs,
    "sin": _quiet(UNARY_FUNCS["sin"]),
    "cos": _quiet(UNARY_FUNCS["cos"]),
    "sqrt": _quiet(UNARY_FUNCS["sqrt"]),
    "exp": _quiet(UNARY_FUNCS["exp"]),
}

_SCALAR_BINARY: Dict[str, Callable[[float, float], float]] = {
    "add": operator.add,
    "sub": operator.sub,
    "mul": operator.mul,
    "div": _quiet(BINARY_FUNCS["div"]),
    "pow": _quiet(BINARY_FUNCS["pow"]),
    "min": _nan_min,
    "max": _nan_max,
}


# ---------------------------------------------------------------- block ops
# 每个算子从共享的 values 列表里按块编号读取输入

class _Op:
    __slots__ = ("id", "srcs")

    def __init__(self, block: Block, srcs: List[int]):
        self.id = block.id
        self.srcs = srcs

    def step(self, t: float, v: List[float]) -> float:
        raise NotImplementedError


class _AddSub(_Op):
    __slots__ = ("signs",)

    def __init__(self, block, srcs):
        super().__init__(block, srcs)
        self.signs = block.params["signs"]

    def step(self, t, v):
        total = 0.0
        for i, (sign, src) in enumerate(zip(self.signs, self.srcs)):
            x = v[src]
            if i == 0:
                total = x if sign == "+" else -x
            elif sign == "+":
                total = total + x
            else:
                total = total - x
        return total


class _TransportDelay(_Op):
    """输出 x(t − n)；缓冲区只保留夹住查询时刻的样本"""

    __slots__ = ("delay", "initial", "interpolation", "buf")

    def __init__(self, block, srcs):
        super().__init__(block, srcs)
        self.delay = float(block.params["delay"])
        self.initial = float(block.params.get("initial_output", 0.0))
        self.interpolation = block.params.get("interpolation", "linear")
        self.buf: deque = deque()

    def step(self, t, v):
        buf = self.buf
        buf.append((t, v[self.srcs[0]]))
        q = t - self.delay
        if q < buf[0][0]:
            return self.initial
        while len(buf) >= 2 and buf[1][0] <= q:
            buf.popleft()
        t0, v0 = buf[0]
        if len(buf) == 1 or q == t0:
            return v0
        t1, v1 = buf[1]
        return _between(t0, v0, t1, v1, q, self.interpolation)


class _SampleHold(_Op):
    """时刻到达 n 后锁存 x(n)，之前输出初值"""

    __slots__ = ("at", "initial", "interpolation", "prev", "latched")

    def __init__(self, block, srcs):
        super().__init__(block, srcs)
        self.at = float(block.params["at"])
        self.initial = float(block.params.get("initial_output", 0.0))
        self.interpolation = block.params.get("interpolation", "linear")
        self.prev: Optional[Tuple[float, float]] = None
        self.latched: Optional[float] = None

    def step(self, t, v):
        x = v[self.srcs[0]]
        if self.latched is None and t >= self.at:
            if t == self.at or self.prev is None:
                self.latched = x
            else:
                t0, v0 = self.prev
                self.latched = _between(t0, v0, t, x, self.at, self.interpolation)
        self.prev = (t, x)
        return self.initial if self.latched is None else self.latched


class _UnaryFn(_Op):
    __slots__ = ("fn",)

    def __init__(self, block, srcs):
        super().__init__(block, srcs)
        self.fn = _SCALAR_UNARY[block.params["g"]]

    def step(self, t, v):
        return self.fn(v[self.srcs[0]])


class _BinaryFn(_Op):
    __slots__ = ("fn",)

    def __init__(self, block, srcs):
        super().__init__(block, srcs)
        self.fn = _SCALAR_BINARY[block.params["h"]]

    def step(self, t, v):
        return self.fn(v[self.srcs[0]], v[self.srcs[1]])


class _Diff(_Op):
    __slots__ = ("rel", "r", "epsilon", "mode")

    def __init__(self, block, srcs):
        super().__init__(block, srcs)
        p = block.params
        self.rel, self.r, self.epsilon, self.mode = p["rel"], float(p["r"]), float(p["epsilon"]), p["mode"]

    def step(self, t, v):
        return diff(self.rel, v[self.srcs[0]], self.r, self.epsilon, self.mode)


class _UnitDelay(_Op):
    __slots__ = ("state",)

    def __init__(self, block, srcs):
        super().__init__(block, srcs)
        self.state = float(block.params["initial"])

    def step(self, t, v):
        # 锁存给下一步；本步的输出已在步开始时写入
        self.state = v[self.srcs[0]]
        return v[self.id]


class _Running(_Op):
    __slots__ = ("fn",)

    def __init__(self, block, srcs):
        super().__init__(block, srcs)
        self.fn = _nan_min if block.kind == BlockKind.RUNNING_MIN else _nan_max

    def step(self, t, v):
        return self.fn(v[self.srcs[0]], v[self.srcs[1]])


# 量词块在每一步的标记：本步是它的网格候选 g + D，或是某个闭端点
GRID = 1
EDGE = 2


def _inside(t: float, lo: float, hi: float, lower_closed: bool, upper_closed: bool) -> bool:
    above = t > lo or (lower_closed and t == lo)
    below = t < hi or (upper_closed and t == hi)
    return above and below


def _close(a: float, b: float) -> bool:
    return abs(a - b) <= 1e-9 * max(1.0, abs(b))


class _IntervalGate(_Op):
    """只在本步被标记且时钟落在区间内时放行体的值"""

    __slots__ = ("lower_closed", "upper_closed", "neutral", "label", "mark")

    def __init__(self, block, srcs):
        super().__init__(block, srcs)
        p = block.params
        self.lower_closed, self.upper_closed = bool(p["lower_closed"]), bool(p["upper_closed"])
        self.neutral = float(p["neutral"])
        self.label = block.label
        self.mark = 0

    def step(self, t, v):
        body, clock, lo, hi = self.srcs
        if not self.mark or not _inside(v[clock], v[lo], v[hi], self.lower_closed, self.upper_closed):
            return self.neutral
        x = v[body]
        if x != x:
            raise UndefinedFormula(f"body of '{self.label}' is undefined at t={t!r}")
        return x


class _SlidingWindow(_Op):
    """窗口 ⟨lo(τ), hi(τ)⟩ 内已产生的体值的 min/max

    端点随时钟单调不减：网格候选进待定队列，按 hi 放行到单调队列，按 lo 淘汰。
    闭端点处的体值单独记在 edges 里，查询时按时刻取出。
    """

    __slots__ = ("better", "pick", "lower_closed", "upper_closed", "neutral", "fixed_lower",
                 "pending", "mono", "nans", "edges", "mark")

    def __init__(self, block, srcs):
        super().__init__(block, srcs)
        p = block.params
        self.better = operator.lt if p["op"] == "min" else operator.gt
        self.pick = _nan_min if p["op"] == "min" else _nan_max
        self.lower_closed, self.upper_closed = bool(p["lower_closed"]), bool(p["upper_closed"])
        self.neutral = float(p["neutral"])
        self.fixed_lower = bool(p.get("fixed_lower", False))
        self.pending: deque = deque()
        self.mono: deque = deque()
        self.nans: deque = deque()
        self.edges: deque = deque()
        self.mark = 0

    def step(self, t, v):
        body, clock, lo_src, hi_src = self.srcs
        if self.mark & GRID:
            self.pending.append((v[clock], v[body]))
        if self.mark & EDGE:
            self.edges.append((v[clock], v[body]))
        lo, hi = v[lo_src], v[hi_src]
        pending, mono, better = self.pending, self.mono, self.better
        while pending and (pending[0][0] < hi or (self.upper_closed and pending[0][0] == hi)):
            entry = pending.popleft()
            if entry[1] != entry[1]:
                self.nans.append(entry[0])
                continue
            while mono and not better(mono[-1][1], entry[1]):
                mono.pop()
            mono.append(entry)
        for dq in (mono, self.nans):
            while dq:
                head = dq[0][0] if dq is mono else dq[0]
                if head < lo or (not self.lower_closed and head == lo):
                    dq.popleft()
                else:
                    break
        edges = self.edges
        while edges and edges[0][0] < lo and not _close(edges[0][0], lo):
            edges.popleft()
        if self.nans:
            return math.nan
        result = mono[0][1] if mono else self.neutral
        # 与离线候选集一致：闭下端点要求区间非空，闭上端点要求 hi > lo
        if self.lower_closed and (lo < hi or (lo == hi and self.upper_closed)):
            result = self._with_edge(result, lo, reversed_scan=False)
        if self.upper_closed and hi > lo:
            result = self._with_edge(result, hi, reversed_scan=True)
        if self.fixed_lower:
            self._prune(lo, hi)
        return result

    def _prune(self, lo: float, hi: float):
        # 下端点固定时，lo 与 hi 之间的端点值不会再被查询
        edges = self.edges
        head = edges.popleft() if edges and _close(edges[0][0], lo) else None
        while edges and edges[0][0] < hi and not _close(edges[0][0], hi):
            edges.popleft()
        if head is not None:
            edges.appendleft(head)

    def _with_edge(self, result: float, at: float, reversed_scan: bool) -> float:
        entries = reversed(self.edges) if reversed_scan else iter(self.edges)
        for when, x in entries:
            if _close(when, at):
                return self.pick(result, x)
            if (when < at) if reversed_scan else (when > at):
                break
        return result


class _NonemptyGate(_Op):
    """体只依赖外层变量的量词：候选集非空时输出体的值，否则输出中性元

    times 记录 lo 之后已到达的采样时刻；下界是常量时只需保留第一个。
    """

    __slots__ = ("lower_closed", "upper_closed", "neutral", "fixed_lower", "times", "mark")

    def __init__(self, block, srcs):
        super().__init__(block, srcs)
        p = block.params
        self.lower_closed, self.upper_closed = bool(p["lower_closed"]), bool(p["upper_closed"])
        self.neutral = float(p["neutral"])
        self.fixed_lower = bool(p.get("fixed_lower", False))
        self.times: deque = deque()
        self.mark = 0

    def step(self, t, v):
        body, clock, lo_src, hi_src = self.srcs
        lo, hi = v[lo_src], v[hi_src]
        times = self.times
        if self.mark & GRID and not (self.fixed_lower and times):
            times.append(v[clock])
        while times and times[0] <= lo:
            times.popleft()
        nonempty = (
            (self.lower_closed and (lo < hi or (lo == hi and self.upper_closed)))
            or (self.upper_closed and hi > lo)
            or (bool(times) and times[0] < hi)
        )
        return v[body] if nonempty else self.neutral


_OPS = {
    BlockKind.ADDSUB: _AddSub,
    BlockKind.TRANSPORT_DELAY: _TransportDelay,
    BlockKind.SAMPLE_HOLD: _SampleHold,
    BlockKind.UNARY_FN: _UnaryFn,
    BlockKind.BINARY_FN: _BinaryFn,
    BlockKind.DIFF: _Diff,
    BlockKind.UNIT_DELAY: _UnitDelay,
    BlockKind.RUNNING_MIN: _Running,
    BlockKind.RUNNING_MAX: _Running,
    BlockKind.INTERVAL_GATE: _IntervalGate,
    BlockKind.SLIDING_WINDOW: _SlidingWindow,
    BlockKind.NONEMPTY_GATE: _NonemptyGate,
}


# ------------------------------------------------------------------ monitor

class _Schedule:
    """待执行的步时刻及每个时刻上各量词块的标记

    采样 g 到达时给每个量词块标记 g + D；闭常量端点在构造时标记。
    一个块在 x 处被标记后，外层为它的滑动窗口在 x + c 处得到闭端点标记，
    c 取窗口每个闭的相对端点的偏移。x + c 可能早于最新采样，
    所以只执行不晚于 最新采样 − lookahead 的时刻。
    """

    def __init__(self, graph: BlockGraph):
        self.heap: List[float] = []
        self.marks: Dict[float, Dict[int, int]] = {}
        self.done: Optional[float] = None
        self.grid: List[Tuple[float, int]] = []
        self.children: Dict[int, List[Tuple[int, List[float]]]] = {}
        self.lookahead = 0.0

        scoped = {BlockKind.INTERVAL_GATE, BlockKind.SLIDING_WINDOW, BlockKind.NONEMPTY_GATE}
        quantifiers = [b for b in graph.blocks if b.kind in scoped]
        by_var = {
            b.params["var"]: b.id for b in quantifiers
            if b.kind != BlockKind.NONEMPTY_GATE and b.params.get("var")
        }
        relative: Dict[int, List[float]] = {}
        statics: List[Tuple[int, float]] = []
        for b in quantifiers:
            self.grid.append((float(b.params.get("shift", 0.0)), b.id))
            if b.kind == BlockKind.NONEMPTY_GATE:
                continue
            _, _, lo, hi = graph.sources(b.id)
            offsets = []
            for src, closed in ((lo, b.params["lower_closed"]), (hi, b.params["upper_closed"])):
                if not closed:
                    continue
                kind, value = _bound_kind(graph, src)
                if kind == "absolute":
                    statics.append((b.id, value))
                elif kind == "relative":
                    offsets.append(value)
            outer = by_var.get(b.params.get("outer", ""))
            if b.kind == BlockKind.SLIDING_WINDOW and offsets and outer is not None:
                self.children.setdefault(outer, []).append((b.id, offsets))
                relative[b.id] = offsets

        # 每个块相对最新采样最早会被标记到哪里
        earliest: Dict[int, float] = {}

        def earliest_mark(block_id: int) -> float:
            if block_id not in earliest:
                block = graph.block(block_id)
                own = float(block.params.get("shift", 0.0))
                outer = by_var.get(block.params.get("outer", ""))
                if block_id in relative and outer is not None:
                    own = min(own, earliest_mark(outer) + min(relative[block_id]))
                earliest[block_id] = own
            return earliest[block_id]

        for block_id in relative:
            self.lookahead = max(self.lookahead, -earliest_mark(block_id))
        for block_id, at in statics:
            self.mark(block_id, at, EDGE)

    def ensure(self, x: float):
        if x not in self.marks:
            self.marks[x] = {}
            heapq.heappush(self.heap, x)

    def mark(self, block_id: int, x: float, bit: int):
        if self.done is not None and x <= self.done:
            return
        self.ensure(x)
        marks = self.marks[x]
        before = marks.get(block_id, 0)
        marks[block_id] = before | bit
        if before:
            return
        for child, offsets in self.children.get(block_id, ()):
            for c in offsets:
                self.mark(child, x + c, EDGE)

    def sample(self, t: float):
        self.ensure(t)
        for shift, block_id in self.grid:
            self.mark(block_id, t + shift, GRID)

    def pop_until(self, limit: float):
        """按时间顺序取出不晚于 limit 的时刻及其标记"""
        heap = self.heap
        while heap and heap[0] <= limit:
            x = heapq.heappop(heap)
            self.done = x
            yield x, self.marks.pop(x)


def _bound_kind(graph: BlockGraph, src: int) -> Tuple[str, float]:
    """区间端点的形状：时钟加常量偏移为 relative，常量为 absolute"""
    block = graph.block(src)
    if block.kind == BlockKind.CLOCK:
        return "relative", 0.0
    if block.kind == BlockKind.CONST:
        return "absolute", float(block.params["value"])
    if block.kind == BlockKind.ADDSUB and block.params.get("signs") == "++":
        first, second = graph.sources(src)
        if graph.block(first).kind == BlockKind.CLOCK and graph.block(second).kind == BlockKind.CONST:
            return "relative", float(graph.block(second).params["value"])
    return "other", 0.0


class Monitor:
    """单个块图实例的在线状态；同一实例只能由一个执行者按顺序推进"""

    def __init__(
        self,
        graph: BlockGraph,
        threshold: float = 0.0,
        horizon_d: Optional[float] = None,
        stop_enabled: bool = True,
        domain_end: Optional[float] = None,
        record_series: bool = False,
    ):
        if not -1.0 <= threshold <= 1.0:
            raise ValueError(f"threshold must lie in [-1, 1], got {threshold!r}")
        horizon_d = graph.horizon_d if horizon_d is None else float(horizon_d)
        if horizon_d < 0:
            raise ValueError(f"horizon_d must be nonnegative, got {horizon_d!r}")
        self.graph = graph
        self.threshold = float(threshold)
        self.horizon_d = horizon_d
        self.stop_enabled = stop_enabled
        self.domain_end = graph.required_domain_end if domain_end is None else float(domain_end)
        self.record_series = record_series
        self.series: List[Tuple[float, float]] = []
        self.first_time: Optional[float] = None
        self.last_time: Optional[float] = None
        self.steps = 0
        self.e = math.nan
        self.verdict: Optional[Verdict] = None

        self.values: List[float] = [0.0] * len(graph.blocks)
        self.clocks: List[int] = []
        self.inports: List[Tuple[int, str]] = []
        self.delays: List[_UnitDelay] = []
        self.ops: List[_Op] = []
        self.marked: List[_Op] = []
        for block_id in graph.evaluation_order():
            block = graph.block(block_id)
            if block.kind == BlockKind.CLOCK:
                self.clocks.append(block_id)
            elif block.kind == BlockKind.CONST:
                self.values[block_id] = float(block.params["value"])
            elif block.kind == BlockKind.INPORT:
                self.inports.append((block_id, block.params["signal"]))
            else:
                op = _OPS[block.kind](block, graph.sources(block_id))
                if isinstance(op, _UnitDelay):
                    self.delays.append(op)
                if isinstance(op, (_IntervalGate, _SlidingWindow, _NonemptyGate)):
                    self.marked.append(op)
                self.ops.append(op)
        self.schedule = _Schedule(graph)
        # 尚未执行完的原始采样 (t, {信号: 值})
        self.samples: deque = deque()

    @property
    def stopped(self) -> bool:
        return isinstance(self.verdict, Stopped)

    def step(self, inp: StepInput) -> Verdict:
        """送入一个采样，执行所有已经可以确定的步，返回当前判定；停止之后原样返回 Stopped

        Raises:
            NonMonotonicTime: 时刻没有严格递增
            MissingSignal: 缺少块图需要的信号
        """
        if self.stopped:
            return self.verdict
        t = float(inp.t)
        if self.last_time is not None and not t > self.last_time:
            raise NonMonotonicTime(t, self.last_time)
        row: Dict[str, float] = {}
        for _, signal in self.inports:
            try:
                row[signal] = float(inp.values[signal])
            except KeyError:
                raise MissingSignal(signal) from None
        if self.first_time is None:
            self.first_time = t
        self.last_time = t
        self.samples.append((t, row))
        self.schedule.sample(t)
        self._advance(t - self.schedule.lookahead)
        if self.stopped:
            return self.verdict
        return Running(self.e)

    def _advance(self, limit: float):
        for x, marks in self.schedule.pop_until(limit):
            if x < self.first_time:
                continue
            self._run(x, marks)
            if self.stopped:
                break

    def _run(self, t: float, marks: Dict[int, int]):
        v = self.values
        self._feed(t)
        for block_id in self.clocks:
            v[block_id] = t
        for delay in self.delays:
            v[delay.id] = delay.state
        for op in self.marked:
            op.mark = marks.get(op.id, 0)
        for op in self.ops:
            v[op.id] = op.step(t, v)

        self.steps += 1
        e = v[self.graph.output]
        self.e = e
        if self.record_series:
            self.series.append((t, e))
        if self.stop_enabled and t > self.horizon_d and e < self.threshold:
            self.verdict = Stopped(t, e)

    def _feed(self, t: float):
        """输入端口取 t 处的值：命中采样时取原值，否则在相邻两个采样之间插值"""
        samples, v = self.samples, self.values
        while len(samples) >= 2 and samples[1][0] <= t:
            samples.popleft()
        t0, row0 = samples[0]
        if t == t0 or len(samples) == 1:
            for block_id, signal in self.inports:
                v[block_id] = row0[signal]
            return
        t1, row1 = samples[1]
        interpolation = self.graph.interpolation
        for block_id, signal in self.inports:
            v[block_id] = _between(t0, row0[signal], t1, row1[signal], t, interpolation)

    def finish(self) -> Verdict:
        """执行到最后一个采样为止的剩余步，给出最终判定

        Raises:
            DomainIncomplete: 还没有走到 domain_end
            UndefinedFormula: 最终值无定义
        """
        if self.stopped:
            return self.verdict
        if self.last_time is not None:
            self._advance(self.last_time)
            if self.stopped:
                return self.verdict
        tolerance = 1e-9 * max(1.0, abs(self.domain_end))
        if self.last_time is None or self.last_time < self.domain_end - tolerance:
            raise DomainIncomplete(self.last_time, self.domain_end)
        if self.e != self.e:
            raise UndefinedFormula("online fitness is undefined at the domain end")
        self.verdict = Finished(self.e)
        return self.verdict


def new_monitor(graph: BlockGraph, threshold: float = 0.0, horizon_d: Optional[float] = None,
                stop_enabled: bool = True, record_series: bool = False) -> Monitor:
    return Monitor(graph, threshold, horizon_d, stop_enabled, record_series=record_series)


# ------------------------------------------------------------------ drivers

@dataclass
class RunResult:
    verdict: Verdict
    series: List[Tuple[float, float]] = field(default_factory=list)
    steps: int = 0
    wall_time: float = 0.0


def _drive(monitor: Monitor, trace: Trace, cancel=None, check_every: int = 1024) -> Optional[Verdict]:
    """把轨迹逐行送入监控器；被取消时返回 None"""
    for name in monitor.graph.inputs:
        if name not in trace.values:
            raise MissingSignal(name)
    names = list(monitor.graph.inputs)
    columns = [trace.values[name].tolist() for name in names]
    for i, t in enumerate(trace.times.tolist()):
        if cancel is not None and i % check_every == 0 and cancel.is_set():
            return None
        verdict = monitor.step(StepInput(t, {name: col[i] for name, col in zip(names, columns)}))
        if isinstance(verdict, Stopped):
            return verdict
    return monitor.finish()


def run_trace(graph: BlockGraph, trace: Trace, threshold: float = 0.0, stop_enabled: bool = True,
              record_series: bool = False) -> RunResult:
    """在整条轨迹上运行监控器，遇到 Stopped 立即返回"""
    start = time.perf_counter()
    monitor = Monitor(graph, threshold, stop_enabled=stop_enabled, record_series=record_series)
    verdict = _drive(monitor, trace)
    return RunResult(verdict, monitor.series, monitor.steps, time.perf_counter() - start)


@dataclass
class BundleResult:
    verdict: Verdict
    fitness: float
    runs: List[Optional[RunResult]] = field(default_factory=list)

    @property
    def steps(self) -> int:
        return sum(r.steps for r in self.runs if r is not None)


def _bundle_worker(graph: BlockGraph, threshold: float, stop_enabled: bool,
                   tasks: mp.Queue, results: mp.Queue, cancel):
    """工作进程：逐个取轨迹运行，None 为停止信号"""
    while True:
        task = tasks.get()
        if task is None:
            break
        index, trace = task
        if cancel.is_set():
            results.put((index, None, None))
            continue
        start = time.perf_counter()
        try:
            monitor = Monitor(graph, threshold, stop_enabled=stop_enabled)
            verdict = _drive(monitor, trace, cancel)
            run = None if verdict is None else RunResult(
                verdict, [], monitor.steps, time.perf_counter() - start
            )
            results.put((index, run, None))
        except Exception as err:
            results.put((index, None, err))


def _check_bundle(traces: Sequence[Trace]) -> None:
    if not traces:
        raise ValueError("run_bundle needs at least one trace")
    ends = {tr.domain_end for tr in traces}
    if len(ends) > 1:
        raise ValueError(f"traces disagree on the domain end: {sorted(ends)}")


def _summarize(runs: List[Optional[RunResult]]) -> BundleResult:
    stops = [(r.verdict.t, i) for i, r in enumerate(runs) if r is not None and isinstance(r.verdict, Stopped)]
    if stops:
        # 保守结论：已知某条输出低于阈值，报告该次停止时的适应度
        _, first = min(stops)
        verdict = runs[first].verdict
        return BundleResult(verdict, verdict.e, runs)
    fitness = min(r.verdict.e for r in runs)
    return BundleResult(Finished(fitness), fitness, runs)


def run_bundle(graph: BlockGraph, traces: Sequence[Trace], threshold: float = 0.0,
               stop_enabled: bool = True, workers: int = 1, stop_on_first_failure: bool = True,
               logger=None) -> BundleResult:
    """不确定模型的 k 条输出各跑一个独立监控器，结果取最小值

    任一输出被提前停止时报告 Stopped；stop_on_first_failure 为真时同时取消其余工作。
    """
    _check_bundle(traces)
    workers = max(1, min(int(workers), len(traces)))
    if workers == 1:
        runs: List[Optional[RunResult]] = []
        for trace in traces:
            run = run_trace(graph, trace, threshold, stop_enabled, record_series=False)
            runs.append(run)
            if isinstance(run.verdict, Stopped) and stop_on_first_failure:
                break
        runs.extend([None] * (len(traces) - len(runs)))
    else:
        runs = _run_parallel(graph, traces, threshold, stop_enabled, workers, stop_on_first_failure)

    result = _summarize(runs)
    if logger:
        for i, run in enumerate(runs):
            if run is not None:
                logger.log(graph.requirement, {
                    "trace": i,
                    "verdict": run.verdict.kind,
                    "fitness": run.verdict.e,
                    "steps": run.steps,
                })
        logger.log(graph.requirement, {
            "verdict_event": {"kind": result.verdict.kind, "fitness": result.fitness, "traces": len(traces)},
        })
    return result


def _run_parallel(graph: BlockGraph, traces: Sequence[Trace], threshold: float,
                  stop_enabled: bool, workers: int,
                  stop_on_first_failure: bool = True) -> List[Optional[RunResult]]:
    tasks: mp.Queue = mp.Queue()
    results: mp.Queue = mp.Queue()
    cancel = mp.Event()
    for index, trace in enumerate(traces):
        tasks.put((index, trace))
    for _ in range(workers):
        tasks.put(None)

    procs = [
        mp.Process(target=_bundle_worker, args=(graph, threshold, stop_enabled, tasks, results, cancel), daemon=True)
        for _ in range(workers)
    ]
    for p in procs:
        p.start()

    runs: List[Optional[RunResult]] = [None] * len(traces)
    failure: Optional[BaseException] = None
    received = 0
    try:
        while received < len(traces):
            try:
                index, run, err = results.get(timeout=1.0)
            except queue.Empty:
                if not any(p.is_alive() for p in procs):
                    raise RuntimeError("bundle workers exited without reporting") from None
                continue
            received += 1
            if err is not None:
                failure = failure or err
                cancel.set()
            elif run is not None:
                runs[index] = run
                if isinstance(run.verdict, Stopped) and stop_on_first_failure:
                    cancel.set()
    finally:
        for p in procs:
            p.join(timeout=5)
            if p.is_alive():
                p.terminate()
    if failure is not None:
        raise failure
    return runs
