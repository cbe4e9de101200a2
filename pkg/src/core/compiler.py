"""把平移后的 RFOL 公式编译成数据流块图

每个子公式对应一个单输出子图，输出在时钟 τ 处的取值等于把该子公式的自由变量
代入 τ 后的适应度。常量区间的量词用区间门 + 带单位延迟反馈的累计 min/max 实现；
区间端点引用外层变量的量词用滑动窗口实现；体只依赖外层变量的量词用非空门实现。
量词块记录自身变量、外层变量和平移量，运行时据此安排区间端点处的插值子步。
"""
import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

import graphviz
import networkx as nx

from .ast_nodes import (
    And,
    Binary,
    Const,
    Exists,
    Formula,
    Literal,
    Minus,
    Or,
    Plus,
    Pred,
    Quantifier,
    SignalAt,
    SignalTerm,
    Spec,
    TimeTerm,
    Unary,
    Var,
    free_var_table,
    iter_signal_ats,
    iter_subformulas,
    term_offset,
    term_var,
)
from .errors import NotOnlineCheckable, UndeclaredSignal
from .parser import pretty
from .semantics import EvalConfig
from .shifting import ShiftReport, is_online_checkable, shift


SCHEMA_VERSION = 1


class BlockKind(str, Enum):
    CLOCK = "clock"
    CONST = "const"
    INPORT = "inport"
    ADDSUB = "addsub"
    TRANSPORT_DELAY = "transport_delay"
    SAMPLE_HOLD = "sample_hold"
    UNARY_FN = "unary_fn"
    BINARY_FN = "binary_fn"
    UNIT_DELAY = "unit_delay"
    RUNNING_MIN = "running_min"
    RUNNING_MAX = "running_max"
    INTERVAL_GATE = "interval_gate"
    SLIDING_WINDOW = "sliding_window"
    NONEMPTY_GATE = "nonempty_gate"
    DIFF = "diff"


# 固定端口数；ADDSUB 的端口数等于 signs 的长度
PORT_COUNTS = {
    BlockKind.CLOCK: 0,
    BlockKind.CONST: 0,
    BlockKind.INPORT: 0,
    BlockKind.TRANSPORT_DELAY: 1,
    BlockKind.SAMPLE_HOLD: 1,
    BlockKind.UNARY_FN: 1,
    BlockKind.BINARY_FN: 2,
    BlockKind.UNIT_DELAY: 1,
    BlockKind.RUNNING_MIN: 2,
    BlockKind.RUNNING_MAX: 2,
    BlockKind.INTERVAL_GATE: 4,
    BlockKind.SLIDING_WINDOW: 4,
    BlockKind.NONEMPTY_GATE: 4,
    BlockKind.DIFF: 1,
}


@dataclass(frozen=True)
class Block:
    id: int
    kind: BlockKind
    params: Dict[str, Any] = field(default_factory=dict)
    label: str = ""

    @property
    def ports(self) -> int:
        if self.kind == BlockKind.ADDSUB:
            return len(self.params["signs"])
        return PORT_COUNTS[self.kind]


@dataclass(frozen=True)
class Connection:
    src: int
    dst: int
    port: int


@dataclass
class BlockGraph:
    blocks: List[Block] = field(default_factory=list)
    connections: List[Connection] = field(default_factory=list)
    inputs: Dict[str, int] = field(default_factory=dict)
    output: int = -1
    required_domain_end: float = 0.0
    horizon_d: float = 0.0
    requirement: str = ""
    formula: str = ""
    epsilon: float = EvalConfig.epsilon
    interpolation: str = EvalConfig.interpolation
    diff_mode: str = EvalConfig.diff_mode

    def block(self, block_id: int) -> Block:
        return self.blocks[block_id]

    def sources(self, block_id: int) -> List[int]:
        """按端口顺序返回输入连接的来源块"""
        found = sorted((c.port, c.src) for c in self.connections if c.dst == block_id)
        return [src for _, src in found]

    def to_networkx(self) -> nx.DiGraph:
        g = nx.DiGraph()
        for b in self.blocks:
            g.add_node(b.id, kind=b.kind.value)
        for c in self.connections:
            g.add_edge(c.src, c.dst, port=c.port)
        return g

    def evaluation_order(self) -> List[int]:
        """去掉单位延迟的出边后做拓扑排序；同层按块编号排序保证确定性"""
        g = nx.DiGraph()
        g.add_nodes_from(b.id for b in self.blocks)
        for c in self.connections:
            if self.blocks[c.src].kind != BlockKind.UNIT_DELAY:
                g.add_edge(c.src, c.dst)
        return list(nx.lexicographical_topological_sort(g))

    def check_structure(self) -> None:
        """结构不变量：端口恰有一个输入、唯一输出、环必经过单位延迟、图连通

        Raises:
            ValueError: 任一不变量不成立
        """
        if not 0 <= self.output < len(self.blocks):
            raise ValueError(f"graph output {self.output} is not a block")
        for i, b in enumerate(self.blocks):
            if b.id != i:
                raise ValueError(f"block ids must be dense, block {b.id} at position {i}")
        seen: Dict[Tuple[int, int], int] = {}
        for c in self.connections:
            if not 0 <= c.port < self.blocks[c.dst].ports:
                raise ValueError(f"block {c.dst} has no input port {c.port}")
            if (c.dst, c.port) in seen:
                raise ValueError(f"port {c.dst}.{c.port} has more than one incoming connection")
            seen[(c.dst, c.port)] = c.src
        for b in self.blocks:
            for port in range(b.ports):
                if (b.id, port) not in seen:
                    raise ValueError(f"port {b.id}.{port} ({b.kind.value}) is unconnected")
        acyclic = nx.DiGraph()
        acyclic.add_nodes_from(b.id for b in self.blocks)
        acyclic.add_edges_from(
            (c.src, c.dst) for c in self.connections
            if self.blocks[c.src].kind != BlockKind.UNIT_DELAY
        )
        if not nx.is_directed_acyclic_graph(acyclic):
            raise ValueError("graph has a cycle that does not pass through a unit delay")
        if len(self.blocks) > 1 and not nx.is_weakly_connected(self.to_networkx()):
            raise ValueError("graph is not connected")

    # ------------------------------------------------------------- JSON

    def to_dict(self) -> Dict[str, Any]:
        return {
            "schema_version": SCHEMA_VERSION,
            "requirement": self.requirement,
            "formula": self.formula,
            "required_domain_end": self.required_domain_end,
            "horizon_d": self.horizon_d,
            "epsilon": self.epsilon,
            "interpolation": self.interpolation,
            "diff_mode": self.diff_mode,
            "inputs": dict(sorted(self.inputs.items())),
            "output": self.output,
            "blocks": [
                {"id": b.id, "kind": b.kind.value, "params": b.params, "label": b.label}
                for b in self.blocks
            ],
            "connections": [[c.src, c.dst, c.port] for c in self.connections],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, ensure_ascii=False)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "BlockGraph":
        version = data.get("schema_version")
        if version != SCHEMA_VERSION:
            raise ValueError(f"unsupported graph schema_version {version!r}")
        graph = cls(
            blocks=[
                Block(int(b["id"]), BlockKind(b["kind"]), dict(b.get("params", {})), b.get("label", ""))
                for b in data["blocks"]
            ],
            connections=[Connection(int(s), int(d), int(p)) for s, d, p in data["connections"]],
            inputs={k: int(v) for k, v in data["inputs"].items()},
            output=int(data["output"]),
            required_domain_end=float(data["required_domain_end"]),
            horizon_d=float(data["horizon_d"]),
            requirement=data.get("requirement", ""),
            formula=data.get("formula", ""),
            epsilon=float(data.get("epsilon", EvalConfig.epsilon)),
            interpolation=data.get("interpolation", EvalConfig.interpolation),
            diff_mode=data.get("diff_mode", EvalConfig.diff_mode),
        )
        graph.check_structure()
        return graph

    @classmethod
    def from_json(cls, text: str) -> "BlockGraph":
        return cls.from_dict(json.loads(text))


# ----------------------------------------------------------------- builder

class _Builder:
    """shifts 为量词变量 → 平移量 D；没有量词的公式不建时钟块"""

    def __init__(self, phi: Formula, cfg: EvalConfig, shifts: Dict[str, float], initial_output: float = 0.0):
        self.cfg = cfg
        self.shifts = shifts
        self.initial_output = float(initial_output)
        self.free = free_var_table(phi)
        self.blocks: List[Block] = []
        self.connections: List[Connection] = []
        self.inputs: Dict[str, int] = {}
        self.clock = -1
        if any(isinstance(node, Quantifier) for node in iter_subformulas(phi)):
            self.clock = self.add(BlockKind.CLOCK, label="t")

    def add(self, kind: BlockKind, sources: Tuple[int, ...] = (), label: str = "", **params) -> int:
        block_id = len(self.blocks)
        self.blocks.append(Block(block_id, kind, params, label))
        for port, src in enumerate(sources):
            self.connections.append(Connection(src, block_id, port))
        return block_id

    def inport(self, signal: str) -> int:
        if signal not in self.inputs:
            self.inputs[signal] = self.add(BlockKind.INPORT, label=signal, signal=signal)
        return self.inputs[signal]

    # 时间项：只出现在区间端点
    def bound(self, tt: TimeTerm) -> int:
        w = term_var(tt)
        if w is None:
            return self.add(BlockKind.CONST, value=term_offset(tt))
        if isinstance(tt, Var):
            return self.clock
        offset = self.add(BlockKind.CONST, value=term_offset(tt))
        return self.add(BlockKind.ADDSUB, (self.clock, offset), label=pretty_bound(tt), signs="++")

    def term(self, node: SignalTerm) -> int:
        if isinstance(node, SignalAt):
            src = self.inport(node.signal)
            at = node.at
            if isinstance(at, Var):
                return src
            if isinstance(at, Minus):
                return self.add(
                    BlockKind.TRANSPORT_DELAY, (src,), label=f"{node.signal}(t-{at.n:g})",
                    delay=float(at.n), initial_output=self.initial_output, interpolation=self.cfg.interpolation,
                )
            if isinstance(at, Const):
                return self.add(
                    BlockKind.SAMPLE_HOLD, (src,), label=f"{node.signal}({at.n:g})",
                    at=float(at.n), initial_output=self.initial_output, interpolation=self.cfg.interpolation,
                )
            if isinstance(at, Plus):
                raise NotOnlineCheckable(f"future index {node.signal}({at.var}+{at.n:g}) left after shifting")
        if isinstance(node, Literal):
            return self.add(BlockKind.CONST, value=float(node.value))
        if isinstance(node, Unary):
            return self.add(BlockKind.UNARY_FN, (self.term(node.arg),), g=node.g)
        if isinstance(node, Binary):
            return self.add(BlockKind.BINARY_FN, (self.term(node.left), self.term(node.right)), h=node.h)
        raise TypeError(f"not a signal term: {node!r}")

    def formula(self, node: Formula, outer: str = "") -> int:
        """outer 是最近的外层非透明量词的变量，顶层为空串"""
        if isinstance(node, Pred):
            return self.add(
                BlockKind.DIFF, (self.term(node.rho),), label=pretty(node),
                rel=node.rel, r=float(node.r), epsilon=self.cfg.epsilon, mode=self.cfg.diff_mode,
            )
        if isinstance(node, (And, Or)):
            h = "min" if isinstance(node, And) else "max"
            return self.add(
                BlockKind.BINARY_FN, (self.formula(node.left, outer), self.formula(node.right, outer)), h=h,
            )
        if isinstance(node, Quantifier):
            return self.quantifier(node, outer)
        raise TypeError(f"not an RFOL formula: {node!r}")

    def quantifier(self, q: Quantifier, outer: str) -> int:
        closedness = {"lower_closed": q.iv.lower_closed, "upper_closed": q.iv.upper_closed}
        label = f"{q.symbol} {q.var}"
        if self.free[id(q.body)] not in (q.var, None):
            # 体只依赖外层变量：候选集非空时取体的值
            body = self.formula(q.body, outer)
            lo, hi = self.bound(q.iv.lower), self.bound(q.iv.upper)
            return self.add(
                BlockKind.NONEMPTY_GATE, (body, self.clock, lo, hi), label=label,
                var=q.var, outer=outer, shift=0.0, neutral=q.neutral,
                fixed_lower=term_var(q.iv.lower) is None, **closedness,
            )
        body = self.formula(q.body, q.var)
        lo = self.bound(q.iv.lower)
        hi = self.bound(q.iv.upper)
        scope = {"var": q.var, "outer": outer, "shift": float(self.shifts.get(q.var, 0.0))}
        if not q.iv.is_constant():
            op = "max" if isinstance(q, Exists) else "min"
            return self.add(
                BlockKind.SLIDING_WINDOW, (body, self.clock, lo, hi), label=label,
                op=op, neutral=q.neutral, fixed_lower=term_var(q.iv.lower) is None, **scope, **closedness,
            )
        gate = self.add(
            BlockKind.INTERVAL_GATE, (body, self.clock, lo, hi), label=label,
            neutral=q.neutral, **scope, **closedness,
        )
        kind = BlockKind.RUNNING_MAX if isinstance(q, Exists) else BlockKind.RUNNING_MIN
        # 反馈环：累计块 → 单位延迟 → 累计块的第 1 个端口
        running = self.add(kind, label=label)
        delay = self.add(BlockKind.UNIT_DELAY, (running,), initial=q.neutral)
        self.connections.append(Connection(gate, running, 0))
        self.connections.append(Connection(delay, running, 1))
        return running


def pretty_bound(tt: TimeTerm) -> str:
    off = term_offset(tt)
    return f"{term_var(tt)}{'+' if off >= 0 else '-'}{abs(off):g}"


# -------------------------------------------------------------- public API

def compile_graph(report: ShiftReport, spec: Spec, cfg: Optional[EvalConfig] = None,
                  requirement: str = "", initial_output: float = 0.0) -> BlockGraph:
    """按结构归纳把 report.shifted 翻译成块图

    Raises:
        NotOnlineCheckable: 平移后的公式仍有未来下标或未对齐的区间
        UndeclaredSignal: 公式引用了 spec 未声明的信号
    """
    cfg = cfg or EvalConfig()
    phi = report.shifted
    declared = set(spec.scalar_signals())
    for sa in iter_signal_ats(phi):
        if sa.signal not in declared:
            raise UndeclaredSignal(sa.signal)
    if not is_online_checkable(phi):
        raise NotOnlineCheckable(f"shifted formula is not online-checkable: {pretty(phi)}")

    builder = _Builder(phi, cfg, {v: s.total for v, s in report.shifts.items()}, initial_output)
    output = builder.formula(phi)
    graph = BlockGraph(
        blocks=builder.blocks,
        connections=builder.connections,
        inputs=builder.inputs,
        output=output,
        required_domain_end=report.required_domain_end,
        horizon_d=report.horizon_d,
        requirement=requirement,
        formula=pretty(phi),
        epsilon=cfg.epsilon,
        interpolation=cfg.interpolation,
        diff_mode=cfg.diff_mode,
    )
    graph.check_structure()
    return graph


def compile_requirement(spec: Spec, name: str, cfg: Optional[EvalConfig] = None,
                        initial_output: float = 0.0) -> BlockGraph:
    req = spec.requirement(name)
    return compile_graph(shift(req.formula), spec, cfg, requirement=name, initial_output=initial_output)


def export_dot(graph: BlockGraph) -> str:
    """确定性的 DOT 文本；节点名 b<id>，边标注目标端口"""
    dot = graphviz.Digraph(name=graph.requirement or "monitor")
    dot.attr(rankdir="LR")
    dot.attr("node", shape="box", fontname="monospace")
    for b in graph.blocks:
        params = ", ".join(f"{k}={_fmt_param(v)}" for k, v in sorted(b.params.items()))
        text = b.kind.value if not params else f"{b.kind.value}\n{params}"
        if b.label:
            text += f"\n{b.label}"
        attrs = {"peripheries": "2"} if b.id == graph.output else {}
        dot.node(f"b{b.id}", text, **attrs)
    for c in graph.connections:
        dot.edge(f"b{c.src}", f"b{c.dst}", label=str(c.port))
    return dot.source


def _fmt_param(value: Any) -> str:
    if isinstance(value, float):
        return f"{value:g}"
    return str(value)


def graph_stats(graph: BlockGraph) -> Tuple[int, int]:
    return len(graph.blocks), len(graph.connections)
