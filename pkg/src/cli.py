"""命令行：validate / shift / compile / monitor / compare / stl2rfol / gen

退出码：0 成功或通过，1 需求违反或不一致，2 用法或 I/O 错误。
"""
import argparse
import json
import sys
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

from .core.ast_nodes import And, Or, Pred, Quantifier, Requirement, SignalDecl, Spec, formula_size
from .core.compiler import BlockGraph, compile_graph, export_dot, graph_stats
from .core.errors import (
    NegativeIndexReachable,
    NonConstantBoundUnsupported,
    NotOnlineCheckable,
    RfolError,
    RfolSyntaxError,
    TraceFormatError,
    UndeclaredSignal,
    WellFormednessError,
)
from .core.parser import parse_spec, pretty, pretty_spec, pretty_term
from .core.runtime import Stopped, run_bundle, run_trace
from .core.semantics import EvalConfig, evaluate, reach, well_defined
from .core.shifting import shift
from .core.stl import parse_stl_file, stl_signals, stl_to_rfol
from .utils.config_loader import ConfigLoader
from .utils.generator import PROFILES, generate_bundle
from .utils.logger import Logger
from .utils.trace_io import read_bundle, write_series_csv, write_trace_csv

EXIT_OK = 0
EXIT_VIOLATION = 1
EXIT_USAGE = 2

RESULT_SCHEMA_VERSION = 1
COMPARE_TOLERANCE = 1e-9


@dataclass
class ResultRecord:
    requirement: str
    verdict: str
    fitness: float
    stop_time: Optional[float]
    steps_executed: int
    wall_time: float

    def to_dict(self, timing: bool = False) -> Dict[str, Any]:
        out: Dict[str, Any] = {
            "requirement": self.requirement,
            "verdict": self.verdict,
            "fitness": self.fitness,
            "steps_executed": self.steps_executed,
        }
        if self.stop_time is not None:
            out["stop_time"] = self.stop_time
        if timing:
            out["wall_time"] = self.wall_time
        return out


# ----------------------------------------------------------------- helpers

def _read_text(path: str) -> str:
    with open(path, 'r', encoding='utf-8') as f:
        return f.read()


def _load_spec(path: str) -> Spec:
    return parse_spec(_read_text(path))


def _select(spec: Spec, names: Optional[Sequence[str]]) -> List[Requirement]:
    if not names:
        return list(spec.requirements)
    selected = []
    for name in names:
        try:
            selected.append(spec.requirement(name))
        except KeyError:
            raise RfolError(f"no requirement named '{name}'") from None
    return selected


def _eval_config(config: ConfigLoader) -> EvalConfig:
    section = config.get_semantics_config()
    return EvalConfig(
        epsilon=float(section['epsilon']),
        interpolation=section['interpolation'],
        diff_mode=section['diff_mode'],
    )


def _logger(args, config: ConfigLoader) -> Optional[Logger]:
    if getattr(args, 'no_log', False):
        return None
    log_dir = getattr(args, 'log_dir', None) or config.get_logging_config()['log_dir']
    return Logger(log_dir)


def _per_requirement(path: str, name: str, many: bool) -> Path:
    p = Path(path)
    if not many:
        return p
    return p.with_name(f"{p.stem}_{name}{p.suffix}")


def _describe(node) -> str:
    if isinstance(node, (Pred, And, Or, Quantifier)):
        return pretty(node)
    return pretty_term(node)


def _fmt(x: float) -> str:
    return f"{x:.12g}"


def _compile(req: Requirement, spec: Spec, cfg: EvalConfig, config: ConfigLoader) -> BlockGraph:
    initial = float(config.get_monitor_config()['delay_initial_output'])
    return compile_graph(shift(req.formula), spec, cfg, requirement=req.name, initial_output=initial)


# ---------------------------------------------------------------- commands

def cmd_validate(args, config: ConfigLoader) -> int:
    try:
        spec = _load_spec(args.spec)
    except WellFormednessError as err:
        where = f" at {err.pos}" if err.pos else ""
        print(f"{args.spec}{where}: {err}", file=sys.stderr)
        print(f"  offending sub-formula: {_describe(err.subformula)}", file=sys.stderr)
        return EXIT_VIOLATION
    except (RfolSyntaxError, UndeclaredSignal) as err:
        print(f"{args.spec}: {err}", file=sys.stderr)
        return EXIT_VIOLATION

    status = EXIT_OK
    for req in spec.requirements:
        try:
            check = well_defined(req.formula, spec.time_domain_end or 0.0)
            required = shift(req.formula).required_domain_end
        except (NegativeIndexReachable, NotOnlineCheckable, NonConstantBoundUnsupported) as err:
            print(f"{req.name}: {err}", file=sys.stderr)
            status = EXIT_VIOLATION
            continue
        line = f"{req.name}: ok, needs T=[0, {_fmt(max(check.required_end, required))}]"
        if spec.time_domain_end is not None and required > spec.time_domain_end:
            print(f"{line}, but the declared domain ends at {_fmt(spec.time_domain_end)}", file=sys.stderr)
            status = EXIT_VIOLATION
        else:
            print(line)
    return status


def cmd_shift(args, config: ConfigLoader) -> int:
    spec = _load_spec(args.spec)
    for req in _select(spec, args.req):
        report = shift(req.formula)
        print(f"{req.name}:")
        print(f"  original: {pretty(report.original)}")
        print(f"  shifted:  {pretty(report.shifted)}")
        for var, s in sorted(report.shifts.items()):
            if s.total:
                print(f"  {var}: d_t={_fmt(s.d_t)} d_u={_fmt(s.d_u)}")
        print(f"  horizon d = {_fmt(report.horizon_d)}, domain T=[0, {_fmt(report.required_domain_end)}]")
    return EXIT_OK


def cmd_compile(args, config: ConfigLoader) -> int:
    spec = _load_spec(args.spec)
    cfg = _eval_config(config)
    reqs = _select(spec, args.req)
    many = len(reqs) > 1
    for req in reqs:
        start = time.perf_counter()
        graph = _compile(req, spec, cfg, config)
        elapsed = time.perf_counter() - start
        if args.dot:
            _per_requirement(args.dot, req.name, many).write_text(export_dot(graph), encoding='utf-8')
        if args.json:
            _per_requirement(args.json, req.name, many).write_text(graph.to_json(), encoding='utf-8')
        blocks, connections = graph_stats(graph)
        line = f"{req.name}: blocks={blocks} connections={connections}"
        if args.stats:
            line += f" formula_size={formula_size(req.formula)} compile_ms={elapsed * 1000:.1f}"
        print(line)
    return EXIT_OK


def _graphs_for(args, config: ConfigLoader, cfg: EvalConfig) -> List[BlockGraph]:
    if args.spec.endswith('.json'):
        return [BlockGraph.from_json(_read_text(args.spec))]
    spec = _load_spec(args.spec)
    return [_compile(req, spec, cfg, config) for req in _select(spec, args.req)]


def cmd_monitor(args, config: ConfigLoader) -> int:
    cfg = _eval_config(config)
    monitor_cfg = config.get_monitor_config()
    bundle_cfg = config.get_bundle_config()
    threshold = args.threshold if args.threshold is not None else float(monitor_cfg['threshold'])
    stop_enabled = not args.no_stop and bool(monitor_cfg['stop_enabled'])
    workers = args.workers or int(bundle_cfg['workers'])
    logger = _logger(args, config)

    graphs = _graphs_for(args, config, cfg)
    traces = read_bundle(args.traces, cfg.interpolation)
    many = len(graphs) > 1
    records: List[ResultRecord] = []
    for graph in graphs:
        start = time.perf_counter()
        if len(traces) == 1:
            run = run_trace(graph, traces[0], threshold, stop_enabled, record_series=bool(args.series))
            verdict, steps = run.verdict, run.steps
            if args.series:
                write_series_csv(_per_requirement(args.series, graph.requirement, many), run.series)
            if logger:
                logger.log(graph.requirement, {"verdict_event": {
                    "kind": verdict.kind, "fitness": verdict.e, "steps": steps,
                    "stop_time": getattr(verdict, 't', None),
                }})
        else:
            if args.series:
                print("--series is ignored for trace bundles", file=sys.stderr)
            result = run_bundle(graph, traces, threshold, stop_enabled, workers,
                                bool(bundle_cfg['stop_on_first_failure']), logger)
            verdict, steps = result.verdict, result.steps
        elapsed = time.perf_counter() - start
        stop_time = verdict.t if isinstance(verdict, Stopped) else None
        records.append(ResultRecord(graph.requirement, verdict.kind, verdict.e, stop_time, steps, elapsed))

    for rec in records:
        line = f"{rec.requirement}: {rec.verdict} fitness={_fmt(rec.fitness)} steps={rec.steps_executed}"
        if rec.stop_time is not None:
            line += f" stop_time={_fmt(rec.stop_time)}"
        if args.timing:
            line += f" wall_time={rec.wall_time:.3f}s"
        print(line)
    if args.json:
        payload = {
            "schema_version": RESULT_SCHEMA_VERSION,
            "results": [rec.to_dict(args.timing) for rec in records],
        }
        Path(args.json).write_text(json.dumps(payload, indent=2) + '\n', encoding='utf-8')

    failed = any(rec.verdict == Stopped.kind or rec.fitness < 0 for rec in records)
    return EXIT_VIOLATION if failed else EXIT_OK


def cmd_compare(args, config: ConfigLoader) -> int:
    spec = _load_spec(args.spec)
    cfg = _eval_config(config)
    logger = _logger(args, config)
    trace = read_bundle([args.trace], cfg.interpolation)[0]
    status = EXIT_OK
    for req in _select(spec, args.req):
        report = shift(req.formula)
        graph = compile_graph(report, spec, cfg, requirement=req.name)
        offline = evaluate(req.formula, trace, cfg)
        online = run_trace(graph, trace, threshold=-1.0, stop_enabled=False, record_series=False).verdict.e
        gap = abs(offline - online)
        ok = gap <= COMPARE_TOLERANCE
        print(f"{req.name}: offline={_fmt(offline)} online={_fmt(online)} diff={gap:.3g} {'ok' if ok else 'MISMATCH'}")
        if not ok:
            status = EXIT_VIOLATION
            if logger:
                logger.log(req.name, {"verdict_event": {
                    "kind": "mismatch", "fitness": online, "offline": offline, "diff": gap,
                }})
    return status


def stl_spec(text: str) -> Spec:
    """把 STL 需求文件翻译成 RFOL 规格；时间域取所有需求可达时刻的最大值"""
    items = parse_stl_file(text)
    if not items:
        raise RfolSyntaxError("no STL formulas found")
    names = sorted(set().union(*(stl_signals(phi) for _, phi in items)))
    reqs = []
    for name, phi in items:
        rfol = stl_to_rfol(phi)
        reqs.append(Requirement(name, rfol, pretty(rfol)))
    domain = max(max(reach(r.formula)[1], shift(r.formula).required_domain_end) for r in reqs)
    return Spec([SignalDecl(n) for n in names], domain, reqs)


def cmd_stl2rfol(args, config: ConfigLoader) -> int:
    text = pretty_spec(stl_spec(_read_text(args.stl)))
    if args.output:
        Path(args.output).write_text(text, encoding='utf-8')
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_gen(args, config: ConfigLoader) -> int:
    gen_cfg = config.get_generator_config()
    domain = args.domain
    if args.spec:
        spec = _load_spec(args.spec)
        signals = spec.scalar_signals()
        if domain is None:
            ends = [shift(r.formula).required_domain_end for r in spec.requirements]
            domain = max(ends + [spec.time_domain_end or 0.0])
    elif args.signals:
        signals = [s.strip() for s in args.signals.split(',') if s.strip()]
    else:
        print("gen needs --spec or --signals", file=sys.stderr)
        return EXIT_USAGE

    steps = args.steps or int(gen_cfg['steps'])
    traces = generate_bundle(
        args.bundle, signals, steps,
        seed=args.seed if args.seed is not None else int(gen_cfg['seed']),
        domain_end=domain,
        profile=args.profile or gen_cfg['profile'],
        sigma=args.sigma if args.sigma is not None else float(gen_cfg['sigma']),
        inject_failure_at=args.inject_failure_at,
        failure_value=args.failure_value,
    )
    out = Path(args.output)
    for i, trace in enumerate(traces):
        path = out if args.bundle == 1 else out.with_name(f"{out.stem}_{i}{out.suffix}")
        write_trace_csv(path, trace)
        print(f"wrote {path} ({len(trace)} samples, T=[0, {_fmt(trace.domain_end)}])")
    return EXIT_OK


# ------------------------------------------------------------------ parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='rfol-oracle', description='RFOL requirement compiler and online monitor')
    parser.add_argument('--config', help='YAML config file (default config/config.yaml or $RFOL_CONFIG)')
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('validate', help='parse and check well-formedness of a spec')
    p.add_argument('spec')
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser('shift', help='print the online-checkable form of each requirement')
    p.add_argument('spec')
    p.add_argument('--req', action='append', help='requirement name (repeatable)')
    p.set_defaults(func=cmd_shift)

    p = sub.add_parser('compile', help='compile requirements to block graphs')
    p.add_argument('spec')
    p.add_argument('--req', action='append')
    p.add_argument('--dot', help='write Graphviz DOT here')
    p.add_argument('--json', help='write the graph JSON here')
    p.add_argument('--stats', action='store_true', help='print formula size and compile time')
    p.set_defaults(func=cmd_compile)

    p = sub.add_parser('monitor', help='run online monitors over trace CSV files')
    p.add_argument('spec', help='spec file, or a compiled graph .json')
    p.add_argument('traces', nargs='+', help='several files form an uncertainty bundle')
    p.add_argument('--req', action='append')
    p.add_argument('--threshold', type=float)
    p.add_argument('--no-stop', action='store_true', help='never stop early')
    p.add_argument('--series', help='write the fitness series CSV here')
    p.add_argument('--json', help='write the result records here')
    p.add_argument('--timing', action='store_true', help='report wall time')
    p.add_argument('--workers', type=int, help='parallel workers for bundles')
    p.add_argument('--log-dir')
    p.add_argument('--no-log', action='store_true')
    p.set_defaults(func=cmd_monitor)

    p = sub.add_parser('compare', help='compare the offline and online fitness')
    p.add_argument('spec')
    p.add_argument('trace')
    p.add_argument('--req', action='append')
    p.add_argument('--log-dir')
    p.add_argument('--no-log', action='store_true')
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser('stl2rfol', help='translate bounded STL requirements to an RFOL spec')
    p.add_argument('stl')
    p.add_argument('-o', '--output')
    p.set_defaults(func=cmd_stl2rfol)

    p = sub.add_parser('gen', help='generate synthetic trace CSV files')
    p.add_argument('--spec', help='take signal names from this spec')
    p.add_argument('--signals', help='comma-separated signal names')
    p.add_argument('--steps', type=int)
    p.add_argument('--domain', type=float, help='last timestamp (default: steps - 1)')
    p.add_argument('--profile', choices=PROFILES)
    p.add_argument('--sigma', type=float, help='white-noise standard deviation')
    p.add_argument('--seed', type=int)
    p.add_argument('--inject-failure-at', type=float, help='fraction of the trace where the failure starts')
    p.add_argument('--failure-value', type=float, default=10.0)
    p.add_argument('--bundle', type=int, default=1, help='number of traces with independent noise')
    p.add_argument('-o', '--output', required=True)
    p.set_defaults(func=cmd_gen)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        config = ConfigLoader(args.config)
        return args.func(args, config)
    except (OSError, TraceFormatError, RfolError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
