from .ast_nodes import Spec, SignalDecl, Requirement, validate, formula_size
from .errors import RfolError
from .parser import parse_spec, parse_formula, pretty, pretty_spec
from .semantics import EvalConfig, diff, evaluate, holds, oracle_offline, well_defined
from .shifting import ShiftReport, shift, time_shift, interval_shift, horizon, is_online_checkable
from .stl import parse_stl, nnf, stl_to_rfol, eval_stl_boolean
from .compiler import BlockGraph, BlockKind, compile_graph, compile_requirement, export_dot, graph_stats
from .runtime import Monitor, StepInput, Running, Stopped, Finished, new_monitor, run_trace, run_bundle
from .trace import Trace

__all__ = [
    'Spec', 'SignalDecl', 'Requirement', 'validate', 'formula_size',
    'RfolError',
    'parse_spec', 'parse_formula', 'pretty', 'pretty_spec',
    'EvalConfig', 'diff', 'evaluate', 'holds', 'oracle_offline', 'well_defined',
    'ShiftReport', 'shift', 'time_shift', 'interval_shift', 'horizon', 'is_online_checkable',
    'parse_stl', 'nnf', 'stl_to_rfol', 'eval_stl_boolean',
    'BlockGraph', 'BlockKind', 'compile_graph', 'compile_requirement', 'export_dot', 'graph_stats',
    'Monitor', 'StepInput', 'Running', 'Stopped', 'Finished', 'new_monitor', 'run_trace', 'run_bundle',
    'Trace',
]
