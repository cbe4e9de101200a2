import numpy as np
import pytest

from src.core.ast_nodes import SignalDecl, Spec
from src.core.compiler import compile_graph, compile_requirement
from src.core.errors import DomainIncomplete, MissingSignal, NonMonotonicTime, UndefinedFormula
from src.core.parser import parse_formula
from src.core.runtime import (
    Finished,
    Monitor,
    Running,
    StepInput,
    Stopped,
    lerp,
    new_monitor,
    run_bundle,
    run_trace,
)
from src.core.semantics import evaluate, oracle_offline
from src.core.shifting import shift
from src.core.trace import Trace

from .conftest import attitude_trace, ramp_trace

SPEC = Spec([SignalDecl("f"), SignalDecl("g")])
R1_LIKE = "forall t in [0, 10]: f(t) < 1.5"


def graph_of(text: str):
    return compile_graph(shift(parse_formula(text, ["f", "g"])), SPEC)


class RecordingLogger:
    def __init__(self):
        self.events = []

    def log(self, name, data):
        self.events.append((name, data))


class TestLerp:
    def test_between_samples(self):
        assert lerp(0.0, 0.0, 2.0, 4.0, 1.0) == 2.0

    def test_endpoints_are_exact(self):
        assert lerp(0.1, 0.3, 0.7, 0.9, 0.1) == 0.3
        assert lerp(0.1, 0.3, 0.7, 0.9, 0.7) == 0.9


class TestMonitor:
    def test_running_then_stopped(self):
        monitor = new_monitor(graph_of(R1_LIKE))
        first = monitor.step(StepInput(0.0, {"f": 0.0}))
        assert first == Running(pytest.approx(0.6))
        second = monitor.step(StepInput(1.0, {"f": 3.0}))
        assert isinstance(second, Stopped)
        assert second.t == 1.0 and second.e == pytest.approx(-0.6)
        # 停止之后保持不变
        assert monitor.step(StepInput(2.0, {"f": 0.0})) is second
        assert monitor.finish() is second

    def test_no_stop_before_horizon(self):
        monitor = new_monitor(graph_of("exists t in [0, 10]: f(t) > 0"))
        for t in range(8):
            assert isinstance(monitor.step(StepInput(float(t), {"f": 0.0})), Running)
        for t in range(8, 11):
            monitor.step(StepInput(float(t), {"f": 1.0}))
        assert monitor.finish() == Finished(0.5)

    def test_finished(self):
        monitor = new_monitor(graph_of(R1_LIKE))
        for t in range(11):
            monitor.step(StepInput(float(t), {"f": 0.0}))
        assert monitor.finish() == Finished(pytest.approx(0.6))

    def test_stop_disabled_keeps_running(self):
        monitor = new_monitor(graph_of(R1_LIKE), stop_enabled=False)
        for t in range(11):
            verdict = monitor.step(StepInput(float(t), {"f": 3.0 if t == 4 else 0.0}))
            assert isinstance(verdict, Running)
        assert monitor.finish().e == pytest.approx(-0.6)

    def test_series_is_recorded(self):
        monitor = new_monitor(graph_of(R1_LIKE), record_series=True)
        for t in range(3):
            monitor.step(StepInput(float(t), {"f": float(t)}))
        assert [t for t, _ in monitor.series] == [0.0, 1.0, 2.0]

    def test_non_monotonic_time(self):
        monitor = new_monitor(graph_of(R1_LIKE))
        monitor.step(StepInput(0.0, {"f": 0.0}))
        with pytest.raises(NonMonotonicTime):
            monitor.step(StepInput(0.0, {"f": 0.0}))

    def test_missing_signal(self):
        monitor = new_monitor(graph_of(R1_LIKE))
        with pytest.raises(MissingSignal):
            monitor.step(StepInput(0.0, {"g": 0.0}))

    def test_domain_incomplete(self):
        monitor = new_monitor(graph_of(R1_LIKE))
        for t in range(5):
            monitor.step(StepInput(float(t), {"f": 0.0}))
        with pytest.raises(DomainIncomplete):
            monitor.finish()
        with pytest.raises(DomainIncomplete):
            new_monitor(graph_of(R1_LIKE)).finish()

    def test_undefined_body(self):
        monitor = new_monitor(graph_of("forall t in [0, 2]: sqrt(f(t)) < 1"))
        with pytest.raises(UndefinedFormula):
            monitor.step(StepInput(0.0, {"f": -1.0}))

    @pytest.mark.parametrize("threshold", [-1.5, 1.01])
    def test_threshold_range(self, threshold):
        with pytest.raises(ValueError):
            Monitor(graph_of(R1_LIKE), threshold)


class TestRunTrace:
    @pytest.mark.parametrize("text, columns", [
        ("forall t in [0, 20): abs(f(t) - f(t + 2)) <= 0.5",
         {"f": [0, 0.2, 0.4, 0.5, 0.9, 1.0, 1.0, 1.2, 1.9, 2.0] * 2 + [2.0, 2.0, 2.0]}),
        ("forall t in [0, 5]: (f(t) = 0 or (exists u in (t, t + 1]: g(u) > 0))",
         {"f": [0, 1, 0, 0, 1, 0, 0], "g": [0, 0, 1, 0, 0, 1, 1]}),
        ("forall t in [3, 6]: f(t) - f(3) < 1",
         {"f": [5, 4, 3, 2, 2.5, 2.9, 3.5]}),
        ("exists t in [0, 2]: f(t + 3) > 1",
         {"f": [0, 0, 0, 0, 2, 0]}),
    ])
    def test_matches_offline_value_of_shifted_formula(self, text, columns):
        report = shift(parse_formula(text, ["f", "g"]))
        graph = compile_graph(report, SPEC)
        tr = ramp_trace(len(next(iter(columns.values()))) - 1, **columns)
        result = run_trace(graph, tr, threshold=-1.0, stop_enabled=False)
        assert isinstance(result.verdict, Finished)
        assert result.verdict.e == pytest.approx(evaluate(report.shifted, tr), abs=1e-9)
        assert result.verdict.e == pytest.approx(evaluate(report.original, tr), abs=1e-9)
        assert result.steps == len(tr)

    def test_stops_early(self):
        tr = ramp_trace(10, f=[0, 0, 5, 0, 0, 0, 0, 0, 0, 0, 0])
        result = run_trace(graph_of(R1_LIKE), tr)
        assert isinstance(result.verdict, Stopped)
        assert result.verdict.t == 2.0
        assert result.steps == 3

    def test_missing_column(self):
        with pytest.raises(MissingSignal):
            run_trace(graph_of(R1_LIKE), ramp_trace(10, g=[0] * 11))

    def test_attitude_requirements_pass(self, attitude_spec):
        tr = attitude_trace()
        for req in attitude_spec.requirements:
            result = run_trace(compile_requirement(attitude_spec, req.name), tr, record_series=False)
            assert isinstance(result.verdict, Finished), req.name
            assert result.verdict.e >= 0


class TestBundle:
    def traces(self, peaks):
        return [ramp_trace(10, f=[0.0] * 5 + [p] + [0.0] * 5) for p in peaks]

    def test_fitness_is_the_minimum(self):
        traces = self.traces([0.0, 0.5, 1.0, 1.2, 0.3])
        result = run_bundle(graph_of(R1_LIKE), traces, threshold=-1.0, stop_enabled=False)
        phi = parse_formula(R1_LIKE, ["f"])
        assert isinstance(result.verdict, Finished)
        assert result.fitness == pytest.approx(oracle_offline(phi, traces), abs=1e-9)
        assert result.steps == 5 * 11

    def test_first_failure_stops_the_bundle(self):
        traces = self.traces([0.0, 2.0, 0.0, 0.0])
        result = run_bundle(graph_of(R1_LIKE), traces)
        assert isinstance(result.verdict, Stopped)
        assert result.verdict.t == 5.0
        assert result.runs[2] is None and result.runs[3] is None

    def test_keep_going_after_failure(self):
        traces = self.traces([0.0, 2.0, 0.0])
        result = run_bundle(graph_of(R1_LIKE), traces, stop_on_first_failure=False)
        assert isinstance(result.verdict, Stopped)
        assert all(run is not None for run in result.runs)

    def test_parallel_matches_sequential(self):
        traces = self.traces([0.0, 0.5, 1.0, 1.2, 0.3])
        graph = graph_of(R1_LIKE)
        seq = run_bundle(graph, traces, stop_enabled=False)
        par = run_bundle(graph, traces, stop_enabled=False, workers=2)
        assert par.fitness == seq.fitness
        assert [r.verdict for r in par.runs] == [r.verdict for r in seq.runs]

    def test_parallel_failure_is_reported(self):
        traces = self.traces([0.0, 2.0, 0.0, 0.0])
        result = run_bundle(graph_of(R1_LIKE), traces, workers=2)
        assert isinstance(result.verdict, Stopped)
        assert result.fitness < 0

    def test_parallel_error_is_raised(self):
        traces = [ramp_trace(10, f=[0.0] * 11), ramp_trace(10, g=[0.0] * 11)]
        with pytest.raises(MissingSignal):
            run_bundle(graph_of(R1_LIKE), traces, workers=2)

    def test_logger_gets_one_event_per_run(self):
        logger = RecordingLogger()
        run_bundle(graph_of(R1_LIKE), self.traces([0.0, 0.5]), logger=logger)
        assert len(logger.events) == 3
        assert logger.events[-1][1]["verdict_event"]["kind"] == "finished"

    def test_bad_bundles(self):
        with pytest.raises(ValueError):
            run_bundle(graph_of(R1_LIKE), [])
        with pytest.raises(ValueError):
            run_bundle(graph_of(R1_LIKE), [ramp_trace(10, f=[0] * 11), ramp_trace(11, f=[0] * 12)])


class TestGridEndpoints:
    """非均匀网格：区间端点不落在采样上时在端点处插值，结果与离线求值一致"""

    @pytest.mark.parametrize("text, times, f", [
        ("forall t in [1, 10]: f(t) >= 0", [0, 0.7, 3.3, 10], [-5, -4, 2, 2]),
        ("exists t in [0, 5]: exists t1 in (t, t + 0.5): f(t) > 0",
         [0, 1, 2, 2.25, 3, 4, 5, 6], [1, 1, 1, 1, 1, 1, 1, 1]),
        ("forall t in [0, 2]: exists u in [t + 0.5, t + 1]: f(u) > 0",
         [0, 0.5, 1.25, 2, 2.5, 3], [-1, 2, -3, 1, 0.5, 2]),
        ("forall t in [0.5, 3]: (f(t) < 2 or (forall u in (t - 0.25, t + 0.75]: f(u) > -1))",
         [0, 1, 1.5, 3, 4], [3, 0, -2, 3, 1]),
        ("forall t in [1, 4]: f(t - 1) - f(2.5) < 3", [0, 2, 3, 4, 6], [0, 4, -1, 2, 1]),
    ])
    def test_matches_offline_value_of_original_formula(self, text, times, f):
        phi = parse_formula(text, ["f"])
        tr = Trace(np.array(times, dtype=np.float64), {"f": np.array(f, dtype=np.float64)})
        result = run_trace(compile_graph(shift(phi), SPEC), tr, threshold=-1.0, stop_enabled=False)
        assert isinstance(result.verdict, Finished)
        assert result.verdict.e == pytest.approx(evaluate(phi, tr), abs=1e-9)

    def test_bound_between_samples(self):
        tr = Trace(np.array([0.0, 0.7, 3.3, 10.0]), {"f": np.array([-5.0, -4.0, 2.0, 2.0])})
        result = run_trace(graph_of("forall t in [1, 10]: f(t) >= 0"), tr, threshold=-1.0, stop_enabled=False)
        # f(1) = -43/13，端点 1 处插值
        assert result.verdict.e == pytest.approx(-43 / 56, abs=1e-9)
        assert result.steps == 5

    def test_empty_candidate_set_gives_neutral(self):
        phi = "exists t in [0, 5]: exists t1 in (t, t + 0.5): f(t) > 0"
        sparse = ramp_trace(6, f=[1.0] * 7)
        assert run_trace(graph_of(phi), sparse, threshold=-1.0, stop_enabled=False).verdict.e == -1.0
        dense = Trace(np.array([0, 1, 2, 2.25, 3, 4, 5, 6.0]), {"f": np.ones(8)})
        assert run_trace(graph_of(phi), dense, threshold=-1.0, stop_enabled=False).verdict.e == 0.5

    def test_body_on_outer_variable(self):
        phi = parse_formula("forall t in [0, 5]: exists t1 in [t, t + 1]: f(t) > 0", ["f"])
        tr = ramp_trace(6, f=[1.0] * 7)
        result = run_trace(compile_graph(shift(phi), SPEC), tr, threshold=-1.0, stop_enabled=False)
        assert result.verdict == Finished(0.5)
        assert evaluate(phi, tr) == 0.5

    def test_backward_window_waits_for_lookahead(self):
        monitor = new_monitor(graph_of("forall t in [3, 5]: exists u in [t - 3, t - 1]: f(u) > 0"))
        assert monitor.schedule.lookahead == 3.0
        for t in range(3):
            monitor.step(StepInput(float(t), {"f": 1.0}))
        assert monitor.steps == 0
        monitor.step(StepInput(3.0, {"f": 1.0}))
        assert monitor.steps == 1

    def test_closed_predicate_without_clock(self):
        result = run_trace(graph_of("1 < 2"), ramp_trace(2, f=[0.0, 0.0, 0.0]))
        assert result.verdict == Finished(0.5)

    def test_series_is_off_by_default(self):
        tr = ramp_trace(10, f=[0.0] * 11)
        assert run_trace(graph_of(R1_LIKE), tr).series == []
        recorded = run_trace(graph_of(R1_LIKE), tr, record_series=True).series
        assert [t for t, _ in recorded] == [float(t) for t in range(11)]
