import json

import numpy as np
import pytest

from src.cli import EXIT_OK, EXIT_USAGE, EXIT_VIOLATION, main, stl_spec
from src.core.compiler import BlockGraph
from src.core.parser import pretty_spec
from src.core.trace import Trace
from src.utils.trace_io import read_trace_csv, write_trace_csv

from .conftest import SIMPLE_SPEC


@pytest.fixture
def simple_spec(spec_file):
    return spec_file(SIMPLE_SPEC)


@pytest.fixture
def trace_file(tmp_path):
    def write(values, name="trace.csv"):
        path = tmp_path / name
        times = np.arange(0.0, len(values))
        write_trace_csv(path, Trace(times, {"f": np.asarray(values, dtype=float)}))
        return str(path)
    return write


class TestValidate:
    def test_ok(self, simple_spec, capsys):
        assert main(["validate", simple_spec]) == EXIT_OK
        assert "A: ok, needs T=[0, 10]" in capsys.readouterr().out

    def test_condition2(self, spec_file, capsys):
        path = spec_file("signal f;\nreq B: forall t in [0, 1]: forall u in [0, 1]: f(t) - f(u) < 1;\n")
        assert main(["validate", path]) == EXIT_VIOLATION
        err = capsys.readouterr().err
        assert "condition 2" in err
        assert "offending sub-formula" in err

    def test_domain_too_short(self, spec_file, capsys):
        path = spec_file("signal f;\ndomain 5;\nreq A: forall t in [0, 5]: f(t + 2) < 1;\n")
        assert main(["validate", path]) == EXIT_VIOLATION
        assert "declared domain ends at 5" in capsys.readouterr().err

    def test_syntax_error(self, spec_file):
        assert main(["validate", spec_file("signal f;\nreq A: forall t f(t) < 1;\n")]) == EXIT_VIOLATION

    def test_missing_file(self, tmp_path):
        assert main(["validate", str(tmp_path / "nope.rfol")]) == EXIT_USAGE

    def test_bad_usage(self):
        assert main(["frobnicate"]) == EXIT_USAGE
        assert main([]) == EXIT_USAGE


class TestShiftAndCompile:
    def test_shift(self, spec_file, capsys):
        path = spec_file("signal f;\nreq R5: forall t in [0, 2500): abs(f(t) - f(t + 2)) <= 0.5;\n")
        assert main(["shift", path]) == EXIT_OK
        out = capsys.readouterr().out
        assert "shifted:  forall t in [2, 2502): " in out
        assert "f(t - 2) - f(t)" in out
        assert "t: d_t=2 d_u=0" in out
        assert "domain T=[0, 2502]" in out

    def test_unknown_requirement(self, simple_spec):
        assert main(["shift", simple_spec, "--req", "Z"]) == EXIT_USAGE

    def test_compile_outputs(self, simple_spec, tmp_path, capsys):
        dot, js = tmp_path / "a.dot", tmp_path / "a.json"
        assert main(["compile", simple_spec, "--dot", str(dot), "--json", str(js), "--stats"]) == EXIT_OK
        line = capsys.readouterr().out.strip()
        assert line.startswith("A: blocks=8 connections=8 formula_size=")
        assert dot.read_text(encoding="utf-8").startswith("digraph")
        graph = BlockGraph.from_json(js.read_text(encoding="utf-8"))
        assert graph.requirement == "A"

    def test_compile_many_requirements_gets_one_file_each(self, attitude_spec, spec_file, tmp_path):
        path = spec_file(pretty_spec(attitude_spec))
        assert main(["compile", path, "--req", "R1", "--req", "R5", "--json", str(tmp_path / "g.json")]) == EXIT_OK
        assert (tmp_path / "g_R1.json").exists() and (tmp_path / "g_R5.json").exists()


class TestMonitor:
    def test_pass(self, simple_spec, trace_file, capsys):
        assert main(["monitor", simple_spec, trace_file([0.0] * 11), "--no-log"]) == EXIT_OK
        assert "A: finished fitness=0.6" in capsys.readouterr().out

    def test_fail_stops(self, simple_spec, trace_file, tmp_path, capsys):
        values = [0.0] * 11
        values[3] = 5.0
        code = main(["monitor", simple_spec, trace_file(values), "--log-dir", str(tmp_path / "log")])
        assert code == EXIT_VIOLATION
        assert "stop_time=3" in capsys.readouterr().out
        events = list((tmp_path / "log").glob("*_events.log"))
        assert len(events) == 1
        entry = json.loads(events[0].read_text(encoding="utf-8").splitlines()[0])
        assert entry["kind"] == "stopped"

    def test_no_stop_finishes_negative(self, simple_spec, trace_file, capsys):
        values = [0.0] * 11
        values[3] = 5.0
        assert main(["monitor", simple_spec, trace_file(values), "--no-stop", "--no-log"]) == EXIT_VIOLATION
        assert "A: finished" in capsys.readouterr().out

    def test_json_and_series(self, simple_spec, trace_file, tmp_path):
        out, series = tmp_path / "r.json", tmp_path / "s.csv"
        code = main([
            "monitor", simple_spec, trace_file([0.0] * 11), "--no-log", "--timing",
            "--json", str(out), "--series", str(series),
        ])
        assert code == EXIT_OK
        payload = json.loads(out.read_text(encoding="utf-8"))
        assert payload["schema_version"] == 1
        rec = payload["results"][0]
        assert rec["verdict"] == "finished" and rec["steps_executed"] == 11
        assert "wall_time" in rec and "stop_time" not in rec
        lines = series.read_text(encoding="utf-8").splitlines()
        assert lines[0] == "time,fitness" and len(lines) == 12

    def test_bundle(self, simple_spec, trace_file, capsys):
        paths = [trace_file([0.0] * 5 + [p] + [0.0] * 5, f"t{i}.csv") for i, p in enumerate([0.0, 1.0, 0.5])]
        assert main(["monitor", simple_spec, *paths, "--no-log", "--workers", "1"]) == EXIT_OK
        out = capsys.readouterr().out
        assert "steps=33" in out

    def test_compiled_graph(self, simple_spec, trace_file, tmp_path):
        js = tmp_path / "a.json"
        main(["compile", simple_spec, "--json", str(js)])
        assert main(["monitor", str(js), trace_file([0.0] * 11), "--no-log"]) == EXIT_OK

    def test_short_trace(self, simple_spec, trace_file, capsys):
        assert main(["monitor", simple_spec, trace_file([0.0] * 5), "--no-log"]) == EXIT_USAGE
        assert "domain end" in capsys.readouterr().err

    def test_bad_csv(self, simple_spec, tmp_path, capsys):
        path = tmp_path / "bad.csv"
        path.write_text("time,f\n0,0\n1,abc\n", encoding="utf-8")
        assert main(["monitor", simple_spec, str(path), "--no-log"]) == EXIT_USAGE
        assert "line 3" in capsys.readouterr().err


class TestCompare:
    def test_agree(self, spec_file, trace_file, tmp_path, capsys):
        path = spec_file("signal f;\nreq A: forall t in [0, 8]: (f(t) > 0 or (exists u in [t, t + 2]: f(u) > 1));\n")
        tr = trace_file([1.0, 0.0, 2.0, 0.0, 0.0, 1.5, 0.5, 0.0, 3.0, 0.2, 0.0])
        assert main(["compare", path, tr, "--log-dir", str(tmp_path)]) == EXIT_OK
        assert "ok" in capsys.readouterr().out

    def test_non_uniform_grid(self, spec_file, tmp_path, capsys):
        path = spec_file("signal f;\nsignal g;\nreq A: forall t in [1, 10]: f(t) >= 0;\n"
                         "req B: forall t in [0, 5]: exists t1 in [t, t + 1]: g(t) > 0;\n")
        tr = tmp_path / "rates.csv"
        tr.write_text("time,f,g\n0,-5,1\n0.7,-4,\n3.3,2,\n10,2,1\n", encoding="utf-8")
        assert main(["compare", path, str(tr), "--no-log"]) == EXIT_OK
        lines = {line.split(":")[0]: line for line in capsys.readouterr().out.splitlines() if ": offline=" in line}
        offline = float(lines["A"].split("offline=")[1].split()[0])
        assert offline == pytest.approx(-43 / 56) and lines["A"].endswith("ok")
        assert lines["B"].endswith("ok")


class TestStl2Rfol:
    def test_translation(self, tmp_path, capsys):
        stl = tmp_path / "req.stl"
        stl.write_text("A: G[0, 5] F[0, 2] x > 1\nB: y < 0 U[1, 3] x > 0\n", encoding="utf-8")
        assert main(["stl2rfol", str(stl)]) == EXIT_OK
        out = capsys.readouterr().out
        assert "signal x;" in out and "signal y;" in out
        assert "req A: forall t0 in [0, 5]: exists t1 in [t0, t0 + 2]: x(t1) > 1;" in out

    def test_domain_covers_every_requirement(self):
        spec = stl_spec("G[0, 5] F[0, 2] x > 1\nF[0, 10] x > 0\n")
        assert spec.time_domain_end == 10.0

    def test_output_file_reparses(self, tmp_path):
        stl, out = tmp_path / "req.stl", tmp_path / "req.rfol"
        stl.write_text("x < 1 R[0, 3] y > 2\n", encoding="utf-8")
        assert main(["stl2rfol", str(stl), "-o", str(out)]) == EXIT_OK
        assert main(["validate", str(out)]) == EXIT_OK


class TestGen:
    def test_from_signals(self, tmp_path):
        out = tmp_path / "g.csv"
        assert main(["gen", "--signals", "a,b", "--steps", "21", "-o", str(out)]) == EXIT_OK
        tr = read_trace_csv(out)
        assert tr.signals == ["a", "b"] and len(tr) == 21 and tr.domain_end == 20.0

    def test_from_spec_covers_the_domain(self, simple_spec, tmp_path):
        out = tmp_path / "g.csv"
        assert main(["gen", "--spec", simple_spec, "--steps", "101", "-o", str(out)]) == EXIT_OK
        assert read_trace_csv(out).domain_end == 10.0

    def test_bundle_files(self, tmp_path):
        out = tmp_path / "g.csv"
        assert main(["gen", "--signals", "a", "--steps", "5", "--bundle", "3", "--sigma", "0.1", "-o", str(out)]) == EXIT_OK
        assert sorted(p.name for p in tmp_path.glob("g_*.csv")) == ["g_0.csv", "g_1.csv", "g_2.csv"]

    def test_needs_signals(self, tmp_path):
        assert main(["gen", "-o", str(tmp_path / "g.csv")]) == EXIT_USAGE
