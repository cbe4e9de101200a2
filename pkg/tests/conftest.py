import numpy as np
import pytest

from src.core.parser import parse_spec
from src.core.trace import Trace

# 姿态控制需求，R4 的区间上界取 b=2500
ATTITUDE_SPEC = """\
# attitude control requirements
signal w[3] "rad/s";
signal trq[3] "Nm";
signal q_est[4], q_real[4], q_target[4];
signal sm;
domain 4500;
req R1: forall t in [0, 2500): ||w(t)|| < 1.5;
req R2: forall t in [0, 2500): ||q_est(t)|| = 1;
req R3: forall t in [0, 2500): ||trq(t)|| <= 0.015;
req R4: forall t in [2000, 2500): ||q_real(t) - q_target(t)|| <= 2;
req R5: forall t in [0, 2500): ||q_target(t) - q_target(t + 2)|| <= 2 * sin(0.25);
req R6: forall t in [0, 2500): (sm(t) = 0 and (forall t1 in (t, t + 1]: sm(t1) = 1)) -> ||q_real(t + 2000) - q_est(t + 2000)|| <= 0.02;
"""

SIMPLE_SPEC = """\
signal f;
domain 10;
req A: forall t in [0, 10]: f(t) < 1.5;
"""


def attitude_trace(end: float = 4500.0) -> Trace:
    """所有需求都满足的轨迹：角速度和力矩为 0，三个四元数都是单位四元数"""
    times = np.arange(0.0, end + 1.0)
    n = len(times)
    values = {}
    for name, size in (("w", 3), ("trq", 3)):
        for i in range(size):
            values[f"{name}[{i}]"] = np.zeros(n)
    for name in ("q_est", "q_real", "q_target"):
        for i in range(4):
            values[f"{name}[{i}]"] = np.full(n, 1.0 if i == 0 else 0.0)
    values["sm"] = np.zeros(n)
    return Trace(times, values)


def ramp_trace(end: int, **columns) -> Trace:
    times = np.arange(0.0, end + 1.0)
    return Trace(times, {name: np.asarray(col, dtype=np.float64) for name, col in columns.items()})


@pytest.fixture(scope="session")
def attitude_spec():
    return parse_spec(ATTITUDE_SPEC)


@pytest.fixture
def spec_file(tmp_path):
    def write(text: str, name: str = "spec.rfol"):
        path = tmp_path / name
        path.write_text(text, encoding="utf-8")
        return str(path)
    return write


@pytest.fixture(autouse=True)
def isolated_env(monkeypatch):
    # 不让开发机上的 .env 或环境变量影响测试
    monkeypatch.delenv("RFOL_CONFIG", raising=False)
    monkeypatch.delenv("RFOL_EPSILON", raising=False)
