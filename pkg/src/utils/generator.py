"""合成轨迹生成器：测试夹具与不确定性批次"""
from typing import List, Optional, Sequence

import numpy as np

from ..core.trace import Trace

PROFILES = ("ramp", "sine", "step", "noise")


def _base(profile: str, times: np.ndarray, index: int) -> np.ndarray:
    end = max(float(times[-1]), 1.0)
    if profile == "ramp":
        return times / end
    if profile == "sine":
        # 每个信号错开一点相位，周期为域长的四分之一
        return np.sin(2.0 * np.pi * 4.0 * times / end + 0.5 * index)
    if profile == "step":
        return np.where(times >= end / 2.0, 1.0, 0.0)
    if profile == "noise":
        return np.zeros_like(times)
    raise ValueError(f"unknown profile '{profile}', expected one of {PROFILES}")


def generate_trace(
    signals: Sequence[str],
    steps: int,
    domain_end: Optional[float] = None,
    profile: str = "ramp",
    sigma: float = 0.0,
    seed: int = 0,
    inject_failure_at: Optional[float] = None,
    failure_value: float = 10.0,
) -> Trace:
    """在 steps 个等距网格点上生成轨迹

    Args:
        signals: 信号名
        steps: 网格点数（至少 1）
        domain_end: 最后一个时刻；缺省为 steps − 1，即整数网格
        profile: ramp、sine、step 或 noise
        sigma: 叠加白噪声的标准差；0 表示无噪声
        seed: 噪声随机种子
        inject_failure_at: 从该比例处开始把所有信号置为 failure_value
        failure_value: 注入的故障值
    """
    if steps < 1:
        raise ValueError("steps must be at least 1")
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    end = float(steps - 1) if domain_end is None else float(domain_end)
    times = np.linspace(0.0, end, steps) if steps > 1 else np.zeros(1)
    rng = np.random.default_rng(seed)
    values = {}
    for i, name in enumerate(signals):
        column = _base(profile, times, i)
        if sigma > 0:
            column = column + rng.normal(0.0, sigma, size=steps)
        if inject_failure_at is not None:
            if not 0.0 <= inject_failure_at <= 1.0:
                raise ValueError("inject_failure_at must lie in [0, 1]")
            start = int(np.floor(inject_failure_at * steps))
            column = column.copy()
            column[start:] = failure_value
        values[name] = column
    return Trace(times, values)


def generate_bundle(k: int, signals: Sequence[str], steps: int, seed: int = 0, **kwargs) -> List[Trace]:
    """同一剖面的 k 条轨迹，噪声种子依次为 seed, seed+1, ..."""
    if k < 1:
        raise ValueError("bundle size must be at least 1")
    return [generate_trace(signals, steps, seed=seed + i, **kwargs) for i in range(k)]
