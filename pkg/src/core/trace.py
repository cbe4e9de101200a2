"""信号轨迹：所有信号共享同一严格递增的时间网格，𝕋=[0,b]"""
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .errors import TraceFormatError


INTERPOLATIONS = ("linear", "hold-previous")


@dataclass
class Trace:
    times: np.ndarray
    values: Dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=np.float64)
        self.values = {name: np.asarray(v, dtype=np.float64) for name, v in self.values.items()}
        check_trace(self)

    @property
    def domain_end(self) -> float:
        return float(self.times[-1])

    @property
    def signals(self) -> List[str]:
        return list(self.values)

    def __len__(self) -> int:
        return len(self.times)

    def rows(self) -> Iterable[Tuple[float, Dict[str, float]]]:
        """逐步输出 (t, {信号: 值})，供在线监控器使用"""
        names = list(self.values)
        columns = [self.values[name].tolist() for name in names]
        for i, t in enumerate(self.times.tolist()):
            yield t, {name: col[i] for name, col in zip(names, columns)}


def check_trace(trace: Trace) -> None:
    times = trace.times
    if times.ndim != 1 or len(times) == 0:
        raise TraceFormatError("trace has no samples")
    if times[0] != 0.0:
        raise TraceFormatError(f"first timestamp must be 0, got {times[0]!r}")
    if not np.all(np.isfinite(times)):
        raise TraceFormatError("timestamps must be finite")
    if len(times) > 1 and not np.all(np.diff(times) > 0):
        bad = int(np.argmin(np.diff(times) > 0)) + 1
        raise TraceFormatError(f"timestamps must be strictly increasing (sample {bad})")
    for name, column in trace.values.items():
        if column.shape != times.shape:
            raise TraceFormatError(
                f"signal '{name}' has {column.size} samples, expected {times.size}"
            )
        if not np.all(np.isfinite(column)):
            raise TraceFormatError(f"signal '{name}' contains NaN or infinite values")


def interpolate(times: np.ndarray, column: np.ndarray, at, interpolation: str = "linear"):
    """在 at 处取值；at 可以是标量或数组，调用方负责保证 at 落在 [0,b] 内"""
    if interpolation == "linear":
        return np.interp(at, times, column)
    if interpolation == "hold-previous":
        idx = np.searchsorted(times, at, side="right") - 1
        return column[np.clip(idx, 0, len(times) - 1)]
    raise ValueError(f"unknown interpolation '{interpolation}'")


def resample(
    samples: Mapping[str, Sequence[Tuple[float, float]]],
    interpolation: str = "linear",
    grid: Optional[np.ndarray] = None,
) -> Trace:
    """把各自采样的信号重采样到时间戳并集上

    Args:
        samples: 信号名 → [(t, v), ...]，各信号时间戳严格递增且从 0 开始
        interpolation: linear 或 hold-previous
        grid: 指定目标网格；缺省为所有时间戳的并集

    Raises:
        TraceFormatError: 时间戳不合法，或信号覆盖不到目标网格的终点
    """
    per_signal: Dict[str, Tuple[np.ndarray, np.ndarray]] = {}
    for name, pts in samples.items():
        arr = np.asarray(pts, dtype=np.float64).reshape(-1, 2)
        if len(arr) == 0:
            raise TraceFormatError(f"signal '{name}' has no samples")
        t, v = arr[:, 0], arr[:, 1]
        if t[0] != 0.0:
            raise TraceFormatError(f"signal '{name}' must start at t=0")
        if len(t) > 1 and not np.all(np.diff(t) > 0):
            raise TraceFormatError(f"signal '{name}' timestamps must be strictly increasing")
        per_signal[name] = (t, v)

    if grid is None:
        if not per_signal:
            raise TraceFormatError("no signals to resample")
        grid = np.unique(np.concatenate([t for t, _ in per_signal.values()]))
    grid = np.asarray(grid, dtype=np.float64)

    values: Dict[str, np.ndarray] = {}
    for name, (t, v) in per_signal.items():
        if t[-1] < grid[-1]:
            raise TraceFormatError(
                f"signal '{name}' ends at {t[-1]!r} before the domain end {grid[-1]!r}"
            )
        values[name] = interpolate(t, v, grid, interpolation)
    return Trace(grid, values)
