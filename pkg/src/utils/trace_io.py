"""轨迹 CSV：表头 time,<信号1>,<信号2>,...，时间严格递增且首行为 0

不同采样率的信号可以写在同一个文件里，没有采样的单元格留空。
"""
import csv
from pathlib import Path
from typing import Dict, Iterable, List, Sequence, Tuple, Union

import numpy as np

from ..core.errors import TraceFormatError
from ..core.trace import Trace, resample

PathLike = Union[str, Path]


def _number(text: str, line: int, path: str, column: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise TraceFormatError(f"column '{column}' is not a number: {text!r}", line, path) from None
    if not np.isfinite(value):
        raise TraceFormatError(f"column '{column}' is not finite: {text!r}", line, path)
    return value


def read_trace_csv(path: PathLike, interpolation: str = "linear") -> Trace:
    """读取轨迹；空单元格表示该信号在这一行没有采样

    各信号按自己的采样点重采样到所有行的时间网格上，首行与末行必须每列都有值。

    Raises:
        FileNotFoundError: 文件不存在
        TraceFormatError: 表头、列数、数值或时间戳不合法（带行号）
    """
    path = str(path)
    with open(path, 'r', encoding='utf-8', newline='') as f:
        rows = list(csv.reader(f))

    if not rows:
        raise TraceFormatError("file is empty", 1, path)
    header = [cell.strip() for cell in rows[0]]
    if not header or header[0] != 'time':
        raise TraceFormatError("header must start with 'time'", 1, path)
    signals = header[1:]
    if len(set(signals)) != len(signals):
        raise TraceFormatError("duplicate signal names in header", 1, path)

    times: List[float] = []
    samples: Dict[str, List[Tuple[float, float]]] = {name: [] for name in signals}
    missing: List[str] = []
    last_line = 2
    for line, row in enumerate(rows[1:], start=2):
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) != len(header):
            raise TraceFormatError(f"expected {len(header)} columns, found {len(row)}", line, path)
        t = _number(row[0].strip(), line, path, 'time')
        if not times and t != 0.0:
            raise TraceFormatError(f"first timestamp must be 0, got {t!r}", line, path)
        if times and not t > times[-1]:
            raise TraceFormatError(f"time {t!r} does not exceed previous time {times[-1]!r}", line, path)
        missing = []
        for name, cell in zip(signals, row[1:]):
            cell = cell.strip()
            if cell:
                samples[name].append((t, _number(cell, line, path, name)))
            else:
                missing.append(name)
        if missing and not times:
            raise TraceFormatError(f"first row has no value for {', '.join(missing)}", line, path)
        times.append(t)
        last_line = line

    if not times:
        raise TraceFormatError("trace has no samples", 2, path)
    if missing:
        raise TraceFormatError(f"last row has no value for {', '.join(missing)}", last_line, path)
    return resample(samples, interpolation, grid=np.array(times))


def read_bundle(paths: Sequence[PathLike], interpolation: str = "linear") -> List[Trace]:
    """多个表头相同的 CSV 构成一个不确定性批次"""
    traces = [read_trace_csv(p, interpolation) for p in paths]
    first = traces[0].signals
    for p, tr in zip(paths[1:], traces[1:]):
        if tr.signals != first:
            raise TraceFormatError(f"header differs from {paths[0]}", 1, str(p))
    return traces


def _fmt(x: float) -> str:
    return repr(float(x))


def write_trace_csv(path: PathLike, trace: Trace) -> None:
    with open(path, 'w', encoding='utf-8', newline='') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(['time'] + trace.signals)
        for t, values in trace.rows():
            writer.writerow([_fmt(t)] + [_fmt(values[name]) for name in trace.signals])


def write_series_csv(path: PathLike, series: Iterable[Tuple[float, float]]) -> None:
    with open(path, 'w', encoding='utf-8', newline='') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(['time', 'fitness'])
        for t, e in series:
            writer.writerow([_fmt(t), _fmt(e)])
