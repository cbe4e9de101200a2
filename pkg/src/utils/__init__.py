from .config_loader import ConfigLoader
from .logger import Logger
from .trace_io import read_trace_csv, read_bundle, write_trace_csv, write_series_csv
from .generator import generate_trace, generate_bundle

__all__ = [
    'ConfigLoader', 'Logger',
    'read_trace_csv', 'read_bundle', 'write_trace_csv', 'write_series_csv',
    'generate_trace', 'generate_bundle',
]
