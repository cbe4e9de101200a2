import os
import yaml
from pathlib import Path
from typing import Dict, Any, Optional
from dotenv import load_dotenv

DEFAULT_CONFIG_PATH = "config/config.yaml"

# 配置文件缺省时使用的内置默认值
DEFAULTS: Dict[str, Dict[str, Any]] = {
    'semantics': {
        'epsilon': 1e-9,
        'interpolation': 'linear',
        'diff_mode': 'quantitative',
    },
    'monitor': {
        'threshold': 0.0,
        'stop_enabled': True,
        'delay_initial_output': 0.0,
    },
    'bundle': {
        'workers': 0,  # 0 表示使用全部 CPU
        'stop_on_first_failure': True,
    },
    'generator': {
        'steps': 1000,
        'seed': 0,
        'profile': 'ramp',
        'sigma': 0.0,
    },
    'logging': {
        'log_dir': 'log',
    },
}


class ConfigLoader:
    def __init__(self, config_path: Optional[str] = None):
        load_dotenv()
        explicit = config_path or os.getenv('RFOL_CONFIG')
        self.config_path = Path(explicit or DEFAULT_CONFIG_PATH)
        self.explicit = explicit is not None
        self.config = self.load_config()

    def load_config(self) -> Dict[str, Any]:
        if not self.config_path.exists():
            if self.explicit:
                raise FileNotFoundError(f"Config file not found: {self.config_path}")
            return {}

        with open(self.config_path, 'r', encoding='utf-8') as f:
            config = yaml.safe_load(f)

        return config or {}

    def _section(self, name: str) -> Dict[str, Any]:
        merged = dict(DEFAULTS[name])
        merged.update(self.config.get(name) or {})
        return merged

    def get_semantics_config(self) -> Dict[str, Any]:
        section = self._section('semantics')
        # 环境变量 RFOL_EPSILON 覆盖配置文件
        env_epsilon = os.getenv('RFOL_EPSILON')
        if env_epsilon:
            section['epsilon'] = float(env_epsilon)
        return section

    def get_monitor_config(self) -> Dict[str, Any]:
        return self._section('monitor')

    def get_bundle_config(self) -> Dict[str, Any]:
        section = self._section('bundle')
        if not section.get('workers'):
            section['workers'] = os.cpu_count() or 1
        return section

    def get_generator_config(self) -> Dict[str, Any]:
        return self._section('generator')

    def get_logging_config(self) -> Dict[str, Any]:
        return self._section('logging')
