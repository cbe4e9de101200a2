import json
from datetime import datetime
from pathlib import Path
from typing import Dict, Any
import threading

class Logger:
    def __init__(self, log_dir: str = "log"):
        self.log_dir = Path(log_dir)
        self.log_dir.mkdir(parents=True, exist_ok=True)
        self.lock = threading.Lock()

    def log(self, requirement: str, data: Dict[str, Any]):
        with self.lock:
            today = datetime.now().strftime("%Y-%m-%d")
            log_file = self.log_dir / f"{today}.log"

            log_entry = {
                "timestamp": datetime.now().isoformat(),
                "requirement": requirement,
                "data": data
            }

            # 判定事件（停止、结束、在线/离线不一致）另写一份事件日志
            if 'verdict_event' in data:
                event = data['verdict_event']
                event_log_file = self.log_dir / f"{today}_events.log"
                event_entry = {
                    "timestamp": datetime.now().isoformat(),
                    "requirement": requirement,
                    "kind": event.get('kind'),
                    "fitness": event.get('fitness'),
                    "details": {k: v for k, v in event.items() if k not in ('kind', 'fitness')}
                }
                self._append(event_log_file, event_entry)

            self._append(log_file, log_entry)

    def _append(self, path: Path, entry: Dict[str, Any]):
        try:
            with open(path, 'a', encoding='utf-8') as f:
                f.write(json.dumps(entry, ensure_ascii=False) + '\n')
        except OSError as e:
            print(f"Error writing to log {path}: {e}")

    def get_logs_for_date(self, date: str, events: bool = False) -> list:
        suffix = "_events" if events else ""
        log_file = self.log_dir / f"{date}{suffix}.log"

        if not log_file.exists():
            return []

        logs = []
        try:
            with open(log_file, 'r', encoding='utf-8') as f:
                for line in f:
                    if line.strip():
                        logs.append(json.loads(line))
        except (OSError, json.JSONDecodeError) as e:
            print(f"Error reading log file: {e}")

        return logs
