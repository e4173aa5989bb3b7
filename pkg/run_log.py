"""
Dated run log shared by the planner, the simulation harness and the CLI.

One line per event, appended to logs/planner_YYYYMMDD.log.
"""

import os
from datetime import datetime

import path_config


def log_event(message: str) -> None:
    """Append a timestamped line to today's log file."""
    try:
        folder = path_config.LOG_FOLDER
        os.makedirs(folder, exist_ok=True)
        log_file = os.path.join(folder, f"planner_{datetime.now().strftime('%Y%m%d')}.log")

        with open(log_file, 'a', encoding='utf-8') as f:
            timestamp = datetime.now().strftime('%Y-%m-%d %H:%M:%S')
            f.write(f"[{timestamp}] {message}\n")
    except Exception as e:
        print(f"❌ Log write failed: {e}")
