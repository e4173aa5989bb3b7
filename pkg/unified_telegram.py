"""
Telegram notifications for planning runs.

Optional side channel: enabled with TELEGRAM_ENABLED plus TELEGRAM_BOT_TOKEN
and TELEGRAM_CHAT_ID. Send failures are counted and printed, never raised.

Usage:
    from unified_telegram import client_from_env

    client = client_from_env()
    if client:
        client.notify_plan(summary_text, problem_name, total_cost)
        client.notify_benchmark(name, breakdown)
"""

import os
import threading
import time
from collections import Counter
from pathlib import Path
from typing import Any, Callable, Dict, Optional

from path_config import env_flag


MESSAGE_LIMIT = 3000
ERROR_LIMIT = 200

REASON_LABELS = {
    'unreachable': 'goal node not connected',
    'no_instantiations_reached': 'no region instantiation reachable',
    'trace_bound': 'goal covariance above eta',
    'door_already_open': 'door already open on this branch',
    'door_blocked': 'no node reachable through the door',
    'frontier_exhausted': 'search space exhausted',
    'timeout': 'time bound reached',
}


# ===== THROTTLE MANAGER =====

class ThrottleManager:
    """Minimum spacing between two messages so long benchmark runs do not hit rate limits."""

    def __init__(self, min_interval: float = 2.0):
        """
        Args:
            min_interval: Seconds that must pass between two sends
        """
        self.min_interval = min_interval
        self._last_sent: Optional[float] = None
        self._lock = threading.Lock()
        self._waits = 0
        self._waited = 0.0

    def wait_if_needed(self):
        with self._lock:
            if self._last_sent is not None:
                pause = self.min_interval - (time.monotonic() - self._last_sent)
                if pause > 0:
                    time.sleep(pause)
                    self._waits += 1
                    self._waited += pause
            self._last_sent = time.monotonic()

    def get_stats(self) -> Dict[str, Any]:
        return {'total_waits': self._waits, 'total_wait_time': self._waited}


# ===== NOTIFICATION FORMATTER =====

class NotificationFormatter:
    """HTML bodies for each notification kind."""

    @staticmethod
    def humanize_reason_code(code: str) -> str:
        return REASON_LABELS.get(code, code or 'other reason')

    @staticmethod
    def format_breakdown(breakdown: Dict[str, int], label: Callable[[str], str], max_items: int = 8) -> str:
        """Bullet list, largest count first; the tail collapses into one 'more categories' line."""
        ranked = sorted(breakdown.items(), key=lambda item: (-item[1], item[0]))
        bullets = [f"• {label(key)}: {count}" for key, count in ranked[:max_items]]
        if len(ranked) > max_items:
            bullets.append(f"• more categories: {len(ranked) - max_items}")
        return "\n".join(bullets)

    @staticmethod
    def format_plan(summary_text: str, problem: str, total_cost: float) -> str:
        return "\n".join([
            "✅ <b>Plan found</b>",
            "",
            f"🗺 Problem: <code>{problem}</code>",
            f"💰 Cost: <b>{total_cost:.3f}</b>",
            "",
            f"<pre>{summary_text[:MESSAGE_LIMIT]}</pre>",
        ])

    @classmethod
    def format_no_plan(cls, problem: str, reason_code: str) -> str:
        return "\n".join([
            "⚠️ <b>No plan</b>",
            "",
            f"🗺 Problem: <code>{problem}</code>",
            f"❌ Reason: {cls.humanize_reason_code(reason_code)}",
        ])

    @staticmethod
    def format_simulation(problem: str, stats) -> str:
        """stats: sim_harness.TrialStats"""
        return "\n".join([
            "🎲 <b>Simulation finished</b>",
            "",
            f"🗺 Problem: <code>{problem}</code>",
            f"🔁 Trials: {stats.trials}",
            f"✅ Success rate: {stats.success_rate:.1%}",
            f"📏 Mean executed distance: {stats.mean_executed_cost:.2f} m",
        ])

    @classmethod
    def format_benchmark(cls, name: str, breakdown: Dict[str, Any], report_path: Optional[str] = None) -> str:
        parts = ["\n".join([
            "📊 <b>BENCHMARK DONE</b>",
            "",
            f"📄 Scenario: <code>{name}</code>",
            f"🧮 Rows: {breakdown.get('rows', 0)}",
            f"✅ With plan: {breakdown.get('feasible', 0)}",
            f"❌ No plan: {breakdown.get('no_plan', 0)}",
        ])]
        if breakdown.get('by_mode'):
            parts.append("<b>Rows per cost mode:</b>\n" + cls.format_breakdown(breakdown['by_mode'], str))
        if breakdown.get('reasons'):
            parts.append("❌ <b>No-plan reasons:</b>\n"
                         + cls.format_breakdown(breakdown['reasons'], cls.humanize_reason_code))
        if report_path:
            parts.append(f"📁 Report: <code>{Path(report_path).name}</code>")
        return "\n\n".join(parts)

    @staticmethod
    def format_error(command: str, error_message: str) -> str:
        return "\n".join([
            "🔴 <b>Run failed</b>",
            "",
            f"⚙️ Command: <code>{command}</code>",
            f"⚠️ Error: <code>{error_message[:ERROR_LIMIT]}</code>",
        ])


# ===== TELEGRAM CLIENT =====

class TelegramClient:

    def __init__(self, bot, chat_id: str, throttle_interval: float = 2.0):
        """
        Args:
            bot: telebot.TeleBot, or anything with send_message(chat_id, text, **kwargs)
            chat_id: Target chat
            throttle_interval: Seconds between messages
        """
        self.bot = bot
        self.chat_id = chat_id
        self.throttler = ThrottleManager(throttle_interval)
        self.formatter = NotificationFormatter()
        self.sent = 0
        self.failed = 0
        self.by_type: Counter = Counter()

    def send(self, message: str, parse_mode: str = 'HTML', disable_notification: bool = False) -> bool:
        self.throttler.wait_if_needed()
        try:
            self.bot.send_message(self.chat_id, message, parse_mode=parse_mode,
                                  disable_notification=disable_notification)
        except Exception as e:
            print(f"❌ Telegram send failed: {e}")
            self.failed += 1
            return False
        self.sent += 1
        return True

    def _notify(self, kind: str, message: str, quiet: bool = False) -> bool:
        self.by_type[kind] += 1
        return self.send(message, disable_notification=quiet)

    def notify_plan(self, summary_text: str, problem: str, total_cost: float) -> bool:
        return self._notify('plan', self.formatter.format_plan(summary_text, problem, total_cost))

    def notify_no_plan(self, problem: str, reason_code: str) -> bool:
        return self._notify('no_plan', self.formatter.format_no_plan(problem, reason_code))

    def notify_simulation(self, problem: str, stats) -> bool:
        return self._notify('simulation', self.formatter.format_simulation(problem, stats), quiet=True)

    def notify_benchmark(self, name: str, breakdown: Dict[str, Any], report_path: Optional[str] = None) -> bool:
        return self._notify('benchmark', self.formatter.format_benchmark(name, breakdown, report_path))

    def notify_error(self, command: str, error_message: str) -> bool:
        return self._notify('error', self.formatter.format_error(command, error_message))

    def get_stats(self) -> Dict[str, Any]:
        return {
            'sent': self.sent,
            'failed': self.failed,
            'by_type': dict(self.by_type),
            'throttle': self.throttler.get_stats(),
        }


# ===== HELPERS =====

def create_client(bot_token: str, chat_id: str, throttle_interval: float = 2.0) -> TelegramClient:
    import telebot
    return TelegramClient(telebot.TeleBot(bot_token), chat_id, throttle_interval)


def client_from_env() -> Optional[TelegramClient]:
    """Client built from the environment, or None when notifications are off or unconfigured."""
    if not env_flag("TELEGRAM_ENABLED", False):
        return None
    token = os.getenv("TELEGRAM_BOT_TOKEN", "").strip()
    chat_id = os.getenv("TELEGRAM_CHAT_ID", "").strip()
    if not (token and chat_id):
        print("❌ TELEGRAM_ENABLED is set but TELEGRAM_BOT_TOKEN or TELEGRAM_CHAT_ID is missing")
        return None
    try:
        return create_client(token, chat_id)
    except Exception as e:
        print(f"❌ Telegram client unavailable: {e}")
        return None
