import pytest

from sim_harness import TrialStats
from unified_telegram import NotificationFormatter, TelegramClient, ThrottleManager, client_from_env


class FakeBot:
    def __init__(self, fail=False):
        self.fail = fail
        self.sent = []

    def send_message(self, chat_id, text, parse_mode=None, disable_notification=False):
        if self.fail:
            raise ConnectionError("network down")
        self.sent.append((chat_id, text, parse_mode, disable_notification))


@pytest.fixture
def client():
    return TelegramClient(FakeBot(), "42", throttle_interval=0.0)


def test_notifications_are_sent_and_counted(client):
    assert client.notify_plan("Plan: s → c1 → l", "office_c2", 12.3456)
    assert client.notify_simulation("office_c2", TrialStats(10, 9, 0.9, 14.2))
    stats = client.get_stats()
    assert stats["sent"] == 2
    assert stats["by_type"] == {"plan": 1, "simulation": 1}

    chat_id, text, parse_mode, quiet = client.bot.sent[0]
    assert (chat_id, parse_mode, quiet) == ("42", "HTML", False)
    assert "12.346" in text
    assert client.bot.sent[1][3] is True
    assert "90.0%" in client.bot.sent[1][1]


def test_failed_send_is_counted_not_raised(capsys):
    client = TelegramClient(FakeBot(fail=True), "42", throttle_interval=0.0)
    assert client.notify_error("plan", "boom") is False
    assert client.get_stats()["failed"] == 1
    assert "Telegram send failed" in capsys.readouterr().out


def test_benchmark_message_lists_modes_and_reasons(client):
    breakdown = {"rows": 3, "feasible": 1, "no_plan": 2, "by_mode": {"mptp": 2, "petlon": 1},
                 "reasons": {"frontier_exhausted": 2}}
    client.notify_benchmark("office_table", breakdown, "/tmp/reports/benchmark_office_table.xlsx")
    text = client.bot.sent[0][1]
    assert "• mptp: 2" in text
    assert "• search space exhausted: 2" in text
    assert "benchmark_office_table.xlsx" in text
    assert "/tmp/reports" not in text


@pytest.mark.parametrize("code, label", [
    ("trace_bound", "goal covariance above eta"),
    ("timeout", "time bound reached"),
    ("mystery", "mystery"),
    ("", "other reason"),
])
def test_humanize_reason_code(code, label):
    assert NotificationFormatter.humanize_reason_code(code) == label


def test_breakdown_is_truncated():
    breakdown = {f"r{i}": i for i in range(1, 11)}
    text = NotificationFormatter.format_breakdown(breakdown, str, max_items=3)
    assert text.splitlines() == ["• r10: 10", "• r9: 9", "• r8: 8", "• more categories: 7"]
    assert NotificationFormatter.format_breakdown({}, str) == ""


def test_throttle_waits_between_messages(monkeypatch):
    sleeps = []
    monkeypatch.setattr("unified_telegram.time.sleep", sleeps.append)
    throttle = ThrottleManager(min_interval=60.0)
    throttle.wait_if_needed()
    throttle.wait_if_needed()
    assert len(sleeps) == 1
    assert throttle.get_stats()["total_waits"] == 1


def test_client_from_env(monkeypatch, capsys):
    monkeypatch.delenv("TELEGRAM_ENABLED", raising=False)
    assert client_from_env() is None
    monkeypatch.setenv("TELEGRAM_ENABLED", "true")
    monkeypatch.delenv("TELEGRAM_BOT_TOKEN", raising=False)
    monkeypatch.setenv("TELEGRAM_CHAT_ID", "42")
    assert client_from_env() is None
    assert "TELEGRAM_BOT_TOKEN" in capsys.readouterr().out
