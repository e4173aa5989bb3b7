from pathlib import Path

import pytest

import path_config
from path_config import ConfigError, env_flag, get_env_seed, get_log_folder, get_output_root
from run_log import log_event


@pytest.mark.parametrize("raw, expected", [("1", True), ("TRUE", True), (" yes ", True), ("on", True),
                                           ("0", False), ("no", False), ("", False)])
def test_env_flag(monkeypatch, raw, expected):
    monkeypatch.setenv("BELIEF_TMP_FLAG", raw)
    assert env_flag("BELIEF_TMP_FLAG") is expected


def test_env_flag_default(monkeypatch):
    monkeypatch.delenv("BELIEF_TMP_FLAG", raising=False)
    assert env_flag("BELIEF_TMP_FLAG", True) is True


def test_env_seed(monkeypatch):
    monkeypatch.setenv("BELIEF_TMP_SEED", " 17 ")
    assert get_env_seed() == 17
    monkeypatch.setenv("BELIEF_TMP_SEED", "")
    assert get_env_seed() is None
    monkeypatch.setenv("BELIEF_TMP_SEED", "1e3")
    with pytest.raises(ConfigError):
        get_env_seed()


def test_output_and_log_overrides(monkeypatch, tmp_path):
    monkeypatch.delenv("BELIEF_TMP_OUT", raising=False)
    assert get_output_root() == path_config.DEFAULT_OUTPUT_ROOT
    monkeypatch.setenv("BELIEF_TMP_OUT", str(tmp_path))
    assert get_output_root() == tmp_path
    monkeypatch.setenv("BELIEF_TMP_LOG_DIR", str(tmp_path / "logs"))
    assert get_log_folder() == tmp_path / "logs"


def test_fixture_folder_ships_with_the_project():
    assert (path_config.FIXTURE_FOLDER / "office.world.json").is_file()
    assert path_config.FIXTURE_FOLDER.parent == Path(path_config.__file__).resolve().parent


def test_log_event_appends_dated_lines(monkeypatch, tmp_path):
    monkeypatch.setattr(path_config, "LOG_FOLDER", tmp_path / "logs")
    log_event("first")
    log_event("second")
    (log_file,) = (tmp_path / "logs").glob("planner_*.log")
    lines = log_file.read_text(encoding="utf-8").splitlines()
    assert [line.split("] ", 1)[1] for line in lines] == ["first", "second"]
    assert lines[0].startswith("[")


def test_log_event_never_raises(monkeypatch, tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("", encoding="utf-8")
    monkeypatch.setattr(path_config, "LOG_FOLDER", blocker)
    log_event("lost")
    assert "Log write failed" in capsys.readouterr().out
