import subprocess

import pytest

import setup


def test_old_interpreter_stops(capsys):
    with pytest.raises(SystemExit):
        setup.check_python_version(minimum=(99, 0))
    assert "needs Python 99.0+" in capsys.readouterr().out


def test_missing_engine_module_reported(monkeypatch, capsys):
    def failing_pip(cmd):
        raise subprocess.CalledProcessError(1, cmd)

    monkeypatch.setattr(setup.subprocess, "check_call", failing_pip)
    monkeypatch.setattr(setup.importlib.util, "find_spec",
                        lambda name: None if name == "sklearn" else object())
    setup.install_requirements()
    out = capsys.readouterr().out
    assert "pip exited with code 1" in out
    assert "Still missing: sklearn" in out
