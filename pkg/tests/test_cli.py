import json

import pytest

from osplab.cli import (DEFAULTS, EXIT_INCONCLUSIVE, EXIT_INVALID, EXIT_OK, ConfigError, config_hash,
                        parse_config, run, validate_config)


def read_dir(path):
    return {p.name: p.read_bytes() for p in sorted(path.iterdir())}


def test_parse_config():
    cfg = parse_config("# comment\nb = 1/128\nT = 7  # trailing\nomega3 = 0111\n")
    assert cfg["b"] == 1 / 128 and cfg["T"] == 7 and cfg["omega3"] == "0111"
    assert cfg["a"] == DEFAULTS["a"]
    with pytest.raises(ConfigError):
        parse_config("nonsense = 3")
    with pytest.raises(ConfigError):
        parse_config("T = seven")
    with pytest.raises(ConfigError):
        parse_config("just a line")


def test_validate_config():
    rep = validate_config(dict(DEFAULTS))
    assert rep["passed"] and rep["S"] == 128
    for bad in ({"omega4": "111110"},           # rotation of omega1
                {"omega3": "1111"},              # single symbol
                {"omega3": "01111111"},          # longer than omega1
                {"T": 5},                        # T != max(T1, T2)
                {"delta": 1e-3}):                # regime inequality fails
        with pytest.raises(ConfigError):
            validate_config({**DEFAULTS, **bad})


def test_regime_check(tmp_path, capsys):
    assert run(["regime-check", "--config", "default", "--out", str(tmp_path)]) == EXIT_OK
    assert "pass" in capsys.readouterr().out
    rows = [json.loads(line) for line in (tmp_path / "regime.jsonl").read_text().splitlines()]
    assert rows and all(r["config_hash"] == config_hash({**DEFAULTS, "experiment": "regime-check"})
                        for r in rows)
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert man["seed"] == 0 and man["config_hash"] == rows[0]["config_hash"]


@pytest.mark.parametrize("argv", [["regime-check"], ["periodic-points"],
                                  ["words", "lemma8", "--seed-word", "1", "--phi1", "0.1", "--phi2", "0.2"],
                                  ["audit", "expansivity", "--seed", "3"]])
def test_reproducible(tmp_path, argv):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(argv + ["--out", str(a)]) == EXIT_OK
    assert run(argv + ["--out", str(b)]) == EXIT_OK
    assert read_dir(a) == read_dir(b)


def test_lemma8_record(tmp_path):
    assert run(["words", "lemma8", "--seed-word", "1", "--phi1", "0.1", "--phi2", "0.2",
                "--out", str(tmp_path)]) == EXIT_OK
    rec = json.loads((tmp_path / "lemma8.jsonl").read_text().splitlines()[0])
    assert rec["M_plus"] > 3 / 128 and rec["M_minus"] > 3 / 128


def test_bad_config_exit(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("omega1 = 0101\n")
    assert run(["regime-check", "--config", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_INVALID
    assert run(["regime-check", "--config", str(tmp_path / "missing.cfg"),
                "--out", str(tmp_path / "o")]) == EXIT_INVALID
    cfg.write_text("delta = 0.001\n")
    assert run(["regime-check", "--config", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_INVALID


def test_budget_exit(tmp_path):
    cfg = tmp_path / "tight.cfg"
    cfg.write_text("max_iterations = 1\n")
    code = run(["words", "lemma8", "--config", str(cfg), "--phi1", "0.3", "--phi2", "0.3001",
                "--out", str(tmp_path / "o")])
    assert code == EXIT_INCONCLUSIVE
    assert "inconclusive" in (tmp_path / "o" / "summary.txt").read_text()
