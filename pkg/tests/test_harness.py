import io
import os
import stat

import numpy as np
import pytest

from msglab.config import ConfigError, ExperimentConfig, load_config, parse_config_text, parse_seeds
from msglab.harness import (AGGREGATE_FIELDS, HarnessError, main, read_metrics_csv,
                            run_experiment, run_honesty_sweep)
from msglab.learn.train import MetricsRow


def small(tmp_path, **kw):
    base = dict(env="recletter", algorithm="sgoc", total_episodes=256, eval_interval=64,
                seeds=[0, 1], output_dir=str(tmp_path))
    base.update(kw)
    return ExperimentConfig(**base)


def test_parse_seeds():
    assert parse_seeds("0..3") == [0, 1, 2, 3]
    assert parse_seeds("4") == [4]
    assert parse_seeds("1, 5,9") == [1, 5, 9]


def test_config_file_and_overrides(tmp_path):
    path = tmp_path / "c.cfg"
    path.write_text("env = goals3  # map\nalgo = sg\nlambda = 1.5\nseeds = 0..2\n", encoding="utf-8")
    cfg = load_config(path, {"lam": 4.0})
    assert cfg.env == "goals3" and cfg.algorithm.value == "sg"
    assert cfg.lam == 4.0 and cfg.seeds == [0, 1, 2]
    assert cfg.hidden == 64  # per-environment default filled in


def test_config_errors_listed_together():
    with pytest.raises(ConfigError) as info:
        parse_config_text("lr_sender = -1\nepsilon = -0.5\nseeds = \n").validate()
    text = str(info.value)
    assert "lr_sender" in text and "epsilon" in text and "seeds" in text
    with pytest.raises(ConfigError) as info:
        parse_config_text("bogus = 1\nnot a line\n")
    assert len(info.value.problems) == 2


def test_output_dir_env_fallback(monkeypatch, tmp_path):
    monkeypatch.setenv("MSGLAB_OUT", str(tmp_path / "x"))
    assert parse_config_text("").output_dir == str(tmp_path / "x")
    assert parse_config_text("out = y").output_dir == "y"


def test_config_text_roundtrip():
    cfg = ExperimentConfig(env="goals5", algorithm="pgoc", seeds=[3, 4], lam=2.0, output_dir="o")
    again = parse_config_text(cfg.to_text())
    assert again == cfg


def test_run_writes_seed_files_and_aggregate(tmp_path):
    result = run_experiment(small(tmp_path))
    files = sorted(p.name for p in tmp_path.iterdir())
    assert files == ["recletter_sgoc_aggregate.csv", "recletter_sgoc_seed0.csv",
                     "recletter_sgoc_seed1.csv"]
    rows = read_metrics_csv(tmp_path / "recletter_sgoc_seed0.csv")
    assert [r.episode_index for r in rows] == [64, 128, 192, 256]
    assert all(r.social_welfare == r.reward_sender + r.reward_receiver for r in rows)
    lines = (tmp_path / "recletter_sgoc_aggregate.csv").read_text(encoding="utf-8").splitlines()
    assert tuple(lines[0].split(",")) == AGGREGATE_FIELDS
    first = lines[1].split(",")
    assert first[1] == "2"
    both = [result.rows[s][0].reward_sender for s in (0, 1)]
    assert float(first[2]) == pytest.approx(np.mean(both))


def test_run_is_byte_identical(tmp_path):
    run_experiment(small(tmp_path / "a", seeds=[4]))
    run_experiment(small(tmp_path / "b", seeds=[4]))
    a = (tmp_path / "a" / "recletter_sgoc_seed4.csv").read_bytes()
    b = (tmp_path / "b" / "recletter_sgoc_seed4.csv").read_bytes()
    assert a == b


def test_parallel_jobs_match_serial(tmp_path):
    run_experiment(small(tmp_path / "s", seeds=[0, 1]), jobs=1)
    run_experiment(small(tmp_path / "p", seeds=[0, 1]), jobs=2)
    for name in ("recletter_sgoc_seed1.csv", "recletter_sgoc_aggregate.csv"):
        assert (tmp_path / "s" / name).read_bytes() == (tmp_path / "p" / name).read_bytes()


def test_zero_episodes_gives_header_only(tmp_path):
    run_experiment(small(tmp_path, total_episodes=0, seeds=[0]))
    text = (tmp_path / "recletter_sgoc_seed0.csv").read_text(encoding="utf-8")
    assert text == ",".join(MetricsRow.FIELDS) + "\n"
    agg = (tmp_path / "recletter_sgoc_aggregate.csv").read_text(encoding="utf-8")
    assert agg == ",".join(AGGREGATE_FIELDS) + "\n"


@pytest.mark.skipif(hasattr(os, "geteuid") and os.geteuid() == 0,
                    reason="root ignores directory permissions")
def test_unwritable_output_dir(tmp_path):
    locked = tmp_path / "locked"
    locked.mkdir()
    locked.chmod(stat.S_IRUSR | stat.S_IXUSR)
    with pytest.raises(HarnessError):
        run_experiment(small(locked / "sub"))


def test_output_path_that_is_a_file(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x", encoding="utf-8")
    with pytest.raises(HarnessError):
        run_experiment(small(blocker))


def test_invalid_config_rejected_before_running(tmp_path):
    with pytest.raises(ConfigError):
        run_experiment(small(tmp_path, lr_sender=0.0))
    assert not any(tmp_path.iterdir())


def test_sweep_single_cell_and_grid(tmp_path):
    base = small(tmp_path, seeds=[0], total_episodes=128)
    rows = run_honesty_sweep(base, [0.0], [0.0])
    assert len(rows) == 1
    rows = run_honesty_sweep(base, [0.0, 1.0], [0.0, 0.2])
    assert [(r[0], r[1]) for r in rows] == [(0.0, 0.0), (0.0, 0.2), (1.0, 0.0), (1.0, 0.2)]
    lines = (tmp_path / "honesty_sweep.csv").read_text(encoding="utf-8").splitlines()
    assert lines[0] == "lambda,epsilon,honesty_mean,honesty_std,n_seeds" and len(lines) == 5
    with pytest.raises(HarnessError):
        run_honesty_sweep(base, [], [0.1])


def test_cli_run_and_errors(tmp_path, capsys):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("total_episodes = 128\neval_interval = 64\n", encoding="utf-8")
    code = main(["run", "--config", str(cfg), "--algo", "pg", "--seeds", "0..1",
                 "--out", str(tmp_path / "o"), "--lambda", "1", "--epsilon", "0.2"])
    assert code == 0
    assert (tmp_path / "o" / "recletter_pg_seed1.csv").exists()
    assert main(["run", "--config", str(cfg), "--set", "batch_size=0",
                 "--out", str(tmp_path / "o")]) == 2
    assert "batch_size" in capsys.readouterr().err


def test_cli_sweep(tmp_path):
    code = main(["sweep", "--set", "total_episodes=64", "--set", "eval_interval=64",
                 "--seeds", "0", "--lambda-grid", "0,2", "--epsilon-grid", "0.1",
                 "--out", str(tmp_path)])
    assert code == 0
    assert len((tmp_path / "honesty_sweep.csv").read_text().splitlines()) == 3


def test_oracle_suite_passes():
    from msglab.harness import run_oracle_suite

    buf = io.StringIO()
    results = run_oracle_suite(stream=buf)
    assert all(r.passed for r in results), buf.getvalue()
    assert "lp_value" in buf.getvalue()
