import json

import numpy as np
import pytest

from adacgp.cli import main
from adacgp.graphs import load_gso_csv


def _tiny(tmp_path):
    cfg = tmp_path / "tiny.yaml"
    cfg.write_text("graph:\n  topology: random\n  n: 5\nprocess:\n  P: 2\n  T: 200\n  burn_in: 20\n"
                   "run:\n  seeds: [0]\n  window: 20\nestimator:\n  patience: 20\n")
    return str(cfg)


def test_simulate_then_estimate_and_metrics(tmp_path, capsys):
    cfg = _tiny(tmp_path)
    sim = tmp_path / "sim"
    assert main(["simulate", "--config", cfg, "--seed", "3", "--out", str(sim)]) == 0
    assert load_gso_csv(sim / "gso_true.csv").n == 5
    assert json.loads((sim / "results.json").read_text())["seed"] == 3

    est = tmp_path / "est"
    rc = main(["estimate", "--config", cfg, "--stream", str(sim / "stream.csv"), "--truth",
               str(sim / "gso_true.csv"), "--variant", "p2-alt-debias", "--out", str(est)])
    assert rc == 0
    doc = json.loads((est / "results.json").read_text())
    assert doc["steps"] == 200 and "nmse_w" in doc["summary"]
    assert len((est / "trace.jsonl").read_text().splitlines()) == 200

    rc = main(["metrics", "--estimate", str(est / "gso_est.csv"), "--truth", str(sim / "gso_true.csv")])
    assert rc == 0
    printed = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert {"nmse_w", "p_miss", "p_false_alarm"} <= set(printed)


def test_estimate_synthetic_experiment(tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["estimate", "--config", _tiny(tmp_path), "--topology", "er", "--out", str(out)]) == 0
    doc = json.loads((out / "results.json").read_text())
    assert doc["config"]["topology"] == "er"
    assert "adacgp:" in capsys.readouterr().out


def test_search_and_sweep(tmp_path):
    cfg = _tiny(tmp_path)
    assert main(["search", "--config", cfg, "--trials", "2", "--out", str(tmp_path / "s")]) == 0
    assert (tmp_path / "s" / "best_config.yaml").exists()
    assert main(["search", "--config", cfg, "--sweep", "--out", str(tmp_path / "w")]) == 0
    assert (tmp_path / "w" / "sweep.csv").read_text().startswith("mu,")


def test_bench_writes_scaling(tmp_path):
    assert main(["bench", "--sizes", "4,8", "--reps", "1", "--out", str(tmp_path)]) == 0
    lines = (tmp_path / "scaling.csv").read_text().splitlines()
    assert lines[0] == "algorithm,n,seconds" and len(lines) == 1 + 2 * 3


def test_mask_flag_restricts_support(tmp_path):
    cfg = _tiny(tmp_path)
    mask = np.eye(5, k=1)
    (tmp_path / "mask.csv").write_text("\n".join(",".join(str(int(v)) for v in r) for r in mask) + "\n")
    sim = tmp_path / "sim"
    main(["simulate", "--config", cfg, "--out", str(sim)])
    est = tmp_path / "est"
    assert main(["estimate", "--config", cfg, "--stream", str(sim / "stream.csv"),
                 "--mask", str(tmp_path / "mask.csv"), "--out", str(est)]) == 0
    W = load_gso_csv(est / "gso_est.csv").weights
    assert not np.any(W[mask == 0])


def test_snapshot_lag_metrics(tmp_path, capsys):
    paths = []
    for k in range(4):
        p = tmp_path / f"s{k}.csv"
        p.write_text(f"2\n0,{k}\n0,0\n")
        paths.append(str(p))
    assert main(["metrics", "--snapshots", *paths, "--lag", "2"]) == 0
    printed = json.loads(capsys.readouterr().out.strip())
    assert printed["median_lag_difference"] == pytest.approx(2.0)


def test_errors_return_nonzero(tmp_path, capsys):
    assert main(["metrics"]) == 2
    assert main(["estimate", "--stream", str(tmp_path / "missing.csv")]) == 2
    with pytest.raises(SystemExit):
        main(["estimate", "--variant", "p3-debias"])
