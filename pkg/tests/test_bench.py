import json
import os
import subprocess
import sys

import numpy as np
import pytest

from fidbo.bench import aggregate, run_experiment, run_sampler_validation
from fidbo.cli import main
from fidbo.config import build_experiment_config, load_config, parse_config_text
from fidbo.errors import ConfigError
from fidbo.optimizer import Trace, TraceRow

TINY = """
mode = ei
objective.id = branin
cost.id = constant
cost.max_cost = 1.0
budget_s = 10
n_init = 8
model.k_hyper = 2
model.burn_in = 10
model.thin = 2
overhead.mode = synthetic
runs = 2
seed = 0
"""


# -- config parsing ----------------------------------------------------


def test_parse_value_types():
    flat = parse_config_text(
        """
        mode = envpes          # trailing comment
        budget_s = 2.5
        n_init = 20
        objective.id = branin
        model.noise_sd = none
        """
    )
    assert flat["mode"] == "envpes"
    assert flat["budget_s"] == 2.5 and isinstance(flat["budget_s"], float)
    assert flat["n_init"] == 20 and isinstance(flat["n_init"], int)
    assert flat["model.noise_sd"] is None


def test_parse_rejects_unknown_and_malformed():
    with pytest.raises(ConfigError, match="unknown config key"):
        parse_config_text("objective.idd = branin")
    with pytest.raises(ConfigError, match="line 2"):
        parse_config_text("mode = ei\nnot a key value line")
    with pytest.raises(ConfigError, match="duplicate"):
        parse_config_text("mode = ei\nmode = pes")


def test_build_experiment_config_mapping():
    flat = parse_config_text(
        """
        mode = envpes
        objective.id = branin
        objective.transform = linear-shift
        cost.id = quadratic
        cost.min_cost = 120
        cost.max_cost = 1800
        model.k_hyper = 3
        support.m = 60
        support.n_samples = 500
        acquisition.n_min_draws = 5
        overhead.mode = synthetic
        overhead.o0 = 0.4
        overhead.o1 = 0.01
        overhead.o2 = 1.2
        budget_s = 9000
        """
    )
    cfg = build_experiment_config(flat, seed=7)
    assert cfg.mode == "envpes" and cfg.seed == 7
    assert cfg.objective_params == {"transform": "linear-shift"}
    assert cfg.cost == "quadratic"
    assert cfg.cost_params == {"min_cost": 120, "max_cost": 1800}
    assert cfg.k_hyper == 3 and cfg.m_support == 60 and cfg.n_min_samples == 500
    assert cfg.n_min_draws == 5
    assert cfg.overhead_params == (0.4, 0.01, 1.2)


# -- experiment harness ------------------------------------------------


def test_run_experiment_writes_artifacts(tmp_path):
    flat = parse_config_text(TINY)
    run_experiment(flat, str(tmp_path))
    names = sorted(os.listdir(tmp_path))
    assert "aggregates.csv" in names
    for seed in (0, 1):
        assert f"trace_seed{seed}.csv" in names
        meta = json.load(open(tmp_path / f"run_seed{seed}.json"))
        assert meta["seed"] == seed
        assert meta["aborted"] is False
        assert meta["config"]["budget_s"] == 10
    # Aggregates hold both cost axes with ordered quartiles.
    rows = open(tmp_path / "aggregates.csv").read().splitlines()
    assert rows[0] == "axis,cost_s,q25,median,q75"
    axes = set()
    for line in rows[1:]:
        axis, t, q25, q50, q75 = line.split(",")
        axes.add(axis)
        assert float(q25) <= float(q50) <= float(q75)
    assert axes == {"cumulative_eval_cost_s", "cumulative_total_cost_s"}


def test_aggregate_is_pure(tmp_path):
    flat = parse_config_text(TINY)
    run_experiment(flat, str(tmp_path))
    first = open(tmp_path / "aggregates.csv", "rb").read()
    aggregate(str(tmp_path))
    second = open(tmp_path / "aggregates.csv", "rb").read()
    assert first == second


def test_aggregate_empty_dir_raises(tmp_path):
    with pytest.raises(ConfigError):
        aggregate(str(tmp_path))


def _toy_trace(ts, irs, dim=1):
    tr = Trace(dim)
    for i, (t, ir) in enumerate(zip(ts, irs)):
        tr.rows.append(
            TraceRow(
                step=i,
                x=np.zeros(dim),
                s=0.0,
                y=0.0,
                eval_cost_s=0.0,
                overhead_s=0.0,
                x_rec=np.zeros(dim),
                rec_mean=0.0,
                rec_true=ir,
                immediate_regret=ir,
                argmin_regret=ir,
                cumulative_eval_cost_s=t,
                cumulative_total_cost_s=t,
                flags=(),
            )
        )
    return tr


def test_aggregate_carry_forward_quartiles(tmp_path):
    # Two step-function regret curves with known quartiles on the common grid.
    _toy_trace([1.0, 2.0, 3.0], [3.0, 2.0, 1.0]).to_csv(tmp_path / "trace_seed0.csv")
    _toy_trace([1.5, 2.5, 3.5], [2.0, 1.0, 0.0]).to_csv(tmp_path / "trace_seed1.csv")
    aggregate(str(tmp_path), n_grid=4)
    rows = [
        line.split(",")
        for line in open(tmp_path / "aggregates.csv").read().splitlines()[1:]
        if line.startswith("cumulative_eval_cost_s")
    ]
    grid = [float(r[1]) for r in rows]
    med = [float(r[3]) for r in rows]
    q25 = [float(r[2]) for r in rows]
    assert grid == pytest.approx([1.5, 2.0, 2.5, 3.0])
    # Carried-forward values: run A -> [3,2,2,1], run B -> [2,2,1,1].
    assert med == pytest.approx([2.5, 2.0, 1.5, 1.0])
    assert q25 == pytest.approx([2.25, 2.0, 1.25, 1.0])


def test_gp_draw_experiment_fills_regret(tmp_path):
    flat = parse_config_text(
        """
        mode = ei
        objective.id = gp-draw
        objective.dim = 2
        objective.lengthscale = 0.4
        objective.l_ev = 0.5
        objective.fstar_grid = 256
        cost.id = constant
        cost.max_cost = 1.0
        budget_s = 7
        n_init = 5
        model.k_hyper = 2
        model.burn_in = 10
        model.thin = 2
        overhead.mode = synthetic
        runs = 1
        seed = 3
        """
    )
    run_experiment(flat, str(tmp_path))
    meta = json.load(open(tmp_path / "run_seed3.json"))
    assert "f_star_estimate" in meta
    assert os.path.exists(tmp_path / "gpdraw_seed3.npz")
    tr = Trace.load(tmp_path / "trace_seed3.csv")
    opt_rows = [r for r in tr.rows if "init" not in r.flags]
    assert opt_rows
    for r in opt_rows:
        assert np.isfinite(r.immediate_regret)
        # Regret against the post-hoc dense-search optimum estimate.
        assert r.immediate_regret == pytest.approx(
            r.rec_true - meta["f_star_estimate"], abs=1e-9
        )


# -- sampler validation ------------------------------------------------


def test_sampler_validation_csv(tmp_path):
    flat = parse_config_text(
        TINY
        + """
        validate.steps = 2
        validate.m = 40
        validate.n_samples = 200
        validate.burn_in = 20
        validate.thin = 2
        """
    )
    path, rows = run_sampler_validation(flat, str(tmp_path))
    lines = open(path).read().splitlines()
    assert lines[0] == "objective,method,step,kl,unused_pct,time_s,useful_rate"
    assert len(rows) == 2 * 4
    methods = {r[1] for r in rows}
    assert methods == {"uniform", "ei-slice", "lcb-slice", "wlh"}
    for r in rows:
        assert r[0] == "branin"
        assert r[3] >= 0.0
        assert 0.0 <= r[4] <= 100.0
        assert r[5] > 0.0 and r[6] >= 0.0


# -- command line ------------------------------------------------------


def test_cli_run_and_aggregate(tmp_path):
    cfg_path = tmp_path / "exp.cfg"
    cfg_path.write_text(TINY)
    out = tmp_path / "out"
    assert main(["run", "--config", str(cfg_path), "--out", str(out), "--runs", "1"]) == 0
    assert (out / "trace_seed0.csv").exists()
    assert main(["aggregate", "--out", str(out)]) == 0


def test_cli_error_is_machine_readable(tmp_path, capsys):
    cfg_path = tmp_path / "bad.cfg"
    cfg_path.write_text("objective.idd = branin\n")
    code = main(["run", "--config", str(cfg_path), "--out", str(tmp_path / "o")])
    assert code == 2
    err = capsys.readouterr().err.strip()
    payload = json.loads(err)
    assert payload["error"] == "ConfigError"
    assert "unknown config key" in payload["message"]


def test_cli_module_entrypoint():
    proc = subprocess.run(
        [sys.executable, "-m", "fidbo", "--help"],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0
    assert "run" in proc.stdout and "validate-sampler" in proc.stdout
