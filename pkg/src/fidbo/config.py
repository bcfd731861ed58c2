"""Flat dotted key-value experiment configuration.

The on-disk format is one ``key = value`` pair per line; ``#`` starts a
comment.  Values are parsed as int, float, bool, or string, in that order
of preference.  Unknown keys are rejected so typos fail loudly instead of
silently running a default.
"""

from __future__ import annotations

from .errors import ConfigError
from .optimizer import ExperimentConfig

__all__ = ["parse_config_text", "load_config", "build_experiment_config"]

# keys consumed by the bench harness rather than a single run
_HARNESS_KEYS = {
    "runs",
    "seed",
    "validate.steps",
    "validate.m",
    "validate.n_samples",
    "validate.burn_in",
    "validate.thin",
}

_SCALAR_KEYS = {
    "mode",
    "budget_s",
    "max_steps",
    "n_init",
    "sim_scale",
}

_OBJECTIVE_KEYS = {
    "objective.id",
    "objective.transform",
    "objective.shift_scale",
    "objective.dim",
    "objective.lengthscale",
    "objective.l_ev",
    "objective.amplitude",
    "objective.fstar_grid",  # post-hoc optimum search size (harness only)
}

_COST_KEYS = {"cost.id", "cost.l_c", "cost.min_cost", "cost.max_cost"}

_MODEL_KEYS = {
    "model.k_hyper": "k_hyper",
    "model.burn_in": "burn_in",
    "model.thin": "thin",
    "model.noise_sd": "noise_sd",
    "support.m": "m_support",
    "support.n_samples": "n_min_samples",
    "acquisition.n_min_draws": "n_min_draws",
    "recommend.mode": "recommend_mode",
    "overhead.mode": "overhead_mode",
}

_OVERHEAD_PARAM_KEYS = {"overhead.o0", "overhead.o1", "overhead.o2"}

_ALL_KEYS = (
    _HARNESS_KEYS
    | _SCALAR_KEYS
    | _OBJECTIVE_KEYS
    | _COST_KEYS
    | set(_MODEL_KEYS)
    | _OVERHEAD_PARAM_KEYS
)


def _parse_value(text):
    t = text.strip()
    low = t.lower()
    if low in ("true", "false"):
        return low == "true"
    if low in ("none", "null"):
        return None
    try:
        return int(t)
    except ValueError:
        pass
    try:
        return float(t)
    except ValueError:
        pass
    return t


def parse_config_text(text):
    """Parse config text into a flat {dotted key: value} dict."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, val = line.partition("=")
        key = key.strip()
        if key not in _ALL_KEYS:
            raise ConfigError(f"line {lineno}: unknown config key {key!r}")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = _parse_value(val)
    return out


def load_config(path):
    with open(path) as fh:
        return parse_config_text(fh.read())


def build_experiment_config(flat, *, seed=0):
    """Translate a flat config dict into an :class:`ExperimentConfig`.

    Harness-level keys (runs, seed, validate.*) are ignored here; the
    caller owns them.
    """
    kwargs = {"seed": seed}
    obj_params = {}
    cost_params = {}
    overhead = {}
    for key, val in flat.items():
        if key in _HARNESS_KEYS:
            continue
        if key in _SCALAR_KEYS:
            kwargs[key] = val
        elif key == "objective.id":
            kwargs["objective"] = val
        elif key == "objective.fstar_grid":
            continue  # consumed by the bench harness, not the run
        elif key in _OBJECTIVE_KEYS:
            obj_params[key.split(".", 1)[1]] = val
        elif key == "cost.id":
            kwargs["cost"] = val
        elif key in _COST_KEYS:
            cost_params[key.split(".", 1)[1]] = val
        elif key in _MODEL_KEYS:
            kwargs[_MODEL_KEYS[key]] = val
        elif key in _OVERHEAD_PARAM_KEYS:
            overhead[key.split(".", 1)[1]] = float(val)
        else:  # pragma: no cover - guarded by parse_config_text
            raise ConfigError(f"unhandled key {key!r}")
    if obj_params:
        kwargs["objective_params"] = obj_params
    if cost_params:
        kwargs["cost_params"] = cost_params
    if overhead:
        base = {"o0": 0.0, "o1": 0.0, "o2": 1.0}
        base.update(overhead)
        kwargs["overhead_params"] = (base["o0"], base["o1"], base["o2"])
    try:
        return ExperimentConfig(**kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
