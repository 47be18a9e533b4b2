"""Experiment config loading and strict schema validation.

Configs are YAML (key/value with nested sections), schema-versioned.
Unknown keys are errors: a silent typo in a sweep name would invalidate a
study, so every key is checked against the schema for its section.
"""

import yaml

from .errors import ConfigError

SCHEMA_VERSION = 1

KINDS = (
    "kn-invariance-seed",
    "kn-invariance-width",
    "kn-invariance-depth",
    "kn-invariance-activation",
    "kt-spectrum",
    "kr-spectrum",
    "kr-correlation",
    "dynamics-sim",
    "train-study",
    "optimizer-compare",
)

_PHASE_KEYS = {"kind", "steps", "lr"}

_SECTION_KEYS = {
    "network": {"input_dim", "hidden", "activation"},
    "grid": {"n_per_axis", "mode"},
    "train": {"phases", "snapshot_epochs", "test_points", "divergence_factor"},
    "dynamics": {"eta", "t_end_frac", "n_steps"},
    "correlate": {"features", "targets", "table"},
    "output": {"persist_kernels"},
}

_ROOT_KEYS = {
    "schema_version",
    "kind",
    "description",
    "seeds",
    "benchmark",
    "families",
    "widths",
    "depths",
    "activations",
    "strategies",
    "thresholds",
} | set(_SECTION_KEYS)

_REQUIRED = {
    "kn-invariance-seed": {"seeds", "network", "grid"},
    "kn-invariance-width": {"seeds", "widths", "network", "grid"},
    "kn-invariance-depth": {"seeds", "depths", "network", "grid"},
    "kn-invariance-activation": {"seeds", "activations", "network", "grid"},
    "kt-spectrum": {"families", "network", "grid"},
    "kr-spectrum": {"benchmark", "families", "network", "grid"},
    "kr-correlation": {"benchmark", "families", "network", "grid", "correlate"},
    "dynamics-sim": {"benchmark", "families", "network", "grid", "dynamics"},
    "train-study": {"benchmark", "families", "seeds", "network", "grid", "train"},
    "optimizer-compare": {"benchmark", "families", "network", "grid", "strategies"},
}


def _check_keys(mapping, allowed, path):
    if not isinstance(mapping, dict):
        raise ConfigError(f"section '{path}' must be a mapping")
    for key in mapping:
        if key not in allowed:
            raise ConfigError(f"unknown key '{path}.{key}'" if path else f"unknown key '{key}'")


def _check_family_entry(entry, path):
    _check_keys(entry, {"family", "params"}, path)
    if "family" not in entry:
        raise ConfigError(f"'{path}' needs a 'family' key")
    params = entry.get("params", {})
    if not isinstance(params, dict):
        raise ConfigError(f"'{path}.params' must be a mapping")
    for k in params:
        if k not in ("alpha", "beta", "gamma"):
            raise ConfigError(f"unknown key '{path}.params.{k}'")


def _check_phases(phases, path):
    if not isinstance(phases, list) or not phases:
        raise ConfigError(f"'{path}' must be a nonempty list")
    for i, ph in enumerate(phases):
        _check_keys(ph, _PHASE_KEYS, f"{path}[{i}]")
        if "kind" not in ph or "steps" not in ph:
            raise ConfigError(f"'{path}[{i}]' needs 'kind' and 'steps'")


def validate(config):
    _check_keys(config, _ROOT_KEYS, "")
    version = config.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ConfigError(f"schema_version must be {SCHEMA_VERSION}, got {version!r}")
    kind = config.get("kind")
    if kind not in KINDS:
        raise ConfigError(f"unknown experiment kind {kind!r} (choose from {KINDS})")
    for section, allowed in _SECTION_KEYS.items():
        if section in config:
            _check_keys(config[section], allowed, section)
    if "train" in config and "phases" in config["train"]:
        _check_phases(config["train"]["phases"], "train.phases")
    for i, strat in enumerate(config.get("strategies", []) or []):
        _check_keys(strat, {"name", "phases"}, f"strategies[{i}]")
        _check_phases(strat.get("phases", []), f"strategies[{i}].phases")
    for i, fam in enumerate(config.get("families", []) or []):
        _check_family_entry(fam, f"families[{i}]")
    for i, th in enumerate(config.get("thresholds", []) or []):
        _check_keys(th, {"metric", "op", "value"}, f"thresholds[{i}]")
        if th.get("op") not in ("le", "ge", "lt", "gt", "eq"):
            raise ConfigError(f"thresholds[{i}].op must be one of le/ge/lt/gt/eq")
    missing = _REQUIRED[kind] - set(config)
    if missing:
        raise ConfigError(f"kind '{kind}' requires missing sections: {sorted(missing)}")
    sweeps = [k for k in ("widths", "depths", "activations") if k in config]
    for key in sweeps:
        if not config[key]:
            raise ConfigError(f"sweep list '{key}' must be nonempty")
    if "seeds" in config and not config["seeds"]:
        raise ConfigError("sweep list 'seeds' must be nonempty")
    if "families" in config and not config["families"]:
        raise ConfigError("sweep list 'families' must be nonempty")
    return config


def load_config(path):
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config '{path}': {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML in '{path}': {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"config '{path}' must be a mapping")
    return validate(raw)


def network_sizes(config, input_dim=None, width=None, depth=None):
    """Layer sizes from the network section, with sweep overrides applied."""
    netc = config["network"]
    hidden = list(netc.get("hidden", [500, 500]))
    if width is not None:
        hidden = [int(width)] * len(hidden)
    if depth is not None:
        hidden = [int(hidden[0])] * int(depth)
    d = int(input_dim if input_dim is not None else netc.get("input_dim", 1))
    return (d, *[int(h) for h in hidden], 1)
