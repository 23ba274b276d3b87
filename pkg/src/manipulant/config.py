"""Pipeline configuration (TOML) and artifact provenance."""
from __future__ import annotations

import copy
import hashlib
import os
import sys
from pathlib import Path

from .errors import ConfigError

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

DEFAULTS = {
    "robot": {"model": "arm7"},
    "ingest": {"frames_per_action": 20, "noise_level": 0.005, "sample_rate": 60.0, "seed": 0,
               "workers": 1},
    "analysis": {"task": "SM", "arm": "right", "kind": "velocity", "frame": "shoulder",
                 "actions": []},
    "gmm": {"K": 0, "max_em_iter": 100, "tol": 1e-8, "seed": 0, "init": "time"},
    "controller": {"K_M": 5.0, "K_x": 10.0, "dt": 1e-3, "duration": 3.0, "switch_time": 1.0,
                   "damping": 1e-4, "divergence_floor": 0.1, "priority_schedule": [],
                   "target_position": []},
    "report": {"planes": ["xy", "xz", "yz"], "ellipse_count": 7},
}

DEFAULT_K = {"SL": 5, "SM": 5, "SH": 5, "C5": 3, "C10": 3, "custom": 5}


def _merge(base, override, where):
    for section, values in override.items():
        if section not in base:
            raise ConfigError(f"{where}: unknown section [{section}]")
        if not isinstance(values, dict):
            raise ConfigError(f"{where}: [{section}] must be a table")
        for key, val in values.items():
            if key not in base[section]:
                raise ConfigError(f"{where}: unknown key {key!r} in [{section}]")
            default = base[section][key]
            if isinstance(default, float) and isinstance(val, int) and not isinstance(val, bool):
                val = float(val)
            if isinstance(default, (int, float)) and not isinstance(default, bool) \
                    and not isinstance(val, (int, float, list)):
                raise ConfigError(f"{where}: [{section}] {key} must be numeric")
            base[section][key] = val
    return base


def load_config(path=None, overrides=None):
    """Resolved configuration: defaults, then the TOML file, then ``overrides``.

    ``MANIPULANT_SEED`` (if set) replaces every seed.

    Raises
    ------
    ConfigError
        Invalid TOML (message carries the line number), unknown sections or keys.
    """
    cfg = copy.deepcopy(DEFAULTS)
    if path is not None:
        try:
            with open(path, "rb") as fh:
                doc = tomllib.load(fh)
        except FileNotFoundError as exc:
            raise ConfigError(f"config file {path} not found") from exc
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: invalid TOML: {exc}") from exc
        _merge(cfg, doc, str(path))
    if overrides:
        _merge(cfg, {s: {k: v for k, v in kv.items() if v is not None} for s, kv in overrides.items()},
               "command line")
    seed = os.environ.get("MANIPULANT_SEED")
    if seed is not None:
        try:
            seed = int(seed)
        except ValueError as exc:
            raise ConfigError("MANIPULANT_SEED must be an integer") from exc
        cfg["ingest"]["seed"] = seed
        cfg["gmm"]["seed"] = seed
    return cfg


def controller_config(cfg):
    from .control import ControllerConfig

    c = cfg["controller"]
    sched = tuple((s["t_start"], s["mode"]) for s in c["priority_schedule"])
    return ControllerConfig(K_M=c["K_M"], K_x=c["K_x"], dt=c["dt"], switch_time=c["switch_time"],
                            damping=c["damping"], priority_schedule=sched,
                            divergence_floor=c["divergence_floor"])


def file_digest(paths):
    """SHA-256 over the contents of ``paths`` in sorted-name order."""
    h = hashlib.sha256()
    for p in sorted(Path(p) for p in paths):
        h.update(p.name.encode())
        h.update(b"\0")
        h.update(p.read_bytes())
    return h.hexdigest()


def provenance(cfg, inputs=(), command=None):
    from . import __version__

    doc = {"version": __version__, "config": cfg, "inputs_sha256": file_digest(inputs)}
    if command:
        doc["command"] = command
    return doc
