"""Experiment configuration: typed, sectioned key-value files.

The native format is INI-style sections read by :mod:`configparser`; a
JSON file with the same nested structure is accepted as an alternative.
Unknown sections or keys are rejected, every value is type-checked, and
the fully resolved configuration is echoed into the output directory by
the harness for provenance.
"""

from __future__ import annotations

import configparser
import json
from pathlib import Path

from .dynamics import Schedule


class ConfigError(ValueError):
    """Malformed experiment configuration."""


def _parse_bool(raw: str) -> bool:
    low = str(raw).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {raw!r}")


def _parse_int_list(raw) -> list:
    if isinstance(raw, list):
        return [int(v) for v in raw]
    return [int(tok) for tok in str(raw).split(",") if tok.strip()]


def _parse_float_list(raw) -> list:
    if isinstance(raw, list):
        return [float(v) for v in raw]
    return [float(tok) for tok in str(raw).split(",") if tok.strip()]


def _parse_str_list(raw) -> list:
    if isinstance(raw, list):
        return [str(v) for v in raw]
    return [tok.strip() for tok in str(raw).split(",") if tok.strip()]


def _parse_schedule(raw) -> str:
    Schedule.parse(str(raw))  # validates
    return str(raw)


def _choice(*options):
    def parse(raw):
        val = str(raw).strip()
        if val not in options:
            raise ValueError(f"expected one of {options}, got {raw!r}")
        return val
    return parse


# section -> key -> (parser, default); _REQUIRED means the key must be present
_REQUIRED = object()

SCHEMA = {
    "problem": {
        "kind": (_choice("least_squares", "traffic"), _REQUIRED),
        "seed": (int, 0),
        "seed_mode": (_choice("fixed", "per_run"), "fixed"),
        "m": (int, None),
        "d": (int, None),
        "cond": (float, None),
        "batch_size": (int, None),
        "n": (int, None),
        "r": (float, None),
        "r_max": (int, None),
        "sigma_g": (float, 0.0),
        "congestion": (float, 1.0),
    },
    "map": {
        "kind": (_choice("euclidean", "entropy"), "entropy"),
        "projection": (_choice("none", "simplex"), "none"),
    },
    "graph": {
        "kind": (_choice("mean_field", "erdos_renyi", "custom", "none"), "mean_field"),
        "p": (float, None),
        "seed": (int, 0),
        "seed_mode": (_choice("fixed", "per_run"), "per_run"),
        "theta": (float, 1.0),
        "path": (str, None),
    },
    "integrator": {
        "epsilon": (float, _REQUIRED),
        "eta": (_parse_schedule, _REQUIRED),
        "sigma": (_parse_schedule, "constant:0"),
        "n_steps": (int, _REQUIRED),
        "gradient": (_choice("full", "stochastic"), "full"),
    },
    "metrics": {
        "burn_in": (int, 0),
        "stride": (int, 1),
        "wide_csv": (_parse_bool, False),
        "threshold": (float, None),
        "bounds": (_parse_bool, False),
    },
    "oracle": {
        "tolerance": (float, 1e-10),
        "max_iters": (int, 2_000_000),
        "step": (float, None),
    },
    "run": {
        "name": (str, _REQUIRED),
        "seeds": (_parse_int_list, [0]),
        "n_particles": (int, 1),
        "init": (str, "zeros"),
        "out": (str, "out"),
    },
    "sweep": {
        "n_particles": (_parse_int_list, None),
        "p": (_parse_float_list, None),
        "theta": (_parse_float_list, None),
        "batch_size": (_parse_int_list, None),
        "variants": (_parse_str_list, None),
    },
}

_AXIS_KEYS = ("n_particles", "p", "theta", "batch_size", "variants")


class ExperimentConfig:
    """Validated configuration plus the sweep grid it declares."""

    def __init__(self, data: dict, variants: dict, source: str = "<memory>"):
        self.data = data
        self.variants = variants
        self.source = source

    @property
    def name(self) -> str:
        return self.data["run"]["name"]

    def get(self, section: str, key: str):
        return self.data[section][key]

    def has_sweep(self) -> bool:
        return any(v is not None for v in self.data.get("sweep", {}).values())

    def cells(self) -> list[dict]:
        """Cartesian product of declared sweep axes as override dicts.

        Each cell maps dotted config paths to values, plus "label" and the
        raw axis values for reporting.
        """
        sweep = self.data.get("sweep", {})
        axes = []
        if sweep.get("n_particles") is not None:
            axes.append([("n_particles", "run.n_particles", v) for v in sweep["n_particles"]])
        if sweep.get("p") is not None:
            axes.append([("p", "graph.p", v) for v in sweep["p"]])
        if sweep.get("theta") is not None:
            axes.append([("theta", "graph.theta", v) for v in sweep["theta"]])
        if sweep.get("batch_size") is not None:
            axes.append([("batch_size", "problem.batch_size", v) for v in sweep["batch_size"]])
        if sweep.get("variants") is not None:
            for v in sweep["variants"]:
                if v not in self.variants:
                    raise ConfigError(f"variant {v!r} listed but no [variant:{v}] section found")
            axes.append([("variant", None, v) for v in sweep["variants"]])
        if not axes:
            return [{"label": "cell", "axes": {}, "overrides": {}}]
        cells = [{"label": "", "axes": {}, "overrides": {}}]
        for axis in axes:
            nxt = []
            for cell in cells:
                for axis_name, path, value in axis:
                    tag = f"{value:g}" if isinstance(value, float) else str(value)
                    label = axis_name + tag if axis_name != "variant" else tag
                    c = {
                        "label": f"{cell['label']}_{label}" if cell["label"] else label,
                        "axes": {**cell["axes"], axis_name: value},
                        "overrides": dict(cell["overrides"]),
                    }
                    if path is not None:
                        c["overrides"][path] = value
                    else:
                        c["overrides"].update(self.variants[value])
                    nxt.append(c)
            cells = nxt
        return cells

    def resolve(self, overrides: dict | None = None) -> dict:
        """Deep copy of the typed config with dotted overrides applied."""
        out = {sec: dict(keys) for sec, keys in self.data.items() if sec != "sweep"}
        for path, value in (overrides or {}).items():
            try:
                section, key = path.split(".")
            except ValueError:
                raise ConfigError(f"override path must be section.key, got {path!r}")
            if section not in SCHEMA or key not in SCHEMA[section]:
                raise ConfigError(f"unknown override target {path!r}")
            parser, _ = SCHEMA[section][key]
            out.setdefault(section, {})[key] = parser(value)
        _validate_problem(out)
        return out


def _line_of(raw_text: str, token: str) -> str:
    for lineno, line in enumerate(raw_text.splitlines(), start=1):
        stripped = line.strip()
        if stripped.startswith(token) or stripped.startswith(f"[{token}]"):
            return f" (line {lineno})"
    return ""


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    raw_text = path.read_text()
    if path.suffix == ".json":
        return _from_nested(json.loads(raw_text), raw_text, str(path))
    parser = configparser.ConfigParser()
    parser.optionxform = str  # keep key case
    try:
        parser.read_string(raw_text)
    except configparser.Error as err:
        raise ConfigError(f"{path}: {err}") from err
    nested: dict = {}
    for section in parser.sections():
        nested[section] = dict(parser.items(section))
    return _from_nested(nested, raw_text, str(path))


def _from_nested(nested: dict, raw_text: str, source: str) -> ExperimentConfig:
    data: dict = {}
    variants: dict = {}
    for section, entries in nested.items():
        if section.startswith("variant:"):
            name = section.split(":", 1)[1]
            for path in entries:
                if path.count(".") != 1:
                    raise ConfigError(
                        f"{source}: variant {name!r} key {path!r} must be section.key"
                        + _line_of(raw_text, path))
                sec, key = path.split(".")
                if sec not in SCHEMA or key not in SCHEMA[sec]:
                    raise ConfigError(
                        f"{source}: variant {name!r} overrides unknown key {path!r}"
                        + _line_of(raw_text, path))
            variants[name] = dict(entries)
            continue
        if section not in SCHEMA:
            raise ConfigError(f"{source}: unknown section [{section}]" + _line_of(raw_text, section))
        data[section] = {}
        for key, raw in entries.items():
            if key not in SCHEMA[section]:
                raise ConfigError(
                    f"{source}: unknown key {key!r} in [{section}]" + _line_of(raw_text, key))
            parser_fn, _ = SCHEMA[section][key]
            try:
                data[section][key] = parser_fn(raw)
            except (ValueError, TypeError) as err:
                raise ConfigError(
                    f"{source}: bad value for {section}.{key}: {err}" + _line_of(raw_text, key)
                ) from err
    for section, keys in SCHEMA.items():
        data.setdefault(section, {})
        for key, (_, default) in keys.items():
            if key not in data[section]:
                if default is _REQUIRED:
                    raise ConfigError(f"{source}: missing required key {section}.{key}")
                data[section][key] = default
    cfg = ExperimentConfig(data, variants, source)
    _validate_problem(cfg.resolve({}))
    return cfg


def _validate_problem(resolved: dict) -> None:
    prob = resolved["problem"]
    if prob["kind"] == "least_squares":
        for key in ("m", "d", "cond"):
            if prob.get(key) is None:
                raise ConfigError(f"least_squares problem requires problem.{key}")
    else:
        for key in ("n", "r", "r_max"):
            if prob.get(key) is None:
                raise ConfigError(f"traffic problem requires problem.{key}")
    gr = resolved["graph"]
    if gr["kind"] == "erdos_renyi" and gr.get("p") is None:
        raise ConfigError("erdos_renyi graph requires graph.p")
    if gr["kind"] == "custom" and gr.get("path") is None:
        raise ConfigError("custom graph requires graph.path")
    integ = resolved["integrator"]
    if integ["gradient"] == "stochastic" and prob["kind"] == "least_squares" \
            and prob.get("batch_size") is None:
        raise ConfigError("stochastic least-squares gradient requires problem.batch_size")
    mp = resolved["map"]
    if mp["projection"] == "simplex" and mp["kind"] != "euclidean":
        raise ConfigError("map.projection=simplex is a euclidean-map baseline only")
