"""Run configuration: YAML file, defaults, dotted-key overrides and validation.

Key paths (``section.key``):

====================  ==========================================================
seed                  integer driving every random choice
domain.kind           ``disk`` | ``annulus`` | ``rectangle`` (required)
domain.radius         outer radius of disks and annuli
domain.inner          hole radius of an annulus
domain.width/height   rectangle sides
domain.center         ``[x, y]``
grid.resolution       cells across the longer side (required, >= 8)
patch.lambda          vorticity bound (required, > 0)
patch.mass            total vorticity (> 0)
solver.tol            L1 change (relative to mass) that stops the ascent
solver.max_iter       ascent iteration cap
solver.restarts       extra seeded initial patches besides the uniform field
solver.tie_rtol       relative energy gap under which restarts count as ties
dynamics.init         ``maximizer`` | ``patch`` | ``dump``
dynamics.dump         field dump used when ``init = dump``
dynamics.patch_center centre of the ``patch`` preset
dynamics.cfl          Courant number in (0, 1]
dynamics.limiter      ``superbee`` | ``mc`` | ``minmod``
dynamics.T            horizon; ``null`` means ``turnovers`` turnover times
dynamics.turnovers    horizon in turnover times when ``T`` is null
dynamics.sample_interval  time between samples; ``null`` means ``T / samples``
dynamics.samples      number of sample intervals when no interval is given
dynamics.energy_tol   relative energy drift reported as acceptable
stability.deltas      non-empty list of L1 perturbation sizes
stability.kinds       subset of ``translate``, ``boundary-noise``, ``amplitude-dent``
stability.p           list of integer exponents (1 and 2 are always tracked)
stability.seeds       per-entry perturbation seeds
stability.model       ``auto`` | ``single`` | ``orbit``
stability.n_theta     rotation samples of an orbit model
stability.refine      angular refinement steps between samples
stability.maximizer   optional dump of a precomputed maximizer
stability.T / turnovers / samples   horizon and sampling, as for dynamics
stability.eps_factor  verdict tolerance as a multiple of delta
output.directory      output folder (``--out`` overrides it)
output.dump           write field dumps
output.dump_fields    write a dump at every evolution sample time
oracle.*              resolutions and tolerances of the oracle checks
====================  ==========================================================
"""

from __future__ import annotations

import copy
import re

import yaml


class _Loader(yaml.SafeLoader):
    pass


# YAML 1.1 wants a dot in floats; accept 1e-8 and friends as well
_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(
        r"""^(?:[-+]?(?:[0-9][0-9_]*)\.[0-9_]*(?:[eE][-+]?[0-9]+)?
        |[-+]?(?:[0-9][0-9_]*)(?:[eE][-+]?[0-9]+)
        |\.[0-9_]+(?:[eE][-+]?[0-9]+)?
        |[-+]?\.(?:inf|Inf|INF)
        |\.(?:nan|NaN|NAN))$""",
        re.X,
    ),
    list("-+0123456789."),
)


def _load(text):
    return yaml.load(text, Loader=_Loader)


class _Required:
    # survives deepcopy so identity checks keep working
    def __deepcopy__(self, memo):
        return self

    def __repr__(self):
        return "<required>"


REQUIRED = _Required()

DEFAULTS = {
    "seed": 0,
    "domain": {
        "kind": REQUIRED,
        "radius": 1.0,
        "inner": 0.5,
        "width": 2.0,
        "height": 1.0,
        "center": [0.0, 0.0],
    },
    "grid": {"resolution": REQUIRED},
    "patch": {"lambda": REQUIRED, "mass": 1.0},
    "solver": {"tol": 1e-8, "max_iter": 500, "restarts": 0, "tie_rtol": 1e-6},
    "dynamics": {
        "init": "maximizer",
        "dump": None,
        "patch_center": [0.0, 0.0],
        "cfl": 0.4,
        "limiter": "superbee",
        "T": None,
        "turnovers": 10.0,
        "sample_interval": None,
        "samples": 20,
        "energy_tol": 1e-3,
    },
    "stability": {
        "deltas": [0.025, 0.05, 0.1],
        "kinds": ["translate"],
        "p": [1, 2],
        "seeds": [0],
        "model": "auto",
        "n_theta": 64,
        "refine": 8,
        "maximizer": None,
        "T": None,
        "turnovers": 10.0,
        "samples": 40,
        "eps_factor": 4.0,
    },
    "output": {"directory": "out", "dump": True, "dump_fields": False},
    "oracle": {
        "poisson_resolutions": [32, 64, 128],
        "poisson_order": 1.7,
        "fuzz_trials": 1000,
        "fuzz_size": 16,
        "kernel_resolutions": [32, 64],
        "kernel_order": 1.7,
    },
}

# sections each subcommand reads; all must be present in the resolved config
SECTIONS = {
    "solve": ("domain", "grid", "patch", "solver", "output"),
    "evolve": ("domain", "grid", "patch", "solver", "dynamics", "output"),
    "stability": ("domain", "grid", "patch", "solver", "dynamics", "stability", "output"),
    "oracle": ("oracle", "output"),
}


class ConfigError(Exception):
    pass


def _merge(base, update, prefix=""):
    for key, value in update.items():
        path = f"{prefix}{key}"
        if key not in base:
            raise ConfigError(f"unknown config key '{path}'")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"'{path}' must be a mapping")
            _merge(base[key], value, path + ".")
        else:
            base[key] = value


def parse_override(text):
    """``a.b=value`` -> ``("a.b", parsed value)``; values are parsed as YAML scalars."""
    if "=" not in text:
        raise ConfigError(f"override '{text}' is not of the form key=value")
    key, raw = text.split("=", 1)
    key = key.strip()
    if not key:
        raise ConfigError(f"override '{text}' has an empty key")
    try:
        value = _load(raw) if raw.strip() else None
    except yaml.YAMLError as exc:
        raise ConfigError(f"override '{key}': cannot parse value {raw!r}: {exc}") from exc
    return key, value


def _set_path(cfg, key, value):
    node = cfg
    parts = key.split(".")
    for part in parts[:-1]:
        if part not in node or not isinstance(node[part], dict):
            raise ConfigError(f"unknown config key '{key}'")
        node = node[part]
    if parts[-1] not in node:
        raise ConfigError(f"unknown config key '{key}'")
    if isinstance(node[parts[-1]], dict):
        if not isinstance(value, dict):
            raise ConfigError(f"'{key}' must be a mapping")
        _merge(node[parts[-1]], value, key + ".")
    else:
        node[parts[-1]] = value


def load_config(path=None, overrides=()):
    """Resolved configuration: defaults, then the file, then overrides."""
    cfg = copy.deepcopy(DEFAULTS)
    if path is not None:
        try:
            with open(path) as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
        try:
            data = _load(text)
        except yaml.MarkedYAMLError as exc:
            mark = exc.problem_mark
            where = f"line {mark.line + 1}, column {mark.column + 1}" if mark else "unknown position"
            raise ConfigError(f"config parse error in {path} at {where}: {exc.problem}") from exc
        except yaml.YAMLError as exc:
            raise ConfigError(f"config parse error in {path}: {exc}") from exc
        if data is None:
            data = {}
        if not isinstance(data, dict):
            raise ConfigError(f"config {path} must be a mapping of sections")
        _merge(cfg, data)
    for item in overrides:
        key, value = parse_override(item)
        _set_path(cfg, key, value)
    return cfg


def _missing(node, prefix=""):
    out = []
    for key, value in node.items():
        if value is REQUIRED or value is None and DEFAULTS.get(prefix.rstrip("."), {}).get(key) is REQUIRED:
            out.append(prefix + key)
        elif isinstance(value, dict):
            out.extend(_missing(value, prefix + key + "."))
    return out


def get(cfg, key):
    node = cfg
    for part in key.split("."):
        node = node[part]
    return node


def _number(cfg, key, lo=None, hi=None, integer=False, lo_open=False, optional=False):
    value = get(cfg, key)
    if value is None and optional:
        return
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"'{key}' must be a number, got {value!r}")
    if integer and int(value) != value:
        raise ConfigError(f"'{key}' must be an integer, got {value!r}")
    if value != value:
        raise ConfigError(f"'{key}' is NaN")
    if lo is not None and (value < lo or (lo_open and value == lo)):
        raise ConfigError(f"'{key}' must be {'>' if lo_open else '>='} {lo}, got {value!r}")
    if hi is not None and value > hi:
        raise ConfigError(f"'{key}' must be <= {hi}, got {value!r}")


def _choice(cfg, key, options):
    value = get(cfg, key)
    if value not in options:
        raise ConfigError(f"'{key}' must be one of {', '.join(options)}; got {value!r}")


def _number_list(cfg, key, lo=None, integer=False, nonempty=True):
    values = get(cfg, key)
    if not isinstance(values, list):
        values = [values]
    if nonempty and not values:
        raise ConfigError(f"'{key}' must be a non-empty list")
    for k, v in enumerate(values):
        if isinstance(v, bool) or not isinstance(v, (int, float)) or v != v:
            raise ConfigError(f"'{key}[{k}]' must be a number, got {v!r}")
        if integer and int(v) != v:
            raise ConfigError(f"'{key}[{k}]' must be an integer, got {v!r}")
        if lo is not None and v < lo:
            raise ConfigError(f"'{key}[{k}]' must be >= {lo}, got {v!r}")
    return values


def _point(cfg, key):
    v = get(cfg, key)
    if not (isinstance(v, list) and len(v) == 2 and all(isinstance(c, (int, float)) for c in v)):
        raise ConfigError(f"'{key}' must be a list [x, y], got {v!r}")


def validate(cfg, command):
    """Check the sections ``command`` reads; raise :class:`ConfigError` naming the field."""
    if command not in SECTIONS:
        raise ConfigError(f"unknown command {command!r}")
    sections = SECTIONS[command]
    missing = [m for m in _missing(cfg) if m.split(".")[0] in sections]
    if missing:
        raise ConfigError(f"missing required field '{missing[0]}'")
    _number(cfg, "seed", lo=0, integer=True)
    if "domain" in sections:
        _choice(cfg, "domain.kind", ("disk", "annulus", "rectangle"))
        for key in ("radius", "inner", "width", "height"):
            _number(cfg, f"domain.{key}", lo=0, lo_open=True)
        _point(cfg, "domain.center")
        _number(cfg, "grid.resolution", lo=8, integer=True)
        _number(cfg, "patch.lambda", lo=0, lo_open=True)
        _number(cfg, "patch.mass", lo=0, lo_open=True)
        _number(cfg, "solver.tol", lo=0, lo_open=True)
        _number(cfg, "solver.max_iter", lo=1, integer=True)
        _number(cfg, "solver.restarts", lo=0, integer=True)
        _number(cfg, "solver.tie_rtol", lo=0)
    if "dynamics" in sections:
        _choice(cfg, "dynamics.init", ("maximizer", "patch", "dump"))
        if cfg["dynamics"]["init"] == "dump" and command == "evolve" and not cfg["dynamics"]["dump"]:
            raise ConfigError("missing required field 'dynamics.dump' (needed when dynamics.init = dump)")
        _point(cfg, "dynamics.patch_center")
        _number(cfg, "dynamics.cfl", lo=0, hi=1, lo_open=True)
        _choice(cfg, "dynamics.limiter", ("superbee", "mc", "minmod"))
        _number(cfg, "dynamics.T", lo=0, optional=True)
        _number(cfg, "dynamics.turnovers", lo=0, lo_open=True)
        _number(cfg, "dynamics.sample_interval", lo=0, lo_open=True, optional=True)
        _number(cfg, "dynamics.samples", lo=1, integer=True)
        _number(cfg, "dynamics.energy_tol", lo=0)
    if "stability" in sections:
        deltas = get(cfg, "stability.deltas")
        if deltas is None or deltas == []:
            raise ConfigError("'stability.deltas' must be a non-empty list")
        _number_list(cfg, "stability.deltas", lo=0)
        kinds = get(cfg, "stability.kinds")
        kinds = kinds if isinstance(kinds, list) else [kinds]
        if not kinds:
            raise ConfigError("'stability.kinds' must be a non-empty list")
        for k in kinds:
            if k not in ("translate", "boundary-noise", "amplitude-dent"):
                raise ConfigError(f"'stability.kinds' has unknown kind {k!r}")
        _number_list(cfg, "stability.p", lo=1, integer=True)
        _number_list(cfg, "stability.seeds", lo=0, integer=True)
        _choice(cfg, "stability.model", ("auto", "single", "orbit"))
        _number(cfg, "stability.n_theta", lo=1, integer=True)
        _number(cfg, "stability.refine", lo=0, integer=True)
        _number(cfg, "stability.T", lo=0, optional=True)
        _number(cfg, "stability.turnovers", lo=0, lo_open=True)
        _number(cfg, "stability.samples", lo=1, integer=True)
        _number(cfg, "stability.eps_factor", lo=0, lo_open=True)
    if "oracle" in sections:
        _number_list(cfg, "oracle.poisson_resolutions", lo=8, integer=True)
        if len(get(cfg, "oracle.poisson_resolutions")) < 2:
            raise ConfigError("'oracle.poisson_resolutions' needs at least two entries")
        _number_list(cfg, "oracle.kernel_resolutions", lo=8, integer=True)
        if len(get(cfg, "oracle.kernel_resolutions")) < 2:
            raise ConfigError("'oracle.kernel_resolutions' needs at least two entries")
        _number(cfg, "oracle.poisson_order", lo=0)
        _number(cfg, "oracle.kernel_order", lo=0)
        _number(cfg, "oracle.fuzz_trials", lo=0, integer=True)
        _number(cfg, "oracle.fuzz_size", lo=1, integer=True)
    if not isinstance(get(cfg, "output.directory"), str):
        raise ConfigError("'output.directory' must be a string")


def dump_config(cfg):
    """Canonical YAML text of a resolved config."""
    def plain(node):
        if isinstance(node, dict):
            return {k: plain(v) for k, v in node.items()}
        return None if node is REQUIRED else node

    return yaml.safe_dump(plain(cfg), sort_keys=True, default_flow_style=None, width=1000)
