"""Run configuration: a versioned YAML file validated with line-level diagnostics.

Units: frequencies in units of the rf Larmor rate, times in units of
``pi / omega_rf``, the Rydberg lifetime in microseconds together with
``omega_rf / 2 pi`` in MHz. See ``README.md`` for the full schema.
"""
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from ._validation import DomainError
from .platform import DEFAULT_LIFETIME_US, DEFAULT_RF_MHZ, PlatformParams

SCHEMA_VERSION = 1
ENGINES = ("grape", "liegroup", "analyze")


class ConfigError(DomainError):
    """Invalid configuration; ``problems`` lists ``(line, field, message)``."""

    def __init__(self, source, problems):
        self.source = source
        self.problems = list(problems)
        lines = [f"{source}:{line if line else '?'}: {name}: {msg}"
                 for line, name, msg in self.problems]
        super().__init__("invalid configuration\n" + "\n".join(lines))


# -- field checks -----------------------------------------------------------

def _is_int(v):
    return isinstance(v, int) and not isinstance(v, bool)


def _is_num(v):
    return (isinstance(v, (int, float)) and not isinstance(v, bool))


def _int(lo=None):
    def check(v):
        if not _is_int(v):
            return "must be an integer"
        if lo is not None and v < lo:
            return f"must be >= {lo}"
    return check


def _num(positive=False, nonnegative=False, below=None):
    def check(v):
        if not _is_num(v):
            return "must be a number"
        if positive and not v > 0:
            return "must be positive"
        if nonnegative and v < 0:
            return "must be nonnegative"
        if below is not None and not v < below:
            return f"must be < {below}"
    return check


def _choice(*options):
    def check(v):
        if v not in options:
            return f"must be one of {', '.join(map(str, options))}"
    return check


def _bool(v):
    if not isinstance(v, bool):
        return "must be true or false"


def _str(v):
    if not isinstance(v, str) or not v:
        return "must be a nonempty string"


def _optional(check):
    def wrapped(v):
        return None if v is None else check(v)
    return wrapped


def _list_of(item_check, nonempty=True):
    def check(v):
        if not isinstance(v, list):
            return "must be a list"
        if nonempty and not v:
            return "must not be empty"
        for x in v:
            msg = item_check(x)
            if msg:
                return f"every entry {msg}"
    return check


SECTIONS = {
    "platform": {
        "d_phys": _optional(_int(2)),
        "F_a": _num(nonnegative=True),
        "F_r": _num(nonnegative=True),
        "Omega_L": _num(positive=True),
        "Delta_L": _num(),
        "omega_0": _num(),
        "g_ratio": _num(),
        "lifetime_us": _optional(_num(positive=True)),
        "rf_mhz": _num(positive=True),
        "gamma_r": _num(nonnegative=True),
    },
    "target": {
        "gate": _str,
        "k": _int(2),
        "level_map": _optional(_list_of(_int(0))),
    },
    "grape": {
        "n_steps": _int(1),
        "total_time": _num(positive=True),
        "method": _choice("lbfgs", "ascent"),
        "symmetric": _bool,
        "max_iter": _int(1),
        "stall_iterations": _int(1),
        "stall_tol": _num(nonnegative=True),
    },
    "liegroup": {
        "n_layers": _int(1),
        "mode": _choice("local", "global_sign_flip"),
        "search": _bool,
        "max_layers": _int(1),
        "method": _choice("lbfgs", "ascent"),
        "max_iter": _int(1),
    },
    "analyze": {
        "threshold": _num(positive=True),
        "lie_closure": _bool,
    },
    "sweep": {
        "total_times": _list_of(_num(positive=True)),
        "n_steps": _int(1),
        "step_time": _num(positive=True),
    },
    "outputs": {
        "pair_spectrum": _bool,
        "rabi_ratios": _bool,
    },
}

TOP_LEVEL = {
    "schema_version": _choice(SCHEMA_VERSION),
    "engine": _choice(*ENGINES),
    "seeds": _list_of(_int(0)),
    "output_dir": _str,
    "open_system": _bool,
    "target_infidelity": _num(positive=True, below=1),
}

REQUIRED = {
    None: ("schema_version", "engine", "target"),
    "target": ("gate", "k"),
    "grape": ("n_steps", "total_time"),
    "liegroup": ("n_layers",),
    "sweep": ("total_times",),
}


@dataclass
class RunConfig:
    """Validated run configuration (times already converted to ``1 / omega_rf``)."""

    platform: PlatformParams
    gate: str
    k: int
    engine: str
    level_map: list = None
    seeds: list = field(default_factory=lambda: [0, 1, 2, 3, 4])
    output_dir: str = "output"
    open_system: bool = False
    target_infidelity: float = 1e-3
    grape: dict = field(default_factory=dict)
    liegroup: dict = field(default_factory=dict)
    analyze: dict = field(default_factory=dict)
    sweep: dict = None
    outputs: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict, repr=False)
    source: str = "<config>"


def _line_map(node, prefix=(), out=None):
    """Map each key path of a composed YAML mapping to its 1-based line."""
    out = {} if out is None else out
    if isinstance(node, yaml.MappingNode):
        for key_node, value_node in node.value:
            path = prefix + (str(key_node.value),)
            out[path] = key_node.start_mark.line + 1
            _line_map(value_node, path, out)
    return out


def parse_config(text, source="<config>"):
    """Parse and validate config text; raises :class:`ConfigError`."""
    try:
        node = yaml.compose(text)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = mark.line + 1 if mark is not None else None
        raise ConfigError(source, [(line, "<syntax>", str(exc).splitlines()[0])]) from None
    if not isinstance(data, dict):
        raise ConfigError(source, [(1, "<root>", "config must be a mapping")])
    lines = _line_map(node)
    problems = []

    def report(path, msg):
        problems.append((lines.get(path, lines.get(path[:1])), ".".join(path), msg))

    for key, value in data.items():
        key = str(key)
        if key in TOP_LEVEL:
            msg = TOP_LEVEL[key](value)
            if msg:
                report((key,), msg)
        elif key in SECTIONS:
            if not isinstance(value, dict):
                report((key,), "must be a mapping")
                continue
            for sub, v in value.items():
                sub = str(sub)
                check = SECTIONS[key].get(sub)
                if check is None:
                    report((key, sub), f"unknown field (expected one of {', '.join(SECTIONS[key])})")
                    continue
                msg = check(v)
                if msg:
                    report((key, sub), msg)
        else:
            report((key,), "unknown field")
    for section, keys in REQUIRED.items():
        container = data if section is None else data.get(section)
        if section is not None and not isinstance(container, dict):
            continue
        for key in keys:
            if key not in container:
                where = (section,) if section else ()
                problems.append((lines.get(where), ".".join(where + (key,)), "is required"))
    engine = data.get("engine")
    if engine in ("grape", "liegroup") and not isinstance(data.get(engine), dict):
        problems.append((lines.get(("engine",)), engine, f"section required for engine={engine}"))
    plat = data.get("platform") or {}
    if isinstance(plat, dict):
        if "gamma_r" in plat and "lifetime_us" in plat:
            report(("platform", "gamma_r"), "give either gamma_r or lifetime_us, not both")
        if "d_phys" in plat and plat.get("d_phys") is not None and "F_a" in plat:
            report(("platform", "d_phys"), "give either d_phys or F_a, not both")
    sweep = data.get("sweep")
    if isinstance(sweep, dict) and "n_steps" in sweep and "step_time" in sweep:
        report(("sweep", "step_time"), "give either n_steps or step_time, not both")
    if isinstance(sweep, dict) and engine not in (None, "grape"):
        report(("sweep",), "sweeps are only defined for engine=grape")
    if problems:
        raise ConfigError(source, problems)

    try:
        params = _build_platform(plat)
    except DomainError as exc:
        raise ConfigError(source, [(lines.get(("platform",)), "platform", str(exc))]) from None
    target = data["target"]
    level_map = target.get("level_map")
    k = target["k"]
    if k > params.d_phys:
        raise ConfigError(source, [(lines.get(("target", "k")), "target.k",
                                    f"k={k} exceeds the {params.d_phys} platform levels")])
    if level_map is not None and (len(level_map) != k or len(set(level_map)) != k
                                  or max(level_map) >= params.d_phys):
        raise ConfigError(source, [(lines.get(("target", "level_map")), "target.level_map",
                                    f"needs {k} distinct levels below {params.d_phys}")])

    grape = dict(data.get("grape") or {})
    if "total_time" in grape:
        grape["total_time_over_pi"] = grape["total_time"]
    sweep = dict(sweep) if isinstance(sweep, dict) else None
    return RunConfig(
        platform=params,
        gate=target["gate"],
        k=k,
        engine=engine,
        level_map=level_map,
        seeds=list(data.get("seeds", [0, 1, 2, 3, 4])),
        output_dir=data.get("output_dir", "output"),
        open_system=data.get("open_system", False),
        target_infidelity=float(data.get("target_infidelity", 1e-3)),
        grape=grape,
        liegroup=dict(data.get("liegroup") or {}),
        analyze=dict(data.get("analyze") or {}),
        sweep=sweep,
        outputs=dict(data.get("outputs") or {}),
        raw=data,
        source=source,
    )


def _build_platform(plat):
    kwargs = {k: float(plat[k]) for k in ("F_a", "F_r", "Omega_L", "Delta_L", "omega_0", "g_ratio")
              if k in plat}
    if "gamma_r" in plat:
        kwargs["gamma_r"] = float(plat["gamma_r"])
    else:
        lifetime = plat.get("lifetime_us", DEFAULT_LIFETIME_US)
        rf = plat.get("rf_mhz", DEFAULT_RF_MHZ)
        kwargs["gamma_r"] = PlatformParams.from_physical(rf, lifetime).gamma_r
    if plat.get("d_phys") is not None:
        d = plat["d_phys"]
        F_a = (d - 1) / 2
        kwargs.setdefault("F_r", F_a + 1)
        kwargs["F_a"] = F_a
    return PlatformParams(**kwargs)


def load_config(path):
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(str(path), [(None, "<file>", exc.strerror or str(exc))]) from None
    return parse_config(text, str(path))
