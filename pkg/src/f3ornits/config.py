"""Flat key = value run configuration and its materialization.

The on-disk format is one `key = value` pair per line, `#` comments, blank
lines ignored.  Dotted keys carry structured overrides:

    param.<name>                 model parameter override (see models)
    dt0.<label>                  per-subsystem startup step
    caps.<label>.max_input_degree
    caps.<label>.imposed_step    implies the subsystem cannot vary its step

Everything else is a plain field of RunConfig.  Unknown keys are rejected
by name; so are missing required ones.  `materialize` turns a RunConfig
into the built model plus ready-to-run master options, deriving the step
bounds that default from the model horizon: dt_min = smallest dt0, dt_max
= a tenth of the simulated interval.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

from .errors import ConfigError
from .master import MasterOptions
from .models import BenchmarkModel, build_model
from .orders import CALIBRATION_MODES
from .stepper import ERROR_NORMS, Tolerances
from .subsystem import Capabilities

METHODS = ("f3ornits", "jacobi")

_TRUE = {"true", "yes", "on", "1"}
_FALSE = {"false", "no", "off", "0"}


@dataclass(frozen=True)
class RunConfig:
    """One run, fully described; field names double as config keys."""

    model: str
    method: str = "f3ornits"
    calibration: str = "extrapolation"
    error_norm: str = "damped"
    nu: float = 0.05
    smoothing: bool = False
    tol_rel: float = 1e-3
    tol_abs: float = 1e-6
    rho_min: float = 0.10
    rho_max: float = 1.05
    dt0: float | None = None          # None: model default
    dt_min: float | None = None       # None: min over dt0
    dt_max: float | None = None       # None: (t_end - t_init) / 10
    dt: float | None = None           # jacobi grid step
    t_end: float | None = None        # shorthand for param.t_end
    seed: int | None = None
    force_order: int | None = None
    output_dir: str = "runs"
    prefix: str = "run"
    rmse_variable: str | None = None  # "label:output_index"
    params: dict[str, float] = field(default_factory=dict)
    dt0_per_label: dict[str, float] = field(default_factory=dict)
    caps_overrides: dict[str, dict[str, float]] = field(default_factory=dict)


_SCALARS: dict[str, type] = {
    "model": str,
    "method": str,
    "calibration": str,
    "error_norm": str,
    "nu": float,
    "smoothing": bool,
    "tol_rel": float,
    "tol_abs": float,
    "rho_min": float,
    "rho_max": float,
    "dt0": float,
    "dt_min": float,
    "dt_max": float,
    "dt": float,
    "t_end": float,
    "seed": int,
    "force_order": int,
    "output_dir": str,
    "prefix": str,
    "rmse_variable": str,
}


def parse_kv_text(text: str) -> dict[str, str]:
    """Raw key -> value strings; rejects malformed lines and duplicates."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def _convert(key: str, value: str, typ: type):
    try:
        if typ is bool:
            low = value.lower()
            if low in _TRUE:
                return True
            if low in _FALSE:
                return False
            raise ValueError(value)
        if typ is int:
            return int(value)
        if typ is float:
            return float(value)
        return value
    except ValueError:
        raise ConfigError(f"key {key!r}: cannot read {value!r} as {typ.__name__}")


def config_from_mapping(raw: dict[str, str]) -> RunConfig:
    """Typed RunConfig from raw strings; every unknown key is named."""
    fields: dict = {}
    params: dict[str, float] = {}
    dt0_per_label: dict[str, float] = {}
    caps: dict[str, dict[str, float]] = {}
    unknown: list[str] = []
    for key, value in raw.items():
        if key in _SCALARS:
            fields[key] = _convert(key, value, _SCALARS[key])
        elif key.startswith("param."):
            name = key[len("param."):]
            if not name:
                unknown.append(key)
            else:
                params[name] = _convert(key, value, float)
        elif key.startswith("dt0."):
            label = key[len("dt0."):]
            if not label:
                unknown.append(key)
            else:
                dt0_per_label[label] = _convert(key, value, float)
        elif key.startswith("caps."):
            parts = key.split(".")
            if len(parts) != 3 or parts[2] not in (
                "max_input_degree", "imposed_step"
            ):
                unknown.append(key)
            else:
                caps.setdefault(parts[1], {})[parts[2]] = _convert(
                    key, value, float
                )
        else:
            unknown.append(key)
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(sorted(unknown))}")
    if "model" not in fields:
        raise ConfigError("missing required key 'model'")
    return RunConfig(
        params=params,
        dt0_per_label=dt0_per_label,
        caps_overrides=caps,
        **fields,
    )


def config_from_text(text: str) -> RunConfig:
    return config_from_mapping(parse_kv_text(text))


def load_config(path) -> RunConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return config_from_text(fh.read())


# ------------------------------------------------------------- materializing

@dataclass(frozen=True)
class RunSetup:
    """Everything the runner needs: the model, the method, the knobs."""

    config: RunConfig
    model: BenchmarkModel
    options: MasterOptions
    jacobi_dt: float | None
    variable: tuple[str, int]


#: default comparison variable per model: the position-like first output
DEFAULT_VARIABLES = {"two_mass": ("mass_left", 0), "car": ("vehicle", 0)}


def _parse_variable(text: str) -> tuple[str, int]:
    label, sep, idx = text.partition(":")
    if not sep or not label:
        raise ConfigError(
            f"rmse_variable must look like 'label:index', got {text!r}"
        )
    try:
        return label, int(idx)
    except ValueError:
        raise ConfigError(f"rmse_variable index is not an integer: {text!r}")


def materialize(cfg: RunConfig) -> RunSetup:
    if cfg.method not in METHODS:
        raise ConfigError(
            f"key 'method': {cfg.method!r} not one of {', '.join(METHODS)}"
        )
    if cfg.calibration not in CALIBRATION_MODES:
        raise ConfigError(
            f"key 'calibration': {cfg.calibration!r} not one of "
            + ", ".join(CALIBRATION_MODES)
        )
    if cfg.error_norm not in ERROR_NORMS:
        raise ConfigError(
            f"key 'error_norm': {cfg.error_norm!r} not one of "
            + ", ".join(ERROR_NORMS)
        )
    if cfg.method == "jacobi" and cfg.dt is None:
        raise ConfigError("missing required key 'dt' (jacobi needs a grid step)")

    params = dict(cfg.params)
    if cfg.t_end is not None:
        params["t_end"] = cfg.t_end
    if cfg.model == "car":
        if cfg.seed is None and "seed" not in params:
            raise ConfigError(
                "missing required key 'seed' (the car road noise must be pinned)"
            )
        if cfg.seed is not None:
            params["seed"] = cfg.seed

    # build once without overrides to learn labels, then apply per-label knobs
    base = build_model(cfg.model, params)
    labels = [s.label for s in base.problem.subsystems]

    dt0 = None
    if cfg.dt0 is not None or cfg.dt0_per_label:
        scalar = cfg.dt0 if cfg.dt0 is not None else None
        per = []
        for k, label in enumerate(labels):
            if label in cfg.dt0_per_label:
                per.append(cfg.dt0_per_label[label])
            elif scalar is not None:
                per.append(scalar)
            else:
                per.append(base.problem.dt0[k])
        stray = sorted(set(cfg.dt0_per_label) - set(labels))
        if stray:
            raise ConfigError(f"dt0.* names unknown subsystem(s): {', '.join(stray)}")
        dt0 = tuple(per)

    capabilities = None
    if cfg.caps_overrides:
        stray = sorted(set(cfg.caps_overrides) - set(labels))
        if stray:
            raise ConfigError(
                f"caps.* names unknown subsystem(s): {', '.join(stray)}"
            )
        capabilities = []
        for k, label in enumerate(labels):
            over = cfg.caps_overrides.get(label)
            if not over:
                capabilities.append(base.problem.capabilities[k])
                continue
            kwargs: dict = {}
            if "max_input_degree" in over:
                kwargs["max_input_degree"] = int(round(over["max_input_degree"]))
            if "imposed_step" in over:
                kwargs["imposed_step"] = float(over["imposed_step"])
                kwargs["variable_step"] = False
            capabilities.append(Capabilities(**kwargs))

    model = (
        build_model(cfg.model, params, dt0=dt0, capabilities=capabilities)
        if (dt0 is not None or capabilities is not None)
        else base
    )

    problem = model.problem
    dt_min = cfg.dt_min if cfg.dt_min is not None else min(problem.dt0)
    dt_max = (
        cfg.dt_max
        if cfg.dt_max is not None
        else (problem.t_end - problem.t_init) / 10.0
    )
    tol = Tolerances(
        tol_rel=cfg.tol_rel,
        tol_abs=cfg.tol_abs,
        rho_min=cfg.rho_min,
        rho_max=cfg.rho_max,
        nu=cfg.nu,
        dt_min=dt_min,
        dt_max=dt_max,
    )
    options = MasterOptions(
        calibration=cfg.calibration,
        error_norm=cfg.error_norm,
        tolerances=tol,
        smoothing=cfg.smoothing,
        force_order=cfg.force_order,
    )
    options.validate()

    if cfg.rmse_variable is not None:
        variable = _parse_variable(cfg.rmse_variable)
    else:
        variable = DEFAULT_VARIABLES.get(cfg.model, (labels[0], 0))
    if variable[0] not in labels:
        raise ConfigError(
            f"rmse_variable names unknown subsystem {variable[0]!r}"
        )
    n_out = model.problem.subsystems[labels.index(variable[0])].n_out
    if not 0 <= variable[1] < n_out:
        raise ConfigError(
            f"rmse_variable index {variable[1]} out of range for {variable[0]}"
        )

    return RunSetup(
        config=cfg,
        model=model,
        options=options,
        jacobi_dt=cfg.dt,
        variable=variable,
    )


def config_to_text(cfg: RunConfig) -> str:
    """Round-trip helper: the flat text form of a config (sorted keys)."""
    lines = []
    for f in dataclasses.fields(RunConfig):
        if f.name in ("params", "dt0_per_label", "caps_overrides"):
            continue
        value = getattr(cfg, f.name)
        if value is None:
            continue
        if isinstance(value, bool):
            value = "true" if value else "false"
        lines.append(f"{f.name} = {value}")
    for name, value in sorted(cfg.params.items()):
        lines.append(f"param.{name} = {value}")
    for label, value in sorted(cfg.dt0_per_label.items()):
        lines.append(f"dt0.{label} = {value}")
    for label, over in sorted(cfg.caps_overrides.items()):
        for name, value in sorted(over.items()):
            lines.append(f"caps.{label}.{name} = {value}")
    return "\n".join(lines) + "\n"
