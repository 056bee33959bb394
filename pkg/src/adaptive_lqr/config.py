"""Experiment config files (TOML).

Schema (every section optional except where noted, unknown keys rejected)::

    [system]
    preset = "quadrotor"          # or "custom"
    plant = "nonlinear"           # quadrotor: "nonlinear" | "linear"; custom plants are linear LTV
    g = 9.81, m = 0.5, l = 0.25, Ts = 0.1     # quadrotor constants
    A0 = [[...]], A_incr = [[[...]], ...], B0 = [[...]], B_incr = [[[...]], ...]   # custom only

    [theta]
    lower = [-10.0, 50.0]         # required for custom
    upper = [10.0, 500.0]
    trajectory = "decaying"       # constant | decaying | square_wave | custom
    value = [0.0, 250.0]          # base parameter; one component is driven by the wave
    component = 0
    amplitude = 5.0
    period = 200
    decay = 0.002
    sequence = [[...], ...]       # custom trajectory

    [disturbance]
    kind = "uniform_decaying"     # none | uniform_decaying | uniform_constant | custom
    amplitude = 1.0
    decay = 0.001
    sequence = [[...], ...]

    [controller]
    Q = [1, 1, 1, 1, 1, 1]        # diagonal, or a full matrix
    R = [10, 10]
    mu = 50.0
    theta_hat0 = [0.0, 100.0]
    mode = "adaptive"             # adaptive | frozen | oracle
    exploration_std = [0.5, 0.1]  # optional
    recompute_tol = 0.0

    [sim]
    T = 2000
    x0 = [-2, -2, 0, 0, 0, 0]
    seed = 0
    divergence_threshold = 1e6

    [output]
    dir = "out"
    prefix = "run"
    plot_stride = 10
"""

import hashlib
import re
import sys
from dataclasses import dataclass, field

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .model import AffineParametrization, ParamBox
from .plant import (
    DisturbanceModel,
    ParamTrajectory,
    QuadrotorParams,
    quadrotor_parametrization,
)
from .sim import SimConfig

SCHEMA = {
    "system": {"preset", "plant", "g", "m", "l", "Ts", "A0", "A_incr", "B0", "B_incr"},
    "theta": {"lower", "upper", "trajectory", "value", "component", "amplitude", "period",
              "decay", "sequence"},
    "disturbance": {"kind", "amplitude", "decay", "sequence"},
    "controller": {"Q", "R", "mu", "theta_hat0", "mode", "exploration_std", "recompute_tol"},
    "sim": {"T", "x0", "seed", "divergence_threshold"},
    "output": {"dir", "prefix", "plot_stride"},
}

# artifact choices that the original experiment does not pin down
NON_PAPER_DEFAULTS = {
    "theta.amplitude": 5.0,
    "theta.period": 200,
    "theta.decay": 0.002,
    "sim.T": 2000,
    "sim.seed": 0,
    "sim.divergence_threshold": 1e6,
}


class ConfigError(ValueError):
    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        where = f"{path}:" if path else ""
        where += f"{line}: " if line else (" " if path else "")
        super().__init__(f"{where}{message}")


@dataclass
class OutputSpec:
    dir: str = "out"
    prefix: str = "run"
    plot_stride: int = 10


@dataclass
class ExperimentConfig:
    sim: SimConfig
    output: OutputSpec
    raw: dict
    sha256: str
    non_paper: dict = field(default_factory=dict)


def _line_of(text: str, section: str, key=None):
    """1-based line of ``[section]`` or of ``key`` inside it, best effort."""
    lines = text.splitlines()
    header = re.compile(rf"^\s*\[\s*{re.escape(section)}\s*\]")
    start = None
    for i, line in enumerate(lines):
        if header.match(line):
            start = i
            if key is None:
                return i + 1
            continue
        if start is not None and key is not None:
            if re.match(r"^\s*\[", line):
                break
            if re.match(rf"^\s*{re.escape(key)}\s*=", line):
                return i + 1
    return start + 1 if start is not None else None


def _matrix(value, name, ndim):
    try:
        arr = np.array(value, dtype=float)
    except (TypeError, ValueError):
        raise ValueError(f"{name} must be numeric")
    if arr.ndim != ndim:
        raise ValueError(f"{name} must be a {ndim}-d array")
    return arr


def _weight(value, size, name):
    arr = np.array(value, dtype=float)
    if arr.ndim == 0:
        arr = np.full(size, float(arr))
    if arr.ndim == 1:
        if arr.size != size:
            raise ValueError(f"{name} diagonal must have {size} entries")
        return np.diag(arr)
    if arr.shape != (size, size):
        raise ValueError(f"{name} must be {size}x{size}")
    return arr


def parse_config(text: str, path=None, seed_override=None) -> ExperimentConfig:
    """Validate and build an experiment from TOML text.

    Raises:
        ConfigError: syntax errors, unknown keys, or invalid values; the message
            carries the offending line when it can be located.
    """
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise ConfigError(f"TOML syntax error: {exc}", int(m.group(1)) if m else None, path)

    for section, body in raw.items():
        if section not in SCHEMA:
            raise ConfigError(f"unknown section [{section}]", _line_of(text, section), path)
        if not isinstance(body, dict):
            raise ConfigError(f"[{section}] must be a table", _line_of(text, section), path)
        for key in body:
            if key not in SCHEMA[section]:
                raise ConfigError(f"unknown key {section}.{key}", _line_of(text, section, key), path)

    non_paper = {}

    def get(section, key, default):
        body = raw.get(section, {})
        if key in body:
            return body[key]
        dotted = f"{section}.{key}"
        if dotted in NON_PAPER_DEFAULTS:
            non_paper[dotted] = default
        return default

    current = ["system", None]

    def fail(exc):
        raise ConfigError(str(exc), _line_of(text, current[0], current[1]), path) from exc

    try:
        current[:] = ["system", "preset"]
        preset = get("system", "preset", "quadrotor")
        if preset not in ("quadrotor", "custom"):
            raise ValueError("system.preset must be 'quadrotor' or 'custom'")
        if preset == "quadrotor":
            current[1] = "plant"
            plant_kind = get("system", "plant", "nonlinear")
            if plant_kind not in ("nonlinear", "linear"):
                raise ValueError("system.plant must be 'nonlinear' or 'linear'")
            plant = f"quadrotor_{plant_kind}"
            current[1] = None
            qp = QuadrotorParams(**{k: float(get("system", k, getattr(QuadrotorParams, k)))
                                    for k in ("g", "m", "l", "Ts")})
            par = quadrotor_parametrization(qp)
            lower_default, upper_default = [-10.0, 50.0], [10.0, 500.0]
        else:
            for key in ("A0", "A_incr", "B0", "B_incr"):
                current[1] = key
                if key not in raw.get("system", {}):
                    raise ValueError(f"custom system needs system.{key}")
            current[1] = None
            plant_kind = get("system", "plant", "ltv")
            if plant_kind not in ("ltv", "linear"):
                raise ValueError("custom systems are linear; system.plant must be 'ltv'")
            plant = "ltv"
            qp = QuadrotorParams()
            s = raw["system"]
            par = AffineParametrization(
                A0=_matrix(s["A0"], "A0", 2),
                A_incr=_matrix(s["A_incr"], "A_incr", 3),
                B0=_matrix(s["B0"], "B0", 2),
                B_incr=_matrix(s["B_incr"], "B_incr", 3),
            )
            lower_default = upper_default = None

        current[:] = ["theta", "lower"]
        lower = get("theta", "lower", lower_default)
        upper = get("theta", "upper", upper_default)
        if lower is None or upper is None:
            raise ValueError("theta.lower and theta.upper are required for custom systems")
        box = ParamBox(lower, upper)
        current[1] = "trajectory"
        kind = get("theta", "trajectory", "decaying" if preset == "quadrotor" else "constant")
        value = get("theta", "value", [0.0, 250.0] if preset == "quadrotor" else list(0.5 * (box.lower + box.upper)))
        seq = get("theta", "sequence", None)
        trajectory = ParamTrajectory(
            kind=kind,
            value=tuple(float(v) for v in value),
            amplitude=float(get("theta", "amplitude", 5.0)),
            period=int(get("theta", "period", 200)),
            decay=float(get("theta", "decay", 0.002)),
            component=int(get("theta", "component", 0)),
            sequence=None if seq is None else _matrix(seq, "theta.sequence", 2),
            box=box,
        )
        if len(trajectory.value) != par.p:
            raise ValueError(f"theta.value must have {par.p} entries")

        current[:] = ["disturbance", "kind"]
        dseq = get("disturbance", "sequence", None)
        dist = DisturbanceModel(
            kind=get("disturbance", "kind", "uniform_decaying"),
            amplitude=float(get("disturbance", "amplitude", 1.0)),
            decay=float(get("disturbance", "decay", 0.001)),
            dim=2 if preset == "quadrotor" else par.n,
            sequence=None if dseq is None else _matrix(dseq, "disturbance.sequence", 2),
        )

        current[:] = ["controller", None]
        Q = _weight(get("controller", "Q", [1.0] * par.n), par.n, "controller.Q")
        R = _weight(get("controller", "R", [10.0] * par.m if preset == "quadrotor" else [1.0] * par.m),
                    par.m, "controller.R")
        explore = get("controller", "exploration_std", None)
        theta_hat0 = get("controller", "theta_hat0",
                         [0.0, 100.0] if preset == "quadrotor" else list(0.5 * (box.lower + box.upper)))
        current[:] = ["sim", None]
        seed = int(get("sim", "seed", 0))
        if seed_override is not None:
            seed = int(seed_override)
        x0 = get("sim", "x0", [-2.0, -2.0, 0.0, 0.0, 0.0, 0.0] if preset == "quadrotor" else [1.0] * par.n)
        checks = [
            ("sim", "T", lambda: int(get("sim", "T", 2000)) >= 1, "sim.T must be at least 1"),
            ("sim", "x0", lambda: np.size(x0) == par.n, f"sim.x0 must have {par.n} entries"),
            ("sim", "divergence_threshold", lambda: float(get("sim", "divergence_threshold", 1e6)) > 0,
             "sim.divergence_threshold must be positive"),
            ("controller", "mu", lambda: float(get("controller", "mu", 50.0)) > 0,
             "controller.mu must be positive"),
            ("controller", "theta_hat0", lambda: box.contains(np.asarray(theta_hat0, dtype=float)),
             "controller.theta_hat0 must lie inside [theta] lower..upper"),
            ("controller", "mode", lambda: get("controller", "mode", "adaptive") in ("adaptive", "frozen", "oracle"),
             "controller.mode must be adaptive, frozen or oracle"),
        ]
        for section, key, ok, message in checks:
            current[:] = [section, key]
            if not ok():
                raise ValueError(message)
        current[:] = ["controller", None]
        sim = SimConfig(
            par=par,
            box=box,
            x0=np.array(x0, dtype=float),
            theta_hat0=np.array(theta_hat0, dtype=float),
            mu=float(get("controller", "mu", 50.0)),
            Q=Q,
            R=R,
            trajectory=trajectory,
            disturbance=dist,
            T=int(get("sim", "T", 2000)),
            plant=plant,
            quad=qp,
            exploration_std=None if explore is None else np.array(explore, dtype=float),
            mode=get("controller", "mode", "adaptive"),
            seed=seed,
            divergence_threshold=float(get("sim", "divergence_threshold", 1e6)),
            recompute_tol=float(get("controller", "recompute_tol", 0.0)),
        )
        current[:] = ["output", None]
        out = raw.get("output", {})
        output = OutputSpec(
            dir=str(out.get("dir", "out")),
            prefix=str(out.get("prefix", "run")),
            plot_stride=int(out.get("plot_stride", 10)),
        )
        if output.plot_stride < 1:
            raise ValueError("output.plot_stride must be positive")
    except (ValueError, TypeError) as exc:
        if isinstance(exc, ConfigError):
            raise
        fail(exc)

    digest = hashlib.sha256(text.encode("utf-8")).hexdigest()
    return ExperimentConfig(sim=sim, output=output, raw=raw, sha256=digest, non_paper=non_paper)


def load_config(path, seed_override=None) -> ExperimentConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}", path=str(path))
    return parse_config(text, path=str(path), seed_override=seed_override)
