"""Simulation environments: planar quadrotor (nonlinear and linearized),
generic affine LTV plants, wind/parameter profiles and disturbance generators.

Quadrotor state ``x = (p_x, p_z, psi, v_x, v_z, omega)`` with body-frame
velocities; input ``u`` is the deviation of the two rotor thrusts from hover,
``u_eq = (m g / 2) * [1, 1]``. Parameter ``theta = (wind force, 1/inertia)``.

Random numbers come from numpy's PCG64 generator seeded through
``SeedSequence(seed).spawn(2)``: stream 0 drives disturbances, stream 1 the
exploration noise. Uniform draws are ``2 * random() - 1``; Gaussian draws use
the Box-Muller transform on ``random()`` pairs.
"""

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .model import AffineParametrization, ParamBox, eval_system, project


@dataclass(frozen=True)
class QuadrotorParams:
    g: float = 9.81
    m: float = 0.5
    l: float = 0.25
    Ts: float = 0.1

    def __post_init__(self):
        for name in ("g", "m", "l", "Ts"):
            if not getattr(self, name) > 0:
                raise ValueError(f"quadrotor parameter {name} must be positive")

    @property
    def u_eq(self):
        return np.full(2, self.m * self.g / 2.0)


def quadrotor_parametrization(qp: QuadrotorParams = QuadrotorParams()) -> AffineParametrization:
    """Forward-Euler linearization about hover, affine in (wind, inverse inertia)."""
    Ts, g, m, l = qp.Ts, qp.g, qp.m, qp.l
    A0 = np.eye(6)
    A0[0, 3] = A0[1, 4] = A0[2, 5] = Ts
    A0[3, 2] = -g * Ts
    A_wind = np.zeros((6, 6))
    A_wind[4, 2] = -Ts
    B0 = np.zeros((6, 2))
    B0[4, :] = Ts / m
    B_inertia = np.zeros((6, 2))
    B_inertia[5, :] = [Ts * l, -Ts * l]
    return AffineParametrization(
        A0=A0,
        A_incr=np.stack([A_wind, np.zeros((6, 6))]),
        B0=B0,
        B_incr=np.stack([np.zeros((6, 2)), B_inertia]),
    )


QUADROTOR_BOX = ParamBox(lower=[-10.0, 50.0], upper=[10.0, 500.0])


def quadrotor_ode(qp: QuadrotorParams, x, u, theta, w_act):
    """Continuous-time planar quadrotor vector field (total thrust ``u_eq + u``)."""
    _, _, psi, vx, vz, om = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    wind, inv_inertia = theta
    thrust = qp.u_eq + u
    c, s = math.cos(psi), math.sin(psi)
    return np.array(
        [
            vx * c - vz * s,
            vx * s + vz * c,
            om,
            vz * om - qp.g * s + wind * c,
            -vx * om - qp.g * c - wind * s + (thrust[0] + thrust[1]) / qp.m + w_act[0],
            qp.l * inv_inertia * (thrust[0] - thrust[1]) + w_act[1],
        ]
    )


def quadrotor_nonlinear_remainder(qp: QuadrotorParams, x, theta, w_act):
    """Additive term ``w_nl`` such that ``x+ = A(theta) x + B(theta) u + w_nl``."""
    _, _, psi, vx, vz, om = np.asarray(x, dtype=float)
    wind = theta[0]
    c, s = math.cos(psi), math.sin(psi)
    return qp.Ts * np.array(
        [
            vx * (c - 1.0) - vz * s,
            vx * s + vz * (c - 1.0),
            0.0,
            vz * om - qp.g * s + wind * c + qp.g * psi,
            -vx * om - qp.g * c - wind * s + w_act[0] + wind * psi + qp.u_eq.sum() / qp.m,
            w_act[1],
        ]
    )


def quadrotor_step_nonlinear(qp: QuadrotorParams, x, u, theta, w_act, par=None):
    """One forward-Euler step of the nonlinear quadrotor."""
    par = par or quadrotor_parametrization(qp)
    A, B = eval_system(par, theta)
    return A @ np.asarray(x, dtype=float) + B @ np.asarray(u, dtype=float) + \
        quadrotor_nonlinear_remainder(qp, x, theta, w_act)


def quadrotor_linear_disturbance(qp: QuadrotorParams, theta, w_act):
    """``w_lin = Ts * (0, 0, 0, wind, w_z, w_psi)``."""
    return qp.Ts * np.array([0.0, 0.0, 0.0, theta[0], w_act[0], w_act[1]])


def quadrotor_step_linear(qp: QuadrotorParams, x, u, theta, w_lin, par=None):
    """Linearized step ``A(theta) x + B(theta) u + w_lin``; ``w_lin`` is the full 6-vector."""
    par = par or quadrotor_parametrization(qp)
    return ltv_step(par, x, u, theta, w_lin)


def ltv_step(par: AffineParametrization, x, u, theta, w):
    A, B = eval_system(par, theta)
    return A @ np.asarray(x, dtype=float) + B @ np.asarray(u, dtype=float) + np.asarray(w, dtype=float)


# --- parameter trajectories -------------------------------------------------

TRAJECTORY_KINDS = ("constant", "decaying", "square_wave", "custom")


@dataclass(frozen=True)
class ParamTrajectory:
    """Parameter path: ``value`` with one component driven by a (decaying) square wave.

    For ``decaying`` the driven component is ``amplitude * exp(-decay k) * sq(k)``,
    for ``square_wave`` it is ``amplitude * sq(k)``; ``sq(k)`` is +1 on the first
    half of each period and -1 on the second. ``custom`` replays ``sequence`` and
    holds its last row. Outputs are clipped to ``box`` when one is given.
    """

    kind: str = "constant"
    value: tuple = (0.0, 250.0)
    amplitude: float = 5.0
    period: int = 200
    decay: float = 0.002
    component: int = 0
    sequence: Optional[np.ndarray] = None
    box: Optional[ParamBox] = None

    def __post_init__(self):
        if self.kind not in TRAJECTORY_KINDS:
            raise ValueError(f"unknown trajectory kind {self.kind!r}")
        if self.kind == "custom" and (self.sequence is None or len(self.sequence) == 0):
            raise ValueError("custom trajectory needs a non-empty sequence")
        if self.period < 2:
            raise ValueError("period must be at least 2 steps")


def square(k: int, period: int) -> float:
    return 1.0 if (k % period) < period / 2 else -1.0


def wind_profile(traj: ParamTrajectory, k: int):
    """Parameter value at step ``k``."""
    if k < 0:
        raise ValueError("step index must be nonnegative")
    if traj.kind == "custom":
        seq = np.asarray(traj.sequence, dtype=float)
        theta = seq[min(k, len(seq) - 1)].reshape(-1).copy()
    else:
        theta = np.array(traj.value, dtype=float).reshape(-1)
        if traj.kind == "decaying":
            theta[traj.component] = traj.amplitude * math.exp(-traj.decay * k) * square(k, traj.period)
        elif traj.kind == "square_wave":
            theta[traj.component] = traj.amplitude * square(k, traj.period)
    if traj.box is not None:
        theta = project(traj.box, theta)
    return theta


def case_a_wind(box: ParamBox = QUADROTOR_BOX) -> ParamTrajectory:
    """Decaying square-wave wind, inverse inertia fixed at 250 (non-paper waveform defaults)."""
    return ParamTrajectory(kind="decaying", value=(0.0, 250.0), amplitude=5.0, period=200,
                           decay=0.002, box=box)


def case_b_wind(box: ParamBox = QUADROTOR_BOX) -> ParamTrajectory:
    """Persistent square-wave wind, inverse inertia fixed at 250 (non-paper waveform defaults)."""
    return ParamTrajectory(kind="square_wave", value=(0.0, 250.0), amplitude=5.0, period=200,
                           box=box)


# --- disturbances and random streams ---------------------------------------

DISTURBANCE_KINDS = ("none", "uniform_decaying", "uniform_constant", "custom")


@dataclass(frozen=True)
class DisturbanceModel:
    """Componentwise disturbance ``amplitude * exp(-decay k) * U[-1, 1]`` (decaying kind).

    ``dim`` is the number of sampled components: 2 actuation channels for the
    quadrotor, ``n`` for generic plants.
    """

    kind: str = "uniform_decaying"
    amplitude: float = 1.0
    decay: float = 0.001
    dim: int = 2
    sequence: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind not in DISTURBANCE_KINDS:
            raise ValueError(f"unknown disturbance kind {self.kind!r}")
        if self.amplitude < 0 or self.decay < 0:
            raise ValueError("amplitude and decay must be nonnegative")
        if self.kind == "custom" and self.sequence is None:
            raise ValueError("custom disturbance needs a sequence")

    @property
    def bound(self) -> float:
        """Componentwise bound at ``k = 0``; the sup-norm bound for every step."""
        if self.kind == "none":
            return 0.0
        if self.kind == "custom":
            return float(np.max(np.abs(self.sequence))) if np.size(self.sequence) else 0.0
        return self.amplitude


def make_streams(seed: int):
    """Independent (disturbance, exploration) generators derived from one seed."""
    ss_dist, ss_explore = np.random.SeedSequence(seed).spawn(2)
    return np.random.Generator(np.random.PCG64(ss_dist)), np.random.Generator(np.random.PCG64(ss_explore))


def uniform_pm1(rng, size: int):
    return 2.0 * rng.random(size) - 1.0


def gaussian(rng, std):
    """Zero-mean normal draws with per-component ``std`` via Box-Muller."""
    std = np.asarray(std, dtype=float).reshape(-1)
    count = std.size
    pairs = (count + 1) // 2
    u1 = 1.0 - rng.random(pairs)  # (0, 1], keeps log finite
    u2 = rng.random(pairs)
    radius = np.sqrt(-2.0 * np.log(u1))
    z = np.concatenate([radius * np.cos(2 * np.pi * u2), radius * np.sin(2 * np.pi * u2)])
    # interleave so component j uses pair j // 2
    z = np.stack([z[:pairs], z[pairs:]], axis=1).reshape(-1)[:count]
    return std * z


def disturbance(model: DisturbanceModel, k: int, rng):
    """Disturbance sample at step ``k``; custom sequences are zero past their end."""
    if model.kind == "none":
        return np.zeros(model.dim)
    if model.kind == "custom":
        seq = np.asarray(model.sequence, dtype=float)
        if k >= len(seq):
            return np.zeros(seq.shape[1] if seq.ndim > 1 else 1)
        return seq[k].reshape(-1).copy()
    scale = model.amplitude
    if model.kind == "uniform_decaying":
        scale *= math.exp(-model.decay * k)
    return scale * uniform_pm1(rng, model.dim)
