"""Continuous 4-DOF vehicle model with a DC-motor torque map and RK4 stepping.

State is q = (x, y, theta, v): planar pose plus longitudinal speed. Commands
are a throttle alpha in [0, 1] and a steering command beta in [-1, 1] that
maps linearly to a front-wheel angle beta * delta. The drivetrain is an
affine motor torque map T(alpha, v) = tau_0*alpha - (c_1 + tau_0/omega_0) *
(gamma*v/r_wheel), i.e. stall torque scaled by throttle minus back-EMF and
viscous losses at the motor shaft speed gamma*v/r_wheel.

All functions here are pure; simulation workers may call them concurrently.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass

import yaml

__all__ = [
    "VehicleParams",
    "VehicleState",
    "ControlCommand",
    "IntegrationDivergedError",
    "wrap_angle",
    "motor_torque",
    "alpha_hold",
    "derivative",
    "step",
]

#: inner physics step [s]; controllers run at CONTROL_DT (see loop module)
SIM_DT = 0.01


class IntegrationDivergedError(RuntimeError):
    """A state update produced a non-finite component."""


def wrap_angle(theta: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    return math.pi - (math.pi - theta) % (2.0 * math.pi)


@dataclass(frozen=True)
class VehicleParams:
    """Physical parameters of the scale vehicle.

    Defaults are plausible values for a 1/6-scale platform, chosen for this
    workbench (not measured from hardware); override via a YAML/JSON config
    file with the same keys.
    """

    l: float = 0.5  # wheelbase [m]
    delta: float = 0.4  # steering command -> wheel angle coefficient [rad]
    gamma: float = 0.2  # gear ratio, wheel speed / motor speed
    i_wheel: float = 0.005  # wheel inertia [kg m^2]
    r_wheel: float = 0.09  # wheel radius [m]
    tau_0: float = 0.3  # motor stall torque scale [N m]
    omega_0: float = 120.0  # motor no-load speed [rad/s]
    c_1: float = 1e-4  # motor damping [N m s/rad]

    def __post_init__(self) -> None:
        for name, value in asdict(self).items():
            if not (math.isfinite(value) and value > 0.0):
                raise ValueError(f"vehicle parameter {name!r} must be finite and > 0, got {value}")
        if not 0.0 < self.delta < math.pi / 2:
            raise ValueError(f"delta must lie in (0, pi/2), got {self.delta}")

    @classmethod
    def from_file(cls, path: str) -> "VehicleParams":
        with open(path, "r", encoding="utf-8") as fh:
            raw = yaml.safe_load(fh)
        if not isinstance(raw, dict):
            raise ValueError(f"vehicle config {path!r} must be a key-value mapping")
        known = set(cls.__dataclass_fields__)
        unknown = set(raw) - known
        if unknown:
            raise ValueError(f"unknown vehicle config keys: {sorted(unknown)}")
        return cls(**{k: float(v) for k, v in raw.items()})

    def digest(self) -> str:
        """Stable hash of the parameter set, embedded in output artifacts."""
        blob = json.dumps(asdict(self), sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class VehicleState:
    """Ground-truth vehicle state: east/north position, heading, speed.

    Heading is stored wrapped to (-pi, pi].
    """

    x: float
    y: float
    theta: float
    v: float

    def __post_init__(self) -> None:
        for name in ("x", "y", "theta", "v"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise ValueError(f"non-finite vehicle state {self}")
            object.__setattr__(self, name, float(value))
        object.__setattr__(self, "theta", wrap_angle(self.theta))


@dataclass(frozen=True)
class ControlCommand:
    """Throttle/steering pair; clamped to the command box at construction."""

    alpha: float
    beta: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.alpha) and math.isfinite(self.beta)):
            raise ValueError(f"non-finite command ({self.alpha}, {self.beta})")
        object.__setattr__(self, "alpha", float(min(1.0, max(0.0, self.alpha))))
        object.__setattr__(self, "beta", float(min(1.0, max(-1.0, self.beta))))


def motor_torque(alpha: float, v: float, p: VehicleParams) -> float:
    """Drive torque at the motor for throttle alpha and vehicle speed v."""
    omega_motor = p.gamma * v / p.r_wheel
    return p.tau_0 * alpha - (p.c_1 + p.tau_0 / p.omega_0) * omega_motor


def alpha_hold(v: float, p: VehicleParams) -> float:
    """Throttle that holds speed v on flat ground, i.e. T(alpha, v) = 0."""
    return (p.c_1 + p.tau_0 / p.omega_0) * (p.gamma * v / p.r_wheel) / p.tau_0


def derivative(
    q: VehicleState, u: ControlCommand, p: VehicleParams
) -> tuple[float, float, float, float]:
    """State rate (xdot, ydot, thetadot, vdot) of the 4-DOF model."""
    return _derivative(q.x, q.y, q.theta, q.v, u.alpha, u.beta, p)


def _derivative(
    x: float, y: float, theta: float, v: float, alpha: float, beta: float, p: VehicleParams
) -> tuple[float, float, float, float]:
    # |beta * delta| < pi/2 by the command/parameter invariants, so tan is finite
    xdot = math.cos(theta) * v
    ydot = math.sin(theta) * v
    thetadot = v * math.tan(beta * p.delta) / p.l
    vdot = motor_torque(alpha, v, p) * p.gamma / p.i_wheel * p.r_wheel
    return xdot, ydot, thetadot, vdot


def step(q: VehicleState, u: ControlCommand, p: VehicleParams, dt: float) -> VehicleState:
    """Advance the state by one classical RK4 step of length dt.

    dt must lie in (0, 0.1]. Heading is rewrapped to (-pi, pi] and speed is
    clamped at v >= 0 (the model has no reverse gear).
    """
    if not 0.0 < dt <= 0.1:
        raise ValueError(f"dt must lie in (0, 0.1], got {dt}")
    x, y, th, v = q.x, q.y, q.theta, q.v
    a, b = u.alpha, u.beta

    k1 = _derivative(x, y, th, v, a, b, p)
    k2 = _derivative(x + 0.5 * dt * k1[0], y + 0.5 * dt * k1[1],
                     th + 0.5 * dt * k1[2], v + 0.5 * dt * k1[3], a, b, p)
    k3 = _derivative(x + 0.5 * dt * k2[0], y + 0.5 * dt * k2[1],
                     th + 0.5 * dt * k2[2], v + 0.5 * dt * k2[3], a, b, p)
    k4 = _derivative(x + dt * k3[0], y + dt * k3[1],
                     th + dt * k3[2], v + dt * k3[3], a, b, p)

    sixth = dt / 6.0
    x_n = x + sixth * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0])
    y_n = y + sixth * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1])
    th_n = th + sixth * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2])
    v_n = v + sixth * (k1[3] + 2.0 * k2[3] + 2.0 * k3[3] + k4[3])

    if not (math.isfinite(x_n) and math.isfinite(y_n)
            and math.isfinite(th_n) and math.isfinite(v_n)):
        raise IntegrationDivergedError(
            f"non-finite state after step from {q} with u=({a}, {b}), dt={dt}"
        )
    # VehicleState rewraps heading to (-pi, pi]
    return VehicleState(x_n, y_n, th_n, max(0.0, v_n))
