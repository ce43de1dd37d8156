"""The four path-following policies plus the shared longitudinal controller.

Every policy maps the tracking error (and the current reference point, used
for feedforward) to a throttle/steering command:

* MPC: linearized error-dynamics model, condensed over the horizon, solved
  as a box QP at every control step.
* PID: a static 2x4 feedback matrix fit by least squares to expert data,
  applied on top of the throttle feedforward.
* NN ("nn-mpc" / "nn-hd" depending on the training data): the small MLP
  from the mlp module, clamped to the command box.
* Zero: the deliberately lamed baseline (feedforward only, no feedback).

The continuous error dynamics (with v the measured speed, treated as an
exogenous parameter, and v_r, beta_r, alpha_r from the reference):

    e1' = v tan(delta beta) e2 / l + v_r cos(e3) - v
    e2' = -v tan(delta beta) e1 / l + v_r sin(e3)
    e3' = (v_r tan(delta beta_r) - v tan(delta beta)) / l
    e4' = tau_0 R gamma / I_w (alpha_r - alpha) - e4 (c1 w0 + tau_0)/(I_w w0)
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from . import mlp
from .boxqp import QpSolution, condense_mpc, solve_box_qp
from .dynamics import ControlCommand, VehicleParams, alpha_hold
from .paths import DEFAULT_LOOKAHEAD, ErrorState, ReferencePoint

__all__ = [
    "ErrorDynamicsContext",
    "LinearizedModel",
    "MpcWeights",
    "PidGains",
    "RankDeficientError",
    "error_dynamics",
    "linearize",
    "discretize",
    "fit_pid",
    "longitudinal_control",
    "MpcController",
    "PidController",
    "NnController",
    "ZeroController",
]

CONTROL_DT = 0.1


class RankDeficientError(ValueError):
    """The error-data matrix does not excite all four error directions."""


@dataclass(frozen=True)
class ErrorDynamicsContext:
    """Frozen quantities the error dynamics depend on besides (e, u)."""

    v: float  # current vehicle speed
    v_r: float  # reference speed
    beta_r: float  # reference steering command
    alpha_r: float  # reference throttle command
    params: VehicleParams

    @classmethod
    def at_reference(cls, ref: ReferencePoint, e: ErrorState,
                     params: VehicleParams) -> "ErrorDynamicsContext":
        # e4 = v_r - v fixes the measured speed
        return cls(v=ref.v - e.e4, v_r=ref.v, beta_r=ref.beta, alpha_r=ref.alpha,
                   params=params)


def error_dynamics(e: np.ndarray, u: np.ndarray, ctx: ErrorDynamicsContext) -> np.ndarray:
    """Continuous error rate g(e, u); e and u as plain arrays."""
    p = ctx.params
    e1, e2, e3, e4 = e
    alpha, beta = u
    tan_b = math.tan(p.delta * beta)
    damping = (p.c_1 * p.omega_0 + p.tau_0) / (p.i_wheel * p.omega_0)
    return np.array([
        ctx.v * tan_b * e2 / p.l + ctx.v_r * math.cos(e3) - ctx.v,
        -ctx.v * tan_b * e1 / p.l + ctx.v_r * math.sin(e3),
        (ctx.v_r * math.tan(p.delta * ctx.beta_r) - ctx.v * tan_b) / p.l,
        p.tau_0 * p.r_wheel * p.gamma / p.i_wheel * (ctx.alpha_r - alpha) - e4 * damping,
    ])


def linearize(
    e_star: np.ndarray, u_star: np.ndarray, ctx: ErrorDynamicsContext
) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form Jacobians (A_c, B_c) of the error dynamics at (e*, u*)."""
    p = ctx.params
    e1, e2, _, _ = e_star
    beta = u_star[1]
    if abs(beta * p.delta) >= math.pi / 2:
        raise ValueError(f"steering angle beta*delta={beta * p.delta} out of (-pi/2, pi/2)")
    v = ctx.v
    tan_b = math.tan(p.delta * beta)
    sec2 = p.delta / (p.l * math.cos(p.delta * beta) ** 2)
    damping = (p.c_1 * p.omega_0 + p.tau_0) / (p.i_wheel * p.omega_0)
    drive = p.tau_0 * p.r_wheel * p.gamma / p.i_wheel

    A_c = np.array([
        [0.0, v * tan_b / p.l, -ctx.v_r * math.sin(e_star[2]), 0.0],
        [-v * tan_b / p.l, 0.0, ctx.v_r * math.cos(e_star[2]), 0.0],
        [0.0, 0.0, 0.0, 0.0],
        [0.0, 0.0, 0.0, -damping],
    ])
    B_c = np.array([
        [0.0, v * e2 * sec2],
        [0.0, -v * e1 * sec2],
        [0.0, -v * sec2],
        [-drive, 0.0],
    ])
    return A_c, B_c


def discretize(A_c: np.ndarray, B_c: np.ndarray, dt: float = CONTROL_DT
               ) -> tuple[np.ndarray, np.ndarray]:
    """Forward-Euler discretization: A_t = A_c dt + I, B_t = B_c dt."""
    if dt <= 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    return A_c * dt + np.eye(A_c.shape[0]), B_c * dt


@dataclass(frozen=True)
class LinearizedModel:
    A_c: np.ndarray
    B_c: np.ndarray
    A_t: np.ndarray
    B_t: np.ndarray
    dt: float

    @classmethod
    def at(cls, e_star: np.ndarray, u_star: np.ndarray, ctx: ErrorDynamicsContext,
           dt: float = CONTROL_DT) -> "LinearizedModel":
        A_c, B_c = linearize(e_star, u_star, ctx)
        A_t, B_t = discretize(A_c, B_c, dt)
        return cls(A_c, B_c, A_t, B_t, dt)


def _assert_psd(mat: np.ndarray, name: str, strict: bool = False) -> None:
    eig = np.linalg.eigvalsh(0.5 * (mat + mat.T))
    if strict and eig.min() <= 0:
        raise ValueError(f"{name} must be positive definite, eigenvalues {eig}")
    if not strict and eig.min() < -1e-12:
        raise ValueError(f"{name} must be positive semidefinite, eigenvalues {eig}")


@dataclass
class MpcWeights:
    """Stage/terminal/input weights and horizon. Defaults are workbench
    choices tuned for stable settling at 1 m/s, not measurements of any
    particular vehicle."""

    Q: np.ndarray = None
    Q_N: np.ndarray = None
    R: np.ndarray = None
    N: int = 10

    def __post_init__(self) -> None:
        if self.Q is None:
            self.Q = np.diag([1.0, 3.0, 2.0, 1.0])
        if self.Q_N is None:
            self.Q_N = 5.0 * np.diag([1.0, 3.0, 2.0, 1.0])
        if self.R is None:
            self.R = np.diag([0.5, 0.25])
        self.Q = np.asarray(self.Q, dtype=float)
        self.Q_N = np.asarray(self.Q_N, dtype=float)
        self.R = np.asarray(self.R, dtype=float)
        if self.N < 1:
            raise ValueError(f"horizon must be >= 1, got {self.N}")
        _assert_psd(self.Q, "Q")
        _assert_psd(self.Q_N, "Q_N")
        _assert_psd(self.R, "R", strict=True)

    def to_json(self, path: str) -> None:
        _dump_json17({"Q": self.Q.tolist(), "Q_N": self.Q_N.tolist(),
                      "R": self.R.tolist(), "N": self.N}, path)

    @classmethod
    def from_json(cls, path: str) -> "MpcWeights":
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        return cls(Q=np.array(doc["Q"]), Q_N=np.array(doc["Q_N"]),
                   R=np.array(doc["R"]), N=int(doc["N"]))


@dataclass(frozen=True)
class PidGains:
    """Static feedback matrix mapping the error state to a command delta."""

    K: np.ndarray

    def __post_init__(self) -> None:
        K = np.asarray(self.K, dtype=float)
        if K.shape != (2, 4):
            raise ValueError(f"gain matrix must be 2x4, got {K.shape}")
        if not np.all(np.isfinite(K)):
            raise ValueError("gain matrix must be finite")
        object.__setattr__(self, "K", K)

    def to_json(self, path: str) -> None:
        _dump_json17({"K": self.K.tolist()}, path)

    @classmethod
    def from_json(cls, path: str) -> "PidGains":
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        return cls(K=np.array(doc["K"]))


def _format_json17(obj) -> str:
    """JSON text with floats at 17 significant digits (lossless for f64)."""
    if isinstance(obj, float):
        return format(obj, ".17g")
    if isinstance(obj, dict):
        items = (f'"{k}": {_format_json17(v)}' for k, v in sorted(obj.items()))
        return "{" + ", ".join(items) + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ", ".join(_format_json17(v) for v in obj) + "]"
    return json.dumps(obj)


def _dump_json17(obj, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(_format_json17(obj) + "\n")


def fit_pid(E: np.ndarray, U: np.ndarray) -> PidGains:
    """Least-squares fit of K minimizing ||K E - U||_F^2.

    E is (4, n) error columns, U is (2, n) command columns (with any
    feedforward already removed). Raises RankDeficientError when the data
    does not excite all four error directions, naming the dead ones.
    """
    E = np.asarray(E, dtype=float)
    U = np.asarray(U, dtype=float)
    if E.ndim != 2 or E.shape[0] != 4:
        raise ValueError(f"E must be (4, n), got {E.shape}")
    if U.shape != (2, E.shape[1]):
        raise ValueError(f"U must be (2, {E.shape[1]}), got {U.shape}")
    if E.shape[1] < 4:
        raise ValueError(f"need at least 4 samples, got {E.shape[1]}")
    # rank check via the singular spectrum of E
    svd_u, svals, _ = np.linalg.svd(E, full_matrices=False)
    tol = svals.max() * max(E.shape) * np.finfo(float).eps if svals.size else 0.0
    deficient = svals <= tol
    if np.any(deficient):
        names = ["e1", "e2", "e3", "e4"]
        directions = []
        for col in np.where(deficient)[0]:
            vec = svd_u[:, col]
            desc = " + ".join(f"{c:+.3f}*{n}" for c, n in zip(vec, names) if abs(c) > 1e-6)
            directions.append(desc)
        raise RankDeficientError(
            "error data is rank deficient; unexcited directions: " + "; ".join(directions)
        )
    K_t, *_ = np.linalg.lstsq(E.T, U.T, rcond=None)
    return PidGains(K=K_t.T)


def longitudinal_control(
    v: float, v_target: float = 1.0, params: VehicleParams | None = None,
    k_p: float = 1.0,
) -> float:
    """Shared speed controller: feedforward throttle plus proportional term."""
    p = params or VehicleParams()
    return min(1.0, max(0.0, alpha_hold(v_target, p) + k_p * (v_target - v)))


def lookahead_equilibrium(kappa: float, lookahead: float) -> np.ndarray:
    """Error-state signature of perfect tracking with a lookahead reference.

    With the reference taken `lookahead` meters ahead along a path of
    curvature kappa, a perfectly tracking vehicle measures a nonzero error:
    the chord to the lookahead point in body coordinates plus the arc's
    heading change. This point (together with u = u_r) is an exact
    equilibrium of the error dynamics, so the tracking regulator drives the
    deviation from it to zero rather than the raw error.
    """
    kl = kappa * lookahead
    if abs(kl) < 1e-9:
        return np.array([lookahead, 0.0, 0.0, 0.0])
    return np.array([
        math.sin(kl) / kappa,
        (1.0 - math.cos(kl)) / kappa,
        kl,
        0.0,
    ])


class MpcController:
    """Receding-horizon tracking controller on the linearized error dynamics.

    Linearizes at the current error and the previously applied command
    (reference command on the first call), condenses the horizon, and solves
    the box QP with the previous solution shifted one step as warm start.
    The regulated variable is the deviation from the lookahead equilibrium,
    so tracking a constant-curvature path is bias-free.
    """

    name = "mpc"

    def __init__(self, params: VehicleParams | None = None,
                 weights: MpcWeights | None = None,
                 lookahead: float = DEFAULT_LOOKAHEAD,
                 qp_tol: float = 1e-8, qp_max_iter: int = 100_000):
        self.params = params or VehicleParams()
        self.weights = weights or MpcWeights()
        self.lookahead = lookahead
        self.qp_tol = qp_tol
        self.qp_max_iter = qp_max_iter
        self._prev_command: np.ndarray | None = None
        self._warm: np.ndarray | None = None
        self.last_solution: QpSolution | None = None

    def reset(self) -> None:
        self._prev_command = None
        self._warm = None
        self.last_solution = None

    def command(self, e: ErrorState, ref: ReferencePoint) -> ControlCommand:
        ctx = ErrorDynamicsContext.at_reference(ref, e, self.params)
        u_r = np.array([ref.alpha, ref.beta])
        u_star = self._prev_command if self._prev_command is not None else u_r
        e_vec = e.as_array()
        model = LinearizedModel.at(e_vec, u_star, ctx, CONTROL_DT)
        e_reg = e_vec - lookahead_equilibrium(ref.kappa, self.lookahead)
        prob = condense_mpc(model.A_t, model.B_t, self.weights.Q, self.weights.Q_N,
                            self.weights.R, e_reg, u_r, self.weights.N)
        sol = solve_box_qp(prob, tol=self.qp_tol, max_iter=self.qp_max_iter,
                           x0=self._warm)
        self.last_solution = sol
        nu = 2
        x = sol.x if sol.x is not None else np.tile(u_r, self.weights.N)
        # shift one step for the next warm start, repeating the tail
        self._warm = np.concatenate([x[nu:], x[-nu:]])
        u0 = x[:nu]
        self._prev_command = u0.copy()
        return ControlCommand(alpha=float(u0[0]), beta=float(u0[1]))


class PidController:
    """Static linear feedback u = clamp(K e + (alpha_r, 0))."""

    name = "pid"

    def __init__(self, gains: PidGains):
        self.gains = gains

    def reset(self) -> None:
        pass

    def command(self, e: ErrorState, ref: ReferencePoint) -> ControlCommand:
        K = self.gains.K
        ev = (e.e1, e.e2, e.e3, e.e4)
        alpha = K[0, 0] * ev[0] + K[0, 1] * ev[1] + K[0, 2] * ev[2] + K[0, 3] * ev[3]
        beta = K[1, 0] * ev[0] + K[1, 1] * ev[1] + K[1, 2] * ev[2] + K[1, 3] * ev[3]
        return ControlCommand(alpha=alpha + ref.alpha, beta=beta)


class NnController:
    """MLP policy: clamp(forward(model, e))."""

    def __init__(self, model: mlp.MlpModel, name: str = "nn"):
        self.model = model
        self.name = name

    def reset(self) -> None:
        pass

    def command(self, e: ErrorState, ref: ReferencePoint) -> ControlCommand:
        raw = mlp.forward(self.model, e.as_array())
        return ControlCommand(alpha=float(raw[0]), beta=float(raw[1]))


class ZeroController:
    """Feedforward-only baseline: never corrects, so it never settles."""

    name = "zero"

    def reset(self) -> None:
        pass

    def command(self, e: ErrorState, ref: ReferencePoint) -> ControlCommand:
        return ControlCommand(alpha=ref.alpha, beta=0.0)
