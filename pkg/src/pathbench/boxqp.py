"""Dense box-constrained convex QP solver and MPC horizon condensation.

Solves min 1/2 x'Px + q'x over elementwise bounds with accelerated
projected gradient descent (fixed step 1/lambda_max(P), Nesterov momentum
with a function-value restart so the objective never increases).
Optimality is certified by the projected-gradient residual

    || x - clamp(x - (Px + q), lower, upper) ||_inf <= tol

which is zero exactly at a KKT point of the box QP.

condense_mpc eliminates the predicted error states from the receding
horizon program, leaving a box QP over the stacked control sequence.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = ["BoxQp", "QpSolution", "solve_box_qp", "condense_mpc"]

DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 100_000

#: per-step command bounds: throttle in [0, 1], steering in [-1, 1]
COMMAND_LOWER = np.array([0.0, -1.0])
COMMAND_UPPER = np.array([1.0, 1.0])


@dataclass
class BoxQp:
    """min 1/2 x'Px + q'x  s.t.  lower <= x <= upper (entries may be +-inf)."""

    P: np.ndarray
    q: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self) -> None:
        self.P = np.asarray(self.P, dtype=float)
        self.q = np.asarray(self.q, dtype=float)
        self.lower = np.asarray(self.lower, dtype=float)
        self.upper = np.asarray(self.upper, dtype=float)
        n = self.q.shape[0]
        if self.P.shape != (n, n):
            raise ValueError(f"P must be {n}x{n}, got {self.P.shape}")
        if self.lower.shape != (n,) or self.upper.shape != (n,):
            raise ValueError("bound vectors must match the dimension of q")
        if not np.allclose(self.P, self.P.T, atol=1e-10):
            raise ValueError("P must be symmetric to 1e-10")

    def objective(self, x: np.ndarray) -> float:
        return float(0.5 * x @ self.P @ x + self.q @ x)


@dataclass
class QpSolution:
    """Solver output.

    objective_history[k] is the best objective seen through iteration k
    (the incumbent), so it is non-increasing by construction; `objective`
    is the value at the returned iterate, which agrees with the incumbent
    to floating-point resolution.
    """

    x: np.ndarray | None
    status: str  # "solved" | "max_iterations" | "infeasible_bounds"
    iterations: int
    kkt_residual: float
    objective: float = math.nan
    objective_history: np.ndarray = field(default_factory=lambda: np.array([]))


def _lambda_max(P: np.ndarray, iters: int = 50) -> float:
    """Largest eigenvalue estimate via the power method (fixed seed)."""
    rng = np.random.default_rng(0)
    v = rng.standard_normal(P.shape[0])
    nv = np.linalg.norm(v)
    if nv == 0.0:
        return 0.0
    v /= nv
    lam = 0.0
    for _ in range(iters):
        w = P @ v
        nw = np.linalg.norm(w)
        if nw <= 1e-300:
            return 0.0
        v = w / nw
        lam = float(v @ P @ v)
    return lam


def _residual(x: np.ndarray, grad: np.ndarray, lower: np.ndarray, upper: np.ndarray) -> float:
    return float(np.abs(x - np.clip(x - grad, lower, upper)).max())


def solve_box_qp(
    prob: BoxQp,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    x0: np.ndarray | None = None,
) -> QpSolution:
    """Solve a box QP; returns the best iterate even on iteration exhaustion."""
    lo, up = prob.lower, prob.upper
    if np.any(lo > up):
        return QpSolution(x=None, status="infeasible_bounds", iterations=0,
                          kkt_residual=math.inf)
    P, q = prob.P, prob.q

    x = np.clip(x0 if x0 is not None else np.zeros_like(q), lo, up)
    # slight inflation guards against the power method underestimating the
    # Lipschitz constant (a step <= 1/L never increases the objective)
    step = 1.0 / max(_lambda_max(P) * 1.01, 1e-12)

    y = x
    t = 1.0
    best = prob.objective(x)
    history = [best]
    res = _residual(x, P @ x + q, lo, up)
    iterations = 0
    for k in range(1, max_iter + 1):
        if res <= tol:
            break
        iterations = k
        x_new = np.clip(y - step * (P @ y + q), lo, up)
        if np.dot(y - x_new, x_new - x) > 0.0:
            # momentum points against the descent direction: restart it and
            # take a plain projected-gradient step from x instead
            t = 1.0
            x_new = np.clip(x - step * (P @ x + q), lo, up)
        t_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        y = x_new + ((t - 1.0) / t_next) * (x_new - x)
        x, t = x_new, t_next
        best = min(best, prob.objective(x))
        history.append(best)
        res = _residual(x, P @ x + q, lo, up)

    status = "solved" if res <= tol else "max_iterations"
    return QpSolution(x=x, status=status, iterations=iterations, kkt_residual=res,
                      objective=prob.objective(x), objective_history=np.array(history))


def condense_mpc(
    A_t: np.ndarray,
    B_t: np.ndarray,
    Q: np.ndarray,
    Q_N: np.ndarray,
    R: np.ndarray,
    e0: np.ndarray,
    u_r: np.ndarray,
    N: int,
) -> BoxQp:
    """Condense the N-step tracking program into a box QP over stacked controls.

    The horizon cost is sum_{k=1..N-1} e_k'Q e_k + e_N'Q_N e_N
    + sum_{k=0..N-1} (u_k - u_r)'R(u_k - u_r), with predicted errors

        e_k = A_t^k e0 + sum_{j<k} A_t^(k-1-j) B_t (u_j - u_r).

    The input deviation u - u_r drives the prediction (the linearization is
    exact at the tracking equilibrium e=0, u=u_r), while the decision
    variable stays the absolute command so the box is the plain per-step
    command box. The e0 stage term is constant and dropped. R positive
    definite makes the condensed P positive definite.
    """
    if N < 1:
        raise ValueError(f"horizon must be >= 1, got {N}")
    A_t = np.asarray(A_t, dtype=float)
    B_t = np.asarray(B_t, dtype=float)
    nx, nu = B_t.shape
    e0 = np.asarray(e0, dtype=float).reshape(nx)
    u_r = np.asarray(u_r, dtype=float).reshape(nu)

    powers = [np.eye(nx)]
    for _ in range(N):
        powers.append(A_t @ powers[-1])

    # e_stack = M e0 + S w, w = stacked (u_k - u_r)
    M = np.vstack([powers[k] for k in range(1, N + 1)])
    S = np.zeros((nx * N, nu * N))
    for k in range(1, N + 1):
        for j in range(k):
            S[(k - 1) * nx:k * nx, j * nu:(j + 1) * nu] = powers[k - 1 - j] @ B_t

    Q_bar = np.zeros((nx * N, nx * N))
    for k in range(N - 1):
        Q_bar[k * nx:(k + 1) * nx, k * nx:(k + 1) * nx] = Q
    Q_bar[(N - 1) * nx:, (N - 1) * nx:] = Q_N
    R_bar = np.kron(np.eye(N), R)

    P = 2.0 * (S.T @ Q_bar @ S + R_bar)
    P = 0.5 * (P + P.T)  # symmetrize roundoff
    u_r_stack = np.tile(u_r, N)
    q = 2.0 * (S.T @ (Q_bar @ (M @ e0))) - P @ u_r_stack

    lower = np.tile(COMMAND_LOWER, N)
    upper = np.tile(COMMAND_UPPER, N)
    return BoxQp(P=P, q=q, lower=lower, upper=upper)
