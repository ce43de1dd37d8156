"""Randomized micro-simulations and settling-time controller ranking.

A micro-simulation drops the vehicle next to an infinite straight
reference, displaced laterally by |e| ~ U[1.5, 2.5] m (random sign) and
misheaded by phi ~ U[-pi/4, pi/4], starting from rest while the
longitudinal controller works toward 1 m/s. The settling time (ST) is the
first moment the vehicle enters the reference tube |lateral| < 0.1 m,
|heading| < 0.1 rad and stays inside for a 1 s dwell; runs are capped and
timeouts enter the statistics at the cap.

Ranking feeds the identical perturbation sequence to every policy (paired
design) and tabulates, per policy, how often it had the shortest ST, the
second shortest, and so on, plus the mean ST.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import __version__ as _version
from .dynamics import IntegrationDivergedError, VehicleParams, VehicleState, wrap_angle
from .dynamics import alpha_hold
from .loop import CONTROL_DT, InfiniteLineReference, PolicySpec, control_step
from .seeding import substream

__all__ = [
    "Perturbation",
    "MicroSimResult",
    "RankReport",
    "TUBE_LATERAL",
    "TUBE_HEADING",
    "DWELL_TIME",
    "DEFAULT_CAP",
    "sample_perturbation",
    "run_micro_sim",
    "rank_policies",
]

TUBE_LATERAL = 0.1  # [m]
TUBE_HEADING = 0.1  # [rad]
DWELL_TIME = 1.0  # settling requires this long continuously inside the tube [s]
DEFAULT_CAP = 30.0  # [s]
_DWELL_STEPS = round(DWELL_TIME / CONTROL_DT)


@dataclass(frozen=True)
class Perturbation:
    """Initial displacement from the straight reference."""

    e_offset: float  # signed lateral offset [m], magnitude in [1.5, 2.5]
    phi: float  # heading offset [rad] in [-pi/4, pi/4]

    def __post_init__(self) -> None:
        if not 1.5 <= abs(self.e_offset) <= 2.5:
            raise ValueError(f"|e_offset| must lie in [1.5, 2.5], got {self.e_offset}")
        if not abs(self.phi) <= math.pi / 4 + 1e-12:
            raise ValueError(f"|phi| must be <= pi/4, got {self.phi}")


@dataclass
class MicroSimResult:
    settling_time: float | None  # None marks a timeout
    timeout: bool
    diverged: bool
    perturbation: Perturbation
    policy: str
    cap: float
    trajectory: np.ndarray  # columns t, x, y, theta, v, alpha, beta

    def __post_init__(self) -> None:
        if not self.timeout and not (self.settling_time and self.settling_time > 0):
            raise ValueError("settled runs must report settling_time > 0")


def sample_perturbation(rng: np.random.Generator) -> Perturbation:
    """|e| ~ U[1.5, 2.5] with a fair-coin sign, phi ~ U[-pi/4, pi/4]."""
    magnitude = rng.uniform(1.5, 2.5)
    sign = 1.0 if rng.integers(0, 2) == 1 else -1.0
    phi = rng.uniform(-math.pi / 4, math.pi / 4)
    return Perturbation(e_offset=sign * magnitude, phi=phi)


def run_micro_sim(
    policy,
    pert: Perturbation,
    cap: float = DEFAULT_CAP,
    params: VehicleParams | None = None,
    v_target: float = 1.0,
    throttle_mode: str = "shared",
) -> MicroSimResult:
    """Run one micro-simulation; the reference line is infinite along +x.

    Tube membership is evaluated after every control step directly against
    the line: |y| < 0.1 and |theta| < 0.1. ST is the time of the first
    sample of the dwell window.
    """
    p = params or VehicleParams()
    q = VehicleState(x=0.0, y=pert.e_offset, theta=pert.phi, v=0.0)
    provider = InfiniteLineReference(v_ref=v_target, alpha_ref=alpha_hold(v_target, p))
    policy.reset()
    rows = [(0.0, q.x, q.y, q.theta, q.v, 0.0, 0.0)]
    inside_run = 0
    settling = None
    diverged = False
    steps = round(cap / CONTROL_DT)
    for k in range(1, steps + 1):
        try:
            q, ref, e, u = control_step(q, policy, provider, p,
                                        throttle_mode=throttle_mode, v_target=v_target)
        except IntegrationDivergedError:
            diverged = True
            break
        t = k * CONTROL_DT
        rows.append((t, q.x, q.y, q.theta, q.v, u.alpha, u.beta))
        if abs(q.y) < TUBE_LATERAL and abs(wrap_angle(q.theta)) < TUBE_HEADING:
            inside_run += 1
            if inside_run == _DWELL_STEPS:
                settling = t - (DWELL_TIME - CONTROL_DT)
                break
        else:
            inside_run = 0
    timeout = settling is None
    return MicroSimResult(
        settling_time=None if timeout else settling,
        timeout=timeout,
        diverged=diverged,
        perturbation=pert,
        policy=getattr(policy, "name", type(policy).__name__),
        cap=cap,
        trajectory=np.array(rows),
    )


def _micro_sim_job(args) -> tuple[int, int, float, bool]:
    spec, params, pert, cap, v_target, throttle_mode, pol_idx, draw_idx = args
    policy = spec.build(params)
    result = run_micro_sim(policy, pert, cap=cap, params=params,
                           v_target=v_target, throttle_mode=throttle_mode)
    st = result.settling_time if not result.timeout else cap
    return pol_idx, draw_idx, st, result.timeout


@dataclass
class RankReport:
    """Per-policy settling statistics over the paired random draws."""

    policies: list[str]
    n: int
    seed: int
    cap: float
    settling_times: np.ndarray  # (n_policies, n); timeouts counted at the cap
    timeouts: np.ndarray  # (n_policies, n) bool
    places: np.ndarray  # (n_policies, n_policies): places[i, r] = times policy i ranked r-th
    mean_st: np.ndarray  # (n_policies,)
    perturbations: list[Perturbation] = field(default_factory=list)

    def to_json(self) -> str:
        doc = {
            "tool_version": _version,
            "seed": self.seed,
            "n": self.n,
            "cap_s": self.cap,
            "policies": self.policies,
            "mean_st_s": {p: self.mean_st[i] for i, p in enumerate(self.policies)},
            "place_counts": {p: self.places[i].tolist() for i, p in enumerate(self.policies)},
            "timeout_counts": {p: int(self.timeouts[i].sum()) for i, p in enumerate(self.policies)},
            "settling_times_s": {p: self.settling_times[i].tolist()
                                 for i, p in enumerate(self.policies)},
            "perturbations": [{"e": q.e_offset, "phi": q.phi} for q in self.perturbations],
        }
        return json.dumps(doc, sort_keys=True, indent=1)

    def render_table(self) -> str:
        """Text table: place counts (1st..kth) and mean settling time."""
        k = len(self.policies)
        ordinals = ["1st", "2nd", "3rd"] + [f"{i}th" for i in range(4, k + 1)]
        header = ["Policy"] + ordinals[:k] + ["Mean ST"]
        rows = []
        for i, name in enumerate(self.policies):
            rows.append([name] + [str(int(c)) for c in self.places[i]]
                        + [f"{self.mean_st[i]:.3f} s"])
        widths = [max(len(r[c]) for r in [header] + rows) for c in range(len(header))]
        lines = ["  ".join(h.ljust(w) for h, w in zip(header, widths))]
        lines.append("  ".join("-" * w for w in widths))
        for r in rows:
            lines.append("  ".join(v.ljust(w) for v, w in zip(r, widths)))
        return "\n".join(lines) + "\n"


def rank_policies(
    specs: list[PolicySpec],
    n: int = 100,
    seed: int = 0,
    cap: float = DEFAULT_CAP,
    params: VehicleParams | None = None,
    v_target: float = 1.0,
    throttle_mode: str = "shared",
    workers: int = 1,
) -> RankReport:
    """Paired settling-time ranking over n random perturbations.

    Every policy sees the identical perturbation sequence; per draw, places
    are assigned by ascending ST with ties broken by policy list order.
    Results are independent of the worker count.
    """
    if len(specs) < 2:
        raise ValueError("ranking needs at least two policies")
    p = params or VehicleParams()
    rng = substream(seed, "rank-perturbations")
    perts = [sample_perturbation(rng) for _ in range(n)]

    jobs = [(spec, p, pert, cap, v_target, throttle_mode, i, j)
            for i, spec in enumerate(specs) for j, pert in enumerate(perts)]
    k = len(specs)
    st = np.zeros((k, n))
    tout = np.zeros((k, n), dtype=bool)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for i, j, value, timed_out in pool.map(_micro_sim_job, jobs, chunksize=4):
                st[i, j] = value
                tout[i, j] = timed_out
    else:
        for job in jobs:
            i, j, value, timed_out = _micro_sim_job(job)
            st[i, j] = value
            tout[i, j] = timed_out

    places = np.zeros((k, k), dtype=int)
    for j in range(n):
        order = np.argsort(st[:, j], kind="stable")  # ties keep policy order
        for rank, i in enumerate(order):
            places[i, rank] += 1
    return RankReport(
        policies=[s.label for s in specs],
        n=n, seed=seed, cap=cap,
        settling_times=st, timeouts=tout, places=places,
        mean_st=st.mean(axis=1),
        perturbations=perts,
    )
