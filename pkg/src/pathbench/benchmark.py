"""Closed-loop benchmark runs on the three reconstructed courses.

Each run follows a course at 1 m/s from its start pose (with a small
seeded lateral offset, since the simulator is otherwise deterministic) and
logs state, command, and error at every control step. Tracking statistics
follow the usual definitions: lateral error is the shortest distance from
the vehicle to the reference polyline, heading error is the wrapped
difference against the nearest reference sample, both reported as
mean +- std of absolute values.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import __version__ as _version
from .dynamics import IntegrationDivergedError, VehicleParams, VehicleState, wrap_angle
from .loop import CONTROL_DT, DEFAULT_LOOKAHEAD, PathReference, PolicySpec, control_step
from .paths import ReferencePath, benchmark_path
from .seeding import stream_seed, substream

__all__ = [
    "RunLog",
    "TrackingStats",
    "run_path_following",
    "tracking_stats",
    "run_benchmark",
    "export_results",
    "trajectory_svg",
]

#: abort a run after this multiple of the nominal duration
ABORT_FACTOR = 3.0


@dataclass
class RunLog:
    """Time series of one closed-loop run at the control period."""

    policy: str
    path_name: str
    seed: int
    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    theta: np.ndarray
    v: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    e: np.ndarray  # (n, 4)
    ref_index: np.ndarray
    aborted: bool
    distance_covered: float

    def columns(self) -> list[str]:
        return ["t", "x", "y", "theta", "v", "alpha", "beta",
                "e1", "e2", "e3", "e4", "ref_index"]


@dataclass
class TrackingStats:
    lateral_mean: float
    lateral_std: float
    heading_mean: float
    heading_std: float
    samples: int

    def __post_init__(self) -> None:
        if self.lateral_std < 0 or self.heading_std < 0 or self.lateral_mean < 0:
            raise ValueError("tracking statistics must be non-negative")


def _start_state(path: ReferencePath, e2: float) -> VehicleState:
    p0 = path.point(0)
    nx, ny = -math.sin(p0.theta), math.cos(p0.theta)
    return VehicleState(x=p0.x - e2 * nx, y=p0.y - e2 * ny, theta=p0.theta, v=0.0)


def run_path_following(
    policy,
    path: ReferencePath,
    v_target: float = 1.0,
    seed: int = 0,
    params: VehicleParams | None = None,
    throttle_mode: str = "shared",
    lookahead: float = DEFAULT_LOOKAHEAD,
    policy_name: str | None = None,
) -> RunLog:
    """Drive the path start-to-end (open) or for one lap (closed).

    The start pose carries a seeded lateral offset |e2| <= 0.1 m. A run is
    aborted (and marked so) once it exceeds three times the nominal
    duration length/v_target.
    """
    p = params or VehicleParams()
    rng = substream(seed, "benchmark-start", path.name)
    q = _start_state(path, rng.uniform(-0.1, 0.1))
    provider = PathReference(path, lookahead)
    policy.reset()

    nominal = path.length / v_target
    max_steps = int(math.ceil(ABORT_FACTOR * nominal / CONTROL_DT))
    rows = []
    aborted = True
    progress = 0.0
    prev_s = 0.0
    last_idx = 0
    for k in range(max_steps):
        try:
            q, ref, e, u = control_step(q, policy, provider, p,
                                        throttle_mode=throttle_mode, v_target=v_target)
        except IntegrationDivergedError:
            break
        idx = path.nearest_index(q.x, q.y)
        rows.append((k * CONTROL_DT, q.x, q.y, q.theta, q.v, u.alpha, u.beta,
                     e.e1, e.e2, e.e3, e.e4, idx))
        s_now = path.s[idx]
        ds = s_now - prev_s
        if path.closed:
            # unwrap the arc position across the seam
            if ds < -path.length / 2:
                ds += path.length
            elif ds > path.length / 2:
                ds -= path.length
        progress += max(ds, 0.0) if not path.closed else ds
        prev_s = s_now
        last_idx = idx
        if path.closed:
            if progress >= path.length - 2 * (path.length / len(path)):
                aborted = False
                break
        else:
            if idx >= len(path) - 1:
                aborted = False
                break
    data = np.array(rows) if rows else np.zeros((0, 12))
    return RunLog(
        policy=policy_name or getattr(policy, "name", type(policy).__name__),
        path_name=path.name,
        seed=seed,
        t=data[:, 0], x=data[:, 1], y=data[:, 2], theta=data[:, 3], v=data[:, 4],
        alpha=data[:, 5], beta=data[:, 6], e=data[:, 7:11],
        ref_index=data[:, 11].astype(int),
        aborted=aborted,
        distance_covered=float(progress if path.closed else path.s[last_idx]),
    )


def _polyline_distance(px: np.ndarray, py: np.ndarray, path: ReferencePath
                       ) -> tuple[np.ndarray, np.ndarray]:
    """Shortest distance from each point to the reference polyline, plus the
    index of the nearest sample (vertex)."""
    ax, ay = path.x, path.y
    if path.closed:
        bx = np.roll(ax, -1)
        by = np.roll(ay, -1)
    else:
        bx, by = ax[1:], ay[1:]
        ax, ay = ax[:-1], ay[:-1]
    ex, ey = bx - ax, by - ay
    seg_len2 = np.maximum(ex * ex + ey * ey, 1e-300)

    dists = np.empty(len(px))
    nearest = np.empty(len(px), dtype=int)
    # chunk to bound the (points x segments) workspace
    chunk = max(1, int(4e6 // max(len(ax), 1)))
    for lo in range(0, len(px), chunk):
        hi = min(lo + chunk, len(px))
        dx = px[lo:hi, None] - ax[None, :]
        dy = py[lo:hi, None] - ay[None, :]
        tproj = np.clip((dx * ex + dy * ey) / seg_len2, 0.0, 1.0)
        qx = dx - tproj * ex
        qy = dy - tproj * ey
        d2 = qx * qx + qy * qy
        dists[lo:hi] = np.sqrt(d2.min(axis=1))
        # nearest vertex via plain point distances
        vx = px[lo:hi, None] - path.x[None, :]
        vy = py[lo:hi, None] - path.y[None, :]
        nearest[lo:hi] = np.argmin(vx * vx + vy * vy, axis=1)
    return dists, nearest


def tracking_stats(log: RunLog, path: ReferencePath) -> TrackingStats:
    """Per-run lateral/heading error statistics over all logged steps."""
    if len(log.t) == 0:
        raise ValueError("run log is empty")
    lat, nearest = _polyline_distance(log.x, log.y, path)
    head = np.abs([wrap_angle(th - path.theta[i]) for th, i in zip(log.theta, nearest)])
    return TrackingStats(
        lateral_mean=float(np.mean(lat)),
        lateral_std=float(np.std(lat)),
        heading_mean=float(np.mean(head)),
        heading_std=float(np.std(head)),
        samples=len(lat),
    )


def _pooled_stats(logs: list[RunLog], path: ReferencePath) -> TrackingStats:
    lat_all, head_all = [], []
    for log in logs:
        lat, nearest = _polyline_distance(log.x, log.y, path)
        lat_all.append(lat)
        head_all.append(np.abs([wrap_angle(th - path.theta[i])
                                for th, i in zip(log.theta, nearest)]))
    lat = np.concatenate(lat_all)
    head = np.concatenate(head_all)
    return TrackingStats(float(lat.mean()), float(lat.std()),
                         float(head.mean()), float(head.std()), len(lat))


def _benchmark_job(args):
    spec, params, path_index, v_target, throttle_mode, seed, repeat = args
    path = benchmark_path(path_index, params, v_target)
    policy = spec.build(params)
    log = run_path_following(policy, path, v_target=v_target, seed=seed,
                             params=params, throttle_mode=throttle_mode,
                             policy_name=spec.label)
    return spec.label, path_index, repeat, log


@dataclass
class BenchmarkResults:
    per_run: dict  # (policy, path_index, repeat) -> RunLog
    per_run_stats: dict  # (policy, path_index, repeat) -> TrackingStats
    aggregate: dict  # (policy, path_index) -> TrackingStats
    policies: list[str]
    path_indices: list[int]
    repeats: int
    seed: int
    params_hash: str = ""
    config: dict = field(default_factory=dict)


def run_benchmark(
    specs: list[PolicySpec],
    path_indices: list[int] | None = None,
    repeats: int = 5,
    seed: int = 0,
    params: VehicleParams | None = None,
    v_target: float = 1.0,
    throttle_mode: str = "shared",
    workers: int = 1,
) -> BenchmarkResults:
    """Run every policy over every course `repeats` times."""
    p = params or VehicleParams()
    indices = path_indices or [1, 2, 3]
    jobs = []
    for spec in specs:
        for idx in indices:
            for rep in range(repeats):
                run_seed = stream_seed(seed, "benchmark", spec.label, str(idx), str(rep))
                jobs.append((spec, p, idx, v_target, throttle_mode, run_seed, rep))
    per_run = {}
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for label, idx, rep, log in pool.map(_benchmark_job, jobs, chunksize=1):
                per_run[(label, idx, rep)] = log
    else:
        for job in jobs:
            label, idx, rep, log = _benchmark_job(job)
            per_run[(label, idx, rep)] = log

    paths = {idx: benchmark_path(idx, p, v_target) for idx in indices}
    per_run_stats = {key: tracking_stats(log, paths[key[1]])
                     for key, log in per_run.items()}
    aggregate = {}
    for spec in specs:
        for idx in indices:
            logs = [per_run[(spec.label, idx, rep)] for rep in range(repeats)]
            aggregate[(spec.label, idx)] = _pooled_stats(logs, paths[idx])
    return BenchmarkResults(
        per_run=per_run, per_run_stats=per_run_stats, aggregate=aggregate,
        policies=[s.label for s in specs], path_indices=indices,
        repeats=repeats, seed=seed, params_hash=p.digest(),
    )


# ---------------------------------------------------------------------------
# export


def trajectory_svg(log: RunLog, path: ReferencePath, width: int = 640) -> str:
    """Static SVG overlay: reference polyline plus the driven trajectory."""
    xs = np.concatenate([path.x, log.x])
    ys = np.concatenate([path.y, log.y])
    x0, x1 = xs.min(), xs.max()
    y0, y1 = ys.min(), ys.max()
    span = max(x1 - x0, y1 - y0, 1e-9)
    margin = 0.05 * span
    scale = (width - 2) / (span + 2 * margin)
    height = int(math.ceil((y1 - y0 + 2 * margin) * scale)) + 2

    def pts(px, py):
        # svg y axis points down
        sx = (px - x0 + margin) * scale + 1
        sy = (y1 - py + margin) * scale + 1
        return " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(sx, sy))

    ref_pts = pts(np.append(path.x, path.x[0]) if path.closed else path.x,
                  np.append(path.y, path.y[0]) if path.closed else path.y)
    drv_pts = pts(log.x, log.y)
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'width="{width}" height="{height}" viewBox="0 0 {width} {height}">\n'
        f'<title>{log.policy} on {log.path_name} (seed {log.seed})</title>\n'
        f'<polyline points="{ref_pts}" fill="none" stroke="#888888" '
        f'stroke-width="1.5" stroke-dasharray="6 4"/>\n'
        f'<polyline points="{drv_pts}" fill="none" stroke="#c0392b" '
        f'stroke-width="1.2"/>\n'
        f"</svg>\n"
    )


def export_results(results: BenchmarkResults, out_dir: str) -> list[str]:
    """Write per-run CSVs, the aggregate stats CSV, and per-run SVGs.

    Returns the list of files written. Re-export of identical results is
    byte-identical.
    """
    os.makedirs(out_dir, exist_ok=True)
    params = VehicleParams()  # geometry for SVG only depends on path reconstruction
    written = []

    agg_path = os.path.join(out_dir, "benchmark_stats.csv")
    with open(agg_path, "w", encoding="utf-8") as fh:
        fh.write("policy,path,lateral_mean,lateral_std,heading_mean,heading_std,"
                 "runs,aborted_runs\n")
        for policy in results.policies:
            for idx in results.path_indices:
                st = results.aggregate[(policy, idx)]
                aborted = sum(results.per_run[(policy, idx, r)].aborted
                              for r in range(results.repeats))
                fh.write(f"{policy},{idx},{st.lateral_mean!r},{st.lateral_std!r},"
                         f"{st.heading_mean!r},{st.heading_std!r},"
                         f"{results.repeats},{aborted}\n")
    written.append(agg_path)

    meta_path = os.path.join(out_dir, "benchmark_meta.json")
    with open(meta_path, "w", encoding="utf-8") as fh:
        json.dump({"tool_version": _version, "seed": results.seed,
                   "repeats": results.repeats, "params_hash": results.params_hash,
                   "policies": results.policies,
                   "paths": results.path_indices}, fh, sort_keys=True)
        fh.write("\n")
    written.append(meta_path)

    for (policy, idx, rep), log in sorted(results.per_run.items()):
        stem = f"run_{policy}_path{idx}_rep{rep}"
        csv_path = os.path.join(out_dir, stem + ".csv")
        with open(csv_path, "w", encoding="utf-8") as fh:
            fh.write(",".join(log.columns()) + "\n")
            for i in range(len(log.t)):
                row = [float(log.t[i]), float(log.x[i]), float(log.y[i]),
                       float(log.theta[i]), float(log.v[i]), float(log.alpha[i]),
                       float(log.beta[i]), float(log.e[i, 0]), float(log.e[i, 1]),
                       float(log.e[i, 2]), float(log.e[i, 3])]
                fh.write(",".join(repr(v) for v in row) + f",{int(log.ref_index[i])}\n")
        written.append(csv_path)

        path = benchmark_path(idx, params)
        svg_path = os.path.join(out_dir, stem + ".svg")
        with open(svg_path, "w", encoding="utf-8") as fh:
            fh.write(trajectory_svg(log, path))
        written.append(svg_path)
    return written
