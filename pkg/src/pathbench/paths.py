"""Reference paths, reference-point lookup, and the tracking error state.

A reference path is an arc-length parameterized polyline sampled at most
0.05 m apart, with per-sample heading, speed, curvature, and the
feedforward commands (steering from curvature, throttle holding the
reference speed). The tracking error e = (e1, e2, e3, e4) is the
body-frame position error plus heading and speed errors:

    (e1, e2) = Rot(theta) @ (x_ref - x, y_ref - y)
    e3 = wrap(theta_ref - theta),  e4 = v_ref - v

Positive e2 means the reference lies to the vehicle's left.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dynamics import VehicleParams, VehicleState, alpha_hold, wrap_angle

__all__ = [
    "ReferencePoint",
    "ErrorState",
    "ReferencePath",
    "wrap_angle",
    "error_state",
    "reference_point",
    "build_path",
    "circle_path",
    "line_path",
    "perturbed_circle_path",
    "composite_path",
    "benchmark_path",
    "save_path_csv",
    "load_path_csv",
]

#: maximum arc-length spacing between consecutive path samples [m]
MAX_SPACING = 0.05

#: dense sampling used while constructing paths, before resampling [m]
_DENSE_SPACING = 0.005

#: arc length ahead of the nearest path point where the reference is taken;
#: about one wheelbase
DEFAULT_LOOKAHEAD = 0.5


@dataclass(frozen=True)
class ReferencePoint:
    """One sample of the reference: pose, speed, and feedforward commands."""

    x: float
    y: float
    theta: float
    v: float
    beta: float = 0.0  # steering feedforward from path curvature
    alpha: float = 0.0  # throttle feedforward holding v on flat ground
    kappa: float = 0.0  # path curvature at the sample [1/m]


@dataclass(frozen=True)
class ErrorState:
    """Tracking error: along-track, cross-track, heading, speed."""

    e1: float
    e2: float
    e3: float
    e4: float

    def __post_init__(self) -> None:
        for name in ("e1", "e2", "e3", "e4"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise ValueError(f"non-finite error state {self}")
            object.__setattr__(self, name, float(value))
        object.__setattr__(self, "e3", wrap_angle(self.e3))

    def as_array(self) -> np.ndarray:
        return np.array([self.e1, self.e2, self.e3, self.e4])


def error_state(q: VehicleState, r: ReferencePoint) -> ErrorState:
    """Body-frame tracking error of state q relative to reference point r."""
    c, s = math.cos(q.theta), math.sin(q.theta)
    dx, dy = r.x - q.x, r.y - q.y
    return ErrorState(
        e1=c * dx + s * dy,
        e2=-s * dx + c * dy,
        e3=wrap_angle(r.theta - q.theta),
        e4=r.v - q.v,
    )


class ReferencePath:
    """Immutable arc-length sampled path; shareable across workers."""

    def __init__(
        self,
        x: np.ndarray,
        y: np.ndarray,
        theta: np.ndarray,
        v: np.ndarray,
        kappa: np.ndarray,
        closed: bool,
        params: VehicleParams,
        name: str = "path",
    ):
        n = len(x)
        if n < 2:
            raise ValueError("a path needs at least two samples")
        self.x = np.asarray(x, dtype=float)
        self.y = np.asarray(y, dtype=float)
        self.theta = np.asarray(theta, dtype=float)
        self.v = np.asarray(v, dtype=float)
        self.kappa = np.asarray(kappa, dtype=float)
        self.closed = closed
        self.name = name
        seg = np.hypot(np.diff(self.x), np.diff(self.y))
        if np.any(seg > MAX_SPACING + 1e-9):
            raise ValueError(f"sample spacing exceeds {MAX_SPACING} m (max {seg.max():.4f})")
        self.s = np.concatenate([[0.0], np.cumsum(seg)])
        if closed:
            # include the closing segment in the total length
            self.length = float(self.s[-1] + math.hypot(self.x[0] - self.x[-1],
                                                        self.y[0] - self.y[-1]))
        else:
            self.length = float(self.s[-1])
        # feedforward commands, derived from curvature and the torque map
        p = params
        self.beta = np.clip(np.arctan(self.kappa * p.l) / p.delta, -1.0, 1.0)
        self.alpha = np.array([alpha_hold(vi, p) for vi in self.v])

    def __len__(self) -> int:
        return len(self.x)

    def point(self, i: int) -> ReferencePoint:
        return ReferencePoint(
            x=float(self.x[i]), y=float(self.y[i]),
            theta=float(self.theta[i]), v=float(self.v[i]),
            beta=float(self.beta[i]), alpha=float(self.alpha[i]),
            kappa=float(self.kappa[i]),
        )

    def nearest_index(self, x: float, y: float) -> int:
        """Index of the closest sample; ties broken by lowest index."""
        d2 = (self.x - x) ** 2 + (self.y - y) ** 2
        return int(np.argmin(d2))  # argmin returns the first minimizer


def reference_point(path: ReferencePath, q: VehicleState, lookahead: float = 0.5) -> ReferencePoint:
    """Nearest path sample to q, advanced along the path by `lookahead` meters.

    Wraps around on closed paths and saturates at the final sample on open
    ones. With lookahead equal to the sample spacing the returned index
    advances by exactly one on uniformly sampled paths.

    The point is interpolated along the polyline at the exact arc position,
    so the reference moves continuously as the vehicle advances (snapping to
    samples would dither the tracking equilibrium at sub-sample scale).
    """
    if lookahead < 0:
        raise ValueError(f"lookahead must be >= 0, got {lookahead}")
    i = path.nearest_index(q.x, q.y)
    if lookahead == 0.0:
        return path.point(i)
    target = path.s[i] + lookahead
    n = len(path)
    if path.closed:
        target %= path.length
        j = int(np.searchsorted(path.s, target - 1e-9)) % n
    else:
        j = min(int(np.searchsorted(path.s, target - 1e-9)), n - 1)
    pj = path.point(j)
    # interpolate between the previous sample and j at the exact arc position
    k = j - 1
    if k < 0:
        if not path.closed:
            return pj
        k = n - 1
    if path.closed and j == 0:
        # crossing the seam: the closing segment spans [s[-1], length]
        s_j, s_k = path.length, float(path.s[-1])
    else:
        s_j, s_k = float(path.s[j]), float(path.s[k])
    seg = s_j - s_k
    if seg <= 1e-12 or not s_k <= target <= s_j:
        return pj
    w = float((target - s_k) / seg)
    pk = path.point(k)
    dth = wrap_angle(pj.theta - pk.theta)
    return ReferencePoint(
        x=pk.x + w * (pj.x - pk.x),
        y=pk.y + w * (pj.y - pk.y),
        theta=wrap_angle(pk.theta + w * dth),
        v=pk.v + w * (pj.v - pk.v),
        beta=pk.beta + w * (pj.beta - pk.beta),
        alpha=pk.alpha + w * (pj.alpha - pk.alpha),
        kappa=pk.kappa + w * (pj.kappa - pk.kappa),
    )


# ---------------------------------------------------------------------------
# path construction


def _resample(
    x: np.ndarray,
    y: np.ndarray,
    closed: bool,
    params: VehicleParams,
    v_ref: float,
    name: str,
    scale_to_length: float | None = None,
) -> ReferencePath:
    """Resample a dense polyline at uniform arc length <= MAX_SPACING.

    Heading comes from central-difference tangents on the dense polyline and
    curvature from d(theta)/ds, so both stay consistent with the geometry.
    An optional uniform scale pins the total length exactly.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if closed and (abs(x[0] - x[-1]) > 1e-12 or abs(y[0] - y[-1]) > 1e-12):
        x = np.append(x, x[0])
        y = np.append(y, y[0])
    seg = np.hypot(np.diff(x), np.diff(y))
    keep = np.concatenate([[True], seg > 1e-12])
    x, y = x[keep], y[keep]
    seg = np.hypot(np.diff(x), np.diff(y))
    s = np.concatenate([[0.0], np.cumsum(seg)])
    total = s[-1]
    if scale_to_length is not None:
        factor = scale_to_length / total
        x, y, s, total = x * factor, y * factor, s * factor, scale_to_length

    # unwrapped heading along the dense polyline (central differences)
    if closed:
        # the polyline carries a duplicate closing point; tangents come from
        # cyclic central differences over the unique points
        xu, yu = x[:-1], y[:-1]
        dx = np.roll(xu, -1) - np.roll(xu, 1)
        dy = np.roll(yu, -1) - np.roll(yu, 1)
        theta_u = np.unwrap(np.arctan2(dy, dx))
        # one full loop adds a +-2pi winding to the unwrapped heading
        winding = round((theta_u[-1] - theta_u[0]) / (2 * math.pi))
        winding = winding if winding != 0 else (1 if theta_u[-1] > theta_u[0] else -1)
        theta = np.append(theta_u, theta_u[0] + 2 * math.pi * winding)
    else:
        dx = np.gradient(x)
        dy = np.gradient(y)
        theta = np.unwrap(np.arctan2(dy, dx))
    kappa = np.gradient(theta, s)

    if closed:
        n_out = max(int(math.ceil(total / MAX_SPACING)), 2)
        s_out = np.linspace(0.0, total, n_out, endpoint=False)
    else:
        n_out = max(int(math.ceil(total / MAX_SPACING)) + 1, 2)
        s_out = np.linspace(0.0, total, n_out)
    xi = np.interp(s_out, s, x)
    yi = np.interp(s_out, s, y)
    ti = np.interp(s_out, s, theta)
    ki = np.interp(s_out, s, kappa)
    ti = np.array([wrap_angle(t) for t in ti])
    vi = np.full(n_out, v_ref)
    return ReferencePath(xi, yi, ti, vi, ki, closed, params, name)


def circle_path(
    radius: float, direction: str, params: VehicleParams, v_ref: float = 1.0,
) -> ReferencePath:
    """Circle of the given radius; direction is "cw" or "ccw"."""
    if radius <= 0:
        raise ValueError(f"radius must be > 0, got {radius}")
    if direction not in ("cw", "ccw"):
        raise ValueError(f"direction must be 'cw' or 'ccw', got {direction!r}")
    sign = 1.0 if direction == "ccw" else -1.0
    n = int(math.ceil(2 * math.pi * radius / _DENSE_SPACING))
    u = np.linspace(0.0, 2 * math.pi, n, endpoint=False)
    # both directions start at the origin heading +x
    x = radius * np.sin(u)
    y = sign * radius * (1.0 - np.cos(u))
    return _resample(x, y, True, params, v_ref, f"circle_{direction}_{radius:g}")


def line_path(length: float, params: VehicleParams, v_ref: float = 1.0) -> ReferencePath:
    """Straight segment of the given length along +x from the origin."""
    if length <= 0:
        raise ValueError(f"length must be > 0, got {length}")
    n = int(math.ceil(length / _DENSE_SPACING)) + 1
    x = np.linspace(0.0, length, n)
    return _resample(x, np.zeros(n), False, params, v_ref, f"line_{length:g}")


def perturbed_circle_path(
    radius: float,
    seed: int,
    params: VehicleParams,
    v_ref: float = 1.0,
    target_length: float | None = None,
) -> ReferencePath:
    """Circle with seeded smooth radial noise, optionally scaled to a length.

    The radial profile is a low-order cosine series, so the result stays
    smooth and closed.
    """
    rng = np.random.default_rng(seed)
    harmonics = range(2, 6)
    amps = [rng.uniform(0.01, 0.04) / k for k in harmonics]
    phases = [rng.uniform(0.0, 2 * math.pi) for _ in harmonics]
    n = int(math.ceil(2 * math.pi * radius / _DENSE_SPACING))
    phi = np.linspace(0.0, 2 * math.pi, n, endpoint=False)
    rho = radius * (1.0 + sum(a * np.cos(k * phi + p)
                              for k, a, p in zip(harmonics, amps, phases)))
    x = rho * np.cos(phi - math.pi / 2)
    y = radius + rho * np.sin(phi - math.pi / 2)
    return _resample(x, y, True, params, v_ref,
                     f"perturbed_circle_{radius:g}", scale_to_length=target_length)


def _quintic_smoothstep(t: np.ndarray) -> np.ndarray:
    """C2 ramp 0 -> 1 with zero slope and curvature at both ends."""
    t = np.clip(t, 0.0, 1.0)
    return t ** 3 * (10.0 - 15.0 * t + 6.0 * t * t)


def composite_path(
    segments: list[dict],
    params: VehicleParams,
    v_ref: float = 1.0,
    name: str = "composite",
    target_length: float | None = None,
) -> ReferencePath:
    """Chain segments head-to-tail: each starts at the previous segment's
    end pose. Supported kinds: straight {length}, lane_change {length,
    offset}, half_circle {radius, direction}, sinusoid {length, amplitude}.

    The sinusoid is one full period windowed by sin^2 so it joins the
    neighbouring segments without heading kinks.
    """
    pose = (0.0, 0.0, 0.0)  # x, y, heading of the running endpoint
    xs: list[np.ndarray] = []
    ys: list[np.ndarray] = []

    def _append_local(u: np.ndarray, w: np.ndarray) -> None:
        # place a local-frame curve (u along heading, w to the left) at pose
        nonlocal pose
        x0, y0, th = pose
        c, s = math.cos(th), math.sin(th)
        gx = x0 + c * u - s * w
        gy = y0 + s * u + c * w
        xs.append(gx)
        ys.append(gy)
        # endpoint heading from the final dense segment
        hx, hy = gx[-1] - gx[-2], gy[-1] - gy[-2]
        pose = (float(gx[-1]), float(gy[-1]), math.atan2(hy, hx))

    for seg in segments:
        kind = seg.get("kind")
        if kind == "straight":
            length = float(seg["length"])
            n = max(int(math.ceil(length / _DENSE_SPACING)) + 1, 2)
            u = np.linspace(0.0, length, n)
            _append_local(u, np.zeros_like(u))
        elif kind == "lane_change":
            length = float(seg["length"])
            offset = float(seg["offset"])
            n = max(int(math.ceil(length / _DENSE_SPACING)) + 1, 2)
            u = np.linspace(0.0, length, n)
            _append_local(u, offset * _quintic_smoothstep(u / length))
        elif kind == "half_circle":
            radius = float(seg["radius"])
            sign = 1.0 if seg.get("direction", "ccw") == "ccw" else -1.0
            n = max(int(math.ceil(math.pi * radius / _DENSE_SPACING)) + 1, 2)
            a = np.linspace(0.0, math.pi, n)
            _append_local(radius * np.sin(a), sign * radius * (1.0 - np.cos(a)))
        elif kind == "sinusoid":
            length = float(seg["length"])
            amplitude = float(seg["amplitude"])
            n = max(int(math.ceil(length / _DENSE_SPACING)) + 1, 2)
            t = np.linspace(0.0, 1.0, n)
            w = amplitude * np.sin(2 * math.pi * t) * np.sin(math.pi * t) ** 2
            _append_local(length * t, w)
        else:
            raise ValueError(f"unknown composite segment kind {kind!r}")

    if not xs:
        raise ValueError("composite path needs at least one segment")
    x = np.concatenate(xs)
    y = np.concatenate(ys)
    return _resample(x, y, False, params, v_ref, name, scale_to_length=target_length)


def _stadium_path(params: VehicleParams, v_ref: float, target_length: float) -> ReferencePath:
    """Rounded-rectangle course: two long straights joined by a circular arc
    on one short edge and a radially sine-modulated turn on the other."""
    straight, half_width, amp = 70.0, 12.0, 4.0
    n_s = int(straight / _DENSE_SPACING)
    n_a = int(math.pi * half_width / _DENSE_SPACING)
    # bottom straight, left to right
    xb = np.linspace(0.0, straight, n_s, endpoint=False)
    yb = np.zeros_like(xb)
    # right edge: semicircle, tangent to both straights
    a = np.linspace(-math.pi / 2, math.pi / 2, n_a, endpoint=False)
    xr = straight + half_width * np.cos(a)
    yr = half_width + half_width * np.sin(a)
    # top straight, right to left
    xt = np.linspace(straight, 0.0, n_s, endpoint=False)
    yt = np.full_like(xt, 2 * half_width)
    # left edge: 180-degree turn whose radius carries a sine modulation with
    # zero value and slope at both junctions (keeps tangent continuity)
    u = np.linspace(0.0, math.pi, n_a, endpoint=False)
    rho = half_width + amp * np.sin(2 * u) * np.sin(u)
    xl = -rho * np.sin(u)  # from top (u=0) down to bottom, bulging outward
    yl = half_width + rho * np.cos(u)
    x = np.concatenate([xb, xr, xt, xl])
    y = np.concatenate([yb, yr, yt, yl])
    return _resample(x, y, True, params, v_ref, "benchmark_3",
                     scale_to_length=target_length)


def benchmark_path(index: int, params: VehicleParams, v_ref: float = 1.0) -> ReferencePath:
    """Deterministic reconstructions of the three benchmark courses.

    Only total lengths and qualitative shapes of the originals are known;
    these are documented stand-ins with exact lengths 63.5 m, 49.5 m and
    212.9 m.
    """
    if index == 1:
        path = perturbed_circle_path(10.0, seed=1, params=params, v_ref=v_ref,
                                     target_length=63.5)
        path.name = "benchmark_1"
        return path
    if index == 2:
        segments = [
            {"kind": "straight", "length": 1.5},
            {"kind": "lane_change", "length": 8.0, "offset": 3.5},
            {"kind": "straight", "length": 3.0},
            {"kind": "lane_change", "length": 8.0, "offset": -3.5},
            {"kind": "straight", "length": 1.5},
            {"kind": "half_circle", "radius": 5.0, "direction": "ccw"},
            {"kind": "sinusoid", "length": 16.0, "amplitude": 2.0},
        ]
        return composite_path(segments, params, v_ref, name="benchmark_2",
                              target_length=49.5)
    if index == 3:
        return _stadium_path(params, v_ref, target_length=212.9)
    raise ValueError(f"benchmark path index must be 1, 2 or 3, got {index}")


def build_path(descriptor: dict, params: VehicleParams) -> ReferencePath:
    """Build a path from a descriptor mapping.

    Kinds: circle {radius, direction}, line {length}, composite {segments},
    perturbed_circle {radius, seed, [target_length]}, benchmark {index}.
    """
    if not isinstance(descriptor, dict) or "kind" not in descriptor:
        raise ValueError(f"malformed path descriptor: {descriptor!r}")
    kind = descriptor["kind"]
    v_ref = float(descriptor.get("v_ref", 1.0))
    try:
        if kind == "circle":
            return circle_path(float(descriptor["radius"]), descriptor["direction"],
                               params, v_ref)
        if kind == "line":
            return line_path(float(descriptor["length"]), params, v_ref)
        if kind == "composite":
            return composite_path(descriptor["segments"], params, v_ref,
                                  target_length=descriptor.get("target_length"))
        if kind == "perturbed_circle":
            return perturbed_circle_path(
                float(descriptor["radius"]), int(descriptor["seed"]), params, v_ref,
                target_length=descriptor.get("target_length"))
        if kind == "benchmark":
            return benchmark_path(int(descriptor["index"]), params, v_ref)
    except KeyError as exc:
        raise ValueError(f"path descriptor missing key {exc} for kind {kind!r}") from exc
    raise ValueError(f"unknown path kind {kind!r}")


# ---------------------------------------------------------------------------
# CSV import/export: header s,x,y,theta,v,kappa


def save_path_csv(path: ReferencePath, filename: str) -> None:
    with open(filename, "w", encoding="utf-8") as fh:
        fh.write("s,x,y,theta,v,kappa\n")
        for i in range(len(path)):
            fh.write(f"{path.s[i]:.6f},{path.x[i]:.6f},{path.y[i]:.6f},"
                     f"{path.theta[i]:.6f},{path.v[i]:.6f},{path.kappa[i]:.6f}\n")


def load_path_csv(filename: str, params: VehicleParams, closed: bool = False,
                  name: str | None = None) -> ReferencePath:
    data = np.loadtxt(filename, delimiter=",", skiprows=1)
    if data.ndim != 2 or data.shape[1] != 6:
        raise ValueError(f"{filename}: expected 6 columns s,x,y,theta,v,kappa")
    return ReferencePath(data[:, 1], data[:, 2], data[:, 3], data[:, 4], data[:, 5],
                         closed, params, name or filename)
