"""Closed-loop simulation plumbing shared by data collection, ranking,
benchmarking, and the teleop service.

Controllers run at CONTROL_DT (0.1 s); between control updates the physics
advances in SIM_DT (0.01 s) RK4 steps, a 10:1 ratio that keeps integration
error well below control-loop effects. By default the shared longitudinal
controller supplies the throttle for every policy (one speed controller for
all policies, as in the field setup) and the policy supplies steering;
`throttle_mode="policy"` lets a policy drive its own throttle instead.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .controllers import (
    CONTROL_DT,
    MpcController,
    MpcWeights,
    NnController,
    PidController,
    PidGains,
    ZeroController,
    longitudinal_control,
)
from .dynamics import SIM_DT, ControlCommand, VehicleParams, VehicleState, step
from .mlp import load_model
from .paths import (
    DEFAULT_LOOKAHEAD,
    ErrorState,
    ReferencePath,
    ReferencePoint,
    error_state,
    reference_point,
)

__all__ = [
    "CONTROL_DT",
    "SIM_DT",
    "STEPS_PER_CONTROL",
    "DEFAULT_LOOKAHEAD",
    "PathReference",
    "InfiniteLineReference",
    "PolicySpec",
    "control_step",
]

STEPS_PER_CONTROL = round(CONTROL_DT / SIM_DT)


class PathReference:
    """Lookahead reference provider over a sampled path."""

    def __init__(self, path: ReferencePath, lookahead: float = DEFAULT_LOOKAHEAD):
        self.path = path
        self.lookahead = lookahead

    def __call__(self, q: VehicleState) -> ReferencePoint:
        return reference_point(self.path, q, self.lookahead)


class InfiniteLineReference:
    """Reference along the +x axis with no end: used by micro-simulations."""

    def __init__(self, v_ref: float, alpha_ref: float,
                 lookahead: float = DEFAULT_LOOKAHEAD):
        self.v_ref = v_ref
        self.alpha_ref = alpha_ref
        self.lookahead = lookahead

    def __call__(self, q: VehicleState) -> ReferencePoint:
        return ReferencePoint(x=q.x + self.lookahead, y=0.0, theta=0.0,
                              v=self.v_ref, beta=0.0, alpha=self.alpha_ref)


def control_step(
    q: VehicleState,
    policy,
    ref_provider,
    params: VehicleParams,
    throttle_mode: str = "shared",
    v_target: float = 1.0,
) -> tuple[VehicleState, ReferencePoint, ErrorState, ControlCommand]:
    """One control period: read reference, ask the policy, advance physics.

    Returns the new state plus the reference, error, and applied command of
    the period that was just executed.
    """
    ref = ref_provider(q)
    e = error_state(q, ref)
    u_policy = policy.command(e, ref)
    if throttle_mode == "shared":
        u = ControlCommand(alpha=longitudinal_control(q.v, v_target, params),
                           beta=u_policy.beta)
    elif throttle_mode == "policy":
        u = u_policy
    else:
        raise ValueError(f"unknown throttle mode {throttle_mode!r}")
    for _ in range(STEPS_PER_CONTROL):
        q = step(q, u, params, SIM_DT)
    return q, ref, e, u


@dataclass
class PolicySpec:
    """Buildable description of a policy; safe to ship to worker processes.

    kind: "mpc" | "nn" | "pid" | "zero". File-backed policies carry the
    artifact path; in-memory objects can be passed directly.
    """

    kind: str
    label: str = ""
    model_path: str | None = None
    gains_path: str | None = None
    gains: PidGains | None = None
    model: object | None = None
    weights: MpcWeights | None = None
    lookahead: float = DEFAULT_LOOKAHEAD
    extra: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.kind not in ("mpc", "nn", "pid", "zero"):
            raise ValueError(f"unknown policy kind {self.kind!r}")
        if not self.label:
            self.label = self.kind

    @classmethod
    def parse(cls, text: str) -> "PolicySpec":
        """Parse "kind", "kind:path" or "label=kind:path"."""
        label = ""
        if "=" in text:
            label, text = text.split("=", 1)
        parts = text.split(":", 1)
        kind = parts[0]
        arg = parts[1] if len(parts) > 1 else None
        if kind == "nn":
            if not arg:
                raise ValueError("nn policy needs a model file: nn:<model.json>")
            return cls(kind="nn", label=label or "nn", model_path=arg)
        if kind == "pid":
            if not arg:
                raise ValueError("pid policy needs a gains file: pid:<gains.json>")
            return cls(kind="pid", label=label or "pid", gains_path=arg)
        if kind in ("mpc", "zero"):
            return cls(kind=kind, label=label or kind)
        raise ValueError(f"unknown policy kind {kind!r} in {text!r}")

    def build(self, params: VehicleParams):
        """Fresh controller instance (fresh warm-start state)."""
        if self.kind == "mpc":
            return MpcController(params=params, weights=self.weights or MpcWeights(),
                                 lookahead=self.lookahead)
        if self.kind == "nn":
            model = self.model if self.model is not None else load_model(self.model_path)
            return NnController(model, name=self.label)
        if self.kind == "pid":
            gains = self.gains if self.gains is not None else PidGains.from_json(self.gains_path)
            return PidController(gains)
        if self.kind == "zero":
            return ZeroController()
        raise ValueError(f"unknown policy kind {self.kind!r}")
