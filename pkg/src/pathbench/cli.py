"""Command line entry point wiring all workbench workflows.

Subcommands: collect-expert, train-nn, fit-pid, rank, benchmark, micro-sim,
teleop. Every output artifact embeds the tool version, the seed, and the
hash of the resolved vehicle configuration, so identical invocations
produce identical files. On failure the process exits nonzero with a
single-line `error: ...` message and removes partial outputs.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import __version__
from .benchmark import export_results, run_benchmark
from .controllers import fit_pid
from .datasets import generate_expert_dataset, load_dataset, save_dataset, to_matrices
from .dynamics import VehicleParams, alpha_hold
from .loop import DEFAULT_LOOKAHEAD, PolicySpec
from .mlp import TrainConfig, init_model, save_model, train
from .ranking import Perturbation, rank_policies, run_micro_sim

__all__ = ["main"]


class _CliError(Exception):
    pass


def _artifact_meta(params: VehicleParams, seed: int) -> dict:
    return {"tool_version": __version__, "seed": seed, "config_hash": params.digest()}


class _OutputTracker:
    """Remembers files written by a command so failures can clean up."""

    def __init__(self) -> None:
        self.paths: list[str] = []

    def register(self, path: str) -> str:
        self.paths.append(path)
        return path

    def discard_all(self) -> None:
        for path in self.paths:
            try:
                os.remove(path)
            except OSError:
                pass


def _load_params(args) -> VehicleParams:
    if getattr(args, "config", None):
        return VehicleParams.from_file(args.config)
    return VehicleParams()


def _parse_policies(text: str, lookahead: float) -> list[PolicySpec]:
    specs = [PolicySpec.parse(part.strip()) for part in text.split(",") if part.strip()]
    for spec in specs:
        spec.lookahead = lookahead
    if not specs:
        raise _CliError("no policies given")
    return specs


def _write_json(path: str, doc, tracker: _OutputTracker) -> None:
    tracker.register(path)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, indent=1)
        fh.write("\n")


def _cmd_collect_expert(args, tracker: _OutputTracker) -> None:
    params = _load_params(args)
    dataset = generate_expert_dataset(params, seed=args.seed,
                                      duration_per_path=args.duration,
                                      excitation=args.excitation)
    dataset.metadata.update(_artifact_meta(params, args.seed))
    tracker.register(args.out)
    tracker.register(args.out + ".meta.json")
    save_dataset(dataset, args.out)
    print(f"wrote {len(dataset)} samples to {args.out}")


#: minimum and comfortable dataset sizes for imitation training; small
#: human-driver recordings in particular tend to be too thin to learn from
MIN_TRAIN_SAMPLES = 1000
RECOMMENDED_TRAIN_SAMPLES = 5000


def _cmd_train_nn(args, tracker: _OutputTracker) -> None:
    params = _load_params(args)
    dataset = load_dataset(args.data)
    if len(dataset) < MIN_TRAIN_SAMPLES:
        raise ValueError(
            f"dataset has {len(dataset)} samples; at least {MIN_TRAIN_SAMPLES} "
            f"are required to train")
    if len(dataset) < RECOMMENDED_TRAIN_SAMPLES:
        print(f"warning: dataset has {len(dataset)} samples; "
              f"{RECOMMENDED_TRAIN_SAMPLES}+ recommended", file=sys.stderr)
    E, U = to_matrices(dataset)
    model, report = train(init_model(args.seed), (E, U),
                          TrainConfig(lr=args.lr, epochs=args.epochs,
                                      batch=args.batch, seed=args.seed,
                                      val_split=args.val_split))
    tracker.register(args.out)
    save_model(model, args.out)
    report_doc = {
        **_artifact_meta(params, args.seed),
        "epochs": report.epochs,
        "final_train_mse": report.final_train_mse,
        "final_val_mse": report.final_val_mse,
        "loss_history": report.loss_history,
        "data": args.data,
    }
    _write_json(args.out + ".train.json", report_doc, tracker)
    print(f"trained model -> {args.out} (val MSE {report.final_val_mse:.3e})")


def _cmd_fit_pid(args, tracker: _OutputTracker) -> None:
    params = _load_params(args)
    dataset = load_dataset(args.data)
    E, U = to_matrices(dataset)
    # the controller adds the throttle feedforward back at run time
    U_fb = U.copy()
    U_fb[0] -= alpha_hold(1.0, params)
    gains = fit_pid(E, U_fb)
    tracker.register(args.out)
    gains.to_json(args.out)
    residual = float(np.linalg.norm(gains.K @ E - U_fb) ** 2)
    _write_json(args.out + ".fit.json",
                {**_artifact_meta(params, args.seed), "residual": residual,
                 "n_samples": E.shape[1], "data": args.data}, tracker)
    print(f"fit gains -> {args.out} (residual {residual:.6e})")


def _cmd_rank(args, tracker: _OutputTracker) -> None:
    params = _load_params(args)
    specs = _parse_policies(args.policies, args.lookahead)
    report = rank_policies(specs, n=args.n, seed=args.seed, cap=args.cap,
                           params=params, throttle_mode=args.throttle_mode,
                           workers=args.workers)
    os.makedirs(args.out, exist_ok=True)
    json_path = tracker.register(os.path.join(args.out, "rank_report.json"))
    with open(json_path, "w", encoding="utf-8") as fh:
        doc = json.loads(report.to_json())
        doc.update(_artifact_meta(params, args.seed))
        json.dump(doc, fh, sort_keys=True, indent=1)
        fh.write("\n")
    table = report.render_table()
    table_path = tracker.register(os.path.join(args.out, "rank_table.txt"))
    with open(table_path, "w", encoding="utf-8") as fh:
        fh.write(table)
    print(table, end="")


def _cmd_benchmark(args, tracker: _OutputTracker) -> None:
    params = _load_params(args)
    specs = _parse_policies(args.policies, args.lookahead)
    indices = [int(tok) for tok in args.paths.split(",") if tok.strip()]
    results = run_benchmark(specs, indices, repeats=args.repeats, seed=args.seed,
                            params=params, throttle_mode=args.throttle_mode,
                            workers=args.workers)
    for path in export_results(results, args.out):
        tracker.register(path)
    for policy in results.policies:
        for idx in indices:
            st = results.aggregate[(policy, idx)]
            print(f"{policy} path {idx}: lateral {st.lateral_mean:.4f} +- {st.lateral_std:.4f} m, "
                  f"heading {st.heading_mean:.4f} +- {st.heading_std:.4f} rad")


def _cmd_micro_sim(args, tracker: _OutputTracker) -> None:
    params = _load_params(args)
    specs = _parse_policies(args.policy, args.lookahead)
    if len(specs) != 1:
        raise _CliError("micro-sim takes exactly one policy")
    pert = Perturbation(e_offset=args.e, phi=args.phi)
    result = run_micro_sim(specs[0].build(params), pert, cap=args.cap, params=params,
                           throttle_mode=args.throttle_mode)
    doc = {
        **_artifact_meta(params, args.seed),
        "policy": specs[0].label,
        "perturbation": {"e": pert.e_offset, "phi": pert.phi},
        "settling_time_s": result.settling_time,
        "timeout": result.timeout,
        "diverged": result.diverged,
        "cap_s": result.cap,
    }
    if args.out:
        _write_json(args.out, doc, tracker)
    print(json.dumps(doc, sort_keys=True))


def _cmd_teleop(args, tracker: _OutputTracker) -> None:
    from . import teleop

    params = _load_params(args)
    teleop.serve_forever(port=args.port, data_dir=args.data_dir, params=params,
                         ui_dir=args.ui_dir, lookahead=args.lookahead)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pathbench",
        description="Path-following control workbench: data collection, "
                    "controller fitting, ranking, benchmarking, teleop.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_default=None):
        p.add_argument("--config", help="vehicle parameter YAML/JSON file")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--lookahead", type=float, default=DEFAULT_LOOKAHEAD)
        p.add_argument("--throttle-mode", choices=["shared", "policy"], default="shared")
        if out_default is not None:
            p.add_argument("--out", default=out_default)

    p = sub.add_parser("collect-expert", help="record the MPC expert on the canonical trajectories")
    common(p, out_default="expert_dataset.csv")
    p.add_argument("--duration", type=float, default=120.0,
                   help="seconds recorded per trajectory")
    p.add_argument("--excitation", choices=["bursts", "gentle"], default="bursts")
    p.set_defaults(func=_cmd_collect_expert)

    p = sub.add_parser("train-nn", help="train the imitation network on a dataset CSV")
    common(p, out_default="model.json")
    p.add_argument("--data", required=True)
    p.add_argument("--epochs", type=int, default=500)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--batch", type=int, default=64)
    p.add_argument("--val-split", type=float, default=0.1)
    p.set_defaults(func=_cmd_train_nn)

    p = sub.add_parser("fit-pid", help="least-squares feedback gains from a dataset CSV")
    common(p, out_default="gains.json")
    p.add_argument("--data", required=True)
    p.set_defaults(func=_cmd_fit_pid)

    p = sub.add_parser("rank", help="settling-time ranking over random micro-simulations")
    common(p, out_default="rank_out")
    p.add_argument("--policies", required=True,
                   help="comma list: mpc, nn:<model.json>, pid:<gains.json>, zero; "
                        "optional label=spec")
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--cap", type=float, default=30.0)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=_cmd_rank)

    p = sub.add_parser("benchmark", help="closed-loop runs on the reconstructed courses")
    common(p, out_default="benchmark_out")
    p.add_argument("--policies", required=True)
    p.add_argument("--paths", default="1,2,3")
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=_cmd_benchmark)

    p = sub.add_parser("micro-sim", help="run one micro-simulation (debugging)")
    common(p)
    p.add_argument("--policy", required=True)
    p.add_argument("--e", type=float, required=True,
                   help="signed lateral offset of the vehicle from the line [m]")
    p.add_argument("--phi", type=float, required=True, help="heading offset [rad]")
    p.add_argument("--cap", type=float, default=30.0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_micro_sim)

    p = sub.add_parser("teleop", help="run the human-in-the-loop WebSocket service")
    common(p)
    p.add_argument("--port", type=int, default=8700)
    p.add_argument("--data-dir", default="teleop_data")
    p.add_argument("--ui-dir", default=None, help="serve static UI files from this directory")
    p.set_defaults(func=_cmd_teleop)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    tracker = _OutputTracker()
    try:
        args.func(args, tracker)
    except KeyboardInterrupt:
        return 130
    except Exception as exc:  # single-line, machine-parsable failure
        tracker.discard_all()
        message = str(exc).replace("\n", " ")
        print(f"error: {type(exc).__name__}: {message}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
