"""Config-driven command line: train, verify, sweep, eval.

Exit codes: 0 success, 1 verification failure, 2 configuration error,
3 runtime invariant violation.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import subprocess
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__, netgraph, verify
from .config import RunConfig, load_config, parse_config
from .errors import (
    BoundViolated,
    ConfigError,
    DimensionMismatch,
    NmarlError,
    ProtocolInvariantError,
)
from .policy import CoupledSoftmaxPolicy
from .trainer import DscpConfig, TrainRecord, evaluate_policy, run_dscp

log = logging.getLogger("nmarl")


def build_identifier() -> str:
    """Best-effort build id: git describe, else the package version."""
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            cwd=Path(__file__).resolve().parent,
            capture_output=True,
            text=True,
            timeout=5,
        )
        if out.returncode == 0 and out.stdout.strip():
            return out.stdout.strip()
    except OSError:
        pass
    return f"nmarl-{__version__}"


def _write_checkpoint(path: Path, theta: np.ndarray, cfg: DscpConfig, run: RunConfig) -> None:
    model = run.build_model()
    payload = {
        "n": int(theta.shape[0]),
        "d": int(theta.shape[1]),
        "n_states": int(model.state_sizes[0]),
        "n_actions": int(model.action_sizes[0]),
        "kappa_p": cfg.kappa_p,
        "mixing": {
            "self_weight": cfg.self_weight,
            "neighbor_weight_total": cfg.neighbor_weight_total,
        },
        "params": theta.tolist(),
    }
    path.write_text(json.dumps(payload))


def _train_one(run: RunConfig, seed: int, out: Path) -> dict:
    cfg = replace(run.dscp, seed=seed)
    model = run.build_model()
    graph = run.graph or model.graph
    started = time.perf_counter()
    theta, record = run_dscp(model, graph, cfg)
    wall_s = time.perf_counter() - started
    csv_path = out / f"metrics_seed{seed}.csv"
    with open(csv_path, "w") as fp:
        record.write_csv(fp, include_wall_time=cfg.record_wall_time)
    _write_checkpoint(out / f"checkpoint_seed{seed}.json", theta, cfg, run)
    final = record.final_eval()
    last = record.rows[-1]
    return {
        "seed": seed,
        "iterations": cfg.iterations,
        "final_J": None if final is None else final.j_est,
        "final_J_se": None if final is None else final.j_se,
        "final_consensus_err": last.consensus_err,
        "wall_s": round(wall_s, 3),
        "metrics_csv": csv_path.name,
    }


def cmd_train(args: argparse.Namespace) -> int:
    run = load_config(args.config, args.set)
    if args.seed is not None:
        run.seeds = [args.seed]
    out = Path(args.out or run.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    results = [_train_one(run, seed, out) for seed in run.seeds]
    summary = {"config": run.raw, "build": build_identifier(), "results": results}
    (out / "summary.json").write_text(json.dumps(summary, indent=1))
    log.info("wrote %s", out / "summary.json")
    return 0


def iterations_to_plateau(record: TrainRecord) -> int | None:
    """First evaluated iteration within noise of the final plateau level."""
    evals = [(r.t, r.j_est, r.j_se) for r in record.rows if r.j_est is not None]
    if len(evals) < 2:
        return None
    tail = evals[-3:]
    plateau = float(np.mean([j for _, j, _ in tail]))
    tol = 2.0 * float(np.sqrt(np.mean([se**2 for _, _, se in tail])))
    for t, j, _ in evals:
        if j >= plateau - tol:
            return t
    return evals[-1][0]


def cmd_sweep(args: argparse.Namespace) -> int:
    run = load_config(args.config, args.set)
    kappas = args.kappa_p
    if any(k < 0 for k in kappas):
        raise ConfigError(f"kappa_p values must be nonnegative, got {kappas}")
    seeds = run.seeds if args.seed is None else [args.seed]
    out = Path(args.out or run.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    aggregate = {}
    for kappa in kappas:
        sub = out / f"kp{kappa}"
        sub.mkdir(exist_ok=True)
        run_k = replace(run, dscp=replace(run.dscp, kappa_p=kappa))
        run_k.dscp.validate()
        per_seed = []
        for seed in seeds:
            res = _train_one(run_k, seed, sub)
            csv_path = sub / res["metrics_csv"]
            del csv_path  # plateau needs the in-memory record; recompute below
            per_seed.append(res)
        finals = [r["final_J"] for r in per_seed if r["final_J"] is not None]
        aggregate[str(kappa)] = {
            "mean_final_J": None if not finals else float(np.mean(finals)),
            "per_seed": per_seed,
        }
    # ordering report over seeds shared by all kappa values
    order = {
        k: aggregate[str(k)]["mean_final_J"]
        for k in kappas
        if aggregate[str(k)]["mean_final_J"] is not None
    }
    payload = {
        "config": run.raw,
        "build": build_identifier(),
        "kappa_p": aggregate,
        "mean_final_J_by_kappa": order,
    }
    (out / "sweep.json").write_text(json.dumps(payload, indent=1))
    log.info("wrote %s", out / "sweep.json")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    if args.episodes < 1:
        raise ConfigError(f"episodes must be positive, got {args.episodes}")
    run = load_config(args.config, args.set)
    try:
        ckpt = json.loads(Path(args.checkpoint).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read checkpoint {args.checkpoint}: {exc}") from exc
    model = run.build_model()
    theta = np.asarray(ckpt["params"], dtype=float)
    expected = (model.n, model.state_sizes[0] * model.action_sizes[0])
    if theta.shape != expected:
        raise DimensionMismatch(
            f"checkpoint parameters have shape {theta.shape}, "
            f"the configured environment needs {expected}"
        )
    pol = CoupledSoftmaxPolicy(
        model.graph,
        model.state_sizes[0],
        model.action_sizes[0],
        replace(run.dscp, kappa_p=int(ckpt.get("kappa_p", run.dscp.kappa_p))).mixing(),
    )
    seed = args.seed if args.seed is not None else run.dscp.seed
    rng = np.random.default_rng(np.random.SeedSequence([seed, 2]))
    j, se = evaluate_policy(
        model, pol, theta, args.episodes, rng,
        method=run.dscp.eval_method, horizon_eps=run.dscp.eval_horizon_eps,
    )
    print(json.dumps({"J": j, "se": se, "episodes": args.episodes}))
    return 0


def cmd_verify(args: argparse.Namespace) -> int:
    report = verify.run_suite(args.level)
    text = json.dumps(report, indent=1)
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        (Path(args.out) / "verify.json").write_text(text)
    print(text)
    return 0 if report["pass"] else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nmarl",
        description="Train and verify coupled softmax policies on networked models.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="JSON run configuration")
    common.add_argument("--seed", type=int, default=None, help="override the seed list")
    common.add_argument("--out", default=None, help="output directory")
    common.add_argument(
        "--set", action="append", default=[], metavar="KEY=VALUE",
        help="config override, dotted path (repeatable)",
    )

    p_train = sub.add_parser("train", parents=[common], help="run training per seed")
    p_train.set_defaults(fn=cmd_train)

    p_sweep = sub.add_parser("sweep", parents=[common], help="train across coupling radii")
    p_sweep.add_argument(
        "--kappa-p", dest="kappa_p", type=int, nargs="+", required=True,
        help="coupling radii to sweep",
    )
    p_sweep.set_defaults(fn=cmd_sweep)

    p_eval = sub.add_parser("eval", parents=[common], help="evaluate a checkpoint")
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--episodes", type=int, required=True)
    p_eval.set_defaults(fn=cmd_eval)

    p_verify = sub.add_parser("verify", help="run the oracle-backed check suite")
    p_verify.add_argument("--level", choices=["quick", "full"], default="quick")
    p_verify.add_argument("--out", default=None)
    p_verify.set_defaults(fn=cmd_verify)
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=os.environ.get("NMARL_LOG", "WARNING").upper())
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (BoundViolated, ProtocolInvariantError) as exc:
        log.error("runtime invariant violated: %s", exc)
        return 3
    except (ConfigError, DimensionMismatch) as exc:
        log.error("configuration error: %s", exc)
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NmarlError as exc:
        log.error("failed: %s", exc)
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
