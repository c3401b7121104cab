"""Command line entry points: gen-data, train, eval, uq-report, verify."""

from __future__ import annotations

import argparse
import json
import os
import shutil
import sys

from .actor import load_policy, save_policy
from .bnn_critic import load_critic, save_critic
from .envs_data import (BEHAVIOR_POLICIES, generate_dataset, load_dataset,
                        make_env, ood_probe_sets, save_dataset)
from .errors import RvfError
from .harness import TrainConfig, evaluate_policy, train, uncertainty_report
from .oracles import run_verification


def _cmd_gen_data(args) -> int:
    env = make_env(args.env)
    dataset = generate_dataset(env, args.policy, args.episodes, args.seed)
    save_dataset(dataset, args.out)
    returns = dataset.episode_returns()
    print(f"wrote {len(dataset)} transitions ({args.episodes} episodes) to {args.out}")
    print(f"behavior return: mean {returns.mean():.4f}, std {returns.std():.4f}")
    return 0


def _cmd_train(args) -> int:
    config = TrainConfig.load(args.config)
    dataset = load_dataset(args.data)
    os.makedirs(args.out, exist_ok=True)
    # The input config file is copied byte-for-byte.
    shutil.copyfile(args.config, os.path.join(args.out, "config.json"))
    result = train(config, dataset, out_dir=args.out)
    save_policy(os.path.join(args.out, "policy.ckpt"), result.policy,
                {"env": config.env, "seed": config.seed})
    save_critic(os.path.join(args.out, "critic.ckpt"), result.critic,
                config.posterior_samples,
                {"env": config.env, "seed": config.seed,
                 "pooling": config.pooling})
    last = result.metrics[-1]
    print(f"finished {config.gradient_steps} steps; "
          f"final eval return {last.eval_return_mean:.4f} "
          f"(std {last.eval_return_std:.4f})")
    print(f"checkpoints and metrics.csv in {args.out}")
    return 0


def _cmd_eval(args) -> int:
    policy, meta = load_policy(args.policy)
    env = make_env(args.env or meta.get("env"))
    mean, std = evaluate_policy(env, policy, args.episodes, args.seed)
    print(f"return over {args.episodes} episodes: mean {mean:.6f}, std {std:.6f}")
    return 0


def _cmd_uq_report(args) -> int:
    critic, meta = load_critic(args.critic)
    dataset = load_dataset(args.data)
    env = make_env(dataset.meta.get("env"))
    probe_in, probe_ood = ood_probe_sets(dataset, env, n_pairs=args.pairs,
                                         seed=args.seed)
    n = args.samples or int(meta.get("posterior_samples", 10))
    report = uncertainty_report(critic, probe_in, probe_ood, n,
                                seed=args.seed,
                                pooling=meta.get("pooling", "joint"))
    ratio = "" if report["ratio"] is None else repr(report["ratio"])
    if args.out:
        with open(args.out, "w", newline="") as f:
            f.write("in_dist_std,ood_std,ratio\n")
            f.write(f"{report['in_dist_std']!r},{report['ood_std']!r},{ratio}\n")
        print(f"wrote {args.out}")
    print(f"in-dist std {report['in_dist_std']:.6f}  "
          f"ood std {report['ood_std']:.6f}  "
          f"ratio {report['ratio'] if report['ratio'] is not None else 'null'}")
    return 0


def _cmd_verify(args) -> int:
    reports = run_verification(seed=args.seed)
    width = max(len(r.name) for r in reports)
    for r in reports:
        status = "PASS" if r.passed else "FAIL"
        print(f"{r.name:<{width}}  computed={r.computed:<12.6g} "
              f"reference={r.reference:<12.6g} tol={r.tolerance:g} ({r.mode})  {status}")
    if args.json:
        payload = [{"name": r.name, "computed": r.computed,
                    "reference": r.reference, "tolerance": r.tolerance,
                    "mode": r.mode, "passed": r.passed} for r in reports]
        with open(args.json, "w") as f:
            json.dump(payload, f, indent=2)
    failed = [r.name for r in reports if not r.passed]
    if failed:
        print(f"FAILED checks: {', '.join(failed)}", file=sys.stderr)
        return 1
    print(f"all {len(reports)} checks passed")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rvf",
        description="Pessimistic offline RL with randomized value functions")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate an offline dataset")
    p.add_argument("--env", required=True)
    p.add_argument("--policy", required=True, choices=BEHAVIOR_POLICIES)
    p.add_argument("--episodes", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_gen_data)

    p = sub.add_parser("train", help="train on an offline dataset")
    p.add_argument("--config", required=True, help="JSON file mirroring TrainConfig")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="evaluate a policy checkpoint")
    p.add_argument("--policy", required=True)
    p.add_argument("--env", default=None)
    p.add_argument("--episodes", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("uq-report", help="in-dist vs OOD uncertainty report")
    p.add_argument("--critic", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", default=None, help="CSV output path")
    p.add_argument("--pairs", type=int, default=256)
    p.add_argument("--samples", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_uq_report)

    p = sub.add_parser("verify", help="run the full oracle suite")
    p.add_argument("--seed", type=int, default=20240901)
    p.add_argument("--json", default=None, help="machine-readable report path")
    p.set_defaults(func=_cmd_verify)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except RvfError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
