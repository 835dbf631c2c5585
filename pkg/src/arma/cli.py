"""Command-line entry point: train / eval / gradcheck / rollout.

Exit codes: 0 success, 2 config error, 3 checkpoint error, 4 simulation
divergence, 1 anything else. The seed comes from --seed, else the ARMA_SEED
environment variable, else the config file.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import agents as agents_mod
from . import env as env_mod
from . import evaluation, nn, train
from .config import RunConfig, parse_config
from .errors import CheckpointError, ConfigError, SimulationDivergedError

EXIT_CONFIG = 2
EXIT_CHECKPOINT = 3
EXIT_DIVERGENCE = 4

GRADCHECK_THRESHOLD = 1e-3
GRADCHECK_SEEDS = (0, 1, 2)
GRADCHECK_SAMPLES = 40


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="arma",
                                description="planar biped adaptation pipeline")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="run one training phase")
    t.add_argument("--phase", required=True, choices=["1", "2", "3", "robust"])
    t.add_argument("--config", default=None)
    t.add_argument("--seed", type=int, default=None)
    t.add_argument("--out", required=True, help="run directory")
    t.add_argument("--resume", action="store_true")
    t.add_argument("--workers", type=int, default=None)
    t.add_argument("--set", dest="overrides", action="append", default=[],
                   metavar="SECTION.KEY=VALUE")
    t.add_argument("--paper-scale", action="store_true",
                   help="shorthand for --set run.profile=paper-scale")

    e = sub.add_parser("eval", help="benchmark controller variants")
    e.add_argument("--modes", default="priv,rma,arma,static,robust")
    e.add_argument("--ckpt-dir", required=True)
    e.add_argument("--csv", required=True)
    e.add_argument("--thorough", action="store_true")
    e.add_argument("--config", default=None)
    e.add_argument("--seed", type=int, default=None)
    e.add_argument("--workers", type=int, default=None)
    e.add_argument("--set", dest="overrides", action="append", default=[])

    g = sub.add_parser("gradcheck", help="finite-difference gradient audit")
    g.add_argument("--seed", type=int, default=None)

    r = sub.add_parser("rollout", help="dump trajectory CSVs")
    r.add_argument("--mode", required=True, choices=list(evaluation.EVAL_MODES))
    r.add_argument("--episodes", type=int, default=1)
    r.add_argument("--dump-dir", required=True)
    r.add_argument("--ckpt-dir", required=True)
    r.add_argument("--config", default=None)
    r.add_argument("--seed", type=int, default=None)
    r.add_argument("--workers", type=int, default=None)
    r.add_argument("--set", dest="overrides", action="append", default=[])
    return p


def resolve_config(args) -> RunConfig:
    overrides = list(getattr(args, "overrides", []))
    if getattr(args, "paper_scale", False):
        overrides.append("run.profile=paper-scale")
    seed = getattr(args, "seed", None)
    if seed is None and os.environ.get("ARMA_SEED"):
        try:
            seed = int(os.environ["ARMA_SEED"])
        except ValueError as exc:
            raise ConfigError(f"ARMA_SEED must be an integer: {exc}") from exc
    if seed is not None:
        overrides.append(f"run.seed={seed}")
    workers = getattr(args, "workers", None)
    if workers is not None:
        overrides.append(f"run.workers={workers}")
    return parse_config(getattr(args, "config", None), overrides)


def cmd_train(args) -> int:
    cfg = resolve_config(args)
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "config.txt"), "w") as fh:
        fh.write(f"# config={cfg.hash()} seed={cfg.run.seed}\n")
        fh.write(cfg.to_text())
    fns = {"1": train.phase1, "2": train.phase2, "3": train.phase3,
           "robust": train.train_robust_baseline}
    path = fns[args.phase](cfg, args.out, cfg.run.seed, resume=args.resume)
    print(f"phase {args.phase} complete: {path}")
    return 0


def cmd_eval(args) -> int:
    cfg = resolve_config(args)
    modes = [m.strip() for m in args.modes.split(",") if m.strip()]
    for m in modes:
        if m not in evaluation.EVAL_MODES:
            raise ConfigError(f"unknown eval mode {m!r}; choose from "
                              f"{','.join(evaluation.EVAL_MODES)}")
    base_seed = cfg.run.seed + 1000
    reports = evaluation.compare(cfg, args.ckpt_dir, modes, args.csv,
                                 thorough=args.thorough, base_seed=base_seed)
    print(evaluation.format_table(reports))
    print(f"wrote {args.csv}")
    return 0


def gradcheck_architectures(seed: int):
    """The policy, encoder, critic, and conv-stack nets at float64."""
    rng = np.random.default_rng(seed)
    nets = []
    pi = nn.Mlp(nn.MlpSpec(agents_mod.OBS_DIM + 8, [128, 128], 6), rng, "pi",
                dtype=np.float64)
    nets.append(("policy", pi, rng.standard_normal((2, agents_mod.OBS_DIM + 8))))
    mu = nn.Mlp(nn.MlpSpec(14, [256], 8), rng, "mu", dtype=np.float64)
    nets.append(("encoder", mu, rng.standard_normal((2, 14))))
    critic = nn.Mlp(nn.MlpSpec(agents_mod.OBS_DIM + 14, [128, 128], 1),
                    rng, "critic", dtype=np.float64)
    nets.append(("critic", critic, rng.standard_normal((2, agents_mod.OBS_DIM + 14))))
    phi = nn.Conv1dNet(nn.Conv1dSpec(22, agents_mod.CONV_LAYERS), 70, 256, 8,
                       rng, "phi", dtype=np.float64)
    nets.append(("conv-estimator", phi, rng.standard_normal((2, 70, 22))))
    return nets


def cmd_gradcheck(args) -> int:
    seeds = GRADCHECK_SEEDS if args.seed is None else (args.seed,)
    worst = 0.0
    for seed in seeds:
        for name, net, x in gradcheck_architectures(seed):
            err = nn.grad_check(net, x, seed, samples=GRADCHECK_SAMPLES)
            worst = max(worst, err)
            print(f"seed {seed} {name:15s} max rel err {err:.3e}")
    print(f"max relative error: {worst:.3e} "
          f"({'OK' if worst < GRADCHECK_THRESHOLD else 'FAIL'})")
    return 0 if worst < GRADCHECK_THRESHOLD else 1


def cmd_rollout(args) -> int:
    cfg = resolve_config(args)
    os.makedirs(args.dump_dir, exist_ok=True)
    agent_set = evaluation.load_mode(args.ckpt_dir, cfg, args.mode)
    steps = int(round(cfg.eval.timeout_seconds * 30.0))
    n = args.episodes
    runner = train.RolloutRunner(cfg, agent_set, cfg.run.seed + 500,
                                 evaluation.runner_mode(args.mode),
                                 n=n, episode_steps=steps + 1)
    runner.reward_cfg = env_mod.RewardConfig()
    rows = [[] for _ in range(n)]
    alive = np.ones(n, dtype=bool)
    e = runner.env
    for t in range(steps):
        obs = runner.observe()
        z = runner.latent()
        action, _ = agents_mod.act(
            agent_set, obs, z if runner.mode != "none" else None, mode="mean")
        r, done, info = runner.step_env(action)
        for i in range(n):
            if not alive[i]:
                continue
            grf = info["grf_mean"][i].reshape(2, 2)
            row = ([t / 30.0, e.q[i, 0], e.q[i, 1], e.q[i, 2]]
                   + list(e.q[i, 3:9]) + list(e.qd[i, 3:9])
                   + list(info["u_mean"][i])
                   + [float(np.hypot(*grf[0])), float(np.hypot(*grf[1]))]
                   + [float(r[i])] + list(info["terms"][i])
                   + [float(done[i])])
            rows[i].append(row)
        alive &= ~(info["fallen"] | info["diverged"])
        runner._after_step(done)
    for i in range(n):
        path = os.path.join(args.dump_dir, f"episode_{i:03d}.csv")
        env_mod.write_trajectory_csv(path, rows[i], cfg.hash(), cfg.run.seed)
        print(f"wrote {path} ({len(rows[i])} steps)")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {"train": cmd_train, "eval": cmd_eval,
                "gradcheck": cmd_gradcheck, "rollout": cmd_rollout}
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CheckpointError as exc:
        print(f"checkpoint error: {exc}", file=sys.stderr)
        return EXIT_CHECKPOINT
    except SimulationDivergedError as exc:
        print(f"simulation diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE


if __name__ == "__main__":
    sys.exit(main())
