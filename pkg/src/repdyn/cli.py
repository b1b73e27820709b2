"""Command-line front end: ``repdyn {generate,simulate,spectral,verify}``.

All subcommands read one JSON config (``--config``); ``--seed``,
``--output-dir`` and ``--checks`` override the matching config keys.
Example config::

    {
      "instance": {"chain": {"n": 8, "beta": 0.4, "seed": 7}, "gamma": 0.9},
      "reward": {"eig_indices": [1, 3]},
      "observation": {"kind": "gaussian", "seed": 0},
      "k": 3,
      "flow": {"loss": "lat", "step_size": 0.01, "max_steps": 20000},
      "seeds": [0, 1],
      "output_dir": "out"
    }

``instance`` is one of ``{"chain": ChainRecipe}``,
``{"factored": {"foreground": ..., "background": ...}}`` where each factor is
a chain recipe, an eigenvalue list (``{"eigenvalues": [...], "seed": 0}``) or
a path, or ``{"path": "mdp.json"}``. Without an ``instance`` key, simulate
and spectral read ``<output_dir>/mdp.json``.

Exit codes: 0 success, 1 failed check, 2 usage, IO or validation error.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import dynamics as dyn
from . import verifier
from .errors import RepDynError
from .generators import ChainRecipe, RewardRecipe, make_chain_with_spectrum, make_low_rank_reward, make_observation
from .generators import MIN_GAP, make_positive_chain
from .mdp import (
    FactoredSpec,
    MarkovProcess,
    ObservationMap,
    kron_compose,
    load_observation,
    load_process,
    save_observation,
    save_process,
)
from .spectral import decompose, summary_to_dict

COMMANDS = ("generate", "simulate", "spectral", "verify")
_FLOW_KEYS = ("loss", "two_timescale", "step_size", "rate_ratio", "max_steps", "stationarity_tol", "record_every", "backtrack")


class ConfigError(RepDynError, ValueError):
    pass


def _require(d: dict, key: str, where: str):
    if key not in d:
        raise ConfigError(f"{where}: missing key {key!r}")
    return d[key]


def _factor(spec, gamma: float, base: Path) -> MarkovProcess:
    if isinstance(spec, str):
        return load_process(base / spec)
    if "path" in spec:
        return load_process(base / spec["path"])
    if "eigenvalues" in spec:
        return make_chain_with_spectrum(spec["eigenvalues"], seed=int(spec.get("seed", 0)), gamma=gamma)
    recipe = dict(spec.get("chain", spec))
    min_gap = float(recipe.pop("min_gap", MIN_GAP))
    proc = make_positive_chain(ChainRecipe(**recipe), gamma=gamma, min_gap=min_gap)
    if "reward" in spec:
        proc = proc.with_reward(np.asarray(spec["reward"], dtype=float))
    return proc


def build_instance(cfg: dict, base: Path, output_dir: Path):
    """Return ``(proc, factors)``; ``factors`` is ``(M, N)`` for factored instances, else ``None``."""
    inst = cfg.get("instance")
    if inst is None:
        return load_process(output_dir / "mdp.json"), None
    if not isinstance(inst, dict):
        raise ConfigError("instance must be an object")
    gamma = float(inst.get("gamma", 0.9))
    factors = None
    if "path" in inst:
        proc = load_process(base / inst["path"])
    elif "chain" in inst:
        proc = _factor({"chain": inst["chain"]}, gamma, base)
    elif "factored" in inst:
        f = inst["factored"]
        M = _factor(_require(f, "foreground", "factored"), gamma, base)
        N = _factor(_require(f, "background", "factored"), gamma, base)
        if "foreground_reward" in f:
            M = M.with_reward(np.asarray(f["foreground_reward"], dtype=float))
        zeroed = bool(f.get("background_reward_zeroed", True))
        factors = (M, N)
        proc = kron_compose(FactoredSpec(M, N, zeroed))
    else:
        raise ConfigError("instance needs one of 'path', 'chain', 'factored'")
    if "reward" in cfg:
        r = cfg["reward"]
        proc = make_low_rank_reward(proc, RewardRecipe(tuple(_require(r, "eig_indices", "reward")), tuple(r.get("coefficients", ()))))
    return proc, factors


def build_observation(cfg: dict, n: int, base: Path):
    spec = cfg.get("observation")
    if spec is None:
        return None
    if "path" in spec:
        return load_observation(base / spec["path"])
    if "O" in spec:
        return ObservationMap(np.asarray(spec["O"], dtype=float).reshape(n, n))
    return make_observation(
        n,
        kind=spec.get("kind", "gaussian"),
        bernoulli_p=float(spec.get("bernoulli_p", 0.2)),
        max_condition=float(spec.get("max_condition", 1e6)),
        seed=int(spec.get("seed", 0)),
    )


def build_flow(cfg: dict, obs) -> dyn.FlowConfig:
    flow = dict(cfg.get("flow", {}))
    unknown = set(flow) - set(_FLOW_KEYS) - {"use_observation"}
    if unknown:
        raise ConfigError(f"unknown flow keys {sorted(unknown)}")
    use_obs = flow.pop("use_observation", obs is not None)
    return dyn.FlowConfig(observation=obs if use_obs else None, **flow)


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def cmd_generate(cfg, base, out) -> int:
    if "instance" not in cfg:
        raise ConfigError("generate needs an 'instance'")
    proc, _ = build_instance(cfg, base, out)
    out.mkdir(parents=True, exist_ok=True)
    save_process(proc, out / "mdp.json")
    obs = build_observation(cfg, proc.n, base)
    if obs is not None:
        save_observation(obs, out / "obs.json")
    print(f"wrote {out / 'mdp.json'} (n={proc.n})" + (f" and {out / 'obs.json'}" if obs is not None else ""))
    return 0


def cmd_simulate(cfg, base, out) -> int:
    proc, _ = build_instance(cfg, base, out)
    obs = build_observation(cfg, proc.n, base)
    flow = build_flow(cfg, obs)
    k = int(_require(cfg, "k", "config"))
    print("seed, final_loss, final_dist_top_eig, final_dist_top_sv, final_value_error")
    for seed in cfg["seeds"]:
        traj, rep = dyn.simulate(proc, dyn.init_representation(proc.n, k, seed), flow)
        _write(out / f"traj_{seed}.csv", traj.to_csv())
        _write(out / f"final_rep_{seed}.json", json.dumps(rep.to_dict()) + "\n")
        f = traj.final
        print(f"{seed}, {f.loss:.6g}, {f.dist_top_eig:.6g}, {f.dist_top_sv:.6g}, {f.value_error:.6g}")
    return 0


def cmd_spectral(cfg, base, out) -> int:
    proc, _ = build_instance(cfg, base, out)
    _write(out / "spectral.json", json.dumps(summary_to_dict(decompose(proc.P))) + "\n")
    print(f"wrote {out / 'spectral.json'}")
    return 0


def cmd_verify(cfg, base, out) -> int:
    checks = cfg.get("checks")
    reports = []
    if "instance" in cfg:
        proc, factors = build_instance(cfg, base, out)
        obs = build_observation(cfg, proc.n, base)
        k = int(_require(cfg, "k", "config"))
    for seed in cfg["seeds"]:
        if "instance" in cfg:
            for name in checks or list(verifier.SUITE):
                batch = verifier.run_on_instance(name, proc, k, obs=obs, factors=factors, seed=seed)
                reports.extend((seed, r) for r in batch)
        else:
            reports.extend((seed, r) for r in verifier.run_suite(checks, seed=seed))
    lines = [json.dumps({"seed": s, **r.to_dict()}, sort_keys=True) for s, r in reports]
    _write(out / "report.jsonl", "".join(line + "\n" for line in lines))
    print(verifier.summary_table([r for _, r in reports]))
    failed = [r for _, r in reports if r.applicable and not r.passed]
    print(f"{len(reports)} reports, {len(failed)} failed, written to {out / 'report.jsonl'}")
    return 1 if failed else 0


HANDLERS = {"generate": cmd_generate, "simulate": cmd_simulate, "spectral": cmd_spectral, "verify": cmd_verify}


def _seed_list(text: str) -> list[int]:
    try:
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"seeds must be comma-separated integers, got {text!r}")


def _check_list(text: str) -> list[str]:
    names = [s.strip() for s in text.split(",") if s.strip()]
    unknown = [c for c in names if c not in verifier.SUITE]
    if unknown:
        raise argparse.ArgumentTypeError(f"unknown checks {unknown}; choose from {','.join(verifier.SUITE)}")
    return names


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="repdyn", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, help="JSON run configuration")
        p.add_argument("--seed", type=_seed_list, help="seed or comma-separated seeds")
        p.add_argument("--output-dir", type=Path, help="directory for written artifacts")
        p.add_argument("--checks", type=_check_list, help="comma-separated verifier checks")
    return parser


def load_config(args) -> tuple[dict, Path]:
    if args.config is None:
        return {}, Path.cwd()
    try:
        cfg = json.loads(args.config.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{args.config}: invalid JSON ({exc})") from exc
    if not isinstance(cfg, dict):
        raise ConfigError(f"{args.config}: config must be a JSON object")
    if cfg.get("command", args.command) != args.command:
        raise ConfigError(f"config is for {cfg['command']!r}, not {args.command!r}")
    return cfg, args.config.parent


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        cfg, base = load_config(args)
        if args.seed is not None:
            cfg["seeds"] = args.seed
        cfg["seeds"] = [int(s) for s in cfg.get("seeds", [0])]
        if args.checks is not None:
            cfg["checks"] = args.checks
        if cfg.get("checks") is not None:
            _check_list(",".join(cfg["checks"]))
        out = args.output_dir or Path(cfg.get("output_dir", "."))
        if not out.is_absolute() and args.output_dir is None:
            out = base / out
        return HANDLERS[args.command](cfg, base, out)
    except (RepDynError, OSError, ValueError, TypeError, KeyError, argparse.ArgumentTypeError) as exc:
        print(f"repdyn {args.command}: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
