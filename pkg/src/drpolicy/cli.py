"""Command-line pipeline: simulate -> tune -> train -> evaluate -> oracle-check.

Every command is deterministic given --seed (sub-streams derive from the
command name plus a purpose label) and every JSON report embeds the fully
resolved configuration and a version string.  Exit codes: 0 success,
1 runtime failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import json
import subprocess
import sys
from pathlib import Path

import numpy as np

from . import __version__
from ._seeding import derive_seed, derived_rng
from ._validation import ValidationError
from .data import Dataset, load_dataset, save_dataset
from .kernels import default_kernel_spec
from .nuisance import TuningParams, default_tuning
from .optimizer import OptimizerConfig, block_coordinate_ascent
from .oracle import (
    FiniteMDP,
    dual_worst_case,
    exact_M,
    exact_relative_value,
    primal_worst_case,
    primal_worst_case_lp,
    random_ergodic_mdp,
    random_tabular_policy,
)
from .policy import LogisticPolicy
from .simulate import INIT_NORMAL, INIT_STUDENT_T, SimConfig, evaluate_policy, simulate_training_data
from .tuning import cross_validate_tuning, default_tuning_grid

_INIT_CHOICES = {"normal": INIT_NORMAL, "t2": INIT_STUDENT_T}


def version_string() -> str:
    try:
        rev = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            cwd=Path(__file__).resolve().parent,
            capture_output=True,
            text=True,
            timeout=10,
        )
        suffix = rev.stdout.strip() if rev.returncode == 0 and rev.stdout.strip() else "unknown"
    except OSError:
        suffix = "unknown"
    return f"drpolicy {__version__} ({suffix})"


def _write_json(path, payload: dict) -> None:
    text = json.dumps(payload, sort_keys=True, indent=2)
    with open(path, "w", newline="\n") as fh:
        fh.write(text + "\n")


def _read_config_file(path) -> dict:
    """Line-oriented key=value configuration; '#' starts a comment."""
    out = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValidationError(f"config line {lineno}: expected key=value, got {raw.rstrip()!r}")
            key, value = line.split("=", 1)
            out[key.strip()] = value.strip()
    return out


def _apply_config_defaults(args, parser, mapping: dict) -> None:
    """Config-file values fill any option left at its parser default."""
    if not getattr(args, "config", None):
        return
    values = _read_config_file(args.config)
    for key, value in values.items():
        dest = key.replace("-", "_")
        if dest not in mapping:
            raise ValidationError(f"unknown config key {key!r}")
        if getattr(args, dest) == parser.get_default(dest):
            setattr(args, dest, mapping[dest](value))


def _resolved_config(args, keys) -> dict:
    return {k: getattr(args, k) for k in keys}


def _load_tuning(args, data: Dataset, spec, seed: int) -> tuple[TuningParams, str]:
    choice = args.tuning
    if choice == "default":
        return default_tuning(data.n_transitions), "default"
    if choice == "cv":
        grid = default_tuning_grid(data, c0=args.c0, seed=derive_seed(seed, "train:tuning-grid"))
        params = cross_validate_tuning(
            data, grid, spec, seed=derive_seed(seed, "train:tuning-cv"), c=args.c
        ).params
        return params, "cv"
    obj = json.loads(Path(choice).read_text())
    if "params" in obj:
        obj = obj["params"]
    try:
        params = TuningParams(
            lambda1=float(obj["lambda1"]),
            mu1=float(obj["mu1"]),
            lambda2=float(obj["lambda2"]),
            mu2=float(obj["mu2"]),
        )
    except KeyError as exc:
        raise ValidationError(f"tuning file {choice} misses key {exc}") from None
    return params, choice


# -- commands ---------------------------------------------------------------


def cmd_simulate(args, parser) -> int:
    _apply_config_defaults(
        args, parser,
        {"n": int, "t0": int, "seed": int, "init": str, "out": str, "noise_sd": float},
    )
    if args.init not in _INIT_CHOICES:
        raise ValidationError(f"--init must be one of {sorted(_INIT_CHOICES)}")
    cfg = SimConfig(
        n_episodes=args.n,
        horizon=args.t0,
        init_dist=_INIT_CHOICES[args.init],
        noise_sd=args.noise_sd,
        seed=derive_seed(args.seed, "simulate:training-data"),
    )
    data = simulate_training_data(cfg, policy="uniform")
    save_dataset(data, args.out)
    print(f"wrote {data.n} episodes x {data.t0} steps to {args.out}")
    return 0


def cmd_tune(args, parser) -> int:
    _apply_config_defaults(args, parser, {"data": str, "seed": int, "folds": int, "c": float, "c0": float, "out": str})
    data = load_dataset(args.data)
    spec = default_kernel_spec(data)
    grid = default_tuning_grid(data, c0=args.c0, seed=derive_seed(args.seed, "tune:grid"), k_folds=args.folds)
    selection = cross_validate_tuning(data, grid, spec, seed=derive_seed(args.seed, "tune:cv"), c=args.c)
    payload = {
        "command": "tune",
        "version": version_string(),
        "config": _resolved_config(args, ["data", "seed", "folds", "c", "c0", "out"]),
        "kernel": {
            "bandwidth": spec.bandwidth,
            "ref_state": list(map(float, spec.ref_state)),
            "ref_action": spec.ref_action,
        },
        **selection.to_dict(),
    }
    _write_json(args.out, payload)
    print(f"selected tuning written to {args.out}")
    return 0


def cmd_train(args, parser) -> int:
    _apply_config_defaults(
        args,
        parser,
        {
            "data": str, "c": float, "seed": int, "c0": float, "tuning": str,
            "restarts": int, "max_outer": int, "eps_tol": float, "lbfgs_maxiter": int,
            "threads": int, "out_policy": str, "out_trace": str, "fd_gradients": bool,
        },
    )
    if not 0.0 <= args.c < 1.0:
        raise ValidationError(f"--c must lie in [0, 1), got {args.c}")
    data = load_dataset(args.data)
    spec = default_kernel_spec(data)
    tuning, tuning_source = _load_tuning(args, data, spec, args.seed)
    config = OptimizerConfig(
        eps_tol=args.eps_tol,
        max_outer_iters=args.max_outer,
        n_restarts=args.restarts,
        use_analytic_gradients=not args.fd_gradients,
        seed=derive_seed(args.seed, "train:optimizer"),
        lbfgs_maxiter=args.lbfgs_maxiter,
        threads=args.threads,
    )
    result = block_coordinate_ascent(data, config, tuning, args.c, spec=spec, c0=args.c0)
    policy = LogisticPolicy(theta=result.theta_hat, c0=args.c0)
    Path(args.out_policy).write_text(policy.to_json() + "\n")
    payload = {
        "command": "train",
        "version": version_string(),
        "config": _resolved_config(
            args,
            ["data", "c", "seed", "c0", "tuning", "restarts", "max_outer", "eps_tol",
             "lbfgs_maxiter", "threads", "out_policy", "out_trace", "fd_gradients"],
        ),
        "tuning_source": tuning_source,
        "tuning": {
            "lambda1": tuning.lambda1, "mu1": tuning.mu1,
            "lambda2": tuning.lambda2, "mu2": tuning.mu2,
        },
        "kernel": {
            "bandwidth": spec.bandwidth,
            "ref_state": list(map(float, spec.ref_state)),
            "ref_action": spec.ref_action,
        },
        "result": result.to_dict(),
    }
    _write_json(args.out_trace, payload)
    print(f"objective {result.objective:.6f} at beta {result.beta_hat:.6f}; policy -> {args.out_policy}")
    return 0


def cmd_evaluate(args, parser) -> int:
    _apply_config_defaults(
        args, parser,
        {"policy": str, "episodes": int, "t_min": int, "t_max": int, "init": str,
         "seed": int, "out": str, "noise_sd": float, "state_clip": float},
    )
    if args.init not in _INIT_CHOICES:
        raise ValidationError(f"--init must be one of {sorted(_INIT_CHOICES)}")
    policy = LogisticPolicy.from_json(Path(args.policy).read_text())
    cfg = SimConfig(
        n_episodes=args.episodes,
        horizon=args.t_max,
        init_dist=_INIT_CHOICES[args.init],
        noise_sd=args.noise_sd,
        state_clip=args.state_clip,
        seed=derive_seed(args.seed, "evaluate:rollouts"),
    )
    report = evaluate_policy(policy, cfg, t_range=(args.t_min, args.t_max))
    payload = {
        "command": "evaluate",
        "version": version_string(),
        "config": _resolved_config(
            args,
            ["policy", "episodes", "t_min", "t_max", "init", "seed", "out", "noise_sd", "state_clip"],
        ),
        "t": report.t_values,
        "mean_avg_reward": report.mean_avg_reward,
    }
    _write_json(args.out, payload)
    print(f"evaluation report -> {args.out}")
    return 0


def cmd_oracle_check(args, parser) -> int:
    _apply_config_defaults(args, parser, {"mdp": str, "instances": int, "seed": int, "lp_checks": int, "out": str})
    rng = derived_rng(args.seed, "oracle-check:instances")
    c_grid = [round(0.1 * k, 1) for k in range(10)]
    max_gap = 0.0
    max_eta_gap = 0.0
    max_lp_gap = 0.0
    checked = 0
    if args.mdp:
        try:
            mdps = [FiniteMDP.from_json(Path(args.mdp).read_text())]
        except (KeyError, TypeError, json.JSONDecodeError) as exc:
            raise ValidationError(f"malformed MDP JSON: {exc}") from None
    else:
        mdps = [
            random_ergodic_mdp(rng, int(rng.integers(2, 9)), int(rng.integers(2, 4)))
            for _ in range(args.instances)
        ]
    for i, mdp in enumerate(mdps):
        policy = random_tabular_policy(rng, mdp.n_states, mdp.n_actions)
        for c in c_grid:
            dual, beta_star = dual_worst_case(mdp, policy, c)
            primal = primal_worst_case(mdp, policy, c)
            max_gap = max(max_gap, abs(primal - dual))
            if checked < args.lp_checks:
                max_lp_gap = max(max_lp_gap, abs(primal_worst_case_lp(mdp, policy, c) - primal))
                checked += 1
        beta = float(rng.uniform(mdp.R.min(), mdp.R.max()))
        c = float(rng.uniform(0.0, 0.9))
        eta, _ = exact_relative_value(mdp, policy, beta, c)
        max_eta_gap = max(max_eta_gap, abs(eta - exact_M(mdp, policy, beta, c)))
    payload = {
        "command": "oracle-check",
        "version": version_string(),
        "config": _resolved_config(args, ["mdp", "instances", "seed", "lp_checks", "out"]),
        "n_instances": len(mdps),
        "max_abs_primal_dual_gap": max_gap,
        "max_abs_eta_vs_exact_M": max_eta_gap,
        "max_abs_lp_vs_greedy": max_lp_gap,
        "passed": bool(max_gap <= 1e-8 and max_eta_gap <= 1e-8),
    }
    if args.out:
        _write_json(args.out, payload)
    print(
        f"duality gap {max_gap:.3e}, eta gap {max_eta_gap:.3e}, lp gap {max_lp_gap:.3e}: "
        + ("PASS" if payload["passed"] else "FAIL")
    )
    return 0 if payload["passed"] else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="drpolicy", description=__doc__)
    parser.add_argument("--version", action="version", version=version_string())
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="write a synthetic training dataset CSV")
    p_sim.add_argument("--n", type=int, default=25, help="number of episodes")
    p_sim.add_argument("--t0", type=int, default=24, help="decision points per episode")
    p_sim.add_argument("--seed", type=int, default=0)
    p_sim.add_argument("--init", default="normal", help="initial state distribution: normal or t2")
    p_sim.add_argument("--noise-sd", type=float, default=0.5, dest="noise_sd")
    p_sim.add_argument("--config", default=None, help="key=value config file")
    p_sim.add_argument("--out", required=True, help="output CSV path")
    p_sim.set_defaults(func=cmd_simulate)

    p_tune = sub.add_parser("tune", help="min-max cross-validation of the penalty rates")
    p_tune.add_argument("--data", required=True)
    p_tune.add_argument("--seed", type=int, default=0)
    p_tune.add_argument("--folds", type=int, default=3)
    p_tune.add_argument("--c", type=float, default=0.0, help="robustness level used in the probe TD errors")
    p_tune.add_argument("--c0", type=float, default=10.0)
    p_tune.add_argument("--config", default=None)
    p_tune.add_argument("--out", required=True, help="output JSON report")
    p_tune.set_defaults(func=cmd_tune)

    p_train = sub.add_parser("train", help="learn a robust policy from a dataset")
    p_train.add_argument("--data", required=True)
    p_train.add_argument("--c", type=float, default=0.1)
    p_train.add_argument("--seed", type=int, default=0)
    p_train.add_argument("--c0", type=float, default=10.0)
    p_train.add_argument("--tuning", default="cv", help="'cv', 'default', or path to a tune report")
    p_train.add_argument("--restarts", type=int, default=10)
    p_train.add_argument("--max-outer", type=int, default=50, dest="max_outer")
    p_train.add_argument("--eps-tol", type=float, default=1e-4, dest="eps_tol")
    p_train.add_argument("--lbfgs-maxiter", type=int, default=60, dest="lbfgs_maxiter")
    p_train.add_argument("--threads", type=int, default=1)
    p_train.add_argument("--fd-gradients", action="store_true", dest="fd_gradients",
                         help="use central finite differences instead of analytic gradients")
    p_train.add_argument("--config", default=None)
    p_train.add_argument("--out-policy", required=True, dest="out_policy")
    p_train.add_argument("--out-trace", required=True, dest="out_trace")
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("evaluate", help="roll out a policy and report mean average rewards")
    p_eval.add_argument("--policy", required=True)
    p_eval.add_argument("--episodes", type=int, default=1000)
    p_eval.add_argument("--t-min", type=int, default=50, dest="t_min")
    p_eval.add_argument("--t-max", type=int, default=100, dest="t_max")
    p_eval.add_argument("--init", default="normal")
    p_eval.add_argument("--seed", type=int, default=0)
    p_eval.add_argument("--noise-sd", type=float, default=0.5, dest="noise_sd")
    p_eval.add_argument("--state-clip", type=float, default=None, dest="state_clip",
                        help="optional compact state box for the explosive far tail")
    p_eval.add_argument("--config", default=None)
    p_eval.add_argument("--out", required=True)
    p_eval.set_defaults(func=cmd_evaluate)

    p_oracle = sub.add_parser("oracle-check", help="verify duality and Bellman consistency exactly")
    p_oracle.add_argument("--mdp", default=None, help="optional FiniteMDP JSON file")
    p_oracle.add_argument("--instances", type=int, default=50)
    p_oracle.add_argument("--seed", type=int, default=0)
    p_oracle.add_argument("--lp-checks", type=int, default=20, dest="lp_checks")
    p_oracle.add_argument("--config", default=None)
    p_oracle.add_argument("--out", default=None)
    p_oracle.set_defaults(func=cmd_oracle_check)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args, parser)
    except (ValidationError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failures: I/O, solver breakdowns, ...
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
