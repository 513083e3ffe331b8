"""Command-line entry point: ``sdh run | verify | plot | oracle | env | solve``."""

from __future__ import annotations

import argparse
import glob
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from sdh import __version__, bellman, oracle
from sdh.config import ExperimentConfig
from sdh.continuation import make_continuation
from sdh.errors import NumericError, UsageError
from sdh.mdp import ENVIRONMENTS, build_bernoulli_cost_mdp, make_env
from sdh.policy import SoftmaxPolicy


def _kv(items) -> dict:
    """Parse key=value pairs; values are read as JSON when possible."""
    out = {}
    for item in items or []:
        if "=" not in item:
            raise UsageError(f"expected key=value, got {item!r}")
        k, v = item.split("=", 1)
        try:
            out[k] = json.loads(v)
        except json.JSONDecodeError:
            out[k] = v
    return out


def _print(obj) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True, default=float))


def cmd_run(args) -> int:
    from sdh.harness.runner import run_experiment

    config = ExperimentConfig.load(args.config)
    seeds = [int(s) for s in args.seeds.split(",")] if args.seeds else None
    summary = run_experiment(config, out_dir=args.out, seeds=seeds)
    _print(summary)
    return 0


def cmd_verify(args) -> int:
    from sdh.harness.verify import run_suite

    report = run_suite(args.suite, quick=args.quick)
    _print(report)
    return 0 if report["passed"] else 1


def cmd_plot(args) -> int:
    from sdh.harness.plotting import plot_metrics

    paths = sorted(p for pattern in args.patterns for p in glob.glob(pattern))
    if not paths:
        raise UsageError(f"no files match {args.patterns}")
    limit = args.cost_limit
    if limit is None:
        cfg_path = Path(paths[0]).parent / "config.json"
        if cfg_path.exists():
            limit = json.loads(cfg_path.read_text()).get("cost_limit")
    for p in plot_metrics(paths, args.out, limit):
        print(p)
    return 0


def cmd_oracle(args) -> int:
    if args.which == "counterexample":
        p_as, p_asn = oracle.counterexample_argmax(args.gamma, args.kappa, args.r)
        j_as, _ = oracle.counterexample_objectives(p_as, args.gamma, args.kappa, args.r)
        _, j_asn = oracle.counterexample_objectives(p_asn, args.gamma, args.kappa, args.r)
        out = {"gamma": args.gamma, "kappa": args.kappa, "r": args.r, "argmax_J_AS": p_as, "argmax_J_ASN": p_asn,
               "J_AS_max": j_as, "J_ASN_max": j_asn}
        if args.svg:
            from sdh.harness.plotting import plot_counterexample

            out["svg"] = str(plot_counterexample(args.svg, args.gamma, args.kappa, args.r))
        _print(out)
        return 0
    mdp = build_bernoulli_cost_mdp(args.q)
    S_H = oracle.survival_statistic(mdp, np.ones((2, 1)), args.lam, args.H)
    cert = oracle.chance_bound(S_H, args.lam, args.b, args.H)
    exact = oracle.cost_distribution_exact(mdp, np.ones((2, 1)), args.H)
    p_exceed = sum(m for c, m in exact.items() if c >= args.b - 1e-12)
    _print({"lambda": cert.lam, "threshold_b": cert.threshold_b, "horizon_H": cert.horizon_H, "S_H": cert.S_H,
            "bound": cert.bound, "exact_exceedance": p_exceed, "q": args.q})
    return 0


def cmd_env(args) -> int:
    mdp = make_env(args.name, **_kv(args.param))
    text = mdp.to_json()
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)
    return 0


def cmd_solve(args) -> int:
    mdp = make_env(args.env, **_kv(args.param))
    cont = make_continuation(args.cont, **_kv(args.cont_param))
    policy = SoftmaxPolicy.uniform(mdp.n_states, mdp.n_actions)
    shaped = bellman.shape(mdp, cont)
    ell_c = math.log(mdp.n_actions)
    critics = bellman.two_critic_fixed_point(policy, shaped, ell_c, args.tol)
    Q_soft, V_soft = bellman.soft_evaluate_AS(policy, shaped, args.kappa, ell_c, args.tol)
    V = bellman.evaluate_policy(policy, shaped, None, args.tol)
    bellman.write_tables_csv(args.out, V=V, Q_R=critics.Q_R, Q_KL=critics.Q_KL, Q_soft=Q_soft, V_soft=V_soft)
    print(args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sdh", description="Stochastic decision horizon laboratory.")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run an experiment config")
    r.add_argument("config")
    r.add_argument("--out", help="output directory (defaults to the config's output_dir)")
    r.add_argument("--seeds", help="comma-separated seeds overriding the config")
    r.set_defaults(fn=cmd_run)

    v = sub.add_parser("verify", help="run a named property suite")
    v.add_argument("suite")
    v.add_argument("--quick", action="store_true", help="smaller instance counts")
    v.set_defaults(fn=cmd_verify)

    pl = sub.add_parser("plot", help="plot metrics JSONL files to SVG")
    pl.add_argument("patterns", nargs="+")
    pl.add_argument("-o", "--out", required=True)
    pl.add_argument("--cost-limit", type=float)
    pl.set_defaults(fn=cmd_plot)

    o = sub.add_parser("oracle", help="closed-form certificates")
    osub = o.add_subparsers(dest="which", required=True)
    ce = osub.add_parser("counterexample")
    ce.add_argument("--gamma", type=float, default=0.9)
    ce.add_argument("--kappa", type=float, default=1.0)
    ce.add_argument("--r", type=float, default=0.4)
    ce.add_argument("--svg")
    cb = osub.add_parser("chance-bound", help="i.i.d. Bernoulli cost model")
    cb.add_argument("--q", type=float, default=0.1)
    cb.add_argument("--H", type=int, default=5)
    cb.add_argument("--lam", type=float, default=1.0)
    cb.add_argument("--b", type=float, default=1.0)
    o.set_defaults(fn=cmd_oracle)

    e = sub.add_parser("env", help="environment utilities")
    esub = e.add_subparsers(dest="action", required=True)
    ex = esub.add_parser("export")
    ex.add_argument("name", choices=sorted(ENVIRONMENTS))
    ex.add_argument("--param", action="append", metavar="KEY=VALUE")
    ex.add_argument("-o", "--out")
    e.set_defaults(fn=cmd_env)

    s = sub.add_parser("solve", help="evaluate the uniform policy and export value tables as CSV")
    s.add_argument("--env", default="hazard_chain", choices=sorted(ENVIRONMENTS))
    s.add_argument("--param", action="append", metavar="KEY=VALUE")
    s.add_argument("--cont", default="exponential")
    s.add_argument("--cont-param", action="append", metavar="KEY=VALUE")
    s.add_argument("--kappa", type=float, default=0.0)
    s.add_argument("--tol", type=float, default=1e-10)
    s.add_argument("-o", "--out", required=True)
    s.set_defaults(fn=cmd_solve)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.fn(args)
    except (UsageError, NumericError) as e:
        print(f"sdh: error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
