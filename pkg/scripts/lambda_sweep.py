"""Sweep the endpoint of the linear lambda schedule on the 8-state hazard chain for both agents."""

from __future__ import annotations

import argparse
import json
import time

from sdh.harness.experiments import SWEEP_AGENTS, SWEEP_LAMBDAS, is_non_increasing, lambda_sweep_run


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--steps", type=int, default=10_000)
    ap.add_argument("--out", default="runs/lambda_sweep.json")
    args = ap.parse_args()

    table = {}
    for agent in SWEEP_AGENTS:
        rows = []
        for lam in SWEEP_LAMBDAS:
            t0 = time.time()
            res = lambda_sweep_run(agent, lam, range(args.seeds), args.steps)
            rows.append({"lambda_end": lam, "costs": res.final_costs, "rewards": res.final_rewards, "mean_cost": res.mean_cost})
            print(f"{agent:14s} lambda_end={lam:.1f} mean_cost={res.mean_cost:.2f} ({time.time() - t0:.1f}s)", flush=True)
        table[agent] = {"rows": rows, "non_increasing": is_non_increasing([r["mean_cost"] for r in rows])}
    with open(args.out, "w") as fh:
        json.dump(table, fh, indent=2)
    print(json.dumps({a: t["non_increasing"] for a, t in table.items()}))


if __name__ == "__main__":
    main()
