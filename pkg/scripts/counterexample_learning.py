"""Train the full and naive-critic AS-SAC variants on the continue/stop problem and compare to the closed form."""

from __future__ import annotations

import argparse
import json

from sdh import oracle
from sdh.harness.experiments import counterexample_learning
from sdh.harness.plotting import plot_counterexample


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--steps", type=int, default=20_000)
    ap.add_argument("--svg", default="runs/counterexample_objectives.svg")
    args = ap.parse_args()

    p_as, p_asn = oracle.counterexample_argmax(0.9, 1.0, 0.4)
    out = {"closed_form": {"AS_SAC_full": p_as, "AS_SAC_naive_critic": p_asn}, "learned": {}}
    for variant in ("AS_SAC_full", "AS_SAC_naive_critic"):
        out["learned"][variant] = [counterexample_learning(variant, s, args.steps) for s in range(args.seeds)]
    out["svg"] = str(plot_counterexample(args.svg))
    print(json.dumps(out, indent=2))


if __name__ == "__main__":
    main()
