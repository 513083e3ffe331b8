"""Run every property suite and print one line per suite."""

from __future__ import annotations

import argparse
import sys
import time

from sdh.harness.verify import SUITES, run_suite


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--quick", action="store_true")
    args = ap.parse_args()
    ok = True
    for name in SUITES:
        t0 = time.time()
        report = run_suite(name, quick=args.quick)
        ok &= report["passed"]
        print(f"{'PASS' if report['passed'] else 'FAIL'} {name} ({time.time() - t0:.1f}s)")
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
