"""Safety table: chance-constrained planner against the zero-back-off baseline at 1/4 W, W and 4 W.

    python scripts/noise_sweep.py --trials 20 --out results/sweep
"""
import sys

from vorhc.cli import main

if __name__ == "__main__":
    args = sys.argv[1:]
    if "--scenario" not in args:
        args = ["--scenario", "OriginSwap12", *args]
    if "--out" not in args:
        args = [*args, "--out", "results/sweep"]
    sys.exit(main(["sweep", *args]))
