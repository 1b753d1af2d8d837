"""Per-agent planning time against agent count (2..16 agents on the origin-swap ring).

    python scripts/bench_timing.py --max-agents 16 --trials 3 --out results/bench
"""
import sys

from vorhc.cli import main

if __name__ == "__main__":
    args = sys.argv[1:]
    if "--out" not in args:
        args = [*args, "--out", "results/bench"]
    sys.exit(main(["bench", *args]))
