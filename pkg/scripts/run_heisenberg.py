"""Run the heisenberg study; extra arguments are passed to `hmmq heisenberg`.

Example: python3 scripts/run_heisenberg.py --out results/heisenberg.csv
"""

import sys

from hmmq.experiments.cli import main

if __name__ == "__main__":
    sys.exit(main(["heisenberg", *sys.argv[1:]]))
