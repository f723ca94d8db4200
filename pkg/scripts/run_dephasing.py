"""Run the dephasing study; extra arguments are passed to `hmmq dephasing`.

Example: python3 scripts/run_dephasing.py --out results/dephasing.csv
"""

import sys

from hmmq.experiments.cli import main

if __name__ == "__main__":
    sys.exit(main(["dephasing", *sys.argv[1:]]))
