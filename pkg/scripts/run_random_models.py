"""Run the random-models study; extra arguments are passed to `hmmq random-models`.

Example: python3 scripts/run_random_models.py --out results/random_models.csv
"""

import sys

from hmmq.experiments.cli import main

if __name__ == "__main__":
    sys.exit(main(["random-models", *sys.argv[1:]]))
