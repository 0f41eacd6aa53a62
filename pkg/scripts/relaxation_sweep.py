"""Run the relaxation sweep and print the fitted rate.

    python scripts/relaxation_sweep.py [--config configs/relax.toml] [--out out/relax]
"""

import argparse
import time

from qhdlab.config import load_config
from qhdlab.experiments import preset_relaxation


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--config", default="configs/relax.toml")
    ap.add_argument("--out", default=None)
    args = ap.parse_args()
    cfg = load_config(args.config)
    start = time.perf_counter()
    report = preset_relaxation(cfg)
    report.write(args.out or cfg.output.dir)
    print(report.summary())
    print(f"elapsed {time.perf_counter() - start:.1f} s")


if __name__ == "__main__":
    main()
