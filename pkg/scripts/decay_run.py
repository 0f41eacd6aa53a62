"""Exponential-decay preset: tail fit of log F and per-functional monotonicity."""

import argparse

from qhdlab.config import load_config
from qhdlab.experiments import preset_decay


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--config", default="configs/decay.toml")
    args = ap.parse_args()
    rep = preset_decay(load_config(args.config))
    print("\n".join(rep.lines()))


if __name__ == "__main__":
    main()
