"""Balance-law residual table at dt and dt/2."""

import argparse

from qhdlab.config import load_config
from qhdlab.experiments import preset_balance


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--config", default="configs/balance.toml")
    args = ap.parse_args()
    rep = preset_balance(load_config(args.config))
    print("\n".join(rep.lines()))
    for name, value in rep.residuals.items():
        print(f"# {name}: {value}")


if __name__ == "__main__":
    main()
