"""Refit the default device constants and rewrite src/flashpim/data/tech_default.yaml."""

import argparse
from pathlib import Path

from flashpim.calibration import calibrate, dump

DEFAULT_OUT = Path(__file__).resolve().parents[1] / "src" / "flashpim" / "data" / "tech_default.yaml"


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, default=DEFAULT_OUT)
    args = ap.parse_args()
    tech, report = calibrate()
    args.out.write_text(dump(tech, report))
    for name, a in report["anchors"].items():
        print(f"{name:32s} target={a['target']:.4g} model={a['model']:.4g} resid={a['log_residual']:+.2e}")
    for name, v in report["checks"].items():
        print(f"{name:32s} {v:.4g}")


if __name__ == "__main__":
    main()
