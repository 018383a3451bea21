"""Regenerate the golden sweep CSVs used by the CLI regression tests."""

import argparse
from pathlib import Path

from flashpim.cli import main

GOLDEN = Path(__file__).resolve().parents[1] / "tests" / "golden"


def run(out_dir: Path):
    out_dir.mkdir(parents=True, exist_ok=True)
    for axis in ("n_row", "n_col", "n_stack"):
        path = out_dir / f"sweep_{axis}.csv"
        main(["sweep", "--axis", axis, "--out", str(path)])
        print(path)


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, default=GOLDEN)
    run(ap.parse_args().out)
