"""Write the desk-scale MNIST split as label-first CSVs for the CLI.

Source is either the official IDX files (``--idx-dir``) or the 5,000-digit
sample shipped with mlxtend.  Produces ``train.csv`` and ``test.csv``.
"""

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "tests"))

import rig  # noqa: E402
from robotkit import io  # noqa: E402


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("out", type=Path, help="output directory")
    ap.add_argument("--idx-dir", help="directory with the official *-ubyte.gz files")
    args = ap.parse_args()
    if args.idx_dir:
        import os

        os.environ["ROBOTKIT_MNIST_DIR"] = args.idx_dir
    train, test = rig.mnist_subset()
    args.out.mkdir(parents=True, exist_ok=True)
    io.save_csv(train, args.out / "train.csv", raw_pixels=True)
    io.save_csv(test, args.out / "test.csv", raw_pixels=True)
    print(f"wrote {len(train)} training and {len(test)} test digits to {args.out}")


if __name__ == "__main__":
    main()
