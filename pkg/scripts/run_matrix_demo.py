#!/usr/bin/env python3
"""Run the full pipeline on the random matrix-chain config and, as a second
pass, the dense-product oracle cross-check.  Artifacts land in out-matrix/."""
import pathlib
import sys

from nsrpf.cli import main

HERE = pathlib.Path(__file__).resolve().parent.parent
CFG = str(HERE / "configs" / "matrix_random.ini")

if __name__ == "__main__":
    rc = main(["run", CFG])
    rc2 = main(["oracle", CFG])
    sys.exit(rc or rc2)
