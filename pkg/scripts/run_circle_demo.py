#!/usr/bin/env python3
"""Run the full pipeline on the perturbed circle-map config (and the exact
doubling-map config as a sanity point).  Artifacts land in out-circle/ and
out-doubling/."""
import pathlib
import sys

from nsrpf.cli import main

HERE = pathlib.Path(__file__).resolve().parent.parent

if __name__ == "__main__":
    rc = main(["run", str(HERE / "configs" / "circle_perturbed.ini")])
    rc2 = main(["run", str(HERE / "configs" / "doubling.ini")])
    sys.exit(rc or rc2)
