"""Runs every CLI subcommand once into a directory.

``python3 -m filmmanip.suite OUT_DIR`` reproduces the example artifacts; two
runs with the same seed produce byte-identical files.
"""

from __future__ import annotations

import contextlib
import hashlib
import io
import sys
from pathlib import Path

from .cli import run_command

SEED = 7

EXAMPLE_COMMANDS = (
    ("plant", "--levels", "8"),
    ("plant", "--preset", "rigid", "--noise", "0.002", "--out", "{out}/rigid_calibration.csv"),
    ("fit", "--data", "{out}/calibration.csv"),
    ("fk", "--coeffs", "{out}/coeffs.json", "--currents", "0.1,-0.2,0.3,0.05",
     "--out", "{out}/fk.json"),
    ("ik", "--coeffs", "{out}/coeffs.json", "--target", "1.0,-0.5,90.2", "--out", "{out}/ik.json"),
    ("workspace", "--all-morphs"),
    ("design-search", "--out", "{out}/design_trace.csv"),
    ("design-search", "--objective", "plant", "--out", "{out}/design_plant_trace.csv"),
    ("follow", "--coeffs", "{out}/coeffs.json", "--shape", "circle",
     "--out", "{out}/circle_trace.csv"),
    ("follow", "--coeffs", "{out}/coeffs.json", "--shape", "square",
     "--out", "{out}/square_trace.csv"),
    ("sweep", "--coeffs", "{out}/coeffs.json"),
    ("chirp", "--coil", "1", "--duration", "100"),
    ("morph", "--pulses", "enter_side_1,exit_to_main,enter_side_2,exit_to_main,"
     "enter_side_3,exit_to_main,draw_center,exit_to_main", "--out", "{out}/morph_trace.csv"),
)


def run_suite(out_dir, seed=SEED, quiet=True) -> list:
    """Run ``EXAMPLE_COMMANDS`` into ``out_dir``; returns the exit codes."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    codes = []
    for cmd in EXAMPLE_COMMANDS:
        argv = [a.format(out=out) for a in cmd]
        if "--out" not in argv:
            argv += ["--out", str(out)]
        argv += ["--seed", str(seed)]
        sink = io.StringIO()
        with contextlib.redirect_stdout(sink) if quiet else contextlib.nullcontext():
            codes.append(run_command(argv))
    return codes


def digest(out_dir) -> dict:
    """SHA-256 of every file under ``out_dir``, keyed by relative path."""
    root = Path(out_dir)
    return {str(p.relative_to(root)): hashlib.sha256(p.read_bytes()).hexdigest()
            for p in sorted(root.rglob("*")) if p.is_file()}


def main(argv=None):
    argv = sys.argv[1:] if argv is None else argv
    out = argv[0] if argv else "results"
    codes = run_suite(out, quiet=False)
    sys.exit(0 if all(c == 0 for c in codes) else 1)


if __name__ == "__main__":
    main()
