import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from nldoe.io import read_design_csv
from nldoe.reference import EXAMPLE1_REGION, EXAMPLE2_REGION

ROOT = Path(__file__).resolve().parents[1]
DATA = ROOT / "tests" / "data"
RUNSPECS = ROOT / "runspecs"

# lines printed by the acceptance suite, echoed at the end of the session
ACCEPTANCE_LINES: list[str] = []


def table(name: str):
    region = EXAMPLE2_REGION if name.startswith("ex2_") else EXAMPLE1_REGION
    return read_design_csv(DATA / f"{name}.csv", region=region)


def run_cli(*args, check_json=True):
    """Run ``python -m nldoe`` and return (exit code, parsed JSON or stdout, stderr)."""
    proc = subprocess.run([sys.executable, "-m", "nldoe", *map(str, args)], capture_output=True, text=True,
                          cwd=ROOT)
    out = proc.stdout
    if check_json and "--json" in args and proc.returncode in (0, 3, 4) and out.strip():
        out = json.loads(out)
    return proc.returncode, out, proc.stderr


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
