"""Run the acceptance suite and print one PASS/FAIL line per criterion.

    python3 scripts/run_acceptance.py            # all eleven (criterion 5 takes ~35 min)
    python3 scripts/run_acceptance.py --quick    # skip the 2000-step Adam run
"""

import argparse
import subprocess
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--quick", action="store_true", help="deselect the long optimization criterion")
    args = ap.parse_args()
    cmd = [sys.executable, "-m", "pytest", str(ROOT / "tests" / "test_acceptance.py"), "-q", "-rN", "-p", "no:cacheprovider"]
    if args.quick:
        cmd += ["-k", "not c05"]
    proc = subprocess.run(cmd, cwd=ROOT, capture_output=True, text=True)
    lines = proc.stdout.splitlines()
    start = next((i for i, l in enumerate(lines) if "acceptance criteria" in l), None)
    if start is None:
        print(proc.stdout + proc.stderr)
        return proc.returncode or 1
    for line in lines[start + 1:]:
        if line.startswith("criterion"):
            print(line)
    return proc.returncode


if __name__ == "__main__":
    sys.exit(main())
