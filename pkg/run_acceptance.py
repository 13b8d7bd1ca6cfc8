#!/usr/bin/env python
"""
Helper script to run the Monte Carlo acceptance checks.
Usage:
    python run_acceptance.py              # Run every slow check
    python run_acceptance.py -k fdr       # Extra arguments go to pytest
"""
import os
import subprocess
import sys
from pathlib import Path


def run_slow_tests(extra_args):
    """Run the tests marked slow"""
    root_dir = Path(__file__).parent
    os.chdir(root_dir)

    try:
        result = subprocess.run(
            [sys.executable, "-m", "pytest", "-m", "slow", *extra_args],
            check=True,
            capture_output=False,
        )
        return result.returncode == 0
    except subprocess.CalledProcessError as e:
        print(f"Acceptance checks failed: {e}")
        return False
    except FileNotFoundError:
        print("Error: pytest not found. Make sure it's installed:")
        print("  pip install -r requirements-dev.txt")
        return False


if __name__ == "__main__":
    success = run_slow_tests(sys.argv[1:])
    sys.exit(0 if success else 1)
