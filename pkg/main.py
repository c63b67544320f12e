"""
PulseStack
==========

A pulse-aware quantum compilation toolchain: lower gate circuits to pulse
schedules through device calibrations, optimize and legalize them, exchange
them in a pulse-profile IR text format and execute them on a simulated
device through a session/job driver.

Usage:
    python main.py query --device sim --key pulse_support
    python main.py compile data/circuits/x_measure.json -o x.pqir
    python main.py run x.pqir --shots 1000
    python main.py vqe-demo

Version: 1.0.0
License: MIT
"""

import sys
from pathlib import Path

# Add src directory to Python path
src_path = Path(__file__).parent / "src"
sys.path.insert(0, str(src_path))

from src.cli.app import main

if __name__ == "__main__":
    try:
        exit_code = main()
    except KeyboardInterrupt:
        print("Interrupted by user", file=sys.stderr)
        exit_code = 130
    sys.exit(exit_code)
