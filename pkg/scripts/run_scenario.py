"""Run one scenario and print its summary (thin wrapper around ``wheelleg run``).

    python3 scripts/run_scenario.py scenarios/flat_drive.json out/flat_drive.csv
"""
import sys

from wheelleg.cli import main

if __name__ == "__main__":
    sys.exit(main(["run", *sys.argv[1:]]))
