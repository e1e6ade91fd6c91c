"""Simulate both treatment orders and estimate reaction functions.

The run uses ten 100-participant sessions of calibrated agents.  It pools
their logs and prints the treatment summary, the #Shared reaction functions
with pair-clustered standard errors, and the cross-treatment Wald tests.
It also prints the pass/fail checklist against the calibration targets.

    python docs/examples/reaction_functions.py [seed]
"""
import sys

from infoshare.econometrics import format_report_text
from infoshare.replication import replicate

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 42
rep = replicate(seed=seed, sessions_per_order=5, participants=100)
print(format_report_text(rep.report))
print()
for item in rep.checklist:
    print(f"[{'PASS' if item['pass'] else 'FAIL'}] {item['check']}")
