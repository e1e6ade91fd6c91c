"""Solve the one-shot sharing game in both low-information treatments.

The script prints, for the cooperative and the tournament payoff rules:

* the pure Nash equilibria with their payoffs, marking which are
  Pareto-optimal;
* the opponent strategies against which falsifying beats every honest
  reply.

It does this under both falsification conventions.  "deceptive" flips the
target of a held entry.  "fabricate" invents an entry the sender does not
hold.

    python docs/examples/stage_game.py
"""
from infoshare.equilibrium import (
    build_bimatrix,
    cell_value,
    pareto_and_dominance,
)

for convention in ("deceptive", "fabricate"):
    for t, label in (("A", "cooperative"), ("B", "tournament")):
        m = build_bimatrix(t, convention)
        rep = pareto_and_dominance(m)
        print(f"\n== treatment {t} ({label}), {convention} falsification ==")
        for r, c in rep.nash:
            u1, u2 = cell_value(m, r, c)
            tag = "  pareto-optimal" if (r, c) in rep.pareto else ""
            print(f"  NE {r.label:>12} x {c.label:<12} "
                  f"{float(u1):7.1f} {float(u2):7.1f}{tag}")
        bad = sorted(opp.label for (side, opp), v
                     in rep.falsification_profitable.items()
                     if v and side == "row")
        print("  falsifying beats honest play against:",
              ", ".join(bad) or "nothing")
