"""End-to-end replication run: both treatment orders, analysis, checklist."""
from __future__ import annotations

from dataclasses import dataclass

from .agents import TARGET_BOTH_ZERO, TARGET_SHARE_MEANS, calibrated_policies
from .econometrics import analyze
from .session import SessionConfig, SessionLog, run_session

SHARE_TOLERANCE = 0.15
BOTH_ZERO_TOLERANCE = 0.05
MIN_ACCURACY_GAP = 0.10
TOURNAMENT_ACCURACY_BAND = (0.40, 0.60)


@dataclass
class Replication:
    logs: list[SessionLog]
    report: dict
    checklist: list[dict]

    @property
    def passed(self) -> bool:
        return all(item["pass"] for item in self.checklist)


def session_seeds(seed: int, sessions_per_order: int):
    """``(sequence, seed)`` for every session, alternating orders."""
    for i in range(sessions_per_order):
        yield "ABCD", seed + 2 * i
        yield "BADC", seed + 2 * i + 1


def run_sessions(seed: int, sessions_per_order: int = 5,
                 participants: int = 100, workers: int = 1,
                 carryover_lags: bool = False) -> list[SessionLog]:
    policies = calibrated_policies()
    return [run_session(SessionConfig(
                seed=s, n_participants=participants,
                roster=[policies] * participants, sequence=seq,
                carryover_lags=carryover_lags, workers=workers))
            for seq, s in session_seeds(seed, sessions_per_order)]


def checklist(summary: dict) -> list[dict]:
    """Compare per-treatment summaries with the replication targets."""
    items = []

    def add(name, ok, value, target):
        items.append({"check": name, "pass": bool(ok), "value": value,
                      "target": target})

    for t, want in TARGET_SHARE_MEANS.items():
        if t in summary:
            got = summary[t]["mean_shared"]
            add(f"mean #Shared {t} within {SHARE_TOLERANCE} of {want}",
                abs(got - want) <= SHARE_TOLERANCE, got, want)
    for a, b in (("A", "B"), ("C", "D")):
        if a in summary and b in summary:
            add(f"mean #Shared {a} > {b}",
                summary[a]["mean_shared"] > summary[b]["mean_shared"],
                [summary[a]["mean_shared"], summary[b]["mean_shared"]], ">")
    if all(t in summary for t in "ABCD"):
        coop = (summary["A"]["accuracy_rate"] + summary["C"]["accuracy_rate"]) / 2
        tour = (summary["B"]["accuracy_rate"] + summary["D"]["accuracy_rate"]) / 2
        lo, hi = TOURNAMENT_ACCURACY_BAND
        add("tournament accuracy near 50%", lo <= tour <= hi, tour, [lo, hi])
        add(f"cooperative accuracy exceeds tournament by >= "
            f"{MIN_ACCURACY_GAP:.2f}", coop - tour >= MIN_ACCURACY_GAP,
            coop - tour, MIN_ACCURACY_GAP)
        zeros = [summary[t]["both_zero_rate"] for t in "ABCD"]
        add("both-shared-zero ordering A < B < C < D",
            all(x < y for x, y in zip(zeros, zeros[1:])), zeros, "increasing")
    for t, want in TARGET_BOTH_ZERO.items():
        if t in summary:
            got = summary[t]["both_zero_rate"]
            add(f"both-shared-zero {t} within {BOTH_ZERO_TOLERANCE} of {want}",
                abs(got - want) <= BOTH_ZERO_TOLERANCE, got, want)
    return items


def replicate(seed: int = 42, sessions_per_order: int = 5,
              participants: int = 100, workers: int = 1) -> Replication:
    logs = run_sessions(seed, sessions_per_order, participants, workers)
    records = [r for lg in logs for r in lg.records]
    report = analyze(records)
    return Replication(logs, report, checklist(report["summary"]))
