"""Exact stage-game analysis for the low-information treatments.

Each player picks one of five sharing actions (0, 1 or 2 true entries, or 1
or 2 false ones) and whether to distrust what arrives, giving ten pure
strategies.  Expected payoffs are computed by enumerating every database,
endowment split, choice of shared entries and guess, in exact rational
arithmetic, so the matrices do not depend on evaluation order.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import NamedTuple, Sequence

from .agents import DECEPTIVE, FABRICATE, FALSIFICATION_CONVENTIONS, accuracy_probability
from .game_core import (
    ALL_CUES,
    ALL_TRIPLES,
    PARTITION,
    CompleteDatabase,
    Endowment,
    TreatmentSpec,
    get_treatment,
)

SHARE_ACTIONS = ("S0", "S1", "S2", "F1", "F2")
_COUNT = {"S0": 0, "S1": 1, "S2": 2, "F1": 1, "F2": 2}


class StageStrategy(NamedTuple):
    share_action: str
    distrust: bool

    @property
    def falsifies(self) -> bool:
        return self.share_action.startswith("F")

    @property
    def label(self) -> str:
        return f"{self.share_action}/{'distrust' if self.distrust else 'trust'}"


def enumerate_strategies() -> list[StageStrategy]:
    """The ten strategies, share action major, trust before distrust."""
    return [StageStrategy(a, d) for a in SHARE_ACTIONS for d in (False, True)]


def _label(s) -> str:
    return s.label if isinstance(s, StageStrategy) else str(s)


@dataclass(frozen=True)
class Bimatrix:
    """Row and column payoffs for every pure profile.

    ``accuracy`` optionally holds each player's probability of an accurate
    submission per cell.
    """

    strategies: tuple
    row: tuple
    col: tuple
    col_strategies: tuple | None = None
    accuracy: tuple | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        n, m = len(self.strategies), len(self.columns)
        for grid in (self.row, self.col):
            if len(grid) != n or any(len(r) != m for r in grid):
                raise ValueError(f"payoff grid must be {n}x{m}")

    @property
    def columns(self) -> tuple:
        return self.col_strategies if self.col_strategies is not None \
            else self.strategies

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.strategies), len(self.columns)

    def cell(self, i: int, j: int) -> tuple:
        return self.row[i][j], self.col[i][j]

    def index(self, strategy, column: bool = False) -> int:
        return (self.columns if column else self.strategies).index(strategy)


@dataclass(frozen=True)
class EquilibriumReport:
    nash: list
    pareto: list
    row_best_responses: dict
    col_best_responses: dict
    falsification_profitable: dict
    falsification_dominated: bool
    dominance: dict
    convention: str | None = None


def _partition_splits():
    """The 6 ways to hand player 1 two of the four cues."""
    return list(itertools.combinations(range(4), 2))


def _databases():
    return [CompleteDatabase(dict(zip(ALL_CUES, ys)))
            for ys in itertools.product((0, 1), repeat=4)]


def share_outcomes(endowment: Endowment, action: str,
                   convention: str = DECEPTIVE) -> list[tuple[Fraction, tuple]]:
    """Distribution over the tuple of triples a sharer sends.

    ``F1`` under the deceptive convention sends one held entry with its
    target flipped, ``F2`` sends both flipped.  Under ``fabricate`` the false
    triples are drawn without replacement from the six triples not held.
    """
    held = endowment.entries
    if action == "S0":
        return [(Fraction(1), ())]
    if action == "S1":
        return [(Fraction(1, len(held)), (e,)) for e in held]
    if action == "S2":
        return [(Fraction(1), tuple(held))]
    if convention == DECEPTIVE:
        if action == "F1":
            return [(Fraction(1, len(held)), (e.flipped(),)) for e in held]
        if action == "F2":
            return [(Fraction(1), tuple(e.flipped() for e in held))]
    elif convention == FABRICATE:
        outside = [t for t in ALL_TRIPLES if t not in endowment.unique_entries]
        combos = list(itertools.combinations(outside, _COUNT[action]))
        return [(Fraction(1, len(combos)), c) for c in combos]
    else:
        raise ValueError(f"unknown falsification convention {convention!r}")
    raise ValueError(f"unknown share action {action!r}")


@lru_cache(maxsize=None)
def _receiver_accuracy(db_index: int, recv_cues: tuple, action: str,
                       distrust: bool, convention: str) -> Fraction:
    db = _databases()[db_index]
    sender_cues = tuple(i for i in range(4) if i not in recv_cues)
    recv = Endowment(tuple(db.entries()[i] for i in recv_cues), PARTITION)
    send = Endowment(tuple(db.entries()[i] for i in sender_cues), PARTITION)
    total = Fraction(0)
    for p, shared in share_outcomes(send, action, convention):
        trusted = () if distrust else shared
        total += p * accuracy_probability(recv, trusted, db)
    return total


def _check_low_info(treatment: TreatmentSpec, convention: str) -> None:
    if treatment.endowment_mode != PARTITION:
        raise ValueError(
            f"treatment {treatment.id}: exact solving covers only the "
            "low-information (partition) treatments")
    if convention not in FALSIFICATION_CONVENTIONS:
        raise ValueError(f"unknown falsification convention {convention!r}")


def _cell(row: StageStrategy, col: StageStrategy, treatment: TreatmentSpec,
          convention: str):
    n_db = 16
    splits = _partition_splits()
    weight = Fraction(1, n_db * len(splits))
    pay_r = pay_c = acc_r = acc_c = Fraction(0)
    coop = treatment.cooperative
    for d in range(n_db):
        for cues in splits:
            other = tuple(i for i in range(4) if i not in cues)
            pr = _receiver_accuracy(d, cues, col.share_action, row.distrust,
                                    convention)
            pc = _receiver_accuracy(d, other, row.share_action, col.distrust,
                                    convention)
            if coop:
                either = 1 - (1 - pr) * (1 - pc)
                br = bc = treatment.coop_bonus * either
            else:
                both = pr * pc
                br = treatment.tournament_bonus * (pr - both / 2)
                bc = treatment.tournament_bonus * (pc - both / 2)
            pay_r += weight * br
            pay_c += weight * bc
            acc_r += weight * pr
            acc_c += weight * pc
    pay_r -= treatment.share_cost * _COUNT[row.share_action]
    pay_c -= treatment.share_cost * _COUNT[col.share_action]
    return (pay_r, pay_c), (acc_r, acc_c)


def expected_payoffs(row: StageStrategy, col: StageStrategy, treatment,
                     convention: str = DECEPTIVE) -> tuple[Fraction, Fraction]:
    """Exact expected payoffs in cents for one strategy profile."""
    treatment = get_treatment(treatment)
    _check_low_info(treatment, convention)
    return _cell(row, col, treatment, convention)[0]


def build_bimatrix(treatment, convention: str = DECEPTIVE) -> Bimatrix:
    treatment = get_treatment(treatment)
    _check_low_info(treatment, convention)
    strategies = tuple(enumerate_strategies())
    row, col, acc = [], [], []
    for r in strategies:
        row_r, col_r, acc_r = [], [], []
        for c in strategies:
            (a, b), probs = _cell(r, c, treatment, convention)
            row_r.append(a)
            col_r.append(b)
            acc_r.append(probs)
        row.append(tuple(row_r))
        col.append(tuple(col_r))
        acc.append(tuple(acc_r))
    return Bimatrix(strategies, tuple(row), tuple(col), accuracy=tuple(acc),
                    meta={"treatment": treatment.id,
                          "incentive": treatment.incentive,
                          "convention": convention,
                          "tie_break": "uniform",
                          "share_cost": treatment.share_cost})


def find_pure_nash(m: Bimatrix) -> list[tuple]:
    """All profiles where neither player has a strictly better deviation."""
    n, k = m.shape
    col_best = [max(m.row[i][j] for i in range(n)) for j in range(k)]
    row_best = [max(m.col[i][j] for j in range(k)) for i in range(n)]
    return [(m.strategies[i], m.columns[j])
            for i in range(n) for j in range(k)
            if m.row[i][j] >= col_best[j] and m.col[i][j] >= row_best[i]]


def pareto_optimal(m: Bimatrix) -> list[tuple]:
    n, k = m.shape
    cells = [(i, j, m.row[i][j], m.col[i][j])
             for i in range(n) for j in range(k)]
    out = []
    for i, j, a, b in cells:
        dominated = any(
            a2 >= a and b2 >= b and (a2 > a or b2 > b)
            for _, _, a2, b2 in cells)
        if not dominated:
            out.append((m.strategies[i], m.columns[j]))
    return out


def _falsifying(s) -> bool:
    return isinstance(s, StageStrategy) and s.falsifies


def pareto_and_dominance(m: Bimatrix) -> EquilibriumReport:
    """Nash set, Pareto frontier, best responses and falsification facts.

    Falsifying is *profitable* against an opponent strategy when the best
    payoff from a falsifying strategy strictly exceeds the best payoff from
    every honest one.
    """
    n, k = m.shape
    row_br, col_br, profitable = {}, {}, {}
    f_rows = [i for i in range(n) if _falsifying(m.strategies[i])]
    h_rows = [i for i in range(n) if i not in f_rows]
    f_cols = [j for j in range(k) if _falsifying(m.columns[j])]
    h_cols = [j for j in range(k) if j not in f_cols]

    for j in range(k):
        best = max(m.row[i][j] for i in range(n))
        row_br[m.columns[j]] = [m.strategies[i] for i in range(n)
                                if m.row[i][j] == best]
        if f_rows and h_rows:
            profitable[("row", m.columns[j])] = (
                max(m.row[i][j] for i in f_rows)
                > max(m.row[i][j] for i in h_rows))
    for i in range(n):
        best = max(m.col[i][j] for j in range(k))
        col_br[m.strategies[i]] = [m.columns[j] for j in range(k)
                                   if m.col[i][j] == best]
        if f_cols and h_cols:
            profitable[("col", m.strategies[i])] = (
                max(m.col[i][j] for j in f_cols)
                > max(m.col[i][j] for j in h_cols))

    dominance = {}
    for i in f_rows:
        dominance[m.strategies[i]] = [
            m.strategies[h] for h in h_rows
            if all(m.row[h][j] >= m.row[i][j] for j in range(k))]

    return EquilibriumReport(
        nash=find_pure_nash(m),
        pareto=pareto_optimal(m),
        row_best_responses=row_br,
        col_best_responses=col_br,
        falsification_profitable=profitable,
        falsification_dominated=not any(profitable.values()),
        dominance=dominance,
        convention=m.meta.get("convention"),
    )


def _num(x) -> dict:
    x = Fraction(x)
    return {"exact": f"{x.numerator}/{x.denominator}" if x.denominator != 1
            else str(x.numerator), "value": float(x)}


def bimatrix_to_json(m: Bimatrix) -> dict:
    n, k = m.shape
    cells = []
    for i in range(n):
        for j in range(k):
            cell = {"row_strategy": _label(m.strategies[i]),
                    "col_strategy": _label(m.columns[j]),
                    "row_payoff": _num(m.row[i][j]),
                    "col_payoff": _num(m.col[i][j])}
            if m.accuracy is not None:
                pr, pc = m.accuracy[i][j]
                cell["row_accuracy"] = _num(pr)
                cell["col_accuracy"] = _num(pc)
            cells.append(cell)
    return {"meta": dict(m.meta),
            "strategies": [_label(s) for s in m.strategies],
            "units": "cents",
            "cells": cells}


def report_to_json(r: EquilibriumReport) -> dict:
    pair = lambda p: [_label(p[0]), _label(p[1])]  # noqa: E731
    return {
        "convention": r.convention,
        "pure_nash": [pair(p) for p in r.nash],
        "pareto_optimal": [pair(p) for p in r.pareto],
        "row_best_responses": {_label(k): [_label(s) for s in v]
                               for k, v in r.row_best_responses.items()},
        "falsification_profitable_against": sorted(
            _label(opp) for (side, opp), v in r.falsification_profitable.items()
            if v and side == "row"),
        "falsification_never_profitable": r.falsification_dominated,
        "falsifying_strategies_weakly_dominated_by": {
            _label(k): [_label(s) for s in v] for k, v in r.dominance.items()},
    }


def strategy_from_label(label: str) -> StageStrategy:
    action, _, resp = label.partition("/")
    if action not in SHARE_ACTIONS or resp not in ("trust", "distrust"):
        raise ValueError(f"bad strategy label {label!r}")
    return StageStrategy(action, resp == "distrust")


def cell_value(m: Bimatrix, row: Sequence, col: Sequence) -> tuple:
    return m.cell(m.index(row), m.index(col, column=True))
