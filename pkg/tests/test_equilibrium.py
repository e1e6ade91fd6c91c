import json
import time
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest

from infoshare.agents import FABRICATE
from infoshare.equilibrium import (
    Bimatrix,
    StageStrategy,
    _receiver_accuracy,
    bimatrix_to_json,
    build_bimatrix,
    cell_value,
    enumerate_strategies,
    expected_payoffs,
    find_pure_nash,
    pareto_and_dominance,
    report_to_json,
    strategy_from_label,
)

from oracles import simulate_cell

GOLDEN = Path(__file__).parent / "golden"

S = strategy_from_label


@pytest.fixture(scope="module")
def coop():
    return build_bimatrix("A")


@pytest.fixture(scope="module")
def tour():
    return build_bimatrix("B")


def test_strategy_space():
    strats = enumerate_strategies()
    assert len(strats) == 10 == len(set(strats))
    labels = [s.label for s in strats]
    assert labels[:2] == ["S0/trust", "S0/distrust"]
    assert "F2/distrust" in labels
    assert all(strategy_from_label(lab) == s for lab, s in zip(labels, strats))
    with pytest.raises(ValueError):
        strategy_from_label("S3/trust")


def test_quoted_cells(coop, tour):
    assert cell_value(coop, S("S2/trust"), S("S2/trust")) == (1000, 1000)
    assert cell_value(tour, S("S0/trust"), S("S0/trust")) == (525, 525)
    assert Fraction(2400) * (Fraction(3, 16) + Fraction(1, 32)) == 525
    assert cell_value(tour, S("F1/trust"), S("S0/trust"))[0] == 500
    assert cell_value(coop, S("S2/trust"), S("S0/trust")) == (1000, 1200)
    assert cell_value(tour, S("S2/trust"), S("S0/trust")) == (100, 2100)


def test_high_info_rejected():
    with pytest.raises(ValueError):
        expected_payoffs(S("S0/trust"), S("S0/trust"), "C")
    with pytest.raises(ValueError):
        build_bimatrix("D")


@pytest.mark.parametrize("t", "AB")
def test_symmetry(t):
    m = build_bimatrix(t)
    for i in range(10):
        for j in range(10):
            assert m.row[i][j] == m.col[j][i]


def test_distrust_irrelevant_against_silent_opponent(coop, tour):
    for m in (coop, tour):
        for opp in (S("S0/trust"), S("S0/distrust")):
            j = m.index(opp, column=True)
            for a in ("S0", "S1", "S2", "F1", "F2"):
                t = m.row[m.index(S(f"{a}/trust"))][j]
                d = m.row[m.index(S(f"{a}/distrust"))][j]
                assert t == d


def test_distrust_helps_against_falsifier(coop):
    j = coop.index(S("F1/trust"), column=True)
    for a in ("S0", "S1", "S2"):
        trusting = coop.accuracy[coop.index(S(f"{a}/trust"))][j][0]
        wary = coop.accuracy[coop.index(S(f"{a}/distrust"))][j][0]
        assert wary >= trusting


def _brute_nash(m):
    out = []
    for i in range(10):
        for j in range(10):
            ok = all(m.row[k][j] <= m.row[i][j] for k in range(10)) and \
                all(m.col[i][k] <= m.col[i][j] for k in range(10))
            out.append(((m.strategies[i], m.columns[j]), ok))
    return out


@pytest.mark.parametrize("t", "AB")
def test_nash_set_matches_deviation_scan(t):
    m = build_bimatrix(t)
    nash = set(find_pure_nash(m))
    for profile, ok in _brute_nash(m):
        assert (profile in nash) == ok


def test_tournament_zero_sharing_inefficient_ne(tour):
    rep = pareto_and_dominance(tour)
    zero = (S("S0/trust"), S("S0/trust"))
    assert zero in rep.nash
    assert zero not in rep.pareto
    assert all(r.share_action == c.share_action == "S0" for r, c in rep.nash)


def test_cooperative_efficient_sharing_ne(coop):
    rep = pareto_and_dominance(coop)
    full = [p for p in rep.nash
            if max(coop.accuracy[coop.index(p[0])]
                   [coop.index(p[1], column=True)]) == 1
            and p in rep.pareto]
    assert full
    best_total = max(coop.row[i][j] + coop.col[i][j]
                     for i in range(10) for j in range(10))
    assert best_total == 2200
    for r, c in rep.pareto:
        assert cell_value(coop, r, c)[0] + cell_value(coop, r, c)[1] == 2200


def test_toy_dominance_solvable():
    m = Bimatrix(("U", "D"), ((3, 1), (2, 0)), ((3, 2), (1, 0)),
                 col_strategies=("L", "R"))
    assert find_pure_nash(m) == [("U", "L")]


@pytest.mark.parametrize("t", "AB")
def test_deceptive_falsification_profitability(t):
    rep = pareto_and_dominance(build_bimatrix(t))
    bad = sorted(opp.label for (side, opp), v in
                 rep.falsification_profitable.items() if v and side == "row")
    if t == "A":
        assert bad == []
    else:
        # Deceiving a trusting sharer beats honest play in the tournament:
        # it sinks the opponent's accuracy for a single entry's cost.
        assert bad == ["S1/trust", "S2/trust"]
        m = build_bimatrix(t)
        assert cell_value(m, S("F1/trust"), S("S2/trust"))[0] == 2300
        assert max(cell_value(m, S(f"{a}/{r}"), S("S2/trust"))[0]
                   for a in ("S0", "S1", "S2")
                   for r in ("trust", "distrust")) == 2100


@pytest.mark.parametrize("t", "AB")
def test_fabricate_falsification_never_profitable(t):
    assert pareto_and_dominance(build_bimatrix(t, FABRICATE)) \
        .falsification_dominated


def test_conventions_differ_only_in_falsifying_cells():
    d, f = build_bimatrix("A"), build_bimatrix("A", FABRICATE)
    differ = False
    for i, r in enumerate(d.strategies):
        for j, c in enumerate(d.columns):
            same = d.cell(i, j) == f.cell(i, j)
            if not (r.falsifies or c.falsifies):
                assert same
            differ |= not same
    assert differ
    assert d.meta["convention"] != f.meta["convention"]


@pytest.mark.parametrize("t", "AB")
@pytest.mark.parametrize("conv", ["deceptive", "fabricate"])
def test_golden_matrices(t, conv):
    m = build_bimatrix(t, conv)
    got = {"treatment": t, "convention": conv, "bimatrix": bimatrix_to_json(m),
           "report": report_to_json(pareto_and_dominance(m))}
    want = json.loads((GOLDEN / f"bimatrix_{t}_{conv}.json").read_text())
    assert json.loads(json.dumps(got)) == want


def test_solver_speed():
    _receiver_accuracy.cache_clear()
    t0 = time.perf_counter()
    rep = pareto_and_dominance(build_bimatrix("B"))
    assert rep.nash
    assert time.perf_counter() - t0 < 1.0


@pytest.mark.parametrize("t", "AB")
def test_fabricate_cells_against_monte_carlo(t):
    # 200 comparisons: Bonferroni bound keeps the family-wise false-alarm
    # rate near 1% (two-sided normal tail at 4 SE is 6.3e-5).
    m = build_bimatrix(t, FABRICATE)
    rng = np.random.default_rng(7)
    for i, r in enumerate(m.strategies):
        for j, c in enumerate(m.columns):
            if not (r.falsifies or c.falsifies):
                continue
            p1, p2 = simulate_cell(tuple(r), tuple(c), t == "A", 40_000, rng,
                                   FABRICATE)
            for draws, exact in ((p1, m.row[i][j]), (p2, m.col[i][j])):
                se = draws.std(ddof=1) / np.sqrt(draws.size)
                assert abs(draws.mean() - float(exact)) <= max(4 * se, 1e-9)


def test_stage_strategy_flags():
    assert StageStrategy("F1", False).falsifies
    assert not StageStrategy("S2", True).falsifies
