from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from infoshare.agents import (
    DECEPTIVE,
    FABRICATE,
    LAG_NAMES,
    QUOTED_SHARE_SLOPES,
    RANDOMIZED,
    Conditional,
    EquationWeights,
    LaggedState,
    ReactionCoefficients,
    StaticNash,
    UniformRandom,
    accuracy_probability,
    calibrate_intercepts,
    calibrated_policies,
    complete_submission,
    decide_share,
    decide_trust,
    default_coefficients,
    falsified_entry,
    fixed_point_iteration,
    initial_state,
    linear_predictor,
)
from infoshare.game_core import (
    ALL_CUES,
    ALL_TRIPLES,
    PARTITION,
    WITH_REPLACEMENT,
    Endowment,
    build_database,
    detect_falsification,
    draw_endowments,
    entry,
    evaluate_submission,
)
from infoshare.session import Pair, Participant, run_treatment

DB = build_database({(0, 0): 0, (0, 1): 1, (1, 0): 0, (1, 1): 1})
LOW = Endowment((DB.entries()[0], DB.entries()[1]), PARTITION)
HIGH = Endowment((DB.entries()[0],) * 2 + (DB.entries()[2],) * 2,
                 WITH_REPLACEMENT)


# -- linear_predictor --------------------------------------------------------

def test_linear_predictor_quoted_arithmetic():
    s = LaggedState(own_shared=1.6)
    own = EquationWeights(0.0, {"own_shared": 0.523})
    assert linear_predictor(own, s) == pytest.approx(0.8368)
    assert round(linear_predictor(own, s), 2) == 0.84

    both = EquationWeights(0.0, {"own_shared": 0.523, "own_falsified": -0.426})
    s2 = LaggedState(own_shared=1.6, own_falsified=True)
    assert linear_predictor(both, s2) == pytest.approx(0.8368 - 0.426)
    assert round(linear_predictor(both, s2), 2) == 0.41

    other = EquationWeights(0.0, {"other_shared": 0.258,
                                  "other_falsified": -0.434})
    s3 = LaggedState(other_shared=1.6, other_falsified=True)
    assert linear_predictor(other, s3) == pytest.approx(-0.0212)


def test_unknown_regressor_rejected():
    with pytest.raises(ValueError):
        EquationWeights(0.0, {"partner_mood": 1.0})


@pytest.mark.parametrize("kw", [dict(noise_scale=-1), dict(trust_prob=1.5),
                                dict(falsify_base=-0.1), dict(rounding="up")])
def test_reaction_coefficients_validation(kw):
    with pytest.raises(ValueError):
        ReactionCoefficients(**kw)


# -- decide_share --------------------------------------------------------------

def test_static_nash_zero_shares_nothing():
    rng = np.random.default_rng(0)
    pol = StaticNash(0)
    for _ in range(100):
        a, _ = draw_endowments(build_database(rng=rng), PARTITION, rng)
        d = decide_share(pol, LaggedState(), a, rng)
        assert d.count == 0 and not detect_falsification(a, d)


def test_conditional_clamps_to_endowment_size():
    pol = Conditional(ReactionCoefficients(share=EquationWeights(2.4)))
    d = decide_share(pol, LaggedState(), LOW, np.random.default_rng(0))
    assert d.count == 2
    assert set(d.shared) == set(LOW.entries)
    neg = Conditional(ReactionCoefficients(share=EquationWeights(-3.0)))
    assert decide_share(neg, LaggedState(), LOW,
                        np.random.default_rng(0)).count == 0


def test_nearest_rounding_rule():
    rng = np.random.default_rng(0)
    for b, want in [(0.49, 0), (0.5, 1), (1.49, 1), (1.5, 2), (3.7, 4)]:
        pol = Conditional(ReactionCoefficients(share=EquationWeights(b)))
        assert pol.share_count(LaggedState(), 4, rng) == want


def test_randomized_rounding_is_unbiased():
    pol = Conditional(ReactionCoefficients(share=EquationWeights(1.3),
                                           rounding=RANDOMIZED))
    rng = np.random.default_rng(1)
    draws = [pol.share_count(LaggedState(), 2, rng) for _ in range(20_000)]
    assert set(draws) == {1, 2}
    assert np.mean(draws) == pytest.approx(1.3, abs=0.015)


@given(st.integers(0, 10_000), st.floats(-3, 6), st.floats(0, 3),
       st.floats(0, 1), st.sampled_from([DECEPTIVE, FABRICATE]),
       st.booleans())
@settings(max_examples=150, deadline=None)
def test_share_decision_invariants(seed, b, noise, fbase, conv, high):
    endow = HIGH if high else LOW
    pol = Conditional(ReactionCoefficients(share=EquationWeights(b),
                                           noise_scale=noise,
                                           falsify_base=fbase))
    rng = np.random.default_rng(seed)
    d = decide_share(pol, LaggedState(), endow, rng, conv)
    assert 0 <= d.count <= endow.size
    false_slots = [e for e in d.shared if e not in endow.unique_entries]
    assert len(false_slots) <= 1
    if conv == DECEPTIVE:
        # deceptive falsehoods are flipped held cues
        for e in false_slots:
            assert e.flipped() in endow.unique_entries


def test_falsify_probability_one_marks_falsified():
    pol = Conditional(ReactionCoefficients(share=EquationWeights(1.0),
                                           falsify_base=1.0))
    rng = np.random.default_rng(0)
    for _ in range(50):
        d = decide_share(pol, LaggedState(), LOW, rng)
        assert d.count == 1 and detect_falsification(LOW, d)


def test_zero_noise_decision_is_deterministic():
    pol = Conditional(default_coefficients("A"))
    s = initial_state("A")
    counts = {pol.share_count(s, 2, np.random.default_rng(k))
              for k in range(20)}
    assert pol.coeffs.noise_scale > 0 or len(counts) == 1
    quiet = Conditional(ReactionCoefficients(
        share=EquationWeights(0.9, {"own_shared": 0.3})))
    counts = {quiet.share_count(s, 2, np.random.default_rng(k))
              for k in range(20)}
    assert len(counts) == 1


def test_fabricated_entries_lie_outside_endowment():
    rng = np.random.default_rng(0)
    seen = set()
    for _ in range(2000):
        e = falsified_entry(LOW, rng, FABRICATE)
        assert e not in LOW.unique_entries
        seen.add(e)
    assert len(seen) == 6
    for _ in range(100):
        e = falsified_entry(LOW, rng, DECEPTIVE)
        assert e.flipped() in LOW.unique_entries


# -- fixed point ---------------------------------------------------------------

def test_fixed_point_hits_target_mean_treatment_a():
    slopes = {k: v for k, v in QUOTED_SHARE_SLOPES["A"].items()
              if k in ("own_shared", "other_shared")}
    c = calibrate_intercepts(
        ReactionCoefficients(share=EquationWeights(0.0, slopes)), 1.616, 0.0)
    assert c.share.intercept == pytest.approx(1.616 * (1 - 0.781))
    assert c.share.intercept == pytest.approx(0.354, abs=5e-4)
    start = LaggedState(own_shared=1.616, other_shared=1.616)
    assert fixed_point_iteration(c.share, start) == pytest.approx(1.616,
                                                                  abs=0.05)
    # from a distant start the map contracts to the same point
    far = LaggedState(own_shared=0.0, other_shared=0.0)
    assert fixed_point_iteration(c.share, far) == pytest.approx(1.616,
                                                                abs=1e-6)


def test_calibrate_intercepts_degenerate_and_singular():
    c = calibrate_intercepts(ReactionCoefficients(), 1.0, 0.5)
    assert c.share.intercept == 1.0
    with pytest.raises(ValueError):
        calibrate_intercepts(ReactionCoefficients(share=EquationWeights(
            0.0, {"own_shared": 0.6, "other_shared": 0.4})), 1.0, 0.5)


def test_calibrate_intercepts_accounts_for_accuracy_terms():
    w = {"own_shared": 0.5, "other_shared": 0.2, "own_accuracy": 0.3}
    c = calibrate_intercepts(
        ReactionCoefficients(share=EquationWeights(0.0, w)), 1.2, 0.5)
    assert c.share.intercept == pytest.approx(1.2 * 0.3 - 0.3 * 0.5)
    m = fixed_point_iteration(c.share, LaggedState(), accuracy=0.5)
    assert m == pytest.approx(1.2, abs=1e-9)


def test_calibrated_intercept_simulation_check():
    # Noise-free agents with unbiased rounding, started at the target.
    slopes = {k: v for k, v in QUOTED_SHARE_SLOPES["A"].items()
              if k in ("own_shared", "other_shared")}
    c = calibrate_intercepts(ReactionCoefficients(
        share=EquationWeights(0.0, slopes), rounding=RANDOMIZED), 1.616, 0.0)
    pol = {"A": Conditional(c)}
    seed_state = initial_state("A", {"own_shared": 1.616,
                                     "other_shared": 1.616})
    pairs = [Pair(k, Participant(2 * k + 1, pol, seed_state),
                  Participant(2 * k + 2, pol, seed_state)) for k in range(50)]
    recs = run_treatment(pairs, "A", seed=11)
    assert len(recs) == 1600
    mean = np.mean([r.shared_count for r in recs])
    assert mean == pytest.approx(1.616, abs=0.1)


# -- decide_trust ------------------------------------------------------------

def test_trust_examples():
    rng = np.random.default_rng(0)
    assert decide_trust(Conditional(), [], rng) == []
    assert decide_trust(StaticNash(0, trust=False), [], rng) == []
    recv = [entry(0, 0, 0), entry(1, 1, 1)]
    assert decide_trust(Conditional(), recv, rng) == [True, True]
    assert decide_trust(StaticNash(1, trust=False), recv, rng) == [False] * 2

    pol = Conditional(ReactionCoefficients(trust_prob=0.8))
    flags = decide_trust(pol, [entry(0, 0, 0)] * 100_000, rng)
    assert np.mean(flags) == pytest.approx(0.8, abs=0.005)


def test_uniform_random_policy_ranges():
    rng = np.random.default_rng(0)
    counts = [decide_share(UniformRandom(), LaggedState(), HIGH, rng).count
              for _ in range(5000)]
    assert set(counts) == set(range(5))
    assert np.bincount(counts) / 5000 == pytest.approx([0.2] * 5, abs=0.03)


# -- complete_submission -----------------------------------------------------

def test_full_coverage_is_accurate():
    rest = [DB.entries()[2], DB.entries()[3]]
    sub = complete_submission(LOW, rest, np.random.default_rng(0))
    assert evaluate_submission(sub, DB)
    assert accuracy_probability(LOW, rest, DB) == 1


def test_no_receipts_quarter_accuracy():
    assert accuracy_probability(LOW, [], DB) == Fraction(1, 4)
    rng = np.random.default_rng(3)
    n = 40_000
    hits = sum(evaluate_submission(complete_submission(LOW, [], rng), DB)
               for _ in range(n))
    assert hits / n == pytest.approx(0.25, abs=0.01)


def test_flipped_receipt_on_uncovered_cue_is_fatal():
    bad = [DB.entries()[2].flipped()]
    assert accuracy_probability(LOW, bad, DB) == 0
    rng = np.random.default_rng(0)
    assert not any(evaluate_submission(complete_submission(LOW, bad, rng), DB)
                   for _ in range(200))


def test_own_endowment_beats_contradicting_receipt():
    lie = DB.entries()[0].flipped()
    sub = complete_submission(LOW, [lie], np.random.default_rng(0))
    assert sub[lie.cue] == DB[lie.cue]
    assert lie.cue in sub.conflicts


@given(st.integers(0, 1000), st.lists(st.sampled_from(range(8)), max_size=4))
@settings(max_examples=100, deadline=None)
def test_submission_never_contradicts_own_endowment(seed, idx):
    recv = [ALL_TRIPLES[i] for i in idx]
    sub = complete_submission(HIGH, recv, np.random.default_rng(seed))
    for e in HIGH.entries:
        assert sub[e.cue] == e.target


@pytest.mark.parametrize("k", [0, 1, 2])
def test_guessing_accuracy_two_to_minus_k(k):
    # Endowment covers 2 cues, truthful receipts cover 2 - k of the rest.
    rest = [DB.entries()[2], DB.entries()[3]][: 2 - k]
    assert accuracy_probability(LOW, rest, DB) == Fraction(1, 2 ** k)
    rng = np.random.default_rng(100 + k)
    n = 100_000
    hits = sum(evaluate_submission(complete_submission(LOW, rest, rng), DB)
               for _ in range(n))
    assert hits / n == pytest.approx(2.0 ** -k, abs=0.01)


# -- defaults ------------------------------------------------------------------

def test_defaults_carry_quoted_slopes():
    for t in "ABCD":
        c = default_coefficients(t)
        for k, v in QUOTED_SHARE_SLOPES[t].items():
            assert c.share.weights[k] == v
        assert set(c.share.weights) <= set(LAG_NAMES)
    assert set(calibrated_policies()) == set("ABCD")


def test_initial_state_seeds():
    a, b = initial_state("A"), initial_state("B")
    assert (a.own_shared, a.own_accuracy, a.first_round) == (2.0, True, True)
    assert (b.own_shared, b.own_accuracy) == (0.0, False)
    c = initial_state("C")
    assert c.own_shared == 4.0 and c.own_unique == 3.0
    assert initial_state("B", {"own_shared": 1.0}).own_shared == 1.0
    with pytest.raises(ValueError):
        initial_state("A", {"mood": 1})


def test_all_cues_answered():
    sub = complete_submission(HIGH, [], np.random.default_rng(0))
    assert set(sub.answers) == set(ALL_CUES)
