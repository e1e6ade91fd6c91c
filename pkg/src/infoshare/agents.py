"""Decision policies: static Nash play and lagged linear reaction functions.

A conditional agent forms a latent sharing index from last round's outcomes,

    latent = intercept + sum(weight[name] * state[name]) + noise,

turns it into an integer count and decides separately whether one of the
shared slots carries a falsified triple.  Receivers trust each incoming
entry with a fixed probability and fill the accuracy test from their own
endowment first, trusted receipts second, and coin flips last.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np

from .game_core import (
    ALL_CUES,
    ALL_TRIPLES,
    AccuracySubmission,
    CompleteDatabase,
    DatabaseEntry,
    Endowment,
    ShareDecision,
    TreatmentSpec,
    get_treatment,
)

DECEPTIVE = "deceptive"
FABRICATE = "fabricate"
FALSIFICATION_CONVENTIONS = (DECEPTIVE, FABRICATE)

NEAREST = "nearest"
RANDOMIZED = "randomized"

LAG_NAMES: tuple[str, ...] = (
    "own_shared", "own_falsified", "other_shared", "other_falsified",
    "own_accuracy", "other_accuracy", "own_unique", "other_unique",
)


@dataclass(frozen=True)
class LaggedState:
    """Previous-round outcomes as seen by one player."""

    own_shared: float = 0.0
    own_falsified: bool = False
    other_shared: float = 0.0
    other_falsified: bool = False
    own_accuracy: bool = False
    other_accuracy: bool = False
    own_unique: float = 0.0
    other_unique: float = 0.0
    first_round: bool = False

    def value(self, name: str) -> float:
        return float(getattr(self, name))


@dataclass(frozen=True)
class EquationWeights:
    intercept: float = 0.0
    weights: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        unknown = set(self.weights) - set(LAG_NAMES)
        if unknown:
            raise ValueError(f"unknown regressors {sorted(unknown)}")


@dataclass(frozen=True)
class ReactionCoefficients:
    share: EquationWeights = field(default_factory=EquationWeights)
    falsify: EquationWeights = field(default_factory=EquationWeights)
    noise_scale: float = 0.0
    trust_prob: float = 1.0
    falsify_base: float = 0.0
    rounding: str = NEAREST

    def __post_init__(self):
        if self.noise_scale < 0:
            raise ValueError("noise_scale must be non-negative")
        for name in ("trust_prob", "falsify_base"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.rounding not in (NEAREST, RANDOMIZED):
            raise ValueError(f"unknown rounding rule {self.rounding!r}")


def linear_predictor(coeffs: EquationWeights, state: LaggedState) -> float:
    total = coeffs.intercept
    for name, w in coeffs.weights.items():
        total += w * state.value(name)
    return total


def falsified_entry(endowment: Endowment, rng: np.random.Generator,
                    convention: str = DECEPTIVE,
                    exclude: Sequence[int] = ()) -> DatabaseEntry:
    """Draw one triple the holder knows to be false.

    ``deceptive`` flips the target of a held entry (slots in ``exclude`` are
    skipped when others remain); ``fabricate`` picks uniformly among the
    triples not held, which may by chance be true.
    """
    if convention == DECEPTIVE:
        slots = [i for i in range(endowment.size) if i not in exclude]
        if not slots:
            slots = list(range(endowment.size))
        i = slots[int(rng.integers(len(slots)))]
        return endowment.entries[i].flipped()
    if convention == FABRICATE:
        held = endowment.unique_entries
        outside = [t for t in ALL_TRIPLES if t not in held]
        return outside[int(rng.integers(len(outside)))]
    raise ValueError(f"unknown falsification convention {convention!r}")


def _to_count(latent: float, rounding: str, rng: np.random.Generator) -> int:
    if rounding == RANDOMIZED:
        base = math.floor(latent)
        return base + int(rng.random() < latent - base)
    return math.floor(latent + 0.5)


class Policy:
    """Base class; subclasses implement the three per-round decisions."""

    def decide_share(self, state: LaggedState, endowment: Endowment,
                     rng: np.random.Generator,
                     convention: str = DECEPTIVE) -> ShareDecision:
        raise NotImplementedError

    def decide_trust(self, received: Sequence[DatabaseEntry],
                     rng: np.random.Generator) -> list[bool]:
        raise NotImplementedError


def _truthful_slots(endowment: Endowment, k: int,
                    rng: np.random.Generator) -> list[int]:
    if k <= 0:
        return []
    return sorted(int(i) for i in rng.choice(endowment.size, size=k,
                                              replace=False))


@dataclass(frozen=True)
class StaticNash(Policy):
    """Always share ``share_n`` true entries; trust all or nothing."""

    share_n: int = 0
    trust: bool = True

    def decide_share(self, state, endowment, rng, convention=DECEPTIVE):
        if not 0 <= self.share_n <= endowment.size:
            raise ValueError(
                f"share_n={self.share_n} outside [0, {endowment.size}]")
        slots = _truthful_slots(endowment, self.share_n, rng)
        return ShareDecision(tuple(endowment.entries[i] for i in slots))

    def decide_trust(self, received, rng):
        return [self.trust] * len(received)


@dataclass(frozen=True)
class UniformRandom(Policy):
    """Count uniform over the feasible range, each receipt trusted w.p. 1/2."""

    def decide_share(self, state, endowment, rng, convention=DECEPTIVE):
        k = int(rng.integers(0, endowment.size + 1))
        slots = _truthful_slots(endowment, k, rng)
        return ShareDecision(tuple(endowment.entries[i] for i in slots))

    def decide_trust(self, received, rng):
        return [bool(rng.random() < 0.5) for _ in received]


@dataclass(frozen=True)
class Conditional(Policy):
    """Reaction-function agent driven by :class:`ReactionCoefficients`."""

    coeffs: ReactionCoefficients = field(default_factory=ReactionCoefficients)

    def share_count(self, state: LaggedState, size: int,
                    rng: np.random.Generator) -> int:
        c = self.coeffs
        latent = linear_predictor(c.share, state)
        if c.noise_scale > 0:
            latent += c.noise_scale * rng.standard_normal()
        return min(max(_to_count(latent, c.rounding, rng), 0), size)

    def falsify_probability(self, state: LaggedState) -> float:
        c = self.coeffs
        p = c.falsify_base + linear_predictor(c.falsify, state)
        return min(max(p, 0.0), 1.0)

    def decide_share(self, state, endowment, rng, convention=DECEPTIVE):
        count = self.share_count(state, endowment.size, rng)
        falsify = rng.random() < self.falsify_probability(state)
        if count == 0:
            return ShareDecision()
        n_true = count - 1 if falsify else count
        slots = _truthful_slots(endowment, n_true, rng)
        shared = [endowment.entries[i] for i in slots]
        if falsify:
            shared.append(falsified_entry(endowment, rng, convention,
                                          exclude=slots))
        return ShareDecision(tuple(shared))

    def decide_trust(self, received, rng):
        p = self.coeffs.trust_prob
        return [bool(rng.random() < p) for _ in received]


def decide_share(policy: Policy, state: LaggedState, endowment: Endowment,
                 rng: np.random.Generator,
                 convention: str = DECEPTIVE) -> ShareDecision:
    return policy.decide_share(state, endowment, rng, convention)


def decide_trust(policy: Policy, received: Sequence[DatabaseEntry],
                 rng: np.random.Generator) -> list[bool]:
    return policy.decide_trust(received, rng)


def _resolve(endowment: Endowment, trusted: Sequence[DatabaseEntry]):
    """Split the four cues into answered and still-open ones."""
    own = endowment.known()
    answers: dict = dict(own)
    conflicts = set()
    heard: dict = {}
    for e in trusted:
        if e.cue in own:
            if e.target != own[e.cue]:
                conflicts.add(e.cue)
        else:
            heard.setdefault(e.cue, set()).add(e.target)
    for cue, ys in heard.items():
        if len(ys) == 1:
            answers[cue] = next(iter(ys))
    open_cues = [c for c in ALL_CUES if c not in answers]
    return answers, open_cues, frozenset(conflicts)


def complete_submission(endowment: Endowment,
                        trusted_received: Sequence[DatabaseEntry],
                        rng: np.random.Generator) -> AccuracySubmission:
    """Fill all four cells: own entries, then agreeing trusted receipts, then
    fair coin flips.  Receipts that contradict the endowment are ignored and
    listed in ``conflicts``; receipts that disagree with each other leave the
    cue open."""
    answers, open_cues, conflicts = _resolve(endowment, trusted_received)
    for cue in open_cues:
        answers[cue] = int(rng.integers(0, 2))
    return AccuracySubmission(answers, conflicts)


def accuracy_probability(endowment: Endowment,
                         trusted_received: Sequence[DatabaseEntry],
                         db: CompleteDatabase) -> Fraction:
    """Exact chance that :func:`complete_submission` is fully correct."""
    answers, open_cues, _ = _resolve(endowment, trusted_received)
    if any(db.targets[c] != y for c, y in answers.items()):
        return Fraction(0)
    return Fraction(1, 2 ** len(open_cues))


def calibrate_intercepts(coeffs: ReactionCoefficients,
                         target_share_mean: float,
                         target_accuracy_mean: float) -> ReactionCoefficients:
    """Set the share intercept so the noiseless symmetric fixed point
    ``m = b + (w_own + w_other) m + (w_own_acc + w_other_acc) a`` sits at the
    target mean share ``m`` when both players are accurate at rate ``a``."""
    w = coeffs.share.weights
    persistence = w.get("own_shared", 0.0) + w.get("other_shared", 0.0)
    if math.isclose(persistence, 1.0, rel_tol=0.0, abs_tol=1e-12):
        raise ValueError("share weights sum to 1; the fixed point is singular")
    acc_weight = w.get("own_accuracy", 0.0) + w.get("other_accuracy", 0.0)
    intercept = (target_share_mean * (1.0 - persistence)
                 - acc_weight * target_accuracy_mean)
    return replace(coeffs, share=replace(coeffs.share, intercept=intercept))


def fixed_point_iteration(coeffs: EquationWeights, start: LaggedState,
                          accuracy: float = 0.0, n_iter: int = 200) -> float:
    """Iterate the noiseless, unrounded symmetric share map."""
    state = start
    m = start.own_shared
    for _ in range(n_iter):
        m = linear_predictor(coeffs, state)
        state = replace(state, own_shared=m, other_shared=m,
                        own_accuracy=accuracy, other_accuracy=accuracy)
    return m


# Slopes quoted for the share equation, by treatment.  Everything not listed
# is zero.  Own_#Shared_Lag in C and D is not quoted.
QUOTED_SHARE_SLOPES: dict[str, dict[str, float]] = {
    "A": {"own_shared": 0.523, "own_falsified": -0.426,
          "other_shared": 0.258, "other_falsified": -0.434},
    "B": {"own_shared": 0.507, "other_shared": 0.231,
          "other_falsified": -0.016, "own_accuracy": 0.142},
    "C": {"other_shared": 0.382},
    "D": {"other_shared": 0.206, "own_accuracy": 0.211},
}

# Means of #Shared per treatment used as calibration targets.
TARGET_SHARE_MEANS: dict[str, float] = {
    "A": 1.616, "B": 1.284, "C": 1.721, "D": 1.140}

# Both-players-share-zero pair-round rates used as calibration targets.
TARGET_BOTH_ZERO: dict[str, float] = {
    "A": 0.034, "B": 0.094, "C": 0.16, "D": 0.35}

# Fitted by calibration.fit_treatment (see docs/examples/calibrate_agents.py).
# These are simulation-calibrated knobs, not estimates from data.
CALIBRATED: dict[str, dict] = {
    "A": dict(intercept=0.150316, noise_scale=0.088827, trust_prob=0.893826,
              falsify_base=0.05,
              falsify_weights={"other_shared": -0.015, "other_falsified": -0.03}),
    "B": dict(intercept=1.539948, noise_scale=3.930010, trust_prob=0.618968,
              falsify_base=0.08, falsify_weights={"other_falsified": 0.20}),
    "C": dict(intercept=0.646672, noise_scale=3.146202, trust_prob=1.0,
              falsify_base=0.02, falsify_weights={}),
    "D": dict(intercept=-0.812820, noise_scale=4.164748, trust_prob=0.600536,
              falsify_base=0.05, falsify_weights={}),
}


def default_coefficients(treatment) -> ReactionCoefficients:
    t = get_treatment(treatment)
    cal = CALIBRATED[t.id]
    return ReactionCoefficients(
        share=EquationWeights(cal["intercept"], dict(QUOTED_SHARE_SLOPES[t.id])),
        falsify=EquationWeights(0.0, dict(cal["falsify_weights"])),
        noise_scale=cal["noise_scale"],
        trust_prob=cal["trust_prob"],
        falsify_base=cal["falsify_base"],
    )


def calibrated_policies() -> dict[str, Conditional]:
    return {t: Conditional(default_coefficients(t)) for t in "ABCD"}


def initial_state(treatment, overrides: Mapping[str, float] | None = None
                  ) -> LaggedState:
    """First-round lags at the stage-game prediction: full sharing and
    accuracy under cooperative incentives, nothing under tournament ones."""
    t = get_treatment(treatment)
    size = t.endowment_size
    shared = float(size) if t.cooperative else 0.0
    unique = float(size) if t.low_info else 3.0
    state = LaggedState(
        own_shared=shared, other_shared=shared,
        own_accuracy=t.cooperative, other_accuracy=t.cooperative,
        own_unique=unique, other_unique=unique, first_round=True)
    if overrides:
        bad = set(overrides) - {f.name for f in fields(LaggedState)}
        if bad:
            raise ValueError(f"unknown lag fields {sorted(bad)}")
        state = replace(state, **overrides)
    return state


def next_state(own_shared: int, own_falsified: bool, own_accuracy: bool,
               own_unique: int, other_shared: int, other_falsified: bool,
               other_accuracy: bool, other_unique: int) -> LaggedState:
    return LaggedState(
        own_shared=float(own_shared), own_falsified=bool(own_falsified),
        other_shared=float(other_shared), other_falsified=bool(other_falsified),
        own_accuracy=bool(own_accuracy), other_accuracy=bool(other_accuracy),
        own_unique=float(own_unique), other_unique=float(other_unique))


def policy_treatment_range(policy: Policy, treatment: TreatmentSpec) -> None:
    """Raise if a static policy cannot act under ``treatment``."""
    if isinstance(policy, StaticNash):
        if not 0 <= policy.share_n <= treatment.endowment_size:
            raise ValueError(
                f"static share {policy.share_n} infeasible in treatment "
                f"{treatment.id}")
