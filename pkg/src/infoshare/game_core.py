"""Domain types and single-round mechanics of the information-sharing game.

A complete database maps each of the four binary cue profiles ``(x1, x2)`` to
a binary target.  Each round both players receive an endowment of true
entries, choose which triples to pass to the other player, and are then
scored on whether they reproduce the whole database.

Money is kept in integer cents throughout.
"""
from __future__ import annotations

from dataclasses import dataclass, field, fields
from typing import Mapping, NamedTuple, Sequence

import numpy as np

PARTITION = "partition"
WITH_REPLACEMENT = "with_replacement"
ENDOWMENT_MODES = (PARTITION, WITH_REPLACEMENT)

COOPERATIVE = "cooperative"
TOURNAMENT = "tournament"

TIE_UNIFORM = "uniform"
TIE_PLAYER1 = "player1"


class CueProfile(NamedTuple):
    x1: int
    x2: int

    @property
    def index(self) -> int:
        return 2 * self.x1 + self.x2


ALL_CUES: tuple[CueProfile, ...] = tuple(
    CueProfile(a, b) for a in (0, 1) for b in (0, 1)
)


class DatabaseEntry(NamedTuple):
    cue: CueProfile
    target: int

    def flipped(self) -> "DatabaseEntry":
        return DatabaseEntry(self.cue, 1 - self.target)

    def as_triple(self) -> tuple[int, int, int]:
        return (self.cue.x1, self.cue.x2, self.target)


def entry(x1: int, x2: int, y: int) -> DatabaseEntry:
    """Shorthand constructor for the triple ``(x1, x2, y)``."""
    return DatabaseEntry(CueProfile(int(x1), int(x2)), int(y))


ALL_TRIPLES: tuple[DatabaseEntry, ...] = tuple(
    DatabaseEntry(c, y) for c in ALL_CUES for y in (0, 1)
)


def _as_cue(key) -> CueProfile:
    if isinstance(key, CueProfile):
        return key
    x1, x2 = key
    if x1 not in (0, 1) or x2 not in (0, 1):
        raise ValueError(f"cue profile {key!r} is not binary")
    return CueProfile(int(x1), int(x2))


def _as_binary(value, what: str) -> int:
    if value not in (0, 1):
        raise ValueError(f"{what} must be 0 or 1, got {value!r}")
    return int(value)


@dataclass(frozen=True)
class CompleteDatabase:
    """Ground truth: one target for every cue profile."""

    targets: Mapping[CueProfile, int]

    def __post_init__(self):
        keys = set(self.targets)
        if keys != set(ALL_CUES):
            raise ValueError(
                f"database must cover all 4 cue profiles, got {sorted(keys)}")

    def __getitem__(self, cue) -> int:
        return self.targets[_as_cue(cue)]

    def entries(self) -> tuple[DatabaseEntry, ...]:
        return tuple(DatabaseEntry(c, self.targets[c]) for c in ALL_CUES)

    def as_array(self) -> np.ndarray:
        return np.array([self.targets[c] for c in ALL_CUES], dtype=np.int8)


@dataclass(frozen=True)
class Endowment:
    entries: tuple[DatabaseEntry, ...]
    mode: str

    def __post_init__(self):
        if self.mode not in ENDOWMENT_MODES:
            raise ValueError(f"unknown endowment mode {self.mode!r}")
        want = 2 if self.mode == PARTITION else 4
        if len(self.entries) != want:
            raise ValueError(
                f"{self.mode} endowment must hold {want} entries, "
                f"got {len(self.entries)}")
        seen: dict[CueProfile, int] = {}
        for e in self.entries:
            if seen.setdefault(e.cue, e.target) != e.target:
                raise ValueError(f"endowment contradicts itself on cue {e.cue}")

    @property
    def size(self) -> int:
        return len(self.entries)

    @property
    def unique_entries(self) -> frozenset[DatabaseEntry]:
        return frozenset(self.entries)

    @property
    def unique_count(self) -> int:
        return len(self.unique_entries)

    def known(self) -> dict[CueProfile, int]:
        return {e.cue: e.target for e in self.entries}


@dataclass(frozen=True)
class TreatmentSpec:
    id: str
    incentive: str
    endowment_mode: str
    coop_bonus: int = 1200
    tournament_bonus: int = 2400
    share_cost: int = 100
    rounds: int = 16

    def __post_init__(self):
        if self.incentive not in (COOPERATIVE, TOURNAMENT):
            raise ValueError(f"unknown incentive {self.incentive!r}")
        if self.endowment_mode not in ENDOWMENT_MODES:
            raise ValueError(f"unknown endowment mode {self.endowment_mode!r}")
        for name in ("coop_bonus", "tournament_bonus", "share_cost"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.rounds < 1:
            raise ValueError("rounds must be positive")

    @property
    def endowment_size(self) -> int:
        return 2 if self.endowment_mode == PARTITION else 4

    @property
    def cooperative(self) -> bool:
        return self.incentive == COOPERATIVE

    @property
    def low_info(self) -> bool:
        return self.endowment_mode == PARTITION


TREATMENTS: dict[str, TreatmentSpec] = {
    "A": TreatmentSpec("A", COOPERATIVE, PARTITION),
    "B": TreatmentSpec("B", TOURNAMENT, PARTITION),
    "C": TreatmentSpec("C", COOPERATIVE, WITH_REPLACEMENT),
    "D": TreatmentSpec("D", TOURNAMENT, WITH_REPLACEMENT),
}


def get_treatment(treatment) -> TreatmentSpec:
    if isinstance(treatment, TreatmentSpec):
        return treatment
    try:
        return TREATMENTS[treatment]
    except KeyError:
        raise ValueError(f"unknown treatment {treatment!r}") from None


@dataclass(frozen=True)
class ShareDecision:
    """Triples a player passes on; they need not come from the endowment."""

    shared: tuple[DatabaseEntry, ...] = ()

    @property
    def count(self) -> int:
        return len(self.shared)


@dataclass(frozen=True)
class AccuracySubmission:
    """A guessed target for every cue profile.

    ``conflicts`` lists cues where a trusted received entry disagreed with
    the submitter's own endowment (the endowment answer is kept).
    """

    answers: Mapping[CueProfile, int]
    conflicts: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        if set(self.answers) != set(ALL_CUES):
            raise ValueError("submission must answer all 4 cue profiles")

    def __getitem__(self, cue) -> int:
        return self.answers[_as_cue(cue)]


@dataclass(frozen=True)
class RoundRecord:
    """One player-round.  Field order is the CSV column order."""

    session_id: str
    sequence: str
    treatment: str
    pair_id: int
    round: int
    player_id: int
    endowment_size: int
    unique_count: int
    shared_count: int
    falsified: bool
    distrust_observed: bool
    accuracy: bool
    bonus_cents: int
    cost_cents: int
    net_cents: int

    def __post_init__(self):
        if self.net_cents != self.bonus_cents - self.cost_cents:
            raise ValueError("net must equal bonus minus cost")
        if not 1 <= self.unique_count <= self.endowment_size:
            raise ValueError("unique_count out of range")
        if not 0 <= self.shared_count <= self.endowment_size:
            raise ValueError("shared_count out of range")
        if self.round < 1:
            raise ValueError("round index starts at 1")


RECORD_COLUMNS: tuple[str, ...] = tuple(f.name for f in fields(RoundRecord))


@dataclass(frozen=True)
class Settlement:
    bonus: int
    cost: int

    @property
    def net(self) -> int:
        return self.bonus - self.cost


def build_database(spec=None, rng: np.random.Generator | None = None
                   ) -> CompleteDatabase:
    """Build a database from an explicit mapping or draw one at random.

    ``spec`` may be a mapping from cue to target, or an iterable of
    ``(cue, target)`` pairs / ``(x1, x2, y)`` triples, in which case duplicate
    cues are rejected.  With ``spec=None`` each target is an independent fair
    coin drawn from ``rng``.
    """
    if spec is None:
        if rng is None:
            raise ValueError("random database requires an rng")
        ys = rng.integers(0, 2, size=4)
        return CompleteDatabase({c: int(y) for c, y in zip(ALL_CUES, ys)})

    items = spec.items() if isinstance(spec, Mapping) else spec
    targets: dict[CueProfile, int] = {}
    for item in items:
        if len(item) == 3:
            cue, y = (item[0], item[1]), item[2]
        else:
            cue, y = item
        cue = _as_cue(cue)
        if cue in targets:
            raise ValueError(f"cue profile {tuple(cue)} appears twice")
        targets[cue] = _as_binary(y, "target")
    missing = set(ALL_CUES) - set(targets)
    if missing:
        raise ValueError(
            f"database is missing cue profiles {sorted(map(tuple, missing))}")
    return CompleteDatabase(targets)


def draw_endowments(db: CompleteDatabase, mode: str,
                    rng: np.random.Generator) -> tuple[Endowment, Endowment]:
    true_entries = db.entries()
    if mode == PARTITION:
        order = rng.permutation(4)
        first = sorted(order[:2])
        second = sorted(order[2:])
        return (Endowment(tuple(true_entries[i] for i in first), mode),
                Endowment(tuple(true_entries[i] for i in second), mode))
    if mode == WITH_REPLACEMENT:
        draws = rng.integers(0, 4, size=(2, 4))
        return tuple(
            Endowment(tuple(true_entries[i] for i in row), mode)
            for row in draws)
    raise ValueError(f"unknown endowment mode {mode!r}")


def detect_falsification(endowment: Endowment, decision: ShareDecision) -> bool:
    """True when some shared triple matches none of the endowment entries.

    Judged against what the sharer holds, so a falsified triple may happen
    to be true in the database.
    """
    held = endowment.unique_entries
    return any(e not in held for e in decision.shared)


def evaluate_submission(submission: AccuracySubmission,
                        db: CompleteDatabase) -> bool:
    return all(submission.answers[c] == db.targets[c] for c in ALL_CUES)


def detect_behavioral_distrust(received: Sequence[DatabaseEntry],
                               submission: AccuracySubmission) -> bool:
    return any(submission.answers[e.cue] != e.target for e in received)


def settle_round(treatment: TreatmentSpec, counts: Sequence[int],
                 accuracy: Sequence[bool], rng: np.random.Generator | None = None,
                 tie_break: str = TIE_UNIFORM) -> tuple[Settlement, Settlement]:
    """Pay bonuses and charge sharing costs for both players.

    Under tournament incentives a round where both players are accurate is
    won by a uniformly drawn player (``tie_break="uniform"``, needs ``rng``)
    or always by player 1 (``tie_break="player1"``).
    """
    treatment = get_treatment(treatment)
    size = treatment.endowment_size
    for c in counts:
        if not 0 <= c <= size:
            raise ValueError(f"shared count {c} outside [0, {size}]")
    costs = [treatment.share_cost * int(c) for c in counts]
    acc = [bool(a) for a in accuracy]

    if treatment.cooperative:
        b = treatment.coop_bonus if any(acc) else 0
        bonuses = [b, b]
    else:
        bonuses = [0, 0]
        if acc[0] and acc[1]:
            if tie_break == TIE_PLAYER1:
                winner = 0
            elif tie_break == TIE_UNIFORM:
                if rng is None:
                    raise ValueError("uniform tie-break requires an rng")
                winner = int(rng.integers(0, 2))
            else:
                raise ValueError(f"unknown tie_break {tie_break!r}")
            bonuses[winner] = treatment.tournament_bonus
        elif acc[0]:
            bonuses[0] = treatment.tournament_bonus
        elif acc[1]:
            bonuses[1] = treatment.tournament_bonus
    return tuple(Settlement(b, c) for b, c in zip(bonuses, costs))

