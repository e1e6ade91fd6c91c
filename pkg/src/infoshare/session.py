"""Session orchestration: pairing, 16-round treatment blocks, payment and logs.

Random streams are derived from ``(seed, block, pair)`` so every pair can run
independently; results are merged in ``(pair_id, round)`` order and do not
depend on how many worker threads were used.
"""
from __future__ import annotations

import csv
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Mapping, NamedTuple, Sequence

import numpy as np

from . import agents
from .agents import DECEPTIVE, FALSIFICATION_CONVENTIONS, LaggedState, Policy
from .game_core import (
    RECORD_COLUMNS,
    TIE_PLAYER1,
    TIE_UNIFORM,
    RoundRecord,
    TreatmentSpec,
    build_database,
    detect_behavioral_distrust,
    detect_falsification,
    draw_endowments,
    evaluate_submission,
    get_treatment,
    settle_round,
)

logger = logging.getLogger(__name__)

SEQUENCES = ("ABCD", "BADC")

_PAIRING_KEY = 0
_PAIR_KEY = 1
_PAYMENT_KEY = 2


@dataclass(frozen=True)
class Conventions:
    falsification: str = DECEPTIVE
    tie_break: str = TIE_UNIFORM

    def __post_init__(self):
        if self.falsification not in FALSIFICATION_CONVENTIONS:
            raise ValueError(
                f"unknown falsification convention {self.falsification!r}")
        if self.tie_break not in (TIE_UNIFORM, TIE_PLAYER1):
            raise ValueError(f"unknown tie_break {self.tie_break!r}")


@dataclass
class Participant:
    """A roster slot: one policy per treatment plus the running lag state."""

    player_id: int
    policies: Mapping[str, Policy]
    state: LaggedState | None = None

    def policy(self, treatment_id: str) -> Policy:
        return self.policies[treatment_id]


def as_policy_map(policy) -> dict[str, Policy]:
    if isinstance(policy, Policy):
        return {t: policy for t in "ABCD"}
    missing = set("ABCD") - set(policy)
    if missing:
        raise ValueError(f"policy map lacks treatments {sorted(missing)}")
    return dict(policy)


@dataclass(frozen=True)
class SessionConfig:
    seed: int
    n_participants: int
    roster: Sequence
    sequence: str = "ABCD"
    conventions: Conventions = field(default_factory=Conventions)
    carryover_lags: bool = False
    initial_lags: Mapping[str, float] | None = None
    session_id: str | None = None
    treatments: Mapping[str, TreatmentSpec] | None = None
    workers: int = 1

    def __post_init__(self):
        if self.n_participants < 2 or self.n_participants % 2:
            raise ValueError(
                f"participants must be an even count >= 2, "
                f"got {self.n_participants}")
        if len(self.roster) != self.n_participants:
            raise ValueError(
                f"roster has {len(self.roster)} entries for "
                f"{self.n_participants} participants")
        if self.sequence not in SEQUENCES:
            raise ValueError(f"sequence must be one of {SEQUENCES}")

    @property
    def resolved_session_id(self) -> str:
        return self.session_id or f"{self.sequence}-{self.seed}"

    def treatment(self, tid: str) -> TreatmentSpec:
        if self.treatments and tid in self.treatments:
            return self.treatments[tid]
        return get_treatment(tid)


@dataclass
class SessionLog:
    records: list[RoundRecord]
    pairings: list[list[tuple[int, int]]] = field(default_factory=list)
    paid_round: int | None = None
    sequence: str | None = None
    session_id: str | None = None

    def payouts(self) -> dict[int, int]:
        """Net cents per participant in the randomly paid round."""
        if self.paid_round is None:
            raise ValueError("log carries no paid round")
        order = _block_order(self.records)
        block, rnd = divmod(self.paid_round - 1, 16)
        tid = order[block]
        return {r.player_id: r.net_cents for r in self.records
                if r.treatment == tid and r.round == rnd + 1}


def _block_order(records: Sequence[RoundRecord]) -> list[str]:
    seen: list[str] = []
    for r in records:
        if r.treatment not in seen:
            seen.append(r.treatment)
    return seen


def make_pairs(participants: Sequence[int], rng: np.random.Generator,
               previous: Sequence[tuple[int, int]] | None = None,
               max_tries: int = 10_000) -> list[tuple[int, int]]:
    """Uniform random perfect matching, avoiding the previous pairing's pairs
    when there are at least four participants."""
    ids = list(participants)
    if len(ids) % 2:
        raise ValueError("pairing needs an even number of participants")
    banned = {frozenset(p) for p in previous} if previous else set()
    if banned and len(ids) == 2:
        logger.warning("only two participants; repeating the previous pair")
        banned = set()
    for _ in range(max_tries):
        perm = rng.permutation(len(ids))
        pairs = [tuple(sorted((ids[perm[k]], ids[perm[k + 1]])))
                 for k in range(0, len(ids), 2)]
        if not any(frozenset(p) in banned for p in pairs):
            return sorted(pairs)
    raise RuntimeError("could not find a pairing without repeats")


class PairStreams(NamedTuple):
    env: np.random.Generator
    first: np.random.Generator
    second: np.random.Generator

    @classmethod
    def from_seed_sequence(cls, ss: np.random.SeedSequence) -> "PairStreams":
        return cls(*(np.random.default_rng(s) for s in ss.spawn(3)))


def pair_streams(seed: int, block: int, pair_id: int) -> PairStreams:
    ss = np.random.SeedSequence(seed, spawn_key=(_PAIR_KEY, block, pair_id))
    return PairStreams.from_seed_sequence(ss)


@dataclass
class Pair:
    pair_id: int
    first: Participant
    second: Participant


def run_round(pair: Pair, treatment, streams: PairStreams, round_index: int,
              conventions: Conventions = Conventions(),
              session_id: str = "", sequence: str = "",
              order: tuple[int, int] = (0, 1)) -> tuple[RoundRecord, RoundRecord]:
    """Play one simultaneous round and advance both players' lag states.

    Both players decide from their pre-round states.  ``order`` only changes
    the evaluation order of the two players; each uses its own stream, so
    the outcome is the same either way.
    """
    treatment = get_treatment(treatment)
    players = (pair.first, pair.second)
    rngs = (streams.first, streams.second)
    db = build_database(rng=streams.env)
    endowments = draw_endowments(db, treatment.endowment_mode, streams.env)

    decisions = [None, None]
    for i in order:
        p = players[i]
        decisions[i] = p.policy(treatment.id).decide_share(
            p.state, endowments[i], rngs[i], conventions.falsification)

    accurate, distrust = [None, None], [None, None]
    for i in order:
        p = players[i]
        received = decisions[1 - i].shared
        flags = p.policy(treatment.id).decide_trust(received, rngs[i])
        trusted = [e for e, ok in zip(received, flags) if ok]
        sub = agents.complete_submission(endowments[i], trusted, rngs[i])
        accurate[i] = evaluate_submission(sub, db)
        distrust[i] = detect_behavioral_distrust(received, sub)

    counts = [d.count for d in decisions]
    falsified = [detect_falsification(e, d)
                 for e, d in zip(endowments, decisions)]
    pay = settle_round(treatment, counts, accurate, streams.env,
                       conventions.tie_break)
    uniques = [e.unique_count for e in endowments]

    records = tuple(
        RoundRecord(
            session_id=session_id, sequence=sequence, treatment=treatment.id,
            pair_id=pair.pair_id, round=round_index,
            player_id=players[i].player_id,
            endowment_size=treatment.endowment_size,
            unique_count=uniques[i], shared_count=counts[i],
            falsified=falsified[i], distrust_observed=distrust[i],
            accuracy=accurate[i], bonus_cents=pay[i].bonus,
            cost_cents=pay[i].cost, net_cents=pay[i].net)
        for i in (0, 1))
    for i in (0, 1):
        j = 1 - i
        players[i].state = agents.next_state(
            counts[i], falsified[i], accurate[i], uniques[i],
            counts[j], falsified[j], accurate[j], uniques[j])
    return records


def _run_pair(pair: Pair, treatment: TreatmentSpec, streams: PairStreams,
              conventions: Conventions, session_id: str,
              sequence: str) -> list[RoundRecord]:
    out = []
    for r in range(1, treatment.rounds + 1):
        out.extend(run_round(pair, treatment, streams, r, conventions,
                             session_id, sequence))
    return out


def run_treatment(pairs: Sequence[Pair], treatment, seed: int, block: int = 0,
                  conventions: Conventions = Conventions(),
                  session_id: str = "", sequence: str = "",
                  workers: int = 1) -> list[RoundRecord]:
    """Play every pair for the treatment's full round count.

    Records come back ordered by pair id, then round, then player.
    """
    treatment = get_treatment(treatment)
    for p in pairs:
        for who in (p.first, p.second):
            if who.state is None:
                raise ValueError(f"participant {who.player_id} has no lag state")
            agents.policy_treatment_range(who.policy(treatment.id), treatment)

    def job(p: Pair):
        return _run_pair(p, treatment, pair_streams(seed, block, p.pair_id),
                         conventions, session_id, sequence)

    ordered = sorted(pairs, key=lambda p: p.pair_id)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(job, ordered))
    else:
        chunks = [job(p) for p in ordered]
    return [rec for chunk in chunks for rec in chunk]


def run_session(config: SessionConfig) -> SessionLog:
    participants = [Participant(i + 1, as_policy_map(pol))
                    for i, pol in enumerate(config.roster)]
    by_id = {p.player_id: p for p in participants}
    sid = config.resolved_session_id
    records: list[RoundRecord] = []
    pairings: list[list[tuple[int, int]]] = []
    previous = None

    for block, tid in enumerate(config.sequence):
        treatment = config.treatment(tid)
        rng = np.random.default_rng(
            np.random.SeedSequence(config.seed, spawn_key=(_PAIRING_KEY, block)))
        pairing = make_pairs(sorted(by_id), rng, previous)
        pairings.append(pairing)
        previous = pairing

        for p in participants:
            if not (config.carryover_lags and p.state is not None):
                p.state = agents.initial_state(treatment, config.initial_lags)
            else:
                p.state = _carry(p.state)
        pairs = [Pair(k, by_id[a], by_id[b]) for k, (a, b) in enumerate(pairing)]
        records.extend(run_treatment(
            pairs, treatment, config.seed, block, config.conventions, sid,
            config.sequence, config.workers))

    total_rounds = sum(config.treatment(t).rounds for t in config.sequence)
    paid = draw_paid_round(config.seed, total_rounds)
    return SessionLog(records, pairings, paid, config.sequence, sid)


def draw_paid_round(seed: int, total_rounds: int = 64) -> int:
    """The session's randomly paid round, uniform over ``1..total_rounds``."""
    rng = np.random.default_rng(
        np.random.SeedSequence(seed, spawn_key=(_PAYMENT_KEY,)))
    return int(rng.integers(1, total_rounds + 1))


def _carry(state: LaggedState) -> LaggedState:
    return replace(state, first_round=True)


def export_log(log: SessionLog | Sequence[RoundRecord], path) -> None:
    records = log.records if isinstance(log, SessionLog) else log
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RECORD_COLUMNS)
        for r in records:
            w.writerow(_row(r))


def _row(r: RoundRecord) -> list:
    out = []
    for name in RECORD_COLUMNS:
        v = getattr(r, name)
        out.append(int(v) if isinstance(v, bool) else v)
    return out


_INT_COLUMNS = {"pair_id", "round", "player_id", "endowment_size",
                "unique_count", "shared_count", "bonus_cents", "cost_cents",
                "net_cents"}
_FLAG_COLUMNS = {"falsified", "distrust_observed", "accuracy"}


class LogSchemaError(ValueError):
    pass


def read_log(path) -> SessionLog:
    """Parse a CSV written by :func:`export_log`."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise LogSchemaError(f"{path}: empty file") from None
        if tuple(header) != RECORD_COLUMNS:
            bad = [h for h in header if h not in RECORD_COLUMNS]
            missing = [c for c in RECORD_COLUMNS if c not in header]
            raise LogSchemaError(
                f"{path}: header mismatch; unexpected columns {bad}, "
                f"missing columns {missing}")
        records = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(RECORD_COLUMNS):
                raise LogSchemaError(
                    f"{path}:{lineno}: expected {len(RECORD_COLUMNS)} fields, "
                    f"got {len(row)}")
            kw = {}
            for name, raw in zip(RECORD_COLUMNS, row):
                try:
                    if name in _FLAG_COLUMNS:
                        if raw not in ("0", "1"):
                            raise ValueError(raw)
                        kw[name] = raw == "1"
                    elif name in _INT_COLUMNS:
                        kw[name] = int(raw)
                    else:
                        kw[name] = raw
                except ValueError:
                    raise LogSchemaError(
                        f"{path}:{lineno}: bad value {raw!r} in column "
                        f"{name!r}") from None
            try:
                records.append(RoundRecord(**kw))
            except ValueError as exc:
                raise LogSchemaError(f"{path}:{lineno}: {exc}") from None
    pairings = []
    for tid in _block_order(records):
        seen = sorted({(r.pair_id, r.player_id) for r in records
                       if r.treatment == tid})
        groups: dict[int, list[int]] = {}
        for pid, player in seen:
            groups.setdefault(pid, []).append(player)
        pairings.append([tuple(v) for _, v in sorted(groups.items())])
    sessions = {r.session_id for r in records}
    sequences = {r.sequence for r in records}
    return SessionLog(
        records, pairings,
        sequence=sequences.pop() if len(sequences) == 1 else None,
        session_id=sessions.pop() if len(sessions) == 1 else None)
