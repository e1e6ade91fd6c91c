"""Simulation-based fitting of the free agent parameters.

The quoted slopes fix the reaction functions up to an intercept, a noise
scale, a trust probability and falsification propensities.  The routines
here search those knobs so one treatment block reproduces target moments:
mean #Shared, the rate of pair-rounds where both players share nothing, and
the individual accuracy rate.
"""
from __future__ import annotations

from dataclasses import replace

import numpy as np
from scipy import optimize

from .agents import Conditional, ReactionCoefficients, initial_state
from .game_core import get_treatment
from .session import Conventions, Pair, Participant, run_treatment


def block_moments(coeffs: ReactionCoefficients, treatment, seeds,
                  n_pairs: int = 50,
                  conventions: Conventions = Conventions()) -> dict:
    """Pool moments over independent blocks of ``n_pairs`` identical agents."""
    t = get_treatment(treatment)
    policy = {t.id: Conditional(coeffs)}
    shared, acc, fals, zero = [], [], [], []
    for seed in seeds:
        pairs = []
        for k in range(n_pairs):
            a = Participant(2 * k + 1, policy, initial_state(t))
            b = Participant(2 * k + 2, policy, initial_state(t))
            pairs.append(Pair(k, a, b))
        recs = run_treatment(pairs, t, seed, 0, conventions)
        s = np.array([r.shared_count for r in recs]).reshape(-1, 2)
        shared.append(s.ravel())
        zero.append((s == 0).all(axis=1))
        acc.append([r.accuracy for r in recs])
        fals.append([r.falsified for r in recs])
    return {"mean_shared": float(np.mean(np.concatenate(shared))),
            "both_zero": float(np.mean(np.concatenate(zero))),
            "accuracy": float(np.mean(np.concatenate(acc))),
            "falsification": float(np.mean(np.concatenate(fals)))}


def with_knobs(coeffs: ReactionCoefficients, intercept=None, noise_scale=None,
               trust_prob=None) -> ReactionCoefficients:
    out = coeffs
    if intercept is not None:
        out = replace(out, share=replace(out.share, intercept=float(intercept)))
    if noise_scale is not None:
        out = replace(out, noise_scale=float(noise_scale))
    if trust_prob is not None:
        out = replace(out, trust_prob=float(trust_prob))
    return out


def fit_intercept(coeffs, treatment, target_mean, seeds, lo=-10.0, hi=10.0,
                  xtol=1e-3) -> float:
    """Root-find the intercept that hits the target mean #Shared."""
    def gap(b):
        m = block_moments(with_knobs(coeffs, intercept=b), treatment, seeds)
        return m["mean_shared"] - target_mean
    return optimize.brentq(gap, lo, hi, xtol=xtol)


def _root_or_edge(f, bounds, xtol):
    """Root of ``f`` in ``bounds``, or the closer endpoint if not bracketed."""
    lo, hi = f(bounds[0]), f(bounds[1])
    if lo * hi < 0:
        return optimize.brentq(f, *bounds, xtol=xtol)
    return bounds[1] if abs(hi) < abs(lo) else bounds[0]


def fit_treatment(coeffs: ReactionCoefficients, treatment, target_mean: float,
                  target_both_zero: float, target_accuracy: float, seeds,
                  noise_bounds=(0.05, 5.0), trust_bounds=(0.3, 1.0),
                  sweeps: int = 3) -> ReactionCoefficients:
    """Coordinate search over (noise, intercept) and trust.

    For each candidate noise scale the intercept is solved to match the mean;
    the noise scale is then root-found on the both-zero rate.  Trust is
    root-found on accuracy last, and the cycle repeats because lagged accuracy
    can feed back into sharing.
    """
    current = coeffs
    for _ in range(sweeps):
        def zero_gap(noise):
            c = with_knobs(current, noise_scale=noise)
            c = with_knobs(c, intercept=fit_intercept(c, treatment,
                                                      target_mean, seeds))
            return block_moments(c, treatment, seeds)["both_zero"] \
                - target_both_zero

        noise = _root_or_edge(zero_gap, noise_bounds, xtol=1e-2)
        current = with_knobs(current, noise_scale=noise)
        current = with_knobs(current, intercept=fit_intercept(
            current, treatment, target_mean, seeds))

        def acc_gap(p):
            c = with_knobs(current, trust_prob=p)
            return block_moments(c, treatment, seeds)["accuracy"] \
                - target_accuracy

        p = _root_or_edge(acc_gap, trust_bounds, xtol=1e-3)
        current = with_knobs(current, trust_prob=p)
    return current
