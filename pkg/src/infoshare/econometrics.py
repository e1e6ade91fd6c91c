"""Panel construction, OLS reaction functions and pair-clustered inference.

Per-treatment regressions are run separately; with independent samples this
is the same as a fully interacted pooled model, and cross-treatment
restrictions are tested with Wald statistics built from the two clustered
covariance matrices.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
import pandas as pd
from scipy import linalg, stats

from .game_core import RECORD_COLUMNS, RoundRecord

LAG_LABELS: dict[str, str] = {
    "own_shared": "Own_#Shared_Lag",
    "own_falsified": "Own_Falsified_Lag",
    "other_shared": "Other's_#Shared_Lag",
    "other_falsified": "Other's_Falsified_Lag",
    "own_accuracy": "Own_Accuracy_Lag",
    "other_accuracy": "Other's_Accuracy_Lag",
    "own_unique": "Own_Unique_Lag",
    "other_unique": "Other's_Unique_Lag",
}
OUTCOMES: dict[str, str] = {
    "shared": "Own_#Shared",
    "falsified": "Falsification",
    "accuracy": "Accuracy",
}
_BASE_REGRESSORS = ("own_shared", "own_falsified", "other_shared",
                    "other_falsified", "own_accuracy", "other_accuracy")
CONST = "const"


def default_regressors(treatment_id: str) -> tuple[str, ...]:
    """Lagged own/other sharing, falsification and accuracy; unique-entry
    counts are added for the high-information treatments."""
    if treatment_id in ("C", "D"):
        return _BASE_REGRESSORS + ("own_unique", "other_unique")
    return _BASE_REGRESSORS


class RankDeficientError(ValueError):
    def __init__(self, column: str):
        super().__init__(f"design matrix is rank deficient at column {column!r}")
        self.column = column


def records_frame(records: Sequence[RoundRecord]) -> pd.DataFrame:
    rows = [tuple(getattr(r, c) for c in RECORD_COLUMNS) for r in records]
    df = pd.DataFrame(rows, columns=list(RECORD_COLUMNS))
    for c in ("falsified", "distrust_observed", "accuracy"):
        df[c] = df[c].astype(int)
    return df


def _records(log) -> Sequence[RoundRecord]:
    return log.records if hasattr(log, "records") else log


def _flatten(item) -> list[RoundRecord]:
    """Records from a log, a record list, or a list of logs."""
    if hasattr(item, "records"):
        return list(item.records)
    out: list[RoundRecord] = []
    for x in item:
        if isinstance(x, RoundRecord):
            out.append(x)
        else:
            out.extend(_records(x))
    return out


@dataclass
class PanelDataset:
    """Player-rounds 2..T of one treatment with last round's outcomes."""

    treatment: str
    frame: pd.DataFrame

    @property
    def n_rows(self) -> int:
        return len(self.frame)

    @property
    def clusters(self) -> np.ndarray:
        return self.frame["cluster"].to_numpy()

    @property
    def n_clusters(self) -> int:
        return int(self.frame["cluster"].nunique())

    def outcome(self, name: str) -> np.ndarray:
        return self.frame[name].to_numpy(dtype=float)

    def design(self, regressors: Sequence[str] | None = None
               ) -> tuple[np.ndarray, list[str]]:
        regs = list(regressors or default_regressors(self.treatment))
        lags = self.frame[[f"{r}_lag" for r in regs]].to_numpy(dtype=float)
        X = np.column_stack([np.ones(len(lags)), lags])
        return X, [CONST] + regs


def build_panel(log, treatment: str) -> PanelDataset:
    df = records_frame(_records(log))
    df = df[df["treatment"] == treatment]
    if df.empty:
        raise ValueError(f"log contains no rounds of treatment {treatment!r}")
    keys = ["session_id", "treatment", "pair_id", "round"]
    own = df[keys + ["player_id", "shared_count", "falsified", "accuracy",
                     "unique_count"]]
    partner = own.rename(columns={
        "player_id": "partner_id", "shared_count": "other_shared",
        "falsified": "other_falsified", "accuracy": "other_accuracy",
        "unique_count": "other_unique"})
    merged = own.merge(partner, on=keys)
    merged = merged[merged["player_id"] != merged["partner_id"]]
    merged = merged.rename(columns={
        "shared_count": "own_shared", "falsified": "own_falsified",
        "accuracy": "own_accuracy", "unique_count": "own_unique"})
    if merged.groupby(keys).size().ne(2).any():
        raise ValueError("every pair-round must hold exactly two players")

    merged = merged.sort_values(["session_id", "pair_id", "player_id", "round"])
    by_player = merged.groupby(["session_id", "pair_id", "player_id"], sort=False)
    lagged = by_player[list(LAG_LABELS)].shift(1)
    prev_round = by_player["round"].shift(1)
    merged = merged.assign(**{f"{k}_lag": lagged[k] for k in LAG_LABELS})
    keep = prev_round.notna() & (merged["round"] - prev_round == 1)
    out = merged[keep].copy()
    out["shared"] = out["own_shared"]
    out["falsified"] = out["own_falsified"]
    out["accuracy"] = out["own_accuracy"]
    out["cluster"] = out["session_id"].astype(str) + ":" + \
        out["pair_id"].astype(str)
    out = out.sort_values(["session_id", "pair_id", "round", "player_id"])
    return PanelDataset(treatment, out.reset_index(drop=True))


def ols(X, y, names: Sequence[str] | None = None) -> np.ndarray:
    """Least-squares coefficients via a QR factorisation.

    Raises :class:`RankDeficientError` naming the first column that is a
    linear combination of the ones before it.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, k = X.shape
    if n < k:
        raise ValueError(f"{n} observations for {k} coefficients")
    Q, R = np.linalg.qr(X)
    diag = np.abs(np.diag(R))
    scale = np.linalg.norm(X, axis=0)
    tol = max(n, k) * np.finfo(float).eps * max(scale.max(), 1.0) * 10
    bad = np.flatnonzero(diag <= tol)
    if bad.size:
        j = int(bad[0])
        raise RankDeficientError(names[j] if names else str(j))
    return linalg.solve_triangular(R, Q.T @ y)


def cluster_robust_cov(X, residuals, cluster_ids) -> np.ndarray:
    """CR1 sandwich covariance with the G/(G-1) * (n-1)/(n-k) correction."""
    X = np.asarray(X, dtype=float)
    e = np.asarray(residuals, dtype=float)
    n, k = X.shape
    codes, uniq = pd.factorize(np.asarray(cluster_ids))
    G = len(uniq)
    if G < 2:
        raise ValueError("cluster-robust covariance needs at least 2 clusters")
    scores = np.zeros((G, k))
    np.add.at(scores, codes, X * e[:, None])
    meat = scores.T @ scores
    bread = np.linalg.inv(X.T @ X)
    factor = G / (G - 1) * (n - 1) / (n - k)
    cov = factor * bread @ meat @ bread
    return (cov + cov.T) / 2


@dataclass
class RegressionResult:
    names: list[str]
    params: np.ndarray
    cov: np.ndarray
    n: int
    n_clusters: int
    rss: float
    outcome: str = ""
    treatment: str = ""

    @property
    def bse(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.cov), 0.0, None))

    @property
    def tvalues(self) -> np.ndarray:
        return self.params / self.bse

    @property
    def df_resid(self) -> int:
        return self.n_clusters - 1

    @property
    def pvalues(self) -> np.ndarray:
        return 2 * stats.t.sf(np.abs(self.tvalues), self.df_resid)

    def conf_int(self, alpha: float = 0.05) -> np.ndarray:
        q = stats.t.ppf(1 - alpha / 2, self.df_resid)
        return np.column_stack([self.params - q * self.bse,
                                self.params + q * self.bse])

    def coef(self, name: str) -> float:
        return float(self.params[self.names.index(name)])

    def to_dict(self) -> dict:
        ci = self.conf_int()
        rows = {}
        for i, name in enumerate(self.names):
            label = LAG_LABELS.get(name, name)
            rows[label] = {"coef": float(self.params[i]),
                           "se": float(self.bse[i]),
                           "t": float(self.tvalues[i]),
                           "p": float(self.pvalues[i]),
                           "ci95": [float(ci[i, 0]), float(ci[i, 1])]}
        return {"outcome": OUTCOMES.get(self.outcome, self.outcome),
                "n": self.n, "clusters": self.n_clusters,
                "rss": self.rss, "coefficients": rows}


def fit_reaction(panel: PanelDataset, outcome: str = "shared",
                 regressors: Sequence[str] | None = None) -> RegressionResult:
    X, names = panel.design(regressors)
    y = panel.outcome(outcome)
    b = ols(X, y, [LAG_LABELS.get(n, n) for n in names])
    e = y - X @ b
    cov = cluster_robust_cov(X, e, panel.clusters)
    return RegressionResult(names, b, cov, len(y), panel.n_clusters,
                            float(e @ e), outcome, panel.treatment)


@dataclass(frozen=True)
class WaldResult:
    statistic: float
    df: int
    pvalue: float


def wald_equality(b1, cov1, b2, cov2, index=None) -> WaldResult:
    """Test equal coefficients across two independent regressions.

    ``index`` selects one coefficient (or a list of them); ``None`` tests all.
    """
    b1, b2 = np.atleast_1d(np.asarray(b1, float)), np.atleast_1d(np.asarray(b2, float))
    V = np.asarray(cov1, float) + np.asarray(cov2, float)
    V = np.atleast_2d(V)
    if index is not None:
        idx = np.atleast_1d(index)
        b1, b2 = b1[idx], b2[idx]
        V = V[np.ix_(idx, idx)]
    d = b1 - b2
    if not np.any(d):
        return WaldResult(0.0, len(d), 1.0)
    try:
        stat = float(d @ np.linalg.solve(V, d))
    except np.linalg.LinAlgError:
        raise ValueError("combined covariance is singular") from None
    if np.linalg.matrix_rank(V) < len(d):
        raise ValueError("combined covariance is singular")
    return WaldResult(stat, len(d), float(stats.chi2.sf(stat, len(d))))


def compare_regressions(r1: RegressionResult, r2: RegressionResult,
                        names: Sequence[str] | None = None) -> dict:
    """Per-coefficient and joint equality tests over the shared regressors."""
    common = [n for n in r1.names if n in r2.names]
    if names is not None:
        common = [n for n in common if n in names]
    i1 = [r1.names.index(n) for n in common]
    i2 = [r2.names.index(n) for n in common]
    b1, V1 = r1.params[i1], r1.cov[np.ix_(i1, i1)]
    b2, V2 = r2.params[i2], r2.cov[np.ix_(i2, i2)]
    out = {"coefficients": {}}
    for k, n in enumerate(common):
        w = wald_equality(b1, V1, b2, V2, k)
        out["coefficients"][LAG_LABELS.get(n, n)] = {
            "chi2": w.statistic, "p": w.pvalue}
    w = wald_equality(b1, V1, b2, V2)
    out["joint"] = {"chi2": w.statistic, "df": w.df, "p": w.pvalue}
    return out


def summarize_treatments(log) -> dict:
    """Per-treatment means of #Shared, falsification and accuracy rates,
    and the share of pair-rounds where both players shared nothing."""
    df = records_frame(_records(log))
    out = {}
    for tid, g in df.groupby("treatment", sort=True):
        pair_zero = (g.assign(z=g["shared_count"] == 0)
                     .groupby(["session_id", "pair_id", "round"])["z"].all())
        out[tid] = {"n": int(len(g)),
                    "mean_shared": float(g["shared_count"].mean()),
                    "falsification_rate": float(g["falsified"].mean()),
                    "accuracy_rate": float(g["accuracy"].mean()),
                    "both_zero_rate": float(pair_zero.mean())}
    return out


def order_effect_summary(logs_by_sequence: Mapping[str, Sequence]) -> dict:
    """Mean #Shared per treatment by treatment order, with a pair-clustered
    test that the two order groups share the same mean."""
    frames = []
    for seq in ("ABCD", "BADC"):
        records = _flatten(logs_by_sequence.get(seq, ()))
        if not records:
            raise ValueError(f"order-effect summary needs logs for {seq}")
        f = records_frame(records)
        f["order"] = seq
        frames.append(f)
    df = pd.concat(frames, ignore_index=True)
    out = {}
    for tid, g in df.groupby("treatment", sort=True):
        y = g["shared_count"].to_numpy(float)
        d = (g["order"] == "BADC").to_numpy(float)
        X = np.column_stack([np.ones_like(d), d])
        clusters = (g["order"] + ":" + g["session_id"].astype(str) + ":" +
                    g["pair_id"].astype(str)).to_numpy()
        m0, m1 = y[d == 0].mean(), y[d == 1].mean()
        row = {"mean_ABCD": float(m0), "mean_BADC": float(m1),
               "difference": float(m1 - m0)}
        # With a single dummy, OLS is the difference in group means; using
        # it directly keeps identical groups at an exact zero.
        resid = y - np.where(d == 1, m1, m0)
        if np.any(resid):
            cov = cluster_robust_cov(X, resid, clusters)
            w = wald_equality([m1 - m0], cov[1:, 1:], [0.0], [[0.0]])
            row.update(chi2=w.statistic, p=w.pvalue)
        else:
            row.update(chi2=None, p=None)
        out[tid] = row
    return out


def analyze(log, regressors: Mapping[str, Sequence[str]] | None = None) -> dict:
    """Summary table, reaction functions per treatment and cross-treatment
    tests, in a JSON-ready dict."""
    records = list(_records(log))
    report: dict = {"summary": summarize_treatments(records),
                    "regressions": {}, "wald": {}, "order_effects": None}
    fits: dict[str, dict[str, RegressionResult]] = {}
    for tid in sorted({r.treatment for r in records}):
        panel = build_panel(records, tid)
        regs = (regressors or {}).get(tid)
        report["regressions"][tid] = {}
        fits[tid] = {}
        for outcome in OUTCOMES:
            try:
                res = fit_reaction(panel, outcome, regs)
            except ValueError as exc:
                report["regressions"][tid][OUTCOMES[outcome]] = {
                    "error": str(exc)}
                continue
            fits[tid][outcome] = res
            report["regressions"][tid][OUTCOMES[outcome]] = res.to_dict()
    for a, b in (("A", "B"), ("C", "D")):
        key = f"{a}-{b}"
        if a not in fits or b not in fits:
            report["wald"][key] = {"absent": True}
            continue
        section = {}
        for outcome in OUTCOMES:
            if outcome in fits[a] and outcome in fits[b]:
                try:
                    section[OUTCOMES[outcome]] = compare_regressions(
                        fits[a][outcome], fits[b][outcome])
                except ValueError as exc:
                    section[OUTCOMES[outcome]] = {"error": str(exc)}
            else:
                section[OUTCOMES[outcome]] = {
                    "error": "regression not estimable in both treatments"}
        report["wald"][key] = section
    sequences = {r.sequence for r in records}
    if {"ABCD", "BADC"} <= sequences:
        report["order_effects"] = order_effect_summary({
            s: [r for r in records if r.sequence == s]
            for s in ("ABCD", "BADC")})
    return report


def format_report_text(report: dict) -> str:
    lines = ["Treatment means", "treatment  n      #Shared  falsify  accuracy  both-zero"]
    for tid, row in sorted(report["summary"].items()):
        lines.append(f"{tid:<10} {row['n']:<6} {row['mean_shared']:7.3f}  "
                     f"{row['falsification_rate']:7.3f}  "
                     f"{row['accuracy_rate']:8.3f}  {row['both_zero_rate']:9.3f}")
    for tid, eqs in sorted(report["regressions"].items()):
        for outcome, res in eqs.items():
            lines.append("")
            lines.append(f"Treatment {tid}: {outcome}")
            if "error" in res:
                lines.append(f"  not estimable: {res['error']}")
                continue
            lines.append(f"  n={res['n']} clusters={res['clusters']}")
            for name, c in res["coefficients"].items():
                lines.append(f"  {name:<24} {c['coef']:8.3f}  t={c['t']:7.2f}  "
                             f"p={c['p']:.4f}")
    for key, section in sorted(report["wald"].items()):
        lines.append("")
        if section.get("absent"):
            lines.append(f"Wald {key}: absent")
            continue
        for outcome, res in section.items():
            if "joint" in res:
                j = res["joint"]
                lines.append(f"Wald {key} {outcome}: joint chi2({j['df']})="
                             f"{j['chi2']:.3f} p={j['p']:.4f}")
    if report.get("order_effects"):
        lines.append("")
        lines.append("Order effects (mean #Shared)")
        for tid, row in sorted(report["order_effects"].items()):
            p = "n/a" if row["p"] is None else f"{row['p']:.4f}"
            lines.append(f"  {tid}: ABCD {row['mean_ABCD']:.3f}  "
                         f"BADC {row['mean_BADC']:.3f}  p={p}")
    return "\n".join(lines)
