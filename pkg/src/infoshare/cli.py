"""Command-line entry point: ``simulate``, ``equilibrium``, ``analyze``,
``replicate``.

Every command is a pure function of its flags, config and seed.  Outputs are
written through temporary files and renamed into place only after the whole
command succeeded, so a failing run leaves no partial artifacts.  A
``manifest.json`` with SHA-256 digests accompanies every successful run.

Exit codes: 0 success, 1 validation error, 2 runtime error.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import tempfile
from dataclasses import asdict, fields, replace
from pathlib import Path
from typing import Any, Mapping

from . import __version__
from .agents import (
    NEAREST,
    RANDOMIZED,
    Conditional,
    EquationWeights,
    LaggedState,
    StaticNash,
    UniformRandom,
    default_coefficients,
)
from .econometrics import analyze, format_report_text
from .equilibrium import (
    bimatrix_to_json,
    build_bimatrix,
    pareto_and_dominance,
    report_to_json,
)
from .game_core import get_treatment
from .replication import replicate
from .session import (
    SEQUENCES,
    Conventions,
    LogSchemaError,
    SessionConfig,
    SessionLog,
    export_log,
    read_log,
    run_session,
)

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME = 0, 1, 2

CONFIG_KEYS = {"seed", "participants", "sequence", "agents", "conventions",
               "carryover_lags", "initial_lags", "session_id"}
AGENT_KEYS = {"policy", "count", "share", "trust", "coefficients"}
COEFF_KEYS = {"intercept", "weights", "falsify_base", "falsify_weights",
              "noise_scale", "trust_prob", "rounding"}
POLICIES = ("calibrated", "conditional", "static_nash", "uniform_random")


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending key."""


class StageError(RuntimeError):
    """A pipeline stage failed; ``stage`` names it."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage


# --------------------------------------------------------------------------
# config parsing

def _require(cond: bool, key: str, msg: str) -> None:
    if not cond:
        raise ConfigError(f"{key}: {msg}")


def _is_int(x) -> bool:
    return isinstance(x, int) and not isinstance(x, bool)


def _is_num(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool)


def _coefficients(base, spec: Mapping, key: str):
    """Overlay a JSON coefficient block on ``base`` ReactionCoefficients."""
    _require(isinstance(spec, Mapping), key, "must be an object")
    unknown = set(spec) - COEFF_KEYS
    _require(not unknown, f"{key}.{sorted(unknown)[0]}" if unknown else key,
             "unknown coefficient key")
    lag_names = {f.name for f in fields(LaggedState)} - {"first_round"}
    out = base
    for name in ("weights", "falsify_weights"):
        if name in spec:
            w = spec[name]
            _require(isinstance(w, Mapping), f"{key}.{name}", "must be an object")
            for lag, v in w.items():
                _require(lag in lag_names, f"{key}.{name}.{lag}",
                         "unknown lag name")
                _require(_is_num(v), f"{key}.{name}.{lag}", "must be a number")
    share = out.share
    if "intercept" in spec:
        _require(_is_num(spec["intercept"]), f"{key}.intercept",
                 "must be a number")
        share = replace(share, intercept=float(spec["intercept"]))
    if "weights" in spec:
        share = replace(share, weights={**share.weights,
                                        **{k: float(v) for k, v in
                                           spec["weights"].items()}})
    falsify = out.falsify
    if "falsify_weights" in spec:
        falsify = EquationWeights(falsify.intercept, {
            **falsify.weights,
            **{k: float(v) for k, v in spec["falsify_weights"].items()}})
    kw: dict[str, Any] = {"share": share, "falsify": falsify}
    for name, lo, hi in (("noise_scale", 0.0, float("inf")),
                         ("trust_prob", 0.0, 1.0),
                         ("falsify_base", 0.0, 1.0)):
        if name in spec:
            v = spec[name]
            _require(_is_num(v) and lo <= v <= hi, f"{key}.{name}",
                     f"must be a number in [{lo}, {hi}]")
            kw[name] = float(v)
    if "rounding" in spec:
        _require(spec["rounding"] in (NEAREST, RANDOMIZED), f"{key}.rounding",
                 f"must be '{NEAREST}' or '{RANDOMIZED}'")
        kw["rounding"] = spec["rounding"]
    return replace(out, **kw)


def _policy_map(agent: Mapping, key: str) -> dict:
    kind = agent.get("policy", "calibrated")
    _require(kind in POLICIES, f"{key}.policy", f"must be one of {POLICIES}")
    if kind == "static_nash":
        share = agent.get("share", 0)
        _require(_is_int(share) and 0 <= share <= 4, f"{key}.share",
                 "must be an integer in [0, 4]")
        trust = agent.get("trust", True)
        _require(isinstance(trust, bool), f"{key}.trust", "must be a boolean")
        pol = StaticNash(share, trust)
        for t in "ABCD":
            _require(share <= get_treatment(t).endowment_size, f"{key}.share",
                     f"infeasible in treatment {t}")
        return {t: pol for t in "ABCD"}
    if kind == "uniform_random":
        return {t: UniformRandom() for t in "ABCD"}
    spec = agent.get("coefficients", {})
    _require(isinstance(spec, Mapping), f"{key}.coefficients",
             "must be an object")
    per_treatment = bool(spec) and set(spec) <= set("ABCD")
    out = {}
    for t in "ABCD":
        block = spec.get(t, {}) if per_treatment else spec
        sub = f"{key}.coefficients.{t}" if per_treatment else \
            f"{key}.coefficients"
        out[t] = Conditional(_coefficients(default_coefficients(t), block, sub))
    return out


def config_from_dict(cfg: Mapping, workers: int = 1,
                     seed: int | None = None) -> SessionConfig:
    """Validate a JSON config object and build a :class:`SessionConfig`.

    Parameters
    ----------
    cfg : mapping
        Keys: ``seed``, ``participants``, optional ``sequence`` (``"ABCD"`` or
        ``"BADC"``), ``agents`` (list of roster blocks), ``conventions``,
        ``carryover_lags``, ``initial_lags``, ``session_id``.
    workers : int
        Thread count for pair simulation (does not affect output).
    seed : int, optional
        Overrides ``cfg["seed"]``.

    Raises
    ------
    ConfigError
        With the dotted path of the first offending key.
    """
    _require(isinstance(cfg, Mapping), "<root>", "config must be a JSON object")
    unknown = sorted(set(cfg) - CONFIG_KEYS)
    _require(not unknown, unknown[0] if unknown else "", "unknown config key")
    if seed is None:
        _require("seed" in cfg, "seed", "required")
        seed = cfg["seed"]
    _require(_is_int(seed) and seed >= 0, "seed",
             "must be a non-negative integer")
    _require("participants" in cfg, "participants", "required")
    n = cfg["participants"]
    _require(_is_int(n) and n >= 2 and n % 2 == 0, "participants",
             f"must be an even integer >= 2, got {n!r}")
    sequence = cfg.get("sequence", "ABCD")
    _require(sequence in SEQUENCES, "sequence", f"must be one of {SEQUENCES}")
    conv = cfg.get("conventions", {})
    _require(isinstance(conv, Mapping), "conventions", "must be an object")
    bad = sorted(set(conv) - {"falsification", "tie_break"})
    _require(not bad, f"conventions.{bad[0]}" if bad else "", "unknown key")
    try:
        conventions = Conventions(**conv)
    except ValueError as exc:
        key = "conventions.falsification" if "falsification" in str(exc) \
            else "conventions.tie_break"
        raise ConfigError(f"{key}: {exc}") from None
    carry = cfg.get("carryover_lags", False)
    _require(isinstance(carry, bool), "carryover_lags", "must be a boolean")
    lags = cfg.get("initial_lags")
    if lags is not None:
        _require(isinstance(lags, Mapping), "initial_lags", "must be an object")
        names = {f.name for f in fields(LaggedState)} - {"first_round"}
        for k, v in lags.items():
            _require(k in names, f"initial_lags.{k}", "unknown lag name")
            _require(_is_num(v), f"initial_lags.{k}", "must be a number")
    sid = cfg.get("session_id")
    _require(sid is None or isinstance(sid, str), "session_id",
             "must be a string")

    agents = cfg.get("agents", [{"policy": "calibrated", "count": n}])
    _require(isinstance(agents, list) and agents, "agents",
             "must be a non-empty list")
    roster = []
    for i, agent in enumerate(agents):
        key = f"agents[{i}]"
        _require(isinstance(agent, Mapping), key, "must be an object")
        extra = sorted(set(agent) - AGENT_KEYS)
        _require(not extra, f"{key}.{extra[0]}" if extra else key,
                 "unknown agent key")
        count = agent.get("count", 1)
        _require(_is_int(count) and count >= 1, f"{key}.count",
                 "must be a positive integer")
        roster.extend([_policy_map(agent, key)] * count)
    _require(len(roster) == n, "agents",
             f"counts sum to {len(roster)}, expected {n} participants")
    return SessionConfig(seed=seed, n_participants=n, roster=roster,
                         sequence=sequence, conventions=conventions,
                         carryover_lags=carry, initial_lags=lags,
                         session_id=sid, workers=workers)


def resolved_config(cfg: Mapping, config: SessionConfig) -> dict:
    """JSON-safe record of the effective configuration."""
    return {"seed": config.seed, "participants": config.n_participants,
            "sequence": config.sequence,
            "agents": cfg.get("agents",
                              [{"policy": "calibrated",
                                "count": config.n_participants}]),
            "conventions": asdict(config.conventions),
            "carryover_lags": config.carryover_lags,
            "initial_lags": dict(config.initial_lags or {}),
            "session_id": config.resolved_session_id}


# --------------------------------------------------------------------------
# output plumbing

def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


class _Outputs:
    """Stage files in a temp dir next to the target; publish atomically."""

    def __init__(self, out_dir: Path):
        self.out_dir = Path(out_dir)
        try:
            self.out_dir.mkdir(parents=True, exist_ok=True)
            self._tmp = Path(tempfile.mkdtemp(prefix=".staging-",
                                              dir=self.out_dir))
        except OSError as exc:
            raise OSError(f"output directory {self.out_dir} is not writable: "
                          f"{exc.strerror or exc}") from None
        self.names: list[str] = []

    def path(self, name: str) -> Path:
        self.names.append(name)
        return self._tmp / name

    def write_text(self, name: str, text: str) -> Path:
        p = self.path(name)
        p.write_text(text, encoding="utf-8")
        return p

    def digests(self) -> dict:
        return {n: sha256_file(self._tmp / n) for n in self.names}

    def publish(self) -> None:
        for n in self.names:
            os.replace(self._tmp / n, self.out_dir / n)
        self.discard()

    def discard(self) -> None:
        if self._tmp.exists():
            for p in self._tmp.iterdir():
                p.unlink()
            self._tmp.rmdir()


def _manifest(command: str, seed, config: dict, outputs: _Outputs,
              artifacts: dict) -> dict:
    digests = outputs.digests()
    return {"tool": "infoshare", "version": __version__, "command": command,
            "seed": seed, "config": config,
            "artifacts": {role: {"path": name, "sha256": digests[name]}
                          for role, name in artifacts.items()}}


def _emit(obj, fmt: str, text: str | None = None) -> None:
    sys.stdout.write(text if fmt == "text" and text is not None
                     else _dumps(obj))


# --------------------------------------------------------------------------
# commands

def cmd_simulate(args) -> int:
    try:
        with open(args.config, encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"config: cannot read {args.config}: "
                          f"{exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config: invalid JSON ({exc})") from None
    config = config_from_dict(raw, workers=args.workers, seed=args.seed)
    out = _Outputs(args.output)
    try:
        log = run_session(config)
        export_log(log, out.path("log.csv"))
        resolved = resolved_config(raw, config)
        resolved["paid_round"] = log.paid_round
        manifest = _manifest("simulate", config.seed, resolved, out,
                             {"log": "log.csv"})
        out.write_text("manifest.json", _dumps(manifest))
        out.publish()
    finally:
        out.discard()
    summary = {"rows": len(log.records), "paid_round": log.paid_round,
               "log": str(Path(args.output) / "log.csv"),
               "sha256": manifest["artifacts"]["log"]["sha256"]}
    _emit(summary, args.format,
          f"wrote {summary['rows']} rows to {summary['log']} "
          f"(sha256 {summary['sha256'][:12]}…)\n")
    return EXIT_OK


def cmd_equilibrium(args) -> int:
    t = get_treatment(args.treatment)
    if not t.low_info:
        raise ConfigError(
            f"--treatment: {t.id} uses with-replacement endowments; exact "
            "solving is implemented only for partition treatments A and B")
    m = build_bimatrix(t, args.conventions)
    report = pareto_and_dominance(m)
    payload = {"treatment": t.id, "convention": args.conventions,
               "bimatrix": bimatrix_to_json(m),
               "report": report_to_json(report)}
    if args.output:
        path = Path(args.output)
        out = _Outputs(path.parent if str(path.parent) else Path("."))
        try:
            out.write_text(path.name, _dumps(payload))
            manifest = _manifest(
                "equilibrium", None,
                {"treatment": t.id, "convention": args.conventions},
                out, {"bimatrix": path.name})
            out.write_text(path.stem + ".manifest.json", _dumps(manifest))
            out.publish()
        finally:
            out.discard()
    pareto = {tuple(p) for p in payload["report"]["pareto_optimal"]}
    cells = {(c["row_strategy"], c["col_strategy"]): c
             for c in payload["bimatrix"]["cells"]}
    text = [f"treatment {t.id}, {args.conventions} falsification",
            "pure Nash equilibria (row, column, payoffs in cents):"]
    for r, c in payload["report"]["pure_nash"]:
        cell = cells[(r, c)]
        text.append(f"  {r:>12} {c:>12}  {cell['row_payoff']['value']:8.2f} "
                    f"{cell['col_payoff']['value']:8.2f}"
                    f"{'  pareto-optimal' if (r, c) in pareto else ''}")
    prof = payload["report"]["falsification_profitable_against"]
    text.append("falsification profitable against: "
                + (", ".join(prof) if prof else "none"))
    _emit(payload, args.format, "\n".join(text) + "\n")
    return EXIT_OK


def cmd_analyze(args) -> int:
    log = read_log(args.log)
    report = analyze(log)
    if args.report:
        path = Path(args.report)
        out = _Outputs(path.parent if str(path.parent) else Path("."))
        try:
            out.write_text(path.name, _dumps(report))
            manifest = _manifest("analyze", None,
                                 {"log": str(args.log),
                                  "log_sha256": sha256_file(args.log)},
                                 out, {"report": path.name})
            out.write_text(path.stem + ".manifest.json", _dumps(manifest))
            out.publish()
        finally:
            out.discard()
    _emit(report, args.format, format_report_text(report))
    return EXIT_OK


def cmd_replicate(args) -> int:
    out = _Outputs(args.output)
    try:
        try:
            rep = replicate(args.seed, args.sessions, args.participants,
                            args.workers)
        except Exception as exc:  # noqa: BLE001 - reported with stage name
            raise StageError("simulate+analyze", exc) from exc
        try:
            merged = SessionLog([r for lg in rep.logs for r in lg.records])
            export_log(merged, out.path("log.csv"))
            out.write_text("report.json", _dumps(rep.report))
            out.write_text("checklist.json", _dumps(rep.checklist))
            for tid in ("A", "B"):
                m = build_bimatrix(tid)
                out.write_text(f"bimatrix_{tid}.json", _dumps(
                    {"treatment": tid, "bimatrix": bimatrix_to_json(m),
                     "report": report_to_json(pareto_and_dominance(m))}))
        except Exception as exc:  # noqa: BLE001
            raise StageError("export", exc) from exc
        config = {"seed": args.seed, "sessions_per_order": args.sessions,
                  "participants": args.participants,
                  "sequences": list(SEQUENCES),
                  "paid_rounds": [lg.paid_round for lg in rep.logs]}
        manifest = _manifest(
            "replicate", args.seed, config, out,
            {"log": "log.csv", "report": "report.json",
             "checklist": "checklist.json", "bimatrix_A": "bimatrix_A.json",
             "bimatrix_B": "bimatrix_B.json"})
        out.write_text("manifest.json", _dumps(manifest))
        out.publish()
    finally:
        out.discard()
    lines = [f"[{'PASS' if c['pass'] else 'FAIL'}] {c['check']}"
             for c in rep.checklist]
    _emit({"passed": rep.passed, "checklist": rep.checklist}, args.format,
          "\n".join(lines) + "\n")
    return EXIT_OK


# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--format", choices=("json", "text"), default="json",
                        help="stdout format (default json)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(
        prog="infoshare",
        description="Simulate, solve and analyze the two-player "
                    "database-sharing game.")
    p.add_argument("--version", action="version",
                   version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", parents=[common],
                       help="run one session from a JSON config")
    s.add_argument("--config", required=True)
    s.add_argument("--output", "-o", required=True, help="output directory")
    s.add_argument("--seed", type=int, help="override the config seed")
    s.add_argument("--workers", type=int, default=1)
    s.set_defaults(func=cmd_simulate)

    e = sub.add_parser("equilibrium", parents=[common],
                       help="solve the 10x10 stage game exactly")
    e.add_argument("--treatment", required=True, choices=tuple("ABCD"))
    e.add_argument("--conventions", choices=("deceptive", "fabricate"),
                   default="deceptive", help="falsification convention")
    e.add_argument("--output", "-o", help="write JSON here")
    e.add_argument("--seed", type=int, help="accepted for uniformity; unused")
    e.set_defaults(func=cmd_equilibrium)

    a = sub.add_parser("analyze", parents=[common],
                       help="panel regressions and summaries for a log CSV")
    a.add_argument("--log", required=True)
    a.add_argument("--report", "-o", help="write JSON report here")
    a.add_argument("--seed", type=int, help="accepted for uniformity; unused")
    a.set_defaults(func=cmd_analyze)

    r = sub.add_parser("replicate", parents=[common],
                       help="both orders, calibrated roster, checklist")
    r.add_argument("--seed", type=int, default=42)
    r.add_argument("--output", "-o", required=True, help="output directory")
    r.add_argument("--sessions", type=int, default=5,
                   help="sessions per treatment order (default 5)")
    r.add_argument("--participants", type=int, default=100)
    r.add_argument("--workers", type=int, default=1)
    r.set_defaults(func=cmd_replicate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse: bad flag -> validation error
        return EXIT_OK if exc.code == 0 else EXIT_VALIDATION
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, LogSchemaError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001 - last-resort runtime failure
        logger.debug("unhandled", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
