"""
Command-line entry point.

    repute compute       --ratings LOG [--at T]            final state
    repute schedule      --ratings LOG --mode MODE ...     per-window states
    repute simulate      --scenario FILE [--seed N] ...    metrics + artifacts
    repute consensus-sim --script FILE                     round transcript
    repute compare-log   --scenario FILE [--seed N]        linear vs log metrics

Exit codes: 0 success, 1 invalid input or flags, 2 runtime failure. Artifacts
are staged in a temporary directory and only moved into ``--out`` once the
whole command has succeeded, together with ``manifest.json`` listing the
effective config and SHA-256 digests of every input and output.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import shutil
import sys
import tempfile
from pathlib import Path
from typing import Any, Dict, List, Optional

from . import __version__
from .consensus import (
    VALID,
    ConsensusRound,
    MiningLedger,
    StateSubmission,
    credit_miners,
    transcript_jsonl,
)
from .core import EngineConfig, RatingRecord, ReputationState
from .engine import compute_period
from .errors import (
    ConfigError,
    ConsensusError,
    InvalidSpec,
    RecordError,
    ReputeError,
    SnapshotNotFound,
    UnreadableInput,
)
from .scoping import ScopingPolicy, run_schedule
from .simnet import Fault, compare_linear_vs_log, load_scenario, run_scenario
from .storage import SnapshotStore, StoreMode, ingest, save_snapshot

log = logging.getLogger("repute")

DEFAULT_OUT = "out"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


# -----------------------------------------------------------------------------
# Argument parsing
# -----------------------------------------------------------------------------

def _engine_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("engine")
    g.add_argument("--default-reputation", type=float)
    g.add_argument("--floor", dest="rater_weight_floor", type=float, help="rater weight floor")
    g.add_argument("--endorse-blend", type=float)
    g.add_argument("--transact-blend", type=float)
    g.add_argument("--decay-prev", type=float)
    g.add_argument("--decay-new", type=float)
    g.add_argument("--no-evidence", choices=["decay", "hold"])
    g.add_argument("--hash-precision", type=int)
    g.add_argument("--log", dest="use_log_differential", action="store_true", default=None,
                   help="use log-compressed differentials")
    g.add_argument("--linear", dest="use_log_differential", action="store_false")
    g.add_argument("--no-financial-log", dest="financial_log_normalize", action="store_false", default=None)


def _scoping_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("scoping")
    g.add_argument("--mode", help="lifetime | incremental | up_to_date | blocked_incremental")
    g.add_argument("--window", type=int)
    g.add_argument("--block-size", type=int)
    g.add_argument("--half-life", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="repute", description="Reputation engine, consensus and society simulator.")
    parser.add_argument("--version", action="version", version=f"repute {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p):
        p.add_argument("--config", help="JSON or YAML config file")
        p.add_argument("--out", help=f"output directory (default: $REPUTE_OUT or ./{DEFAULT_OUT})")

    p = sub.add_parser("compute", help="compute one period over a rating log")
    common(p)
    p.add_argument("--ratings", required=True)
    p.add_argument("--genesis", help="snapshot JSON to start from")
    p.add_argument("--at", type=int, help="period end (default: last rating time)")
    _engine_flags(p)

    p = sub.add_parser("schedule", help="run a scoped schedule over a rating log")
    common(p)
    p.add_argument("--ratings", required=True)
    p.add_argument("--genesis", help="snapshot JSON to start from")
    p.add_argument("--until", type=int)
    _engine_flags(p)
    _scoping_flags(p)

    for name, help_ in (("simulate", "simulate a scenario with agencies and consensus"),
                        ("compare-log", "compare linear and log differentials on a scenario")):
        p = sub.add_parser(name, help=help_)
        common(p)
        p.add_argument("--scenario", required=True)
        p.add_argument("--seed", type=int)
        p.add_argument("--agencies", type=int)
        _engine_flags(p)
        _scoping_flags(p)
        if name == "simulate":
            p.add_argument("--quorum", type=int)
            p.add_argument("--reward", type=float)
            p.add_argument("--store", choices=[m.value for m in StoreMode])
            p.add_argument("--fault-agency", type=int, action="append", default=[])
            p.add_argument("--fault-delta", type=float, default=1e-6)

    p = sub.add_parser("consensus-sim", help="replay a consensus submission script")
    common(p)
    p.add_argument("--script", required=True)
    return parser


# -----------------------------------------------------------------------------
# Config resolution: defaults < file < flags
# -----------------------------------------------------------------------------

ENGINE_FLAGS = ("default_reputation", "rater_weight_floor", "endorse_blend", "transact_blend",
                "decay_prev", "decay_new", "no_evidence", "hash_precision",
                "use_log_differential", "financial_log_normalize")


def _read_structured(path: str) -> Any:
    p = Path(path)
    if not p.is_file():
        raise UnreadableInput(f"no such file: {path}")
    text = p.read_text(encoding="utf-8")
    try:
        if p.suffix.lower() in (".yaml", ".yml"):
            import yaml

            return yaml.safe_load(text)
        return json.loads(text)
    except Exception as e:
        raise ConfigError(f"cannot parse {path}: {e}") from e


def resolve_config(args) -> Dict[str, Any]:
    doc = _read_structured(args.config) if getattr(args, "config", None) else {}
    if not isinstance(doc, dict):
        raise ConfigError("config file must hold a mapping")
    unknown = set(doc) - {"engine", "scoping", "simulation"}
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    engine = dict(doc.get("engine") or {})
    for key in ENGINE_FLAGS:
        v = getattr(args, key, None)
        if v is not None:
            engine[key] = v
    scoping = dict(doc.get("scoping") or {})
    for flag, key in (("mode", "mode"), ("window", "window"), ("block_size", "block_size"),
                      ("half_life", "half_life")):
        v = getattr(args, flag, None)
        if v is not None:
            scoping[key] = v
    simulation = dict(doc.get("simulation") or {})
    for key in ("agencies", "quorum", "reward", "store"):
        v = getattr(args, key, None)
        if v is not None:
            simulation[key] = v
    return {
        "engine": EngineConfig.from_dict(engine),
        "scoping": ScopingPolicy.from_dict(scoping),
        "simulation": simulation,
    }


# -----------------------------------------------------------------------------
# Staging and manifest
# -----------------------------------------------------------------------------

def _sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


class Artifacts:
    def __init__(self, out: Path):
        self.out = out
        self.out.parent.mkdir(parents=True, exist_ok=True)
        self.stage = Path(tempfile.mkdtemp(prefix=".repute-", dir=self.out.parent))

    def write(self, name: str, text: str) -> Path:
        path = self.stage / name
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
        return path

    def write_json(self, name: str, doc: Any) -> Path:
        return self.write(name, json.dumps(doc, indent=2, sort_keys=True, ensure_ascii=False) + "\n")

    def finish(self, command: str, config: Dict[str, Any], inputs: Dict[str, Path]) -> Path:
        outputs = {
            p.relative_to(self.stage).as_posix(): _sha256_file(p)
            for p in sorted(self.stage.rglob("*"))
            if p.is_file()
        }
        manifest = {
            "tool": f"repute {__version__}",
            "command": command,
            "config": config,
            "inputs": {k: _sha256_file(v) for k, v in sorted(inputs.items())},
            "outputs": outputs,
        }
        self.write_json("manifest.json", manifest)
        self.out.mkdir(parents=True, exist_ok=True)
        for p in sorted(self.stage.rglob("*")):
            if p.is_file():
                dest = self.out / p.relative_to(self.stage)
                dest.parent.mkdir(parents=True, exist_ok=True)
                os.replace(p, dest)
        shutil.rmtree(self.stage, ignore_errors=True)
        return self.out / "manifest.json"

    def abort(self) -> None:
        shutil.rmtree(self.stage, ignore_errors=True)


def _out_dir(args) -> Path:
    return Path(args.out or os.environ.get("REPUTE_OUT") or DEFAULT_OUT)


def _config_doc(cfg: Dict[str, Any], **extra) -> Dict[str, Any]:
    doc = {"engine": cfg["engine"].to_dict(), "scoping": cfg["scoping"].to_dict()}
    if cfg["simulation"]:
        doc["simulation"] = dict(sorted(cfg["simulation"].items()))
    doc.update(extra)
    return doc


def _load_ratings(path: str) -> tuple:
    if not Path(path).is_file():
        raise UnreadableInput(f"no such file: {path}")
    report = ingest(path)
    for lineno, err in report.errors:
        print(f"{path}:{lineno}: {err}", file=sys.stderr)
    return report.records, report


def _load_genesis(path: Optional[str], precision: int) -> ReputationState:
    if not path:
        return ReputationState.genesis(0, precision=precision)
    doc = _read_structured(path)
    try:
        return ReputationState.from_dict(doc, precision=precision)
    except (ReputeError, ValueError, TypeError) as e:
        raise ConfigError(f"bad genesis snapshot {path}: {e}") from e


def _ingest_doc(report) -> dict:
    return {"lines": report.lines, "records": len(report.records),
            "errors": [{"line": n, "error": e} for n, e in report.errors]}


# -----------------------------------------------------------------------------
# Commands
# -----------------------------------------------------------------------------

def cmd_compute(args, cfg, art: Artifacts) -> Dict[str, Path]:
    config = cfg["engine"]
    genesis = _load_genesis(args.genesis, config.hash_precision)
    records, report = _load_ratings(args.ratings)
    t_n = args.at if args.at is not None else max((r.time for r in records), default=genesis.as_of + 1)
    state, result = compute_period(records, genesis, t_n, config, fine_grained=True)
    art.write("state.json", state.to_json())
    fine = {k: [[list(key), v] for key, v in sorted(m.items())] for k, m in (result.fine_grained or {}).items()}
    art.write_json("report.json", {
        "ingest": _ingest_doc(report),
        "differential": {
            "endorse": result.endorse,
            "transact": result.transact,
            "blended": result.per_member,
            "normalized": result.normalized,
            "fine_grained": fine,
        },
        "skipped": [{"component": s.component, "key": list(s.key), "reason": s.reason} for s in result.skipped],
    })
    inputs = {"ratings": Path(args.ratings)}
    if args.genesis:
        inputs["genesis"] = Path(args.genesis)
    return inputs


def cmd_schedule(args, cfg, art: Artifacts) -> Dict[str, Path]:
    config, policy = cfg["engine"], cfg["scoping"]
    genesis = _load_genesis(args.genesis, config.hash_precision)
    records, report = _load_ratings(args.ratings)
    res = run_schedule(records, policy, config, genesis=genesis, until=args.until)
    art.write("states.jsonl", "".join(
        json.dumps(s.to_dict(), sort_keys=True, separators=(",", ":")) + "\n" for s in res.states))
    art.write("state.json", res.final.to_json())
    art.write_json("report.json", {"ingest": _ingest_doc(report), "windows": len(res.windows)})
    inputs = {"ratings": Path(args.ratings)}
    if args.genesis:
        inputs["genesis"] = Path(args.genesis)
    return inputs


def _scenario(args):
    spec = load_scenario(args.scenario)
    if args.seed is not None:
        spec = spec.with_seed(args.seed)
    return spec


def cmd_simulate(args, cfg, art: Artifacts) -> Dict[str, Path]:
    spec = _scenario(args)
    sim = cfg["simulation"]
    store_mode = StoreMode(sim.get("store", "transient"))
    store = None
    if store_mode is not StoreMode.TRANSIENT:
        store = SnapshotStore(store_mode, art.stage / "snapshots")
    faults = [Fault(k, args.fault_delta) for k in args.fault_agency]
    res = run_scenario(
        spec, cfg["scoping"], cfg["engine"],
        agencies=int(sim.get("agencies", 3)),
        quorum=sim.get("quorum"),
        faults=faults,
        reward=float(sim.get("reward", 1.0)),
        store=store,
    )
    art.write("ratings.jsonl", "".join(r.to_json() + "\n" for r in res.ratings))
    art.write("transcript.jsonl", transcript_jsonl(res.transcript_events()))
    art.write("state.json", res.final_state.to_json())
    art.write_json("metrics.json", {**res.report.to_dict(),
                                    "ledger": dict(sorted(res.ledger.balances.items()))})
    art.write("trajectories.csv", res.report.trajectories_csv())
    art.write_json("scenario.json", spec.to_dict())
    return {"scenario": Path(args.scenario)}


def cmd_compare_log(args, cfg, art: Artifacts) -> Dict[str, Path]:
    spec = _scenario(args)
    agencies = int(cfg["simulation"].get("agencies", 1))
    linear, logged = compare_linear_vs_log(spec, cfg["engine"], cfg["scoping"], agencies=agencies)
    art.write_json("compare.json", {
        "linear": linear.to_dict(),
        "log": logged.to_dict(),
        "entropy_gain": logged.entropy - linear.entropy,
        "gini_change": logged.gini - linear.gini,
    })
    art.write("trajectories_linear.csv", linear.trajectories_csv())
    art.write("trajectories_log.csv", logged.trajectories_csv())
    return {"scenario": Path(args.scenario)}


def _round_from_script(doc: dict, n: int) -> ConsensusRound:
    try:
        return ConsensusRound(
            round=int(doc.get("round", n)),
            quorum_min=int(doc["quorum_min"]),
            submissions_max=int(doc["submissions_max"]),
            deadline=int(doc["deadline"]),
            quorum_mass=doc.get("quorum_mass"),
        )
    except KeyError as e:
        raise ConfigError(f"round {n}: missing key {e.args[0]!r}") from None
    except (TypeError, ValueError) as e:
        raise ConfigError(f"round {n}: {e}") from None


def cmd_consensus_sim(args, cfg, art: Artifacts) -> Dict[str, Path]:
    """Replay rounds of the form::

        {"reward": 3.0, "rounds": [{"quorum_min": 3, "submissions_max": 5, "deadline": 10,
          "reputations": {...}?, "submissions": [{"agency": "a", "hash": "A", "at": 1}],
          "expire_at": 11?}]}
    """
    doc = _read_structured(args.script)
    if isinstance(doc, dict) and "rounds" not in doc:
        doc = {"rounds": [doc]}
    if not isinstance(doc, dict) or not isinstance(doc.get("rounds"), list):
        raise ConfigError("consensus script must hold a 'rounds' list")
    reward = float(doc.get("reward", 1.0))
    rounds = [_round_from_script(r, n) for n, r in enumerate(doc["rounds"])]

    ledger = MiningLedger()
    events: List[dict] = []
    verdicts = []
    for rnd, rdoc in zip(rounds, doc["rounds"]):
        reps = rdoc.get("reputations")
        for sub in rdoc.get("submissions", []):
            try:
                s = StateSubmission(str(sub["agency"]), rnd.round, str(sub["hash"]), int(sub["at"]))
            except KeyError as e:
                raise ConfigError(f"submission missing key {e.args[0]!r}") from None
            try:
                if reps is None:
                    rnd.submit(s)
                else:
                    rnd.submit_weighted(s, reps)
            except ConsensusError as e:
                rnd.events.append({"event": "rejected", **s.to_dict(), "reason": f"{type(e).__name__}: {e}"})
        if "expire_at" in rdoc and not rnd.closed:
            rnd.expire(int(rdoc["expire_at"]))
        events.extend(rnd.events)
        if rnd.verdict == VALID:
            before = len(ledger.events)
            ledger = credit_miners(rnd, ledger, reward)
            events.extend(ledger.events[before:])
        verdicts.append({"round": rnd.round, "verdict": rnd.verdict, "hash": rnd.valid_hash,
                         "disputed": rnd.disputed,
                         "warnings": [w.to_dict() for w in rnd.warnings]})
    art.write("transcript.jsonl", transcript_jsonl(events))
    art.write_json("verdicts.json", {"rounds": verdicts, "ledger": dict(sorted(ledger.balances.items()))})
    return {"script": Path(args.script)}


COMMANDS = {
    "compute": cmd_compute,
    "schedule": cmd_schedule,
    "simulate": cmd_simulate,
    "compare-log": cmd_compare_log,
    "consensus-sim": cmd_consensus_sim,
}

VALIDATION_ERRORS = (UsageError, ConfigError, InvalidSpec, RecordError, UnreadableInput, SnapshotNotFound)


def run(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(f"repute: error: {e}", file=sys.stderr)
        return 1
    except SystemExit as e:  # --help / --version
        return int(e.code or 0)

    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    art = None
    try:
        cfg = resolve_config(args)
        for key in ("ratings", "scenario", "script"):
            path = getattr(args, key, None)
            if path is not None and not Path(path).is_file():
                raise UnreadableInput(f"no such file: {path}")
        art = Artifacts(_out_dir(args))
        inputs = COMMANDS[args.command](args, cfg, art)
        if args.config:
            inputs["config"] = Path(args.config)
        art.finish(args.command, _config_doc(cfg), inputs)
        return 0
    except VALIDATION_ERRORS as e:
        if art is not None:
            art.abort()
        print(f"repute: error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1
    except (ReputeError, OSError, ValueError) as e:
        if art is not None:
            art.abort()
        print(f"repute: runtime error: {type(e).__name__}: {e}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
