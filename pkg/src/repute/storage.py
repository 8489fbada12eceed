"""
Rating-log ingestion and reputation snapshot persistence.

Three snapshot modes:

* ``transient``: nothing is written; states live only in memory.
* ``local``: each agency writes ``<root>/<agency>/<as_of>.json``.
* ``global``: all agencies share ``<root>/shared/<as_of>.json``. The first
  writer wins; an identical rewrite is a no-op and a different state under
  the same key raises :class:`SnapshotConflict`.

Writes go to a temporary file in the target directory and are then
renamed (local) or hard-linked (global, so two writers cannot both win).
"""

from __future__ import annotations

import csv
import enum
import io
import json
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable, List, Optional, Tuple, Union

from .core import RatingRecord, ReputationState, validate_record
from .errors import (
    HashMismatch,
    ReputeError,
    SnapshotConflict,
    SnapshotNotFound,
    StorageError,
    UnreadableInput,
)

CSV_COLUMNS = ("kind", "from", "to", "time", "value", "weight", "aspect", "category", "event")


class StoreMode(str, enum.Enum):
    TRANSIENT = "transient"
    LOCAL = "local"
    GLOBAL = "global"


@dataclass(frozen=True)
class SnapshotStore:
    mode: StoreMode = StoreMode.TRANSIENT
    root: Optional[Path] = None

    def __post_init__(self):
        object.__setattr__(self, "mode", StoreMode(self.mode))
        if self.mode is not StoreMode.TRANSIENT:
            if self.root is None:
                raise StorageError(f"{self.mode.value} snapshots need a root directory")
            root = Path(self.root)
            root.mkdir(parents=True, exist_ok=True)
            if not os.access(root, os.W_OK):
                raise StorageError(f"snapshot root {root} is not writable")
            object.__setattr__(self, "root", root)

    def path_for(self, agency: str, as_of: int) -> Path:
        if self.mode is StoreMode.LOCAL:
            return self.root / agency / f"{as_of}.json"
        if self.mode is StoreMode.GLOBAL:
            return self.root / "shared" / f"{as_of}.json"
        raise StorageError("transient store has no paths")


@dataclass(frozen=True)
class SnapshotRef:
    mode: StoreMode
    agency: str
    as_of: int
    hash: str
    path: Optional[Path] = None


def _write_temp(directory: Path, data: str) -> Path:
    directory.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".json")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as f:
            f.write(data)
            f.flush()
            os.fsync(f.fileno())
    except BaseException:
        os.unlink(tmp)
        raise
    return Path(tmp)


def save_snapshot(state: ReputationState, store: SnapshotStore, agency: str) -> SnapshotRef:
    if store.mode is StoreMode.TRANSIENT:
        return SnapshotRef(store.mode, agency, state.as_of, state.hash)

    target = store.path_for(agency, state.as_of)
    tmp = _write_temp(target.parent, state.to_json())
    try:
        if store.mode is StoreMode.LOCAL:
            os.replace(tmp, target)
            return SnapshotRef(store.mode, agency, state.as_of, state.hash, target)
        try:
            os.link(tmp, target)
        except FileExistsError:
            existing = _read_snapshot(target, state.precision)
            if existing.hash != state.hash:
                raise SnapshotConflict(
                    f"global snapshot at as_of={state.as_of} has hash {existing.hash}, "
                    f"agency {agency!r} tried to write {state.hash}"
                ) from None
        return SnapshotRef(store.mode, agency, state.as_of, state.hash, target)
    except OSError as e:
        raise StorageError(f"cannot write snapshot {target}: {e}") from e
    finally:
        if tmp.exists():
            tmp.unlink()


def _read_snapshot(path: Path, precision: int) -> ReputationState:
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise SnapshotNotFound(f"no snapshot at {path}") from None
    except (OSError, UnicodeDecodeError, json.JSONDecodeError) as e:
        raise HashMismatch(f"snapshot {path} is unreadable: {e}") from e
    try:
        state = ReputationState.from_dict(doc, precision=precision)
    except (ReputeError, ValueError, TypeError, AttributeError) as e:
        raise HashMismatch(f"snapshot {path} is corrupt: {e}") from e
    if state.hash != doc.get("hash"):
        raise HashMismatch(f"snapshot {path}: stored hash {doc.get('hash')} != recomputed {state.hash}")
    return state


def load_snapshot(store: SnapshotStore, agency: str, as_of: int, precision: int = 10) -> ReputationState:
    if store.mode is StoreMode.TRANSIENT:
        raise SnapshotNotFound("transient snapshots are never stored")
    return _read_snapshot(store.path_for(agency, as_of), precision)


# -----------------------------------------------------------------------------
# Rating logs
# -----------------------------------------------------------------------------

@dataclass
class IngestReport:
    records: List[RatingRecord] = field(default_factory=list)
    errors: List[Tuple[int, str]] = field(default_factory=list)
    lines: int = 0

    @property
    def ok(self) -> bool:
        return not self.errors


Source = Union[str, os.PathLike, IO[str]]


def _open_text(source: Source) -> Tuple[str, str]:
    if hasattr(source, "read"):
        return source.read(), getattr(source, "name", "<stream>")
    path = Path(source)
    try:
        return path.read_text(encoding="utf-8"), str(path)
    except (OSError, UnicodeDecodeError) as e:
        raise UnreadableInput(f"cannot read rating log {path}: {e}") from e


def _csv_rows(text: str) -> Iterable[Tuple[int, dict]]:
    reader = csv.reader(io.StringIO(text))
    header = None
    for row in reader:
        lineno = reader.line_num
        if not row or all(not c.strip() for c in row):
            continue
        if header is None:
            header = [c.strip() for c in row]
            if tuple(header) != CSV_COLUMNS[: len(header)] or len(header) < 6:
                raise UnreadableInput(f"CSV header must be {','.join(CSV_COLUMNS)}, got {','.join(header)}")
            continue
        if len(row) > len(header):
            yield lineno, {"__error__": f"expected {len(header)} columns, got {len(row)}"}
            continue
        yield lineno, {k: v.strip() for k, v in zip(header, row)}


def ingest(source: Source, fmt: Optional[str] = None) -> IngestReport:
    """Parse and validate a JSONL (default) or CSV rating log.

    Invalid lines are collected with their 1-based line numbers; valid
    records come back sorted by (time, from, to, kind).
    """
    text, name = _open_text(source)
    if fmt is None:
        fmt = "csv" if str(name).lower().endswith(".csv") else "jsonl"
    report = IngestReport()

    if fmt == "csv":
        rows = _csv_rows(text)
    elif fmt == "jsonl":
        def rows():
            for lineno, line in enumerate(text.splitlines(), start=1):
                if not line.strip():
                    continue
                try:
                    doc = json.loads(line)
                except json.JSONDecodeError as e:
                    yield lineno, {"__error__": f"invalid JSON: {e.msg}"}
                    continue
                if not isinstance(doc, dict):
                    yield lineno, {"__error__": "line is not a JSON object"}
                    continue
                yield lineno, doc
        rows = rows()
    else:
        raise UnreadableInput(f"unknown rating log format {fmt!r}")

    for lineno, doc in rows:
        report.lines += 1
        if "__error__" in doc:
            report.errors.append((lineno, doc["__error__"]))
            continue
        try:
            report.records.append(validate_record(doc))
        except ReputeError as e:
            report.errors.append((lineno, f"{type(e).__name__}: {e}"))
    report.records.sort(key=RatingRecord.sort_key)
    return report


def write_ratings(records: Iterable[RatingRecord], path: Union[str, os.PathLike]) -> None:
    Path(path).write_text("".join(r.to_json() + "\n" for r in records), encoding="utf-8")
