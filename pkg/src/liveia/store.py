"""Durable scenario persistence with timeline and similarity queries.

On-disk layout, byte-exact:

  scenarios.log   append-only record stream. Each record is a 4-byte
                  big-endian unsigned length N followed by exactly N
                  bytes of canonical JSON (sorted keys, no spaces,
                  9-significant-digit floats, ASCII). Put records are
                  {"digest": <sha256 hex of link-free content>,
                   "doc": <scenario document with links>, "op": "put"};
                  delete records are {"id": <id>, "op": "delete"}.
                  A record is acknowledged only after fsync, so replay
                  after a crash recovers every acknowledged write; a
                  torn tail (partial record) is discarded.

  scenarios.idx   cache of the in-memory index, canonical JSON
                  {"log_size": <bytes indexed>, "entries": {...}}.
                  Advisory only: if missing or out of step with the log
                  it is rebuilt by a full scan.

Writes are serialized behind one lock; readers work from immutable
snapshots of parsed records.
"""

from __future__ import annotations

import json
import math
import os
import struct
import threading
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ContractError, ForkedEditError, NotFoundError, SerializationError
from .scenes import (
    Scenario,
    canonical_json,
    content_digest,
    scenario_from_doc,
    scenario_to_doc,
    serialize,
)

_LEN = struct.Struct(">I")

LOG_NAME = "scenarios.log"
INDEX_NAME = "scenarios.idx"

FEATURE_NAMES = (
    "sphere_count",
    "mean_radius",
    "mean_light_level",
    "mean_shell_thickness",
    "mean_shell_opacity",
    "fractures_per_sphere",
    "bubbles_per_sphere",
    "mean_border_blur",
    "beam_count",
    "mean_beam_spread",
    "mean_origin_depth",
    "spark_count",
)


def feature_vector(s: Scenario) -> tuple[float, ...]:
    """Twelve summary statistics; the zero vector for an empty scenario."""

    def mean(values):
        values = list(values)
        return sum(values) / len(values) if values else 0.0

    spheres = s.spheres
    beams = s.beams
    vec = (
        float(len(spheres)),
        mean(sp.radius for sp in spheres),
        mean(sp.light_level for sp in spheres),
        mean((sp.shell.thickness if sp.shell else 0.0) for sp in spheres),
        mean((sp.shell.opacity if sp.shell else 0.0) for sp in spheres),
        (sum(len(sp.fractures) for sp in spheres) / len(spheres)) if spheres else 0.0,
        (sum(len(sp.bubbles) for sp in spheres) / len(spheres)) if spheres else 0.0,
        mean(sp.border_blur for sp in spheres),
        float(len(beams)),
        mean(b.spread for b in beams),
        mean(b.origin_depth for b in beams),
        float(len(s.sparks)),
    )
    if not all(math.isfinite(v) for v in vec):
        raise SerializationError("non-finite feature vector", code="MALFORMED")
    return vec


def cosine(u, v) -> float:
    dot = sum(a * b for a, b in zip(u, v))
    nu = math.sqrt(sum(a * a for a in u))
    nv = math.sqrt(sum(b * b for b in v))
    if nu == 0.0 or nv == 0.0:
        return 0.0
    return max(-1.0, min(1.0, dot / (nu * nv)))


@dataclass(frozen=True)
class ScenarioRecord:
    document: dict
    digest: str
    feature_vector: tuple[float, ...]


@dataclass
class TimelineNode:
    id: str
    title: str
    created_at: str
    children: list["TimelineNode"] = field(default_factory=list)


@dataclass(frozen=True)
class Suggestion:
    neighbor_id: str
    score: float
    steps: tuple[tuple[str, str], ...]  # (id, title) along the unfolding


@dataclass
class _Entry:
    offset: int
    length: int
    digest: str
    parent: str | None
    children: tuple[str, ...]
    created_at: str
    title: str
    features: tuple[float, ...]
    deleted: bool = False


class ScenarioStore:
    """Single-process store over one append-only log file."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._log_path = self.root / LOG_NAME
        self._idx_path = self.root / INDEX_NAME
        self._lock = threading.RLock()
        self._entries: dict[str, _Entry] = {}
        self._log_end = 0
        self._replay()
        self._log = open(self._log_path, "ab")
        if self._log.tell() != self._log_end:
            # torn tail from a crash: drop the garbage
            self._log.truncate(self._log_end)

    # -- lifecycle ---------------------------------------------------------

    def close(self) -> None:
        with self._lock:
            if self._log is not None:
                self._write_index()
                self._log.close()
                self._log = None

    def __enter__(self) -> "ScenarioStore":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    # -- write path --------------------------------------------------------

    def put(self, s: Scenario) -> str:
        serialize(s)  # full validation up front
        digest = content_digest(s)
        doc = scenario_to_doc(s)
        with self._lock:
            prior = self._entries.get(s.id)
            if prior is not None and not prior.deleted and prior.digest != digest:
                if self._is_forked(s.id):
                    raise ForkedEditError(
                        f"scenario {s.id!r} has forks and its content is frozen"
                    )
            self._append({"digest": digest, "doc": doc, "op": "put"})
            self._entries[s.id] = self._entry_from(doc, digest)
            self._write_index()
        return digest

    def delete(self, scenario_id: str) -> None:
        with self._lock:
            entry = self._entries.get(scenario_id)
            if entry is None or entry.deleted:
                raise NotFoundError(f"no scenario {scenario_id!r}")
            self._append({"id": scenario_id, "op": "delete"})
            entry.deleted = True
            self._write_index()

    # -- read path ---------------------------------------------------------

    def ids(self) -> list[str]:
        with self._lock:
            return sorted(k for k, e in self._entries.items() if not e.deleted)

    def get(self, scenario_id: str) -> Scenario:
        doc = self._live_doc(scenario_id)
        return scenario_from_doc(doc)

    def get_bytes(self, scenario_id: str) -> bytes:
        doc = self._live_doc(scenario_id)
        return canonical_json({"scenario": doc, "schema_version": 1})

    def get_record(self, scenario_id: str) -> ScenarioRecord:
        with self._lock:
            entry = self._require(scenario_id)
            doc = self._read_doc(entry)
        return ScenarioRecord(document=doc, digest=entry.digest, feature_vector=entry.features)

    def digest_of(self, scenario_id: str) -> str:
        with self._lock:
            return self._require(scenario_id).digest

    # -- timeline ----------------------------------------------------------

    def timeline(self, root_id: str) -> TimelineNode:
        with self._lock:
            self._require(root_id)
            kids: dict[str, list[str]] = {}
            for sid, e in self._entries.items():
                if e.deleted or e.parent is None:
                    continue
                kids.setdefault(e.parent, []).append(sid)

            def build(sid: str) -> TimelineNode:
                e = self._entries[sid]
                node = TimelineNode(id=sid, title=e.title, created_at=e.created_at)
                ordered = sorted(
                    kids.get(sid, ()),
                    key=lambda c: (self._entries[c].created_at, c),
                )
                node.children = [build(c) for c in ordered]
                return node

            return build(root_id)

    # -- similarity --------------------------------------------------------

    def similar(self, scenario_id: str, k: int) -> list[tuple[str, float]]:
        if k < 1:
            raise ContractError("k must be >= 1")
        with self._lock:
            me = self._require(scenario_id)
            lineage = self._lineage(scenario_id)
            scored = []
            for sid, e in self._entries.items():
                if e.deleted or sid == scenario_id or sid in lineage:
                    continue
                scored.append((sid, cosine(me.features, e.features)))
        scored.sort(key=lambda item: (-item[1], item[0]))
        return scored[:k]

    def suggest(self, scenario_id: str, k: int) -> list[Suggestion]:
        neighbors = self.similar(scenario_id, k)
        out = []
        with self._lock:
            for sid, score in neighbors:
                steps = []
                cur = sid
                while True:
                    nxt = self._earliest_child(cur)
                    if nxt is None:
                        break
                    e = self._entries[nxt]
                    steps.append((nxt, e.title))
                    cur = nxt
                out.append(Suggestion(neighbor_id=sid, score=score, steps=tuple(steps)))
        return out

    # -- internals ---------------------------------------------------------

    def _require(self, scenario_id: str) -> _Entry:
        entry = self._entries.get(scenario_id)
        if entry is None or entry.deleted:
            raise NotFoundError(f"no scenario {scenario_id!r}")
        return entry

    def _live_doc(self, scenario_id: str) -> dict:
        with self._lock:
            entry = self._require(scenario_id)
            return self._read_doc(entry)

    def _is_forked(self, scenario_id: str) -> bool:
        entry = self._entries[scenario_id]
        if entry.children:
            return True
        return any(
            e.parent == scenario_id for sid, e in self._entries.items() if sid != scenario_id
        )

    def _lineage(self, scenario_id: str) -> set[str]:
        """Ancestors and descendants, walked through tombstones."""
        out: set[str] = set()
        cur = self._entries[scenario_id].parent
        while cur is not None and cur in self._entries and cur not in out:
            out.add(cur)
            cur = self._entries[cur].parent
        frontier = [scenario_id]
        while frontier:
            nid = frontier.pop()
            for sid, e in self._entries.items():
                if e.parent == nid and sid not in out and sid != scenario_id:
                    out.add(sid)
                    frontier.append(sid)
        return out

    def _earliest_child(self, scenario_id: str) -> str | None:
        best = None
        for sid, e in self._entries.items():
            if e.deleted or e.parent != scenario_id:
                continue
            if best is None or (e.created_at, sid) < (self._entries[best].created_at, best):
                best = sid
        return best

    def _entry_from(self, doc: dict, digest: str, offset: int | None = None, length: int | None = None) -> _Entry:
        if offset is None:
            offset = self._last_offset
            length = self._last_length
        s = scenario_from_doc(doc)
        return _Entry(
            offset=offset,
            length=length,
            digest=digest,
            parent=doc.get("parent"),
            children=tuple(doc.get("children", ())),
            created_at=doc["created_at"],
            title=doc["title"],
            features=feature_vector(s),
        )

    def _append(self, envelope: dict) -> None:
        payload = canonical_json(envelope)
        record = _LEN.pack(len(payload)) + payload
        self._last_offset = self._log_end + _LEN.size
        self._last_length = len(payload)
        self._log.write(record)
        self._log.flush()
        os.fsync(self._log.fileno())
        self._log_end += len(record)

    def _read_doc(self, entry: _Entry) -> dict:
        with open(self._log_path, "rb") as fh:
            fh.seek(entry.offset)
            payload = fh.read(entry.length)
        if len(payload) != entry.length:
            raise SerializationError("log record out of reach", code="CORRUPT")
        envelope = _parse_envelope(payload)
        if envelope.get("op") != "put":
            raise SerializationError("index points at a non-put record", code="CORRUPT")
        doc = envelope["doc"]
        got = content_digest(scenario_from_doc(doc))
        if got != entry.digest:
            raise SerializationError("stored content does not match its digest", code="CORRUPT")
        return doc

    def _replay(self) -> None:
        self._entries.clear()
        self._log_end = 0
        if not self._log_path.exists():
            self._write_index()
            return
        size = self._log_path.stat().st_size
        if self._load_index(size):
            return
        with open(self._log_path, "rb") as fh:
            while True:
                head = fh.read(_LEN.size)
                if len(head) < _LEN.size:
                    break
                (n,) = _LEN.unpack(head)
                payload = fh.read(n)
                if len(payload) < n:
                    break  # torn tail: the write was never acknowledged
                offset = self._log_end + _LEN.size
                try:
                    envelope = _parse_envelope(payload)
                    if envelope.get("op") == "put":
                        doc = envelope["doc"]
                        digest = envelope["digest"]
                        self._entries[doc["id"]] = self._entry_from(
                            doc, digest, offset=offset, length=n
                        )
                    elif envelope.get("op") == "delete":
                        entry = self._entries.get(envelope["id"])
                        if entry is not None:
                            entry.deleted = True
                except (SerializationError, KeyError, TypeError) as exc:
                    raise SerializationError(
                        f"log record at byte {offset - _LEN.size} is unreadable: {exc}",
                        code="CORRUPT",
                    ) from exc
                self._log_end += _LEN.size + n
        self._write_index()

    # the index file is a pure cache: trusted only when it covers exactly
    # the bytes currently in the log

    def _write_index(self) -> None:
        entries = {}
        for sid, e in self._entries.items():
            entries[sid] = {
                "children": list(e.children),
                "created_at": e.created_at,
                "deleted": e.deleted,
                "digest": e.digest,
                "features": list(e.features),
                "length": e.length,
                "offset": e.offset,
                "parent": e.parent,
                "title": e.title,
            }
        blob = canonical_json({"entries": entries, "log_size": self._log_end})
        tmp = self._idx_path.with_suffix(".idx.tmp")
        tmp.write_bytes(blob)
        tmp.replace(self._idx_path)

    def _load_index(self, log_size: int) -> bool:
        if not self._idx_path.exists():
            return False
        try:
            data = json.loads(self._idx_path.read_bytes())
            if data.get("log_size") != log_size:
                return False
            for sid, row in data["entries"].items():
                self._entries[sid] = _Entry(
                    offset=int(row["offset"]),
                    length=int(row["length"]),
                    digest=row["digest"],
                    parent=row["parent"],
                    children=tuple(row["children"]),
                    created_at=row["created_at"],
                    title=row["title"],
                    features=tuple(float(v) for v in row["features"]),
                    deleted=bool(row["deleted"]),
                )
            self._log_end = log_size
            return True
        except (ValueError, KeyError, TypeError):
            self._entries.clear()
            return False


def _parse_envelope(payload: bytes) -> dict:
    try:
        envelope = json.loads(payload.decode("utf-8"))
    except (UnicodeDecodeError, ValueError) as exc:
        raise SerializationError(f"unreadable log record: {exc}", code="CORRUPT") from exc
    if not isinstance(envelope, dict):
        raise SerializationError("log record is not an object", code="CORRUPT")
    return envelope
