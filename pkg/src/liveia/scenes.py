"""Scene vocabulary and lifecycle: spheres, shells, fractures, bubbles,
beams, sparks, scenarios, plus validation, forking, perspective views,
and the canonical serialization format.

Canonical form: JSON with sorted keys, compact separators, ASCII-only
strings, floats printed with 9 significant digits, optional fields
omitted when unset. A document re-serializes byte-identically after a
parse round trip.
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
import secrets
from dataclasses import dataclass, field
from datetime import datetime, timezone

from .errors import ContractError, NotFoundError, SceneValidationError, SerializationError
from .optics import Medium, Vec
from .waves import Waveform, waveform_from_doc, waveform_to_doc

SCHEMA_VERSION = 1


def new_id() -> str:
    return secrets.token_hex(16)


def now_iso() -> str:
    ts = datetime.now(timezone.utc).isoformat(timespec="microseconds")
    return ts.replace("+00:00", "Z")


@dataclass
class Shell:
    thickness: float  # fraction of the sphere radius, in (0, 1)
    medium: Medium = field(default_factory=lambda: Medium(refractive_index=1.5))
    opacity: float = 0.0  # mapped to absorption at trace time
    sectors: list[tuple[float, float, str]] = field(default_factory=list)


@dataclass
class Fracture:
    endpoints: tuple[Vec, Vec]
    width: float = 0.05
    medium: Medium = field(default_factory=lambda: Medium(refractive_index=1.2))


@dataclass
class Bubble:
    center: Vec
    radius: float
    medium: Medium = field(
        default_factory=lambda: Medium(refractive_index=1.0, absorption=10.0)
    )


@dataclass
class PsycheSphere:
    id: str
    label: str = ""
    center: Vec = (0.0, 0.0)
    radius: float = 1.0
    interior: Medium = field(default_factory=lambda: Medium(refractive_index=1.5))
    light_level: float = 0.0  # ambient emission strength
    shell: Shell | None = None
    fractures: list[Fracture] = field(default_factory=list)
    bubbles: list[Bubble] = field(default_factory=list)
    children: list[str] = field(default_factory=list)
    border_blur: float = 0.0
    revealed: bool = False  # render-only cross-section flag


@dataclass
class Beam:
    id: str
    source_sphere: str | None = None
    origin_depth: float = 0.5  # 0 at the center, 1 at the surface
    origin_angle: float = 0.0
    direction: float = 0.0
    spread: float = 0.0
    ray_count: int = 1
    intensity: tuple[float, float, float] = (1.0, 1.0, 1.0)
    waveform: Waveform | None = None


@dataclass
class Spark:
    sphere_pair: tuple[str, str]
    intensity: float = 1.0


@dataclass
class Scenario:
    id: str
    title: str = ""
    spheres: list[PsycheSphere] = field(default_factory=list)
    beams: list[Beam] = field(default_factory=list)
    sparks: list[Spark] = field(default_factory=list)
    notes: str = ""
    parent: str | None = None
    children: list[str] = field(default_factory=list)
    created_at: str = ""
    view_of: str | None = None  # set on perspective views

    def sphere(self, sphere_id: str) -> PsycheSphere:
        for s in self.spheres:
            if s.id == sphere_id:
                return s
        raise NotFoundError(f"no sphere {sphere_id!r}")

    def beam(self, beam_id: str) -> Beam:
        for b in self.beams:
            if b.id == beam_id:
                return b
        raise NotFoundError(f"no beam {beam_id!r}")


def new_scenario(title: str = "") -> Scenario:
    return Scenario(id=new_id(), title=title, created_at=now_iso())


@dataclass(frozen=True)
class Violation:
    subject: str  # id of the offending element
    rule: str
    message: str


def _finite(*values: float) -> bool:
    return all(isinstance(v, (int, float)) and math.isfinite(v) for v in values)


def _check_medium(out: list[Violation], owner: str, m: Medium, what: str) -> None:
    if not _finite(m.refractive_index, m.absorption, *m.tint):
        out.append(Violation(owner, "finite-geometry", f"{what} has non-finite values"))
        return
    if m.refractive_index < 0.1:
        out.append(
            Violation(owner, "medium-index", f"{what} refractive index {m.refractive_index} < 0.1")
        )
    if m.absorption < 0.0:
        out.append(Violation(owner, "medium-absorption", f"{what} absorption {m.absorption} < 0"))
    if any(t < 0.0 or t > 1.0 for t in m.tint):
        out.append(Violation(owner, "medium-tint", f"{what} tint outside [0,1]"))


def validate(s: Scenario) -> list[Violation]:
    """Check every structural invariant; violations are returned, not raised."""
    out: list[Violation] = []
    by_id: dict[str, PsycheSphere] = {}

    for sp in s.spheres:
        if sp.id in by_id:
            out.append(Violation(sp.id, "sphere-id-unique", "duplicate sphere id"))
        by_id[sp.id] = sp

    for sp in s.spheres:
        if not _finite(sp.center[0], sp.center[1], sp.radius, sp.light_level, sp.border_blur):
            out.append(Violation(sp.id, "finite-geometry", "sphere has non-finite values"))
            continue
        if sp.radius <= 0.0:
            out.append(Violation(sp.id, "sphere-radius", f"radius {sp.radius} must be > 0"))
        if sp.light_level < 0.0:
            out.append(Violation(sp.id, "light-level", "light_level must be >= 0"))
        if sp.border_blur < 0.0:
            out.append(Violation(sp.id, "border-blur", "border_blur must be >= 0"))
        _check_medium(out, sp.id, sp.interior, "interior")

        core_r = sp.radius
        if sp.shell is not None:
            sh = sp.shell
            if not _finite(sh.thickness, sh.opacity):
                out.append(Violation(sp.id, "finite-geometry", "shell has non-finite values"))
            else:
                if not (0.0 < sh.thickness < 1.0):
                    out.append(
                        Violation(sp.id, "shell-thickness", f"thickness {sh.thickness} not in (0,1)")
                    )
                else:
                    core_r = sp.radius * (1.0 - sh.thickness)
                if not (0.0 <= sh.opacity <= 1.0):
                    out.append(Violation(sp.id, "shell-opacity", f"opacity {sh.opacity} not in [0,1]"))
            _check_medium(out, sp.id, sh.medium, "shell medium")
            for a0, a1, _color in sh.sectors:
                if not _finite(a0, a1):
                    out.append(Violation(sp.id, "finite-geometry", "sector angles non-finite"))

        for i, fr in enumerate(sp.fractures):
            tag = f"{sp.id}/fracture{i}"
            (ax, ay), (bx, by) = fr.endpoints
            if not _finite(ax, ay, bx, by, fr.width):
                out.append(Violation(tag, "finite-geometry", "fracture has non-finite values"))
                continue
            if (ax, ay) == (bx, by):
                out.append(Violation(tag, "fracture-degenerate", "endpoints coincide"))
            if fr.width <= 0.0:
                out.append(Violation(tag, "fracture-width", f"width {fr.width} must be > 0"))
            for px, py in fr.endpoints:
                if math.hypot(px - sp.center[0], py - sp.center[1]) >= core_r:
                    out.append(
                        Violation(tag, "fracture-containment", "endpoint outside the interior")
                    )
            _check_medium(out, tag, fr.medium, "fracture medium")

        for i, bu in enumerate(sp.bubbles):
            tag = f"{sp.id}/bubble{i}"
            if not _finite(bu.center[0], bu.center[1], bu.radius):
                out.append(Violation(tag, "finite-geometry", "bubble has non-finite values"))
                continue
            if bu.radius <= 0.0:
                out.append(Violation(tag, "bubble-radius", f"radius {bu.radius} must be > 0"))
            d = math.hypot(bu.center[0] - sp.center[0], bu.center[1] - sp.center[1])
            if d + bu.radius >= core_r:
                out.append(Violation(tag, "bubble-containment", "bubble not wholly inside the interior"))
            _check_medium(out, tag, bu.medium, "bubble medium")

        for cid in sp.children:
            if cid not in by_id:
                out.append(Violation(sp.id, "child-exists", f"child {cid!r} not in scenario"))
                continue
            ch = by_id[cid]
            if not _finite(ch.center[0], ch.center[1], ch.radius):
                continue
            d = math.hypot(ch.center[0] - sp.center[0], ch.center[1] - sp.center[1])
            if not (d + ch.radius < sp.radius):
                out.append(
                    Violation(cid, "child-containment", f"child {cid!r} pokes outside {sp.id!r}")
                )

    # ancestry map for the overlap rule
    ancestors: dict[str, set[str]] = {sp.id: set() for sp in s.spheres}

    def _collect(pid: str, seen: set[str]) -> None:
        sp = by_id.get(pid)
        if sp is None:
            return
        for cid in sp.children:
            if cid in seen or cid not in ancestors:
                continue
            ancestors[cid].add(pid)
            ancestors[cid].update(ancestors[pid])
            _collect(cid, seen | {cid})

    for sp in s.spheres:
        _collect(sp.id, {sp.id})

    sphere_list = [sp for sp in s.spheres if _finite(sp.center[0], sp.center[1], sp.radius)]
    for i in range(len(sphere_list)):
        for j in range(i + 1, len(sphere_list)):
            a, b = sphere_list[i], sphere_list[j]
            if a.id in ancestors.get(b.id, ()) or b.id in ancestors.get(a.id, ()):
                continue
            d = math.hypot(a.center[0] - b.center[0], a.center[1] - b.center[1])
            if d < a.radius + b.radius - 1e-12:
                out.append(
                    Violation(
                        a.id, "sibling-overlap", f"{a.id!r} and {b.id!r} overlap without nesting"
                    )
                )

    beam_ids: set[str] = set()
    for b in s.beams:
        if b.id in beam_ids:
            out.append(Violation(b.id, "beam-id-unique", "duplicate beam id"))
        beam_ids.add(b.id)
        if not _finite(b.origin_depth, b.origin_angle, b.direction, b.spread, *b.intensity):
            out.append(Violation(b.id, "finite-geometry", "beam has non-finite values"))
            continue
        if not (0.0 <= b.origin_depth <= 1.0):
            out.append(Violation(b.id, "beam-depth", f"origin_depth {b.origin_depth} not in [0,1]"))
        if b.spread < 0.0:
            out.append(Violation(b.id, "beam-spread", "spread must be >= 0"))
        if b.ray_count < 1:
            out.append(Violation(b.id, "beam-ray-count", "ray_count must be >= 1"))
        if any(c < 0.0 for c in b.intensity):
            out.append(Violation(b.id, "beam-intensity", "intensity channels must be >= 0"))
        if b.source_sphere is not None and b.source_sphere not in by_id:
            out.append(Violation(b.id, "beam-source-exists", f"unknown sphere {b.source_sphere!r}"))

    for i, sk in enumerate(s.sparks):
        tag = f"spark{i}"
        if sk.sphere_pair[0] == sk.sphere_pair[1]:
            out.append(Violation(tag, "spark-distinct", "spark endpoints must differ"))
        for sid in sk.sphere_pair:
            if sid not in by_id:
                out.append(Violation(tag, "spark-ref", f"unknown sphere {sid!r}"))
        if not _finite(sk.intensity) or sk.intensity < 0.0:
            out.append(Violation(tag, "spark-intensity", "intensity must be finite and >= 0"))

    if s.parent is not None and s.parent == s.id:
        out.append(Violation(s.id, "fork-cycle", "scenario cannot be its own parent"))
    if s.id in s.children:
        out.append(Violation(s.id, "fork-cycle", "scenario cannot be its own child"))

    return out


def fork(s: Scenario) -> Scenario:
    """Deep-copy a scenario as a new child; the parent gains the child link.

    After forking, the parent's content is frozen by convention; the store
    enforces that edits land only on unforked leaves.
    """
    violations = validate(s)
    if violations:
        raise SceneValidationError(violations)
    child = copy.deepcopy(s)
    child.id = new_id()
    child.parent = s.id
    child.children = []
    child.created_at = now_iso()
    child.view_of = None
    s.children.append(child.id)
    return child


def perspective(s: Scenario, sphere_id: str) -> Scenario:
    """Derived view recentered on one sphere.

    Sphere geometry is translated so the chosen sphere sits at the origin
    and it is listed first; beams anchored to spheres follow them, while
    unanchored beams keep their polar origin. The source scenario is not
    modified.
    """
    pivot = s.sphere(sphere_id)  # raises NotFoundError
    dx, dy = pivot.center
    view = copy.deepcopy(s)
    for sp in view.spheres:
        sp.center = (sp.center[0] - dx, sp.center[1] - dy)
        for fr in sp.fractures:
            fr.endpoints = (
                (fr.endpoints[0][0] - dx, fr.endpoints[0][1] - dy),
                (fr.endpoints[1][0] - dx, fr.endpoints[1][1] - dy),
            )
        for bu in sp.bubbles:
            bu.center = (bu.center[0] - dx, bu.center[1] - dy)
    view.spheres.sort(key=lambda sp: sp.id != sphere_id)
    view.view_of = sphere_id
    return view


def deepen(s: Scenario, beam_id: str, delta: float) -> Beam:
    """Shift a beam's origin toward the center by delta, clamped at 0."""
    if delta < 0.0:
        raise ContractError("delta must be >= 0")
    b = s.beam(beam_id)  # raises NotFoundError
    b.origin_depth = max(0.0, b.origin_depth - delta)
    return b


def reveal(s: Scenario, sphere_id: str, on: bool) -> bool:
    """Toggle the cross-section render flag; tracing is unaffected."""
    sp = s.sphere(sphere_id)  # raises NotFoundError
    sp.revealed = bool(on)
    return sp.revealed


# ---------------------------------------------------------------------------
# canonical serialization


def _fmt_float(x: float) -> str:
    if not math.isfinite(x):
        raise SerializationError(f"non-finite number {x!r}", code="MALFORMED")
    return format(x, ".9g")


def _emit(v, out: list[str]) -> None:
    if v is True:
        out.append("true")
    elif v is False:
        out.append("false")
    elif v is None:
        out.append("null")
    elif isinstance(v, int):
        out.append(repr(v))
    elif isinstance(v, float):
        out.append(_fmt_float(v))
    elif isinstance(v, str):
        out.append(json.dumps(v, ensure_ascii=True))
    elif isinstance(v, (list, tuple)):
        out.append("[")
        for i, item in enumerate(v):
            if i:
                out.append(",")
            _emit(item, out)
        out.append("]")
    elif isinstance(v, dict):
        out.append("{")
        for i, key in enumerate(sorted(v.keys())):
            if not isinstance(key, str):
                raise SerializationError("object keys must be strings", code="MALFORMED")
            if i:
                out.append(",")
            out.append(json.dumps(key, ensure_ascii=True))
            out.append(":")
            _emit(v[key], out)
        out.append("}")
    else:
        raise SerializationError(f"cannot serialize {type(v).__name__}", code="MALFORMED")


def canonical_json(value) -> bytes:
    out: list[str] = []
    _emit(value, out)
    return "".join(out).encode("ascii")


def _medium_doc(m: Medium) -> dict:
    return {
        "refractive_index": float(m.refractive_index),
        "absorption": float(m.absorption),
        "tint": [float(t) for t in m.tint],
    }


def _medium_parse(d: dict) -> Medium:
    return Medium(
        refractive_index=float(d["refractive_index"]),
        absorption=float(d["absorption"]),
        tint=(float(d["tint"][0]), float(d["tint"][1]), float(d["tint"][2])),
    )


def _sphere_doc(sp: PsycheSphere) -> dict:
    doc = {
        "id": sp.id,
        "label": sp.label,
        "center": [float(sp.center[0]), float(sp.center[1])],
        "radius": float(sp.radius),
        "interior": _medium_doc(sp.interior),
        "light_level": float(sp.light_level),
        "fractures": [
            {
                "endpoints": [
                    [float(fr.endpoints[0][0]), float(fr.endpoints[0][1])],
                    [float(fr.endpoints[1][0]), float(fr.endpoints[1][1])],
                ],
                "width": float(fr.width),
                "medium": _medium_doc(fr.medium),
            }
            for fr in sp.fractures
        ],
        "bubbles": [
            {
                "center": [float(bu.center[0]), float(bu.center[1])],
                "radius": float(bu.radius),
                "medium": _medium_doc(bu.medium),
            }
            for bu in sp.bubbles
        ],
        "children": list(sp.children),
        "border_blur": float(sp.border_blur),
        "revealed": bool(sp.revealed),
    }
    if sp.shell is not None:
        doc["shell"] = {
            "thickness": float(sp.shell.thickness),
            "medium": _medium_doc(sp.shell.medium),
            "opacity": float(sp.shell.opacity),
            "sectors": [[float(a0), float(a1), str(c)] for a0, a1, c in sp.shell.sectors],
        }
    return doc


def _sphere_parse(d: dict) -> PsycheSphere:
    shell = None
    if "shell" in d:
        sh = d["shell"]
        shell = Shell(
            thickness=float(sh["thickness"]),
            medium=_medium_parse(sh["medium"]),
            opacity=float(sh["opacity"]),
            sectors=[(float(x[0]), float(x[1]), str(x[2])) for x in sh.get("sectors", [])],
        )
    return PsycheSphere(
        id=str(d["id"]),
        label=str(d.get("label", "")),
        center=(float(d["center"][0]), float(d["center"][1])),
        radius=float(d["radius"]),
        interior=_medium_parse(d["interior"]),
        light_level=float(d.get("light_level", 0.0)),
        shell=shell,
        fractures=[
            Fracture(
                endpoints=(
                    (float(f["endpoints"][0][0]), float(f["endpoints"][0][1])),
                    (float(f["endpoints"][1][0]), float(f["endpoints"][1][1])),
                ),
                width=float(f["width"]),
                medium=_medium_parse(f["medium"]),
            )
            for f in d.get("fractures", [])
        ],
        bubbles=[
            Bubble(
                center=(float(b["center"][0]), float(b["center"][1])),
                radius=float(b["radius"]),
                medium=_medium_parse(b["medium"]),
            )
            for b in d.get("bubbles", [])
        ],
        children=[str(c) for c in d.get("children", [])],
        border_blur=float(d.get("border_blur", 0.0)),
        revealed=bool(d.get("revealed", False)),
    )


def _beam_doc(b: Beam) -> dict:
    doc = {
        "id": b.id,
        "origin_depth": float(b.origin_depth),
        "origin_angle": float(b.origin_angle),
        "direction": float(b.direction),
        "spread": float(b.spread),
        "ray_count": int(b.ray_count),
        "intensity": [float(c) for c in b.intensity],
    }
    if b.source_sphere is not None:
        doc["source_sphere"] = b.source_sphere
    if b.waveform is not None:
        doc["waveform"] = waveform_to_doc(b.waveform)
    return doc


def _beam_parse(d: dict) -> Beam:
    return Beam(
        id=str(d["id"]),
        source_sphere=str(d["source_sphere"]) if "source_sphere" in d else None,
        origin_depth=float(d["origin_depth"]),
        origin_angle=float(d["origin_angle"]),
        direction=float(d["direction"]),
        spread=float(d["spread"]),
        ray_count=int(d["ray_count"]),
        intensity=(
            float(d["intensity"][0]),
            float(d["intensity"][1]),
            float(d["intensity"][2]),
        ),
        waveform=waveform_from_doc(d["waveform"]) if "waveform" in d else None,
    )


def scenario_to_doc(s: Scenario, include_links: bool = True) -> dict:
    doc = {
        "id": s.id,
        "title": s.title,
        "spheres": [_sphere_doc(sp) for sp in s.spheres],
        "beams": [_beam_doc(b) for b in s.beams],
        "sparks": [
            {"sphere_pair": [sk.sphere_pair[0], sk.sphere_pair[1]], "intensity": float(sk.intensity)}
            for sk in s.sparks
        ],
        "notes": s.notes,
        "created_at": s.created_at,
    }
    if include_links:
        doc["children"] = list(s.children)
        if s.parent is not None:
            doc["parent"] = s.parent
    if s.view_of is not None:
        doc["view_of"] = s.view_of
    return doc


def scenario_from_doc(d: dict) -> Scenario:
    try:
        s = Scenario(
            id=str(d["id"]),
            title=str(d.get("title", "")),
            spheres=[_sphere_parse(x) for x in d.get("spheres", [])],
            beams=[_beam_parse(x) for x in d.get("beams", [])],
            sparks=[
                Spark(
                    sphere_pair=(str(x["sphere_pair"][0]), str(x["sphere_pair"][1])),
                    intensity=float(x["intensity"]),
                )
                for x in d.get("sparks", [])
            ],
            notes=str(d.get("notes", "")),
            parent=str(d["parent"]) if "parent" in d else None,
            children=[str(c) for c in d.get("children", [])],
            created_at=str(d.get("created_at", "")),
            view_of=str(d["view_of"]) if "view_of" in d else None,
        )
    except SerializationError:
        raise
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise SerializationError(f"malformed scenario document: {exc}", code="MALFORMED")

    ids = {sp.id for sp in s.spheres}
    for sp in s.spheres:
        for cid in sp.children:
            if cid not in ids:
                raise SerializationError(
                    f"sphere {sp.id!r} references unknown child {cid!r}", code="DANGLING_REF"
                )
    for b in s.beams:
        if b.source_sphere is not None and b.source_sphere not in ids:
            raise SerializationError(
                f"beam {b.id!r} references unknown sphere {b.source_sphere!r}",
                code="DANGLING_REF",
            )
    for i, sk in enumerate(s.sparks):
        for sid in sk.sphere_pair:
            if sid not in ids:
                raise SerializationError(
                    f"spark {i} references unknown sphere {sid!r}", code="DANGLING_REF"
                )
    return s


def serialize(s: Scenario) -> bytes:
    """Canonical document bytes for a validated scenario."""
    violations = validate(s)
    if violations:
        raise SceneValidationError(violations)
    return canonical_json({"schema_version": SCHEMA_VERSION, "scenario": scenario_to_doc(s)})


def _reject_constant(name: str):
    raise SerializationError(f"non-finite numeral {name}", code="MALFORMED")


def deserialize(raw: bytes | str) -> Scenario:
    if isinstance(raw, bytes):
        try:
            raw = raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise SerializationError(f"not valid UTF-8: {exc}", code="MALFORMED")
    try:
        doc = json.loads(raw, parse_constant=_reject_constant)
    except json.JSONDecodeError as exc:
        raise SerializationError(f"not valid JSON: {exc}", code="MALFORMED")
    if not isinstance(doc, dict):
        raise SerializationError("top level must be an object", code="MALFORMED")
    if "schema_version" not in doc:
        raise SerializationError("missing schema_version", code="VERSION_MISSING")
    if doc["schema_version"] != SCHEMA_VERSION:
        raise SerializationError(
            f"schema_version {doc['schema_version']!r} unsupported (want {SCHEMA_VERSION})",
            code="VERSION_MISMATCH",
        )
    body = doc.get("scenario")
    if not isinstance(body, dict):
        raise SerializationError("missing scenario object", code="MALFORMED")
    return scenario_from_doc(body)


def content_bytes(s: Scenario) -> bytes:
    """Canonical bytes of a scenario's own content.

    Fork links (children) are excluded so that forking does not disturb
    the parent's content identity.
    """
    return canonical_json(
        {"schema_version": SCHEMA_VERSION, "scenario": scenario_to_doc(s, include_links=False)}
    )


def content_digest(s: Scenario) -> str:
    return hashlib.sha256(content_bytes(s)).hexdigest()
