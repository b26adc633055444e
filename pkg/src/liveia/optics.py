"""2D geometric optics: refraction, Fresnel splitting, intersections, and
a branching ray tracer.

Spheres are circles; the scene is planar. Tracing follows both Fresnel
branches at every interface, refracted child first, until the intensity
floor or the event cap cuts a branch off. All functions here are pure;
parallel evaluation of many traces is safe and ordering is defined by
emission order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING, Union

from .errors import ContractError, SceneValidationError

if TYPE_CHECKING:
    from .scenes import Beam, Scenario

Vec = tuple[float, float]
Triple = tuple[float, float, float]

# self-hit exclusion distance along a ray
EPS_SELF = 1e-9
# |direction . normal| below this counts as a tangential graze and a miss
EPS_GRAZE = 1e-9


class _TotalInternalReflection:
    """Singleton marker returned by refract_direction past the critical angle."""

    __slots__ = ()

    def __repr__(self):
        return "TIR"


TIR = _TotalInternalReflection()


class TraceEvent(str, Enum):
    REFRACT = "REFRACT"
    REFLECT = "REFLECT"
    TIR = "TIR"
    ABSORBED = "ABSORBED"
    ESCAPED = "ESCAPED"
    MAX_DEPTH = "MAX_DEPTH"


@dataclass(frozen=True)
class Medium:
    """Optical properties of a region.

    absorption is per unit length; tint is a per-channel transmission
    multiplier per unit length, so a segment of length L keeps
    exp(-absorption * L) * tint**L of each channel.
    """

    refractive_index: float = 1.0
    absorption: float = 0.0
    tint: Triple = (1.0, 1.0, 1.0)

    def extinction(self) -> Triple:
        """Combined per-channel decay rate (absorption plus tint loss)."""
        out = []
        for t in self.tint:
            if t <= 0.0:
                out.append(math.inf)
            else:
                out.append(self.absorption - math.log(t))
        return tuple(out)


AIR = Medium(refractive_index=1.0)


@dataclass
class Ray:
    origin: Vec
    direction: Vec
    intensity: Triple = (1.0, 1.0, 1.0)
    path_length: float = 0.0

    def __post_init__(self):
        n = math.hypot(self.direction[0], self.direction[1])
        if not math.isfinite(n) or n == 0.0:
            raise ContractError("ray direction must be a nonzero finite vector")
        self.direction = (self.direction[0] / n, self.direction[1] / n)
        if any((not math.isfinite(c)) or c < 0.0 for c in self.intensity):
            raise ContractError("ray intensity channels must be finite and >= 0")
        if self.path_length < 0.0:
            raise ContractError("path_length must be >= 0")


@dataclass
class SurfaceHit:
    point: Vec
    normal: Vec  # unit, oriented against the incident ray
    distance: float
    media: tuple[Medium, Medium] | None = None  # (inside, outside) when known
    surface_id: str = ""


@dataclass
class Segment:
    start: Vec
    end: Vec
    intensity: Triple  # per-channel intensity entering the segment


@dataclass
class RayPath:
    segments: list[Segment] = field(default_factory=list)
    events: list[TraceEvent] = field(default_factory=list)
    total_deflection: float = 0.0


@dataclass(frozen=True)
class TraceLimits:
    max_events: int = 32
    min_intensity: float = 1e-3


def _dot(a: Vec, b: Vec) -> float:
    return a[0] * b[0] + a[1] * b[1]


def _cross(a: Vec, b: Vec) -> float:
    return a[0] * b[1] - a[1] * b[0]


def _unit(v: Vec) -> Vec:
    n = math.hypot(v[0], v[1])
    return (v[0] / n, v[1] / n)


def _angle_between(a: Vec, b: Vec) -> float:
    # atan2 keeps full precision for near-zero angles where acos loses it
    return abs(math.atan2(_cross(a, b), _dot(a, b)))


def _require_unit(v: Vec, name: str) -> None:
    n = math.hypot(v[0], v[1])
    if abs(n - 1.0) > 1e-9:
        raise ContractError(f"{name} must be a unit vector, got length {n!r}")


def refract_direction(
    incident: Vec, normal: Vec, n1: float, n2: float
) -> Union[Vec, _TotalInternalReflection]:
    """Snell refraction of a unit direction across an interface.

    The normal must be unit length and oriented against the incident
    direction. Returns the TIR marker when n1*sin(theta1)/n2 > 1.
    """
    _require_unit(incident, "incident")
    _require_unit(normal, "normal")
    if n1 < 0.1 or n2 < 0.1:
        raise ContractError("refractive indices must be >= 0.1")
    ci = -_dot(incident, normal)
    if ci < -1e-9:
        raise ContractError("normal must be oriented against the incident ray")
    ci = max(0.0, min(1.0, ci))
    r = n1 / n2
    s2 = r * r * (1.0 - ci * ci)
    if s2 > 1.0:
        return TIR
    ct = math.sqrt(max(0.0, 1.0 - s2))
    k = r * ci - ct
    return _unit((r * incident[0] + k * normal[0], r * incident[1] + k * normal[1]))


def reflect_direction(incident: Vec, normal: Vec) -> Vec:
    """Specular reflection of a unit direction about a unit normal."""
    d = _dot(incident, normal)
    return (incident[0] - 2.0 * d * normal[0], incident[1] - 2.0 * d * normal[1])


def fresnel_split(theta1: float, n1: float, n2: float) -> tuple[float, float]:
    """Unpolarized Fresnel (reflectance, transmittance) at incidence theta1.

    Past the critical angle the split is (1, 0).
    """
    if not (0.0 <= theta1 < math.pi / 2):
        raise ContractError(f"theta1 must be in [0, pi/2), got {theta1!r}")
    if n1 < 0.1 or n2 < 0.1:
        raise ContractError("refractive indices must be >= 0.1")
    if n1 == n2:
        return (0.0, 1.0)
    c1 = math.cos(theta1)
    s2 = n1 * math.sin(theta1) / n2
    if s2 >= 1.0:
        return (1.0, 0.0)
    c2 = math.sqrt(1.0 - s2 * s2)
    rs = ((n1 * c1 - n2 * c2) / (n1 * c1 + n2 * c2)) ** 2
    rp = ((n1 * c2 - n2 * c1) / (n1 * c2 + n2 * c1)) ** 2
    r = max(0.0, min(1.0, 0.5 * (rs + rp)))
    return (r, 1.0 - r)


def _hit_circle(o: Vec, d: Vec, cx: float, cy: float, radius: float):
    """Nearest forward, non-grazing hit on a circle. Returns (t, point, normal)
    with the normal against d, or None."""
    mx, my = o[0] - cx, o[1] - cy
    b = d[0] * mx + d[1] * my
    c0 = mx * mx + my * my - radius * radius
    disc = b * b - c0
    if disc < 0.0:
        return None
    sq = math.sqrt(disc)
    t = -b - sq
    if t <= EPS_SELF:
        t = -b + sq
        if t <= EPS_SELF:
            return None
    px, py = o[0] + t * d[0], o[1] + t * d[1]
    nx, ny = (px - cx) / radius, (py - cy) / radius
    dn = d[0] * nx + d[1] * ny
    if abs(dn) < EPS_GRAZE:
        return None
    if dn > 0.0:
        nx, ny = -nx, -ny
    return (t, (px, py), (nx, ny))


def _hit_segment(o: Vec, d: Vec, a: Vec, b: Vec):
    """Nearest forward, non-parallel hit on a segment. Returns (t, point,
    normal) with the normal against d, or None."""
    ex, ey = b[0] - a[0], b[1] - a[1]
    denom = d[0] * ey - d[1] * ex
    elen = math.hypot(ex, ey)
    # |d . n| = |denom| / |e|; below the graze epsilon the crossing is tangential
    if abs(denom) < EPS_GRAZE * elen:
        return None
    aox, aoy = a[0] - o[0], a[1] - o[1]
    t = (aox * ey - aoy * ex) / denom
    s = (aox * d[1] - aoy * d[0]) / denom
    if t <= EPS_SELF or s < 0.0 or s > 1.0:
        return None
    nx, ny = -ey / elen, ex / elen
    dn = d[0] * nx + d[1] * ny
    if dn > 0.0:
        nx, ny = -nx, -ny
    return (t, (o[0] + t * d[0], o[1] + t * d[1]), (nx, ny))


def intersect_circle(ray: Ray, center: Vec, radius: float) -> SurfaceHit | None:
    if radius <= 0.0:
        raise ContractError("radius must be > 0")
    hit = _hit_circle(ray.origin, ray.direction, center[0], center[1], radius)
    if hit is None:
        return None
    t, point, normal = hit
    return SurfaceHit(point=point, normal=normal, distance=t)


def intersect_segment(ray: Ray, a: Vec, b: Vec) -> SurfaceHit | None:
    if a == b:
        raise ContractError("segment endpoints must be distinct")
    hit = _hit_segment(ray.origin, ray.direction, a, b)
    if hit is None:
        return None
    t, point, normal = hit
    return SurfaceHit(point=point, normal=normal, distance=t)


@dataclass(frozen=True)
class _Region:
    """A disk with a known medium; smaller disks take precedence."""

    center: Vec
    radius: float
    medium: Medium
    owner: str
    kind: str  # "core", "shell", "bubble"


@dataclass(frozen=True)
class _CircleSurface:
    surface_id: str
    center: Vec
    radius: float


@dataclass(frozen=True)
class _WallSurface:
    """A fracture face, treated as a collapsed thin slab: one refraction
    with the slab's index plus a width-proportional transmission factor."""

    surface_id: str
    a: Vec
    b: Vec
    slab_index: float
    slab_factor: Triple


@dataclass
class CompiledScene:
    circles: list[_CircleSurface]
    walls: list[_WallSurface]
    regions: list[_Region]  # sorted by radius ascending
    bound: float
    scenario: "Scenario"

    def medium_at(self, p: Vec) -> Medium:
        for reg in self.regions:
            dx, dy = p[0] - reg.center[0], p[1] - reg.center[1]
            if dx * dx + dy * dy <= reg.radius * reg.radius:
                return reg.medium
        return AIR

    @property
    def probe(self) -> float:
        return 1e-7 * max(1.0, self.bound)


def compile_scene(scenario: "Scenario") -> CompiledScene:
    """Flatten a validated scenario into surfaces and medium regions.

    Raises SceneValidationError when the scenario has violations.
    """
    from .scenes import validate

    violations = validate(scenario)
    if violations:
        raise SceneValidationError(violations)

    circles: list[_CircleSurface] = []
    walls: list[_WallSurface] = []
    regions: list[_Region] = []
    bound = 1.0

    for sphere in scenario.spheres:
        cx, cy = sphere.center
        bound = max(bound, math.hypot(cx, cy) + sphere.radius)
        circles.append(
            _CircleSurface(f"{sphere.id}:surface", sphere.center, sphere.radius)
        )
        if sphere.shell is not None:
            inner_r = sphere.radius * (1.0 - sphere.shell.thickness)
            shell_med = sphere.shell.medium
            # opacity maps linearly onto extra absorption
            eff = Medium(
                refractive_index=shell_med.refractive_index,
                absorption=shell_med.absorption + 10.0 * sphere.shell.opacity,
                tint=shell_med.tint,
            )
            circles.append(
                _CircleSurface(f"{sphere.id}:shell-inner", sphere.center, inner_r)
            )
            regions.append(_Region(sphere.center, sphere.radius, eff, sphere.id, "shell"))
            regions.append(
                _Region(sphere.center, inner_r, sphere.interior, sphere.id, "core")
            )
        else:
            regions.append(
                _Region(sphere.center, sphere.radius, sphere.interior, sphere.id, "core")
            )
        for i, bub in enumerate(sphere.bubbles):
            sid = f"{sphere.id}:bubble{i}"
            circles.append(_CircleSurface(sid, bub.center, bub.radius))
            regions.append(_Region(bub.center, bub.radius, bub.medium, sphere.id, "bubble"))
        for i, frac in enumerate(sphere.fractures):
            k = frac.medium.extinction()
            factor = tuple(math.exp(-kc * frac.width) if kc != math.inf else 0.0 for kc in k)
            walls.append(
                _WallSurface(
                    f"{sphere.id}:fracture{i}",
                    frac.endpoints[0],
                    frac.endpoints[1],
                    frac.medium.refractive_index,
                    factor,
                )
            )

    regions.sort(key=lambda r: r.radius)
    return CompiledScene(circles, walls, regions, bound, scenario)


def _nearest_hit(cs: CompiledScene, o: Vec, d: Vec):
    best_t = math.inf
    best = None
    for c in cs.circles:
        h = _hit_circle(o, d, c.center[0], c.center[1], c.radius)
        if h is not None and h[0] < best_t:
            best_t = h[0]
            best = (h, c, False)
    for w in cs.walls:
        h = _hit_segment(o, d, w.a, w.b)
        if h is not None and h[0] < best_t:
            best_t = h[0]
            best = (h, w, True)
    return best


def _walk(
    cs: CompiledScene,
    o: Vec,
    d: Vec,
    inten: Triple,
    med: Medium,
    segments: list[Segment],
    events: list[TraceEvent],
    deflection: float,
    n_events: int,
    limits: TraceLimits,
    paths: list[RayPath],
) -> None:
    k = med.extinction()
    found = _nearest_hit(cs, o, d)
    if found is None:
        reach = 2.0 * (cs.bound + math.hypot(o[0], o[1])) + 1.0
        end = (o[0] + reach * d[0], o[1] + reach * d[1])
        paths.append(
            RayPath(segments + [Segment(o, end, inten)], events + [TraceEvent.ESCAPED], deflection)
        )
        return

    (t, point, normal), surf, is_wall = found
    att = tuple(math.exp(-kc * t) if kc != math.inf else 0.0 for kc in k)
    arrived = (inten[0] * att[0], inten[1] * att[1], inten[2] * att[2])
    seg = Segment(o, point, inten)

    if max(arrived) < limits.min_intensity:
        paths.append(RayPath(segments + [seg], events + [TraceEvent.ABSORBED], deflection))
        return
    if n_events >= limits.max_events:
        paths.append(RayPath(segments + [seg], events + [TraceEvent.MAX_DEPTH], deflection))
        return

    theta1 = math.acos(max(0.0, min(1.0, -_dot(d, normal))))
    if is_wall:
        n1, n2 = med.refractive_index, surf.slab_index
        refr_med = med
        extra = surf.slab_factor
    else:
        n1 = med.refractive_index
        step = cs.probe
        other = cs.medium_at((point[0] + step * d[0], point[1] + step * d[1]))
        n2 = other.refractive_index
        refr_med = other
        extra = (1.0, 1.0, 1.0)

    refl_d = _unit(reflect_direction(d, normal))
    refr_d = refract_direction(d, normal, n1, n2)

    if refr_d is TIR:
        _walk(
            cs,
            point,
            refl_d,
            arrived,
            med,
            segments + [seg],
            events + [TraceEvent.TIR],
            deflection + _angle_between(d, refl_d),
            n_events + 1,
            limits,
            paths,
        )
        return

    r_coef, t_coef = fresnel_split(theta1, n1, n2)
    i_refr = (
        arrived[0] * t_coef * extra[0],
        arrived[1] * t_coef * extra[1],
        arrived[2] * t_coef * extra[2],
    )
    i_refl = (arrived[0] * r_coef, arrived[1] * r_coef, arrived[2] * r_coef)
    refr_alive = max(i_refr) >= limits.min_intensity
    refl_alive = max(i_refl) >= limits.min_intensity

    if not refr_alive and not refl_alive:
        paths.append(RayPath(segments + [seg], events + [TraceEvent.ABSORBED], deflection))
        return
    if refr_alive:
        _walk(
            cs,
            point,
            refr_d,
            i_refr,
            refr_med,
            segments + [seg],
            events + [TraceEvent.REFRACT],
            deflection + _angle_between(d, refr_d),
            n_events + 1,
            limits,
            paths,
        )
    if refl_alive:
        _walk(
            cs,
            point,
            refl_d,
            i_refl,
            med,
            segments + [seg],
            events + [TraceEvent.REFLECT],
            deflection + _angle_between(d, refl_d),
            n_events + 1,
            limits,
            paths,
        )


def trace_ray(
    scene: Union["Scenario", CompiledScene], ray: Ray, limits: TraceLimits | None = None
) -> list[RayPath]:
    """Trace one ray, following both Fresnel branches depth-first with the
    refracted child explored before the reflected one.

    Branches whose max channel drops below limits.min_intensity are not
    followed. Returns one RayPath per surviving leaf, each carrying the
    full polyline from the original origin.
    """
    cs = scene if isinstance(scene, CompiledScene) else compile_scene(scene)
    limits = limits or TraceLimits()
    if limits.max_events < 1:
        raise ContractError("max_events must be >= 1")
    if limits.min_intensity <= 0.0:
        raise ContractError("min_intensity must be > 0")
    paths: list[RayPath] = []
    _walk(
        cs,
        ray.origin,
        ray.direction,
        tuple(ray.intensity),
        cs.medium_at(ray.origin),
        [],
        [],
        0.0,
        0,
        limits,
        paths,
    )
    return paths


def beam_origin(scene: Union["Scenario", CompiledScene], beam: "Beam") -> Vec:
    """World-space origin of a beam.

    With a source sphere: center + origin_depth*radius at origin_angle.
    Without one, (origin_depth, origin_angle) are polar world coordinates.
    """
    scenario = scene.scenario if isinstance(scene, CompiledScene) else scene
    if beam.source_sphere is not None:
        sphere = next((s for s in scenario.spheres if s.id == beam.source_sphere), None)
        if sphere is None:
            raise ContractError(f"beam references unknown sphere {beam.source_sphere!r}")
        r = beam.origin_depth * sphere.radius
        return (
            sphere.center[0] + r * math.cos(beam.origin_angle),
            sphere.center[1] + r * math.sin(beam.origin_angle),
        )
    return (
        beam.origin_depth * math.cos(beam.origin_angle),
        beam.origin_depth * math.sin(beam.origin_angle),
    )


def beam_rays(scene: Union["Scenario", CompiledScene], beam: "Beam") -> list[Ray]:
    """Expand a beam into its emitted rays, in emission order.

    Directions fan evenly across [direction - spread/2, direction +
    spread/2]; intensity is shared equally.
    """
    if beam.ray_count < 1:
        raise ContractError("beam ray_count must be >= 1")
    if beam.spread < 0.0:
        raise ContractError("beam spread must be >= 0")
    origin = beam_origin(scene, beam)
    n = beam.ray_count
    share = tuple(c / n for c in beam.intensity)
    rays = []
    for i in range(n):
        if n == 1:
            ang = beam.direction
        else:
            ang = beam.direction - beam.spread / 2.0 + beam.spread * i / (n - 1)
        rays.append(Ray(origin, (math.cos(ang), math.sin(ang)), share))
    return rays


def trace_beam(
    scene: Union["Scenario", CompiledScene],
    beam: "Beam",
    limits: TraceLimits | None = None,
) -> list[RayPath]:
    """Trace every ray of a beam; results concatenated in emission order."""
    cs = scene if isinstance(scene, CompiledScene) else compile_scene(scene)
    out: list[RayPath] = []
    for ray in beam_rays(cs, beam):
        out.extend(trace_ray(cs, ray, limits))
    return out


def path_to_doc(path: RayPath) -> dict:
    """JSON-friendly form of one traced path."""
    points: list[list[float]] = []
    if path.segments:
        points.append(list(path.segments[0].start))
        points.extend(list(seg.end) for seg in path.segments)
    return {
        "points": points,
        "events": [e.value for e in path.events],
        "intensities": [list(seg.intensity) for seg in path.segments],
        "total_deflection": path.total_deflection,
    }


def fan_spread(paths: list[RayPath], at_event_index: int) -> float:
    """Max pairwise angle between path segment directions at one index."""
    if at_event_index < 0:
        raise ContractError("at_event_index must be >= 0")
    dirs = []
    for p in paths:
        if at_event_index >= len(p.segments):
            raise ContractError(
                f"path has {len(p.segments)} segments, index {at_event_index} out of range"
            )
        s = p.segments[at_event_index]
        dirs.append(_unit((s.end[0] - s.start[0], s.end[1] - s.start[1])))
    worst = 0.0
    for i in range(len(dirs)):
        for j in range(i + 1, len(dirs)):
            worst = max(worst, _angle_between(dirs[i], dirs[j]))
    return worst
