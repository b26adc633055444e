"""Deterministic SVG rendering of scenarios.

One renderer serves the CLI and the HTTP service so both produce
byte-identical output for the same input. Everything is emitted in scene
coordinates inside the viewBox (y negated, since SVG's y axis points
down), floats formatted to six significant digits, and element order
fixed by document order of the scenario lists. No randomness anywhere:
rendering twice gives the same bytes.

Layer order per sphere: interior gradient disk, fractures, bubbles,
optional shadow overlay rectangles, shell annulus and painted sectors,
label. Beams are traced with the optics engine and drawn as polylines;
sparks as dashed arcs between sphere centers.
"""

from __future__ import annotations

import math

from .errors import ContractError
from .optics import TraceLimits, trace_beam
from .scenes import PsycheSphere, Scenario, perspective

STROKE = "#c8b896"
BACKGROUND = "#10101c"
BASE_FILL = "#1c2333"


def _f(x: float) -> str:
    s = format(float(x), ".6g")
    return "0" if s in ("-0", "-0.0") else s


def _rgb(tint) -> str:
    r, g, b = (max(0, min(255, round(255 * float(c)))) for c in tint)
    return f"rgb({r},{g},{b})"


def _beam_rgb(intensity) -> str:
    peak = max(intensity)
    if peak <= 0:
        return "rgb(255,255,255)"
    return _rgb(tuple(c / peak for c in intensity))


def _bounds(s: Scenario) -> tuple[float, float, float, float]:
    if not s.spheres:
        return (-1.0, -1.0, 2.0, 2.0)
    xs0 = min(sp.center[0] - sp.radius for sp in s.spheres)
    xs1 = max(sp.center[0] + sp.radius for sp in s.spheres)
    ys0 = min(sp.center[1] - sp.radius for sp in s.spheres)
    ys1 = max(sp.center[1] + sp.radius for sp in s.spheres)
    w = xs1 - xs0
    h = ys1 - ys0
    pad = 0.05 * max(w, h, 1e-9) + 0.02
    return (xs0 - pad, ys0 - pad, w + 2 * pad, h + 2 * pad)


def _annulus_path(cx: float, cy: float, r_outer: float, r_inner: float) -> str:
    # two full circles, even-odd fill leaves the ring
    def circle(r):
        return (
            f"M {_f(cx - r)} {_f(-cy)} "
            f"a {_f(r)} {_f(r)} 0 1 0 {_f(2 * r)} 0 "
            f"a {_f(r)} {_f(r)} 0 1 0 {_f(-2 * r)} 0 Z"
        )

    return circle(r_outer) + " " + circle(r_inner)


def _sector_path(cx, cy, r_outer, r_inner, a0, a1) -> str:
    """Annular sector between angles a0 and a1 (scene orientation)."""
    sweep = (a1 - a0) % (2 * math.pi)
    if sweep == 0.0:
        sweep = 2 * math.pi
    large = 1 if sweep > math.pi else 0
    x0o, y0o = cx + r_outer * math.cos(a0), cy + r_outer * math.sin(a0)
    x1o, y1o = cx + r_outer * math.cos(a1), cy + r_outer * math.sin(a1)
    x1i, y1i = cx + r_inner * math.cos(a1), cy + r_inner * math.sin(a1)
    x0i, y0i = cx + r_inner * math.cos(a0), cy + r_inner * math.sin(a0)
    # y axis flips, so scene counterclockwise becomes SVG sweep flag 0
    return (
        f"M {_f(x0o)} {_f(-y0o)} "
        f"A {_f(r_outer)} {_f(r_outer)} 0 {large} 0 {_f(x1o)} {_f(-y1o)} "
        f"L {_f(x1i)} {_f(-y1i)} "
        f"A {_f(r_inner)} {_f(r_inner)} 0 {large} 1 {_f(x0i)} {_f(-y0i)} Z"
    )


def _truncate(points: list[tuple[float, float]], fraction: float) -> list[tuple[float, float]]:
    """First `fraction` of the polyline by arclength; fraction >= 1 is a no-op."""
    if fraction >= 1.0 or len(points) < 2:
        return points
    if fraction <= 0.0:
        return points[:1]
    lengths = []
    total = 0.0
    for (x0, y0), (x1, y1) in zip(points, points[1:]):
        seg = math.hypot(x1 - x0, y1 - y0)
        lengths.append(seg)
        total += seg
    if total == 0.0:
        return points
    budget = fraction * total
    out = [points[0]]
    for (x0, y0), (x1, y1), seg in zip(points, points[1:], lengths):
        if seg <= budget:
            out.append((x1, y1))
            budget -= seg
            if budget <= 0.0:
                break
            continue
        t = budget / seg if seg > 0 else 0.0
        out.append((x0 + t * (x1 - x0), y0 + t * (y1 - y0)))
        break
    return out


def _sphere_group(sp: PsycheSphere, prefix: str, revealed_override: set[str], shadows) -> tuple[str, str]:
    cx, cy = sp.center
    gid = f"{prefix}g-{sp.id}"
    glow = max(0.0, min(1.0, sp.light_level))
    tint_rgb = _rgb(sp.interior.tint)
    defs = (
        f'<radialGradient id="{gid}">'
        f'<stop offset="0" stop-color="{tint_rgb}" stop-opacity="{_f(glow)}"/>'
        f'<stop offset="1" stop-color="{tint_rgb}" stop-opacity="{_f(glow * 0.15)}"/>'
        f"</radialGradient>"
    )
    filter_ref = ""
    if sp.border_blur > 0.0:
        fid = f"{prefix}blur-{sp.id}"
        dev = _f(sp.border_blur * sp.radius * 0.15)
        defs += (
            f'<filter id="{fid}" x="-50%" y="-50%" width="200%" height="200%">'
            f'<feGaussianBlur stdDeviation="{dev}"/></filter>'
        )
        filter_ref = f' filter="url(#{fid})"'

    parts = [f'<g class="sphere" data-sphere="{sp.id}"{filter_ref}>']
    parts.append(
        f'<circle class="body" cx="{_f(cx)}" cy="{_f(-cy)}" r="{_f(sp.radius)}" '
        f'fill="{BASE_FILL}" stroke="{STROKE}" stroke-width="{_f(sp.radius * 0.015)}"/>'
    )
    parts.append(
        f'<circle class="glow" cx="{_f(cx)}" cy="{_f(-cy)}" r="{_f(sp.radius)}" '
        f'fill="url(#{gid})"/>'
    )
    for fr in sp.fractures:
        (x0, y0), (x1, y1) = fr.endpoints
        parts.append(
            f'<line class="fracture" x1="{_f(x0)}" y1="{_f(-y0)}" '
            f'x2="{_f(x1)}" y2="{_f(-y1)}" stroke="{_rgb(fr.medium.tint)}" '
            f'stroke-width="{_f(fr.width)}" stroke-opacity="0.7"/>'
        )
    for b in sp.bubbles:
        darkness = max(0.2, min(0.95, b.medium.absorption / 20.0))
        parts.append(
            f'<circle class="bubble" cx="{_f(b.center[0])}" cy="{_f(-b.center[1])}" '
            f'r="{_f(b.radius)}" fill="#05060a" fill-opacity="{_f(darkness)}" '
            f'stroke="{STROKE}" stroke-width="{_f(b.radius * 0.02)}"/>'
        )
    for rect in shadows.get(sp.id, ()):
        x, y, w, h = rect
        parts.append(
            f'<rect class="shadow" x="{_f(x)}" y="{_f(-(y + h))}" '
            f'width="{_f(w)}" height="{_f(h)}" fill="#000000" fill-opacity="0.45"/>'
        )
    if sp.shell is not None:
        shell = sp.shell
        r_in = sp.radius * (1.0 - shell.thickness)
        opacity = 0.0 if (sp.revealed or sp.id in revealed_override) else shell.opacity
        parts.append(
            f'<path class="shell" d="{_annulus_path(cx, cy, sp.radius, r_in)}" '
            f'fill="{_rgb(shell.medium.tint)}" fill-opacity="{_f(opacity)}" fill-rule="evenodd"/>'
        )
        for a0, a1, color in shell.sectors:
            parts.append(
                f'<path class="sector" d="{_sector_path(cx, cy, sp.radius, r_in, a0, a1)}" '
                f'fill="{color}" fill-opacity="{_f(max(opacity, 0.25))}"/>'
            )
    if sp.label:
        parts.append(
            f'<text class="label" x="{_f(cx)}" y="{_f(-cy + sp.radius * 1.12)}" '
            f'font-size="{_f(sp.radius * 0.14)}" text-anchor="middle" '
            f'fill="{STROKE}">{_escape(sp.label)}</text>'
        )
    parts.append("</g>")
    return defs, "".join(parts)


def _escape(text: str) -> str:
    return (
        text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
        .replace('"', "&quot;")
    )


def _beam_layer(s: Scenario, fraction: float, limits: TraceLimits) -> str:
    if not s.beams:
        return ""
    parts = ['<g class="beams">']
    for beam in s.beams:
        color = _beam_rgb(beam.intensity)
        for path in trace_beam(s, beam, limits):
            if not path.segments:
                continue
            points = [path.segments[0].start] + [seg.end for seg in path.segments]
            points = _truncate(points, fraction)
            if len(points) < 2:
                continue
            opacity = max(0.05, min(1.0, sum(path.segments[0].intensity) / 3.0))
            coords = " ".join(f"{_f(x)},{_f(-y)}" for x, y in points)
            parts.append(
                f'<polyline class="ray" data-beam="{beam.id}" points="{coords}" '
                f'fill="none" stroke="{color}" stroke-opacity="{_f(opacity)}" '
                f'stroke-width="0.008"/>'
            )
    parts.append("</g>")
    return "".join(parts)


def _spark_layer(s: Scenario) -> str:
    if not s.sparks:
        return ""
    parts = ['<g class="sparks">']
    for spark in s.sparks:
        a = s.sphere(spark.sphere_pair[0])
        b = s.sphere(spark.sphere_pair[1])
        x0, y0 = a.center
        x1, y1 = b.center
        mx, my = (x0 + x1) / 2.0, (y0 + y1) / 2.0
        dx, dy = x1 - x0, y1 - y0
        dist = math.hypot(dx, dy) or 1.0
        # bow the arc out perpendicular to the join
        qx = mx - dy / dist * 0.2 * dist
        qy = my + dx / dist * 0.2 * dist
        opacity = max(0.1, min(1.0, spark.intensity))
        parts.append(
            f'<path class="spark" d="M {_f(x0)} {_f(-y0)} Q {_f(qx)} {_f(-qy)} '
            f'{_f(x1)} {_f(-y1)}" fill="none" stroke="#ffd27f" '
            f'stroke-opacity="{_f(opacity)}" stroke-width="0.015" '
            f'stroke-dasharray="0.05 0.04"/>'
        )
    parts.append("</g>")
    return "".join(parts)


def _document(viewbox: tuple[float, float, float, float], defs: str, body: str) -> bytes:
    x, y, w, h = viewbox
    svg = (
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="{_f(x)} {_f(y)} {_f(w)} {_f(h)}">'
        f"<defs>{defs}</defs>"
        f'<rect class="background" x="{_f(x)}" y="{_f(y)}" width="{_f(w)}" '
        f'height="{_f(h)}" fill="{BACKGROUND}"/>'
        f"{body}</svg>"
    )
    return svg.encode("utf-8")


def _view_parts(s: Scenario, prefix: str, fraction: float, limits: TraceLimits, reveal, shadows) -> tuple[str, str]:
    reveal = reveal or set()
    shadows = shadows or {}
    defs = []
    body = []
    for sp in s.spheres:
        d, g = _sphere_group(sp, prefix, reveal, shadows)
        defs.append(d)
        body.append(g)
    body.append(_beam_layer(s, fraction, limits))
    body.append(_spark_layer(s))
    return "".join(defs), "".join(body)


def render_view(
    s: Scenario,
    *,
    beam_fraction: float = 1.0,
    limits: TraceLimits | None = None,
    reveal: set[str] | None = None,
    shadows: dict[str, list[tuple[float, float, float, float]]] | None = None,
) -> bytes:
    """Full scenario as SVG bytes. `shadows` maps sphere id to dark
    overlay rectangles (x, y, width, height) in scene coordinates,
    typically cells of a radiance grid below the shadow threshold."""
    limits = limits or TraceLimits()
    vb = _bounds(s)
    defs, body = _view_parts(s, "", beam_fraction, limits, reveal, shadows)
    return _document(vb, defs, body)


def render_perspective(s: Scenario, focus: str, **kw) -> bytes:
    """View recentered on one sphere via the scene transform."""
    return render_view(perspective(s, focus), **kw)


def render_overview(
    ancestors: list[Scenario],
    focal: Scenario,
    descendants: list[Scenario],
    *,
    limits: TraceLimits | None = None,
) -> bytes:
    """Timeline strip: ancestors left of the focal miniature, descendants
    right, every slot a scaled-down full view."""
    limits = limits or TraceLimits()
    slots = list(ancestors) + [focal] + list(descendants)
    if not slots:
        raise ContractError("overview needs at least the focal scenario")
    slot_w = 1.0
    gap = 0.08
    defs_all = []
    body_all = []
    for i, scen in enumerate(slots):
        x0, y0, w, h = _bounds(scen)
        scale = slot_w / max(w, h)
        tx = i * (slot_w + gap) - x0 * scale
        ty = -(y0 + h) * scale  # scene top lands at slot top
        prefix = f"m{i}-"
        defs, body = _view_parts(scen, prefix, 1.0, limits, None, None)
        is_focal = scen is focal
        frame = (
            f'<rect class="slot{" focal" if is_focal else ""}" '
            f'x="{_f(i * (slot_w + gap))}" y="0" width="{_f(slot_w)}" height="{_f(slot_w)}" '
            f'fill="none" stroke="{STROKE}" '
            f'stroke-width="{_f(0.02 if is_focal else 0.006)}"/>'
        )
        defs_all.append(defs)
        body_all.append(
            f'<g class="slot-view" data-scenario="{scen.id}" '
            f'transform="translate({_f(tx)} {_f(ty + slot_w / 2 + (h * scale) / 2)}) scale({_f(scale)})">'
            f"{body}</g>{frame}"
        )
    total_w = len(slots) * slot_w + (len(slots) - 1) * gap
    vb = (-gap, -gap, total_w + 2 * gap, slot_w + 2 * gap)
    return _document(vb, "".join(defs_all), "".join(body_all))


def render_frames(
    s: Scenario,
    steps: int,
    *,
    limits: TraceLimits | None = None,
    reveal: set[str] | None = None,
) -> list[bytes]:
    """steps renders with beam polylines cut to k/steps of their
    arclength; the last frame is exactly the full render."""
    if steps < 1:
        raise ContractError("steps must be >= 1")
    return [
        render_view(s, beam_fraction=k / steps, limits=limits, reveal=reveal)
        for k in range(1, steps + 1)
    ]
