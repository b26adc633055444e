"""Steady-state interior illumination.

Iterative Monte-Carlo transport: every iteration emits a fixed budget of
rays (beam injections jittered over their spread, plus ambient emission
from uniformly sampled interior points), follows each ray through the
scene choosing reflection or refraction by Russian roulette, and
deposits path-integrated intensity into a grid over the sphere's
bounding square. The running per-cell mean converges to the equilibrium
radiance field; all sampling comes from one seeded generator, so a fixed
seed gives bit-identical results.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import ContractError, NotFoundError
from .optics import AIR, CompiledScene, beam_origin, compile_scene
from .scenes import Beam, PsycheSphere, Scenario

# roulette paths end when every channel falls below this fraction of the
# strongest initial ray
REL_FLOOR = 1e-4
MAX_BOUNCES = 200


@dataclass
class RadianceGrid:
    sphere_id: str
    cell_size: float
    origin: tuple[float, float]  # lower-left corner of the bounding square
    cells: np.ndarray  # (H, W, 3) radiance per unit area, >= 0
    interior_mask: np.ndarray  # (H, W) bool, cell center inside the circle
    area_fraction: np.ndarray  # (H, W) fraction of each cell inside the circle

    def luminance(self) -> np.ndarray:
        return self.cells.mean(axis=2)


@dataclass
class EquilibriumReport:
    iterations: int
    converged: bool
    uniformity: float
    shadow_fraction: float
    shadow_regions: list[set[tuple[int, int]]]
    mean_radiance: tuple[float, float, float]


@dataclass(frozen=True)
class EquilibriumParams:
    rays_per_iter: int = 400
    max_iter: int = 150
    tol: float = 1e-3
    seed: int = 0
    grid_res: int = 64


class _VecScene:
    """Scene flattened to numpy arrays for batch tracing."""

    def __init__(self, cs: CompiledScene):
        self.cx = np.array([c.center[0] for c in cs.circles])
        self.cy = np.array([c.center[1] for c in cs.circles])
        self.cr = np.array([c.radius for c in cs.circles])
        self.n_circles = len(cs.circles)

        self.wax = np.array([w.a[0] for w in cs.walls])
        self.way = np.array([w.a[1] for w in cs.walls])
        ex = np.array([w.b[0] - w.a[0] for w in cs.walls])
        ey = np.array([w.b[1] - w.a[1] for w in cs.walls])
        self.wex, self.wey = ex, ey
        wlen = np.hypot(ex, ey) if len(cs.walls) else np.zeros(0)
        with np.errstate(invalid="ignore", divide="ignore"):
            self.wnx = np.where(wlen > 0, -ey / wlen, 0.0)
            self.wny = np.where(wlen > 0, ex / wlen, 0.0)
        self.wn_slab = np.array([w.slab_index for w in cs.walls])
        self.wfactor = np.array([w.slab_factor for w in cs.walls]).reshape(-1, 3)
        self.n_walls = len(cs.walls)

        # regions ascending by radius; the last medium row is open air
        self.rcx = np.array([r.center[0] for r in cs.regions])
        self.rcy = np.array([r.center[1] for r in cs.regions])
        self.rr2 = np.array([r.radius**2 for r in cs.regions])
        media = [r.medium for r in cs.regions] + [AIR]
        self.med_n = np.array([m.refractive_index for m in media])
        ext = [m.extinction() for m in media]
        self.med_k = np.array([[c if c != math.inf else 1e30 for c in e] for e in ext])
        self.n_regions = len(cs.regions)
        self.probe = cs.probe

    def region_of(self, px: np.ndarray, py: np.ndarray) -> np.ndarray:
        idx = np.full(px.shape, self.n_regions, dtype=np.int64)
        for g in range(self.n_regions - 1, -1, -1):  # big to small; small wins
            inside = (px - self.rcx[g]) ** 2 + (py - self.rcy[g]) ** 2 <= self.rr2[g]
            idx[inside] = g
        return idx


def _nearest_hits(vs: _VecScene, px, py, dx, dy):
    """Nearest forward surface hit per ray. Returns (t, kind, index) with
    kind -1 none, 0 circle, 1 wall."""
    n = px.shape[0]
    t_best = np.full(n, np.inf)
    kind = np.full(n, -1, dtype=np.int64)
    which = np.full(n, -1, dtype=np.int64)
    for ci in range(vs.n_circles):
        mx = px - vs.cx[ci]
        my = py - vs.cy[ci]
        b = dx * mx + dy * my
        c0 = mx * mx + my * my - vs.cr[ci] ** 2
        disc = b * b - c0
        ok = disc >= 0.0
        sq = np.sqrt(np.where(ok, disc, 0.0))
        t1 = -b - sq
        t2 = -b + sq
        t = np.where(t1 > 1e-9, t1, np.where(t2 > 1e-9, t2, np.inf))
        t = np.where(ok, t, np.inf)
        # tangential grazes are misses
        hx = px + t * dx
        hy = py + t * dy
        with np.errstate(invalid="ignore"):
            dn = (dx * (hx - vs.cx[ci]) + dy * (hy - vs.cy[ci])) / vs.cr[ci]
        t = np.where(np.abs(dn) < 1e-9, np.inf, t)
        better = t < t_best
        t_best = np.where(better, t, t_best)
        kind = np.where(better, 0, kind)
        which = np.where(better, ci, which)
    for wi in range(vs.n_walls):
        denom = dx * vs.wey[wi] - dy * vs.wex[wi]
        elen = math.hypot(vs.wex[wi], vs.wey[wi])
        ok = np.abs(denom) >= 1e-9 * elen
        denom_safe = np.where(ok, denom, 1.0)
        aox = vs.wax[wi] - px
        aoy = vs.way[wi] - py
        t = (aox * vs.wey[wi] - aoy * vs.wex[wi]) / denom_safe
        ss = (aox * dy - aoy * dx) / denom_safe
        valid = ok & (t > 1e-9) & (ss >= 0.0) & (ss <= 1.0)
        t = np.where(valid, t, np.inf)
        better = t < t_best
        t_best = np.where(better, t, t_best)
        kind = np.where(better, 1, kind)
        which = np.where(better, wi, which)
    return t_best, kind, which


@dataclass
class _GridGeom:
    res: int
    cell: float
    x0: float
    y0: float
    mask: np.ndarray
    frac: np.ndarray


def _grid_geometry(sphere: PsycheSphere, res: int) -> _GridGeom:
    r = sphere.radius
    cx, cy = sphere.center
    cell = 2.0 * r / res
    x0, y0 = cx - r, cy - r
    ax = x0 + (np.arange(res) + 0.5) * cell
    ay = y0 + (np.arange(res) + 0.5) * cell
    gx, gy = np.meshgrid(ax, ay)  # [iy, ix]
    mask = (gx - cx) ** 2 + (gy - cy) ** 2 <= r * r
    # 4x4 subsamples per cell for the inside-area fraction
    sub = (np.arange(4) + 0.5) / 4.0
    frac = np.zeros((res, res))
    for oy in sub:
        for ox in sub:
            sx = x0 + (np.arange(res) + ox) * cell
            sy = y0 + (np.arange(res) + oy) * cell
            ggx, ggy = np.meshgrid(sx, sy)
            frac += ((ggx - cx) ** 2 + (ggy - cy) ** 2 <= r * r).astype(float)
    frac /= 16.0
    return _GridGeom(res, cell, x0, y0, mask, frac)


def _deposit(acc, geom: _GridGeom, vs: _VecScene, px, py, dx, dy, energy, med, seg_len):
    """Midpoint-quadrature deposit of path-integrated intensity."""
    if px.shape[0] == 0:
        return
    h0 = geom.cell / 2.0
    n_steps = np.maximum(1, np.ceil(seg_len / h0)).astype(np.int64)
    h = seg_len / n_steps
    total = int(n_steps.sum())
    if total == 0:
        return
    rid = np.repeat(np.arange(px.shape[0]), n_steps)
    offsets = np.repeat(np.cumsum(n_steps) - n_steps, n_steps)
    j = np.arange(total) - offsets
    h_flat = h[rid]
    s_mid = (j + 0.5) * h_flat
    qx = px[rid] + s_mid * dx[rid]
    qy = py[rid] + s_mid * dy[rid]
    k = vs.med_k[med[rid]]  # (total, 3)
    w = energy[rid] * np.exp(-k * s_mid[:, None]) * h_flat[:, None]
    ix = np.floor((qx - geom.x0) / geom.cell).astype(np.int64)
    iy = np.floor((qy - geom.y0) / geom.cell).astype(np.int64)
    ok = (ix >= 0) & (ix < geom.res) & (iy >= 0) & (iy < geom.res)
    np.add.at(acc, (iy[ok], ix[ok]), w[ok])


def _sample_interior_points(rng, sphere: PsycheSphere, scenario: Scenario, n: int):
    """Uniform points in the sphere's interior, excluding bubbles and
    nested child spheres (they do not host this sphere's emission)."""
    core_r = sphere.radius
    if sphere.shell is not None:
        core_r = sphere.radius * (1.0 - sphere.shell.thickness)
    cx, cy = sphere.center
    holes = [(b.center[0], b.center[1], b.radius) for b in sphere.bubbles]
    for cid in sphere.children:
        for sp in scenario.spheres:
            if sp.id == cid:
                holes.append((sp.center[0], sp.center[1], sp.radius))
    out_x = np.empty(0)
    out_y = np.empty(0)
    while out_x.shape[0] < n:
        m = max(16, 2 * (n - out_x.shape[0]))
        rr = core_r * np.sqrt(rng.random(m))
        th = 2.0 * math.pi * rng.random(m)
        qx = cx + rr * np.cos(th)
        qy = cy + rr * np.sin(th)
        keep = np.ones(m, dtype=bool)
        for hx, hy, hr in holes:
            keep &= (qx - hx) ** 2 + (qy - hy) ** 2 > hr * hr
        out_x = np.concatenate([out_x, qx[keep]])
        out_y = np.concatenate([out_y, qy[keep]])
    return out_x[:n], out_y[:n]


def _emit_batch(rng, scenario, sphere, injections, rays_total):
    """One iteration's rays: origins, directions, per-ray energy rows."""
    weights = []
    for b in injections:
        weights.append(sum(b.intensity) / 3.0)
    ambient_w = sphere.light_level
    weights.append(ambient_w)
    weights = np.array(weights, dtype=float)
    live = weights > 0.0
    if not live.any():
        return (np.empty(0), np.empty(0), np.empty((2, 0)), np.empty((0, 3)))
    # one ray minimum per live source, remainder split by weight
    counts = np.zeros(len(weights), dtype=np.int64)
    counts[live] = 1
    rest = rays_total - int(counts.sum())
    if rest < 0:
        raise ContractError("rays_per_iter too small for the number of sources")
    if rest > 0:
        w = np.where(live, weights, 0.0)
        cum = np.cumsum(w) / w.sum() * rest
        bounds = np.round(cum).astype(np.int64)
        counts += np.diff(np.concatenate([[0], bounds]))

    xs, ys, dxs, dys, es = [], [], [], [], []
    for i, b in enumerate(injections):
        m = int(counts[i])
        if m == 0:
            continue
        ox, oy = beam_origin(scenario, b)
        ang = b.direction + (rng.random(m) - 0.5) * b.spread
        xs.append(np.full(m, ox))
        ys.append(np.full(m, oy))
        dxs.append(np.cos(ang))
        dys.append(np.sin(ang))
        es.append(np.tile(np.array(b.intensity) / m, (m, 1)))
    m = int(counts[-1])
    if m > 0:
        qx, qy = _sample_interior_points(rng, sphere, scenario, m)
        ang = 2.0 * math.pi * rng.random(m)
        xs.append(qx)
        ys.append(qy)
        dxs.append(np.cos(ang))
        dys.append(np.sin(ang))
        es.append(np.full((m, 3), sphere.light_level / m))
    return (
        np.concatenate(xs),
        np.concatenate(ys),
        np.stack([np.concatenate(dxs), np.concatenate(dys)], axis=0),
        np.concatenate(es, axis=0),
    )


def _trace_iteration(vs, geom, px, py, dx, dy, energy, rng, floor, target):
    """Trace one batch to extinction, depositing into a fresh grid."""
    acc = np.zeros((geom.res, geom.res, 3))
    tcx, tcy, tr = target
    med = vs.region_of(px, py)
    for _ in range(MAX_BOUNCES):
        if px.shape[0] == 0:
            break
        t, kind, which = _nearest_hits(vs, px, py, dx, dy)
        hit = kind >= 0
        _deposit(acc, geom, vs, px[hit], py[hit], dx[hit], dy[hit], energy[hit], med[hit], t[hit])
        # drop rays that found nothing ahead
        px, py, dx, dy = px[hit], py[hit], dx[hit], dy[hit]
        energy, med, t, kind, which = energy[hit], med[hit], t[hit], kind[hit], which[hit]
        if px.shape[0] == 0:
            break
        energy = energy * np.exp(-vs.med_k[med] * t[:, None])
        alive = energy.max(axis=1) >= floor
        px, py, dx, dy = px[alive], py[alive], dx[alive], dy[alive]
        energy, med, t, kind, which = energy[alive], med[alive], t[alive], kind[alive], which[alive]
        if px.shape[0] == 0:
            break
        hx = px + t * dx
        hy = py + t * dy
        # surface normal oriented against the ray
        nx = np.empty_like(hx)
        ny = np.empty_like(hy)
        circ = kind == 0
        if circ.any():
            ci = which[circ]
            nx[circ] = (hx[circ] - vs.cx[ci]) / vs.cr[ci]
            ny[circ] = (hy[circ] - vs.cy[ci]) / vs.cr[ci]
        wall = kind == 1
        if wall.any():
            wi = which[wall]
            nx[wall] = vs.wnx[wi]
            ny[wall] = vs.wny[wi]
        flip = dx * nx + dy * ny > 0.0
        nx = np.where(flip, -nx, nx)
        ny = np.where(flip, -ny, ny)

        n1 = vs.med_n[med]
        med2 = med.copy()
        n2 = np.empty_like(n1)
        if circ.any():
            other = vs.region_of(
                hx[circ] + vs.probe * dx[circ], hy[circ] + vs.probe * dy[circ]
            )
            med2[circ] = other
            n2[circ] = vs.med_n[other]
        if wall.any():
            n2[wall] = vs.wn_slab[which[wall]]

        ci1 = np.clip(-(dx * nx + dy * ny), 0.0, 1.0)
        ratio = n1 / n2
        s2 = ratio * ratio * (1.0 - ci1 * ci1)
        tir = s2 > 1.0
        # unpolarized Fresnel reflectance
        c2 = np.sqrt(np.clip(1.0 - s2, 0.0, 1.0))
        with np.errstate(divide="ignore", invalid="ignore"):
            rs = ((n1 * ci1 - n2 * c2) / (n1 * ci1 + n2 * c2)) ** 2
            rp = ((n1 * c2 - n2 * ci1) / (n1 * c2 + n2 * ci1)) ** 2
        refl_p = np.where(tir, 1.0, np.clip(0.5 * (rs + rp), 0.0, 1.0))
        refl_p = np.where(n1 == n2, 0.0, refl_p)

        u = rng.random(px.shape[0])
        reflecting = u < refl_p

        # reflected: mirror direction, medium unchanged
        dot = dx * nx + dy * ny
        rdx = dx - 2.0 * dot * nx
        rdy = dy - 2.0 * dot * ny
        # refracted: Snell bend
        kk = ratio * ci1 - c2
        fdx = ratio * dx + kk * nx
        fdy = ratio * dy + kk * ny
        fn = np.hypot(fdx, fdy)
        fn = np.where(fn > 0, fn, 1.0)
        fdx /= fn
        fdy /= fn

        new_dx = np.where(reflecting, rdx, fdx)
        new_dy = np.where(reflecting, rdy, fdy)
        med = np.where(reflecting | wall, med, med2)
        # crossing a fracture slab costs its width-proportional factor
        through_wall = wall & ~reflecting
        if through_wall.any():
            energy[through_wall] *= vs.wfactor[which[through_wall]]

        px, py, dx, dy = hx, hy, new_dx, new_dy
        # escaped the target disk and moving away: no further contribution
        ox = px - tcx
        oy = py - tcy
        out = (ox * ox + oy * oy > tr * tr * 1.000001) & (ox * dx + oy * dy > 0.0)
        keep = ~out
        px, py, dx, dy = px[keep], py[keep], dx[keep], dy[keep]
        energy, med = energy[keep], med[keep]
    return acc


def compute_equilibrium(
    scene: Scenario,
    sphere_id: str,
    injections: list[Beam] | None = None,
    params: EquilibriumParams | None = None,
) -> tuple[RadianceGrid, EquilibriumReport]:
    """Iterate Monte-Carlo transport until the running mean settles.

    Convergence: max relative change of per-cell luminance between
    consecutive running means, over interior cells above 1e-12, falls
    below params.tol. Fixed seed means bit-identical output.
    """
    injections = injections or []
    params = params or EquilibriumParams()
    if params.rays_per_iter < 1 or params.max_iter < 1 or params.grid_res < 4:
        raise ContractError("params must be positive (rays_per_iter, max_iter, grid_res)")
    if params.tol <= 0.0:
        raise ContractError("tol must be > 0")
    sphere = next((s for s in scene.spheres if s.id == sphere_id), None)
    if sphere is None:
        raise NotFoundError(f"no sphere {sphere_id!r}")

    cs = compile_scene(scene)
    vs = _VecScene(cs)
    geom = _grid_geometry(sphere, params.grid_res)
    rng = np.random.Generator(np.random.PCG64(params.seed))
    target = (sphere.center[0], sphere.center[1], sphere.radius)

    total = np.zeros((geom.res, geom.res, 3))
    prev_lum = None
    iterations = 1
    converged = False

    no_sources = sphere.light_level <= 0.0 and all(
        sum(b.intensity) <= 0.0 for b in injections
    )
    if not no_sources:
        floor_scale = max(
            [sphere.light_level] + [max(b.intensity) for b in injections] + [0.0]
        )
        floor = REL_FLOOR * floor_scale / max(1, params.rays_per_iter)
        for it in range(1, params.max_iter + 1):
            iterations = it
            px, py, d, energy = _emit_batch(rng, scene, sphere, injections, params.rays_per_iter)
            acc = _trace_iteration(
                vs, geom, px, py, d[0], d[1], energy, rng, floor, target
            )
            total += acc
            mean = total / it
            lum = mean.mean(axis=2)
            if prev_lum is not None:
                base = prev_lum > 1e-12
                sig = base & geom.mask
                if sig.any():
                    rel = np.abs(lum[sig] - prev_lum[sig]) / prev_lum[sig]
                    if rel.max() < params.tol:
                        converged = True
                else:
                    converged = True
            prev_lum = lum
            if converged:
                break
        mean = total / iterations
    else:
        mean = total
        converged = True

    # normalize by in-circle cell area so edge cells read as densities
    area = geom.frac * geom.cell * geom.cell
    with np.errstate(divide="ignore", invalid="ignore"):
        cells = np.where(area[:, :, None] > 0.0, mean / np.where(area == 0, 1.0, area)[:, :, None], 0.0)
    grid = RadianceGrid(
        sphere_id=sphere_id,
        cell_size=geom.cell,
        origin=(geom.x0, geom.y0),
        cells=cells,
        interior_mask=geom.mask & (geom.frac > 0.0),
        area_fraction=geom.frac,
    )
    uni = uniformity(grid)
    regions = shadow_regions(grid)
    n_interior = int(grid.interior_mask.sum())
    n_shadow = sum(len(r) for r in regions)
    mean_rad = tuple(float(v) for v in grid.cells[grid.interior_mask].mean(axis=0)) if n_interior else (0.0, 0.0, 0.0)
    report = EquilibriumReport(
        iterations=iterations,
        converged=converged,
        uniformity=uni,
        shadow_fraction=(n_shadow / n_interior) if n_interior else 0.0,
        shadow_regions=regions,
        mean_radiance=mean_rad,
    )
    return grid, report


def uniformity(grid: RadianceGrid) -> float:
    """1 - std/mean over interior luminance, clamped to [0, 1]; 0 when dark."""
    mask = grid.interior_mask
    if not mask.any():
        raise ContractError("grid has no interior cells")
    lum = grid.luminance()[mask]
    m = float(lum.mean())
    if m <= 0.0:
        return 0.0
    if float(lum.min()) == float(lum.max()):
        return 1.0  # reduction dust from np.std would cost an ulp here
    return float(min(1.0, max(0.0, 1.0 - float(lum.std()) / m)))


def shadow_regions(grid: RadianceGrid, tau: float = 0.25) -> list[set[tuple[int, int]]]:
    """4-connected interior components with luminance below tau * mean,
    sorted by size descending. A dark grid is one all-interior shadow."""
    if not (0.0 < tau < 1.0):
        raise ContractError("tau must be in (0, 1)")
    mask = grid.interior_mask
    if not mask.any():
        raise ContractError("grid has no interior cells")
    lum = grid.luminance()
    m = float(lum[mask].mean())
    if m <= 0.0:
        shadow = mask.copy()
    else:
        shadow = mask & (lum < tau * m)
    labeled, count = ndimage.label(shadow)
    comps = []
    for lab in range(1, count + 1):
        ys, xs = np.nonzero(labeled == lab)
        comps.append({(int(y), int(x)) for y, x in zip(ys, xs)})
    comps.sort(key=len, reverse=True)
    return comps


def enlightenment_score(grid: RadianceGrid, report: EquilibriumReport, sphere: PsycheSphere) -> float:
    """Heuristic index in [0, 1]: uniform, shadow-free, unobstructed interiors
    score high; fractures and opaque bubbles each halve the score."""
    score = report.uniformity * (1.0 - report.shadow_fraction)
    if sphere.fractures:
        score *= 0.5
    if any(b.medium.absorption >= 10.0 for b in sphere.bubbles):
        score *= 0.5
    return float(min(1.0, max(0.0, score)))


def grid_to_ppm(grid: RadianceGrid) -> bytes:
    """P6 heatmap; channels scaled by the grid's peak, exterior black."""
    cells = np.where(grid.interior_mask[:, :, None], grid.cells, 0.0)
    peak = float(cells.max())
    if peak <= 0.0:
        peak = 1.0
    img = np.clip(cells / peak * 255.0, 0.0, 255.0).astype(np.uint8)
    img = img[::-1, :, :]  # rows top to bottom
    header = f"P6\n{img.shape[1]} {img.shape[0]}\n255\n".encode()
    return header + img.tobytes()


def grid_to_doc(grid: RadianceGrid) -> dict:
    """JSON-ready block for scenario reports."""
    return {
        "sphere_id": grid.sphere_id,
        "width": int(grid.cells.shape[1]),
        "height": int(grid.cells.shape[0]),
        "cell_size": float(grid.cell_size),
        "origin": [float(grid.origin[0]), float(grid.origin[1])],
        "cells": [[[float(c) for c in px] for px in row] for row in grid.cells],
        "interior_mask": [[bool(v) for v in row] for row in grid.interior_mask],
    }
