"""Acceptance gate: end-to-end checks, one test per criterion.

Each test prints a single PASS line with its runtime once every
assertion inside it has held.
"""

import copy
import math
import signal
import statistics
import subprocess
import sys
import textwrap
import time
import xml.etree.ElementTree as ET

import numpy as np
import pytest
from fastapi.testclient import TestClient

from liveia.api import create_app
from liveia.optics import (
    TIR,
    Ray,
    TraceEvent,
    beam_rays,
    compile_scene,
    fresnel_split,
    refract_direction,
    trace_ray,
)
from liveia.radiance import EquilibriumParams, compute_equilibrium
from liveia.scenes import (
    Beam,
    Bubble,
    Fracture,
    Medium,
    PsycheSphere,
    Scenario,
    Shell,
    Spark,
    content_digest,
    deserialize,
    fork,
    new_scenario,
    serialize,
    validate,
)
from liveia.store import ScenarioStore
from liveia.waves import Waveform, WaveComponent, decompose, sample, superpose

T0 = "2026-01-01T00:00:00.000000Z"

CRITICAL_DEG = 41.8103149


def bare_sphere_scene(absorption=0.0):
    sphere = PsycheSphere(
        id="s1",
        label="",
        center=(0.0, 0.0),
        radius=1.0,
        interior=Medium(1.5, absorption=absorption),
        light_level=0.0,
    )
    return Scenario(
        id="sc", title="t", spheres=[sphere], beams=[], sparks=[], notes="", created_at=T0
    )


def glowing_sphere(light_level=1.0, fractures=(), bubbles=()):
    s = PsycheSphere(
        id="s1",
        label="psyche",
        center=(0.0, 0.0),
        radius=1.0,
        interior=Medium(1.5, absorption=1.5),
        light_level=light_level,
        fractures=list(fractures),
        bubbles=list(bubbles),
    )
    return Scenario(
        id="sc1", title="t", spheres=[s], beams=[], sparks=[], notes="", created_at=T0
    )


def random_fractures(seed, count=8):
    rng = np.random.default_rng(seed + 7777)
    out = []
    for _ in range(count):
        a = rng.uniform(0, 2 * math.pi)
        r0 = rng.uniform(0.1, 0.7)
        p = (r0 * math.cos(a), r0 * math.sin(a))
        b = rng.uniform(0, 2 * math.pi)
        ln = rng.uniform(0.5, 0.9)
        q = (p[0] + ln * math.cos(b), p[1] + ln * math.sin(b))
        d = math.hypot(*q)
        if d > 0.95:
            q = (q[0] * 0.95 / d, q[1] * 0.95 / d)
        out.append(Fracture(endpoints=(p, q), width=0.1, medium=Medium(1.2, absorption=10.0)))
    return out


def _unit(dx, dy):
    h = math.hypot(dx, dy)
    return dx / h, dy / h


def test_criterion_1_analytic_optics():
    start = time.perf_counter()

    # locate the critical angle by bisecting the implementation itself
    def refracts(theta):
        d = (math.sin(theta), -math.cos(theta))
        return refract_direction(d, (0.0, 1.0), 1.5, 1.0) is not TIR

    lo, hi = 0.5, 1.2
    assert refracts(lo) and not refracts(hi)
    for _ in range(120):
        mid = 0.5 * (lo + hi)
        if refracts(mid):
            lo = mid
        else:
            hi = mid
    found_deg = math.degrees(0.5 * (lo + hi))
    assert abs(found_deg - CRITICAL_DEG) <= 1e-6

    # normal-incidence reflectance of the 1.0 -> 1.5 interface
    r0, _ = fresnel_split(0.0, 1.0, 1.5)
    assert abs(r0 - 0.04) <= 1e-9

    # energy split sums to one over a 1000-point incidence sweep
    crit = math.asin(1.0 / 1.5)
    for theta in np.linspace(0.0, math.pi / 2 * 0.999, 500):
        r, t = fresnel_split(float(theta), 1.0, 1.5)
        assert abs(r + t - 1.0) <= 1e-12
    for theta in np.linspace(0.0, crit - 1e-9, 500):
        r, t = fresnel_split(float(theta), 1.5, 1.0)
        assert abs(r + t - 1.0) <= 1e-12

    # Snell holds at every refraction across 10,000 random traces
    cs = compile_scene(bare_sphere_scene())
    rng = np.random.default_rng(20260819)
    checked = 0
    for _ in range(10_000):
        ox, oy = (float(v) for v in rng.uniform(-2.0, 2.0, 2))
        if abs(math.hypot(ox, oy) - 1.0) < 1e-6:
            ox += 0.01
        ang = float(rng.uniform(0.0, 2 * math.pi))
        for p in trace_ray(cs, Ray((ox, oy), (math.cos(ang), math.sin(ang)))):
            assert len(p.segments) == len(p.events)
            for i, ev in enumerate(p.events):
                if ev is not TraceEvent.REFRACT:
                    continue
                seg_in, seg_out = p.segments[i], p.segments[i + 1]
                px, py = seg_in.end
                nx, ny = _unit(px, py)
                ux, uy = _unit(seg_in.end[0] - seg_in.start[0], seg_in.end[1] - seg_in.start[1])
                vx, vy = _unit(seg_out.end[0] - seg_out.start[0], seg_out.end[1] - seg_out.start[1])
                sin1 = abs(ux * ny - uy * nx)
                sin2 = abs(vx * ny - vy * nx)
                n1, n2 = (1.5, 1.0) if ux * nx + uy * ny > 0 else (1.0, 1.5)
                assert abs(n1 * sin1 - n2 * sin2) < 1e-9
                checked += 1
    assert checked > 5000

    elapsed = time.perf_counter() - start
    assert elapsed < 10.0
    print(f"ACCEPTANCE 1 analytic optics: PASS ({elapsed:.1f}s, {checked} refractions checked)")


def test_criterion_2_deflection_by_launch_angle():
    start = time.perf_counter()
    cs = compile_scene(bare_sphere_scene())

    # radial rays from the center leave unbent
    for k in range(360):
        a = math.radians(k)
        through = trace_ray(cs, Ray((0.0, 0.0), (math.cos(a), math.sin(a))))[0]
        assert through.events[0] is TraceEvent.REFRACT
        assert through.total_deflection < 1e-9

    # from 0.9R the bend grows with launch angle, then flips to TIR
    crit_launch = math.asin((1.0 / 1.5) / 0.9)
    prev = -1.0
    for phi in np.linspace(0.02, crit_launch - 0.01, 40):
        through = trace_ray(cs, Ray((0.9, 0.0), (math.cos(phi), math.sin(phi))))[0]
        assert through.events[0] is TraceEvent.REFRACT
        assert through.total_deflection > prev
        prev = through.total_deflection
    for phi in np.linspace(crit_launch + 0.01, math.pi - 0.85, 20):
        first = trace_ray(cs, Ray((0.9, 0.0), (math.cos(phi), math.sin(phi))))[0]
        assert first.events[0] is TraceEvent.TIR

    elapsed = time.perf_counter() - start
    assert elapsed < 5.0
    print(f"ACCEPTANCE 2 deflection vs launch angle: PASS ({elapsed:.1f}s)")


def test_criterion_3_mirror_focus_and_exit_spread():
    start = time.perf_counter()
    cs = compile_scene(bare_sphere_scene())

    # collimated fan reflected off the inner wall focuses near 0.5R
    for y in np.linspace(-0.1, 0.1, 21):
        if abs(y) < 1e-6:
            continue
        paths = trace_ray(cs, Ray((-0.5, float(y)), (1.0, 0.0)))
        mirror = next(p for p in paths if p.events[0] is TraceEvent.REFLECT)
        seg = mirror.segments[1]
        dx, dy = seg.end[0] - seg.start[0], seg.end[1] - seg.start[1]
        assert abs(dy) > 1e-12
        x_cross = seg.start[0] - seg.start[1] / dy * dx
        assert abs(x_cross - 0.5) <= 0.025

    # a diverging fan exits at least as wide as it was launched
    beam = Beam(
        id="fan",
        source_sphere="s1",
        origin_depth=0.8,
        origin_angle=0.0,
        direction=0.0,
        spread=0.2,
        ray_count=9,
        intensity=(1.0, 1.0, 1.0),
    )
    angles = []
    for ray in beam_rays(cs, beam):
        through = trace_ray(cs, ray)[0]
        assert through.events[0] is TraceEvent.REFRACT
        seg = through.segments[1]
        angles.append(math.atan2(seg.end[1] - seg.start[1], seg.end[0] - seg.start[0]))
    assert max(angles) - min(angles) >= 0.2

    elapsed = time.perf_counter() - start
    print(f"ACCEPTANCE 3 mirror focus and exit spread: PASS ({elapsed:.1f}s)")


def test_criterion_4_equilibrium_statistics():
    start = time.perf_counter()
    plain_iters, plain_uni, frac_iters, frac_uni = [], [], [], []
    for seed in range(20):
        params = EquilibriumParams(
            rays_per_iter=600, max_iter=400, tol=0.05, seed=seed, grid_res=48
        )
        _, plain = compute_equilibrium(glowing_sphere(), "s1", [], params)
        plain_iters.append(plain.iterations)
        plain_uni.append(plain.uniformity)
        fractured_scene = glowing_sphere(fractures=random_fractures(seed))
        _, fractured = compute_equilibrium(fractured_scene, "s1", [], params)
        frac_iters.append(fractured.iterations)
        frac_uni.append(fractured.uniformity)

    assert statistics.median(frac_iters) > statistics.median(plain_iters)
    wins = sum(f < p for f, p in zip(frac_uni, plain_uni))
    assert wins >= 18  # 90% of 20 seeds
    assert min(plain_uni) >= 0.9

    # an opaque inclusion keeps its interior dark
    bubble = Bubble(center=(0.3, 0.0), radius=0.4, medium=Medium(1.0, absorption=10.0))
    for seed in range(5):
        params = EquilibriumParams(
            rays_per_iter=600, max_iter=400, tol=0.05, seed=seed, grid_res=48
        )
        grid, _ = compute_equilibrium(glowing_sphere(bubbles=[bubble]), "s1", [], params)
        n = grid.cells.shape[0]
        ax = grid.origin[0] + (np.arange(n) + 0.5) * grid.cell_size
        ay = grid.origin[1] + (np.arange(n) + 0.5) * grid.cell_size
        gx, gy = np.meshgrid(ax, ay)
        margin = 2.0 * grid.cell_size * math.sqrt(2)  # past the penetration skin
        deep = (gx - 0.3) ** 2 + gy**2 <= (0.4 - margin) ** 2
        lum = grid.luminance()
        deep_mean = lum[deep & grid.interior_mask].mean()
        sphere_mean = lum[grid.interior_mask].mean()
        assert deep_mean < 0.05 * sphere_mean

    elapsed = time.perf_counter() - start
    assert elapsed < 60.0
    print(
        "ACCEPTANCE 4 equilibrium statistics: PASS "
        f"({elapsed:.1f}s, iters {statistics.median(plain_iters)} -> {statistics.median(frac_iters)}, "
        f"uniformity wins {wins}/20, plain min {min(plain_uni):.3f})"
    )


def test_criterion_5_wave_identities():
    start = time.perf_counter()

    one = Waveform(components=[WaveComponent(frequency=3.0, amplitude=0.7, phase=0.9)])
    double = superpose(one, one)
    a = sample(one, 1.0, 256.0)
    b = sample(double, 1.0, 256.0)
    assert max(abs(2 * x - y) for x, y in zip(a.samples, b.samples)) <= 1e-12

    anti = Waveform(components=[WaveComponent(frequency=3.0, amplitude=0.7, phase=0.9 + math.pi)])
    silent = sample(superpose(one, anti), 1.0, 256.0)
    assert max(abs(x) for x in silent.samples) < 1e-9

    mix = Waveform(
        components=[
            WaveComponent(frequency=5.0, amplitude=1.0, phase=0.3),
            WaveComponent(frequency=17.0, amplitude=0.6, phase=0.7),
            WaveComponent(frequency=42.0, amplitude=0.3, phase=1.1),
        ]
    )
    comps = decompose(sample(mix, 1.0, 256.0))
    assert len(comps) == 3
    recovered = {c.frequency: c.amplitude for c in comps}
    for want in mix.components:
        assert want.frequency in recovered
        assert abs(recovered[want.frequency] - want.amplitude) <= 0.01 * want.amplitude

    elapsed = time.perf_counter() - start
    print(f"ACCEPTANCE 5 wave identities: PASS ({elapsed:.1f}s)")


def five_sphere_scenario():
    s = new_scenario("constellation")
    s.id = "sc-accept"
    s.created_at = T0
    s.notes = "five spheres, all features exercised"
    s.spheres = [
        PsycheSphere(
            id="s1",
            label="center of the study",
            center=(0.0, 0.0),
            radius=1.0,
            interior=Medium(1.5, absorption=0.8, tint=(1.0, 0.9, 0.8)),
            light_level=0.7,
            shell=Shell(
                thickness=0.15,
                medium=Medium(1.6, absorption=0.2),
                opacity=0.4,
                sectors=[(0.0, 1.2, "#aa3355"), (2.0, 2.8, "#3355aa")],
            ),
            fractures=[
                Fracture(endpoints=((0.1, 0.1), (0.5, -0.2)), width=0.06, medium=Medium(1.2))
            ],
            bubbles=[Bubble(center=(-0.3, 0.1), radius=0.15, medium=Medium(1.0, absorption=10.0))],
            children=["s2"],
        ),
        PsycheSphere(
            id="s2",
            label="nested",
            center=(0.3, 0.2),
            radius=0.25,
            interior=Medium(1.4, absorption=0.5),
            light_level=0.2,
        ),
        PsycheSphere(
            id="s3",
            label="companion",
            center=(2.5, 0.0),
            radius=0.8,
            interior=Medium(1.5),
            light_level=0.3,
            border_blur=0.2,
            children=["s4"],
        ),
        PsycheSphere(
            id="s4",
            label="inner companion",
            center=(2.5, 0.2),
            radius=0.3,
            interior=Medium(1.3),
            light_level=0.0,
        ),
        PsycheSphere(
            id="s5",
            label="revealed",
            center=(-2.5, 0.0),
            radius=0.5,
            interior=Medium(1.5, absorption=2.0),
            light_level=1.0,
            revealed=True,
        ),
    ]
    s.beams = [
        Beam(
            id="b1",
            source_sphere="s1",
            origin_depth=0.5,
            origin_angle=1.0,
            direction=2.0,
            spread=0.3,
            ray_count=4,
            intensity=(1.0, 0.5, 0.2),
            waveform=Waveform(
                components=[
                    WaveComponent(frequency=2.0, amplitude=1.0, phase=0.5),
                    WaveComponent(frequency=5.0, amplitude=0.3, phase=1.2),
                ],
                label="carrier",
            ),
        ),
        Beam(
            id="b2",
            origin_depth=0.9,
            origin_angle=3.0,
            direction=0.1,
            spread=0.0,
            ray_count=1,
            intensity=(0.4, 0.4, 0.4),
        ),
    ]
    s.sparks = [Spark(sphere_pair=("s1", "s3"), intensity=0.8)]
    return s


def test_criterion_6_scenario_lifecycle(tmp_path):
    start = time.perf_counter()

    s = five_sphere_scenario()
    assert validate(s) == []
    blob = serialize(s)
    assert serialize(deserialize(blob)) == blob

    # forking never disturbs the parent's content identity
    before = content_digest(s)
    child = fork(s)
    assert content_digest(s) == before
    assert child.parent == s.id
    assert child.id != s.id
    assert [sp.id for sp in child.spheres] == [sp.id for sp in s.spheres]

    # acknowledged writes survive a hard kill
    script = textwrap.dedent(
        """
        import os, sys
        from liveia.scenes import new_scenario
        from liveia.store import ScenarioStore
        store = ScenarioStore(sys.argv[1])
        for i in range(5):
            s = new_scenario(f"run {i}")
            d = store.put(s)
            print(f"{s.id} {d}", flush=True)
        os.kill(os.getpid(), 9)
        """
    )
    proc = subprocess.run(
        [sys.executable, "-c", script, str(tmp_path / "killbox")],
        capture_output=True,
        text=True,
        timeout=60,
    )
    assert proc.returncode == -signal.SIGKILL
    acked = [line.split() for line in proc.stdout.splitlines() if line.strip()]
    assert len(acked) == 5
    with ScenarioStore(tmp_path / "killbox") as store:
        for sid, digest in acked:
            assert store.digest_of(sid) == digest
            store.get(sid)

    # an exact duplicate is the nearest neighbour, at similarity one
    with ScenarioStore(tmp_path / "corpus") as store:
        store.put(s)
        twin = copy.deepcopy(s)
        twin.id = "sc-twin"
        twin.children = []
        store.put(twin)
        other = new_scenario("unrelated")
        other.beams.append(
            Beam(id="w", origin_depth=0.2, origin_angle=1.0, direction=2.0,
                 spread=0.9, ray_count=4, intensity=(0.1, 0.1, 0.1))
        )
        store.put(other)
        ranked = store.similar(s.id, k=2)
        assert ranked[0][0] == "sc-twin"
        assert abs(ranked[0][1] - 1.0) <= 1e-9

    elapsed = time.perf_counter() - start
    print(f"ACCEPTANCE 6 scenario lifecycle: PASS ({elapsed:.1f}s)")


def test_criterion_7_service_flow(tmp_path):
    start = time.perf_counter()
    app = create_app(tmp_path / "data")
    with TestClient(app) as client:
        s = five_sphere_scenario()
        created = client.post("/scenarios", content=serialize(s))
        assert created.status_code == 201

        forked = client.post(f"/scenarios/{s.id}/fork")
        assert forked.status_code == 201
        child_id = forked.json()["id"]
        assert client.get(f"/scenarios/{child_id}").status_code == 200

        traced = client.post(f"/scenarios/{s.id}/trace", json={"beam": "b1"})
        assert traced.status_code == 200
        assert traced.json()["paths"]

        rendered = client.get(f"/scenarios/{s.id}/render")
        assert rendered.status_code == 200
        assert rendered.headers["content-type"].startswith("image/svg+xml")
        ET.fromstring(rendered.content)

        frames = client.get(f"/scenarios/{s.id}/frames", params={"steps": 6})
        assert frames.status_code == 200
        frame_list = frames.json()["frames"]
        assert len(frame_list) == 6
        for frame in frame_list:
            ET.fromstring(frame)
        assert frame_list[-1].encode("utf-8") == rendered.content

        # editing a forked scenario is refused with a version conflict
        parent = deserialize(client.get(f"/scenarios/{s.id}").content)
        parent.title = "history rewritten"
        conflict = client.put(f"/scenarios/{s.id}", content=serialize(parent))
        assert conflict.status_code == 409
        assert conflict.json()["code"] == "VERSION"

        # the service stands alone: plain HTTP, no other front end needed
        assert client.get("/healthz").json() == {"status": "ok"}

    elapsed = time.perf_counter() - start
    print(f"ACCEPTANCE 7 service flow: PASS ({elapsed:.1f}s)")
