"""Scene model tests: validation rule coverage, fork immutability,
perspective views, and the canonical serialization format."""

import json
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from liveia.errors import (
    ContractError,
    NotFoundError,
    SceneValidationError,
    SerializationError,
)
from liveia.optics import Medium, TraceEvent, trace_beam, trace_ray, Ray
from liveia.scenes import (
    Beam,
    Bubble,
    Fracture,
    PsycheSphere,
    Scenario,
    Shell,
    Spark,
    canonical_json,
    content_bytes,
    content_digest,
    deepen,
    deserialize,
    fork,
    new_id,
    new_scenario,
    now_iso,
    perspective,
    reveal,
    serialize,
    validate,
)
from liveia.waves import WaveComponent, Waveform

T0 = "2026-01-01T00:00:00.000000Z"


def rich_scenario() -> Scenario:
    main = PsycheSphere(
        id="main",
        label="subject",
        center=(0.0, 0.0),
        radius=1.0,
        interior=Medium(1.5, 0.1, (1.0, 0.95, 0.9)),
        light_level=1.0,
        shell=Shell(thickness=0.2, medium=Medium(1.5), opacity=0.4, sectors=[(0.0, 1.5, "#39c")]),
        fractures=[Fracture(endpoints=((-0.5, 0.0), (0.5, 0.1)), width=0.05, medium=Medium(1.2))],
        bubbles=[Bubble(center=(0.0, -0.4), radius=0.15)],
        children=["inner"],
        border_blur=0.1,
    )
    inner = PsycheSphere(id="inner", center=(0.3, 0.3), radius=0.2, interior=Medium(1.6))
    other = PsycheSphere(id="other", center=(3.0, 0.0), radius=1.0, interior=Medium(1.4))
    return Scenario(
        id="sc-rich",
        title="a pair",
        spheres=[main, inner, other],
        beams=[
            Beam(
                id="b1",
                source_sphere="main",
                origin_depth=0.5,
                origin_angle=0.3,
                direction=0.1,
                spread=0.2,
                ray_count=3,
                intensity=(1.0, 0.8, 0.6),
                waveform=Waveform([WaveComponent(2.0, 1.0, 0.5)], label="resolve"),
            ),
            Beam(id="b2", origin_depth=0.5, origin_angle=1.0),
        ],
        sparks=[Spark(sphere_pair=("main", "other"), intensity=0.7)],
        notes="fixture",
        created_at=T0,
    )


def expect_rule(s: Scenario, rule: str):
    rules = {v.rule for v in validate(s)}
    assert rule in rules, f"wanted {rule!r} in {rules}"


class TestValidate:
    def test_empty_scenario_ok(self):
        assert validate(Scenario(id="e", created_at=T0)) == []

    def test_rich_fixture_ok(self):
        assert validate(rich_scenario()) == []

    def test_child_poking_outside(self):
        s = rich_scenario()
        s.sphere("inner").center = (0.9, 0.0)
        expect_rule(s, "child-containment")

    def test_child_missing(self):
        s = rich_scenario()
        s.sphere("main").children.append("ghost")
        expect_rule(s, "child-exists")

    def test_fracture_outside(self):
        s = rich_scenario()
        s.sphere("main").fractures[0].endpoints = ((-0.5, 0.0), (0.95, 0.0))
        expect_rule(s, "fracture-containment")

    def test_fracture_degenerate(self):
        s = rich_scenario()
        s.sphere("main").fractures[0].endpoints = ((0.1, 0.1), (0.1, 0.1))
        expect_rule(s, "fracture-degenerate")

    def test_fracture_width(self):
        s = rich_scenario()
        s.sphere("main").fractures[0].width = 0.0
        expect_rule(s, "fracture-width")

    def test_bubble_outside_interior(self):
        s = rich_scenario()
        # inside the outer radius but protruding into the shell band
        s.sphere("main").bubbles[0].center = (0.0, -0.7)
        expect_rule(s, "bubble-containment")

    def test_bubble_radius(self):
        s = rich_scenario()
        s.sphere("main").bubbles[0].radius = -0.1
        expect_rule(s, "bubble-radius")

    def test_sphere_radius(self):
        s = rich_scenario()
        s.sphere("other").radius = 0.0
        expect_rule(s, "sphere-radius")

    def test_duplicate_sphere_id(self):
        s = rich_scenario()
        s.spheres.append(PsycheSphere(id="main"))
        expect_rule(s, "sphere-id-unique")

    def test_nan_geometry(self):
        s = rich_scenario()
        s.sphere("other").center = (float("nan"), 0.0)
        expect_rule(s, "finite-geometry")

    def test_light_level(self):
        s = rich_scenario()
        s.sphere("main").light_level = -1.0
        expect_rule(s, "light-level")

    def test_border_blur(self):
        s = rich_scenario()
        s.sphere("main").border_blur = -0.5
        expect_rule(s, "border-blur")

    def test_medium_rules(self):
        s = rich_scenario()
        s.sphere("other").interior = Medium(0.05, -1.0, (2.0, 0.5, 0.5))
        rules = {v.rule for v in validate(s)}
        assert {"medium-index", "medium-absorption", "medium-tint"} <= rules

    def test_shell_thickness(self):
        s = rich_scenario()
        s.sphere("main").shell.thickness = 1.0
        expect_rule(s, "shell-thickness")

    def test_shell_opacity(self):
        s = rich_scenario()
        s.sphere("main").shell.opacity = 1.5
        expect_rule(s, "shell-opacity")

    def test_sibling_overlap(self):
        s = rich_scenario()
        s.sphere("other").center = (1.5, 0.0)
        expect_rule(s, "sibling-overlap")

    def test_nested_overlap_allowed(self):
        s = rich_scenario()
        assert all(v.rule != "sibling-overlap" for v in validate(s))

    def test_beam_rules(self):
        s = rich_scenario()
        s.beams[0].origin_depth = 1.5
        s.beams[0].spread = -0.1
        s.beams[0].ray_count = 0
        s.beams[0].intensity = (-1.0, 0.0, 0.0)
        s.beams[1].source_sphere = "ghost"
        rules = {v.rule for v in validate(s)}
        assert {
            "beam-depth",
            "beam-spread",
            "beam-ray-count",
            "beam-intensity",
            "beam-source-exists",
        } <= rules

    def test_duplicate_beam_id(self):
        s = rich_scenario()
        s.beams.append(Beam(id="b1"))
        expect_rule(s, "beam-id-unique")

    def test_spark_rules(self):
        s = rich_scenario()
        s.sparks.append(Spark(sphere_pair=("main", "main"), intensity=-1.0))
        s.sparks.append(Spark(sphere_pair=("main", "ghost")))
        rules = {v.rule for v in validate(s)}
        assert {"spark-distinct", "spark-ref", "spark-intensity"} <= rules

    def test_fork_cycle(self):
        s = rich_scenario()
        s.parent = s.id
        expect_rule(s, "fork-cycle")


class TestFork:
    def test_links_and_ids(self):
        s = rich_scenario()
        child = fork(s)
        assert child.parent == s.id
        assert child.id != s.id
        assert child.children == []
        assert s.children == [child.id]

    def test_parent_content_unchanged(self):
        s = rich_scenario()
        before = content_bytes(s)
        digest_before = content_digest(s)
        child = fork(s)
        child.title = "what might happen next"
        child.sphere("main").light_level = 5.0
        assert content_bytes(s) == before
        assert content_digest(s) == digest_before
        assert content_digest(child) != digest_before

    def test_full_serialization_gains_link(self):
        s = rich_scenario()
        raw_before = serialize(s)
        child = fork(s)
        raw_after = serialize(s)
        assert raw_before != raw_after
        assert child.id.encode() in raw_after

    def test_fork_twice(self):
        s = rich_scenario()
        a, b = fork(s), fork(s)
        assert a.id != b.id
        assert s.children == [a.id, b.id]
        assert a.parent == b.parent == s.id

    def test_fork_of_fork_chain(self):
        s = rich_scenario()
        child = fork(s)
        grand = fork(child)
        assert grand.parent == child.id
        assert child.parent == s.id

    def test_fork_requires_valid_scenario(self):
        s = rich_scenario()
        s.sphere("main").radius = -1.0
        with pytest.raises(SceneValidationError):
            fork(s)


class TestPerspective:
    def test_translation(self):
        s = rich_scenario()
        view = perspective(s, "other")
        assert view.sphere("other").center == (0.0, 0.0)
        assert view.sphere("main").center == (-3.0, 0.0)
        fr = view.sphere("main").fractures[0]
        assert fr.endpoints[0] == (-3.5, 0.0)
        assert view.sphere("main").bubbles[0].center == (-3.0, -0.4)
        assert view.view_of == "other"

    def test_reorders_chosen_first(self):
        s = rich_scenario()
        view = perspective(s, "other")
        assert view.spheres[0].id == "other"

    def test_identity_when_already_centered(self):
        s = rich_scenario()
        view = perspective(s, "main")
        assert view.sphere("main").center == (0.0, 0.0)
        assert view.sphere("other").center == (3.0, 0.0)

    def test_idempotent(self):
        s = rich_scenario()
        v1 = perspective(s, "other")
        v2 = perspective(v1, "other")
        assert serialize(v1) == serialize(v2)

    def test_source_untouched(self):
        s = rich_scenario()
        before = serialize(s)
        perspective(s, "other")
        assert serialize(s) == before

    def test_unknown_sphere(self):
        with pytest.raises(NotFoundError):
            perspective(rich_scenario(), "ghost")


class TestDeepenReveal:
    def test_deepen_basic(self):
        s = rich_scenario()
        s.beams[0].origin_depth = 0.9
        b = deepen(s, "b1", 0.3)
        assert b.origin_depth == pytest.approx(0.6)

    def test_deepen_clamped(self):
        s = rich_scenario()
        s.beams[0].origin_depth = 0.1
        assert deepen(s, "b1", 0.5).origin_depth == 0.0

    def test_deepen_zero_delta(self):
        s = rich_scenario()
        d0 = s.beams[0].origin_depth
        assert deepen(s, "b1", 0.0).origin_depth == d0

    def test_deepen_unknown_beam(self):
        with pytest.raises(NotFoundError):
            deepen(rich_scenario(), "nope", 0.1)

    def test_deepen_negative_delta(self):
        with pytest.raises(ContractError):
            deepen(rich_scenario(), "b1", -0.1)

    def test_reveal_toggles(self):
        s = rich_scenario()
        assert reveal(s, "main", True) is True
        assert s.sphere("main").revealed is True
        assert reveal(s, "main", False) is False

    def test_reveal_unknown(self):
        with pytest.raises(NotFoundError):
            reveal(rich_scenario(), "ghost", True)

    def test_reveal_does_not_change_physics(self):
        s = rich_scenario()
        ray = Ray((-2.0, 0.1), (1.0, 0.0))
        before = trace_ray(s, ray)
        reveal(s, "main", True)
        after = trace_ray(s, ray)
        assert len(before) == len(after)
        for p, q in zip(before, after):
            assert p.events == q.events
            assert p.segments[-1].intensity == q.segments[-1].intensity


class TestCanonicalJson:
    def test_frozen_empty_scenario(self):
        s = Scenario(id="abc", title="t", created_at="2026-01-01T00:00:00Z")
        want = (
            b'{"scenario":{"beams":[],"children":[],"created_at":"2026-01-01T00:00:00Z",'
            b'"id":"abc","notes":"","sparks":[],"spheres":[],"title":"t"},"schema_version":1}'
        )
        assert serialize(s) == want

    def test_primitives(self):
        assert canonical_json({"r": 1.0}) == b'{"r":1}'
        assert canonical_json({"r": math.pi}) == b'{"r":3.14159265}'
        assert canonical_json([True, False, None, 3, 0.5]) == b"[true,false,null,3,0.5]"
        assert canonical_json({"b": 1, "a": 2}) == b'{"a":2,"b":1}'
        assert canonical_json("café") == b'"caf\\u00e9"'

    def test_non_finite_rejected(self):
        with pytest.raises(SerializationError):
            canonical_json({"x": float("nan")})
        with pytest.raises(SerializationError):
            canonical_json({"x": float("inf")})

    @given(st.floats(allow_nan=False, allow_infinity=False))
    @settings(max_examples=300, deadline=None)
    def test_nine_digit_floats_are_stable(self, x):
        s = format(x, ".9g")
        assert format(float(s), ".9g") == s


class TestSerializeRoundTrip:
    def test_three_sphere_byte_identity(self):
        s = rich_scenario()
        raw1 = serialize(s)
        back = deserialize(raw1)
        raw2 = serialize(back)
        assert raw1 == raw2
        assert back == s

    def test_awkward_floats_survive(self):
        s = rich_scenario()
        s.sphere("main").light_level = 0.1 + 0.2
        s.sphere("main").border_blur = 1.0 / 3.0
        s.sphere("main").fractures[0].endpoints = ((-0.5, 1e-7), (0.5, 0.0))
        s.beams[0].intensity = (0.123456789, 9.87654321e-4, 1.0)
        raw1 = serialize(s)
        raw2 = serialize(deserialize(raw1))
        assert raw1 == raw2

    def test_accepts_str_input(self):
        s = rich_scenario()
        assert deserialize(serialize(s).decode()) == s

    def test_version_missing(self):
        doc = json.dumps({"scenario": {"id": "x"}})
        with pytest.raises(SerializationError) as err:
            deserialize(doc)
        assert err.value.code == "VERSION_MISSING"

    def test_version_mismatch(self):
        doc = json.dumps({"schema_version": 2, "scenario": {"id": "x"}})
        with pytest.raises(SerializationError) as err:
            deserialize(doc)
        assert err.value.code == "VERSION_MISMATCH"

    def test_dangling_spark_ref(self):
        s = rich_scenario()
        doc = json.loads(serialize(s))
        doc["scenario"]["sparks"].append({"sphere_pair": ["main", "ghost"], "intensity": 1.0})
        with pytest.raises(SerializationError) as err:
            deserialize(json.dumps(doc))
        assert err.value.code == "DANGLING_REF"

    def test_dangling_beam_source(self):
        s = rich_scenario()
        doc = json.loads(serialize(s))
        doc["scenario"]["beams"][0]["source_sphere"] = "ghost"
        with pytest.raises(SerializationError) as err:
            deserialize(json.dumps(doc))
        assert err.value.code == "DANGLING_REF"

    def test_dangling_child_ref(self):
        s = rich_scenario()
        doc = json.loads(serialize(s))
        doc["scenario"]["spheres"][0]["children"] = ["ghost"]
        with pytest.raises(SerializationError) as err:
            deserialize(json.dumps(doc))
        assert err.value.code == "DANGLING_REF"

    def test_malformed_json(self):
        with pytest.raises(SerializationError) as err:
            deserialize(b"{nope")
        assert err.value.code == "MALFORMED"

    def test_malformed_missing_field(self):
        doc = json.dumps({"schema_version": 1, "scenario": {"id": "x", "spheres": [{"id": "a"}]}})
        with pytest.raises(SerializationError) as err:
            deserialize(doc)
        assert err.value.code == "MALFORMED"

    def test_nan_numeral_rejected(self):
        doc = '{"schema_version":1,"scenario":{"id":"x","spheres":[],"beams":[],"sparks":[],"radius":NaN}}'
        with pytest.raises(SerializationError) as err:
            deserialize(doc)
        assert err.value.code == "MALFORMED"

    def test_optionals_omitted(self):
        s = rich_scenario()
        raw = serialize(s)
        assert b'"parent"' not in raw
        assert b'"view_of"' not in raw
        assert b'"waveform"' in raw  # b1 has one
        doc = json.loads(raw)
        assert "shell" not in doc["scenario"]["spheres"][1]  # inner has no shell

    def test_serialize_requires_valid(self):
        s = rich_scenario()
        s.sphere("main").radius = -2.0
        with pytest.raises(SceneValidationError):
            serialize(s)


class TestDepthSemantics:
    def test_center_beam_undistorted_all_angles(self):
        s = Scenario(
            id="d0",
            spheres=[PsycheSphere(id="s", radius=1.0, interior=Medium(1.5))],
            created_at=T0,
        )
        for k in range(12):
            beam = Beam(id="b", source_sphere="s", origin_depth=0.0, direction=k * math.pi / 6)
            paths = trace_beam(s, beam)
            assert paths[0].events == [TraceEvent.REFRACT, TraceEvent.ESCAPED]
            assert paths[0].total_deflection < 1e-9

    def test_superficial_beam_narrow_cone(self):
        s = Scenario(
            id="d8",
            spheres=[PsycheSphere(id="s", radius=1.0, interior=Medium(1.5))],
            created_at=T0,
        )
        radial = Beam(id="b", source_sphere="s", origin_depth=0.8, origin_angle=0.0, direction=0.0)
        first = trace_beam(s, radial)[0]
        assert first.events[0] == TraceEvent.REFRACT
        assert first.total_deflection < 0.05
        skew = Beam(
            id="b",
            source_sphere="s",
            origin_depth=0.8,
            origin_angle=0.0,
            direction=math.radians(60.0),
        )
        first = trace_beam(s, skew)[0]
        assert first.events[0] == TraceEvent.TIR


class TestFactories:
    def test_new_scenario_fields(self):
        s = new_scenario("hello")
        assert len(s.id) == 32
        int(s.id, 16)  # hex
        assert s.title == "hello"
        assert s.created_at.endswith("Z")
        assert "T" in s.created_at

    def test_ids_unique(self):
        assert len({new_id() for _ in range(100)}) == 100

    def test_now_iso_shape(self):
        ts = now_iso()
        from datetime import datetime

        datetime.fromisoformat(ts.replace("Z", "+00:00"))
