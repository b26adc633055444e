import { describe, expect, it } from "vitest";

import * as mut from "../src/mutators.js";
import { sampleScenario } from "./stub.js";

describe("sphere mutators", () => {
  it("sets the light level and clamps below zero", () => {
    const doc = sampleScenario();
    mut.setLightLevel(doc, "s1", 1.2);
    expect(mut.sphereById(doc, "s1").light_level).toBe(1.2);
    mut.setLightLevel(doc, "s1", -3);
    expect(mut.sphereById(doc, "s1").light_level).toBe(0);
  });

  it("creates a shell on demand when thickness is set", () => {
    const doc = sampleScenario();
    expect(mut.sphereById(doc, "s2").shell).toBeUndefined();
    mut.setShellThickness(doc, "s2", 0.2);
    const shell = mut.sphereById(doc, "s2").shell;
    expect(shell).toBeDefined();
    expect(shell?.thickness).toBe(0.2);
    expect(shell?.thickness).toBeGreaterThan(0);
    expect(shell?.thickness).toBeLessThan(1);
  });

  it("keeps thickness inside (0, 1) whatever the slider sends", () => {
    const doc = sampleScenario();
    mut.setShellThickness(doc, "s1", 5);
    expect(mut.sphereById(doc, "s1").shell?.thickness).toBeLessThan(1);
    mut.setShellThickness(doc, "s1", -1);
    expect(mut.sphereById(doc, "s1").shell?.thickness).toBeGreaterThan(0);
  });

  it("stores transparency as its opacity complement", () => {
    const doc = sampleScenario();
    mut.setShellTransparency(doc, "s1", 0.75);
    expect(mut.sphereById(doc, "s1").shell?.opacity).toBeCloseTo(0.25, 12);
  });

  it("paints a sector with the chosen color", () => {
    const doc = sampleScenario();
    mut.paintSector(doc, "s1", 1.0, 0.8, "#3355aa");
    const sectors = mut.sphereById(doc, "s1").shell?.sectors ?? [];
    expect(sectors).toHaveLength(1);
    expect(sectors[0]).toEqual([1.0, 1.8, "#3355aa"]);
  });

  it("converts hex colors to unit rgb and back", () => {
    expect(mut.hexToRgb("#ff0000")).toEqual([1, 0, 0]);
    expect(mut.rgbToHex([1, 0, 0])).toBe("#ff0000");
    const rgb = mut.hexToRgb("#3355aa");
    expect(mut.rgbToHex(rgb)).toBe("#3355aa");
  });
});

describe("structure tools", () => {
  it("nests a child wholly inside the parent", () => {
    const doc = sampleScenario();
    const childId = mut.nestChildSphere(doc, "s1");
    const parent = mut.sphereById(doc, "s1");
    const child = mut.sphereById(doc, childId);
    expect(parent.children).toContain(childId);
    const d = Math.hypot(
      child.center[0] - parent.center[0],
      child.center[1] - parent.center[1],
    );
    expect(d + child.radius).toBeLessThan(parent.radius);
  });

  it("click-placing inside a sphere nests, outside stays free", () => {
    const doc = sampleScenario();
    const inner = mut.addSphereAt(doc, [0.2, 0.1]);
    expect(inner).not.toBeNull();
    expect(mut.sphereById(doc, "s1").children).toContain(inner);

    const free = mut.addSphereAt(doc, [-3.0, 0.0]);
    expect(free).not.toBeNull();
    expect(mut.sphereById(doc, "s1").children).not.toContain(free);
    const sp = mut.sphereById(doc, free as string);
    expect(sp.center).toEqual([-3.0, 0.0]);
  });

  it("refuses a sphere jammed against the wall", () => {
    const doc = sampleScenario();
    expect(mut.addSphereAt(doc, [0.999, 0.0])).toBeNull();
  });

  it("adds a fracture between two clicked points", () => {
    const doc = sampleScenario();
    mut.addFracture(doc, "s1", [-0.2, 0.1], [0.4, -0.3]);
    const fr = mut.sphereById(doc, "s1").fractures;
    expect(fr).toHaveLength(1);
    expect(fr[0]?.endpoints).toEqual([
      [-0.2, 0.1],
      [0.4, -0.3],
    ]);
    expect(fr[0]?.width).toBeGreaterThan(0);
  });

  it("bubbles shrink to fit and refuse the rim", () => {
    const doc = sampleScenario();
    expect(mut.addBubble(doc, "s1", [0.0, 0.2])).toBe(true);
    const bu = mut.sphereById(doc, "s1").bubbles[0];
    expect(bu).toBeDefined();
    const d = Math.hypot(bu!.center[0], bu!.center[1]);
    expect(d + bu!.radius).toBeLessThan(1.0);
    expect(mut.addBubble(doc, "s1", [0.9999, 0.0])).toBe(false);
  });

  it("finds the innermost sphere under a point", () => {
    const doc = sampleScenario();
    const childId = mut.addSphereAt(doc, [0.2, 0.1]) as string;
    expect(mut.sphereAt(doc, [0.2, 0.1])?.id).toBe(childId);
    expect(mut.sphereAt(doc, [-0.8, 0.0])?.id).toBe("s1");
    expect(mut.sphereAt(doc, [10, 10])).toBeNull();
  });
});

describe("beam mutators", () => {
  it("size sets the ray count as a whole number", () => {
    const doc = sampleScenario();
    mut.setBeamSize(doc, "b1", 12.7);
    expect(mut.beamById(doc, "b1").ray_count).toBe(13);
    mut.setBeamSize(doc, "b1", 0);
    expect(mut.beamById(doc, "b1").ray_count).toBe(1);
  });

  it("intensity rescales the triple but keeps the hue", () => {
    const doc = sampleScenario();
    mut.setBeamIntensity(doc, "b1", 2.0);
    const i = mut.beamById(doc, "b1").intensity;
    expect(Math.max(...i)).toBeCloseTo(2.0, 12);
    // original ratios 1 : 0.9 : 0.7 survive
    expect(i[1] / i[0]).toBeCloseTo(0.9, 12);
    expect(i[2] / i[0]).toBeCloseTo(0.7, 12);
  });

  it("recoloring keeps the current peak intensity", () => {
    const doc = sampleScenario();
    mut.setBeamIntensity(doc, "b1", 1.6);
    mut.setBeamColor(doc, "b1", "#0080ff");
    const i = mut.beamById(doc, "b1").intensity;
    expect(Math.max(...i)).toBeCloseTo(1.6, 9);
    expect(i[0]).toBeCloseTo(0, 9);
  });

  it("diffuseness and direction write through", () => {
    const doc = sampleScenario();
    mut.setBeamDiffuseness(doc, "b1", 0.9);
    mut.setBeamDirection(doc, "b1", -1.2);
    const b = mut.beamById(doc, "b1");
    expect(b.spread).toBe(0.9);
    expect(b.direction).toBe(-1.2);
  });

  it("a clicked beam anchors to the sphere with its depth and angle", () => {
    const doc = sampleScenario();
    const id = mut.addBeamAt(doc, [0.5, 0.0]);
    expect(id).not.toBeNull();
    const b = mut.beamById(doc, id as string);
    expect(b.source_sphere).toBe("s1");
    expect(b.origin_depth).toBeCloseTo(0.5, 9);
    expect(b.origin_angle).toBeCloseTo(0.0, 9);
    expect(mut.addBeamAt(doc, [10, 10])).toBeNull();
  });
});

describe("sparks and dents", () => {
  it("spark toggles on then off for the same unordered pair", () => {
    const doc = sampleScenario();
    expect(mut.toggleSpark(doc, "s1", "s2")).toBe("added");
    expect(doc.sparks).toHaveLength(1);
    expect(mut.toggleSpark(doc, "s2", "s1")).toBe("removed");
    expect(doc.sparks).toHaveLength(0);
    expect(mut.toggleSpark(doc, "s1", "s1")).toBeNull();
  });

  it("dents round-trip through the notes field", () => {
    const doc = sampleScenario();
    doc.notes = "a plain human note";
    mut.addDent(doc, "s1", 1.57);
    mut.addDent(doc, "s2", -0.5, 0.1, 0.7);
    const dents = mut.parseDents(doc.notes);
    expect(dents).toHaveLength(2);
    expect(dents[0]?.sphere).toBe("s1");
    expect(dents[0]?.angle).toBeCloseTo(1.57, 4);
    expect(dents[1]?.depth).toBe(0.1);
    // the human note is untouched
    expect(doc.notes.startsWith("a plain human note")).toBe(true);
  });
});
