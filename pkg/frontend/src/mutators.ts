/**
 * Pure document edits, one per control.
 *
 * Each function takes a draft ScenarioDoc (the editor clones the confirmed
 * server copy first) and changes exactly the fields its control owns. The
 * draft is what gets PUT back; nothing here talks to the network.
 */

import type {
  BeamDoc,
  MediumDoc,
  Rgb,
  ScenarioDoc,
  SphereDoc,
  Vec2,
} from "./types.js";

export function sphereById(doc: ScenarioDoc, id: string): SphereDoc {
  const sp = doc.spheres.find((s) => s.id === id);
  if (!sp) throw new Error(`no sphere '${id}'`);
  return sp;
}

export function beamById(doc: ScenarioDoc, id: string): BeamDoc {
  const b = doc.beams.find((x) => x.id === id);
  if (!b) throw new Error(`no beam '${id}'`);
  return b;
}

function freshId(doc: ScenarioDoc, prefix: string): string {
  const taken = new Set<string>();
  for (const s of doc.spheres) taken.add(s.id);
  for (const b of doc.beams) taken.add(b.id);
  let n = 1;
  while (taken.has(`${prefix}${n}`)) n += 1;
  return `${prefix}${n}`;
}

function defaultMedium(index: number, absorption = 0.0): MediumDoc {
  return { refractive_index: index, absorption, tint: [1.0, 1.0, 1.0] };
}

export function hexToRgb(hex: string): Rgb {
  const m = /^#?([0-9a-fA-F]{6})$/.exec(hex);
  if (!m || !m[1]) return [1.0, 1.0, 1.0];
  const v = parseInt(m[1], 16);
  return [((v >> 16) & 255) / 255, ((v >> 8) & 255) / 255, (v & 255) / 255];
}

export function rgbToHex(rgb: Rgb): string {
  const clamp = (x: number) => Math.max(0, Math.min(255, Math.round(x * 255)));
  return (
    "#" +
    rgb
      .map((c) => clamp(c).toString(16).padStart(2, "0"))
      .join("")
  );
}

// -- sphere controls ---------------------------------------------------------

export function setLightLevel(doc: ScenarioDoc, sphereId: string, level: number): void {
  sphereById(doc, sphereId).light_level = Math.max(0, level);
}

function ensureShell(sp: SphereDoc) {
  if (!sp.shell) {
    sp.shell = {
      thickness: 0.12,
      medium: defaultMedium(1.6, 0.2),
      opacity: 0.3,
      sectors: [],
    };
  }
  return sp.shell;
}

export function setShellThickness(doc: ScenarioDoc, sphereId: string, t: number): void {
  // thickness must stay a real fraction of the radius
  ensureShell(sphereById(doc, sphereId)).thickness = Math.min(0.95, Math.max(0.01, t));
}

/** The slider hands us transparency; the document stores opacity. */
export function setShellTransparency(doc: ScenarioDoc, sphereId: string, transparency: number): void {
  const clamped = Math.min(1, Math.max(0, transparency));
  ensureShell(sphereById(doc, sphereId)).opacity = 1 - clamped;
}

export function setShellColor(doc: ScenarioDoc, sphereId: string, hex: string): void {
  ensureShell(sphereById(doc, sphereId)).medium.tint = hexToRgb(hex);
}

export function paintSector(
  doc: ScenarioDoc,
  sphereId: string,
  start: number,
  span: number,
  color: string,
): void {
  const shell = ensureShell(sphereById(doc, sphereId));
  shell.sectors.push([start, start + Math.max(0.05, span), color]);
}

export function setBorderBlur(doc: ScenarioDoc, sphereId: string, blur: number): void {
  sphereById(doc, sphereId).border_blur = Math.max(0, blur);
}

// -- structure tools ---------------------------------------------------------

function blankSphere(id: string, center: Vec2, radius: number): SphereDoc {
  return {
    id,
    label: "",
    center,
    radius,
    interior: defaultMedium(1.5, 0.5),
    light_level: 0.5,
    fractures: [],
    bubbles: [],
    children: [],
    border_blur: 0.0,
    revealed: false,
  };
}

/** Embed a new sphere concentric inside the parent. */
export function nestChildSphere(doc: ScenarioDoc, parentId: string): string {
  const parent = sphereById(doc, parentId);
  const id = freshId(doc, "s");
  const child = blankSphere(id, [...parent.center] as Vec2, parent.radius * 0.3);
  doc.spheres.push(child);
  parent.children.push(id);
  return id;
}

function dist(a: Vec2, b: Vec2): number {
  return Math.hypot(a[0] - b[0], a[1] - b[1]);
}

/** Innermost sphere whose interior contains the point, or null. */
export function sphereAt(doc: ScenarioDoc, pt: Vec2): SphereDoc | null {
  let best: SphereDoc | null = null;
  for (const sp of doc.spheres) {
    if (dist(pt, sp.center) < sp.radius) {
      if (!best || sp.radius < best.radius) best = sp;
    }
  }
  return best;
}

/**
 * Place a sphere at a clicked point. Inside an existing sphere it becomes a
 * nested child sized to fit; in open space it becomes a free sphere.
 */
export function addSphereAt(doc: ScenarioDoc, pt: Vec2): string | null {
  const host = sphereAt(doc, pt);
  const id = freshId(doc, "s");
  if (!host) {
    doc.spheres.push(blankSphere(id, pt, 0.5));
    return id;
  }
  const room = host.radius - dist(pt, host.center);
  const radius = Math.min(host.radius * 0.25, room * 0.8);
  if (radius < host.radius * 0.02) return null; // too close to the wall to fit
  doc.spheres.push(blankSphere(id, pt, radius));
  host.children.push(id);
  return id;
}

export function addFracture(
  doc: ScenarioDoc,
  sphereId: string,
  a: Vec2,
  b: Vec2,
): void {
  const sp = sphereById(doc, sphereId);
  sp.fractures.push({
    endpoints: [a, b],
    width: Math.max(0.01, sp.radius * 0.04),
    medium: defaultMedium(1.2),
  });
}

export function addBubble(doc: ScenarioDoc, sphereId: string, pt: Vec2): boolean {
  const sp = sphereById(doc, sphereId);
  const room = sp.radius - dist(pt, sp.center);
  const radius = Math.min(sp.radius * 0.12, room * 0.8);
  if (radius <= sp.radius * 0.01) return false;
  sp.bubbles.push({ center: pt, radius, medium: defaultMedium(1.0, 10.0) });
  return true;
}

// -- beam controls ------------------------------------------------------------

/** Beam size: how many rays the fan carries. */
export function setBeamSize(doc: ScenarioDoc, beamId: string, rayCount: number): void {
  beamById(doc, beamId).ray_count = Math.max(1, Math.round(rayCount));
}

function maxChannel(rgb: Rgb): number {
  return Math.max(rgb[0], rgb[1], rgb[2]);
}

/** Rescale the intensity triple so its brightest channel equals `scale`. */
export function setBeamIntensity(doc: ScenarioDoc, beamId: string, scale: number): void {
  const beam = beamById(doc, beamId);
  const s = Math.max(0, scale);
  const peak = maxChannel(beam.intensity);
  if (peak <= 0) {
    beam.intensity = [s, s, s];
    return;
  }
  beam.intensity = beam.intensity.map((c) => (c / peak) * s) as Rgb;
}

/** Recolor while keeping the current peak intensity. */
export function setBeamColor(doc: ScenarioDoc, beamId: string, hex: string): void {
  const beam = beamById(doc, beamId);
  const peak = maxChannel(beam.intensity) || 1.0;
  const rgb = hexToRgb(hex);
  const rgbPeak = maxChannel(rgb) || 1.0;
  beam.intensity = rgb.map((c) => (c / rgbPeak) * peak) as Rgb;
}

export function setBeamDiffuseness(doc: ScenarioDoc, beamId: string, spread: number): void {
  beamById(doc, beamId).spread = Math.max(0, spread);
}

export function setBeamDirection(doc: ScenarioDoc, beamId: string, direction: number): void {
  beamById(doc, beamId).direction = direction;
}

/** Anchor a new beam inside the sphere under the click. */
export function addBeamAt(doc: ScenarioDoc, pt: Vec2): string | null {
  const host = sphereAt(doc, pt);
  if (!host) return null;
  const dx = pt[0] - host.center[0];
  const dy = pt[1] - host.center[1];
  const id = freshId(doc, "b");
  doc.beams.push({
    id,
    source_sphere: host.id,
    origin_depth: Math.min(1, dist(pt, host.center) / host.radius),
    origin_angle: Math.atan2(dy, dx),
    direction: Math.atan2(dy, dx), // shine outward by default
    spread: 0.2,
    ray_count: 5,
    intensity: [1.0, 1.0, 1.0],
  });
  return id;
}

// -- sparks -------------------------------------------------------------------

/** Add the spark between two spheres, or remove it if already present. */
export function toggleSpark(doc: ScenarioDoc, a: string, b: string): "added" | "removed" | null {
  if (a === b) return null;
  const idx = doc.sparks.findIndex(
    (sp) =>
      (sp.sphere_pair[0] === a && sp.sphere_pair[1] === b) ||
      (sp.sphere_pair[0] === b && sp.sphere_pair[1] === a),
  );
  if (idx >= 0) {
    doc.sparks.splice(idx, 1);
    return "removed";
  }
  doc.sparks.push({ sphere_pair: [a, b], intensity: 0.8 });
  return "added";
}

// -- dents --------------------------------------------------------------------
//
// Dents are cosmetic: they do not touch the optics, so they live as
// structured lines in the scenario notes and the overlay draws them.

export interface DentMark {
  sphere: string;
  angle: number;
  depth: number;
  span: number;
}

const DENT_LINE = /^dent (\S+) (-?[\d.]+) ([\d.]+) ([\d.]+)$/;

export function parseDents(notes: string): DentMark[] {
  const out: DentMark[] = [];
  for (const line of notes.split("\n")) {
    const m = DENT_LINE.exec(line.trim());
    if (m && m[1] && m[2] && m[3] && m[4]) {
      out.push({
        sphere: m[1],
        angle: parseFloat(m[2]),
        depth: parseFloat(m[3]),
        span: parseFloat(m[4]),
      });
    }
  }
  return out;
}

export function addDent(
  doc: ScenarioDoc,
  sphereId: string,
  angle: number,
  depth = 0.08,
  span = 0.5,
): void {
  sphereById(doc, sphereId); // existence check
  const line = `dent ${sphereId} ${angle.toFixed(4)} ${depth} ${span}`;
  doc.notes = doc.notes ? `${doc.notes}\n${line}` : line;
}
