/**
 * Editor orchestration: every user gesture funnels through here.
 *
 * The flow for any edit is fixed: refuse if the open scenario already has
 * forks, otherwise clone the confirmed document, apply one mutator, PUT the
 * result, then re-fetch document and render. Nothing repaints from local
 * guesses; the screen always shows what the server confirmed.
 */

import { ApiError, Client } from "./api.js";
import * as mut from "./mutators.js";
import {
  initialState,
  invariantViolations,
  pruneSelection,
  type EditorState,
  type ToolMode,
} from "./state.js";
import type {
  ScenarioDoc,
  ScenarioEnvelope,
  TimelineNode,
  TracePathDoc,
  Vec2,
} from "./types.js";

export interface EditorEvents {
  onScene?(svg: string): void;
  onDocument?(doc: ScenarioDoc, rawText: string): void;
  onNotice?(kind: "info" | "error", text: string): void;
  onFrame?(svg: string, position: number, total: number): void;
  onOverview?(svg: string, timeline: TimelineNode | null): void;
  onTrace?(paths: TracePathDoc[]): void;
}

export interface ExportPayload {
  filename: string;
  text: string;
  mime: string;
}

const FROZEN_MSG =
  "this scenario has forks and is frozen; press Fork to branch a copy you can edit";

export class Editor {
  readonly client: Client;
  readonly state: EditorState;
  private events: EditorEvents;

  doc: ScenarioDoc | null = null;
  rawText = ""; // canonical bytes of the last confirmed GET, used for export
  lastSvg = "";
  frames: string[] = [];
  private framesFor = ""; // digest-ish marker: raw text the frames were cut from
  private pendingFracture: { sphere: string; pt: Vec2 } | null = null;
  private pendingSpark: string | null = null;

  constructor(client: Client, events: EditorEvents = {}) {
    this.client = client;
    this.state = initialState();
    this.events = events;
  }

  notice(kind: "info" | "error", text: string): void {
    this.events.onNotice?.(kind, text);
  }

  private assertInvariants(): void {
    const bad = invariantViolations(this.state, this.doc);
    if (bad.length) throw new Error(`editor state broken: ${bad.join("; ")}`);
  }

  // -- loading ---------------------------------------------------------------

  async load(id: string): Promise<void> {
    this.rawText = await this.client.scenarioText(id);
    this.doc = (JSON.parse(this.rawText) as ScenarioEnvelope).scenario;
    this.state.current = id;
    this.state.dirty = false;
    this.state.playback = -1;
    this.frames = [];
    this.framesFor = "";
    this.pendingFracture = null;
    this.pendingSpark = null;
    pruneSelection(this.state, this.doc);
    this.assertInvariants();
    this.events.onDocument?.(this.doc, this.rawText);
    await this.repaint();
  }

  /** Re-fetch the confirmed document and repaint from it. */
  private async reload(): Promise<void> {
    if (!this.state.current) return;
    this.rawText = await this.client.scenarioText(this.state.current);
    this.doc = (JSON.parse(this.rawText) as ScenarioEnvelope).scenario;
    pruneSelection(this.state, this.doc);
    this.assertInvariants();
    this.events.onDocument?.(this.doc, this.rawText);
    await this.repaint();
  }

  private async repaint(): Promise<void> {
    if (!this.state.current) return;
    const opts =
      this.state.view === "perspective" && this.state.selection?.kind === "sphere"
        ? { mode: "perspective", focus: this.state.selection.id }
        : { mode: "view" };
    this.lastSvg = await this.client.render(this.state.current, opts);
    this.events.onScene?.(this.lastSvg);
    await this.retrace();
  }

  /** Re-request the ray trace for the relevant beam, if any. */
  private async retrace(): Promise<void> {
    if (!this.doc || !this.state.current) return;
    const beamId =
      this.state.selection?.kind === "beam"
        ? this.state.selection.id
        : this.doc.beams[0]?.id;
    if (!beamId) {
      this.events.onTrace?.([]);
      return;
    }
    const result = await this.client.trace(this.state.current, beamId);
    this.events.onTrace?.(result.paths);
  }

  // -- mutation protocol -------------------------------------------------------

  get frozen(): boolean {
    return (this.doc?.children.length ?? 0) > 0;
  }

  private async mutate(apply: (draft: ScenarioDoc) => boolean | void): Promise<boolean> {
    if (!this.doc || !this.state.current) {
      this.notice("error", "no scenario loaded");
      return false;
    }
    if (this.frozen) {
      this.notice("error", FROZEN_MSG);
      return false;
    }
    const draft = structuredClone(this.doc);
    let ok: boolean | void;
    try {
      ok = apply(draft);
    } catch (err) {
      this.notice("error", String(err instanceof Error ? err.message : err));
      return false;
    }
    if (ok === false) return false;
    try {
      await this.client.putScenario(this.state.current, draft);
    } catch (err) {
      this.surface(err);
      return false;
    }
    this.state.dirty = true;
    this.frames = [];
    this.framesFor = "";
    this.state.playback = -1;
    await this.reload();
    return true;
  }

  /** Show an API failure as a notice instead of letting it escape. */
  private surface(err: unknown): void {
    if (err instanceof ApiError) {
      const hint = err.code === "VERSION" ? " (fork to edit)" : "";
      this.notice("error", `${err.code}: ${err.message}${hint}`);
    } else {
      this.notice("error", String(err instanceof Error ? err.message : err));
    }
  }

  // -- per-control entry points ------------------------------------------------

  private selectedSphereId(): string | null {
    if (this.state.selection?.kind === "sphere") return this.state.selection.id;
    return this.doc?.spheres[0]?.id ?? null;
  }

  private selectedBeamId(): string | null {
    if (this.state.selection?.kind === "beam") return this.state.selection.id;
    return this.doc?.beams[0]?.id ?? null;
  }

  private async sphereEdit(fn: (draft: ScenarioDoc, id: string) => void): Promise<boolean> {
    const id = this.selectedSphereId();
    if (!id) {
      this.notice("error", "no sphere to edit; add one with the sphere tool");
      return false;
    }
    return this.mutate((draft) => fn(draft, id));
  }

  private async beamEdit(fn: (draft: ScenarioDoc, id: string) => void): Promise<boolean> {
    const id = this.selectedBeamId();
    if (!id) {
      this.notice("error", "no beam to edit; add one with the beam tool");
      return false;
    }
    return this.mutate((draft) => fn(draft, id));
  }

  setLight(level: number) {
    return this.sphereEdit((d, id) => mut.setLightLevel(d, id, level));
  }
  setShellThickness(t: number) {
    return this.sphereEdit((d, id) => mut.setShellThickness(d, id, t));
  }
  setShellTransparency(v: number) {
    return this.sphereEdit((d, id) => mut.setShellTransparency(d, id, v));
  }
  setShellColor(hex: string) {
    return this.sphereEdit((d, id) => mut.setShellColor(d, id, hex));
  }
  paintSector(start: number, span: number, color: string) {
    return this.sphereEdit((d, id) => mut.paintSector(d, id, start, span, color));
  }
  setBorderBlur(v: number) {
    return this.sphereEdit((d, id) => mut.setBorderBlur(d, id, v));
  }
  nestChild() {
    return this.sphereEdit((d, id) => {
      mut.nestChildSphere(d, id);
    });
  }
  setBeamSize(n: number) {
    return this.beamEdit((d, id) => mut.setBeamSize(d, id, n));
  }
  setBeamIntensity(v: number) {
    return this.beamEdit((d, id) => mut.setBeamIntensity(d, id, v));
  }
  setBeamColor(hex: string) {
    return this.beamEdit((d, id) => mut.setBeamColor(d, id, hex));
  }
  setBeamDiffuseness(v: number) {
    return this.beamEdit((d, id) => mut.setBeamDiffuseness(d, id, v));
  }
  setBeamDirection(v: number) {
    return this.beamEdit((d, id) => mut.setBeamDirection(d, id, v));
  }

  async toggleSparkWith(otherId: string): Promise<boolean> {
    const a = this.selectedSphereId();
    if (!a) {
      this.notice("error", "select a sphere first");
      return false;
    }
    if (a === otherId) {
      this.notice("error", "a spark needs two distinct spheres");
      return false;
    }
    return this.mutate((draft) => {
      mut.toggleSpark(draft, a, otherId);
    });
  }

  // -- tools and scene clicks ----------------------------------------------------

  setTool(tool: ToolMode | null): void {
    this.state.tool = tool;
    this.pendingFracture = null;
    this.pendingSpark = null;
  }

  async setView(view: "view" | "perspective"): Promise<void> {
    this.state.view = view;
    await this.repaint();
  }

  /**
   * A click on the scene, already converted to scene coordinates.
   * What happens depends on the armed tool and the view mode.
   */
  async sceneClick(pt: Vec2): Promise<void> {
    if (!this.doc) return;
    const hit = mut.sphereAt(this.doc, pt);

    if (this.state.view === "perspective") {
      if (hit) await this.focusSphere(hit.id);
      return;
    }

    switch (this.state.tool) {
      case "sphere":
        await this.mutate((draft) => {
          if (mut.addSphereAt(draft, pt) === null) {
            this.notice("error", "no room for a sphere there");
            return false;
          }
        });
        return;
      case "beam":
        await this.mutate((draft) => {
          if (mut.addBeamAt(draft, pt) === null) {
            this.notice("error", "beams start inside a sphere; click one");
            return false;
          }
        });
        return;
      case "fracture": {
        if (!hit) {
          this.notice("error", "fractures live inside a sphere");
          return;
        }
        if (!this.pendingFracture) {
          this.pendingFracture = { sphere: hit.id, pt };
          this.notice("info", "fracture started; click the other endpoint");
          return;
        }
        const pending = this.pendingFracture;
        this.pendingFracture = null;
        if (pending.sphere !== hit.id) {
          this.notice("error", "both fracture endpoints must sit in the same sphere");
          return;
        }
        await this.mutate((draft) => mut.addFracture(draft, hit.id, pending.pt, pt));
        return;
      }
      case "bubble":
        if (!hit) {
          this.notice("error", "bubbles live inside a sphere");
          return;
        }
        await this.mutate((draft) => {
          if (!mut.addBubble(draft, hit.id, pt)) {
            this.notice("error", "no room for a bubble there");
            return false;
          }
        });
        return;
      case "spark": {
        if (!hit) return;
        if (!this.pendingSpark) {
          this.pendingSpark = hit.id;
          this.notice("info", `spark from ${hit.id}; click the partner sphere`);
          return;
        }
        const first = this.pendingSpark;
        this.pendingSpark = null;
        if (first === hit.id) {
          this.notice("error", "a spark needs two distinct spheres");
          return;
        }
        await this.mutate((draft) => {
          mut.toggleSpark(draft, first, hit.id);
        });
        return;
      }
      case "dent": {
        if (!hit) {
          this.notice("error", "dents sit on a sphere rim");
          return;
        }
        const angle = Math.atan2(pt[1] - hit.center[1], pt[0] - hit.center[0]);
        await this.mutate((draft) => mut.addDent(draft, hit.id, angle));
        return;
      }
      default: {
        // pointer: select what was clicked
        this.state.selection = hit ? { kind: "sphere", id: hit.id } : null;
        this.assertInvariants();
        await this.repaint();
      }
    }
  }

  selectSphere(id: string): void {
    this.state.selection = { kind: "sphere", id };
    this.assertInvariants();
  }

  selectBeam(id: string): void {
    this.state.selection = { kind: "beam", id };
    this.assertInvariants();
  }

  /** Change the selection and repaint (a beam selection also retraces). */
  async select(kind: "sphere" | "beam", id: string): Promise<void> {
    this.state.selection = { kind, id };
    this.assertInvariants();
    await this.repaint();
  }

  /** Perspective view re-centered on one sphere. */
  async focusSphere(id: string): Promise<void> {
    if (!this.state.current) return;
    this.state.selection = { kind: "sphere", id };
    this.state.view = "perspective";
    this.assertInvariants();
    try {
      this.lastSvg = await this.client.render(this.state.current, {
        mode: "perspective",
        focus: id,
      });
      this.events.onScene?.(this.lastSvg);
    } catch (err) {
      this.surface(err);
    }
  }

  // -- fork and overview -----------------------------------------------------------

  async forkCurrent(): Promise<void> {
    if (!this.state.current) return;
    try {
      const r = await this.client.fork(this.state.current);
      this.notice("info", `forked into ${r.id}`);
      await this.load(r.id);
    } catch (err) {
      this.surface(err);
    }
  }

  /** Root of the fork tree, found by walking parent links. */
  private async findRoot(): Promise<string | null> {
    if (!this.doc || !this.state.current) return null;
    let id = this.state.current;
    let parent = this.doc.parent ?? null;
    let hops = 0;
    while (parent && hops < 64) {
      const text = await this.client.scenarioText(parent);
      const env = JSON.parse(text) as ScenarioEnvelope;
      id = env.scenario.id;
      parent = env.scenario.parent ?? null;
      hops += 1;
    }
    return id;
  }

  async showOverview(): Promise<void> {
    if (!this.state.current) return;
    try {
      const svg = await this.client.render(this.state.current, { mode: "overview" });
      let timeline: TimelineNode | null = null;
      const root = await this.findRoot();
      if (root) timeline = await this.client.timeline(root);
      this.events.onOverview?.(svg, timeline);
    } catch (err) {
      this.surface(err);
    }
  }

  // -- playback ---------------------------------------------------------------------

  /** Fetch the slow-motion frames once per confirmed document version. */
  async ensureFrames(steps: number): Promise<number> {
    if (!this.state.current) return 0;
    if (this.framesFor === this.rawText && this.frames.length === steps) {
      return this.frames.length;
    }
    this.frames = await this.client.frames(this.state.current, steps);
    this.framesFor = this.rawText;
    return this.frames.length;
  }

  /** Jump the scrubber; any position is fair game for a manual seek. */
  seek(position: number): void {
    if (!this.frames.length) return;
    const p = Math.max(0, Math.min(this.frames.length - 1, Math.floor(position)));
    this.state.playback = p;
    const frame = this.frames[p];
    if (frame !== undefined) this.events.onFrame?.(frame, p, this.frames.length);
  }

  /**
   * Advance playback by one frame. Animation only ever moves forward;
   * returns false once the last frame has been shown.
   */
  advance(): boolean {
    if (!this.frames.length) return false;
    const next = this.state.playback + 1;
    if (next >= this.frames.length) return false;
    this.state.playback = next;
    const frame = this.frames[next];
    if (frame !== undefined) this.events.onFrame?.(frame, next, this.frames.length);
    return true;
  }

  // -- export -----------------------------------------------------------------------

  /** The stored canonical document, byte for byte as the server returned it. */
  exportJson(): ExportPayload | null {
    if (!this.rawText || !this.doc) return null;
    return {
      filename: `${this.doc.id}.json`,
      text: this.rawText,
      mime: "application/json",
    };
  }

  exportSvg(): ExportPayload | null {
    if (!this.lastSvg || !this.doc) return null;
    return {
      filename: `${this.doc.id}.svg`,
      text: this.lastSvg,
      mime: "image/svg+xml",
    };
  }
}
