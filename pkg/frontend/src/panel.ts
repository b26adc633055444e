/**
 * DOM layer: builds the control panel, scene view, playback bar and overview
 * tab, and wires every control to one editor entry point.
 *
 * Controls carry data-control attributes so a smoke script can find each one
 * and check that working it produces exactly one mutation on the wire.
 */

import type { Client } from "./api.js";
import { Editor, type ExportPayload } from "./editor.js";
import { parseDents, rgbToHex, sphereById } from "./mutators.js";
import type { ScenarioDoc, TimelineNode, Vec2 } from "./types.js";

export type DownloadSink = (payload: ExportPayload) => void;

export interface PanelOptions {
  download?: DownloadSink;
  playbackMs?: number;
  steps?: number;
}

type ViewBox = [number, number, number, number];

export function parseViewBox(svg: string): ViewBox {
  const m = /viewBox="([-\d.eE+ ]+)"/.exec(svg);
  if (m && m[1]) {
    const parts = m[1].trim().split(/\s+/).map(Number);
    if (parts.length === 4 && parts.every((v) => Number.isFinite(v))) {
      return parts as ViewBox;
    }
  }
  return [-1.2, -1.2, 2.4, 2.4];
}

/**
 * Invert the browser's scaling of an SVG (xMidYMid meet) to recover scene
 * coordinates from a mouse position.
 */
export function pixelToScene(
  rect: { left: number; top: number; width: number; height: number },
  viewBox: ViewBox,
  clientX: number,
  clientY: number,
): Vec2 {
  const [vx, vy, vw, vh] = viewBox;
  const scale = Math.min(rect.width / vw, rect.height / vh) || 1;
  const offsetX = rect.left + (rect.width - vw * scale) / 2;
  const offsetY = rect.top + (rect.height - vh * scale) / 2;
  return [(clientX - offsetX) / scale + vx, (clientY - offsetY) / scale + vy];
}

function browserDownload(payload: ExportPayload): void {
  if (typeof URL === "undefined" || typeof URL.createObjectURL !== "function") return;
  const blob = new Blob([payload.text], { type: payload.mime });
  const url = URL.createObjectURL(blob);
  const a = document.createElement("a");
  a.href = url;
  a.download = payload.filename;
  a.click();
  URL.revokeObjectURL(url);
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [k, v] of Object.entries(attrs)) node.setAttribute(k, v);
  if (text !== undefined) node.textContent = text;
  return node;
}

const TOOLS = ["pointer", "sphere", "beam", "fracture", "bubble", "spark", "dent"] as const;

export class Panel {
  readonly editor: Editor;
  readonly host: HTMLElement;
  private readonly download: DownloadSink;
  private readonly playbackMs: number;
  private readonly steps: number;
  private inflight = new Set<Promise<void>>();
  private playTimer: ReturnType<typeof setInterval> | null = null;

  private notices!: HTMLElement;
  private titleEl!: HTMLElement;
  private frozenBadge!: HTMLElement;
  private sceneBox!: HTMLElement;
  private overlayBox!: HTMLElement;
  private overviewBox!: HTMLElement;
  private timelineBox!: HTMLElement;
  private editPane!: HTMLElement;
  private overviewPane!: HTMLElement;
  private scrub!: HTMLInputElement;
  private frameLabel!: HTMLElement;
  private sphereSelect!: HTMLSelectElement;
  private beamSelect!: HTMLSelectElement;
  private sparkPartner!: HTMLSelectElement;
  private controls = new Map<string, HTMLInputElement>();

  constructor(host: HTMLElement, client: Client, opts: PanelOptions = {}) {
    this.host = host;
    this.download = opts.download ?? browserDownload;
    this.playbackMs = opts.playbackMs ?? 350;
    this.steps = opts.steps ?? 24;
    this.editor = new Editor(client, {
      onScene: (svg) => this.paintScene(svg),
      onDocument: (doc) => this.syncControls(doc),
      onNotice: (kind, text) => this.notice(kind, text),
      onFrame: (svg, pos, total) => this.paintFrame(svg, pos, total),
      onOverview: (svg, timeline) => this.paintOverview(svg, timeline),
      onTrace: () => {},
    });
    this.build();
  }

  /** Track an async gesture so tests can wait for quiet. */
  private run(p: Promise<unknown>): Promise<void> {
    const wrapped: Promise<void> = Promise.resolve(p).then(
      () => undefined,
      (err) => this.notice("error", String(err instanceof Error ? err.message : err)),
    );
    this.inflight.add(wrapped);
    void wrapped.finally(() => this.inflight.delete(wrapped));
    return wrapped;
  }

  async settle(): Promise<void> {
    while (this.inflight.size > 0) {
      await Promise.allSettled([...this.inflight]);
    }
  }

  async open(id: string): Promise<void> {
    await this.run(this.editor.load(id));
  }

  /** Scene click already in scene coordinates (tests drive this directly). */
  sceneClickScene(pt: Vec2): Promise<void> {
    return this.run(this.editor.sceneClick(pt));
  }

  // -- construction ------------------------------------------------------------

  private build(): void {
    this.host.classList.add("lv-root");

    this.notices = el("div", { class: "lv-notices", "aria-live": "polite" });
    this.host.appendChild(this.notices);

    // header
    const header = el("div", { class: "lv-header" });
    this.titleEl = el("span", { class: "lv-title" }, "no scenario");
    this.frozenBadge = el("span", { class: "lv-frozen", hidden: "" }, "frozen: fork to edit");
    const forkBtn = el("button", { "data-control": "fork" }, "Fork");
    forkBtn.addEventListener("click", () => this.run(this.editor.forkCurrent()));
    const exportJson = el("button", { "data-control": "export-json" }, "Export JSON");
    exportJson.addEventListener("click", () => {
      const payload = this.editor.exportJson();
      if (payload) this.download(payload);
      else this.notice("error", "nothing to export yet");
    });
    const exportSvg = el("button", { "data-control": "export-svg" }, "Export SVG");
    exportSvg.addEventListener("click", () => {
      const payload = this.editor.exportSvg();
      if (payload) this.download(payload);
      else this.notice("error", "nothing to export yet");
    });
    header.append(this.titleEl, this.frozenBadge, forkBtn, exportJson, exportSvg);
    this.host.appendChild(header);

    // tabs
    const tabs = el("div", { class: "lv-tabs" });
    const editTab = el("button", { "data-tab": "edit", class: "active" }, "Edit");
    const overviewTab = el("button", { "data-tab": "overview" }, "Overview");
    editTab.addEventListener("click", () => this.showTab("edit"));
    overviewTab.addEventListener("click", () => this.showTab("overview"));
    tabs.append(editTab, overviewTab);
    this.host.appendChild(tabs);

    // edit pane: controls + scene + playback
    this.editPane = el("div", { class: "lv-edit" });
    this.editPane.appendChild(this.buildControls());
    this.editPane.appendChild(this.buildScene());
    this.editPane.appendChild(this.buildPlayback());
    this.host.appendChild(this.editPane);

    // overview pane
    this.overviewPane = el("div", { class: "lv-overview", hidden: "" });
    this.overviewBox = el("div", { class: "lv-overview-svg" });
    this.timelineBox = el("div", { class: "lv-timeline" });
    this.overviewPane.append(this.overviewBox, this.timelineBox);
    this.host.appendChild(this.overviewPane);
  }

  private slider(
    label: string,
    control: string,
    min: number,
    max: number,
    step: number,
    commit: (value: number) => Promise<unknown>,
  ): HTMLElement {
    const wrap = el("label", { class: "lv-field" });
    wrap.append(el("span", {}, label));
    const input = el("input", {
      type: "range",
      min: String(min),
      max: String(max),
      step: String(step),
      "data-control": control,
    });
    input.addEventListener("change", () => this.run(commit(parseFloat(input.value))));
    wrap.appendChild(input);
    this.controls.set(control, input);
    return wrap;
  }

  private colorInput(
    label: string,
    control: string,
    commit: (hex: string) => Promise<unknown>,
  ): HTMLElement {
    const wrap = el("label", { class: "lv-field" });
    wrap.append(el("span", {}, label));
    const input = el("input", { type: "color", "data-control": control });
    input.addEventListener("change", () => this.run(commit(input.value)));
    wrap.appendChild(input);
    this.controls.set(control, input);
    return wrap;
  }

  private buildControls(): HTMLElement {
    const box = el("div", { class: "lv-controls" });

    box.appendChild(el("h3", {}, "Sphere"));
    this.sphereSelect = el("select", { id: "lv-sphere-select" });
    this.sphereSelect.addEventListener("change", () =>
      this.run(this.editor.select("sphere", this.sphereSelect.value)),
    );
    box.appendChild(this.sphereSelect);

    box.appendChild(
      this.slider("inner light", "light", 0, 1.5, 0.05, (v) => this.editor.setLight(v)),
    );
    box.appendChild(
      this.slider("shell thickness", "shell-thickness", 0.01, 0.6, 0.01, (v) =>
        this.editor.setShellThickness(v),
      ),
    );
    box.appendChild(
      this.slider("shell transparency", "shell-transparency", 0, 1, 0.05, (v) =>
        this.editor.setShellTransparency(v),
      ),
    );
    box.appendChild(
      this.colorInput("shell color", "shell-color", (hex) => this.editor.setShellColor(hex)),
    );

    // sector painting: pick a color and a start angle, then paint
    const sectorWrap = el("div", { class: "lv-field" });
    sectorWrap.append(el("span", {}, "paint sector"));
    const sectorColor = el("input", { type: "color", id: "lv-sector-color", value: "#aa3355" });
    const sectorStart = el("input", {
      type: "number",
      id: "lv-sector-start",
      value: "0",
      step: "0.1",
    });
    const sectorBtn = el("button", { "data-control": "paint-sector" }, "Paint");
    sectorBtn.addEventListener("click", () =>
      this.run(
        this.editor.paintSector(parseFloat(sectorStart.value) || 0, 0.8, sectorColor.value),
      ),
    );
    sectorWrap.append(sectorColor, sectorStart, sectorBtn);
    box.appendChild(sectorWrap);

    const nestBtn = el("button", { "data-control": "nest" }, "Nest a child sphere");
    nestBtn.addEventListener("click", () => this.run(this.editor.nestChild()));
    box.appendChild(nestBtn);

    box.appendChild(
      this.slider("border blur", "border-blur", 0, 0.5, 0.02, (v) =>
        this.editor.setBorderBlur(v),
      ),
    );

    box.appendChild(el("h3", {}, "Beam"));
    this.beamSelect = el("select", { id: "lv-beam-select" });
    this.beamSelect.addEventListener("change", () =>
      this.run(this.editor.select("beam", this.beamSelect.value)),
    );
    box.appendChild(this.beamSelect);

    box.appendChild(
      this.slider("size (rays)", "beam-size", 1, 64, 1, (v) => this.editor.setBeamSize(v)),
    );
    box.appendChild(
      this.slider("intensity", "beam-intensity", 0, 2, 0.05, (v) =>
        this.editor.setBeamIntensity(v),
      ),
    );
    box.appendChild(
      this.colorInput("color", "beam-color", (hex) => this.editor.setBeamColor(hex)),
    );
    box.appendChild(
      this.slider("diffuseness", "beam-diffuseness", 0, 1.5, 0.05, (v) =>
        this.editor.setBeamDiffuseness(v),
      ),
    );
    box.appendChild(
      this.slider("direction", "beam-direction", -3.1416, 3.1416, 0.05, (v) =>
        this.editor.setBeamDirection(v),
      ),
    );

    box.appendChild(el("h3", {}, "Spark"));
    const sparkWrap = el("div", { class: "lv-field" });
    this.sparkPartner = el("select", { id: "lv-spark-partner" });
    const sparkBtn = el("button", { "data-control": "spark" }, "Toggle spark");
    sparkBtn.addEventListener("click", () =>
      this.run(this.editor.toggleSparkWith(this.sparkPartner.value)),
    );
    sparkWrap.append(this.sparkPartner, sparkBtn);
    box.appendChild(sparkWrap);

    return box;
  }

  private buildScene(): HTMLElement {
    const wrap = el("div", { class: "lv-scene" });

    const toolbar = el("div", { class: "lv-toolbar" });
    for (const tool of TOOLS) {
      const btn = el("button", { "data-tool": tool }, tool);
      btn.addEventListener("click", () => {
        this.editor.setTool(tool === "pointer" ? null : tool);
        toolbar.querySelectorAll("button").forEach((b) => b.classList.remove("active"));
        btn.classList.add("active");
      });
      toolbar.appendChild(btn);
    }
    const perspectiveBtn = el("button", { "data-view": "perspective" }, "perspective");
    perspectiveBtn.addEventListener("click", () => {
      const next = this.editor.state.view === "perspective" ? "view" : "perspective";
      perspectiveBtn.classList.toggle("active", next === "perspective");
      this.run(this.editor.setView(next));
    });
    toolbar.appendChild(perspectiveBtn);
    wrap.appendChild(toolbar);

    const stage = el("div", { class: "lv-stage" });
    this.sceneBox = el("div", { class: "lv-svg" });
    this.overlayBox = el("div", { class: "lv-overlay" });
    stage.append(this.sceneBox, this.overlayBox);
    stage.addEventListener("click", (ev) => {
      const rect = stage.getBoundingClientRect();
      if (rect.width <= 0 || rect.height <= 0) return; // not laid out
      const vb = parseViewBox(this.editor.lastSvg);
      const pt = pixelToScene(rect, vb, ev.clientX, ev.clientY);
      void this.sceneClickScene(pt);
    });
    wrap.appendChild(stage);
    return wrap;
  }

  private buildPlayback(): HTMLElement {
    const bar = el("div", { class: "lv-playback" });
    const play = el("button", { id: "lv-play" }, "Play");
    const stop = el("button", { id: "lv-stop" }, "Stop");
    this.scrub = el("input", {
      type: "range",
      id: "lv-scrub",
      min: "0",
      max: "0",
      step: "1",
      value: "0",
    });
    this.frameLabel = el("span", { class: "lv-frame-label" }, "");

    play.addEventListener("click", () => this.run(this.startPlayback()));
    stop.addEventListener("click", () => this.stopPlayback());
    this.scrub.addEventListener("input", () =>
      this.run(this.seekTo(parseInt(this.scrub.value, 10))),
    );

    bar.append(play, stop, this.scrub, this.frameLabel);
    return bar;
  }

  // -- playback ----------------------------------------------------------------

  private async startPlayback(): Promise<void> {
    this.stopPlayback();
    const total = await this.editor.ensureFrames(this.steps);
    if (!total) return;
    this.scrub.max = String(total - 1);
    this.editor.state.playback = -1;
    this.editor.advance(); // show frame 0 immediately
    this.playTimer = setInterval(() => {
      if (!this.editor.advance()) this.stopPlayback();
    }, this.playbackMs);
  }

  private stopPlayback(): void {
    if (this.playTimer !== null) {
      clearInterval(this.playTimer);
      this.playTimer = null;
    }
  }

  private async seekTo(position: number): Promise<void> {
    const total = await this.editor.ensureFrames(this.steps);
    if (!total) return;
    this.scrub.max = String(total - 1);
    this.editor.seek(position);
  }

  // -- painting ------------------------------------------------------------------

  private paintScene(svg: string): void {
    this.sceneBox.innerHTML = svg;
    this.paintOverlayFromDoc();
  }

  private paintFrame(svg: string, position: number, total: number): void {
    this.sceneBox.innerHTML = svg;
    this.scrub.max = String(total - 1);
    this.scrub.value = String(position);
    this.frameLabel.textContent = `frame ${position + 1}/${total}`;
  }

  private paintOverview(svg: string, timeline: TimelineNode | null): void {
    this.overviewBox.innerHTML = svg;
    this.timelineBox.innerHTML = "";
    if (timeline) this.timelineBox.appendChild(this.timelineList(timeline));
  }

  private timelineList(node: TimelineNode): HTMLElement {
    const li = el("div", { class: "lv-timeline-node" });
    const btn = el("button", { "data-timeline-id": node.id }, node.title || node.id);
    if (node.id === this.editor.state.current) btn.classList.add("active");
    btn.addEventListener("click", () => {
      this.showTab("edit");
      void this.open(node.id);
    });
    li.appendChild(btn);
    const kids = el("div", { class: "lv-timeline-children" });
    for (const child of node.children) kids.appendChild(this.timelineList(child));
    li.appendChild(kids);
    return li;
  }

  private showTab(tab: "edit" | "overview"): void {
    const isEdit = tab === "edit";
    this.editPane.toggleAttribute("hidden", !isEdit);
    this.overviewPane.toggleAttribute("hidden", isEdit);
    this.host.querySelectorAll(".lv-tabs button").forEach((b) => {
      b.classList.toggle("active", b.getAttribute("data-tab") === tab);
    });
    if (!isEdit) void this.run(this.editor.showOverview());
  }

  /** Thin SVG layer over the server render: selection ring, dent arcs. */
  private paintOverlayFromDoc(): void {
    const doc = this.editor.doc;
    if (!doc) {
      this.overlayBox.innerHTML = "";
      return;
    }
    const vb = parseViewBox(this.editor.lastSvg).join(" ");
    const parts: string[] = [];
    const sel = this.editor.state.selection;
    if (sel?.kind === "sphere") {
      const sp = doc.spheres.find((s) => s.id === sel.id);
      if (sp) {
        parts.push(
          `<circle cx="${sp.center[0]}" cy="${sp.center[1]}" r="${sp.radius * 1.04}" ` +
            `fill="none" stroke="#4da3ff" stroke-width="0.015" stroke-dasharray="0.05 0.03"/>`,
        );
      }
    }
    for (const dent of parseDents(doc.notes)) {
      const sp = doc.spheres.find((s) => s.id === dent.sphere);
      if (!sp) continue;
      // inward arc: a chord of the rim bowed toward the center
      const r = sp.radius;
      const a0 = dent.angle - dent.span / 2;
      const a1 = dent.angle + dent.span / 2;
      const p0 = [sp.center[0] + r * Math.cos(a0), sp.center[1] + r * Math.sin(a0)];
      const p1 = [sp.center[0] + r * Math.cos(a1), sp.center[1] + r * Math.sin(a1)];
      const rm = r * (1 - dent.depth);
      const mid = [
        sp.center[0] + rm * Math.cos(dent.angle),
        sp.center[1] + rm * Math.sin(dent.angle),
      ];
      parts.push(
        `<path d="M ${p0[0]} ${p0[1]} Q ${mid[0]} ${mid[1]} ${p1[0]} ${p1[1]}" ` +
          `fill="none" stroke="#caa85e" stroke-width="0.02" data-dent="${dent.sphere}"/>`,
      );
    }
    this.overlayBox.innerHTML =
      `<svg xmlns="http://www.w3.org/2000/svg" viewBox="${vb}">` + parts.join("") + "</svg>";
  }

  /** Push confirmed document values back into the inputs. */
  private syncControls(doc: ScenarioDoc): void {
    this.titleEl.textContent = `${doc.title || "untitled"} (${doc.id})`;
    this.frozenBadge.toggleAttribute("hidden", doc.children.length === 0);

    const fill = (select: HTMLSelectElement, ids: [string, string][], value: string | null) => {
      select.innerHTML = "";
      for (const [id, label] of ids) {
        select.appendChild(el("option", { value: id }, label));
      }
      if (value) select.value = value;
    };

    const sphereIds: [string, string][] = doc.spheres.map((s) => [
      s.id,
      s.label ? `${s.id} ${s.label}` : s.id,
    ]);
    const beamIds: [string, string][] = doc.beams.map((b) => [b.id, b.id]);

    const sel = this.editor.state.selection;
    const sphereId =
      sel?.kind === "sphere" ? sel.id : (doc.spheres[0]?.id ?? null);
    const beamId = sel?.kind === "beam" ? sel.id : (doc.beams[0]?.id ?? null);

    fill(this.sphereSelect, sphereIds, sphereId);
    fill(this.beamSelect, beamIds, beamId);
    fill(
      this.sparkPartner,
      sphereIds.filter(([id]) => id !== sphereId),
      null,
    );

    const set = (control: string, value: string) => {
      const input = this.controls.get(control);
      if (input) input.value = value;
    };

    const sp = sphereId ? sphereById(doc, sphereId) : null;
    if (sp) {
      set("light", String(sp.light_level));
      set("border-blur", String(sp.border_blur));
      if (sp.shell) {
        set("shell-thickness", String(sp.shell.thickness));
        set("shell-transparency", String(1 - sp.shell.opacity));
        set("shell-color", rgbToHex(sp.shell.medium.tint));
      }
    }
    const beam = beamId ? doc.beams.find((b) => b.id === beamId) : null;
    if (beam) {
      set("beam-size", String(beam.ray_count));
      const peak = Math.max(...beam.intensity);
      set("beam-intensity", String(peak));
      set("beam-color", rgbToHex(
        peak > 0 ? (beam.intensity.map((c) => c / peak) as [number, number, number]) : [1, 1, 1],
      ));
      set("beam-diffuseness", String(beam.spread));
      set("beam-direction", String(beam.direction));
    }
  }

  private notice(kind: "info" | "error", text: string): void {
    const item = el("div", { class: `lv-notice ${kind}` }, text);
    this.notices.appendChild(item);
    setTimeout(() => item.remove(), 6000);
  }
}
