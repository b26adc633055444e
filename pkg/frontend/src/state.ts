/**
 * Editor state and its invariants.
 *
 * The state never carries document content; the confirmed server copy lives
 * on the editor. What it tracks is which scenario is open, what is selected,
 * which tool is armed, where playback sits, and whether this document has
 * been changed since it was loaded (dirty).
 */

import type { ScenarioDoc } from "./types.js";

export type ToolMode = "sphere" | "beam" | "fracture" | "bubble" | "spark" | "dent";
export type ViewMode = "view" | "perspective";

export interface Selection {
  kind: "sphere" | "beam";
  id: string;
}

export interface EditorState {
  current: string | null;
  selection: Selection | null;
  tool: ToolMode | null; // null = plain pointer
  view: ViewMode;
  playback: number; // frame index, 0-based; -1 when no frames loaded
  dirty: boolean;
}

export function initialState(): EditorState {
  return {
    current: null,
    selection: null,
    tool: null,
    view: "view",
    playback: -1,
    dirty: false,
  };
}

export function selectionResolves(sel: Selection | null, doc: ScenarioDoc | null): boolean {
  if (!sel) return true;
  if (!doc) return false;
  if (sel.kind === "sphere") return doc.spheres.some((s) => s.id === sel.id);
  return doc.beams.some((b) => b.id === sel.id);
}

/**
 * Check the state against the loaded document. Violations mean a bug in the
 * editor, not bad user input, so callers assert on an empty result.
 */
export function invariantViolations(state: EditorState, doc: ScenarioDoc | null): string[] {
  const out: string[] = [];
  if (!selectionResolves(state.selection, doc)) {
    out.push(`selection '${state.selection?.id}' does not resolve in the loaded scenario`);
  }
  if (state.dirty) {
    if (!doc) {
      out.push("dirty with no document loaded");
    } else if (doc.children.length > 0) {
      out.push("dirty on a forked scenario; edits must land on unforked leaves");
    }
  }
  return out;
}

/** Drop a selection that no longer points at anything. */
export function pruneSelection(state: EditorState, doc: ScenarioDoc | null): void {
  if (!selectionResolves(state.selection, doc)) state.selection = null;
}
