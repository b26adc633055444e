/**
 * Browser entry point. Finds the service, opens the scenario named in the
 * URL (?scenario=...) or creates a starter scene, and mounts the panel.
 */

import { Client } from "./api.js";
import { Panel } from "./panel.js";
import type { ScenarioDoc, ScenarioEnvelope } from "./types.js";

function randomId(): string {
  const bytes = new Uint8Array(16);
  crypto.getRandomValues(bytes);
  return Array.from(bytes, (b) => b.toString(16).padStart(2, "0")).join("");
}

export function starterScenario(): ScenarioEnvelope {
  const doc: ScenarioDoc = {
    id: randomId(),
    title: "new scene",
    spheres: [
      {
        id: "s1",
        label: "subject",
        center: [0.0, 0.0],
        radius: 1.0,
        interior: { refractive_index: 1.5, absorption: 1.2, tint: [1.0, 0.95, 0.85] },
        light_level: 0.8,
        fractures: [],
        bubbles: [],
        children: [],
        border_blur: 0.0,
        revealed: false,
      },
    ],
    beams: [
      {
        id: "b1",
        source_sphere: "s1",
        origin_depth: 0.3,
        origin_angle: 0.0,
        direction: 0.6,
        spread: 0.25,
        ray_count: 5,
        intensity: [1.0, 0.9, 0.7],
      },
    ],
    sparks: [],
    notes: "",
    children: [],
    created_at: new Date().toISOString(),
  };
  return { scenario: doc, schema_version: 1 };
}

async function boot(): Promise<void> {
  const params = new URLSearchParams(window.location.search);
  const base = params.get("api") ?? `http://${window.location.hostname || "127.0.0.1"}:8642`;
  const client = new Client(base);
  const host = document.getElementById("app");
  if (!host) throw new Error("missing #app element");
  const panel = new Panel(host, client);

  try {
    await client.health();
  } catch {
    panel.editor.notice(
      "error",
      `cannot reach the service at ${base}; start it with: liveia serve --port 8642`,
    );
    return;
  }

  let id = params.get("scenario");
  if (!id) {
    const created = await client.createScenario(starterScenario());
    id = created.id;
    const url = new URL(window.location.href);
    url.searchParams.set("scenario", id);
    history.replaceState(null, "", url.toString());
  }
  await panel.open(id);
}

void boot();
