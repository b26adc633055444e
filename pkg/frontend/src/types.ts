/**
 * Wire types for the scenario service.
 *
 * These mirror the JSON documents the HTTP API stores and returns. Optional
 * keys (`parent`, `shell`, `waveform`, `source_sphere`) are omitted from the
 * wire form when unset, so they are optional here too.
 */

export type Vec2 = [number, number];
export type Rgb = [number, number, number];

export interface MediumDoc {
  refractive_index: number;
  absorption: number;
  tint: Rgb;
}

export interface ShellDoc {
  thickness: number;
  medium: MediumDoc;
  opacity: number;
  sectors: [number, number, string][];
}

export interface FractureDoc {
  endpoints: [Vec2, Vec2];
  width: number;
  medium: MediumDoc;
}

export interface BubbleDoc {
  center: Vec2;
  radius: number;
  medium: MediumDoc;
}

export interface SphereDoc {
  id: string;
  label: string;
  center: Vec2;
  radius: number;
  interior: MediumDoc;
  light_level: number;
  shell?: ShellDoc;
  fractures: FractureDoc[];
  bubbles: BubbleDoc[];
  children: string[];
  border_blur: number;
  revealed: boolean;
}

export interface WaveComponentDoc {
  frequency: number;
  amplitude: number;
  phase: number;
}

export interface WaveformDoc {
  components: WaveComponentDoc[];
  label: string;
}

export interface BeamDoc {
  id: string;
  source_sphere?: string | null;
  origin_depth: number;
  origin_angle: number;
  direction: number;
  spread: number;
  ray_count: number;
  intensity: Rgb;
  waveform?: WaveformDoc;
}

export interface SparkDoc {
  sphere_pair: [string, string];
  intensity: number;
}

export interface ScenarioDoc {
  id: string;
  title: string;
  spheres: SphereDoc[];
  beams: BeamDoc[];
  sparks: SparkDoc[];
  notes: string;
  parent?: string | null;
  children: string[];
  created_at: string;
  view_of?: string | null;
}

/** Envelope the service stores: the document plus its schema marker. */
export interface ScenarioEnvelope {
  scenario: ScenarioDoc;
  schema_version: number;
}

export interface TracePathDoc {
  points: Vec2[];
  events: string[];
  intensities: Rgb[];
  total_deflection: number;
}

export interface TraceResponse {
  beam: string;
  paths: TracePathDoc[];
}

export interface TimelineNode {
  id: string;
  title: string;
  created_at: string;
  children: TimelineNode[];
}

/** Error envelope every non-2xx service response carries. */
export interface ApiErrorBody {
  code: string;
  message: string;
  detail: unknown;
}
