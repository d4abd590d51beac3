// Wire types for the grounder HTTP API. The console never invents state of
// its own: everything rendered is a projection of these documents.

export interface MemoryRecordDoc {
  actor: string;
  action: string;
  intent: string | null;
  ts: string;
  session_id: string;
}

export interface NodeDoc {
  id: string;
  label: string;
  descriptors: string[];
  center: [number, number, number];
  half_extents: [number, number, number];
  scene_context: string;
  memory: MemoryRecordDoc[];
  created_at?: string;
}

export interface EdgeDoc {
  from_id: string;
  to_id: string;
  relation: string;
  distance: number;
}

export interface GraphDoc {
  schema_version?: number;
  session_id: string;
  frame: { origin: [number, number, number]; axes: string };
  radius_m: number;
  nodes: NodeDoc[];
  edges: EdgeDoc[];
}

export interface ScoredCandidateDoc {
  node_id: string;
  score: number;
}

export interface TraceStepDoc {
  stage: string;
  in: number;
  out: number;
  reason: string | null;
}

export interface ResolutionDoc {
  mode: "resolved" | "fallback";
  target_id?: string;
  candidates: ScoredCandidateDoc[];
  trace: TraceStepDoc[];
  raw_transcript: string;
}

export interface DirectiveDoc {
  mode: "pointer" | "fallback_transcript";
  transcript: string;
  anchor_point?: [number, number, number];
  summary?: string;
  steps: { letter: string; text: string }[];
  referent_id?: string;
  active: boolean;
}

export interface UtteranceResponse {
  query: unknown;
  resolution: ResolutionDoc;
  directive: DirectiveDoc;
}

export interface ActionResponse {
  node: {
    id: string;
    label: string;
    center: [number, number, number];
    memory_records: number;
  };
  expired_directives: number;
}

export interface CameraForm {
  position: [number, number, number];
  yawDeg: number;
}

export interface CameraPoseDoc {
  position: [number, number, number];
  orientation: [number, number, number, number];
  h_fov?: number;
  v_fov?: number;
  near?: number;
  far?: number;
}

export function cameraPoseFromForm(form: CameraForm): CameraPoseDoc {
  const half = (form.yawDeg * Math.PI) / 360;
  return {
    position: form.position,
    orientation: [Math.cos(half), 0, Math.sin(half), 0],
  };
}

export interface HistoryEntry {
  kind: "utterance" | "action";
  at: string;
  summary: string;
}
