// Console state: a pure projection of server responses. The store owns no
// truth of its own; any forced refetch must reproduce the identical view.
// Mutations run one at a time; utterance responses apply last-wins behind a
// monotone request counter so a stale resolution can never clobber a newer one.

import { ApiError, GrounderApi } from "./api.js";
import type {
  CameraPoseDoc,
  DirectiveDoc,
  GraphDoc,
  HistoryEntry,
  NodeDoc,
  ResolutionDoc,
} from "./types.js";

export interface ViewState {
  sessionId: string | null;
  scene: GraphDoc | null;
  selectedNodeId: string | null;
  lastResolution: ResolutionDoc | null;
  lastDirective: DirectiveDoc | null;
  history: HistoryEntry[];
  banner: { kind: "fallback" | "error"; text: string } | null;
  showEdges: boolean;
  busy: boolean;
}

type Listener = (state: ViewState) => void;

function validGraphDoc(doc: unknown): doc is GraphDoc {
  const g = doc as GraphDoc;
  return (
    !!g &&
    typeof g.session_id === "string" &&
    Array.isArray(g.nodes) &&
    Array.isArray(g.edges) &&
    g.nodes.every(
      (n) =>
        typeof n.id === "string" &&
        Array.isArray(n.center) &&
        n.center.length === 3 &&
        Array.isArray(n.half_extents) &&
        n.half_extents.length === 3,
    )
  );
}

export class ConsoleStore {
  readonly state: ViewState = {
    sessionId: null,
    scene: null,
    selectedNodeId: null,
    lastResolution: null,
    lastDirective: null,
    history: [],
    banner: null,
    showEdges: true,
    busy: false,
  };

  /** Set when a network failure leaves a retriable operation behind. */
  pendingRetry: (() => Promise<void>) | null = null;

  private listeners: Listener[] = [];
  private utteranceCounter = 0;
  private lastAppliedUtterance = 0;
  private mutationInFlight = false;

  constructor(readonly api: GrounderApi) {}

  subscribe(listener: Listener): () => void {
    this.listeners.push(listener);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== listener);
    };
  }

  private emit(): void {
    for (const listener of this.listeners) listener(this.state);
  }

  private fail(err: unknown, retry: (() => Promise<void>) | null): void {
    const text =
      err instanceof ApiError
        ? `${err.code}: ${err.message}`
        : `network error: ${String(err)}`;
    this.state.banner = { kind: "error", text };
    this.pendingRetry = retry;
    this.emit();
  }

  /** The pointer target, but only while the directive is live. FALLBACK and
   * expired directives never place an arrow. */
  arrowTargetId(): string | null {
    const d = this.state.lastDirective;
    if (!d || d.mode !== "pointer" || !d.active) return null;
    return d.referent_id ?? null;
  }

  async createSession(now?: string): Promise<void> {
    const resp = await this.api.createSession(now);
    this.state.sessionId = resp.session_id;
    this.emit();
  }

  async resumeSession(resumeFrom: string, now?: string): Promise<void> {
    const resp = await this.api.resumeSession(resumeFrom, now);
    this.state.sessionId = resp.session_id;
    await this.refetchGraph();
  }

  async loadScene(nodes: NodeDoc[], now?: string): Promise<void> {
    if (!this.state.sessionId) throw new Error("no active session");
    if (this.mutationInFlight) throw new Error("another mutation is in flight");
    this.mutationInFlight = true;
    this.state.busy = true;
    this.emit();
    try {
      await this.api.registerScene(this.state.sessionId, nodes, now);
      await this.refetchGraph();
      this.state.banner = null;
      this.pendingRetry = null;
    } catch (err) {
      this.fail(err, () => this.loadScene(nodes, now));
    } finally {
      this.mutationInFlight = false;
      this.state.busy = false;
      this.emit();
    }
  }

  /** Replace the scene snapshot from the server; the single source of truth. */
  async refetchGraph(): Promise<void> {
    if (!this.state.sessionId) throw new Error("no active session");
    const doc = await this.api.fetchGraph(this.state.sessionId);
    this.applyGraphDoc(doc);
  }

  /** Apply an externally supplied graph document (e.g. pasted JSON preview).
   * Schema mismatches raise a banner and leave the current view unchanged. */
  applyGraphDoc(doc: unknown): void {
    if (!validGraphDoc(doc)) {
      this.state.banner = { kind: "error", text: "graph document failed schema check" };
      this.emit();
      return;
    }
    this.state.scene = doc;
    if (
      this.state.selectedNodeId &&
      !doc.nodes.some((n) => n.id === this.state.selectedNodeId)
    ) {
      this.state.selectedNodeId = null;
    }
    this.emit();
  }

  async submitUtterance(
    transcript: string,
    camera?: CameraPoseDoc,
    now?: string,
  ): Promise<void> {
    if (!this.state.sessionId) throw new Error("no active session");
    const ticket = ++this.utteranceCounter;
    try {
      const resp = await this.api.submitUtterance(
        this.state.sessionId,
        transcript,
        camera,
        now,
      );
      if (ticket <= this.lastAppliedUtterance) return; // a newer response won
      this.lastAppliedUtterance = ticket;
      this.state.lastResolution = resp.resolution;
      this.state.lastDirective = resp.directive;
      this.state.banner =
        resp.directive.mode === "fallback_transcript"
          ? { kind: "fallback", text: resp.directive.transcript }
          : null;
      this.state.history = [
        ...this.state.history,
        { kind: "utterance", at: now ?? new Date().toISOString(), summary: transcript },
      ];
      this.pendingRetry = null;
      this.emit();
    } catch (err) {
      this.fail(err, () => this.submitUtterance(transcript, camera, now));
    }
  }

  async performAction(
    nodeId: string,
    action: string,
    newPosition?: [number, number, number],
    now?: string,
  ): Promise<void> {
    if (!this.state.sessionId) throw new Error("no active session");
    if (this.mutationInFlight) throw new Error("another mutation is in flight");
    this.mutationInFlight = true;
    this.state.busy = true;
    this.emit();
    try {
      const resp = await this.api.performAction(
        this.state.sessionId,
        nodeId,
        action,
        newPosition,
        now,
      );
      if (resp.expired_directives > 0 && this.state.lastDirective) {
        this.state.lastDirective = { ...this.state.lastDirective, active: false };
      }
      this.state.history = [
        ...this.state.history,
        {
          kind: "action",
          at: now ?? new Date().toISOString(),
          summary: `${action} ${nodeId}`,
        },
      ];
      // Edges may have been re-derived server-side; refetch, never simulate.
      await this.refetchGraph();
      this.pendingRetry = null;
    } catch (err) {
      this.fail(err, () => this.performAction(nodeId, action, newPosition, now));
    } finally {
      this.mutationInFlight = false;
      this.state.busy = false;
      this.emit();
    }
  }

  selectNode(nodeId: string | null): void {
    this.state.selectedNodeId = nodeId;
    this.emit();
  }

  toggleEdges(): void {
    this.state.showEdges = !this.state.showEdges;
    this.emit();
  }
}
