// Top-down board + panels, rendered straight from ViewState. The projection
// maps world (x, z) to viewport pixels; ABOVE/BELOW is not drawable in plan
// view, so each glyph carries its elevation as a badge instead.

import type { ViewState } from "./state.js";
import type { GraphDoc, NodeDoc } from "./types.js";

export interface Viewport {
  width: number;
  height: number;
  padding: number;
}

export const DEFAULT_VIEWPORT: Viewport = { width: 640, height: 420, padding: 40 };

export interface Projection {
  toPx(x: number, z: number): { left: number; top: number };
  scale: number;
}

export function makeProjection(scene: GraphDoc, vp: Viewport = DEFAULT_VIEWPORT): Projection {
  const xs = scene.nodes.map((n) => n.center[0]);
  const zs = scene.nodes.map((n) => n.center[2]);
  const minX = Math.min(...xs, 0);
  const maxX = Math.max(...xs, 0);
  const minZ = Math.min(...zs, 0);
  const maxZ = Math.max(...zs, 0);
  const spanX = Math.max(maxX - minX, 0.5);
  const spanZ = Math.max(maxZ - minZ, 0.5);
  const scale = Math.min(
    (vp.width - 2 * vp.padding) / spanX,
    (vp.height - 2 * vp.padding) / spanZ,
  );
  return {
    scale,
    toPx(x: number, z: number) {
      return {
        left: vp.padding + (x - minX) * scale,
        top: vp.padding + (z - minZ) * scale,
      };
    },
  };
}

function esc(text: string): string {
  return text.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;");
}

function glyphHtml(node: NodeDoc, proj: Projection, selected: boolean): string {
  const { left, top } = proj.toPx(node.center[0], node.center[2]);
  const w = Math.max(2 * node.half_extents[0] * proj.scale, 14);
  const h = Math.max(2 * node.half_extents[2] * proj.scale, 14);
  const cls = selected ? "glyph selected" : "glyph";
  const title = `${node.descriptors.join(" ")} ${node.label}`.trim();
  return (
    `<div class="${cls}" data-node-id="${esc(node.id)}" ` +
    `style="left:${left - w / 2}px;top:${top - h / 2}px;width:${w}px;height:${h}px;" ` +
    `title="${esc(title)}">` +
    `<span class="glyph-label">${esc(node.label)}</span>` +
    `<span class="glyph-elev" data-elevation="${node.center[1]}">y=${node.center[1].toFixed(2)}</span>` +
    `</div>`
  );
}

function edgesSvg(scene: GraphDoc, proj: Projection, vp: Viewport): string {
  const byId = new Map(scene.nodes.map((n) => [n.id, n] as const));
  const lines = scene.edges
    .map((e) => {
      const a = byId.get(e.from_id);
      const b = byId.get(e.to_id);
      if (!a || !b) return "";
      const pa = proj.toPx(a.center[0], a.center[2]);
      const pb = proj.toPx(b.center[0], b.center[2]);
      return (
        `<line data-edge="${esc(e.from_id)}->${esc(e.to_id)}" data-relation="${esc(e.relation)}" ` +
        `x1="${pa.left}" y1="${pa.top}" x2="${pb.left}" y2="${pb.top}"></line>`
      );
    })
    .join("");
  return `<svg class="edges" width="${vp.width}" height="${vp.height}">${lines}</svg>`;
}

function arrowHtml(state: ViewState, arrowTarget: string | null, proj: Projection): string {
  const directive = state.lastDirective;
  if (!arrowTarget || !directive || !directive.anchor_point) return "";
  const [ax, , az] = directive.anchor_point;
  const { left, top } = proj.toPx(ax, az);
  return (
    `<div class="arrow" data-target-id="${esc(arrowTarget)}" ` +
    `style="left:${left}px;top:${top}px;">&#8595;</div>`
  );
}

function boardHtml(state: ViewState, arrowTarget: string | null, vp: Viewport): string {
  if (!state.scene || state.scene.nodes.length === 0) {
    return `<div class="board empty" style="width:${vp.width}px;height:${vp.height}px;">` +
      `<p class="hint">No scene loaded. Paste a scene document and press Load.</p></div>`;
  }
  const proj = makeProjection(state.scene, vp);
  const glyphs = state.scene.nodes
    .map((n) => glyphHtml(n, proj, n.id === state.selectedNodeId))
    .join("");
  const edges = state.showEdges ? edgesSvg(state.scene, proj, vp) : "";
  return (
    `<div class="board" style="width:${vp.width}px;height:${vp.height}px;">` +
    edges + glyphs + arrowHtml(state, arrowTarget, proj) +
    `</div>`
  );
}

function bannerHtml(state: ViewState, retriable: boolean): string {
  if (!state.banner) return "";
  const retry = retriable ? `<button class="retry">retry</button>` : "";
  return `<div class="banner ${state.banner.kind}">${esc(state.banner.text)}${retry}</div>`;
}

function directivePanelHtml(state: ViewState, arrowTarget: string | null): string {
  const d = state.lastDirective;
  if (!d) return "";
  if (d.mode === "fallback_transcript") {
    return `<div class="directive fallback">transcript only (no pointer)</div>`;
  }
  const steps = d.steps.length
    ? `<ol class="steps">` +
      d.steps.map((s) => `<li data-letter="${esc(s.letter)}">${esc(s.text)}</li>`).join("") +
      `</ol>`
    : "";
  const status = arrowTarget ? "active" : "expired";
  return (
    `<div class="directive pointer ${status}">` +
    `<span class="summary-chip">${esc(d.summary ?? "")}</span>` +
    `<span class="directive-status">${status}</span>` +
    steps +
    `</div>`
  );
}

function candidatesHtml(state: ViewState): string {
  const r = state.lastResolution;
  if (!r || r.candidates.length === 0) return "";
  const rows = r.candidates
    .map(
      (c) =>
        `<li class="candidate" data-node-id="${esc(c.node_id)}">` +
        `${esc(c.node_id)} <span class="score">${c.score.toFixed(3)}</span></li>`,
    )
    .join("");
  const trace = r.trace
    .map(
      (t) =>
        `<tr><td>${esc(t.stage)}</td><td>${t.in}</td><td>${t.out}</td>` +
        `<td>${esc(t.reason ?? "")}</td></tr>`,
    )
    .join("");
  // Trace stays behind a disclosure; verbose overlays frustrate more than help.
  return (
    `<div class="candidates"><h3>candidates</h3><ol>${rows}</ol>` +
    `<details class="trace"><summary>trace</summary>` +
    `<table><thead><tr><th>stage</th><th>in</th><th>out</th><th>reason</th></tr></thead>` +
    `<tbody>${trace}</tbody></table></details></div>`
  );
}

function historyHtml(state: ViewState): string {
  if (state.history.length === 0) return "";
  const items = state.history
    .map((h) => `<li class="${h.kind}">${esc(h.at)} — ${esc(h.summary)}</li>`)
    .join("");
  return `<div class="history"><h3>history</h3><ul>${items}</ul></div>`;
}

export interface ViewHandlers {
  onSelect(nodeId: string | null): void;
  onRetry(): void;
  onToggleEdges(): void;
}

export function renderConsole(
  root: HTMLElement,
  state: ViewState,
  arrowTarget: string | null,
  retriable: boolean,
  handlers: ViewHandlers,
  vp: Viewport = DEFAULT_VIEWPORT,
): void {
  root.innerHTML =
    bannerHtml(state, retriable) +
    boardHtml(state, arrowTarget, vp) +
    directivePanelHtml(state, arrowTarget) +
    candidatesHtml(state) +
    historyHtml(state);

  for (const glyph of Array.from(root.querySelectorAll<HTMLElement>(".glyph"))) {
    glyph.addEventListener("click", () =>
      handlers.onSelect(glyph.dataset.nodeId ?? null),
    );
  }
  const retry = root.querySelector<HTMLButtonElement>(".retry");
  if (retry) retry.addEventListener("click", () => handlers.onRetry());
}
