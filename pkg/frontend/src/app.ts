// Wires the store, the board view, and the control forms together.

import { GrounderApi } from "./api.js";
import { ConsoleStore } from "./state.js";
import { cameraPoseFromForm } from "./types.js";
import type { NodeDoc } from "./types.js";
import { renderConsole } from "./view.js";

function el<T extends HTMLElement>(root: ParentNode, selector: string): T {
  const found = root.querySelector<T>(selector);
  if (!found) throw new Error(`missing element ${selector}`);
  return found;
}

export function bootConsole(root: HTMLElement, baseUrl: string): ConsoleStore {
  const api = new GrounderApi(baseUrl);
  const store = new ConsoleStore(api);

  root.innerHTML = `
    <header>
      <h1>grounder console</h1>
      <div class="session-controls">
        <button id="new-session">new session</button>
        <input id="resume-id" placeholder="lineage id to resume" />
        <button id="resume-session">resume</button>
        <button id="persist">persist</button>
        <span id="session-label"></span>
      </div>
    </header>
    <section class="load-scene">
      <textarea id="scene-json" rows="4"
        placeholder='paste a scene/graph document: {"nodes":[...]}'></textarea>
      <button id="load-scene">load scene</button>
      <label><input type="checkbox" id="toggle-edges" checked /> edges</label>
    </section>
    <section class="utterance-form">
      <input id="utterance" placeholder="e.g. locate the purple striped cube" size="48" />
      <button id="submit-utterance">resolve</button>
      <details class="camera-form">
        <summary>camera (optional)</summary>
        <input id="cam-x" placeholder="x" size="4" /><input id="cam-y" placeholder="y" size="4" />
        <input id="cam-z" placeholder="z" size="4" /><input id="cam-yaw" placeholder="yaw°" size="4" />
      </details>
    </section>
    <section class="action-form">
      <input id="action-verb" placeholder="action (e.g. moved)" size="12" />
      <input id="action-x" placeholder="new x" size="5" />
      <input id="action-y" placeholder="new y" size="5" />
      <input id="action-z" placeholder="new z" size="5" />
      <button id="perform-action">apply to selected</button>
    </section>
    <main id="console-root"></main>
  `;

  const consoleRoot = el<HTMLElement>(root, "#console-root");
  const sessionLabel = el<HTMLElement>(root, "#session-label");

  const rerender = () => {
    sessionLabel.textContent = store.state.sessionId
      ? `session ${store.state.sessionId}`
      : "no session";
    renderConsole(
      consoleRoot,
      store.state,
      store.arrowTargetId(),
      store.pendingRetry !== null,
      {
        onSelect: (id) => store.selectNode(id),
        onRetry: () => {
          const retry = store.pendingRetry;
          store.pendingRetry = null;
          if (retry) void retry();
        },
        onToggleEdges: () => store.toggleEdges(),
      },
    );
  };
  store.subscribe(rerender);
  rerender();

  el<HTMLButtonElement>(root, "#new-session").addEventListener("click", () => {
    void store.createSession();
  });
  el<HTMLButtonElement>(root, "#resume-session").addEventListener("click", () => {
    const lineage = el<HTMLInputElement>(root, "#resume-id").value.trim();
    if (lineage) void store.resumeSession(lineage);
  });
  el<HTMLButtonElement>(root, "#persist").addEventListener("click", () => {
    if (store.state.sessionId) void store.api.persist(store.state.sessionId);
  });
  el<HTMLButtonElement>(root, "#load-scene").addEventListener("click", () => {
    const raw = el<HTMLTextAreaElement>(root, "#scene-json").value;
    try {
      const doc = JSON.parse(raw) as { nodes?: NodeDoc[] };
      if (!Array.isArray(doc.nodes)) throw new Error("document has no nodes[]");
      void store.loadScene(doc.nodes);
    } catch (err) {
      store.state.banner = { kind: "error", text: `bad scene JSON: ${String(err)}` };
      rerender();
    }
  });
  el<HTMLInputElement>(root, "#toggle-edges").addEventListener("change", () => {
    store.toggleEdges();
  });
  el<HTMLButtonElement>(root, "#submit-utterance").addEventListener("click", () => {
    const text = el<HTMLInputElement>(root, "#utterance").value;
    if (!text.trim()) return;
    const cx = el<HTMLInputElement>(root, "#cam-x").value;
    const cy = el<HTMLInputElement>(root, "#cam-y").value;
    const cz = el<HTMLInputElement>(root, "#cam-z").value;
    const yaw = el<HTMLInputElement>(root, "#cam-yaw").value;
    const camera =
      cx && cy && cz
        ? cameraPoseFromForm({
            position: [Number(cx), Number(cy), Number(cz)],
            yawDeg: Number(yaw || "0"),
          })
        : undefined;
    void store.submitUtterance(text, camera);
  });
  el<HTMLButtonElement>(root, "#perform-action").addEventListener("click", () => {
    const selected = store.state.selectedNodeId;
    if (!selected) return;
    const verb = el<HTMLInputElement>(root, "#action-verb").value.trim() || "selected";
    const ax = el<HTMLInputElement>(root, "#action-x").value;
    const ay = el<HTMLInputElement>(root, "#action-y").value;
    const az = el<HTMLInputElement>(root, "#action-z").value;
    const newCenter =
      ax && ay && az
        ? ([Number(ax), Number(ay), Number(az)] as [number, number, number])
        : undefined;
    void store.performAction(selected, verb, newCenter);
  });

  return store;
}
