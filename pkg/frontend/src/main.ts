import { bootConsole } from "./app.js";

const root = document.querySelector<HTMLElement>("#app");
if (!root) {
  throw new Error("root element #app not found");
}

const params = new URLSearchParams(window.location.search);
const baseUrl = params.get("api") ?? "http://127.0.0.1:8023";
bootConsole(root, baseUrl);
