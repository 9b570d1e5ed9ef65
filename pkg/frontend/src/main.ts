/** Entry point: pick the backend URL and mount the app. */

import { ApiClient } from "./api.js";
import { App } from "./render.js";

function backendUrl(): string {
  const fromQuery = new URLSearchParams(window.location.search).get("api");
  if (fromQuery) return fromQuery.replace(/\/$/, "");
  // same origin when served by the backend, common default otherwise
  if (window.location.protocol.startsWith("http")) return "";
  return "http://127.0.0.1:8000";
}

const root = document.getElementById("app");
if (root) {
  void new App(new ApiClient(backendUrl()), root).start();
}
