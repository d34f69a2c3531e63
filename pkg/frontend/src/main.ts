/** Browser entry point: connect to a kernel and open a pasted program. */

import { App } from "./app.js";
import { HttpKernelClient } from "./client.js";

const DEFAULT_URL = "http://127.0.0.1:8000";

function boot(): void {
  const root = document.getElementById("app");
  if (root === null) return;

  const connectBar = document.createElement("div");
  connectBar.className = "hvx-connect";
  const urlInput = document.createElement("input");
  urlInput.value = DEFAULT_URL;
  urlInput.size = 30;
  const programInput = document.createElement("textarea");
  programInput.className = "hvx-program-input";
  programInput.placeholder = "paste an .hvx program, then Open";
  const openButton = document.createElement("button");
  openButton.textContent = "Open";
  connectBar.append(urlInput, openButton);
  root.append(connectBar, programInput);

  let app: App | null = null;
  openButton.addEventListener("click", () => {
    const host = document.createElement("div");
    root.appendChild(host);
    app?.dispose();
    app = new App(host, new HttpKernelClient(urlInput.value));
    void app.open(programInput.value);
  });
}

boot();
