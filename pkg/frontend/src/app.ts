/**
 * IDE shell: hybrid editor, always-visible document text pane, toolbar
 * (Insert VIsx / Run / Stop / Save), and an output pane fed by kernel
 * notifications. All state lives in the kernel; every action round-trips.
 */

import type { KernelClient } from "./client.js";
import { DocumentView } from "./editor.js";
import type { DefInfo } from "./protocol.js";

export class App {
  readonly view: DocumentView;
  private readonly textPane: HTMLTextAreaElement;
  private readonly outputPane: HTMLPreElement;
  private readonly defsSelect: HTMLSelectElement;
  private readonly statusLine: HTMLElement;
  private polling: ReturnType<typeof setInterval> | null = null;

  constructor(
    private readonly root: HTMLElement,
    private readonly client: KernelClient,
  ) {
    const toolbar = el("div", "hvx-toolbar");
    this.defsSelect = el("select", "hvx-defs") as HTMLSelectElement;
    toolbar.appendChild(this.defsSelect);
    toolbar.appendChild(this.button("Insert VIsx", () => this.insertSelected()));
    toolbar.appendChild(this.button("Run", () => this.run()));
    toolbar.appendChild(this.button("Stop", () => this.stop()));
    toolbar.appendChild(this.button("Save", () => this.saveToPane()));
    this.statusLine = el("span", "hvx-status");
    toolbar.appendChild(this.statusLine);
    root.appendChild(toolbar);

    const editorHost = el("div", "hvx-editor");
    root.appendChild(editorHost);

    const paneLabel = el("div", "hvx-pane-label");
    paneLabel.textContent = "document text";
    root.appendChild(paneLabel);
    this.textPane = el("textarea", "hvx-text-pane") as HTMLTextAreaElement;
    this.textPane.addEventListener("change", () => {
      void this.client
        .applyTextEdit([0, this.view.byteLength], this.textPane.value)
        .then(() => this.view.refresh());
    });
    root.appendChild(this.textPane);

    this.outputPane = el("pre", "hvx-output") as HTMLPreElement;
    root.appendChild(this.outputPane);

    this.view = new DocumentView(editorHost, client, () => {
      this.textPane.value = this.view.text;
    });
  }

  private button(label: string, onClick: () => void): HTMLButtonElement {
    const b = el("button", "hvx-action") as HTMLButtonElement;
    b.textContent = label;
    b.setAttribute("data-action", label);
    b.addEventListener("click", onClick);
    return b;
  }

  async open(text: string): Promise<void> {
    await this.client.open(text);
    await this.view.refresh();
    await this.refreshDefs();
  }

  /** Rebuild the whole view from an already-open kernel session. */
  async openExisting(): Promise<void> {
    await this.view.refresh();
    await this.refreshDefs();
  }

  async refreshDefs(): Promise<void> {
    const { defs } = await this.client.defs();
    this.defsSelect.textContent = "";
    for (const def of defs) {
      const option = document.createElement("option");
      option.value = def.name;
      option.textContent = def.name;
      this.defsSelect.appendChild(option);
    }
  }

  async insertSelected(): Promise<void> {
    const name = this.defsSelect.value;
    if (!name) return;
    const offset = this.view.cursorOffset || this.view.byteLength;
    await this.client.insertVisx(name, offset);
    await this.view.refresh();
    await this.refreshDefs();
  }

  async run(): Promise<void> {
    this.outputPane.textContent = "";
    this.statusLine.textContent = "running";
    await this.client.run();
    this.startPolling();
  }

  async stop(): Promise<void> {
    try {
      await this.client.stop();
    } finally {
      this.statusLine.textContent = "stopped";
    }
  }

  async saveToPane(): Promise<void> {
    const { text } = await this.client.save();
    this.textPane.value = text;
  }

  private startPolling(): void {
    if (this.polling !== null) clearInterval(this.polling);
    this.polling = setInterval(() => void this.drainNotifications(), 50);
  }

  private stopPolling(): void {
    if (this.polling !== null) {
      clearInterval(this.polling);
      this.polling = null;
    }
  }

  /** Pull queued notifications; resolves true once a run has finished. */
  async drainNotifications(): Promise<boolean> {
    const { notifications } = await this.client.notifications();
    let finished = false;
    for (const note of notifications) {
      if (note.method === "runOutput") {
        this.outputPane.textContent += String(note.params.text ?? "");
      } else if (note.method === "runDone") {
        finished = true;
        if (typeof note.params.value === "string") {
          this.outputPane.textContent += note.params.value + "\n";
          this.statusLine.textContent = "idle";
        } else {
          this.outputPane.textContent += `error: ${String(note.params.error)}\n`;
          this.statusLine.textContent = "error";
        }
      } else if (note.method === "diagnostic") {
        this.outputPane.textContent += `diagnostic: ${String(note.params.message)}\n`;
      }
    }
    if (finished) this.stopPolling();
    return finished;
  }

  dispose(): void {
    this.stopPolling();
    this.root.textContent = "";
  }
}

function el(tag: string, className: string): HTMLElement {
  const node = document.createElement(tag);
  node.className = className;
  return node;
}
