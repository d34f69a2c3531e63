/**
 * Hybrid document view: plain text segments interleaved with widget
 * mounts anchored at instance spans. Each instance can be toggled
 * between its widget and its textual form; both edit the same document
 * through the kernel, which remains the single source of truth.
 */

import type { KernelClient } from "./client.js";
import { mountTree, type MountHost } from "./mount.js";
import {
  ByteDoc,
  quoteString,
  type Diagnostic,
  type InstanceInfo,
  type RenderEntry,
  type Span,
} from "./protocol.js";

export class DocumentView {
  private doc = new ByteDoc("");
  private instances: InstanceInfo[] = [];
  private renders = new Map<string, RenderEntry>();
  private diagnostics: Diagnostic[] = [];
  private textMode = new Set<string>();
  /** last caret byte offset in a plain-text segment; insertions land here */
  cursorOffset = 0;

  constructor(
    private readonly container: HTMLElement,
    private readonly client: KernelClient,
    private readonly onChanged: () => void = () => {},
  ) {}

  get text(): string {
    return this.doc.text;
  }

  get byteLength(): number {
    return this.doc.byteLength;
  }

  async refresh(): Promise<void> {
    const [saved, status, rendered] = [
      await this.client.save(),
      await this.client.status(),
      await this.client.render(),
    ];
    this.doc = new ByteDoc(saved.text);
    this.instances = [...status.instances].sort((a, b) => a.span[0] - b.span[0]);
    this.renders = new Map(rendered.renders.map((r) => [r.key, r]));
    this.diagnostics = [...status.diagnostics, ...rendered.diagnostics];
    this.rebuild();
    this.onChanged();
  }

  toggleView(key: string): void {
    if (this.textMode.has(key)) this.textMode.delete(key);
    else this.textMode.add(key);
    this.rebuild();
  }

  isTextMode(key: string): boolean {
    return this.textMode.has(key);
  }

  private host(): MountHost {
    return {
      sendEvent: (handlerId, payload) => {
        void this.client.sendEvent(handlerId, payload).then(() => this.refresh());
      },
      editCodeField: (fieldSpan: Span, newText: string) => {
        void this.client
          .applyTextEdit(fieldSpan, quoteString(newText))
          .then(() => this.refresh());
      },
    };
  }

  private rebuild(): void {
    this.container.textContent = "";
    // top-level instances only: nested ones live inside their parents
    const top = this.instances.filter(
      (inst) => !this.instances.some((other) => other !== inst && contains(other.span, inst.span)),
    );
    let offset = 0;
    for (const inst of top) {
      this.appendTextSegment(offset, inst.span[0]);
      this.appendInstance(inst);
      offset = inst.span[1];
    }
    this.appendTextSegment(offset, this.doc.byteLength);
    for (const diagnostic of this.diagnostics) {
      this.container.appendChild(this.diagnosticWidget(diagnostic));
    }
  }

  private diagnosticWidget(diagnostic: Diagnostic): HTMLElement {
    const note = document.createElement("div");
    note.className = "hvx-diagnostic";
    const where = diagnostic.span === null ? "" : ` @ ${diagnostic.span[0]}..${diagnostic.span[1]}`;
    note.textContent = `${diagnostic.phase}: ${diagnostic.message}${where}`;
    if (diagnostic.span !== null) {
      note.setAttribute("data-span", `${diagnostic.span[0]},${diagnostic.span[1]}`);
      note.addEventListener("click", () => this.highlightSpan(diagnostic.span as Span));
    }
    return note;
  }

  /** Flash the segment or instance covering a span (diagnostic click). */
  highlightSpan(span: Span): void {
    for (const el of this.container.querySelectorAll<HTMLElement>("[data-span], [data-key]")) {
      const range = el.getAttribute("data-span");
      let covers = false;
      if (range !== null) {
        const [s, e] = range.split(",").map(Number);
        covers = s <= span[0] && span[0] < Math.max(e, s + 1);
      } else {
        const inst = this.instances.find((i) => i.key === el.getAttribute("data-key"));
        covers = inst !== undefined && inst.span[0] <= span[0] && span[0] < inst.span[1];
      }
      el.classList.toggle("hvx-highlight", covers);
    }
  }

  private appendTextSegment(start: number, end: number): void {
    const segment = document.createElement("textarea");
    segment.className = "hvx-text-segment";
    segment.value = this.doc.slice(start, end);
    segment.setAttribute("data-span", `${start},${end}`);
    segment.addEventListener("focus", () => {
      this.cursorOffset = end;
    });
    segment.addEventListener("change", () => {
      const replacement = this.doc.splice([start, end], segment.value);
      void this.client
        .applyTextEdit([0, this.doc.byteLength], replacement)
        .then(() => this.refresh());
    });
    this.container.appendChild(segment);
  }

  private appendInstance(inst: InstanceInfo): void {
    const box = document.createElement("div");
    box.className = "hvx-instance";
    box.setAttribute("data-key", inst.key);

    const toggle = document.createElement("button");
    toggle.className = "hvx-toggle";
    toggle.textContent = this.textMode.has(inst.key) ? "show widget" : "show text";
    toggle.addEventListener("click", () => this.toggleView(inst.key));
    box.appendChild(toggle);

    const render = this.renders.get(inst.key);
    const showText = this.textMode.has(inst.key) || !inst.resolved || render === undefined;
    if (showText) {
      const area = document.createElement("textarea");
      area.className = "hvx-instance-text";
      area.value = this.doc.slice(inst.span[0], inst.span[1]);
      area.addEventListener("change", () => {
        void this.client.applyTextEdit(inst.span, area.value).then(() => this.refresh());
      });
      box.appendChild(area);
      if (!inst.resolved) {
        const note = document.createElement("span");
        note.className = "hvx-diagnostic";
        note.textContent = `unresolved definition '${inst.name}'`;
        box.appendChild(note);
      }
    } else {
      const mountPoint = document.createElement("div");
      mountPoint.className = "hvx-widget";
      mountPoint.appendChild(mountTree(render.tree, this.host()));
      box.appendChild(mountPoint);
    }
    this.container.appendChild(box);
  }
}

function contains(outer: Span, inner: Span): boolean {
  return outer[0] <= inner[0] && inner[1] <= outer[1] && (outer[0] !== inner[0] || outer[1] !== inner[1]);
}
