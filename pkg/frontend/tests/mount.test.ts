import { describe, expect, it, vi } from "vitest";

import { mountTree, type MountHost } from "../src/mount.js";
import type { WireUiNode } from "../src/protocol.js";

function host(): MountHost & { events: [string, unknown][]; edits: [number[], string][] } {
  const events: [string, unknown][] = [];
  const edits: [number[], string][] = [];
  return {
    events,
    edits,
    sendEvent: (id, payload) => events.push([id, payload]),
    editCodeField: (span, text) => edits.push([span as unknown as number[], text]),
  };
}

const counterTree: WireUiNode = {
  tag: ":button",
  attrs: { ":on-click": "h:1" },
  children: ["42"],
};

describe("mountTree", () => {
  it("mounts a counter button whose click round-trips to the kernel", () => {
    const h = host();
    const el = mountTree(counterTree, h) as HTMLButtonElement;
    expect(el.tagName).toBe("BUTTON");
    expect(el.textContent).toBe("42");
    el.click();
    expect(h.events).toEqual([["h:1", undefined]]);
  });

  it("text inputs send their new value on change", () => {
    const h = host();
    const el = mountTree(
      { tag: ":text-input", attrs: { ":value": "0.5", ":on-change": "h:7" }, children: [] },
      h,
    ) as HTMLInputElement;
    expect(el.tagName).toBe("INPUT");
    expect(el.value).toBe("0.5");
    el.value = "0.8";
    el.dispatchEvent(new Event("change"));
    expect(h.events).toEqual([["h:7", "0.8"]]);
  });

  it("maps svg tags into a proper namespace", () => {
    const tree: WireUiNode = {
      tag: ":svg-group",
      attrs: {},
      children: [
        { tag: ":circle", attrs: { ":label": "A" }, children: [] },
        { tag: ":line", attrs: { ":from": "A", ":to": "E" }, children: [] },
      ],
    };
    const el = mountTree(tree, host());
    expect(el.tagName.toLowerCase()).toBe("svg");
    const g = el.firstElementChild!;
    expect(g.namespaceURI).toContain("svg");
    expect(g.children[0].getAttribute("data-label")).toBe("A");
  });

  it("unknown tags degrade to a styled placeholder, never a crash", () => {
    const el = mountTree({ tag: ":holo-knob", attrs: {}, children: [] }, host());
    expect(el.className).toBe("hvx-unknown-tag");
    expect(el.textContent).toContain("holo-knob");
  });

  it("code editors bind the state path and emit field edits", () => {
    const h = host();
    const tree: WireUiNode = {
      tag: ":code-editor",
      attrs: { ":state-path": [":alpha-code"], ":field-span": [100, 140] },
      children: ["(* base-alpha 2)"],
    };
    const el = mountTree(tree, h) as HTMLTextAreaElement;
    expect(el.tagName).toBe("TEXTAREA");
    expect(el.getAttribute("data-state-path")).toContain("alpha-code");
    el.value = "(* base-alpha 3)";
    el.dispatchEvent(new Event("change"));
    expect(h.edits).toEqual([[[100, 140], "(* base-alpha 3)"]]);
  });

  it("a code editor without a resolvable span is read-only", () => {
    const el = mountTree(
      { tag: ":code-editor", attrs: { ":state-path": [":code"] }, children: ["x"] },
      host(),
    ) as HTMLTextAreaElement;
    expect(el.readOnly).toBe(true);
  });

  it("nested trees mount recursively", () => {
    const tree: WireUiNode = {
      tag: ":div",
      attrs: {},
      children: [
        { tag: ":span", attrs: {}, children: ["a"] },
        counterTree,
      ],
    };
    const el = mountTree(tree, host());
    expect(el.querySelector("button")?.textContent).toBe("42");
  });
});
