/**
 * Mount a kernel widget tree as live DOM.
 *
 * Tags map to elements from a fixed whitelist; anything else degrades to
 * a placeholder with diagnostic styling rather than failing. Handler ids
 * found under "on-*" attributes are wired to DOM events that call back
 * into the kernel; the tree itself stays dumb.
 */

import type { Span, WireAttr, WireUiNode } from "./protocol.js";

export interface MountHost {
  sendEvent(handlerId: string, payload?: unknown): void;
  /** Replace the contents of a string state field shown in a nested editor. */
  editCodeField(fieldSpan: Span, newText: string): void;
}

const SVG_NS = "http://www.w3.org/2000/svg";
const SVG_TAGS = new Set(["svg", "svg-group", "line", "circle", "text"]);
const HTML_TAGS = new Set(["div", "span", "button", "text-input", "select"]);

function isHandlerId(value: WireAttr): value is string {
  return typeof value === "string" && /^h:\d+$/.test(value);
}

function keywordName(key: string): string {
  return key.startsWith(":") ? key.slice(1) : key;
}

function attrText(value: WireAttr): string {
  if (value === null) return "";
  if (Array.isArray(value)) return JSON.stringify(value);
  return String(value);
}

export function mountTree(node: WireUiNode, host: MountHost): Element {
  const tag = keywordName(node.tag);
  if (SVG_TAGS.has(tag)) return mountSvg(node, tag, host);
  if (tag === "code-editor") return mountCodeEditor(node, host);
  if (!HTML_TAGS.has(tag)) return mountUnknown(node, tag);

  const el = document.createElement(tag === "text-input" ? "input" : tag);
  if (tag === "text-input") (el as HTMLInputElement).type = "text";
  applyAttrs(el, node, host, tag);
  for (const child of node.children) {
    if (typeof child === "string") el.appendChild(document.createTextNode(child));
    else el.appendChild(mountTree(child, host));
  }
  return el;
}

function applyAttrs(el: Element, node: WireUiNode, host: MountHost, tag: string): void {
  for (const [rawName, value] of Object.entries(node.attrs)) {
    const name = keywordName(rawName);
    if (name.startsWith("on-") && isHandlerId(value)) {
      wireHandler(el, name, value, host, tag);
    } else if (name === "value" && tag === "text-input") {
      (el as HTMLInputElement).value = attrText(value);
    } else {
      el.setAttribute(`data-${name}`, attrText(value));
    }
  }
}

function wireHandler(el: Element, name: string, handlerId: string, host: MountHost, tag: string): void {
  el.setAttribute(`data-${name}`, handlerId);
  if (name === "on-click") {
    el.addEventListener("click", () => host.sendEvent(handlerId));
  } else if (name === "on-change" && tag === "text-input") {
    el.addEventListener("change", () =>
      host.sendEvent(handlerId, (el as HTMLInputElement).value),
    );
  } else {
    // generic gesture: any custom event of that name carries its payload
    el.addEventListener(name.slice(3), (event) =>
      host.sendEvent(handlerId, (event as CustomEvent).detail ?? null),
    );
  }
}

function mountSvg(node: WireUiNode, tag: string, host: MountHost): Element {
  const name = tag === "svg-group" ? "g" : tag;
  const wrapper = tag === "svg-group" ? document.createElementNS(SVG_NS, "svg") : null;
  const el = document.createElementNS(SVG_NS, name);
  applyAttrs(el, node, host, tag);
  for (const child of node.children) {
    if (typeof child === "string") el.appendChild(document.createTextNode(child));
    else el.appendChild(mountTree(child, host));
  }
  if (wrapper !== null) {
    wrapper.setAttribute("class", "hvx-svg");
    wrapper.appendChild(el);
    return wrapper;
  }
  return el;
}

function mountCodeEditor(node: WireUiNode, host: MountHost): Element {
  const el = document.createElement("textarea");
  el.className = "hvx-code-editor";
  const path = node.attrs[":state-path"];
  el.setAttribute("data-state-path", attrText(path ?? null));
  el.value = node.children.filter((c): c is string => typeof c === "string").join("");
  const fieldSpan = node.attrs[":field-span"];
  if (Array.isArray(fieldSpan) && fieldSpan.length === 2) {
    const span: Span = [Number(fieldSpan[0]), Number(fieldSpan[1])];
    el.setAttribute("data-field-span", `${span[0]},${span[1]}`);
    el.addEventListener("change", () => host.editCodeField(span, el.value));
  } else {
    el.readOnly = true;
  }
  return el;
}

function mountUnknown(node: WireUiNode, tag: string): Element {
  const el = document.createElement("span");
  el.className = "hvx-unknown-tag";
  el.setAttribute("data-tag", tag);
  el.textContent = `unsupported widget tag :${tag}`;
  return el;
}
