/**
 * Wire schema shared with the kernel.
 *
 * Spans are [start, end) byte offsets into the UTF-8 document. Keywords
 * cross the wire as strings with a leading colon (":div", ":on-click"),
 * handler ids as "h:<n>" strings, and state paths as arrays.
 */

export type Span = [number, number];

export type WireAttr = string | number | boolean | null | WireAttr[];

export interface WireUiNode {
  tag: string;
  attrs: Record<string, WireAttr>;
  children: (WireUiNode | string)[];
}

export interface InstanceInfo {
  key: string;
  name: string;
  qualified: string | null;
  resolved: boolean;
  span: Span;
  stateText: string;
}

export interface RenderEntry {
  span: Span;
  key: string;
  tree: WireUiNode;
}

export interface Diagnostic {
  span: Span | null;
  phase: string;
  message: string;
}

export interface Notification {
  method: string;
  params: Record<string, unknown> & { sessionId?: string };
}

export interface OpenResult {
  sessionId: string;
  instances: InstanceInfo[];
  diagnostics: Diagnostic[];
}

export interface RenderResult {
  renders: RenderEntry[];
  diagnostics: Diagnostic[];
}

export interface DeltaInfo {
  span: Span;
  replacement: string;
}

export interface EventResult {
  deltas: DeltaInfo[];
  diagnostics: Diagnostic[];
}

export interface EditResult {
  kept: string[];
  added: string[];
  removed: string[];
  diagnostics: Diagnostic[];
}

export interface DefInfo {
  name: string;
  instanceText: string;
}

export interface StatusResult {
  status: string;
  instances: InstanceInfo[];
  diagnostics: Diagnostic[];
}

/** Quote arbitrary text as a source string literal. */
export function quoteString(text: string): string {
  let out = '"';
  for (const ch of text) {
    if (ch === '"') out += '\\"';
    else if (ch === "\\") out += "\\\\";
    else if (ch === "\n") out += "\\n";
    else if (ch === "\t") out += "\\t";
    else if (ch === "\r") out += "\\r";
    else out += ch;
  }
  return out + '"';
}

/** Byte-offset view of a document: spans index UTF-8 bytes, not UTF-16. */
export class ByteDoc {
  readonly text: string;
  private readonly bytes: Uint8Array;

  constructor(text: string) {
    this.text = text;
    this.bytes = new TextEncoder().encode(text);
  }

  get byteLength(): number {
    return this.bytes.length;
  }

  slice(start: number, end: number): string {
    return new TextDecoder().decode(this.bytes.subarray(start, end));
  }

  splice(span: Span, replacement: string): string {
    const head = this.bytes.subarray(0, span[0]);
    const tail = this.bytes.subarray(span[1]);
    const mid = new TextEncoder().encode(replacement);
    const out = new Uint8Array(head.length + mid.length + tail.length);
    out.set(head, 0);
    out.set(mid, head.length);
    out.set(tail, head.length + mid.length);
    return new TextDecoder().decode(out);
  }
}
