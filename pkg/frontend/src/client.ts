/**
 * Kernel client over the HTTP facade.
 *
 * The IDE never holds authoritative state: every mutation goes to the
 * kernel and every view refresh reads back from it.
 */

import type {
  DefInfo,
  DeltaInfo,
  Diagnostic,
  EditResult,
  EventResult,
  Notification,
  OpenResult,
  RenderResult,
  Span,
  StatusResult,
} from "./protocol.js";

export interface KernelClient {
  open(text: string): Promise<OpenResult>;
  status(): Promise<StatusResult>;
  render(): Promise<RenderResult>;
  sendEvent(handlerId: string, payload?: unknown): Promise<EventResult>;
  applyTextEdit(span: Span, replacement: string): Promise<EditResult>;
  insertVisx(name: string, offset: number): Promise<{ delta: DeltaInfo; diagnostics: Diagnostic[] }>;
  run(): Promise<{ status: string }>;
  stop(): Promise<{ status: string }>;
  save(): Promise<{ text: string }>;
  defs(): Promise<{ defs: DefInfo[] }>;
  notifications(): Promise<{ notifications: Notification[] }>;
}

export class KernelError extends Error {
  constructor(message: string, readonly span: Span | null = null, readonly status = 0) {
    super(message);
  }
}

export class HttpKernelClient implements KernelClient {
  private sessionId: string | null = null;

  constructor(private readonly baseUrl: string) {}

  private async request<T>(method: "GET" | "POST", path: string, body?: unknown): Promise<T> {
    const response = await fetch(this.baseUrl + path, {
      method,
      headers: body === undefined ? undefined : { "Content-Type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    const data = await response.json();
    if (!response.ok) {
      const detail = (data as { detail?: { message?: string; span?: Span | null } }).detail;
      throw new KernelError(detail?.message ?? response.statusText, detail?.span ?? null, response.status);
    }
    return data as T;
  }

  private get sid(): string {
    if (this.sessionId === null) throw new KernelError("no session open");
    return this.sessionId;
  }

  async open(text: string): Promise<OpenResult> {
    const out = await this.request<OpenResult>("POST", "/sessions", { text });
    this.sessionId = out.sessionId;
    return out;
  }

  /** Reattach to a session that is already open in the kernel. */
  attach(sessionId: string): void {
    this.sessionId = sessionId;
  }

  get session(): string | null {
    return this.sessionId;
  }

  status(): Promise<StatusResult> {
    return this.request("GET", `/sessions/${this.sid}`);
  }

  render(): Promise<RenderResult> {
    return this.request("POST", `/sessions/${this.sid}/render`);
  }

  sendEvent(handlerId: string, payload?: unknown): Promise<EventResult> {
    return this.request("POST", `/sessions/${this.sid}/event`, {
      handlerId,
      payload: payload ?? null,
    });
  }

  applyTextEdit(span: Span, replacement: string): Promise<EditResult> {
    return this.request("POST", `/sessions/${this.sid}/text-edit`, { span, replacement });
  }

  insertVisx(name: string, offset: number): Promise<{ delta: DeltaInfo; diagnostics: Diagnostic[] }> {
    return this.request("POST", `/sessions/${this.sid}/insert`, { name, offset });
  }

  run(): Promise<{ status: string }> {
    return this.request("POST", `/sessions/${this.sid}/run`);
  }

  stop(): Promise<{ status: string }> {
    return this.request("POST", `/sessions/${this.sid}/stop`);
  }

  save(): Promise<{ text: string }> {
    return this.request("POST", `/sessions/${this.sid}/save`, {});
  }

  defs(): Promise<{ defs: DefInfo[] }> {
    return this.request("GET", `/sessions/${this.sid}/defs`);
  }

  notifications(): Promise<{ notifications: Notification[] }> {
    return this.request("GET", `/sessions/${this.sid}/notifications`);
  }
}
