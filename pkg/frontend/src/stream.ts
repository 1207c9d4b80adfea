/**
 * Client for the kit service: catalog, workdir summary, recipe invocation,
 * input routing, and the server-sent event stream with gap-free resume.
 */

import type { RecipeInfo, SessionEvent, WorkdirSummary } from "./model.js";

export interface InvokeResult {
  recipe: string;
  success: boolean;
  steps_run: string[];
  artifacts: string[];
  error: string | null;
}

export class ServiceClient {
  constructor(readonly baseUrl: string) {}

  private async json<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await fetch(this.baseUrl + path, init);
    const body = (await response.json()) as T & { error?: string };
    if (!response.ok) {
      throw new Error(body.error ?? `HTTP ${response.status}`);
    }
    return body;
  }

  async catalog(): Promise<RecipeInfo[]> {
    const body = await this.json<{ recipes: RecipeInfo[] }>("/catalog");
    return body.recipes;
  }

  async workdir(dir?: string): Promise<WorkdirSummary> {
    const query = dir === undefined ? "" : `?dir=${encodeURIComponent(dir)}`;
    return this.json<WorkdirSummary>(`/workdir${query}`);
  }

  async invoke(
    recipe: string,
    inputs: Record<string, string> = {},
  ): Promise<InvokeResult> {
    return this.json<InvokeResult>("/invoke", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ recipe, inputs }),
    });
  }

  async submitInput(text: string): Promise<{ accepted: boolean }> {
    return this.json<{ accepted: boolean }>("/input", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ text }),
    });
  }

  /**
   * Read up to `limit` events with seq > since from the SSE stream.
   * One bounded pull: returns early once the stream has been idle for
   * `idleMs`, so callers can drain "everything so far" and loop (passing
   * the last seen seq back in) to follow a live session.  Reconnection
   * after a dropped stream is the same code path as normal reading.
   */
  async pullEvents(
    since: number,
    limit: number,
    idleMs = 1500,
  ): Promise<SessionEvent[]> {
    const response = await fetch(
      `${this.baseUrl}/events?since=${since}&limit=${limit}`,
    );
    if (!response.ok || response.body === null) {
      throw new Error(`event stream failed: HTTP ${response.status}`);
    }
    const events: SessionEvent[] = [];
    const reader = response.body.getReader();
    const decoder = new TextDecoder();
    let buffer = "";
    const idle = Symbol("idle");
    try {
      for (;;) {
        let timer: ReturnType<typeof setTimeout> | undefined;
        const result = await Promise.race([
          reader.read(),
          new Promise<typeof idle>((resolveIdle) => {
            timer = setTimeout(() => resolveIdle(idle), idleMs);
          }),
        ]);
        clearTimeout(timer);
        if (result === idle) {
          break;
        }
        const { done, value } = result;
        if (done) {
          break;
        }
        buffer += decoder.decode(value, { stream: true });
        let end;
        while ((end = buffer.indexOf("\n\n")) >= 0) {
          const frame = buffer.slice(0, end);
          buffer = buffer.slice(end + 2);
          const event = parseFrame(frame);
          if (event !== null) {
            events.push(event);
          }
          if (events.length >= limit) {
            return events;
          }
        }
      }
    } finally {
      await reader.cancel().catch(() => undefined);
    }
    return events;
  }
}

function parseFrame(frame: string): SessionEvent | null {
  let data: string | null = null;
  for (const line of frame.split("\n")) {
    if (line.startsWith("data: ")) {
      data = line.slice("data: ".length);
    }
  }
  if (data === null) {
    return null;
  }
  const parsed = JSON.parse(data) as SessionEvent;
  return {
    seq: parsed.seq,
    kind: parsed.kind,
    payload: parsed.payload,
    origin: parsed.origin,
  };
}
