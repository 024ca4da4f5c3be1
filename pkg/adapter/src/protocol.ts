/**
 * Wire protocol types and request-line classification.
 *
 * The adapter speaks line-delimited JSON on stdin/stdout. A session opens
 * with a handshake:
 *
 *     -> {"cmd": "hello", "protocol": 1}
 *     <- {"cmd": "hello", "protocol": 1}
 *
 * Scoring requests and their responses (one JSON object per line):
 *
 *     -> {"id": "q1", "question": "...", "context": "...",
 *         "n_tokens": 7, "token_offsets": [[0, 5], ...]}
 *     <- {"id": "q1", "start_probs": [...], "end_probs": [...]}
 *
 * Both probability vectors carry exactly n_tokens entries and each sums
 * to 1. A line the adapter cannot parse or validate is answered with
 * {"id": <id or null>, "error": "..."} and serving continues. The optional
 * train command is declined with {"cmd": "unsupported"}.
 */

export const PROTOCOL_VERSION = 1;

export interface ScoreRequest {
  id: string;
  question: string;
  context: string;
  nTokens: number;
  /** [charStart, charEnd) per word token, within the context string. */
  tokenOffsets: Array<[number, number]>;
}

export type Classified =
  | { kind: "hello"; protocol: number }
  | { kind: "train" }
  | { kind: "request"; request: ScoreRequest }
  | { kind: "bad"; id: string | null; message: string };

function asRequestId(value: unknown): string | null {
  if (typeof value === "string") {
    return value;
  }
  if (typeof value === "number" && Number.isFinite(value)) {
    return String(value);
  }
  return null;
}

function validOffsets(value: unknown, contextLength: number): Array<[number, number]> | null {
  if (!Array.isArray(value)) {
    return null;
  }
  const offsets: Array<[number, number]> = [];
  for (const entry of value) {
    if (!Array.isArray(entry) || entry.length !== 2) {
      return null;
    }
    const [start, end] = entry as [unknown, unknown];
    if (!Number.isInteger(start) || !Number.isInteger(end)) {
      return null;
    }
    const s = start as number;
    const e = end as number;
    if (s < 0 || e <= s || e > contextLength) {
      return null;
    }
    offsets.push([s, e]);
  }
  return offsets;
}

/** Decide what a single input line is asking for. Never throws. */
export function classifyLine(line: string): Classified {
  let parsed: unknown;
  try {
    parsed = JSON.parse(line);
  } catch {
    return { kind: "bad", id: null, message: "line is not valid JSON" };
  }
  if (typeof parsed !== "object" || parsed === null || Array.isArray(parsed)) {
    return { kind: "bad", id: null, message: "line is not a JSON object" };
  }
  const obj = parsed as Record<string, unknown>;

  if (typeof obj.cmd === "string") {
    if (obj.cmd === "hello") {
      const protocol = typeof obj.protocol === "number" ? obj.protocol : -1;
      return { kind: "hello", protocol };
    }
    if (obj.cmd === "train") {
      return { kind: "train" };
    }
    return { kind: "bad", id: null, message: `unknown command ${JSON.stringify(obj.cmd)}` };
  }

  const id = asRequestId(obj.id);
  if (id === null) {
    return { kind: "bad", id: null, message: "request is missing a usable 'id'" };
  }
  if (typeof obj.question !== "string") {
    return { kind: "bad", id, message: "'question' must be a string" };
  }
  if (typeof obj.context !== "string") {
    return { kind: "bad", id, message: "'context' must be a string" };
  }
  if (!Number.isInteger(obj.n_tokens) || (obj.n_tokens as number) < 1) {
    return { kind: "bad", id, message: "'n_tokens' must be a positive integer" };
  }
  const nTokens = obj.n_tokens as number;
  const offsets = validOffsets(obj.token_offsets, obj.context.length);
  if (offsets === null) {
    return { kind: "bad", id, message: "'token_offsets' must be in-bounds [start, end) pairs" };
  }
  if (offsets.length !== nTokens) {
    return { kind: "bad", id, message: `'token_offsets' has ${offsets.length} entries but n_tokens=${nTokens}` };
  }
  return {
    kind: "request",
    request: { id, question: obj.question, context: obj.context, nTokens, tokenOffsets: offsets },
  };
}

export function helloReply(): string {
  return JSON.stringify({ cmd: "hello", protocol: PROTOCOL_VERSION });
}

export function trainDecline(): string {
  return JSON.stringify({ cmd: "unsupported" });
}

export function errorReply(id: string | null, message: string): string {
  return JSON.stringify({ id, error: message });
}

export function scoreReply(id: string, startProbs: number[], endProbs: number[]): string {
  return JSON.stringify({ id, start_probs: startProbs, end_probs: endProbs });
}
