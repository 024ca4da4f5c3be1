import { ChildProcessWithoutNullStreams, spawn } from "node:child_process";
import * as path from "node:path";
import * as readline from "node:readline";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { LexicalOverlapModel, MODEL_ID } from "../src/model";
import { handleLine, parseConfig } from "../src/main";

const DIST_MAIN = path.resolve(__dirname, "..", "dist", "main.js");

function makeRequest(id: string, context: string, question = "which ?"): string {
  const offsets: Array<[number, number]> = [];
  let cursor = 0;
  for (const word of context.split(" ")) {
    offsets.push([cursor, cursor + word.length]);
    cursor += word.length + 1;
  }
  return JSON.stringify({
    id,
    question,
    context,
    n_tokens: offsets.length,
    token_offsets: offsets,
  });
}

function model(maxSeqLen = 512): LexicalOverlapModel {
  return LexicalOverlapModel.load(MODEL_ID, maxSeqLen, "cpu");
}

describe("handleLine", () => {
  it("echoes the handshake", () => {
    const reply = JSON.parse(handleLine(JSON.stringify({ cmd: "hello", protocol: 1 }), model()));
    expect(reply).toEqual({ cmd: "hello", protocol: 1 });
  });

  it("declines training", () => {
    const reply = JSON.parse(handleLine(JSON.stringify({ cmd: "train", samples: [] }), model()));
    expect(reply).toEqual({ cmd: "unsupported" });
  });

  it("answers a malformed line with an error object and a null id", () => {
    const reply = JSON.parse(handleLine("this is not json {", model()));
    expect(reply.id).toBeNull();
    expect(typeof reply.error).toBe("string");
  });

  it("flags bad requests under their own id", () => {
    const reply = JSON.parse(
      handleLine(JSON.stringify({ id: "r1", question: "?", context: "abc", n_tokens: 2, token_offsets: [[0, 3]] }), model()),
    );
    expect(reply.id).toBe("r1");
    expect(reply.error).toMatch(/token_offsets/);
  });

  it("rejects unknown commands without dying", () => {
    const reply = JSON.parse(handleLine(JSON.stringify({ cmd: "shutdown" }), model()));
    expect(typeof reply.error).toBe("string");
  });

  it("echoes ids and emits n_tokens-length unit-mass vectors", () => {
    const line = makeRequest("q-7", "The silver key opened the cellar door .");
    const reply = JSON.parse(handleLine(line, model()));
    expect(reply.id).toBe("q-7");
    for (const key of ["start_probs", "end_probs"] as const) {
      expect(reply[key]).toHaveLength(8);
      const total = (reply[key] as number[]).reduce((a, b) => a + b, 0);
      expect(Math.abs(total - 1)).toBeLessThan(1e-9);
    }
  });

  it("projects a one-token context to exactly [1.0]", () => {
    const reply = JSON.parse(handleLine(makeRequest("solo", "word"), model()));
    expect(reply.start_probs).toEqual([1]);
    expect(reply.end_probs).toEqual([1]);
  });

  it("keeps responses valid when the sequence cap truncates pieces", () => {
    const reply = JSON.parse(
      handleLine(makeRequest("cap", "alpha beta gamma delta"), model(2)),
    );
    expect(reply.start_probs).toHaveLength(4);
    const total = (reply.start_probs as number[]).reduce((a, b) => a + b, 0);
    expect(Math.abs(total - 1)).toBeLessThan(1e-9);
    expect(reply.start_probs[3]).toBe(0);
  });
});

describe("parseConfig", () => {
  it("applies defaults", () => {
    expect(parseConfig([])).toEqual({ model: MODEL_ID, maxSeqLen: 512, device: "cpu" });
  });

  it("honors explicit flags", () => {
    expect(parseConfig(["--model", MODEL_ID, "--max-seq-len", "64", "--device", "gpu0"]))
      .toEqual({ model: MODEL_ID, maxSeqLen: 64, device: "gpu0" });
  });

  it("rejects a malformed sequence cap", () => {
    expect(() => parseConfig(["--max-seq-len", "zero"])).toThrow(/positive integer/);
  });
});

describe("dist/main.js end to end", () => {
  let child: ChildProcessWithoutNullStreams;
  let replies: AsyncIterableIterator<string>;

  async function nextReply(): Promise<Record<string, unknown>> {
    const result = await Promise.race([
      replies.next(),
      new Promise<never>((_, reject) => setTimeout(() => reject(new Error("timed out waiting for a reply")), 5000)),
    ]);
    if (result.done) {
      throw new Error("backend closed its output stream");
    }
    return JSON.parse(result.value);
  }

  beforeAll(() => {
    child = spawn(process.execPath, [DIST_MAIN], { stdio: ["pipe", "pipe", "pipe"] });
    const lines = readline.createInterface({ input: child.stdout, terminal: false });
    replies = lines[Symbol.asyncIterator]();
  });

  afterAll(() => {
    child.kill();
  });

  it("serves a whole session: handshake, scores, recovery, train decline", async () => {
    child.stdin.write(JSON.stringify({ cmd: "hello", protocol: 1 }) + "\n");
    expect(await nextReply()).toEqual({ cmd: "hello", protocol: 1 });

    child.stdin.write(makeRequest("e2e-1", "Rain fell on the tin roof all night .") + "\n");
    const scored = await nextReply();
    expect(scored.id).toBe("e2e-1");
    expect(scored.start_probs).toHaveLength(9);

    child.stdin.write("not json at all\n");
    const error = await nextReply();
    expect(error.id).toBeNull();
    expect(typeof error.error).toBe("string");

    child.stdin.write(makeRequest("e2e-2", "word") + "\n");
    const solo = await nextReply();
    expect(solo.id).toBe("e2e-2");
    expect(solo.start_probs).toEqual([1]);

    child.stdin.write(JSON.stringify({ cmd: "train", samples: [] }) + "\n");
    expect(await nextReply()).toEqual({ cmd: "unsupported" });
  });

  it("exits cleanly at end of input", async () => {
    const exited = new Promise<number | null>((resolve) => child.once("exit", resolve));
    child.stdin.end();
    expect(await exited).toBe(0);
  });
});

describe("dist/main.js startup validation", () => {
  it("refuses to start with an unknown model id", async () => {
    const bad = spawn(process.execPath, [DIST_MAIN, "--model", "some-finetuned-model"], {
      stdio: ["pipe", "pipe", "pipe"],
    });
    let stderr = "";
    bad.stderr.on("data", (chunk: Buffer) => {
      stderr += chunk.toString();
    });
    const code = await new Promise<number | null>((resolve) => bad.once("exit", resolve));
    expect(code).toBe(2);
    expect(stderr).toMatch(/unknown model/);
  });
});
