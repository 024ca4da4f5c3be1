/**
 * Entry point: a single-threaded stdin/stdout serving loop.
 *
 * Flags:
 *   --model <id>          model identifier (default lexical-overlap-v1)
 *   --max-seq-len <n>     cap on scored pieces per request (default 512)
 *   --device <hint>       placement hint, accepted and recorded (default cpu)
 *
 * The model is loaded before the first line is answered, so a successful
 * handshake implies a usable model. Every input line gets exactly one
 * output line; lines that cannot be served become error objects and the
 * loop keeps going. End of input ends the process.
 */

import * as readline from "node:readline";
import { parseArgs } from "node:util";

import { LexicalOverlapModel, MODEL_ID } from "./model";
import {
  classifyLine,
  errorReply,
  helloReply,
  scoreReply,
  trainDecline,
} from "./protocol";
import { projectToWords, renormalize, subwordPieces } from "./projection";

/** Serve one input line; always returns exactly one reply line. */
export function handleLine(line: string, model: LexicalOverlapModel): string {
  const classified = classifyLine(line);
  switch (classified.kind) {
    case "hello":
      return helloReply();
    case "train":
      return trainDecline();
    case "bad":
      return errorReply(classified.id, classified.message);
    case "request": {
      const request = classified.request;
      try {
        const pieces = subwordPieces(request.tokenOffsets);
        const { scored, probs } = model.scorePieces(request.question, request.context, pieces);
        const start = renormalize(projectToWords(probs.start, scored, request.nTokens));
        const end = renormalize(projectToWords(probs.end, scored, request.nTokens));
        return scoreReply(request.id, start, end);
      } catch (err) {
        return errorReply(request.id, err instanceof Error ? err.message : String(err));
      }
    }
  }
}

interface Config {
  model: string;
  maxSeqLen: number;
  device: string;
}

export function parseConfig(argv: string[]): Config {
  const { values } = parseArgs({
    args: argv,
    options: {
      model: { type: "string", default: MODEL_ID },
      "max-seq-len": { type: "string", default: "512" },
      device: { type: "string", default: "cpu" },
    },
  });
  const maxSeqLen = Number(values["max-seq-len"]);
  if (!Number.isInteger(maxSeqLen) || maxSeqLen < 1) {
    throw new Error(`--max-seq-len must be a positive integer, got ${values["max-seq-len"]}`);
  }
  return { model: values.model as string, maxSeqLen, device: values.device as string };
}

async function main(): Promise<number> {
  let model: LexicalOverlapModel;
  try {
    const config = parseConfig(process.argv.slice(2));
    model = LexicalOverlapModel.load(config.model, config.maxSeqLen, config.device);
    process.stderr.write(`serving ${model.modelId} (max-seq-len ${model.maxSeqLen}, device ${model.device})\n`);
  } catch (err) {
    process.stderr.write(`fatal: ${err instanceof Error ? err.message : String(err)}\n`);
    return 2;
  }

  const lines = readline.createInterface({ input: process.stdin, terminal: false });
  for await (const line of lines) {
    process.stdout.write(handleLine(line, model) + "\n");
  }
  return 0;
}

if (require.main === module) {
  main().then(
    (code) => process.exit(code),
    (err) => {
      process.stderr.write(`fatal: ${err instanceof Error ? err.stack ?? err.message : String(err)}\n`);
      process.exit(1);
    },
  );
}
