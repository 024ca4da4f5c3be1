/**
 * The scoring model behind the adapter.
 *
 * "lexical-overlap-v1" is a deterministic frozen model: each piece gets a
 * logit from (a) whether its lowercased text appears in the question,
 * weighted by piece length, and (b) a weak positional prior — early pieces
 * for the start head, late pieces for the end head. A softmax per head
 * turns the logits into strictly positive piece probabilities. It stands in
 * for a pretrained span model: heavier backends swap in here without
 * touching the protocol plumbing.
 */

import { Piece } from "./projection";

export const MODEL_ID = "lexical-overlap-v1";

const MATCH_WEIGHT = 1.5;
const PRIOR_WEIGHT = 0.25;

export interface PieceScores {
  /** Probability vectors over pieces; each sums to 1. */
  start: number[];
  end: number[];
}

function softmax(logits: readonly number[]): number[] {
  let max = -Infinity;
  for (const v of logits) {
    if (v > max) {
      max = v;
    }
  }
  const exps = logits.map((v) => Math.exp(v - max));
  let total = 0;
  for (const v of exps) {
    total += v;
  }
  return exps.map((v) => v / total);
}

export class LexicalOverlapModel {
  readonly modelId = MODEL_ID;

  constructor(readonly maxSeqLen: number, readonly device: string) {
    if (!Number.isInteger(maxSeqLen) || maxSeqLen < 1) {
      throw new Error(`max sequence length must be a positive integer, got ${maxSeqLen}`);
    }
  }

  /** Instantiate the named model; unknown identifiers are not loadable. */
  static load(modelId: string, maxSeqLen: number, device: string): LexicalOverlapModel {
    if (modelId !== MODEL_ID) {
      throw new Error(`unknown model ${JSON.stringify(modelId)}; available: ${MODEL_ID}`);
    }
    return new LexicalOverlapModel(maxSeqLen, device);
  }

  /**
   * Score the first maxSeqLen pieces of a context against the question.
   * Returned vectors align with the (possibly shortened) piece list handed
   * back as `scored`.
   */
  scorePieces(question: string, context: string, pieces: readonly Piece[]): { scored: Piece[]; probs: PieceScores } {
    const scored = pieces.slice(0, this.maxSeqLen);
    const questionLower = question.toLowerCase();
    const n = scored.length;
    const startLogits = new Array<number>(n);
    const endLogits = new Array<number>(n);
    for (let i = 0; i < n; i += 1) {
      const piece = scored[i]!;
      const text = context.slice(piece.start, piece.end).toLowerCase();
      const matched = text.trim().length > 0 && questionLower.includes(text);
      const match = matched ? (MATCH_WEIGHT * (piece.end - piece.start)) / 4 : 0;
      startLogits[i] = match + (PRIOR_WEIGHT * (n - i)) / Math.max(n, 1);
      endLogits[i] = match + (PRIOR_WEIGHT * (i + 1)) / Math.max(n, 1);
    }
    return { scored, probs: { start: softmax(startLogits), end: softmax(endLogits) } };
  }
}
