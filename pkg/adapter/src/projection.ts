/**
 * Subword pieces and the piece-to-word probability projection.
 *
 * The scoring model works on short character pieces cut from each word
 * token; callers of the wire protocol only see word-level vectors. The
 * projection sums piece probabilities per parent word — summation (rather
 * than max) keeps the result a probability mass, so downstream entropy
 * computations stay meaningful — and a final renormalization absorbs
 * floating-point drift and any mass lost to sequence-length truncation.
 */

export const MAX_PIECE_CHARS = 4;

export interface Piece {
  /** Index of the word token this piece belongs to. */
  word: number;
  /** [charStart, charEnd) within the context string. */
  start: number;
  end: number;
}

/**
 * Cut every word span into consecutive pieces of at most MAX_PIECE_CHARS
 * characters. Pieces cover each span exactly, in order, with no overlap.
 */
export function subwordPieces(tokenOffsets: ReadonlyArray<readonly [number, number]>): Piece[] {
  const pieces: Piece[] = [];
  tokenOffsets.forEach(([start, end], word) => {
    for (let cursor = start; cursor < end; cursor += MAX_PIECE_CHARS) {
      pieces.push({ word, start: cursor, end: Math.min(cursor + MAX_PIECE_CHARS, end) });
    }
  });
  return pieces;
}

/**
 * Sum piece probabilities onto their parent words. The output has nTokens
 * entries and the same total mass as the input (no normalization here).
 */
export function projectToWords(pieceProbs: readonly number[], pieces: readonly Piece[], nTokens: number): number[] {
  if (pieceProbs.length !== pieces.length) {
    throw new Error(`got ${pieceProbs.length} probabilities for ${pieces.length} pieces`);
  }
  const wordProbs = new Array<number>(nTokens).fill(0);
  for (let i = 0; i < pieces.length; i += 1) {
    const piece = pieces[i]!;
    if (piece.word < 0 || piece.word >= nTokens) {
      throw new Error(`piece ${i} points at word ${piece.word}, outside 0..${nTokens - 1}`);
    }
    wordProbs[piece.word]! += pieceProbs[i]!;
  }
  return wordProbs;
}

/** Scale a non-negative vector to sum to 1. Throws when the mass is zero. */
export function renormalize(probs: readonly number[]): number[] {
  let total = 0;
  for (const p of probs) {
    if (!Number.isFinite(p) || p < 0) {
      throw new Error("probabilities must be finite and non-negative");
    }
    total += p;
  }
  if (total <= 0) {
    throw new Error("cannot renormalize a zero-mass vector");
  }
  return probs.map((p) => p / total);
}
