// Pure leaderboard logic: sorting and row formatting, kept free of DOM so
// the ordering contract is directly testable.

import type { DimensionScore } from "./api.js";

export type SortKey = "mpwd" | "predictiveness";

/**
 * Rows ordered by the chosen score, best first. Ordering must agree with
 * the precomputed ranks in the scoreboard: rank 1 first, ties already
 * resolved by the backend toward the smaller dimension index.
 */
export function orderRows(
  scoreboard: DimensionScore[],
  key: SortKey
): DimensionScore[] {
  const rank = key === "mpwd" ? (s: DimensionScore) => s.mpwd_rank
                              : (s: DimensionScore) => s.pred_rank;
  return [...scoreboard].sort((a, b) => rank(a) - rank(b));
}

export function formatRow(s: DimensionScore): string[] {
  return [
    `z${s.dim}`,
    s.mpwd.toFixed(4),
    String(s.mpwd_rank),
    s.predictiveness.toFixed(4),
    String(s.pred_rank),
    s.variance.toFixed(4),
    s.above_threshold ? "yes" : "no",
  ];
}
