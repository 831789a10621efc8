// Console state serialized into the URL hash so any view is recoverable
// from a shared link: #run=<id>&dim=<j>&sort=<key>

import type { SortKey } from "./scoreboard.js";

export interface ConsoleState {
  run: string | null;
  dim: number | null;
  sort: SortKey;
}

export function parseState(hash: string): ConsoleState {
  const params = new URLSearchParams(hash.replace(/^#/, ""));
  const dim = params.get("dim");
  const sort = params.get("sort");
  return {
    run: params.get("run"),
    dim: dim !== null && /^\d+$/.test(dim) ? parseInt(dim, 10) : null,
    sort: sort === "predictiveness" ? "predictiveness" : "mpwd",
  };
}

export function serializeState(state: ConsoleState): string {
  const params = new URLSearchParams();
  if (state.run) params.set("run", state.run);
  if (state.dim !== null) params.set("dim", String(state.dim));
  if (state.sort !== "mpwd") params.set("sort", state.sort);
  return "#" + params.toString();
}
