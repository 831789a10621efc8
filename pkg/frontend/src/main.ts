// Judging console: pick a run, inspect the per-dimension leaderboard, open
// a dimension's evidence (traversal, live decode sliders, extremes, KDE),
// and record a verdict. All state worth sharing lives in the URL hash.

import { ApiClient, DimensionScore, RunDetail, KdeCurve } from "./api.js";
import { orderRows, formatRow, SortKey } from "./scoreboard.js";
import { parseState, serializeState, ConsoleState } from "./urlstate.js";
import { debounce } from "./debounce.js";

const DECODE_DEBOUNCE_MS = 100;
const CLASS_COLORS = [
  "#e6194b", "#3cb44b", "#0082c8", "#b8860b", "#911eb4",
  "#46f0f0", "#f032e6", "#808000", "#008080", "#aa6e28",
];

const api = new ApiClient();
let state: ConsoleState = parseState(location.hash);
let detail: RunDetail | null = null;

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: { [k: string]: string } = {},
  text = ""
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [k, v] of Object.entries(attrs)) node.setAttribute(k, v);
  if (text) node.textContent = text;
  return node;
}

function pushState() {
  history.replaceState(null, "", serializeState(state));
}

async function renderRunPicker() {
  const runs = await api.listRuns();
  const picker = document.getElementById("run-picker")!;
  picker.innerHTML = "";
  const select = el("select");
  select.appendChild(el("option", { value: "" }, "select a run…"));
  for (const m of runs) {
    const label = `${m.run_id.slice(0, 8)} — ${m.status} — ${m.created_at}`;
    const opt = el("option", { value: m.run_id }, label);
    if (m.run_id === state.run) opt.selected = true;
    select.appendChild(opt);
  }
  select.addEventListener("change", () => {
    state = { ...state, run: select.value || null, dim: null };
    pushState();
    void renderRun();
  });
  picker.appendChild(select);
  if (state.run === null && runs.length === 1) {
    state = { ...state, run: runs[0].run_id };
    pushState();
    select.value = runs[0].run_id;
  }
}

async function renderRun() {
  const board = document.getElementById("leaderboard")!;
  const detailPane = document.getElementById("dim-detail")!;
  board.innerHTML = "";
  detailPane.innerHTML = "";
  if (!state.run) return;
  detail = await api.getRun(state.run);
  renderLeaderboard();
  if (state.dim !== null) await renderDim(state.dim);
}

function sortHeader(label: string, key: SortKey): HTMLElement {
  const th = el("th", { class: state.sort === key ? "sorted" : "sortable" },
                label + (state.sort === key ? " ▾" : ""));
  th.addEventListener("click", () => {
    state = { ...state, sort: key };
    pushState();
    renderLeaderboard();
  });
  return th;
}

function renderLeaderboard() {
  const board = document.getElementById("leaderboard")!;
  board.innerHTML = "";
  if (!detail || !detail.scoreboard) {
    board.appendChild(el("p", {}, "run has no scoreboard yet"));
    return;
  }
  const table = el("table");
  const head = el("tr");
  head.appendChild(el("th", {}, "dim"));
  head.appendChild(sortHeader("MPWD", "mpwd"));
  head.appendChild(el("th", {}, "rank"));
  head.appendChild(sortHeader("predictiveness", "predictiveness"));
  head.appendChild(el("th", {}, "rank"));
  head.appendChild(el("th", {}, "variance"));
  head.appendChild(el("th", {}, "flagged"));
  head.appendChild(el("th", {}, "verdict"));
  table.appendChild(head);
  for (const s of orderRows(detail.scoreboard, state.sort)) {
    const tr = el("tr", {
      class: s.dim === state.dim ? "selected" : "",
    });
    for (const cell of formatRow(s)) tr.appendChild(el("td", {}, cell));
    const verdict = detail.verdicts[String(s.dim)];
    tr.appendChild(el("td", {}, verdict ? verdict.verdict : "pending"));
    tr.addEventListener("click", () => {
      state = { ...state, dim: s.dim };
      pushState();
      renderLeaderboard();
      void renderDim(s.dim);
    });
    table.appendChild(tr);
  }
  board.appendChild(table);
}

function pngImg(b64: string, cls: string): HTMLImageElement {
  return el("img", { src: `data:image/png;base64,${b64}`, class: cls });
}

function drawKde(canvas: HTMLCanvasElement, curves: KdeCurve[]) {
  const ctx = canvas.getContext("2d")!;
  const { width, height } = canvas;
  ctx.clearRect(0, 0, width, height);
  const xs = curves.flatMap((c) => [c.grid[0], c.grid[c.grid.length - 1]]);
  const xMin = Math.min(...xs);
  const xMax = Math.max(...xs);
  const yMax = Math.max(...curves.flatMap((c) => c.density));
  const px = (x: number) => ((x - xMin) / (xMax - xMin)) * (width - 20) + 10;
  const py = (y: number) => height - 12 - (y / yMax) * (height - 24);
  curves.forEach((c, i) => {
    ctx.strokeStyle = CLASS_COLORS[i % CLASS_COLORS.length];
    ctx.lineWidth = 1.5;
    ctx.beginPath();
    c.grid.forEach((x, k) => {
      if (k === 0) ctx.moveTo(px(x), py(c.density[k]));
      else ctx.lineTo(px(x), py(c.density[k]));
    });
    ctx.stroke();
    ctx.fillStyle = ctx.strokeStyle;
    ctx.fillText(`class ${c.class}`, 12 + i * 64, 12);
  });
}

async function renderDim(dim: number) {
  const pane = document.getElementById("dim-detail")!;
  pane.innerHTML = "";
  if (!state.run || !detail) return;
  pane.appendChild(el("h2", {}, `Dimension z${dim}`));

  // traversal strip
  const traversal = await api.getTraversal(state.run, dim);
  const travSection = el("section");
  travSection.appendChild(el("h3", {}, "Traversal"));
  const strip = el("div", { class: "strip" });
  traversal.frames.forEach((frame, i) => {
    const cell = el("figure");
    cell.appendChild(pngImg(frame, "frame"));
    cell.appendChild(el("figcaption", {}, traversal.values[i].toFixed(2)));
    strip.appendChild(cell);
  });
  travSection.appendChild(strip);
  pane.appendChild(travSection);

  // live decode sliders, one per latent coordinate
  const d = detail.manifest.train_config.latent_dim;
  const scoreboard = detail.scoreboard ?? [];
  const byDim = new Map(scoreboard.map((s) => [s.dim, s]));
  const z: number[] = [];
  for (let j = 1; j <= d; j++) {
    const s = byDim.get(j);
    z.push(s ? (s.z_min + s.z_max) / 2 : 0);
  }
  const liveSection = el("section");
  liveSection.appendChild(el("h3", {}, "Live decode"));
  const preview = el("img", { class: "preview", alt: "decoded latent" });
  const update = debounce(async () => {
    const png = await api.decode(state.run!, [...z]);
    let binary = "";
    png.forEach((b) => (binary += String.fromCharCode(b)));
    preview.src = `data:image/png;base64,${btoa(binary)}`;
  }, DECODE_DEBOUNCE_MS);
  const sliders = el("div", { class: "sliders" });
  for (let j = 1; j <= d; j++) {
    const s = byDim.get(j);
    const lo = s ? s.z_min : -3;
    const hi = s ? s.z_max : 3;
    const row = el("label", {}, `z${j} `);
    const input = el("input", {
      type: "range",
      min: String(lo),
      max: String(hi),
      step: String((hi - lo) / 200 || 0.01),
      value: String(z[j - 1]),
    });
    const readout = el("span", {}, z[j - 1].toFixed(2));
    input.addEventListener("input", () => {
      z[j - 1] = parseFloat(input.value);
      readout.textContent = z[j - 1].toFixed(2);
      update();
    });
    row.appendChild(input);
    row.appendChild(readout);
    if (j === dim) row.classList.add("current-dim");
    sliders.appendChild(row);
  }
  liveSection.appendChild(sliders);
  liveSection.appendChild(preview);
  pane.appendChild(liveSection);
  update();

  // extremes gallery
  const extremes = await api.getExtremes(state.run, dim);
  const extSection = el("section");
  extSection.appendChild(el("h3", {}, "Extreme instances"));
  const gallery = el("div", { class: "extremes" });
  const minFig = el("figure");
  minFig.appendChild(pngImg(extremes.min, "grid"));
  minFig.appendChild(el("figcaption", {}, "lowest values"));
  const maxFig = el("figure");
  maxFig.appendChild(pngImg(extremes.max, "grid"));
  maxFig.appendChild(el("figcaption", {}, "highest values"));
  gallery.appendChild(minFig);
  gallery.appendChild(maxFig);
  extSection.appendChild(gallery);
  pane.appendChild(extSection);

  // class-conditional densities
  const kde = await api.getKde(state.run, dim);
  const kdeSection = el("section");
  kdeSection.appendChild(el("h3", {}, "Class-conditional densities"));
  const canvas = el("canvas", { width: "480", height: "180" });
  drawKde(canvas, kde);
  kdeSection.appendChild(canvas);
  pane.appendChild(kdeSection);

  // verdict form
  const verdictSection = el("section");
  verdictSection.appendChild(el("h3", {}, "Verdict"));
  const form = el("form", { class: "verdict-form" });
  const choice = el("select");
  for (const v of ["shortcut", "valid", "unclear"]) {
    choice.appendChild(el("option", { value: v }, v));
  }
  const notes = el("input", { type: "text", placeholder: "notes" });
  const judge = el("input", { type: "text", placeholder: "judge" });
  const submit = el("button", { type: "submit" }, "record verdict");
  const status = el("span", { class: "verdict-status" });
  form.append(choice, notes, judge, submit, status);
  form.addEventListener("submit", async (ev) => {
    ev.preventDefault();
    try {
      const rec = await api.postVerdict(
        state.run!, dim, choice.value, notes.value, judge.value);
      status.textContent = `recorded ${rec.verdict} at ${rec.timestamp}`;
      detail = await api.getRun(state.run!);
      renderLeaderboard();
    } catch (err) {
      status.textContent = String(err);
    }
  });
  verdictSection.appendChild(form);
  pane.appendChild(verdictSection);
}

window.addEventListener("hashchange", () => {
  state = parseState(location.hash);
  void renderRun();
});

void (async () => {
  await renderRunPicker();
  await renderRun();
})();
