"""Evidence generation for the human judge: traversals, extremes, KDE, report."""

from __future__ import annotations

import base64
import html
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .analysis import (KdeCurve, LatentTable, bandwidth, kde, load_scoreboard,
                       rank_by_mpwd, rank_by_predictiveness)
from .data import LabeledImageSet
from .errors import ContractError, NotFoundError
from .vae import TrainedVAE, decode


@dataclass
class TraversalSpec:
    dim: int  # 1-based
    steps: int = 8
    mode: str = "set"  # "set": replace coordinate; "offset": add to it
    instance_id: str = ""
    value_range: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if self.steps < 2:
            raise ContractError("traversal needs at least 2 steps")
        if self.mode not in ("set", "offset"):
            raise ContractError(f"unknown traversal mode {self.mode!r}")


def default_traversal_spec(latents: LatentTable, j: int, steps: int = 8,
                           mode: str = "set") -> TraversalSpec:
    """Anchor at the sample whose mu_j is the dataset median for dim j."""
    col = latents.mu[:, j - 1]
    median_idx = int(np.argsort(col, kind="stable")[len(col) // 2])
    return TraversalSpec(
        dim=j, steps=steps, mode=mode,
        instance_id=str(latents.ids[median_idx]),
        value_range=(float(col.min()), float(col.max())),
    )


def sweep_values(spec: TraversalSpec) -> np.ndarray:
    return np.linspace(spec.value_range[0], spec.value_range[1], spec.steps)


def traverse(trained: TrainedVAE, latents: LatentTable,
             spec: TraversalSpec) -> list[np.ndarray]:
    """Decode the anchor instance while sweeping coordinate `dim`."""
    matches = np.flatnonzero(latents.ids == spec.instance_id)
    if len(matches) == 0:
        raise NotFoundError(f"unknown instance id {spec.instance_id!r}")
    base = latents.mu[matches[0]].copy()
    j = spec.dim - 1
    frames = []
    for v in sweep_values(spec):
        z = base.copy()
        if spec.mode == "set":
            z[j] = v
        else:
            z[j] = base[j] + v
        frames.append(decode(trained, z))
    return frames


def extremes(latents: LatentTable, dataset: LabeledImageSet, j: int,
             l: int) -> tuple[np.ndarray, np.ndarray]:
    """Input images with the l smallest and l largest mu_j values."""
    n = len(latents)
    if l > n // 2:
        raise ContractError(f"l={l} exceeds N/2={n // 2}")
    order = np.argsort(latents.mu[:, j - 1], kind="stable")
    return dataset.images[order[:l]], dataset.images[order[-l:]]


def kde_plot_data(latents: LatentTable, j: int, grid_points: int = 256
                  ) -> list[KdeCurve]:
    """One class-conditional KDE curve per class over a shared grid."""
    groups = latents.class_values(j)
    hs = {c: bandwidth(v) for c, v in groups.items()}
    h_max = max(hs.values())
    col = latents.mu[:, j - 1]
    grid = np.linspace(col.min() - 3 * h_max, col.max() + 3 * h_max, grid_points)
    return [kde(groups[c], grid, hs[c], dim=j, cls=c) for c in sorted(groups)]


def save_kde_json(curves: list[KdeCurve], path: str | Path):
    records = [
        {"dim": c.dim, "class": c.cls, "grid": c.grid.tolist(),
         "density": c.density.tolist(), "h": c.bandwidth}
        for c in curves
    ]
    with open(path, "w", encoding="utf-8") as f:
        json.dump(records, f)


def _to_uint8(img: np.ndarray) -> np.ndarray:
    return np.clip(np.asarray(img) * 255.0 + 0.5, 0, 255).astype(np.uint8)


def tile_images(images: list[np.ndarray] | np.ndarray, cols: int,
                gutter: int = 2) -> np.ndarray:
    """Row-major tiling with white gutters; returns a float image in [0,1]."""
    images = [np.asarray(im) for im in images]
    h, w, c = images[0].shape
    rows = (len(images) + cols - 1) // cols
    out = np.ones((rows * h + (rows - 1) * gutter,
                   cols * w + (cols - 1) * gutter, c), dtype=np.float64)
    for i, im in enumerate(images):
        r, col = divmod(i, cols)
        y, x = r * (h + gutter), col * (w + gutter)
        out[y:y + h, x:x + w] = im
    return out


def save_png(img: np.ndarray, path: str | Path):
    Image.fromarray(_to_uint8(img)).save(path, format="PNG")


def save_traversal_strip(frames: list[np.ndarray], path: str | Path):
    save_png(tile_images(frames, cols=len(frames)), path)


def save_extremes_grid(images: np.ndarray, path: str | Path):
    cols = max(1, int(np.ceil(np.sqrt(len(images)))))
    save_png(tile_images(list(images), cols=cols), path)


def candidate_dims(scoreboard, k: int) -> list[int]:
    """Union of top-k MPWD and top-k predictiveness dims, ascending."""
    return sorted(set(rank_by_mpwd(scoreboard, k))
                  | set(rank_by_predictiveness(scoreboard, k)))


def _active_verdicts(run_dir: Path) -> dict[int, dict]:
    """Last verdict per dim wins; earlier records are history."""
    path = run_dir / "verdicts.jsonl"
    active: dict[int, dict] = {}
    if path.exists():
        for line in path.read_text(encoding="utf-8").splitlines():
            if line.strip():
                rec = json.loads(line)
                active[int(rec["dim"])] = rec
    return active


def assemble_report(run_dir: str | Path, k: int = 3) -> tuple[Path, Path]:
    """Write report.html and report.md summarizing candidates and verdicts."""
    run_dir = Path(run_dir)
    manifest = json.loads((run_dir / "manifest.json").read_text(encoding="utf-8"))
    scoreboard = load_scoreboard(run_dir / "scores.json")
    verdicts = _active_verdicts(run_dir)
    dims = candidate_dims(scoreboard, k)

    sections = []
    for j in dims:
        score = next(s for s in scoreboard if s.dim == j)
        paths = {
            "traversal": run_dir / "grids" / f"dim_{j}_traversal.png",
            "extremes_min": run_dir / "extremes" / f"dim_{j}_min.png",
            "extremes_max": run_dir / "extremes" / f"dim_{j}_max.png",
            "kde": run_dir / "kde" / f"dim_{j}.json",
        }
        for name, p in paths.items():
            if not p.exists():
                raise ContractError(f"missing {name} evidence for dim {j}: {p}")
        v = verdicts.get(j)
        sections.append({
            "dim": j,
            "score": score,
            "paths": paths,
            "verdict": v["verdict"] if v else "pending",
            "notes": (v.get("notes") or "") if v else "",
        })

    flagged = [s.dim for s in scoreboard if s.above_threshold]
    md = _report_md(manifest, scoreboard, sections, flagged, k, run_dir)
    html_doc = _report_html(manifest, scoreboard, sections, flagged, k, run_dir)
    md_path = run_dir / "report.md"
    html_path = run_dir / "report.html"
    md_path.write_text(md, encoding="utf-8")
    html_path.write_text(html_doc, encoding="utf-8")
    return html_path, md_path


def _report_md(manifest, scoreboard, sections, flagged, k, run_dir: Path) -> str:
    lines = [
        f"# Shortcut candidate report — run {manifest['run_id']}",
        "",
        f"Candidates: union of top-{k} by MPWD and top-{k} by predictiveness.",
        "",
        "Dimensions above the MPWD threshold (3x median): "
        + (", ".join(str(d) for d in flagged) if flagged else "none"),
        "",
        "| dim | MPWD | rank | predictiveness | rank | variance | verdict |",
        "|---|---|---|---|---|---|---|",
    ]
    for s in scoreboard:
        verdict = next((sec["verdict"] for sec in sections if sec["dim"] == s.dim),
                       "-")
        lines.append(
            f"| {s.dim} | {s.mpwd:.4f} | {s.mpwd_rank} | "
            f"{s.predictiveness:.4f} | {s.pred_rank} | {s.variance:.4f} "
            f"| {verdict} |"
        )
    for sec in sections:
        j = sec["dim"]
        lines += [
            "",
            f"## Dimension {j} — verdict: {sec['verdict']}",
            f"notes: {sec['notes']}" if sec["notes"] else "",
            f"![traversal]({sec['paths']['traversal'].relative_to(run_dir)})",
            f"![extremes min]({sec['paths']['extremes_min'].relative_to(run_dir)})",
            f"![extremes max]({sec['paths']['extremes_max'].relative_to(run_dir)})",
        ]
    lines.append("")
    return "\n".join(lines)


def _img_b64(path: Path) -> str:
    return base64.b64encode(path.read_bytes()).decode()


def _report_html(manifest, scoreboard, sections, flagged, k, run_dir: Path) -> str:
    rows = "".join(
        f"<tr><td>{s.dim}</td><td>{s.mpwd:.4f}</td><td>{s.mpwd_rank}</td>"
        f"<td>{s.predictiveness:.4f}</td><td>{s.pred_rank}</td>"
        f"<td>{s.variance:.4f}</td>"
        f"<td>{'yes' if s.above_threshold else 'no'}</td></tr>"
        for s in scoreboard
    )
    parts = [
        "<!doctype html><html><head><meta charset='utf-8'>",
        f"<title>Shortcut report {html.escape(manifest['run_id'])}</title>",
        "<style>body{font-family:sans-serif;margin:2em}"
        "img{max-width:100%}td,th{padding:2px 8px}</style></head><body>",
        f"<h1>Shortcut candidate report — run {html.escape(manifest['run_id'])}</h1>",
        f"<p>Candidates: union of top-{k} by MPWD and top-{k} by predictiveness. "
        "Above-threshold dims (MPWD &gt; 3&times; median): "
        + (", ".join(str(d) for d in flagged) if flagged else "none") + "</p>",
        "<table><tr><th>dim</th><th>MPWD</th><th>rank</th>"
        "<th>predictiveness</th><th>rank</th><th>variance</th>"
        "<th>above threshold</th></tr>", rows, "</table>",
    ]
    for sec in sections:
        j = sec["dim"]
        parts += [
            f"<h2>Dimension {j} — verdict: {html.escape(sec['verdict'])}</h2>",
            f"<p>{html.escape(sec['notes'])}</p>" if sec["notes"] else "",
            "<h3>Traversal</h3>",
            f"<img src='data:image/png;base64,{_img_b64(sec['paths']['traversal'])}'>",
            "<h3>Extremes (min side / max side)</h3>",
            f"<img src='data:image/png;base64,"
            f"{_img_b64(sec['paths']['extremes_min'])}'>",
            f"<img src='data:image/png;base64,"
            f"{_img_b64(sec['paths']['extremes_max'])}'>",
        ]
    parts.append("</body></html>")
    return "".join(parts)
