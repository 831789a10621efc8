"""Command-line pipeline: dataset -> train -> analyze -> probe -> evidence
-> report, plus the attack generator and the serving command.

Each stage records a hash of its inputs; re-running a completed stage with
unchanged inputs is a no-op unless --force is given.
"""

from __future__ import annotations

import hashlib
import json
import shutil
import sys
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import asdict
from pathlib import Path

import click
import numpy as np
from filelock import FileLock

from . import advgen, analysis, data, probe, vae, visual
from .errors import ConfigurationError, LatentScoutError, StateError
from .runstore import RunStore
from .runstore.api import serve as serve_api

RUN_ROOT_ENV = "LATENTSCOUT_RUN_ROOT"

_ALLOWED_KEYS = {
    "": {"seed", "dataset", "train", "analysis", "traversal", "attack",
         "split_ratios", "name"},
    "dataset": {"kind", "n_samples", "image_size", "n_classes", "p_corr",
                "palette", "zoom_levels", "path"},
    "train": {"latent_dim", "beta", "max_epochs", "learning_rate",
              "batch_size", "patience", "encoder_kind", "recon_loss",
              "backbone_weights"},
    "analysis": {"k", "threshold_factor"},
    "traversal": {"steps", "mode", "extremes_l"},
    "attack": {"kind", "crop_factor", "pad_pixels", "fill_value",
               "output_size", "max_epochs"},
}


def load_config(path: str | Path) -> dict:
    """Load and validate a TOML or JSON pipeline config."""
    path = Path(path)
    if path.suffix == ".toml":
        cfg = tomllib.loads(path.read_text(encoding="utf-8"))
    elif path.suffix == ".json":
        cfg = json.loads(path.read_text(encoding="utf-8"))
    else:
        raise ConfigurationError(f"config must be .toml or .json: {path}")
    for key, value in cfg.items():
        if key not in _ALLOWED_KEYS[""]:
            raise ConfigurationError(f"unknown config key {key!r}")
        if isinstance(value, dict):
            for sub in value:
                if sub not in _ALLOWED_KEYS.get(key, set()):
                    raise ConfigurationError(f"unknown config key {key}.{sub!r}")
    if "dataset" not in cfg:
        raise ConfigurationError("config requires a [dataset] section")
    return cfg


def _stage_hashes(run_dir: Path) -> dict:
    path = run_dir / "stage_hashes.json"
    return json.loads(path.read_text()) if path.exists() else {}


def _mark_stage(run_dir: Path, stage: str, digest: str):
    hashes = _stage_hashes(run_dir)
    hashes[stage] = digest
    (run_dir / "stage_hashes.json").write_text(json.dumps(hashes, indent=2))


def _stage_done(run_dir: Path, stage: str, digest: str, force: bool) -> bool:
    return not force and _stage_hashes(run_dir).get(stage) == digest


def _hash_bytes(*parts: bytes) -> str:
    h = hashlib.sha256()
    for p in parts:
        h.update(p)
    return h.hexdigest()


def _hash_file(path: Path) -> str:
    return _hash_bytes(path.read_bytes())


def generate_dataset(cfg: dict, seed: int) -> data.LabeledImageSet:
    ds_cfg = cfg["dataset"]
    kind = ds_cfg.get("kind")
    if kind in ("colored", "zoom"):
        n_classes = ds_cfg["n_classes"]
        if "palette" in ds_cfg:
            palette = [tuple(c) for c in ds_cfg["palette"]]
        else:
            palette = data.DEFAULT_PALETTE[:n_classes]
        zoom_levels = ds_cfg.get("zoom_levels")
        if kind == "zoom" and zoom_levels is None:
            zoom_levels = np.linspace(0.85, 0.25, n_classes).tolist()
        synth = data.SyntheticConfig(
            n_samples=ds_cfg["n_samples"],
            image_size=ds_cfg["image_size"],
            n_classes=n_classes,
            p_corr=ds_cfg["p_corr"],
            seed=seed,
            palette=palette,
            zoom_levels=zoom_levels,
        )
        if kind == "colored":
            return data.generate_colored_shortcut(synth)
        return data.generate_zoom_shortcut(synth)
    if kind == "folder":
        return data.load_image_folder(ds_cfg["path"], ds_cfg["image_size"])
    if kind == "archive":
        return data.load_archive(ds_cfg["path"])[0]
    raise ConfigurationError(f"unknown dataset kind {kind!r}")


def _splits(dataset: data.LabeledImageSet, cfg: dict, seed: int):
    ratios = tuple(cfg.get("split_ratios", [0.8, 0.1, 0.1]))
    return data.split(dataset, ratios, seed)


def _require_artifact(run_dir: Path, name: str, stage: str):
    if not (run_dir / name).exists():
        raise StateError(f"missing artifact {name}; run the {stage} stage first")


# --- stage implementations -------------------------------------------------

def stage_dataset(cfg: dict, seed: int, out: Path) -> Path:
    dataset = generate_dataset(cfg, seed)
    out.parent.mkdir(parents=True, exist_ok=True)
    data.save_archive(dataset, out, config=cfg["dataset"], seed=seed)
    return out

def stage_train(store: RunStore, cfg: dict, seed: int,
                dataset_path: Path) -> str:
    train_cfg = vae.TrainConfig(
        image_size=cfg["dataset"]["image_size"], seed=seed,
        **cfg.get("train", {}))
    manifest = store.create_run(
        dataset_ref=str(dataset_path),
        dataset_hash=_hash_file(dataset_path),
        train_config=asdict(train_cfg),
    )
    run_dir = store.run_dir(manifest.run_id)
    shutil.copy(dataset_path, run_dir / "dataset.zip")
    dataset, _ = data.load_archive(dataset_path)
    train_set, val_set, _test = _splits(dataset, cfg, seed)
    trained = vae.train(train_set, val_set, train_cfg,
                        log_path=run_dir / "training_log.jsonl")
    vae.save_checkpoint(trained, run_dir / "checkpoint.bin")
    _mark_stage(run_dir, "train", _hash_file(dataset_path))
    return manifest.run_id


def stage_analyze(store: RunStore, run_id: str, cfg: dict, seed: int,
                  force: bool = False):
    run_dir = store.run_dir(run_id)
    _require_artifact(run_dir, "checkpoint.bin", "train")
    digest = _hash_bytes(_hash_file(run_dir / "checkpoint.bin").encode())
    if _stage_done(run_dir, "analyze", digest, force):
        return
    trained = vae.load_checkpoint(run_dir / "checkpoint.bin")
    dataset, _ = data.load_archive(run_dir / "dataset.zip")
    train_set, _, _ = _splits(dataset, cfg, seed)
    latents = vae.encode_dataset(trained, train_set)
    analysis.save_latent_table(latents, run_dir / "latents.csv")
    factor = cfg.get("analysis", {}).get("threshold_factor", 3.0)
    scoreboard = analysis.build_scoreboard(latents, threshold_factor=factor)
    analysis.save_scoreboard(scoreboard, run_dir / "scores.json")
    store.advance_status(run_id, "analyzed")
    _mark_stage(run_dir, "analyze", digest)


def stage_probe(store: RunStore, run_id: str, cfg: dict, seed: int,
                force: bool = False):
    run_dir = store.run_dir(run_id)
    _require_artifact(run_dir, "latents.csv", "analyze")
    digest = _hash_file(run_dir / "latents.csv")
    if _stage_done(run_dir, "probe", digest, force):
        return
    trained = vae.load_checkpoint(run_dir / "checkpoint.bin")
    dataset, _ = data.load_archive(run_dir / "dataset.zip")
    _, val_set, _ = _splits(dataset, cfg, seed)
    train_latents = analysis.load_latent_table(run_dir / "latents.csv")
    val_latents = vae.encode_dataset(trained, val_set)
    head = probe.train_probe(train_latents, val_latents,
                             probe.ProbeConfig(seed=seed))
    probe.save_head(head, run_dir / "head.json")
    factor = cfg.get("analysis", {}).get("threshold_factor", 3.0)
    scoreboard = analysis.build_scoreboard(
        train_latents, predictiveness=probe.predictiveness_all(head),
        threshold_factor=factor)
    analysis.save_scoreboard(scoreboard, run_dir / "scores.json")
    _mark_stage(run_dir, "probe", digest)


def stage_evidence(store: RunStore, run_id: str, cfg: dict, seed: int,
                   dims: list[int] | None = None, k: int | None = None,
                   force: bool = False):
    run_dir = store.run_dir(run_id)
    _require_artifact(run_dir, "scores.json", "analyze")
    digest = _hash_bytes(_hash_file(run_dir / "scores.json").encode(),
                         json.dumps(dims).encode())
    if _stage_done(run_dir, "evidence", digest, force):
        return
    trained = vae.load_checkpoint(run_dir / "checkpoint.bin")
    dataset, _ = data.load_archive(run_dir / "dataset.zip")
    train_set, _, _ = _splits(dataset, cfg, seed)
    latents = analysis.load_latent_table(run_dir / "latents.csv")
    scoreboard = analysis.load_scoreboard(run_dir / "scores.json")
    if dims is None:
        k = k or cfg.get("analysis", {}).get("k", 3)
        dims = visual.candidate_dims(scoreboard, k)
    trav_cfg = cfg.get("traversal", {})
    steps = trav_cfg.get("steps", 8)
    mode = trav_cfg.get("mode", "set")
    l = min(trav_cfg.get("extremes_l", 16), len(latents) // 2)
    for j in dims:
        spec = visual.default_traversal_spec(latents, j, steps=steps, mode=mode)
        frames = visual.traverse(trained, latents, spec)
        visual.save_traversal_strip(frames, run_dir / "grids"
                                    / f"dim_{j}_traversal.png")
        mins, maxs = visual.extremes(latents, train_set, j, l)
        visual.save_extremes_grid(mins, run_dir / "extremes" / f"dim_{j}_min.png")
        visual.save_extremes_grid(maxs, run_dir / "extremes" / f"dim_{j}_max.png")
        visual.save_kde_json(visual.kde_plot_data(latents, j),
                             run_dir / "kde" / f"dim_{j}.json")
    _mark_stage(run_dir, "evidence", digest)


def stage_report(store: RunStore, run_id: str, cfg: dict):
    run_dir = store.run_dir(run_id)
    _require_artifact(run_dir, "scores.json", "analyze")
    k = cfg.get("analysis", {}).get("k", 3)
    visual.assemble_report(run_dir, k=k)


def stage_attack(store: RunStore, run_id: str, cfg: dict, seed: int):
    run_dir = store.run_dir(run_id)
    _require_artifact(run_dir, "dataset.zip", "train")
    dataset, _ = data.load_archive(run_dir / "dataset.zip")
    train_set, val_set, test_set = _splits(dataset, cfg, seed)
    atk = cfg.get("attack", {})
    clf = advgen.train_reference_cnn(
        train_set, val_set,
        advgen.ClassifierConfig(seed=seed, max_epochs=atk.get("max_epochs", 20)))
    attack_cfg = advgen.AttackConfig(
        crop_factor=atk.get("crop_factor", 0.5),
        pad_pixels=atk.get("pad_pixels",
                           dataset.images.shape[1] // 4),
        fill_value=tuple(atk["fill_value"])
        if isinstance(atk.get("fill_value"), list) else
        atk.get("fill_value", "edge-replicate"),
        output_size=dataset.images.shape[1],
    )
    transform = (advgen.crop_zoom_attack if atk.get("kind", "crop") == "crop"
                 else advgen.pad_zoom_attack)
    attacked = advgen.attack_dataset(test_set, transform, attack_cfg)
    data.save_archive(attacked, run_dir / "attacked.zip",
                      config={"attack": atk}, seed=seed)
    report = advgen.evaluate_attack(clf, test_set, attacked, attack_cfg)
    report.save(run_dir / "attack_report.json")
    return report


# --- click surface ---------------------------------------------------------

def _common(f):
    f = click.option("--run-root", envvar=RUN_ROOT_ENV, default="runs-root",
                     show_default=True, help="run storage root")(f)
    f = click.option("--config", "config_path", required=True,
                     type=click.Path(exists=True))(f)
    f = click.option("--seed", type=int, default=None,
                     help="override the config seed")(f)
    return f


def _load(config_path, seed):
    cfg = load_config(config_path)
    return cfg, (seed if seed is not None else cfg.get("seed", 0))


@click.group()
def main():
    """Shortcut-feature detection pipeline."""


@main.group()
def dataset():
    """Dataset generation commands."""


@dataset.command("gen")
@_common
@click.option("--out", type=click.Path(), default=None)
def dataset_gen(config_path, run_root, seed, out):
    """Generate a dataset archive from the config's [dataset] section."""
    cfg, seed = _load(config_path, seed)
    name = cfg.get("name", Path(config_path).stem)
    out = Path(out) if out else Path(run_root) / "datasets" / f"{name}.zip"
    stage_dataset(cfg, seed, out)
    click.echo(f"dataset written to {out}")


@main.command()
@_common
def train(config_path, run_root, seed):
    """Train a Beta-VAE and create a run directory."""
    cfg, seed = _load(config_path, seed)
    name = cfg.get("name", Path(config_path).stem)
    dataset_path = Path(run_root) / "datasets" / f"{name}.zip"
    if not dataset_path.exists():
        stage_dataset(cfg, seed, dataset_path)
    run_id = stage_train(RunStore(run_root), cfg, seed, dataset_path)
    click.echo(run_id)


def _run_opt(f):
    return click.option("--run", "run_id", required=True)(f)


@main.command()
@_common
@_run_opt
@click.option("--force", is_flag=True)
def analyze(config_path, run_root, seed, run_id, force):
    """Encode the training split and build the MPWD scoreboard."""
    cfg, seed = _load(config_path, seed)
    stage_analyze(RunStore(run_root), run_id, cfg, seed, force=force)
    click.echo(f"run {run_id} analyzed")


@main.command("probe")
@_common
@_run_opt
@click.option("--force", is_flag=True)
def probe_cmd(config_path, run_root, seed, run_id, force):
    """Train the linear probe and add predictiveness to the scoreboard."""
    cfg, seed = _load(config_path, seed)
    stage_probe(RunStore(run_root), run_id, cfg, seed, force=force)
    click.echo(f"run {run_id} probed")


@main.command()
@_common
@_run_opt
@click.option("--dims", default="top",
              help="'top' or comma-separated 1-based dims")
@click.option("--k", type=int, default=None)
@click.option("--force", is_flag=True)
def evidence(config_path, run_root, seed, run_id, dims, k, force):
    """Render traversal strips, extremes grids and KDE data for candidates."""
    cfg, seed = _load(config_path, seed)
    dim_list = None if dims == "top" else [int(x) for x in dims.split(",")]
    stage_evidence(RunStore(run_root), run_id, cfg, seed, dims=dim_list, k=k,
                   force=force)
    click.echo(f"evidence written for run {run_id}")


@main.command()
@_common
@_run_opt
def attack(config_path, run_root, seed, run_id):
    """Train the reference CNN and evaluate the zoom attack."""
    cfg, seed = _load(config_path, seed)
    report = stage_attack(RunStore(run_root), run_id, cfg, seed)
    click.echo(json.dumps(report.delta))


@main.command()
@_common
@_run_opt
def report(config_path, run_root, seed, run_id):
    """Assemble report.html / report.md for a run."""
    cfg, _ = _load(config_path, seed)
    stage_report(RunStore(run_root), run_id, cfg)
    click.echo(f"report written for run {run_id}")


@main.command()
@click.option("--run-root", envvar=RUN_ROOT_ENV, default="runs-root",
              show_default=True)
@click.option("--port", type=int, default=8008, show_default=True)
@click.option("--static-dir", type=click.Path(), default=None,
              help="console static assets to serve at /")
def serve(run_root, port, static_dir):
    """Serve the HTTP API (and optionally the judging console)."""
    serve_api(run_root, port=port, static_dir=static_dir)


@main.command()
@_common
@click.option("--k", type=int, default=None)
@click.option("--force", is_flag=True)
def pipeline(config_path, run_root, seed, k, force):
    """dataset -> train -> analyze -> probe -> evidence -> report."""
    cfg, seed = _load(config_path, seed)
    store = RunStore(run_root)
    name = cfg.get("name", Path(config_path).stem)
    dataset_path = Path(run_root) / "datasets" / f"{name}.zip"
    lock = FileLock(str(Path(run_root) / f".pipeline-{name}.lock"))
    with lock:
        if not dataset_path.exists() or force:
            stage_dataset(cfg, seed, dataset_path)
        run_id = stage_train(store, cfg, seed, dataset_path)
        stage_analyze(store, run_id, cfg, seed, force=force)
        stage_probe(store, run_id, cfg, seed, force=force)
        stage_evidence(store, run_id, cfg, seed, k=k, force=force)
        stage_report(store, run_id, cfg)
    click.echo(run_id)


def entry():
    try:
        main(standalone_mode=False)
    except LatentScoutError as exc:
        click.echo(f"error: {type(exc).__name__}: {exc}", err=True)
        sys.exit(1)
    except click.ClickException as exc:
        exc.show()
        sys.exit(exc.exit_code)


if __name__ == "__main__":
    entry()
