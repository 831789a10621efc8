"""Seed a tiny fully-analyzed run and serve the HTTP API for console tests.

Usage: python3 serve_fixture.py <root-dir> <port>

Prints one line "READY <run_id>" once the fixture exists, then serves
(blocking) until killed.
"""

import json
import sys
from pathlib import Path

from latentscout import cli
from latentscout.runstore import RunStore
from latentscout.runstore.api import create_app


def main():
    root = Path(sys.argv[1])
    port = int(sys.argv[2])
    cfg = {
        "name": "console-fixture",
        "seed": 3,
        "dataset": {"kind": "colored", "n_samples": 150, "image_size": 32,
                    "n_classes": 3, "p_corr": 0.95},
        "train": {"latent_dim": 4, "beta": 1.0, "max_epochs": 2},
        "traversal": {"steps": 4, "extremes_l": 2},
    }
    store = RunStore(root)
    dataset_path = root / "datasets" / "console-fixture.zip"
    cli.stage_dataset(cfg, 3, dataset_path)
    run_id = cli.stage_train(store, cfg, 3, dataset_path)
    cli.stage_analyze(store, run_id, cfg, 3)
    cli.stage_probe(store, run_id, cfg, 3)
    cli.stage_evidence(store, run_id, cfg, 3, dims=[1, 2, 3, 4])
    cli.stage_report(store, run_id, cfg)
    (root / "fixture-info.json").write_text(json.dumps({
        "run_id": run_id, "port": port,
        "run_dir": str(store.run_dir(run_id)),
    }))
    print(f"READY {run_id}", flush=True)

    import uvicorn

    uvicorn.run(create_app(root), host="127.0.0.1", port=port,
                log_level="warning")


if __name__ == "__main__":
    main()
