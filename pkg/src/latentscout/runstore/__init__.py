from .store import RunManifest, RunStore, VerdictRecord
from .api import create_app, serve

__all__ = ["RunManifest", "RunStore", "VerdictRecord", "create_app", "serve"]
