"""Materialize a SceneSpec as a dataset directory."""

import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import List

from ..core.config import SceneSpec, VisualConfig
from ..services.scene_store import SceneStore
from .scenes import Scene, generate_scene, scenario_labels

logger = logging.getLogger(__name__)


def build_dataset(
    spec: SceneSpec,
    out_dir: Path,
    workers: int = 1,
    visual: VisualConfig = VisualConfig(),
) -> Path:
    """Generate every scene of ``spec`` into ``out_dir`` and write its manifest.

    Scenes draw from independent rng streams, so the bytes on disk do not
    depend on ``workers``.
    """
    store = SceneStore(out_dir)
    labels = scenario_labels(spec)

    def materialize(index: int) -> dict:
        return store.write_scene(generate_scene(spec, index, labels[index], visual))

    logger.info("Simulating %d scenes into %s with %d worker(s)", spec.count, out_dir, workers)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        rows = list(pool.map(materialize, range(spec.count)))
    return store.write_manifest(rows)


def load_dataset(root: Path) -> List[Scene]:
    return SceneStore(root).load_scenes()
