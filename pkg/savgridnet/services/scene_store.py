"""Tab-separated scene manifests and routing decision trails."""

import logging
from pathlib import Path
from typing import Dict, Iterable, List, Optional

import numpy as np
import pandas as pd

from ..core.errors import InvalidInputError
from ..media.io import (
    PCM_SCALE,
    quantize_pcm16,
    read_face_track,
    read_wav,
    write_face_track,
    write_wav_pcm16,
)
from ..schemas import ModelRole, RoutingDecision, Scenario
from ..simulation.scenes import Scene

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.tsv"
MANIFEST_COLUMNS = ["scene_id", "target", "interferer", "mixture", "face", "scenario", "snr_db"]
TRAIL_COLUMNS = [
    "scene_id",
    "probability",
    "classifier_label",
    "universal_check",
    "mixture_check",
    "final_label",
    "chosen_model",
]


def _pcm_sum(target: np.ndarray, interferer: np.ndarray) -> np.ndarray:
    total = target.astype(np.int32) + interferer.astype(np.int32)
    return np.clip(total, -PCM_SCALE, PCM_SCALE - 1).astype(np.int16)


def _optional_bool(value) -> Optional[bool]:
    if value is None or (isinstance(value, float) and np.isnan(value)) or value == "":
        return None
    if isinstance(value, str):
        return value.strip().lower() == "true"
    return bool(value)


class SceneStore:
    """Dataset directory: one folder of stems per scene plus ``manifest.tsv``.

    The stored mixture is the int16 sum of the stored target and interferer,
    so re-mixing the stems is bit-exact.
    """

    def __init__(self, root: Path):
        self.root = Path(root)

    @property
    def manifest_path(self) -> Path:
        return self.root / MANIFEST_NAME

    def write_scene(self, scene: Scene) -> Dict[str, object]:
        """Write the stems of one scene and return its manifest row."""
        folder = Path(scene.scene_id)
        target = quantize_pcm16(scene.target.samples)
        interferer = quantize_pcm16(scene.interferer.samples)
        rate = scene.target.sample_rate
        row = {
            "scene_id": scene.scene_id,
            "target": str(folder / "target.wav"),
            "interferer": str(folder / "interferer.wav"),
            "mixture": str(folder / "mixture.wav"),
            "face": str(folder / "face.ftrk"),
            "scenario": scene.scenario.value,
            "snr_db": repr(float(scene.snr_db)),
        }
        try:
            write_wav_pcm16(self.root / row["target"], target, rate)
            write_wav_pcm16(self.root / row["interferer"], interferer, rate)
            write_wav_pcm16(self.root / row["mixture"], _pcm_sum(target, interferer), rate)
            write_face_track(self.root / row["face"], scene.face_track)
        except (OSError, RuntimeError) as exc:
            raise InvalidInputError(f"{scene.scene_id}: cannot write scene files: {exc}") from exc
        return row

    def write_manifest(self, rows: Iterable[Dict[str, object]]) -> Path:
        frame = pd.DataFrame(list(rows), columns=MANIFEST_COLUMNS).sort_values("scene_id")
        self.root.mkdir(parents=True, exist_ok=True)
        frame.to_csv(self.manifest_path, sep="\t", index=False, lineterminator="\n", encoding="utf-8")
        logger.info("Wrote manifest with %d scenes to %s", len(frame), self.manifest_path)
        return self.manifest_path

    def read_manifest(self) -> pd.DataFrame:
        if not self.manifest_path.exists():
            raise InvalidInputError(f"No scene manifest at {self.manifest_path}")
        frame = pd.read_csv(self.manifest_path, sep="\t", dtype=str, keep_default_na=False)
        missing = set(MANIFEST_COLUMNS) - set(frame.columns)
        if missing:
            raise InvalidInputError(f"{self.manifest_path}: missing columns {sorted(missing)}")
        return frame

    def load_scene(self, row: pd.Series) -> Scene:
        scene_id = row["scene_id"]
        try:
            target = read_wav(self.root / row["target"])
            interferer = read_wav(self.root / row["interferer"])
            mixture = read_wav(self.root / row["mixture"])
            track = read_face_track(self.root / row["face"])
            scenario = Scenario(row["scenario"])
            snr = float(row["snr_db"])
        except (InvalidInputError, ValueError) as exc:
            raise InvalidInputError(f"{scene_id}: {exc}") from exc
        return Scene(scene_id, target, interferer, track, scenario, snr, mixture)

    def load_scenes(self, scene_ids: Optional[Iterable[str]] = None) -> List[Scene]:
        frame = self.read_manifest()
        if scene_ids is not None:
            wanted = set(scene_ids)
            unknown = wanted - set(frame["scene_id"])
            if unknown:
                raise InvalidInputError(f"Unknown scene ids: {sorted(unknown)}")
            frame = frame[frame["scene_id"].isin(wanted)]
        return [self.load_scene(row) for _, row in frame.iterrows()]

    def scene(self, scene_id: str) -> Scene:
        return self.load_scenes([scene_id])[0]

    @staticmethod
    def write_trail(path: Path, decisions: Iterable[RoutingDecision]) -> Path:
        """Decision trail, one routed scene per line."""
        rows = [
            {
                **decision.model_dump(mode="json"),
                "probability": "" if decision.probability is None else repr(decision.probability),
            }
            for decision in decisions
        ]
        frame = pd.DataFrame(rows, columns=TRAIL_COLUMNS).sort_values("scene_id")
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(path, sep="\t", index=False, lineterminator="\n", encoding="utf-8")
        return Path(path)

    @staticmethod
    def read_trail(path: Path) -> List[RoutingDecision]:
        if not Path(path).exists():
            raise InvalidInputError(f"No decision trail at {path}")
        frame = pd.read_csv(path, sep="\t", dtype=str, keep_default_na=False)
        decisions = []
        for _, row in frame.iterrows():
            decisions.append(
                RoutingDecision(
                    scene_id=row["scene_id"],
                    probability=float(row["probability"]) if row["probability"] else None,
                    classifier_label=Scenario(row["classifier_label"]),
                    final_label=Scenario(row["final_label"]),
                    chosen_model=ModelRole(row["chosen_model"]),
                    universal_check=_optional_bool(row["universal_check"]),
                    mixture_check=_optional_bool(row["mixture_check"]),
                )
            )
        return decisions
