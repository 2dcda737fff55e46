from .generators import gen_face_track, gen_noiselike, gen_speechlike, loudness_envelope
from .scenes import (
    MIXTURE_PEAK,
    DynamicMixer,
    Scene,
    ScenePool,
    compose_scene,
    dynamic_mix,
    generate_scene,
    generate_scenes,
    scenario_labels,
    scene_id_for,
    snr_range,
)

__all__ = [
    "MIXTURE_PEAK",
    "DynamicMixer",
    "Scene",
    "ScenePool",
    "compose_scene",
    "dynamic_mix",
    "gen_face_track",
    "gen_noiselike",
    "gen_speechlike",
    "generate_scene",
    "generate_scenes",
    "loudness_envelope",
    "scenario_labels",
    "scene_id_for",
    "snr_range",
]
