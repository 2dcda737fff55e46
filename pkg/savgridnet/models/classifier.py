"""Audio-visual scenario classifier: speech front-end, visual front-end and a
TCN back-end ending in one sigmoid unit (noise = positive)."""

import logging
from typing import List, Optional

from ..core.config import ClassifierConfig
from ..core.errors import InvalidInputError
from ..media.facetrack import FaceTrack, check_alignment, expected_frames
from ..media.signal import AudioClip
from ..nn import functional as F
from ..nn.layers import Conv1d, LayerNorm, Linear, Module, PReLU
from ..nn.tensor import Tensor, no_grad
from ..schemas import ScenarioPrediction
from .base import Model
from .visual import VisualFrontend

logger = logging.getLogger(__name__)


def channel_norm(norm: LayerNorm, x: Tensor) -> Tensor:
    """LayerNorm over the channel axis of (N, C, L)."""
    return F.swapaxes(norm(F.swapaxes(x, 1, 2)), 1, 2)


class TCNBlock(Module):
    """Conv-TasNet style residual block: 1x1 -> PReLU -> LN -> dilated depthwise
    -> PReLU -> LN -> 1x1."""

    def __init__(self, channels: int, hidden: int, kernel: int, dilation: int):
        self.expand = Conv1d(channels, hidden, 1)
        self.expand_act = PReLU(hidden, axis=1)
        self.expand_norm = LayerNorm(hidden)
        padding = dilation * (kernel - 1) // 2
        self.depthwise = Conv1d(hidden, hidden, kernel, padding=padding, dilation=dilation, groups=hidden)
        self.depthwise_act = PReLU(hidden, axis=1)
        self.depthwise_norm = LayerNorm(hidden)
        self.project = Conv1d(hidden, channels, 1)

    def forward(self, x: Tensor) -> Tensor:
        y = channel_norm(self.expand_norm, self.expand_act(self.expand(x)))
        y = channel_norm(self.depthwise_norm, self.depthwise_act(self.depthwise(y)))
        return x + self.project(y)


def dilation_schedule(max_dilation: int, repeats: int) -> List[int]:
    """1, 2, 4, ... up to ``max_dilation``, repeated."""
    ladder = []
    dilation = 1
    while dilation <= max_dilation:
        ladder.append(dilation)
        dilation *= 2
    return ladder * repeats


class ScenarioClassifier(Model):
    kind = "classifier"
    config_class = ClassifierConfig

    def __init__(self, cfg: ClassifierConfig = ClassifierConfig(), seed: int = 0):
        super().__init__(cfg, seed)
        self.use_visual = cfg.use_visual
        self.audio_conv = Conv1d(1, cfg.audio_channels, cfg.audio_kernel, stride=cfg.audio_stride)
        self.audio_tcn = [
            TCNBlock(cfg.audio_channels, cfg.tcn_hidden, cfg.tcn_kernel, d)
            for d in dilation_schedule(cfg.max_dilation, cfg.tcn_repeats)
        ]
        fused = cfg.audio_channels
        if self.use_visual:
            self.visual = VisualFrontend(cfg.visual)
            fused += cfg.visual.Dv
        self.bottleneck = Conv1d(fused, cfg.backend_hidden, 1)
        self.backend_tcn = [
            TCNBlock(cfg.backend_hidden, cfg.backend_hidden, cfg.tcn_kernel, d)
            for d in dilation_schedule(cfg.backend_max_dilation, 1)
        ]
        self.head = Linear(cfg.backend_hidden, 1)
        self.reset_parameters(seed)

    def speech_features(self, mixture: AudioClip, frames: int) -> Tensor:
        """(1, C, frames) audio features pooled to the video frame rate."""
        cfg = self.config
        if len(mixture) < cfg.audio_kernel + (cfg.audio_pool - 1) * cfg.audio_stride:
            raise InvalidInputError(f"Clip of {len(mixture)} samples is too short to classify")
        x = F.relu(self.audio_conv(Tensor(mixture.samples.reshape(1, 1, -1))))
        x = F.avg_pool1d(x, cfg.audio_pool)
        for block in self.audio_tcn:
            x = block(x)
        return F.adaptive_avg_pool1d(x, frames)

    def forward(self, mixture: AudioClip, track: Optional[FaceTrack] = None) -> Tensor:
        """Probability that the interferer is noise, as a scalar Tensor."""
        if self.use_visual:
            if track is None:
                raise InvalidInputError("An audio-visual classifier needs a face track")
            check_alignment(len(mixture), mixture.sample_rate, track)
            frames = len(track)
        else:
            frames = expected_frames(len(mixture), mixture.sample_rate, self.config.visual.fps)
        features = self.speech_features(mixture, frames)
        if self.use_visual:
            visual = F.reshape(F.transpose(self.visual(track)), (1, self.config.visual.Dv, frames))
            features = F.concat([features, visual], axis=1)
        x = self.bottleneck(features)
        for block in self.backend_tcn:
            x = block(x)
        pooled = F.reshape(F.adaptive_avg_pool1d(x, 1), (1, self.config.backend_hidden))
        return F.reshape(F.sigmoid(self.head(pooled)), ())

    def classify(self, mixture: AudioClip, track: Optional[FaceTrack] = None) -> ScenarioPrediction:
        with no_grad():
            probability = self.forward(mixture, track).item()
        return ScenarioPrediction(probability=probability, threshold=self.config.threshold)
