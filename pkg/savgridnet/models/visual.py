"""Visual front-end: frozen Conv3D and per-frame conv stub, then trainable V-TCN."""

import logging
from pathlib import Path
from typing import Union

import numpy as np

from ..core.config import VisualConfig
from ..core.errors import ConfigurationError, InvalidInputError
from ..media.facetrack import FaceTrack
from ..nn import functional as F
from ..nn.checkpoint import load_checkpoint
from ..nn.layers import Conv1d, Conv2d, Conv3d, LayerNorm, Module, PReLU
from ..nn.tensor import Tensor, no_grad

logger = logging.getLogger(__name__)


class VTCNBlock(Module):
    """Residual [LN -> depthwise dilated conv -> pointwise conv -> PReLU] over time.

    Time padding replicates the edge frames so a constant sequence stays constant.
    """

    def __init__(self, channels: int, kernel: int, dilation: int):
        self.norm = LayerNorm(channels)
        self.depthwise = Conv1d(channels, channels, kernel, dilation=dilation, groups=channels)
        self.pointwise = Conv1d(channels, channels, 1)
        self.activation = PReLU(channels, axis=1)
        self.reach = dilation * (kernel - 1)

    def forward(self, x: Tensor) -> Tensor:
        steps, channels = x.shape
        y = F.reshape(F.transpose(self.norm(x)), (1, channels, steps))
        left = self.reach // 2
        y = F.pad(y, [(0, 0), (0, 0), (left, self.reach - left)], mode="edge")
        y = self.activation(self.pointwise(self.depthwise(y)))
        return x + F.transpose(F.reshape(y, (channels, steps)))


class VisualFrontend(Module):
    def __init__(self, cfg: VisualConfig = VisualConfig()):
        self.cfg = cfg
        self.conv3d = Conv3d(1, cfg.conv3d_channels, 3, padding=(0, 1, 1), frozen=True)
        widths = [cfg.conv3d_channels, *cfg.stub_channels, cfg.Dv]
        self.stub = [
            Conv2d(c_in, c_out, 3, stride=2, padding=1, frozen=True)
            for c_in, c_out in zip(widths[:-1], widths[1:])
        ]
        self.vtcn = [VTCNBlock(cfg.Dv, cfg.vtcn_kernel, 2**r) for r in range(cfg.R)]

    def _frames(self, track: Union[FaceTrack, Tensor]) -> Tensor:
        frames = Tensor(track.frames) if isinstance(track, FaceTrack) else track
        if frames.ndim != 3 or frames.shape[0] < 1:
            raise InvalidInputError(f"Face track must be Tv x H x W with Tv >= 1, got {frames.shape}")
        if frames.shape[1:] != (self.cfg.height, self.cfg.width):
            raise InvalidInputError(
                f"Face crops are {frames.shape[1]}x{frames.shape[2]}, "
                f"expected {self.cfg.height}x{self.cfg.width}"
            )
        return frames

    def frozen_features(self, track: Union[FaceTrack, Tensor]) -> Tensor:
        """Conv3D + per-frame stub + spatial mean: Tv x Dv."""
        frames = self._frames(track)
        steps, height, width = frames.shape
        x = F.reshape(frames, (1, 1, steps, height, width))
        x = F.pad(x, [(0, 0), (0, 0), (1, 1), (0, 0), (0, 0)], mode="edge")
        x = self.conv3d(x)
        x = F.transpose(F.reshape(x, (self.cfg.conv3d_channels, steps, height, width)), (1, 0, 2, 3))
        for stage in self.stub:
            x = F.relu(stage(x))
        return F.mean(x, axis=(2, 3))

    def forward(self, track: Union[FaceTrack, Tensor]) -> Tensor:
        x = self.frozen_features(track)
        for block in self.vtcn:
            x = block(x)
        return x

    def encode(self, track: FaceTrack) -> np.ndarray:
        with no_grad():
            return self.forward(track).data

    def frozen_state(self) -> dict:
        return {name: p.data for name, p in self.named_parameters() if p.frozen}

    def load_pretrained(self, path: Path) -> None:
        """Replace the frozen tensors with weights from a SAVG checkpoint."""
        state = load_checkpoint(path)
        frozen = {name for name, p in self.named_parameters() if p.frozen}
        missing = sorted(frozen - set(state))
        if missing:
            raise ConfigurationError(f"{path}: pretrained visual weights lack {missing}")
        self.load_state_dict({name: state[name] for name in frozen}, strict=False)
        logger.info("Loaded %d pretrained visual tensors from %s", len(frozen), path)
