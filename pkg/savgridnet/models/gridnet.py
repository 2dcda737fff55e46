"""TF-GridNet extractor with optional per-block audio-visual fusion."""

import logging
from typing import Optional, Union

import numpy as np

from ..core.config import GridNetConfig
from ..core.errors import InvalidInputError, ShapeError
from ..media.facetrack import FaceTrack, check_alignment
from ..media.signal import AudioClip, Spectrogram, stft
from ..nn import functional as F
from ..nn.layers import BLSTM, Conv2d, ConvTranspose1d, ConvTranspose2d, LayerNorm, Linear, Module, PReLU
from ..nn.spectral import istft_parts
from ..nn.tensor import Tensor, no_grad
from .base import Model
from .visual import VisualFrontend

logger = logging.getLogger(__name__)


class SequenceModule(Module):
    """LN -> BLSTM -> transposed conv back to D channels -> residual, over (S, L, D)."""

    def __init__(self, cfg: GridNetConfig):
        self.norm = LayerNorm(cfg.D)
        self.blstm = BLSTM(cfg.D, cfg.H)
        self.deconv = ConvTranspose1d(2 * cfg.H, cfg.D, cfg.I, stride=cfg.J)

    def forward(self, x: Tensor) -> Tensor:
        length = x.shape[1]
        y = self.blstm(self.norm(x))
        y = self.deconv(F.swapaxes(y, 1, 2))
        # (L - 1) * J + I outputs; keep the first L
        y = F.swapaxes(y[:, :, :length], 1, 2)
        return x + y


class FullBandAttention(Module):
    """Multi-head attention across frames with full-spectrum channels per head."""

    def __init__(self, cfg: GridNetConfig):
        width = cfg.L * cfg.E
        self.heads = cfg.L
        self.query = Linear(cfg.D, width)
        self.query_act = PReLU(width)
        self.query_norm = LayerNorm(width)
        self.key = Linear(cfg.D, width)
        self.key_act = PReLU(width)
        self.key_norm = LayerNorm(width)
        self.value = Linear(cfg.D, cfg.D)
        self.value_act = PReLU(cfg.D)
        self.value_norm = LayerNorm(cfg.D)
        self.project = Linear(cfg.D, cfg.D)
        self.project_act = PReLU(cfg.D)
        self.project_norm = LayerNorm(cfg.D)

    def _heads(self, x: Tensor) -> Tensor:
        frames, bins, channels = x.shape
        per_head = channels // self.heads
        x = F.transpose(F.reshape(x, (frames, bins, self.heads, per_head)), (2, 0, 1, 3))
        return F.reshape(x, (self.heads, frames, bins * per_head))

    def forward(self, x: Tensor) -> Tensor:
        frames, bins, channels = x.shape
        q = self._heads(self.query_norm(self.query_act(self.query(x))))
        k = self._heads(self.key_norm(self.key_act(self.key(x))))
        v = self._heads(self.value_norm(self.value_act(self.value(x))))
        mixed = F.scaled_dot_product_attention(q, k, v)
        mixed = F.reshape(mixed, (self.heads, frames, bins, channels // self.heads))
        mixed = F.reshape(F.transpose(mixed, (1, 2, 0, 3)), (frames, bins, channels))
        return x + self.project_norm(self.project_act(self.project(mixed)))


class GridNetBlock(Module):
    def __init__(self, cfg: GridNetConfig, fusion: bool):
        if fusion:
            self.fusion = Linear(cfg.D + cfg.visual.Dv, cfg.D)
        self.intra = SequenceModule(cfg)
        self.subband = SequenceModule(cfg)
        self.attention = FullBandAttention(cfg)

    def forward(self, emb: Tensor) -> Tensor:
        emb = self.intra(emb)
        emb = F.swapaxes(self.subband(F.swapaxes(emb, 0, 1)), 0, 1)
        return self.attention(emb)


class AVGridNet(Model):
    """TF-GridNet; with ``use_visual`` the shared visual embedding is fused
    at the start of every block."""

    kind = "gridnet"
    config_class = GridNetConfig

    def __init__(self, cfg: GridNetConfig = GridNetConfig(), seed: int = 0):
        super().__init__(cfg, seed)
        self.use_visual = cfg.use_visual
        if self.use_visual:
            self.visual = VisualFrontend(cfg.visual)
        self.encoder = Conv2d(2, cfg.D, 3, padding=1)
        self.encoder_norm = LayerNorm(cfg.D)
        self.blocks = [GridNetBlock(cfg, fusion=self.use_visual) for _ in range(cfg.B)]
        self.decoder = ConvTranspose2d(cfg.D, 2, 3, padding=1)
        self.reset_parameters(seed)

    def encode(self, spec: Spectrogram) -> Tensor:
        """Complex T x F spectrogram -> T x F x D embedding."""
        if spec.config != self.config.stft or spec.num_bins != self.config.stft.num_bins:
            raise ShapeError(
                "encode", f"spectrogram with {spec.num_bins} bins does not match the model's STFT config"
            )
        stacked = np.stack([spec.frames.real, spec.frames.imag])[None]
        emb = self.encoder(Tensor(stacked))
        frames, bins = spec.frames.shape
        emb = F.transpose(F.reshape(emb, (self.config.D, frames, bins)), (1, 2, 0))
        return self.encoder_norm(emb)

    def fuse(self, emb: Tensor, visual: Tensor, block: GridNetBlock) -> Tensor:
        """Concatenate the T x Dv visual rows onto every frequency bin and project to D."""
        frames, bins, _ = emb.shape
        if visual.shape[0] != frames:
            raise ShapeError("fuse", f"visual rows {visual.shape[0]} vs {frames} audio frames")
        spread = F.broadcast_to(F.reshape(visual, (frames, 1, visual.shape[1])), (frames, bins, visual.shape[1]))
        return block.fusion(F.concat([emb, spread], axis=-1))

    def gridnet_block(self, emb: Tensor, index: int, visual: Optional[Tensor] = None) -> Tensor:
        if emb.ndim != 3 or emb.shape[2] != self.config.D:
            raise ShapeError("gridnet_block", f"expected T x F x {self.config.D}, got {emb.shape}")
        block = self.blocks[index]
        if self.use_visual:
            if visual is None:
                raise InvalidInputError("This model needs a visual embedding")
            emb = self.fuse(emb, visual, block)
        return block(emb)

    def decode(self, emb: Tensor, original_length: int) -> Tensor:
        """T x F x D embedding -> waveform of ``original_length`` samples."""
        frames, bins, channels = emb.shape
        x = F.reshape(F.transpose(emb, (2, 0, 1)), (1, channels, frames, bins))
        parts = self.decoder(x)
        return istft_parts(parts[0, 0], parts[0, 1], self.config.stft, original_length)

    def visual_embedding(self, track: Union[FaceTrack, Tensor], frames: int) -> Tensor:
        """Encode the face track once and interpolate it onto ``frames`` rows."""
        return F.interp_rows(self.visual(track), frames)

    def forward(self, mixture: AudioClip, track: Optional[FaceTrack] = None) -> Tensor:
        if self.use_visual:
            if track is None:
                raise InvalidInputError("An audio-visual model needs a face track")
            check_alignment(len(mixture), mixture.sample_rate, track)
        spec = stft(mixture, self.config.stft)
        emb = self.encode(spec)
        visual = self.visual_embedding(track, spec.num_frames) if self.use_visual else None
        for index in range(len(self.blocks)):
            emb = self.gridnet_block(emb, index, visual)
        return self.decode(emb, len(mixture))

    def extract(self, mixture: AudioClip, track: Optional[FaceTrack] = None) -> AudioClip:
        with no_grad():
            estimate = self.forward(mixture, track)
        return AudioClip(estimate.data, mixture.sample_rate)
