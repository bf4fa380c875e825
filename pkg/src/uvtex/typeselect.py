"""Garment-class embedding fused into the diffusion time embedding."""

from __future__ import annotations

import numpy as np
import torch
from torch import nn


class TypeSelectError(ValueError):
    pass


def _class_index(one_hot) -> torch.Tensor:
    vec = torch.as_tensor(one_hot, dtype=torch.float32)
    if vec.ndim == 1:
        vec = vec[None]
    if vec.shape[-1] != 3:
        raise TypeSelectError(f"one-hot must have 3 entries, got {tuple(vec.shape)}")
    ok = (vec.sum(dim=-1) == 1.0) & ((vec == 0.0) | (vec == 1.0)).all(dim=-1)
    if not bool(ok.all()):
        raise TypeSelectError("input is not one-hot")
    return vec.argmax(dim=-1)


def pos_emb(one_hot, freq_count: int = 8) -> torch.Tensor:
    """Sinusoidal features of the class index over a geometric frequency
    ladder: [sin(2^k i), cos(2^k i)] for k < freq_count."""
    if freq_count < 2:
        raise TypeSelectError("freq_count must be >= 2")
    idx = _class_index(one_hot).to(torch.float32)
    freqs = 2.0 ** torch.arange(freq_count, dtype=torch.float32)
    angles = idx[:, None] * freqs[None, :]
    feat = torch.cat([torch.sin(angles), torch.cos(angles)], dim=-1)
    return feat if np.ndim(one_hot) > 1 else feat[0]


class TypeEmbedder(nn.Module):
    """Two-layer MLP over the positional class features, residually added
    to the time embedding. The final layer is zero-initialized so an
    untrained embedder leaves the time embedding unchanged."""

    def __init__(self, emb_dim: int = 256, freq_count: int = 8):
        super().__init__()
        if freq_count < 2:
            raise TypeSelectError("freq_count must be >= 2")
        self.freq_count = freq_count
        self.emb_dim = emb_dim
        self.lin1 = nn.Linear(2 * freq_count, emb_dim)
        self.lin2 = nn.Linear(emb_dim, emb_dim)
        nn.init.zeros_(self.lin2.weight)
        nn.init.zeros_(self.lin2.bias)

    def project(self, one_hot) -> torch.Tensor:
        feat = pos_emb(one_hot, self.freq_count)
        if feat.ndim == 1:
            feat = feat[None]
        feat = feat.to(self.lin1.weight.dtype)
        return self.lin2(torch.nn.functional.silu(self.lin1(feat)))

    def forward(self, one_hot, t_emb: torch.Tensor) -> torch.Tensor:
        proj = self.project(one_hot)
        if t_emb.ndim == 1:
            t_emb = t_emb[None]
        if t_emb.shape[-1] != self.emb_dim:
            raise TypeSelectError(
                f"time embedding dim {t_emb.shape[-1]} != {self.emb_dim}"
            )
        return proj + t_emb


def type_time_fuse(embedder: TypeEmbedder, one_hot, t_emb) -> torch.Tensor:
    """F_cls = project(pos_emb(one_hot)) + t_emb; replaces the plain time
    embedding everywhere the denoiser consumes it."""
    return embedder(one_hot, torch.as_tensor(t_emb, dtype=torch.float32))
