"""Compact UNet denoiser (self-attention only) and its training loop."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .errors import NumericError
from . import tensorio
from .codec import LatentTensor
from .conditioning import (ConditioningBundle, _conditioning_blocks,
                           _masked_content, spatial_concat)
from .schedule import NoiseSchedule, add_noise  # re-exported: forward process
from .synthdata import TypeLabel, load_dataset_record, read_manifest
from .typeselect import TypeEmbedder

__all__ = [
    "NoiseSchedule", "add_noise", "ModelConfig", "TrainConfig", "DenoiserNet",
    "denoise_forward", "extract_attention", "train", "save_checkpoint",
    "load_checkpoint", "precompute_latent_bank", "AttentionCapture",
]


class DiffusionError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    latent_channels: int = 4
    base_width: int = 64
    level_mults: tuple = (1, 2, 3)
    emb_dim: int = 256
    attention_levels: tuple = (1, 2)   # indices into level_mults; deepest included
    heads: int = 4
    freq_count: int = 8
    use_position_map: bool = True
    use_type_module: bool = True

    @property
    def in_channels(self) -> int:
        return 3 * self.latent_channels + 1


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-5
    steps: int = 2000
    batch_size: int = 16
    seed: int = 0
    timesteps: int = 1000
    beta_start: float = 1e-4
    beta_end: float = 2e-2
    grad_clip: float = 1.0
    checkpoint_every: int = 0     # 0 = final only
    log_every: int = 25
    threads: int = 1
    holdout: int = 32             # tail manifest entries reserved for eval

    def __post_init__(self):
        if min(self.learning_rate, self.steps, self.batch_size) <= 0:
            raise DiffusionError("learning rate, steps, batch size must be positive")

    def schedule(self) -> NoiseSchedule:
        return NoiseSchedule(self.timesteps, self.beta_start, self.beta_end)


def time_embedding(t: torch.Tensor, dim: int) -> torch.Tensor:
    """Standard sinusoidal timestep features, (B, dim)."""
    dtype = t.dtype if t.is_floating_point() else torch.float32
    half = dim // 2
    freqs = torch.exp(-math.log(10000.0) * torch.arange(half, dtype=dtype) / half)
    angles = t.to(dtype)[:, None] * freqs[None, :]
    return torch.cat([torch.sin(angles), torch.cos(angles)], dim=-1)


class _ResBlock(nn.Module):
    def __init__(self, ch_in: int, ch_out: int, emb_dim: int):
        super().__init__()
        self.norm1 = nn.GroupNorm(8, ch_in)
        self.conv1 = nn.Conv2d(ch_in, ch_out, 3, padding=1)
        self.emb_proj = nn.Linear(emb_dim, ch_out)
        self.norm2 = nn.GroupNorm(8, ch_out)
        self.conv2 = nn.Conv2d(ch_out, ch_out, 3, padding=1)
        self.skip = nn.Conv2d(ch_in, ch_out, 1) if ch_in != ch_out else nn.Identity()

    def forward(self, x, emb):
        h = self.conv1(torch.nn.functional.silu(self.norm1(x)))
        h = h + self.emb_proj(torch.nn.functional.silu(emb))[:, :, None, None]
        h = self.conv2(torch.nn.functional.silu(self.norm2(h)))
        return self.skip(x) + h


class _SelfAttention(nn.Module):
    """Multi-head self-attention over all spatial positions of one level.

    There is deliberately no cross-attention anywhere in this network; the
    two width-halves exchange information purely through these layers.
    """

    def __init__(self, ch: int, heads: int):
        super().__init__()
        if ch % heads:
            raise DiffusionError(f"channels {ch} not divisible by heads {heads}")
        self.heads = heads
        self.norm = nn.GroupNorm(8, ch)
        self.qkv = nn.Conv2d(ch, ch * 3, 1)
        self.out = nn.Conv2d(ch, ch, 1)
        nn.init.zeros_(self.out.weight)
        nn.init.zeros_(self.out.bias)
        self.capture: list | None = None

    def forward(self, x):
        b, c, h, w = x.shape
        qkv = self.qkv(self.norm(x))
        q, k, v = qkv.chunk(3, dim=1)
        dh = c // self.heads

        def split(z):
            return z.reshape(b, self.heads, dh, h * w).transpose(2, 3)

        q, k, v = split(q), split(k), split(v)
        attn = torch.softmax(q @ k.transpose(2, 3) / math.sqrt(dh), dim=-1)
        if self.capture is not None:
            self.capture.append(((h, w), attn.detach().mean(dim=1)))
        out = (attn @ v).transpose(2, 3).reshape(b, c, h, w)
        return x + self.out(out)


class DenoiserNet(nn.Module):
    """UNet over the assembled (3C+1)-channel input, predicting C channels.

    The class/time embedding is injected into every residual block; the
    position-map and type-module ablation toggles live in the config.
    """

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        c = config.latent_channels
        widths = [config.base_width * m for m in config.level_mults]
        emb = config.emb_dim
        self.time_mlp = nn.Sequential(
            nn.Linear(emb, emb), nn.SiLU(), nn.Linear(emb, emb))
        self.type_embedder = (
            TypeEmbedder(emb, config.freq_count) if config.use_type_module else None)

        self.stem = nn.Conv2d(config.in_channels, widths[0], 3, padding=1)
        self.down_blocks = nn.ModuleList()
        self.downsamplers = nn.ModuleList()
        self.attn_down = nn.ModuleList()
        for i, w in enumerate(widths):
            # the previous downsampler already switched channels to widths[i]
            self.down_blocks.append(_ResBlock(w, w, emb))
            self.attn_down.append(
                _SelfAttention(w, config.heads)
                if i in config.attention_levels else nn.Identity())
            self.downsamplers.append(
                nn.Conv2d(w, widths[min(i + 1, len(widths) - 1)], 4, stride=2, padding=1)
                if i < len(widths) - 1 else nn.Identity())

        self.mid1 = _ResBlock(widths[-1], widths[-1], emb)
        self.mid_attn = _SelfAttention(widths[-1], config.heads)
        self.mid2 = _ResBlock(widths[-1], widths[-1], emb)

        self.up_blocks = nn.ModuleList()
        self.upsamplers = nn.ModuleList()
        self.attn_up = nn.ModuleList()
        for i in reversed(range(len(widths))):
            self.up_blocks.append(_ResBlock(widths[i] * 2, widths[i], emb))
            self.attn_up.append(
                _SelfAttention(widths[i], config.heads)
                if i in config.attention_levels else nn.Identity())
            self.upsamplers.append(
                nn.Sequential(
                    nn.Upsample(scale_factor=2, mode="nearest"),
                    nn.Conv2d(widths[i], widths[max(i - 1, 0)], 3, padding=1),
                ) if i > 0 else nn.Identity())

        self.out_norm = nn.GroupNorm(8, widths[0])
        self.out_conv = nn.Conv2d(widths[0], c, 3, padding=1)
        # zero-init output: the untrained net predicts exactly zero, so the
        # initial loss sits at the unit-variance noise energy
        nn.init.zeros_(self.out_conv.weight)
        nn.init.zeros_(self.out_conv.bias)

    # -- embeddings ---------------------------------------------------------

    def timestep_embedding(self, t: torch.Tensor) -> torch.Tensor:
        return self.time_mlp(time_embedding(t, self.config.emb_dim))

    def fuse(self, one_hot, t_emb: torch.Tensor) -> torch.Tensor:
        """Class-conditioned embedding; falls back to the plain time
        embedding when the type module is ablated."""
        if self.type_embedder is None:
            return t_emb
        return self.type_embedder(one_hot, t_emb)

    # -- forward ------------------------------------------------------------

    def forward(self, x: torch.Tensor, emb: torch.Tensor) -> torch.Tensor:
        c = self.config.latent_channels
        if x.shape[1] != self.config.in_channels:
            raise DiffusionError(
                f"input has {x.shape[1]} channels, expected {self.config.in_channels}")
        if not self.config.use_position_map:
            keep = torch.ones(x.shape[1], 1, 1, dtype=x.dtype)
            keep[2 * c:3 * c] = 0.0
            x = x * keep
        h = self.stem(x)
        skips = []
        for block, attn, down in zip(self.down_blocks, self.attn_down, self.downsamplers):
            h = block(h, emb)
            h = attn(h)
            skips.append(h)
            h = down(h)
        h = self.mid1(h, emb)
        h = self.mid_attn(h)
        h = self.mid2(h, emb)
        for block, attn, up in zip(self.up_blocks, self.attn_up, self.upsamplers):
            h = block(torch.cat([h, skips.pop()], dim=1), emb)
            h = attn(h)
            h = up(h)
        return self.out_conv(torch.nn.functional.silu(self.out_norm(h)))

    def attention_modules(self) -> list[_SelfAttention]:
        return [m for m in self.modules() if isinstance(m, _SelfAttention)]


def denoise_forward(net: DenoiserNet, f_in: np.ndarray,
                    f_cls: torch.Tensor) -> np.ndarray:
    """Single-sample prediction: (3C+1, h, 2w) input -> (C, h, 2w) noise."""
    with torch.no_grad():
        x = torch.as_tensor(np.asarray(f_in, dtype=np.float32))[None]
        emb = torch.as_tensor(f_cls, dtype=torch.float32)
        if emb.ndim == 1:
            emb = emb[None]
        return net(x, emb)[0].numpy()


@dataclass(frozen=True)
class AttentionCapture:
    """Per-layer row-stochastic attention plus the uv->reference mass."""

    layers: list          # [(h, w), (tokens, tokens) ndarray] outer to deepest
    cross_half_mass: float


def _uv_to_ref_mass(shape: tuple[int, int], matrix: np.ndarray) -> float:
    h, w = shape
    cols = np.arange(h * w) % w
    uv_tokens = cols < w // 2
    ref_tokens = ~uv_tokens
    return float(matrix[uv_tokens][:, ref_tokens].sum(axis=1).mean())


def extract_attention(net: DenoiserNet, f_in: np.ndarray,
                      f_cls: torch.Tensor) -> AttentionCapture:
    """Run one forward pass capturing every self-attention map.

    ``cross_half_mass`` is computed at the deepest captured layer: the mean
    over UV-half query tokens of their total attention on reference-half
    key tokens.
    """
    mods = net.attention_modules()
    if not mods:
        raise DiffusionError("network has no attention blocks")
    records: list = []
    for m in mods:
        m.capture = records
    try:
        denoise_forward(net, f_in, f_cls)
    finally:
        for m in mods:
            m.capture = None
    layers = [(shape, attn[0].numpy()) for shape, attn in records]
    deepest = min(layers, key=lambda item: item[0][0] * item[0][1])
    return AttentionCapture(
        layers=layers,
        cross_half_mass=_uv_to_ref_mass(deepest[0], deepest[1]),
    )


# ---------------------------------------------------------------------------
# training


def precompute_latent_bank(manifest_path, codec, entries=None) -> dict:
    """Encode the whole dataset once: the per-step work then reduces to
    noising and concatenation. Matches assemble_train_input exactly."""
    if entries is None:
        entries = read_manifest(manifest_path)
    if not entries:
        raise DiffusionError("empty dataset manifest")
    x0s, conds, one_hots, labels = [], [], [], []
    for entry in entries:
        record = load_dataset_record(manifest_path, entry)
        s = record.sample
        f_ref, masked_block, position_block, mask_channel = _conditioning_blocks(
            s.reference_image, s.uv_position, s.uv_mask,
            _masked_content(s.uv_texture, s.uv_mask), codec)
        z_uv = codec.encode(s.uv_texture, role="uv")
        x0s.append(spatial_concat(z_uv, f_ref).data)
        conds.append(np.concatenate([masked_block, position_block, mask_channel], axis=0))
        one_hots.append(s.label.one_hot)
        labels.append(s.label.value)
    return {
        "x0": torch.from_numpy(np.stack(x0s)),
        "cond": torch.from_numpy(np.stack(conds).astype(np.float32)),
        "one_hot": torch.from_numpy(np.stack(one_hots)),
        "labels": labels,
    }


def train(manifest_path, codec, model_config: ModelConfig,
          train_config: TrainConfig, out_dir=None,
          log_callback=None) -> tuple[DenoiserNet, list[dict]]:
    """Noise-prediction training with MSE over both width-halves.

    Deterministic for fixed seeds with threads=1. Writes checkpoints and a
    loss log under ``out_dir`` when given.
    """
    torch.set_num_threads(max(1, train_config.threads))
    schedule = train_config.schedule()
    entries = read_manifest(manifest_path)
    if train_config.holdout > 0:
        if train_config.holdout >= len(entries):
            raise DiffusionError("holdout leaves no training samples")
        entries = entries[:-train_config.holdout]
    bank = precompute_latent_bank(manifest_path, codec, entries)
    x0_all, cond_all, onehot_all = bank["x0"], bank["cond"], bank["one_hot"]
    n = len(x0_all)

    torch.manual_seed(train_config.seed)
    net = DenoiserNet(model_config)
    net.train()
    gen = torch.Generator().manual_seed(train_config.seed)
    opt = torch.optim.Adam(net.parameters(), lr=train_config.learning_rate)
    ab = torch.from_numpy(schedule.alpha_bar.astype(np.float32))

    out_dir = Path(out_dir) if out_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
    log: list[dict] = []
    smooth = None
    for step in range(train_config.steps):
        idx = torch.randint(0, n, (train_config.batch_size,), generator=gen)
        t = torch.randint(1, schedule.timesteps + 1, (train_config.batch_size,),
                          generator=gen)
        x0 = x0_all[idx]
        eps = torch.randn(x0.shape, generator=gen)
        a = ab[t][:, None, None, None]
        x_t = torch.sqrt(a) * x0 + torch.sqrt(1.0 - a) * eps
        f_in = torch.cat([x_t, cond_all[idx]], dim=1)
        emb = net.fuse(onehot_all[idx], net.timestep_embedding(t))
        eps_hat = net(f_in, emb)
        loss = torch.mean((eps_hat - eps) ** 2)
        if not torch.isfinite(loss):
            raise NumericError(
                f"non-finite loss at step {step}: "
                f"|x_t|max={float(x_t.abs().max()):.3g} t={t.tolist()}")
        opt.zero_grad()
        loss.backward()
        if train_config.grad_clip > 0:
            torch.nn.utils.clip_grad_norm_(net.parameters(), train_config.grad_clip)
        opt.step()
        value = float(loss.detach())
        smooth = value if smooth is None else 0.98 * smooth + 0.02 * value
        if step % train_config.log_every == 0 or step == train_config.steps - 1:
            rec = {"step": step, "loss": value, "smoothed": smooth}
            log.append(rec)
            if log_callback:
                log_callback(rec)
        if (out_dir is not None and train_config.checkpoint_every
                and (step + 1) % train_config.checkpoint_every == 0
                and step + 1 < train_config.steps):
            save_checkpoint(out_dir / f"denoiser_{step + 1:07d}.uvpc", net,
                            train_config, step + 1)
    net.eval()
    if out_dir is not None:
        save_checkpoint(out_dir / "denoiser.uvpc", net, train_config,
                        train_config.steps)
        with open(out_dir / "loss_log.jsonl", "w", encoding="utf-8") as fh:
            for rec in log:
                fh.write(json.dumps(rec, sort_keys=True) + "\n")
    return net, log


# ---------------------------------------------------------------------------
# checkpoints


def _config_hash(model_config: ModelConfig, train_config: TrainConfig) -> str:
    blob = json.dumps({"model": asdict(model_config), "train": asdict(train_config)},
                      sort_keys=True, default=list).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def save_checkpoint(path, net: DenoiserNet, train_config: TrainConfig,
                    step: int) -> str:
    meta = {
        "kind": "denoiser",
        "model": asdict(net.config),
        "train": asdict(train_config),
        "step": step,
        "config_hash": _config_hash(net.config, train_config),
    }
    tensors = {k: v.detach().numpy() for k, v in net.state_dict().items()}
    return tensorio.save_container(path, meta, tensors)


def load_checkpoint(path) -> tuple[DenoiserNet, dict]:
    meta, tensors, digest = tensorio.load_container(path)
    if meta.get("kind") != "denoiser":
        raise DiffusionError(f"{path} is not a denoiser checkpoint")
    model_meta = dict(meta["model"])
    for key in ("level_mults", "attention_levels"):
        model_meta[key] = tuple(model_meta[key])
    net = DenoiserNet(ModelConfig(**model_meta))
    net.load_state_dict({k: torch.from_numpy(v) for k, v in tensors.items()})
    net.eval()
    meta["content_hash"] = digest
    return net, meta
