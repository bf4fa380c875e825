"""Image <-> latent codecs at a fixed 8x spatial reduction.

Two interchangeable variants:

* ``lossless`` rearranges 8x8 pixel blocks into channels (space-to-depth),
  C = 64 * image channels. Exactly invertible, used to verify every
  downstream contract with zero codec error. An optional fixed orthonormal
  channel mix is available but off by default (it costs bit-exactness).
* ``learned`` is a small strided convolutional autoencoder compressing to
  C = 4 channels, trained on dataset textures, references, and position
  maps with plain MSE.

Both operate on the grid's unit-range representation, so position maps
run through the same code path as rgb images.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace

import numpy as np
import torch
from torch import nn

from .errors import NumericError
from .grids import SEMANTICS, ImageGrid
from . import tensorio

LATENT_ROLES = ("uv", "reference", "position", "masked", "noise", "zero")


class CodecError(ValueError):
    pass


@dataclass(frozen=True)
class LatentTensor:
    """C x h x w float32 latent with provenance and source semantics."""

    data: np.ndarray = field(repr=False)
    role: str = "uv"
    source_semantics: str = "rgb"

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float32)
        if arr.ndim != 3:
            raise CodecError(f"latent must be (C, h, w), got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise CodecError("latent contains non-finite values")
        if self.role not in LATENT_ROLES:
            raise CodecError(f"unknown latent role {self.role!r}")
        if self.source_semantics not in SEMANTICS:
            raise CodecError(f"unknown semantics {self.source_semantics!r}")
        object.__setattr__(self, "data", arr)

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def h(self) -> int:
        return self.data.shape[1]

    @property
    def w(self) -> int:
        return self.data.shape[2]

    def with_role(self, role: str) -> "LatentTensor":
        return LatentTensor(self.data, role, self.source_semantics)


@dataclass(frozen=True)
class CodecConfig:
    variant: str = "learned"
    channels: int = 4            # learned-latent channels; lossless derives its own
    factor: int = 8
    mix_channels: bool = False   # lossless only; True trades bit-exactness for mixing
    width: int = 24              # learned encoder base width
    steps: int = 1500
    batch_size: int = 16
    learning_rate: float = 3e-3
    seed: int = 0
    holdout_fraction: float = 0.1
    edge_gain: float = 6.0       # extra loss weight on high-gradient pixels

    def __post_init__(self):
        if self.variant not in ("lossless", "learned"):
            raise CodecError(f"unknown codec variant {self.variant!r}")
        if self.factor < 1 or self.channels < 1:
            raise CodecError("factor and channels must be positive")

    def content_hash(self) -> str:
        blob = json.dumps(self.__dict__, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


class LosslessCodec:
    """Space-to-depth codec; decode(encode(x)) is bit-exact when unmixed."""

    variant = "lossless"

    def __init__(self, config: CodecConfig | None = None):
        cfg = config or CodecConfig(variant="lossless")
        if cfg.variant != "lossless":
            raise CodecError("config variant mismatch")
        self.config = cfg
        self.factor = cfg.factor
        self._mix = None
        if cfg.mix_channels:
            rng = np.random.default_rng(cfg.seed)
            base = rng.standard_normal((self.latent_channels, self.latent_channels))
            q, _ = np.linalg.qr(base)
            self._mix = q.astype(np.float32)

    @property
    def latent_channels(self) -> int:
        return 3 * self.factor * self.factor

    def latent_shape(self, height: int, width: int) -> tuple[int, int, int]:
        return (self.latent_channels, height // self.factor, width // self.factor)

    def encode(self, grid: ImageGrid, role: str = "uv") -> LatentTensor:
        f = self.factor
        if grid.height % f or grid.width % f:
            raise CodecError(f"dimensions must be divisible by {f}")
        unit = grid.to_unit()
        if unit.shape[2] == 1:
            unit = np.repeat(unit, 3, axis=2)
        h, w = unit.shape[0] // f, unit.shape[1] // f
        blocks = unit.reshape(h, f, w, f, 3).transpose(1, 3, 4, 0, 2)
        latent = blocks.reshape(self.latent_channels, h, w)
        if self._mix is not None:
            latent = np.tensordot(self._mix, latent, axes=(1, 0))
        return LatentTensor(latent, role, grid.semantics)

    def decode(self, latent: LatentTensor) -> np.ndarray:
        """Raw decode to (H, W, 3) in the source semantics range, unclamped."""
        f = self.factor
        data = latent.data
        if data.shape[0] != self.latent_channels:
            raise CodecError(
                f"latent has {data.shape[0]} channels, codec expects {self.latent_channels}"
            )
        if self._mix is not None:
            data = np.tensordot(self._mix.T, data, axes=(1, 0))
        h, w = data.shape[1], data.shape[2]
        blocks = data.reshape(f, f, 3, h, w).transpose(3, 0, 4, 1, 2)
        unit = blocks.reshape(h * f, w * f, 3)
        lo, hi = SEMANTICS[latent.source_semantics][1]
        if (lo, hi) == (0.0, 1.0):
            return unit.copy()
        return unit * (hi - lo) + lo

    def decode_grid(self, latent: LatentTensor) -> ImageGrid:
        """Decode and clamp into a valid grid (the persistence-side path)."""
        arr = self.decode(latent)
        lo, hi = SEMANTICS[latent.source_semantics][1]
        return ImageGrid(np.clip(arr, lo, hi), latent.source_semantics)


def _res_block(ch: int) -> nn.Module:
    class Block(nn.Module):
        def __init__(self):
            super().__init__()
            self.norm1 = nn.GroupNorm(8, ch)
            self.conv1 = nn.Conv2d(ch, ch, 3, padding=1)
            self.norm2 = nn.GroupNorm(8, ch)
            self.conv2 = nn.Conv2d(ch, ch, 3, padding=1)

        def forward(self, x):
            h = self.conv1(torch.nn.functional.silu(self.norm1(x)))
            h = self.conv2(torch.nn.functional.silu(self.norm2(h)))
            return x + h

    return Block()


class _AutoencoderNet(nn.Module):
    # pixel-unshuffle stem keeps full-resolution compute trivial, and the
    # sub-pixel (pixel-shuffle) decoder places sharp chart edges at
    # arbitrary sub-cell positions, which dominates PSNR on UV textures
    def __init__(self, latent_channels: int, width: int):
        super().__init__()
        w1, w2, w3 = width, width * 2, width * 3
        self.encoder = nn.Sequential(
            nn.PixelUnshuffle(2),                 # 12 @ H/2
            nn.Conv2d(12, w1, 3, padding=1),
            _res_block(w1),
            nn.PixelUnshuffle(2),                 # 4*w1 @ H/4
            nn.Conv2d(4 * w1, w2, 3, padding=1),
            _res_block(w2),
            nn.PixelUnshuffle(2),                 # 4*w2 @ H/8
            nn.Conv2d(4 * w2, w3, 3, padding=1),
            _res_block(w3),
            nn.GroupNorm(8, w3),
            nn.SiLU(),
            nn.Conv2d(w3, latent_channels, 3, padding=1),
        )
        self.decoder = nn.Sequential(
            nn.Conv2d(latent_channels, w3, 3, padding=1),
            _res_block(w3),
            nn.Conv2d(w3, 4 * w2, 3, padding=1),
            nn.PixelShuffle(2),                   # w2 @ H/4
            _res_block(w2),
            nn.Conv2d(w2, 4 * w1, 3, padding=1),
            nn.PixelShuffle(2),                   # w1 @ H/2
            _res_block(w1),
            nn.GroupNorm(8, w1),
            nn.SiLU(),
            nn.Conv2d(w1, 12, 3, padding=1),
            nn.PixelShuffle(2),                   # 3 @ H
        )


class LearnedCodec:
    """Strided conv autoencoder to C latent channels at factor 8."""

    variant = "learned"

    def __init__(self, config: CodecConfig | None = None, latent_scale: float = 1.0,
                 trained_steps: int = 0):
        cfg = config or CodecConfig(variant="learned")
        if cfg.variant != "learned":
            raise CodecError("config variant mismatch")
        if cfg.factor != 8:
            raise CodecError("learned codec is built for factor 8")
        self.config = cfg
        self.factor = cfg.factor
        self.latent_scale = float(latent_scale)
        self.trained_steps = int(trained_steps)
        torch.manual_seed(cfg.seed)
        self.net = _AutoencoderNet(cfg.channels, cfg.width)
        self.net.eval()

    @property
    def latent_channels(self) -> int:
        return self.config.channels

    def latent_shape(self, height: int, width: int) -> tuple[int, int, int]:
        return (self.latent_channels, height // self.factor, width // self.factor)

    def _encode_tensor(self, unit_chw: torch.Tensor) -> torch.Tensor:
        return self.net.encoder(unit_chw) * self.latent_scale

    def _decode_tensor(self, latent: torch.Tensor) -> torch.Tensor:
        return self.net.decoder(latent / self.latent_scale)

    def encode(self, grid: ImageGrid, role: str = "uv") -> LatentTensor:
        f = self.factor
        if grid.height % f or grid.width % f:
            raise CodecError(f"dimensions must be divisible by {f}")
        unit = grid.to_unit()
        if unit.shape[2] == 1:
            unit = np.repeat(unit, 3, axis=2)
        with torch.no_grad():
            x = torch.from_numpy(np.ascontiguousarray(unit.transpose(2, 0, 1)))[None]
            z = self._encode_tensor(x)[0].numpy()
        return LatentTensor(z, role, grid.semantics)

    def decode(self, latent: LatentTensor) -> np.ndarray:
        if latent.channels != self.latent_channels:
            raise CodecError(
                f"latent has {latent.channels} channels, codec expects {self.latent_channels}"
            )
        with torch.no_grad():
            z = torch.from_numpy(latent.data)[None]
            unit = self._decode_tensor(z)[0].numpy().transpose(1, 2, 0)
        lo, hi = SEMANTICS[latent.source_semantics][1]
        if (lo, hi) == (0.0, 1.0):
            return unit
        return unit * (hi - lo) + lo

    def decode_grid(self, latent: LatentTensor) -> ImageGrid:
        arr = self.decode(latent)
        lo, hi = SEMANTICS[latent.source_semantics][1]
        return ImageGrid(np.clip(arr, lo, hi), latent.source_semantics)

    def save(self, path) -> str:
        meta = {
            "kind": "codec",
            "variant": self.variant,
            "config": self.config.__dict__,
            "config_hash": self.config.content_hash(),
            "latent_scale": self.latent_scale,
            "trained_steps": self.trained_steps,
        }
        tensors = {k: v.detach().numpy() for k, v in self.net.state_dict().items()}
        return tensorio.save_container(path, meta, tensors)


def save_codec(codec, path) -> str:
    if isinstance(codec, LosslessCodec):
        meta = {
            "kind": "codec",
            "variant": "lossless",
            "config": codec.config.__dict__,
            "config_hash": codec.config.content_hash(),
        }
        return tensorio.save_container(path, meta, {})
    return codec.save(path)


def load_codec(path):
    meta, tensors, _ = tensorio.load_container(path)
    if meta.get("kind") != "codec":
        raise CodecError(f"{path} is not a codec checkpoint")
    cfg = CodecConfig(**meta["config"])
    if meta["variant"] == "lossless":
        return LosslessCodec(cfg)
    codec = LearnedCodec(cfg, latent_scale=meta.get("latent_scale", 1.0),
                         trained_steps=meta.get("trained_steps", 0))
    state = {k: torch.from_numpy(v) for k, v in tensors.items()}
    codec.net.load_state_dict(state)
    codec.net.eval()
    return codec


def make_codec(config: CodecConfig):
    if config.variant == "lossless":
        return LosslessCodec(config)
    return LearnedCodec(config)


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    mse = float(np.mean((np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)) ** 2))
    if mse == 0.0:
        return float("inf")
    return -10.0 * np.log10(mse)


def _edge_weighted(err2: torch.Tensor, target: torch.Tensor,
                   edge_gain: float) -> torch.Tensor:
    if edge_gain <= 0:
        return err2.mean()
    with torch.no_grad():
        lum = target.mean(dim=1, keepdim=True)
        gx = torch.zeros_like(lum)
        gy = torch.zeros_like(lum)
        gx[:, :, :, 1:] = (lum[:, :, :, 1:] - lum[:, :, :, :-1]).abs()
        gy[:, :, 1:, :] = (lum[:, :, 1:, :] - lum[:, :, :-1, :]).abs()
        edges = ((gx + gy) > 0.02).float()
        edges = torch.nn.functional.max_pool2d(edges, 3, stride=1, padding=1)
        weight = 1.0 + edge_gain * edges
    return (err2 * weight).sum() / (weight.sum() * err2.shape[1])


def _dataset_unit_images(manifest_path) -> tuple[np.ndarray, list[str]]:
    """All codec training images (texture, reference, position) in unit range."""
    from .synthdata import load_dataset_record, read_manifest

    entries = read_manifest(manifest_path)
    if not entries:
        raise CodecError("empty dataset manifest")
    images, domains = [], []
    for entry in entries:
        record = load_dataset_record(manifest_path, entry)
        s = record.sample
        for grid, domain in ((s.uv_texture, "texture"),
                             (s.reference_image, "reference"),
                             (s.uv_position, "position")):
            images.append(grid.to_unit().transpose(2, 0, 1))
            domains.append(domain)
    return np.asarray(images, dtype=np.float32), domains


def train_codec(manifest_path, config: CodecConfig | None = None,
                log_callback=None) -> tuple[LearnedCodec, list[dict]]:
    """Train the learned codec on a dataset manifest.

    Returns (codec, log records). Deterministic for a fixed config seed in
    single-threaded mode; latents are rescaled to unit variance afterwards.
    """
    cfg = config or CodecConfig(variant="learned")
    if cfg.variant != "learned":
        raise CodecError("train_codec requires the learned variant")
    images, domains = _dataset_unit_images(manifest_path)
    n_hold = max(1, int(len(images) * cfg.holdout_fraction))
    train_x = torch.from_numpy(images[:-n_hold])
    if len(train_x) == 0:
        raise CodecError("dataset too small for the holdout split")

    codec = LearnedCodec(cfg)
    codec.net.train()
    gen = torch.Generator().manual_seed(cfg.seed)
    opt = torch.optim.Adam(codec.net.parameters(), lr=cfg.learning_rate)
    sched = torch.optim.lr_scheduler.CosineAnnealingLR(opt, T_max=cfg.steps)
    log: list[dict] = []
    smooth = None
    for step in range(cfg.steps):
        idx = torch.randint(0, len(train_x), (cfg.batch_size,), generator=gen)
        batch = train_x[idx]
        recon = codec.net.decoder(codec.net.encoder(batch))
        err2 = (recon - batch) ** 2
        loss = torch.mean(err2)
        if not torch.isfinite(loss):
            raise NumericError(f"non-finite codec loss at step {step}")
        opt.zero_grad()
        # optimize an edge-weighted objective: chart borders dominate the
        # reconstruction error at this compression rate
        _edge_weighted(err2, batch, cfg.edge_gain).backward()
        opt.step()
        sched.step()
        value = float(loss.detach())
        smooth = value if smooth is None else 0.98 * smooth + 0.02 * value
        if step % 50 == 0 or step == cfg.steps - 1:
            rec = {"step": step, "loss": value, "smoothed": smooth}
            log.append(rec)
            if log_callback:
                log_callback(rec)
    codec.net.eval()
    with torch.no_grad():
        z = codec.net.encoder(train_x[: min(len(train_x), 64)])
        std = float(z.std())
    codec.latent_scale = 1.0 / std if std > 0 else 1.0
    codec.trained_steps = cfg.steps
    return codec, log


def evaluate_codec(codec, manifest_path) -> dict:
    """Holdout PSNR per domain (texture / reference / position)."""
    images, domains = _dataset_unit_images(manifest_path)
    cfg = codec.config
    n_hold = max(1, int(len(images) * cfg.holdout_fraction))
    hold = images[-n_hold:]
    hold_domains = domains[-n_hold:]
    by_domain: dict[str, list[float]] = {}
    with torch.no_grad():
        x = torch.from_numpy(hold)
        recon = codec.net.decoder(codec.net.encoder(x)).numpy()
    for i, domain in enumerate(hold_domains):
        by_domain.setdefault(domain, []).append(psnr(hold[i], recon[i]))
    return {k: float(np.mean(v)) for k, v in sorted(by_domain.items())}
