"""Reverse diffusion: DDIM (optionally ancestral) sampling of UV textures."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
import torch

from .errors import NumericError
from .codec import LatentTensor
from .conditioning import assemble_infer_input
from .diffusion import DenoiserNet
from .grids import ImageGrid
from .schedule import NoiseSchedule
from .synthdata import TypeLabel


class SamplerError(ValueError):
    pass


@dataclass(frozen=True)
class SampleConfig:
    steps: int = 50
    eta: float = 0.0              # 0 = deterministic DDIM
    seed: int = 0
    background_fill: float = 0.0
    ancestral: bool = False       # DDPM mode: full ladder, eta = 1

    def __post_init__(self):
        if self.steps < 1:
            raise SamplerError("steps must be >= 1")
        if not 0.0 <= self.eta <= 1.0:
            raise SamplerError("eta must lie in [0, 1]")


def ddim_step(x_t, eps_hat, t: int, t_prev: int, schedule: NoiseSchedule,
              eta: float = 0.0, noise=None):
    """One reverse update from t to t_prev (t > t_prev >= 0).

    eta = 0 is fully deterministic; eta = 1 over the full ladder matches
    ancestral sampling.
    """
    t = schedule.check_t(t)
    t_prev = schedule.check_t(t_prev)
    if not t > t_prev:
        raise SamplerError(f"need t > t_prev, got {t} <= {t_prev}")
    ab_t = float(schedule.alpha_bar[t])
    ab_p = float(schedule.alpha_bar[t_prev])
    x0_hat = (x_t - math.sqrt(1.0 - ab_t) * eps_hat) / math.sqrt(ab_t)
    sigma = 0.0
    if eta > 0.0:
        sigma = (eta * math.sqrt((1.0 - ab_p) / (1.0 - ab_t))
                 * math.sqrt(1.0 - ab_t / ab_p))
    dir_coef = math.sqrt(max(1.0 - ab_p - sigma * sigma, 0.0))
    x_prev = math.sqrt(ab_p) * x0_hat + dir_coef * eps_hat
    if sigma > 0.0:
        if noise is None:
            raise SamplerError("eta > 0 requires a noise draw")
        x_prev = x_prev + sigma * noise
    return x_prev


def timestep_ladder(timesteps: int, steps: int) -> list[int]:
    """Descending ladder from T to 0 with ``steps`` reverse updates."""
    if steps > timesteps:
        raise SamplerError(f"steps {steps} exceeds schedule length {timesteps}")
    ts = np.unique(np.round(np.linspace(0, timesteps, steps + 1)).astype(int))
    return [int(t) for t in ts[::-1]]


def sample(reference: ImageGrid, uv_position: ImageGrid, uv_mask: ImageGrid,
           label: TypeLabel, net: DenoiserNet, codec, schedule: NoiseSchedule,
           config: SampleConfig | None = None, eps_fn=None,
           background_texture: ImageGrid | None = None) -> ImageGrid:
    """Generate a UV texture for a fresh garment.

    Runs the reverse process from seeded noise over both width-halves,
    decodes the UV half, then composites: generated texels inside the mask,
    the configured constant fill outside (bit-exact). ``eps_fn(x, t)`` may
    replace the network, e.g. with an exact-noise oracle in tests.
    """
    config = config or SampleConfig()
    if config.ancestral:
        config = replace(config, steps=schedule.timesteps, eta=1.0)
    rng = np.random.default_rng(config.seed)
    c = codec.latent_channels
    h, w = codec.latent_shape(uv_mask.height, uv_mask.width)[1:]
    if background_texture is None:
        background_texture = ImageGrid.constant(
            uv_mask.height, uv_mask.width,
            (config.background_fill,) * 3, "rgb")
    eta_noise = rng.standard_normal((c, h, 2 * w)).astype(np.float32)
    bundle = assemble_infer_input(reference, uv_position, uv_mask,
                                  background_texture, codec, eta_noise, label)
    cond = torch.from_numpy(bundle.f_in[c:])[None]
    x = torch.from_numpy(bundle.f_in[:c]).to(torch.float64)

    one_hot = torch.from_numpy(label.one_hot)[None]
    net.eval()
    ladder = timestep_ladder(schedule.timesteps, config.steps)
    for t, t_prev in zip(ladder[:-1], ladder[1:]):
        if eps_fn is not None:
            eps_hat = torch.as_tensor(
                np.asarray(eps_fn(x.numpy(), t), dtype=np.float64))
        else:
            with torch.no_grad():
                f_in = torch.cat([x.to(torch.float32)[None], cond], dim=1)
                emb = net.fuse(one_hot, net.timestep_embedding(
                    torch.tensor([t], dtype=torch.float32)))
                eps_hat = net(f_in, emb)[0].to(torch.float64)
        if not torch.isfinite(x).all():
            raise NumericError(f"non-finite latent entering step t={t}")
        noise = None
        if config.eta > 0.0:
            noise = torch.from_numpy(
                rng.standard_normal(tuple(x.shape)))
        x = ddim_step(x, eps_hat, t, t_prev, schedule, config.eta, noise)
    if not torch.isfinite(x).all():
        raise NumericError("non-finite latent after final step")

    uv_latent = LatentTensor(
        x[:, :, :w].numpy().astype(np.float32), "uv", "rgb")
    decoded = np.clip(codec.decode(uv_latent), 0.0, 1.0).astype(np.float32)
    mask = uv_mask.data
    fill = np.float32(config.background_fill)
    out = np.where(mask > 0.5, decoded, fill)
    return ImageGrid(out, "rgb")
