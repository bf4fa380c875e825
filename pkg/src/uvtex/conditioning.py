"""Assembly of the denoiser input tensor for training and inference.

Channel layout of the assembled input, in order:

    [0, C)      noised uv+reference latent (training) or pure noise (inference)
    [C, 2C)     masked-content block: kept texture content left, clean
                reference latent right
    [2C, 3C)    position block: position latent left, zeros right
    [3C]        generation mask, downsampled 8x, left half only

Widths are always 2x the single-map latent width: the UV side occupies the
left half, the reference side the right half.

The masked-content block encodes the texture with the generation region
removed (texture * (1 - mask)): the regions that must be preserved. With
the dataset's zero background fill and full-chart masks this is the
all-zero image during training, exactly matching the fresh-garment
inference condition; partial repainting passes preserved texels through.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .codec import LatentTensor
from .grids import ImageGrid
from .schedule import NoiseSchedule, add_noise
from .synthdata import Sample, TypeLabel


class ConditioningError(ValueError):
    pass


@dataclass(frozen=True)
class ConditioningBundle:
    """(3C+1) x h x 2w denoiser input plus the training target."""

    f_in: np.ndarray = field(repr=False)
    epsilon_target: np.ndarray | None = field(repr=False, default=None)
    t: int = 0
    label: TypeLabel | None = None

    def __post_init__(self):
        arr = np.asarray(self.f_in, dtype=np.float32)
        channels, h, w2 = arr.shape
        if (channels - 1) % 3 != 0:
            raise ConditioningError(f"channel count {channels} is not 3C+1")
        if w2 % 2 != 0:
            raise ConditioningError("width must be even (uv half + reference half)")
        c = (channels - 1) // 3
        w = w2 // 2
        if np.any(arr[2 * c:3 * c, :, w:] != 0.0):
            raise ConditioningError("position block reference half must be zero")
        if np.any(arr[3 * c, :, w:] != 0.0):
            raise ConditioningError("mask channel reference half must be zero")
        if self.epsilon_target is not None:
            tgt = np.asarray(self.epsilon_target, dtype=np.float32)
            if tgt.shape != (c, h, w2):
                raise ConditioningError(
                    f"epsilon target shape {tgt.shape} != {(c, h, w2)}"
                )
            object.__setattr__(self, "epsilon_target", tgt)
        object.__setattr__(self, "f_in", arr)

    @property
    def latent_channels(self) -> int:
        return (self.f_in.shape[0] - 1) // 3

    @property
    def half_width(self) -> int:
        return self.f_in.shape[2] // 2


def spatial_concat(a: LatentTensor, b: LatentTensor) -> LatentTensor:
    """Concatenate along width: ``a`` is the UV (left) half, ``b`` the
    reference (right) half."""
    if a.channels != b.channels or a.h != b.h:
        raise ConditioningError(
            f"latent shapes incompatible: {a.data.shape} vs {b.data.shape}"
        )
    return LatentTensor(np.concatenate([a.data, b.data], axis=2),
                        a.role, a.source_semantics)


def downsample_mask(mask: ImageGrid, factor: int = 8) -> np.ndarray:
    """Nearest-neighbor mask reduction at block centers; stays binary.

    Returns (1, H/factor, W/factor) float32 with values in {0, 1}.
    """
    if mask.semantics != "mask":
        raise ConditioningError("downsample_mask needs a mask grid")
    h, w = mask.height, mask.width
    if h % factor or w % factor:
        raise ConditioningError(f"mask dims {h}x{w} not divisible by {factor}")
    centers = factor // 2
    down = mask.data[centers::factor, centers::factor, 0]
    return down[None, :, :].astype(np.float32)


def _masked_content(texture: ImageGrid, mask: ImageGrid) -> ImageGrid:
    keep = texture.data * (1.0 - mask.data)
    return ImageGrid(keep, "rgb")


def _stack_blocks(noised: np.ndarray, masked: np.ndarray, position: np.ndarray,
                  mask_channel: np.ndarray) -> np.ndarray:
    return np.concatenate([noised, masked, position, mask_channel], axis=0,
                          dtype=np.float32)


def _conditioning_blocks(reference: ImageGrid, uv_position: ImageGrid,
                         uv_mask: ImageGrid, kept_texture: ImageGrid, codec):
    f_ref = codec.encode(reference, role="reference")
    z_m = codec.encode(kept_texture, role="masked")
    f_pos = codec.encode(uv_position, role="position")
    zeros = LatentTensor(np.zeros_like(f_pos.data), "zero", f_pos.source_semantics)
    masked_block = spatial_concat(z_m, f_ref).data
    position_block = spatial_concat(f_pos, zeros).data
    mask_ds = downsample_mask(uv_mask, codec.factor)
    mask_channel = np.concatenate([mask_ds, np.zeros_like(mask_ds)], axis=2)
    return f_ref, masked_block, position_block, mask_channel


def assemble_train_input(sample: Sample, codec, schedule: NoiseSchedule,
                         t: int, eps: np.ndarray) -> ConditioningBundle:
    """Training-time bundle: noise the uv+reference latent, attach conditions.

    ``eps`` must already have the concatenated shape (C, h, 2w); it is also
    the regression target.
    """
    t = schedule.check_t(t)
    f_ref, masked_block, position_block, mask_channel = _conditioning_blocks(
        sample.reference_image, sample.uv_position, sample.uv_mask,
        _masked_content(sample.uv_texture, sample.uv_mask), codec,
    )
    z_uv = codec.encode(sample.uv_texture, role="uv")
    x0 = spatial_concat(z_uv, f_ref).data
    eps = np.asarray(eps, dtype=np.float32)
    if eps.shape != x0.shape:
        raise ConditioningError(f"eps shape {eps.shape} != latent shape {x0.shape}")
    noised = add_noise(x0, eps, t, schedule).astype(np.float32)
    return ConditioningBundle(
        f_in=_stack_blocks(noised, masked_block, position_block, mask_channel),
        epsilon_target=eps,
        t=t,
        label=sample.label,
    )


def assemble_infer_input(reference: ImageGrid, uv_position: ImageGrid,
                         uv_mask: ImageGrid, background_texture: ImageGrid,
                         codec, eta: np.ndarray,
                         label: TypeLabel | None = None) -> ConditioningBundle:
    """Inference-time bundle: the noised block is pure noise ``eta``.

    ``background_texture`` holds whatever texture content must survive
    (constant background fill for a fresh garment; existing texels for a
    partial repaint); the generation region is removed before encoding.
    """
    shapes = {(g.height, g.width) for g in (reference, uv_position, uv_mask,
                                            background_texture)}
    if len(shapes) != 1:
        raise ConditioningError(f"input grids disagree on resolution: {shapes}")
    f_ref, masked_block, position_block, mask_channel = _conditioning_blocks(
        reference, uv_position, uv_mask,
        _masked_content(background_texture, uv_mask), codec,
    )
    eta = np.asarray(eta, dtype=np.float32)
    if eta.shape != masked_block.shape:
        raise ConditioningError(
            f"eta shape {eta.shape} != latent shape {masked_block.shape}"
        )
    return ConditioningBundle(
        f_in=_stack_blocks(eta, masked_block, position_block, mask_channel),
        epsilon_target=None,
        t=0,  # the sampler owns the actual timestep ladder
        label=label,
    )
