"""Float image grids with declared channel semantics and value range."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# semantics tag -> (channels, (lo, hi))
SEMANTICS = {
    "rgb": (3, (0.0, 1.0)),
    "xyz": (3, (-1.0, 1.0)),
    "mask": (1, (0.0, 1.0)),
}


class GridError(ValueError):
    pass


@dataclass(frozen=True)
class ImageGrid:
    """H x W x C grid of float32 values with a semantics tag.

    ``data`` is stored as (H, W, C); row r covers the v-interval
    [r/H, (r+1)/H] so array index order matches UV order directly.
    """

    data: np.ndarray = field(repr=False)
    semantics: str = "rgb"

    def __post_init__(self):
        if self.semantics not in SEMANTICS:
            raise GridError(f"unknown semantics tag {self.semantics!r}")
        channels, (lo, hi) = SEMANTICS[self.semantics]
        arr = np.asarray(self.data)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        if arr.ndim != 3 or arr.shape[2] != channels:
            raise GridError(
                f"{self.semantics} grid needs shape (H, W, {channels}), got {arr.shape}"
            )
        if arr.dtype != np.float32:
            arr = arr.astype(np.float32)
        if not np.all(np.isfinite(arr)):
            raise GridError("grid contains non-finite values")
        if arr.size and (arr.min() < lo or arr.max() > hi):
            raise GridError(
                f"{self.semantics} values outside [{lo}, {hi}]: "
                f"range [{arr.min():.4g}, {arr.max():.4g}]"
            )
        if self.semantics == "mask":
            binary = (arr == 0.0) | (arr == 1.0)
            if not binary.all():
                raise GridError("mask values must be exactly 0.0 or 1.0")
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @property
    def value_range(self) -> tuple[float, float]:
        return SEMANTICS[self.semantics][1]

    def to_unit(self) -> np.ndarray:
        """Map data into [0, 1] using the declared range (identity for rgb/mask)."""
        lo, hi = self.value_range
        if (lo, hi) == (0.0, 1.0):
            return self.data
        return (self.data - lo) / (hi - lo)

    @classmethod
    def from_unit(cls, unit: np.ndarray, semantics: str) -> "ImageGrid":
        """Inverse of :meth:`to_unit`; clamps to the declared range."""
        lo, hi = SEMANTICS[semantics][1]
        arr = np.asarray(unit, dtype=np.float32)
        if (lo, hi) != (0.0, 1.0):
            arr = arr * (hi - lo) + lo
        arr = np.clip(arr, lo, hi)
        if semantics == "mask":
            arr = (arr >= 0.5).astype(np.float32)
        return cls(arr, semantics)

    @classmethod
    def constant(cls, height: int, width: int, value, semantics: str = "rgb") -> "ImageGrid":
        channels = SEMANTICS[semantics][0]
        arr = np.empty((height, width, channels), dtype=np.float32)
        arr[:] = np.asarray(value, dtype=np.float32)
        return cls(arr, semantics)
