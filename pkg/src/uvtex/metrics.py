"""Texture quality metrics: seam consistency, reference alignment, patch stats."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import Mesh, build_seam_edges, seam_edge_endpoints
from .grids import ImageGrid
from .rasterizer import sample_texture
from .synthdata import SampleRecord, field_from_spec

# distance of the two sampling rails from the seam edge, in texels; values
# on the edge itself are linearly extrapolated from the rails so chart
# borders never bleed background into the comparison. A full-texel near
# inset is the minimum that keeps the bilinear footprint on covered texels
# for any sub-texel placement of the chart edge.
SEAM_INSET_NEAR = 1.0
SEAM_INSET_FAR = 2.0
SEAM_SAMPLES_PER_EDGE = 16


@dataclass(frozen=True)
class SeamReport:
    applicable: bool
    mean: float | None = None
    max: float | None = None
    pair_count: int = 0


def _edge_rail_samples(texture: ImageGrid, mesh: Mesh, face: int, edge: int,
                       uv_seg: np.ndarray, n_samples: int) -> np.ndarray:
    """Extrapolated on-edge colors for one side of a seam, (n_samples, C)."""
    h, w = texture.height, texture.width
    scale = np.array([w, h], dtype=np.float64)
    p0 = uv_seg[0] * scale
    p1 = uv_seg[1] * scale
    third = mesh.uvs[mesh.faces[face, (edge + 2) % 3, 1]] * scale
    d = p1 - p0
    norm = np.linalg.norm(d)
    if norm == 0.0:
        raise ValueError("degenerate seam edge")
    d = d / norm
    n = np.array([-d[1], d[0]])
    if np.dot(n, third - p0) < 0:
        n = -n
    s = (np.arange(n_samples) + 0.5) / n_samples
    base = p0[None, :] + s[:, None] * (p1 - p0)[None, :]
    near = (base + n * SEAM_INSET_NEAR) / scale
    far = (base + n * SEAM_INSET_FAR) / scale
    v_near = sample_texture(texture, np.clip(near, 0.0, 1.0))
    v_far = sample_texture(texture, np.clip(far, 0.0, 1.0))
    k = SEAM_INSET_NEAR / (SEAM_INSET_FAR - SEAM_INSET_NEAR)
    lo, hi = texture.value_range
    return np.clip(v_near + (v_near - v_far) * k, lo, hi)


def seam_consistency(texture: ImageGrid, mesh: Mesh,
                     samples_per_edge: int = SEAM_SAMPLES_PER_EDGE) -> SeamReport:
    """Color discrepancy across UV seams, sampled at matched 3D parameters.

    For every seam pair both UV edges are sampled at the same arc-length
    parameters (aligned by their shared 3D endpoints) and compared in
    euclidean RGB distance. Returns mean and max over all samples; a mesh
    without seams yields ``applicable=False`` rather than zero.
    """
    pairs = build_seam_edges(mesh)
    if not pairs:
        return SeamReport(applicable=False)
    diffs = []
    for pair in pairs:
        (fa, ea), (fb, eb) = pair
        uv_a, uv_b = seam_edge_endpoints(mesh, pair)
        va = _edge_rail_samples(texture, mesh, fa, ea, uv_a, samples_per_edge)
        vb = _edge_rail_samples(texture, mesh, fb, eb, uv_b, samples_per_edge)
        diffs.append(np.linalg.norm(va - vb, axis=-1))
    all_diffs = np.concatenate(diffs)
    return SeamReport(
        applicable=True,
        mean=float(all_diffs.mean()),
        max=float(all_diffs.max()),
        pair_count=len(pairs),
    )


# ---------------------------------------------------------------------------
# reference alignment


@dataclass(frozen=True)
class RefAlignment:
    class_match: bool
    color_error: float                 # against the labeled garment's field
    distractor_error: float | None     # against the distractor's field
    target_distance: float             # full feature distance, labeled style
    distractor_distance: float | None


def _masked_features(values: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """(mean rgb, std rgb, mean gradient magnitude) over masked pixels."""
    sel = values[mask]
    mean = sel.mean(axis=0)
    std = sel.std(axis=0)
    lum = values.mean(axis=2)
    gx = np.abs(np.diff(lum, axis=1))
    gy = np.abs(np.diff(lum, axis=0))
    mx = mask[:, 1:] & mask[:, :-1]
    my = mask[1:, :] & mask[:-1, :]
    grads = np.concatenate([gx[mx], gy[my]])
    g = grads.mean() if grads.size else 0.0
    return np.concatenate([mean, std, [g]])


def ref_alignment(generated: ImageGrid, record: SampleRecord) -> RefAlignment:
    """Does the generated texture carry the labeled garment's style?

    The candidate styles (labeled garment's and distractor's) are rendered
    onto the sample's own baked positions, then matched by masked-region
    statistics; ``color_error`` is the mean-color distance to each
    candidate.
    """
    sample = record.sample
    mask = sample.uv_mask.data[:, :, 0] > 0.5
    if not mask.any():
        raise ValueError("sample mask is empty")
    pos = sample.uv_position.data.astype(np.float64)

    def candidate_texture(style) -> np.ndarray:
        colors = np.clip(field_from_spec(style)(pos), 0.0, 1.0)
        return colors * mask[:, :, None]

    gen = generated.data.astype(np.float64)
    gen_feat = _masked_features(gen, mask)
    target_tex = candidate_texture(record.style)
    target_feat = _masked_features(target_tex, mask)
    target_distance = float(np.linalg.norm(gen_feat - target_feat))
    color_error = float(np.linalg.norm(
        gen[mask].mean(axis=0) - target_tex[mask].mean(axis=0)))

    if record.distractor_style is None:
        return RefAlignment(True, color_error, None, target_distance, None)

    dist_tex = candidate_texture(record.distractor_style)
    dist_feat = _masked_features(dist_tex, mask)
    dist_distance = float(np.linalg.norm(gen_feat - dist_feat))
    dist_color = float(np.linalg.norm(
        gen[mask].mean(axis=0) - dist_tex[mask].mean(axis=0)))
    return RefAlignment(
        class_match=target_distance <= dist_distance,
        color_error=color_error,
        distractor_error=dist_color,
        target_distance=target_distance,
        distractor_distance=dist_distance,
    )


# ---------------------------------------------------------------------------
# patch statistics distance

PATCH = 8
_GRAD_BINS = np.linspace(0.0, 0.5, 7)


def _patch_features(texture: ImageGrid, mask: ImageGrid | None) -> np.ndarray:
    """Per-patch (mean rgb, color covariance triangle, gradient histogram)."""
    data = texture.data.astype(np.float64)
    h, w = data.shape[:2]
    cover = None
    if mask is not None:
        cover = mask.data[:, :, 0] > 0.5
    feats = []
    iu = np.triu_indices(3)
    for r in range(0, h - PATCH + 1, PATCH):
        for c in range(0, w - PATCH + 1, PATCH):
            if cover is not None and cover[r:r + PATCH, c:c + PATCH].mean() < 0.5:
                continue
            patch = data[r:r + PATCH, c:c + PATCH].reshape(-1, 3)
            mean = patch.mean(axis=0)
            cov = np.cov(patch, rowvar=False, bias=True)[iu]
            lum = data[r:r + PATCH, c:c + PATCH].mean(axis=2)
            grad = np.concatenate([
                np.abs(np.diff(lum, axis=0)).ravel(),
                np.abs(np.diff(lum, axis=1)).ravel(),
            ])
            hist, _ = np.histogram(grad, bins=_GRAD_BINS)
            hist = hist / max(1, grad.size)
            feats.append(np.concatenate([mean, cov, hist]))
    return np.asarray(feats, dtype=np.float64)


@dataclass(frozen=True)
class EvalReport:
    """Aggregated held-out evaluation of one checkpoint."""

    n_samples: int
    seam_mean: float
    seam_max: float
    class_match_rate: float
    ref_color_error: float
    distractor_color_error: float
    patch_stats: float
    cross_half_mass: float
    attention_localization: float
    records: list = field(default_factory=list)

    def __post_init__(self):
        for name in ("seam_mean", "seam_max", "class_match_rate", "ref_color_error",
                     "patch_stats", "cross_half_mass", "attention_localization"):
            value = getattr(self, name)
            if not np.isfinite(value) or value < 0:
                raise ValueError(f"EvalReport.{name} must be finite and nonnegative")

    def summary(self) -> dict:
        return {
            "n_samples": self.n_samples,
            "seam_mean": self.seam_mean,
            "seam_max": self.seam_max,
            "class_match_rate": self.class_match_rate,
            "ref_color_error": self.ref_color_error,
            "distractor_color_error": self.distractor_color_error,
            "patch_stats": self.patch_stats,
            "cross_half_mass": self.cross_half_mass,
            "attention_localization": self.attention_localization,
        }


def _sqrt_trace(sa: np.ndarray, sb: np.ndarray) -> float:
    eig = np.linalg.eigvals(sa @ sb)
    return float(np.sqrt(np.clip(eig.real, 0.0, None)).sum())


def patch_stats_distance(set_a, set_b, masks_a=None, masks_b=None) -> float:
    """Fréchet distance between Gaussian fits of hand-crafted patch features.

    ``set_a``/``set_b`` are sequences of rgb ImageGrids; optional mask
    sequences restrict patches to mostly-covered regions. Exactly zero for
    identical inputs and symmetric under argument swap.
    """
    def pooled(textures, masks):
        if len(textures) < 2:
            raise ValueError("need at least 2 textures per set")
        masks = masks if masks is not None else [None] * len(textures)
        feats = [_patch_features(t, m) for t, m in zip(textures, masks)]
        pooled = np.concatenate([f for f in feats if f.size], axis=0)
        if len(pooled) < 2:
            raise ValueError("not enough covered patches for covariance")
        return pooled

    fa = pooled(set_a, masks_a)
    fb = pooled(set_b, masks_b)
    if fa.shape == fb.shape and np.array_equal(fa, fb):
        return 0.0
    mu_a, mu_b = fa.mean(axis=0), fb.mean(axis=0)
    sa = np.cov(fa, rowvar=False)
    sb = np.cov(fb, rowvar=False)
    gap = float(((mu_a - mu_b) ** 2).sum())
    # averaging both eigenvalue orders keeps the result exactly symmetric
    cross = 0.5 * (_sqrt_trace(sa, sb) + _sqrt_trace(sb, sa))
    trace_term = max(0.0, float(np.trace(sa) + np.trace(sb)) - 2.0 * cross)
    return gap + trace_term
