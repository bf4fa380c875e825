"""Software rasterizer: UV-space attribute baking and orthographic rendering.

Conventions shared by every routine here:

* pixel (row r, col c) has its center at continuous coordinates
  (c + 0.5, r + 0.5) in the grid's own pixel space;
* coverage uses a top-left style fill rule: a pixel is covered when its
  center is strictly inside the triangle, or on an edge that the triangle
  owns (edges pointing downward in row order, or leftward when exactly
  horizontal). Shared edges between adjacent triangles are owned by
  exactly one side, so charts tile without gaps or double coverage;
* all loops are deterministic: outputs are bit-identical across runs and
  across the row-band partitioning used by the optional thread pool.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .geometry import Mesh
from .grids import ImageGrid


class RasterError(ValueError):
    pass


class UVOverlapError(RasterError):
    def __init__(self, face_pairs: list[tuple[int, int]]):
        self.face_pairs = face_pairs
        shown = ", ".join(f"{a}&{b}" for a, b in face_pairs[:8])
        more = "" if len(face_pairs) <= 8 else f" (+{len(face_pairs) - 8} more)"
        super().__init__(f"uv charts overlap: faces {shown}{more}")


@dataclass(frozen=True)
class Camera:
    """Orthographic front/back view; extent is the half-width of the frustum."""

    view: str = "front"
    extent: float = 1.0

    def __post_init__(self):
        if self.view not in ("front", "back"):
            raise RasterError(f"unknown view {self.view!r}")
        if not self.extent > 0:
            raise RasterError("camera extent must be positive")

    def project(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Map world points to (screen_xy in [-extent, extent]^2, depth key).

        Larger depth key means closer to the camera. The back view mirrors
        the x axis so the two views are exact mirrors of each other.
        """
        p = np.asarray(points, dtype=np.float64)
        if self.view == "front":
            xy = p[..., [0, 1]].copy()
            depth = p[..., 2].copy()
        else:
            xy = p[..., [0, 1]].copy()
            xy[..., 0] = -xy[..., 0]
            depth = -p[..., 2]
        return xy, depth


def _edge_owner(px: float, py: float, qx: float, qy: float) -> bool:
    dy = qy - py
    dx = qx - px
    return dy < 0.0 or (dy == 0.0 and dx < 0.0)


def _triangle_coverage(tri: np.ndarray, width: int, height: int,
                       row_lo: int, row_hi: int):
    """Covered pixels of one triangle within rows [row_lo, row_hi).

    ``tri`` is (3, 2) vertex coordinates in pixel space. Returns
    (rows, cols, w0, w1, w2) with barycentric weights in the original
    vertex order, or None when nothing is covered.

    Each edge function is evaluated with its endpoints in a canonical
    (lexicographic) order, so two triangles sharing an edge see exactly
    negated values and the ownership tie-break assigns every on-edge pixel
    to exactly one of them, regardless of rounding.
    """
    v0, v1, v2 = tri
    area2 = (v1[0] - v0[0]) * (v2[1] - v0[1]) - (v2[0] - v0[0]) * (v1[1] - v0[1])
    if area2 == 0.0:
        return None
    ori = 1.0 if area2 > 0.0 else -1.0

    xs = (v0[0], v1[0], v2[0])
    ys = (v0[1], v1[1], v2[1])
    c_lo = max(int(np.floor(min(xs) - 0.5)), 0)
    c_hi = min(int(np.ceil(max(xs) - 0.5)) + 1, width)
    r_lo = max(int(np.floor(min(ys) - 0.5)), row_lo)
    r_hi = min(int(np.ceil(max(ys) - 0.5)) + 1, row_hi)
    if c_lo >= c_hi or r_lo >= r_hi:
        return None

    cols = np.arange(c_lo, c_hi, dtype=np.int64)
    rows = np.arange(r_lo, r_hi, dtype=np.int64)
    px = cols[None, :] + 0.5
    py = rows[:, None] + 0.5

    def edge(p, q):
        # canonical endpoint order keeps the rounded value identical for
        # the neighboring triangle traversing q -> p
        flip = (q[0], q[1]) < (p[0], p[1])
        a, b = (q, p) if flip else (p, q)
        value = (b[0] - a[0]) * (py - a[1]) - (b[1] - a[1]) * (px - a[0])
        sign = -ori if flip else ori
        value = value * sign
        # effective direction of this edge in the CCW-oriented triangle
        dp, dq = (q, p) if ori < 0 else (p, q)
        if _edge_owner(dp[0], dp[1], dq[0], dq[1]):
            return value >= 0.0, value
        return value > 0.0, value

    # edge k lies opposite vertex k
    in0, e0 = edge(v1, v2)
    in1, e1 = edge(v2, v0)
    in2, e2 = edge(v0, v1)
    covered = in0 & in1 & in2
    if not covered.any():
        return None
    rr, cc = np.nonzero(covered)
    inv = 1.0 / abs(area2)
    w0 = e0[rr, cc] * inv
    w1 = e1[rr, cc] * inv
    w2 = e2[rr, cc] * inv
    return rows[rr], cols[cc], w0, w1, w2


def _bake_band(mesh: Mesh, resolution: int, row_lo: int, row_hi: int,
               xyz: np.ndarray, mask: np.ndarray, owner: np.ndarray):
    face_uvs = mesh.face_uvs() * resolution
    face_pos = mesh.face_positions()
    overlaps: list[tuple[int, int]] = []
    for f in range(len(face_uvs)):
        hit = _triangle_coverage(face_uvs[f], resolution, resolution, row_lo, row_hi)
        if hit is None:
            continue
        rows, cols, w0, w1, w2 = hit
        prev = owner[rows, cols]
        if (prev >= 0).any():
            for p in np.unique(prev[prev >= 0]):
                overlaps.append((int(p), f))
            keep = prev < 0
            rows, cols = rows[keep], cols[keep]
            w0, w1, w2 = w0[keep], w1[keep], w2[keep]
        p0, p1, p2 = face_pos[f]
        pts = w0[:, None] * p0 + w1[:, None] * p1 + w2[:, None] * p2
        xyz[rows, cols] = pts.astype(np.float32)
        mask[rows, cols] = 1.0
        owner[rows, cols] = f
    return overlaps


def bake_position_map(mesh: Mesh, resolution: int,
                      threads: int = 1) -> tuple[ImageGrid, ImageGrid]:
    """Bake normalized surface positions into UV space.

    Returns (position grid, coverage mask). Every covered pixel center holds
    the barycentric interpolation of its triangle's positions; uncovered
    pixels are zero. Two triangles claiming the same pixel raise
    :class:`UVOverlapError`.
    """
    if resolution <= 0:
        raise RasterError("resolution must be positive")
    pos = mesh.positions
    if pos.size and (pos.min() < -1.0 - 1e-9 or pos.max() > 1.0 + 1e-9):
        raise RasterError("mesh must be normalized to [-1, 1] before baking")
    xyz = np.zeros((resolution, resolution, 3), dtype=np.float32)
    mask = np.zeros((resolution, resolution, 1), dtype=np.float32)
    owner = np.full((resolution, resolution), -1, dtype=np.int32)

    if threads <= 1:
        overlaps = _bake_band(mesh, resolution, 0, resolution, xyz, mask, owner)
    else:
        bands = np.linspace(0, resolution, threads + 1, dtype=np.int64)
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = [
                pool.submit(_bake_band, mesh, resolution, int(bands[i]),
                            int(bands[i + 1]), xyz, mask, owner)
                for i in range(threads)
            ]
            overlaps = [pair for fut in futures for pair in fut.result()]
    if overlaps:
        raise UVOverlapError(sorted(set(overlaps)))
    np.clip(xyz, -1.0, 1.0, out=xyz)
    return ImageGrid(xyz, "xyz"), ImageGrid(mask, "mask")


def sample_texture(texture: ImageGrid, uv: np.ndarray) -> np.ndarray:
    """Bilinear sample with pixel-center convention, edge-clamped.

    ``uv`` is (..., 2) in [0, 1]^2; uv = ((c+0.5)/W, (r+0.5)/H) hits texel
    (r, c) exactly. Returns (..., C).
    """
    data = texture.data
    h, w = data.shape[:2]
    uv = np.asarray(uv, dtype=np.float64)
    x = uv[..., 0] * w - 0.5
    y = uv[..., 1] * h - 0.5
    x0 = np.floor(x)
    y0 = np.floor(y)
    fx = (x - x0)[..., None]
    fy = (y - y0)[..., None]
    xi = x0.astype(np.int64)
    yi = y0.astype(np.int64)
    c0 = np.clip(xi, 0, w - 1)
    c1 = np.clip(xi + 1, 0, w - 1)
    r0 = np.clip(yi, 0, h - 1)
    r1 = np.clip(yi + 1, 0, h - 1)
    # delta form: equal texel values pass through exactly (no rounding drift)
    v00, v01 = data[r0, c0], data[r0, c1]
    v10, v11 = data[r1, c0], data[r1, c1]
    top = v00 + fx * (v01 - v00)
    bot = v10 + fx * (v11 - v10)
    return top + fy * (bot - top)


def _render_impl(layers, camera: Camera, resolution: int, background):
    """Z-buffered orthographic rasterization of (mesh, texture, alpha) layers.

    Returns (color (H,W,3) f32, position (H,W,3) f64, hit mask (H,W) bool).
    """
    h = w = resolution
    color = np.empty((h, w, 3), dtype=np.float32)
    color[:] = np.asarray(background, dtype=np.float32)
    position = np.zeros((h, w, 3), dtype=np.float64)
    zbuf = np.full((h, w), -np.inf, dtype=np.float64)
    hit = np.zeros((h, w), dtype=bool)
    scale = resolution / (2.0 * camera.extent)

    for mesh, texture, alpha in layers:
        if texture is not None and alpha is not None:
            if (texture.height, texture.width) != (alpha.height, alpha.width):
                raise RasterError(
                    f"texture {texture.height}x{texture.width} and alpha "
                    f"{alpha.height}x{alpha.width} resolutions differ"
                )
        xy, depth = camera.project(mesh.positions)
        screen = (xy + camera.extent) * scale
        face_screen = screen[mesh.faces[:, :, 0]]
        face_depth = depth[mesh.faces[:, :, 0]]
        face_uvs = mesh.face_uvs()
        face_pos = mesh.face_positions()
        for f in range(len(face_screen)):
            cov = _triangle_coverage(face_screen[f], w, h, 0, h)
            if cov is None:
                continue
            rows, cols, w0, w1, w2 = cov
            frag_z = w0 * face_depth[f, 0] + w1 * face_depth[f, 1] + w2 * face_depth[f, 2]
            closer = frag_z > zbuf[rows, cols]
            if not closer.any():
                continue
            rows, cols = rows[closer], cols[closer]
            w0, w1, w2 = w0[closer], w1[closer], w2[closer]
            frag_z = frag_z[closer]
            frag_uv = (
                w0[:, None] * face_uvs[f, 0]
                + w1[:, None] * face_uvs[f, 1]
                + w2[:, None] * face_uvs[f, 2]
            )
            if alpha is not None:
                a = sample_texture(alpha, frag_uv)[:, 0]
                keep = a >= 0.5
                if not keep.any():
                    continue
                rows, cols = rows[keep], cols[keep]
                w0, w1, w2 = w0[keep], w1[keep], w2[keep]
                frag_z, frag_uv = frag_z[keep], frag_uv[keep]
            if texture is not None:
                color[rows, cols] = sample_texture(texture, frag_uv).astype(np.float32)
            p = face_pos[f]
            position[rows, cols] = (
                w0[:, None] * p[0] + w1[:, None] * p[1] + w2[:, None] * p[2]
            )
            zbuf[rows, cols] = frag_z
            hit[rows, cols] = True
    return color, position, hit


def render_view(mesh: Mesh, texture: ImageGrid, alpha: ImageGrid,
                camera: Camera, resolution: int,
                background=(0.25, 0.25, 0.28)) -> ImageGrid:
    """Render one textured mesh under uniform ambient light.

    Fragment color is the bilinear texture sample at the interpolated UV;
    fragments with sampled alpha < 0.5 are discarded; pixels no fragment
    survives on keep the constant background color.
    """
    color, _, _ = _render_impl([(mesh, texture, alpha)], camera, resolution, background)
    return ImageGrid(np.clip(color, 0.0, 1.0), "rgb")


def render_layers(layers, camera: Camera, resolution: int,
                  background=(0.25, 0.25, 0.28)) -> ImageGrid:
    """Composite several (mesh, texture, alpha) layers into one z-buffered view."""
    color, _, _ = _render_impl(layers, camera, resolution, background)
    return ImageGrid(np.clip(color, 0.0, 1.0), "rgb")


def render_gbuffer(mesh: Mesh, camera: Camera, resolution: int,
                   alpha: ImageGrid | None = None):
    """Interpolated world position and coverage of the rendered view.

    Returns (position (H,W,3) float64, mask (H,W) bool). Used by the
    bake/render consistency checks and for reference-region masks.
    """
    _, position, hit = _render_impl([(mesh, None, alpha)], camera, resolution, (0, 0, 0))
    return position, hit
