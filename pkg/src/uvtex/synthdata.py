"""Procedural garment dataset: meshes, texture fields, samples, manifests.

Garments are open tube shells (torso + sleeves, hip + legs, or one tapered
tube) with one vertical UV cut per tube, so every garment has seam pairs
by construction. Ground-truth textures are 3D color fields evaluated at
the baked surface positions, which makes them seam-consistent exactly to
the extent the bake is. Charts are packed at uniform texel density so both
sides of every cut sample the surface at the same rate.
"""

from __future__ import annotations

import enum
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import Mesh, normalize_mesh, save_obj
from .grids import ImageGrid
from .rasterizer import Camera, bake_position_map, render_gbuffer, render_layers
from . import tensorio

BACKGROUND_FILL = 0.0          # uv_texture value outside the chart mask
REFERENCE_BACKGROUND = (0.25, 0.25, 0.28)
BODY_COLOR = (0.84, 0.67, 0.53)
CHART_PAD = 0.035

PALETTE_BANK = [
    (0.82, 0.18, 0.16),  # red
    (0.94, 0.52, 0.12),  # orange
    (0.93, 0.82, 0.22),  # yellow
    (0.22, 0.65, 0.28),  # green
    (0.12, 0.62, 0.56),  # teal
    (0.25, 0.75, 0.85),  # cyan
    (0.18, 0.32, 0.78),  # blue
    (0.48, 0.26, 0.68),  # purple
    (0.85, 0.30, 0.62),  # magenta
    (0.52, 0.36, 0.20),  # brown
    (0.88, 0.86, 0.80),  # chalk
    (0.20, 0.20, 0.24),  # charcoal
]

STYLES = ("solid", "stripes", "checker", "gradient")


class SynthError(ValueError):
    pass


class TypeLabel(enum.Enum):
    TOP = "Top"
    BOTTOM = "Bottom"
    ONEPIECE = "Onepiece"

    @property
    def index(self) -> int:
        return list(TypeLabel).index(self)

    @property
    def one_hot(self) -> np.ndarray:
        vec = np.zeros(3, dtype=np.float32)
        vec[self.index] = 1.0
        return vec

    @classmethod
    def from_name(cls, name: str) -> "TypeLabel":
        for lab in cls:
            if lab.value.lower() == name.lower():
                return lab
        raise SynthError(f"unknown type label {name!r}")


@dataclass(frozen=True)
class Sample:
    """One training/inference tuple of aligned UV maps plus the reference."""

    reference_image: ImageGrid
    uv_texture: ImageGrid
    uv_position: ImageGrid
    uv_mask: ImageGrid
    label: TypeLabel
    seed: int

    def __post_init__(self):
        shapes = {
            (g.height, g.width)
            for g in (self.reference_image, self.uv_texture, self.uv_position, self.uv_mask)
        }
        if len(shapes) != 1:
            raise SynthError(f"sample grids disagree on resolution: {shapes}")
        outside = self.uv_mask.data[:, :, 0] == 0.0
        if not np.all(self.uv_texture.data[outside] == BACKGROUND_FILL):
            raise SynthError("uv_texture outside the mask must equal the background fill")
        if not np.all(self.uv_position.data[outside] == 0.0):
            raise SynthError("uv_position outside the mask must be zero")

    @property
    def resolution(self) -> int:
        return self.uv_texture.height


# ---------------------------------------------------------------------------
# tube meshes


@dataclass(frozen=True)
class TubeSpec:
    """One open tube: linear axis sweep with linearly tapered radius.

    ``charts`` splits the circumference into that many UV charts (every
    chart boundary is a seam cut); segments must divide evenly.
    """

    start: tuple[float, float, float]
    end: tuple[float, float, float]
    radius_start: float
    radius_end: float
    segments: int = 16
    rows: int = 10
    charts: int = 1

    def __post_init__(self):
        if self.charts < 1 or self.segments % self.charts:
            raise SynthError("segments must divide evenly into charts")


def _tube_frame(axis: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    axis = axis / np.linalg.norm(axis)
    helper = np.array([0.0, 0.0, 1.0]) if abs(axis[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    u = np.cross(axis, helper)
    u /= np.linalg.norm(u)
    v = np.cross(axis, u)
    return u, v


def _chart_layout(tubes: list[TubeSpec]) -> list[list[tuple[float, float, float, float]]]:
    """Shelf-pack chart rectangles at uniform texels-per-3D-unit.

    Tube 0's charts fill the bottom shelf, all remaining tubes' charts the
    shelf above it. Returns one list of (u0, v0, u1, v1) rects per tube.
    """
    dims = []   # per tube: (chart width basis, chart height basis)
    for t in tubes:
        length = float(np.linalg.norm(np.subtract(t.end, t.start)))
        circum = 2.0 * math.pi * (t.radius_start + t.radius_end) / 2.0
        dims.append((circum / t.charts, length))
    pad = CHART_PAD
    shelves = [[0], list(range(1, len(tubes)))] if len(tubes) > 1 else [[0]]
    shelf_widths, shelf_heights, counts = [], [], []
    for shelf in shelves:
        widths = [dims[i][0] for i in shelf for _ in range(tubes[i].charts)]
        shelf_widths.append(sum(widths))
        counts.append(len(widths))
        shelf_heights.append(max(dims[i][1] for i in shelf))
    sigma = min(
        min((1 - (n + 1) * pad) / w for n, w in zip(counts, shelf_widths)),
        (1 - (len(shelves) + 1) * pad) / sum(shelf_heights),
    )
    rects: list[list[tuple[float, float, float, float]]] = [[] for _ in tubes]
    v = pad
    for shelf, height in zip(shelves, shelf_heights):
        u = pad
        for i in shelf:
            w, l = dims[i]
            for _ in range(tubes[i].charts):
                rects[i].append((u, v, u + sigma * w, v + sigma * l))
                u += sigma * w + pad
        v += sigma * height + pad
    return rects


def build_tube_shell(tubes: list[TubeSpec]) -> Mesh:
    """Mesh a list of tubes with circumferential UV cuts.

    Every chart boundary (including the wrap) shares position indices but
    splits in UV, so a tube with k charts contributes k * rows seam pairs.
    """
    layouts = _chart_layout(tubes)
    positions: list[np.ndarray] = []
    uvs: list[np.ndarray] = []
    faces: list[tuple] = []
    for tube, rects in zip(tubes, layouts):
        base_p = len(positions)
        start = np.asarray(tube.start, dtype=np.float64)
        end = np.asarray(tube.end, dtype=np.float64)
        axis = end - start
        bu, bv = _tube_frame(axis)
        seg, rows = tube.segments, tube.rows
        for i in range(rows + 1):
            t = i / rows
            center = start + axis * t
            radius = tube.radius_start + (tube.radius_end - tube.radius_start) * t
            for j in range(seg):
                ang = 2.0 * math.pi * j / seg
                positions.append(center + radius * (math.cos(ang) * bu + math.sin(ang) * bv))
        m = seg // tube.charts
        for c, (u0, v0, u1, v1) in enumerate(rects):
            base_t = len(uvs)
            for i in range(rows + 1):
                t = i / rows
                for j in range(m + 1):
                    uvs.append(np.array([
                        u0 + (u1 - u0) * j / m,
                        v0 + (v1 - v0) * t,
                    ]))
            for i in range(rows):
                for j in range(m):
                    jj = c * m + j
                    p00 = base_p + i * seg + (jj % seg)
                    p10 = base_p + i * seg + ((jj + 1) % seg)
                    p01 = base_p + (i + 1) * seg + (jj % seg)
                    p11 = base_p + (i + 1) * seg + ((jj + 1) % seg)
                    t00 = base_t + i * (m + 1) + j
                    t10 = base_t + i * (m + 1) + j + 1
                    t01 = base_t + (i + 1) * (m + 1) + j
                    t11 = base_t + (i + 1) * (m + 1) + j + 1
                    faces.append(((p00, t00), (p10, t10), (p11, t11)))
                    faces.append(((p00, t00), (p11, t11), (p01, t01)))
    return Mesh(
        np.asarray(positions, dtype=np.float64),
        np.asarray(uvs, dtype=np.float64),
        np.asarray(faces, dtype=np.int32),
    )


def make_cylinder_shell(segments: int = 24, rows: int = 12, radius: float = 0.35,
                        length: float = 1.6) -> Mesh:
    """Normalized single-tube cylinder; the standard fixture mesh."""
    tube = TubeSpec(
        start=(0.0, -length / 2, 0.0), end=(0.0, length / 2, 0.0),
        radius_start=radius, radius_end=radius,
        segments=segments, rows=rows,
    )
    mesh, _ = normalize_mesh(build_tube_shell([tube]))
    return mesh


# ---------------------------------------------------------------------------
# garment construction

# documented parameter ranges per class: (big tube, limb tubes)
GARMENT_RANGES = {
    TypeLabel.TOP: {
        "big_len": (0.55, 0.85), "big_radius": (0.23, 0.30),
        "limb_len": (0.40, 0.75), "limb_radius": (0.07, 0.12),
        "limb_angle_deg": (8.0, 50.0),
    },
    TypeLabel.BOTTOM: {
        "big_len": (0.30, 0.55), "big_radius": (0.21, 0.28),
        "limb_len": (0.45, 0.80), "limb_radius": (0.08, 0.13),
        "limb_angle_deg": (2.0, 25.0),
    },
    TypeLabel.ONEPIECE: {
        "big_len": (1.10, 1.50), "big_radius": (0.19, 0.26),
        "limb_len": (0.10, 0.28), "limb_radius": (0.0, 0.0),
        "limb_angle_deg": (0.0, 0.0),
    },
}

# mesh tessellation per class; rows differ so face counts do too
GARMENT_TESSELLATION = {
    TypeLabel.TOP: {"big": (20, 12), "limb": (12, 7)},
    TypeLabel.BOTTOM: {"big": (20, 10), "limb": (12, 8)},
    TypeLabel.ONEPIECE: {"big": (24, 16), "limb": (12, 8)},
}


@dataclass(frozen=True)
class GarmentParams:
    """Shape parameters of one garment; every field must sit inside the
    class ranges in GARMENT_RANGES. For Onepiece, ``limb_len`` is the skirt
    flare radius and the remaining limb fields are unused (must be 0)."""

    big_len: float
    big_radius: float
    limb_len: float
    limb_radius: float
    limb_angle_deg: float
    radius_boost: float = 0.0  # layering offset when worn over another garment

    @classmethod
    def draw(cls, label: TypeLabel, rng: np.random.Generator) -> "GarmentParams":
        r = GARMENT_RANGES[label]
        return cls(
            big_len=float(rng.uniform(*r["big_len"])),
            big_radius=float(rng.uniform(*r["big_radius"])),
            limb_len=float(rng.uniform(*r["limb_len"])),
            limb_radius=float(rng.uniform(*r["limb_radius"])),
            limb_angle_deg=float(rng.uniform(*r["limb_angle_deg"])),
        )

    def validate(self, label: TypeLabel) -> None:
        r = GARMENT_RANGES[label]
        for name in ("big_len", "big_radius", "limb_len", "limb_radius", "limb_angle_deg"):
            lo, hi = r[name]
            value = getattr(self, name)
            if not (lo <= value <= hi):
                raise SynthError(
                    f"{label.value} {name}={value:.4g} outside [{lo}, {hi}]"
                )
        if not (0.0 <= self.radius_boost <= 0.2):
            raise SynthError("radius_boost outside [0, 0.2]")


def _garment_tubes(label: TypeLabel, params: GarmentParams) -> list[TubeSpec]:
    tess = GARMENT_TESSELLATION[label]
    boost = params.radius_boost
    if label is TypeLabel.ONEPIECE:
        top_y = 0.55
        seg, rows = tess["big"]
        # split circumferentially so the atlas has two charts and the hem
        # keeps a workable texel density
        return [TubeSpec(
            start=(0.0, top_y, 0.0), end=(0.0, top_y - params.big_len, 0.0),
            radius_start=params.big_radius + boost,
            radius_end=params.big_radius + params.limb_len + boost,
            segments=seg, rows=rows, charts=2,
        )]
    ang = math.radians(params.limb_angle_deg)
    seg_b, rows_b = tess["big"]
    seg_l, rows_l = tess["limb"]
    if label is TypeLabel.TOP:
        top_y = 0.55
        torso = TubeSpec(
            start=(0.0, top_y, 0.0), end=(0.0, top_y - params.big_len, 0.0),
            radius_start=params.big_radius + boost,
            radius_end=(params.big_radius + boost) * 1.05,
            segments=seg_b, rows=rows_b,
        )
        tubes = [torso]
        attach_y = top_y - 0.06
        attach_x = params.big_radius + boost + 0.01
        for side in (1.0, -1.0):
            direction = np.array([side * math.sin(ang), -math.cos(ang), 0.0])
            start = np.array([side * attach_x, attach_y, 0.0])
            end = start + direction * params.limb_len
            tubes.append(TubeSpec(
                start=tuple(start), end=tuple(end),
                radius_start=params.limb_radius + boost * 0.5,
                radius_end=(params.limb_radius + boost * 0.5) * 0.85,
                segments=seg_l, rows=rows_l,
            ))
        return tubes
    # Bottom: hip tube with two legs hanging below
    hip_top = 0.08
    hip = TubeSpec(
        start=(0.0, hip_top, 0.0), end=(0.0, hip_top - params.big_len, 0.0),
        radius_start=params.big_radius + boost,
        radius_end=(params.big_radius + boost) * 1.02,
        segments=seg_b, rows=rows_b,
    )
    tubes = [hip]
    hip_bottom = hip_top - params.big_len
    for side in (1.0, -1.0):
        direction = np.array([side * math.sin(ang), -math.cos(ang), 0.0])
        start = np.array([side * (params.big_radius + boost) * 0.45, hip_bottom + 0.04, 0.0])
        end = start + direction * params.limb_len
        tubes.append(TubeSpec(
            start=tuple(start), end=tuple(end),
            radius_start=params.limb_radius + boost * 0.5,
            radius_end=(params.limb_radius + boost * 0.5) * 0.9,
            segments=seg_l, rows=rows_l,
        ))
    return tubes


def build_worn_garment(label: TypeLabel, params: GarmentParams | None, seed: int) -> Mesh:
    """Garment shell at its worn position on the body (not normalized)."""
    if params is None:
        params = GarmentParams.draw(label, np.random.default_rng(seed))
    params.validate(label)
    return build_tube_shell(_garment_tubes(label, params))


def make_garment_mesh(label: TypeLabel, params: GarmentParams | None = None,
                      seed: int = 0) -> Mesh:
    """Normalized garment shell with >= 2 charts and >= 1 seam pair
    (Onepiece is a single chart but still carries its cut seams)."""
    mesh, _ = normalize_mesh(build_worn_garment(label, params, seed))
    return mesh


def build_body() -> Mesh:
    """Neutral body: tapered torso-and-legs column plus a head knob."""
    trunk = TubeSpec(start=(0.0, 0.60, 0.0), end=(0.0, -0.92, 0.0),
                     radius_start=0.175, radius_end=0.12, segments=16, rows=12)
    head = TubeSpec(start=(0.0, 0.92, 0.0), end=(0.0, 0.60, 0.0),
                    radius_start=0.10, radius_end=0.13, segments=12, rows=4)
    return build_tube_shell([trunk, head])


# ---------------------------------------------------------------------------
# texture fields


@dataclass(frozen=True)
class StyleSpec:
    """Deterministic description of one texture field (rebuildable anywhere)."""

    style: str
    palette: tuple[tuple[float, float, float], ...]
    direction: tuple[float, float, float] = (0.0, 1.0, 0.0)
    period: float = 1.0
    phase: float = 0.0
    cell: float = 0.7

    def to_dict(self) -> dict:
        return {
            "style": self.style,
            "palette": [list(c) for c in self.palette],
            "direction": list(self.direction),
            "period": self.period,
            "phase": self.phase,
            "cell": self.cell,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "StyleSpec":
        return cls(
            style=d["style"],
            palette=tuple(tuple(c) for c in d["palette"]),
            direction=tuple(d["direction"]),
            period=float(d["period"]),
            phase=float(d["phase"]),
            cell=float(d["cell"]),
        )

    @classmethod
    def draw(cls, rng: np.random.Generator, style: str | None = None,
             avoid_color=None) -> "StyleSpec":
        """Random style; ``avoid_color`` forces a distinct primary color."""
        if style is None:
            style = str(rng.choice(STYLES, p=[0.3, 0.3, 0.2, 0.2]))
        n_colors = {"solid": 1, "stripes": int(rng.integers(2, 4)),
                    "checker": 2, "gradient": 2}[style]
        bank = np.asarray(PALETTE_BANK, dtype=np.float64)
        for _ in range(64):
            idx = rng.choice(len(bank), size=n_colors, replace=False)
            primary = bank[idx[0]]
            if avoid_color is not None and np.linalg.norm(primary - avoid_color) < 0.45:
                continue
            # checker cells meet at point corners; cap the contrast so the
            # baked ground truth stays seam-consistent at 64 texels
            if style == "checker" and np.linalg.norm(bank[idx[0]] - bank[idx[1]]) > 0.8:
                continue
            break
        palette = tuple(tuple(float(x) for x in bank[i]) for i in idx)
        axis = np.zeros(3)
        axis[int(rng.integers(0, 3))] = 1.0
        # bands must stay wide relative to the coarsest texel footprint
        period_lo = 1.35 if (style == "stripes" and n_colors == 3) else 0.9
        return cls(
            style=style,
            palette=palette,
            direction=tuple(float(x) for x in axis),
            period=float(rng.uniform(period_lo, period_lo + 0.6)),
            phase=float(rng.uniform(0.0, 1.0)),
            cell=float(rng.uniform(0.65, 0.95)),
        )

    @property
    def primary_color(self) -> np.ndarray:
        return np.asarray(self.palette[0], dtype=np.float64)


def field_from_spec(spec: StyleSpec):
    """Pure function from 3D points (..., 3) to rgb (..., 3) in [0, 1].

    Color transitions are cosine/smoothstep blended, never hard edges, so
    baked textures stay seam-consistent under finite texel resolution.
    """
    palette = np.asarray(spec.palette, dtype=np.float64)
    direction = np.asarray(spec.direction, dtype=np.float64)

    if spec.style == "solid":
        def field(points):
            pts = np.asarray(points, dtype=np.float64)
            out = np.empty(pts.shape[:-1] + (3,), dtype=np.float64)
            out[:] = palette[0]
            return out
        return field

    if spec.style == "stripes":
        n = len(palette)

        def field(points):
            pts = np.asarray(points, dtype=np.float64)
            s = (pts @ direction) / spec.period + spec.phase
            u = np.mod(s * n, n)
            i = np.floor(u).astype(np.int64) % n
            t = u - np.floor(u)
            # cosine-blend the trailing half of each band into the next;
            # hard edges would break seam consistency at finite texel size
            tau = 0.5
            w = np.clip((t - (1.0 - tau)) / tau, 0.0, 1.0)
            w = 0.5 - 0.5 * np.cos(np.pi * w)
            c0 = palette[i]
            c1 = palette[(i + 1) % n]
            return c0 + w[..., None] * (c1 - c0)
        return field

    if spec.style == "checker":
        def field(points):
            pts = np.asarray(points, dtype=np.float64)
            u = (pts + spec.phase) / spec.cell
            # smoothed square wave per axis; product alternates per cell
            waves = np.clip(np.sin(np.pi * u) * 1.6, -1.0, 1.0)
            v = waves[..., 0] * waves[..., 1] * waves[..., 2]
            w = 0.5 + 0.5 * v
            return palette[1] + w[..., None] * (palette[0] - palette[1])
        return field

    if spec.style == "gradient":
        def field(points):
            pts = np.asarray(points, dtype=np.float64)
            t = np.clip(((pts @ direction) + spec.phase + 1.0) / 2.0, 0.0, 1.0)
            return palette[0] + t[..., None] * (palette[1] - palette[0])
        return field

    raise SynthError(f"unknown style {spec.style!r}")


def make_texture_field(style: str, palette, seed: int = 0, *,
                       direction=None, period=None, phase=None, cell=None):
    """Field factory per the public contract; unset extras are drawn from seed."""
    if style not in STYLES:
        raise SynthError(f"unknown style {style!r}")
    if not 1 <= len(palette) <= 4:
        raise SynthError("palette must have 1..4 colors")
    rng = np.random.default_rng(seed)
    drawn = StyleSpec.draw(rng, style=style)
    pal = tuple(tuple(float(x) for x in c) for c in palette)
    if style == "solid":
        pal = pal[:1]
    elif len(pal) < 2:
        pal = pal + pal
    spec = StyleSpec(
        style=style, palette=pal,
        direction=tuple(direction) if direction is not None else drawn.direction,
        period=float(period) if period is not None else drawn.period,
        phase=float(phase) if phase is not None else drawn.phase,
        cell=float(cell) if cell is not None else drawn.cell,
    )
    return field_from_spec(spec)


# ---------------------------------------------------------------------------
# sample / dataset assembly


def _distractor_label(label: TypeLabel, rng: np.random.Generator) -> TypeLabel:
    if label is TypeLabel.TOP:
        return TypeLabel.BOTTOM
    if label is TypeLabel.BOTTOM:
        return TypeLabel.TOP
    return TypeLabel.TOP if rng.integers(0, 2) == 0 else TypeLabel.BOTTOM


def _bake_garment_texture(mesh_norm: Mesh, spec: StyleSpec, resolution: int,
                          threads: int = 1, maps=None):
    if maps is None:
        maps = bake_position_map(mesh_norm, resolution, threads=threads)
    position, mask = maps
    colors = np.clip(field_from_spec(spec)(position.data.astype(np.float64)), 0.0, 1.0)
    m = mask.data[:, :, 0:1]
    texture = colors.astype(np.float32) * m + BACKGROUND_FILL * (1.0 - m)
    return ImageGrid(texture, "rgb"), position, mask


MAX_STYLE_REDRAWS = 8


def _draw_consistent_style(mesh_norm: Mesh, maps, resolution: int,
                           rng: np.random.Generator, avoid_color=None):
    """Draw a style whose baked texture passes the seam-consistency bound.

    Styles whose features are too sharp for this mesh's texel density are
    redrawn; a solid (always consistent) is the terminal fallback. This is
    what makes the ground-truth guarantee unconditional.
    """
    from .metrics import seam_consistency

    bound = 0.9 * 2.0 / resolution
    spec = None
    for _ in range(MAX_STYLE_REDRAWS):
        spec = StyleSpec.draw(rng, avoid_color=avoid_color)
        texture, _, _ = _bake_garment_texture(mesh_norm, spec, resolution, maps=maps)
        report = seam_consistency(texture, mesh_norm)
        if not report.applicable or report.mean < bound:
            return spec
    return StyleSpec(style="solid", palette=spec.palette[:1])


@dataclass(frozen=True)
class SampleRecord:
    """Sample plus everything the metrics need to re-derive oracles."""

    sample: Sample
    mesh: Mesh                      # normalized target garment
    style: StyleSpec                # target texture field
    distractor_style: StyleSpec | None
    distractor_label: TypeLabel | None
    ref_garment_mask: np.ndarray    # (H, W) bool screen coverage of the target

    def to_meta(self) -> dict:
        return {
            "label": self.sample.label.value,
            "seed": self.sample.seed,
            "resolution": self.sample.resolution,
            "style": self.style.to_dict(),
            "distractor_style": (
                self.distractor_style.to_dict() if self.distractor_style else None
            ),
            "distractor_label": (
                self.distractor_label.value if self.distractor_label else None
            ),
        }


def generate_record(label: TypeLabel, seed: int, resolution: int = 64,
                    include_distractor: bool = True,
                    mesh_params: GarmentParams | None = None,
                    style: StyleSpec | None = None,
                    threads: int = 1) -> SampleRecord:
    """Build one full sample tuple deterministically from ``seed``."""
    ss = np.random.SeedSequence(seed)
    rng_mesh, rng_style, rng_dist = [np.random.default_rng(c) for c in ss.spawn(3)]

    params = mesh_params if mesh_params is not None else GarmentParams.draw(label, rng_mesh)
    params.validate(label)
    worn = build_tube_shell(_garment_tubes(label, params))
    mesh_norm, _ = normalize_mesh(worn)
    maps = bake_position_map(mesh_norm, resolution, threads=threads)
    if style is not None:
        target_style = style
    else:
        target_style = _draw_consistent_style(mesh_norm, maps, resolution, rng_style)
    uv_texture, uv_position, uv_mask = _bake_garment_texture(
        mesh_norm, target_style, resolution, maps=maps)

    camera = Camera("front", extent=1.05)
    body = build_body()
    body_tex = ImageGrid.constant(4, 4, BODY_COLOR, "rgb")
    layers = [(body, body_tex, None), (worn, uv_texture, uv_mask)]

    distractor_style = None
    dist_label = None
    if include_distractor:
        dist_label = _distractor_label(label, rng_dist)
        dist_params = GarmentParams.draw(dist_label, rng_dist)
        if label is TypeLabel.ONEPIECE:
            # worn over the onepiece; push it clear of the target surface
            boost = max(0.0, params.big_radius + 0.05 - dist_params.big_radius)
            dist_params = GarmentParams(
                big_len=dist_params.big_len, big_radius=dist_params.big_radius,
                limb_len=dist_params.limb_len, limb_radius=dist_params.limb_radius,
                limb_angle_deg=dist_params.limb_angle_deg, radius_boost=boost,
            )
        distractor_style = StyleSpec.draw(rng_dist, avoid_color=target_style.primary_color)
        dist_worn = build_tube_shell(_garment_tubes(dist_label, dist_params))
        dist_norm, _ = normalize_mesh(dist_worn)
        dist_tex, _, dist_mask = _bake_garment_texture(
            dist_norm, distractor_style, resolution, threads=threads)
        layers.append((dist_worn, dist_tex, dist_mask))

    reference = render_layers(layers, camera, resolution, background=REFERENCE_BACKGROUND)
    _, target_hit = render_gbuffer(worn, camera, resolution, alpha=uv_mask)

    sample = Sample(
        reference_image=reference,
        uv_texture=uv_texture,
        uv_position=uv_position,
        uv_mask=uv_mask,
        label=label,
        seed=seed,
    )
    return SampleRecord(
        sample=sample,
        mesh=mesh_norm,
        style=target_style,
        distractor_style=distractor_style,
        distractor_label=dist_label,
        ref_garment_mask=target_hit,
    )


def make_sample(label: TypeLabel, mesh_params: GarmentParams | None = None,
                style: StyleSpec | None = None, resolution: int = 64,
                seed: int = 0, include_distractor: bool = True) -> Sample:
    return generate_record(
        label, seed, resolution=resolution, include_distractor=include_distractor,
        mesh_params=mesh_params, style=style,
    ).sample


SAMPLE_FILES = {
    "reference": "reference.uvpt",
    "uv_texture": "uv_texture.uvpt",
    "uv_position": "uv_position.uvpt",
    "uv_mask": "uv_mask.uvpt",
    "mesh": "mesh.obj",
    "ref_garment_mask": "ref_garment_mask.uvpt",
    "meta": "meta.json",
}


def save_record(record: SampleRecord, sample_dir: Path, previews: bool = True) -> None:
    sample_dir.mkdir(parents=True, exist_ok=True)
    s = record.sample
    tensorio.save_tensor(sample_dir / SAMPLE_FILES["reference"], s.reference_image.data)
    tensorio.save_tensor(sample_dir / SAMPLE_FILES["uv_texture"], s.uv_texture.data)
    tensorio.save_tensor(sample_dir / SAMPLE_FILES["uv_position"], s.uv_position.data)
    tensorio.save_tensor(sample_dir / SAMPLE_FILES["uv_mask"], s.uv_mask.data)
    tensorio.save_tensor(
        sample_dir / SAMPLE_FILES["ref_garment_mask"],
        record.ref_garment_mask.astype(np.float32),
    )
    save_obj(sample_dir / SAMPLE_FILES["mesh"], record.mesh)
    (sample_dir / SAMPLE_FILES["meta"]).write_text(
        json.dumps(record.to_meta(), sort_keys=True, indent=1) + "\n", encoding="utf-8")
    if previews:
        tensorio.save_png(sample_dir / "reference.png", s.reference_image)
        tensorio.save_png(sample_dir / "uv_texture.png", s.uv_texture)
        tensorio.save_png(sample_dir / "uv_position.png", s.uv_position)
        tensorio.save_png(sample_dir / "uv_mask.png", s.uv_mask)


def load_record(sample_dir: Path) -> SampleRecord:
    from .geometry import load_obj

    sample_dir = Path(sample_dir)
    meta = json.loads((sample_dir / SAMPLE_FILES["meta"]).read_text(encoding="utf-8"))
    label = TypeLabel.from_name(meta["label"])
    sample = Sample(
        reference_image=ImageGrid(tensorio.load_tensor(sample_dir / SAMPLE_FILES["reference"]), "rgb"),
        uv_texture=ImageGrid(tensorio.load_tensor(sample_dir / SAMPLE_FILES["uv_texture"]), "rgb"),
        uv_position=ImageGrid(tensorio.load_tensor(sample_dir / SAMPLE_FILES["uv_position"]), "xyz"),
        uv_mask=ImageGrid(tensorio.load_tensor(sample_dir / SAMPLE_FILES["uv_mask"]), "mask"),
        label=label,
        seed=int(meta["seed"]),
    )
    return SampleRecord(
        sample=sample,
        mesh=load_obj(sample_dir / SAMPLE_FILES["mesh"]),
        style=StyleSpec.from_dict(meta["style"]),
        distractor_style=(
            StyleSpec.from_dict(meta["distractor_style"])
            if meta.get("distractor_style") else None
        ),
        distractor_label=(
            TypeLabel.from_name(meta["distractor_label"])
            if meta.get("distractor_label") else None
        ),
        ref_garment_mask=tensorio.load_tensor(
            sample_dir / SAMPLE_FILES["ref_garment_mask"]).astype(bool),
    )


def build_dataset(n: int, out_dir, seed: int = 0, resolution: int = 64,
                  include_distractor: bool = True, previews: bool = True,
                  threads: int = 1) -> Path:
    """Generate ``n`` samples with round-robin labels; returns the manifest path.

    Rebuilding with the same arguments reproduces every file byte for byte.
    """
    if n <= 0:
        raise SynthError("dataset size must be positive")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    labels = [list(TypeLabel)[i % 3] for i in range(n)]
    seeds = [int(s.generate_state(1)[0] & 0x7FFFFFFF)
             for s in np.random.SeedSequence(seed).spawn(n)]

    def job(i: int):
        record = generate_record(
            labels[i], seeds[i], resolution=resolution,
            include_distractor=include_distractor,
        )
        sample_dir = out_dir / f"sample_{i:05d}"
        save_record(record, sample_dir, previews=previews)
        return i

    if threads <= 1:
        for i in range(n):
            job(i)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(job, range(n)))

    manifest = out_dir / "manifest.jsonl"
    with open(manifest, "w", encoding="utf-8") as fh:
        for i in range(n):
            fh.write(json.dumps({
                "id": i,
                "label": labels[i].value,
                "seed": seeds[i],
                "dir": f"sample_{i:05d}",
            }, sort_keys=True) + "\n")
    (out_dir / "dataset.json").write_text(json.dumps({
        "n": n, "seed": seed, "resolution": resolution,
        "include_distractor": include_distractor,
    }, sort_keys=True, indent=1) + "\n", encoding="utf-8")
    return manifest


def read_manifest(manifest_path) -> list[dict]:
    manifest_path = Path(manifest_path)
    records = []
    with open(manifest_path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    return records


def load_dataset_record(manifest_path, entry: dict) -> SampleRecord:
    return load_record(Path(manifest_path).parent / entry["dir"])
