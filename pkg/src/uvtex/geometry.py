"""Triangle meshes with UV atlases: OBJ IO, normalization, seam structure."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class MeshError(ValueError):
    pass


class ObjParseError(MeshError):
    def __init__(self, message: str, line_no: int):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


@dataclass(frozen=True)
class Mesh:
    """Immutable triangle mesh with per-corner position and UV indices.

    ``faces`` has shape (F, 3, 2); faces[f, k] = (position index, uv index)
    for corner k. UVs must already lie in [0, 1]^2 and no face may span a
    zero-area UV triangle.
    """

    positions: np.ndarray = field(repr=False)  # (N, 3) float64
    uvs: np.ndarray = field(repr=False)        # (M, 2) float64
    faces: np.ndarray = field(repr=False)      # (F, 3, 2) int32

    def __post_init__(self):
        pos = np.ascontiguousarray(np.asarray(self.positions, dtype=np.float64))
        uvs = np.ascontiguousarray(np.asarray(self.uvs, dtype=np.float64))
        faces = np.ascontiguousarray(np.asarray(self.faces, dtype=np.int32))
        if pos.ndim != 2 or pos.shape[1] != 3:
            raise MeshError(f"positions must be (N, 3), got {pos.shape}")
        if uvs.ndim != 2 or uvs.shape[1] != 2:
            raise MeshError(f"uvs must be (M, 2), got {uvs.shape}")
        if faces.ndim != 3 or faces.shape[1:] != (3, 2):
            raise MeshError(f"faces must be (F, 3, 2), got {faces.shape}")
        if faces.size:
            if faces[:, :, 0].min(initial=0) < 0 or faces[:, :, 0].max(initial=-1) >= len(pos):
                raise MeshError("face position index out of range")
            if faces[:, :, 1].min(initial=0) < 0 or faces[:, :, 1].max(initial=-1) >= len(uvs):
                raise MeshError("face uv index out of range")
        if uvs.size and (uvs.min() < 0.0 or uvs.max() > 1.0):
            raise MeshError("uv coordinates outside [0, 1]")
        if faces.size:
            tri = uvs[faces[:, :, 1]]  # (F, 3, 2)
            area2 = (tri[:, 1, 0] - tri[:, 0, 0]) * (tri[:, 2, 1] - tri[:, 0, 1]) - (
                tri[:, 2, 0] - tri[:, 0, 0]
            ) * (tri[:, 1, 1] - tri[:, 0, 1])
            degenerate = np.flatnonzero(area2 == 0.0)
            if degenerate.size:
                raise MeshError(f"zero-area uv triangle at faces {degenerate[:8].tolist()}")
        for name, arr in (("positions", pos), ("uvs", uvs)):
            if arr.size and not np.all(np.isfinite(arr)):
                raise MeshError(f"non-finite {name}")
        pos.setflags(write=False)
        uvs.setflags(write=False)
        faces.setflags(write=False)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "uvs", uvs)
        object.__setattr__(self, "faces", faces)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    def face_positions(self) -> np.ndarray:
        """(F, 3, 3) corner positions."""
        return self.positions[self.faces[:, :, 0]]

    def face_uvs(self) -> np.ndarray:
        """(F, 3, 2) corner uvs."""
        return self.uvs[self.faces[:, :, 1]]


@dataclass(frozen=True)
class NormalizeTransform:
    """Uniform scale about a translated origin: p' = (p + translation) * scale."""

    translation: np.ndarray
    scale: float

    def apply(self, points: np.ndarray) -> np.ndarray:
        return (np.asarray(points, dtype=np.float64) + self.translation) * self.scale

    def is_identity(self, tol: float = 1e-6) -> bool:
        return bool(np.all(np.abs(self.translation) <= tol) and abs(self.scale - 1.0) <= tol)


# one seam pair: two face edges that share 3D endpoints but split in UV
# ((face_a, edge_a), (face_b, edge_b)), edge k = corners (k, (k+1) % 3)
SeamPair = tuple[tuple[int, int], tuple[int, int]]


def load_obj(path) -> Mesh:
    """Parse the v/vt/f subset of Wavefront OBJ (triangles, v/vt corners)."""
    positions: list[list[float]] = []
    uvs: list[list[float]] = []
    faces: list[list[tuple[int, int]]] = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            tokens = line.split()
            kind = tokens[0]
            if kind == "v":
                if len(tokens) != 4:
                    raise ObjParseError(f"expected 'v x y z', got {raw.strip()!r}", line_no)
                try:
                    positions.append([float(t) for t in tokens[1:]])
                except ValueError:
                    raise ObjParseError(f"bad vertex number in {raw.strip()!r}", line_no)
            elif kind == "vt":
                if len(tokens) < 3:
                    raise ObjParseError(f"expected 'vt u v', got {raw.strip()!r}", line_no)
                try:
                    uvs.append([float(tokens[1]), float(tokens[2])])
                except ValueError:
                    raise ObjParseError(f"bad uv number in {raw.strip()!r}", line_no)
            elif kind == "f":
                if len(tokens) != 4:
                    raise ObjParseError("only triangle faces are supported", line_no)
                corners = []
                for tok in tokens[1:]:
                    parts = tok.split("/")
                    if len(parts) < 2 or not parts[0] or not parts[1]:
                        raise ObjParseError(
                            f"face corner {tok!r} lacks v/vt indices", line_no
                        )
                    try:
                        vi, ti = int(parts[0]), int(parts[1])
                    except ValueError:
                        raise ObjParseError(f"bad face index in {tok!r}", line_no)
                    if not (1 <= vi <= len(positions)):
                        raise ObjParseError(f"position index {vi} out of range", line_no)
                    if not (1 <= ti <= len(uvs)):
                        raise ObjParseError(f"uv index {ti} out of range", line_no)
                    corners.append((vi - 1, ti - 1))
                faces.append(corners)
            # other record types (vn, o, g, s, usemtl, ...) are ignored
    try:
        return Mesh(
            np.asarray(positions, dtype=np.float64).reshape(-1, 3),
            np.asarray(uvs, dtype=np.float64).reshape(-1, 2),
            np.asarray(faces, dtype=np.int32).reshape(-1, 3, 2),
        )
    except MeshError as exc:
        raise MeshError(f"{path}: {exc}") from exc


def save_obj(path, mesh: Mesh, comment: str | None = None) -> None:
    """Write the mesh using shortest-roundtrip float formatting (bit-exact reload)."""
    lines = []
    if comment:
        lines.append(f"# {comment}")
    for p in mesh.positions:
        lines.append(f"v {float(p[0])!r} {float(p[1])!r} {float(p[2])!r}")
    for t in mesh.uvs:
        lines.append(f"vt {float(t[0])!r} {float(t[1])!r}")
    for f in mesh.faces:
        lines.append(
            "f "
            + " ".join(f"{int(v) + 1}/{int(t) + 1}" for v, t in f)
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def normalize_mesh(
    mesh: Mesh, selected: set[int] | None = None
) -> tuple[Mesh, NormalizeTransform]:
    """Center and uniformly scale so selected positions fill [-1, 1].

    Centering uses the midpoint of the selected positions' bounding box;
    the scale is isotropic and makes the largest absolute coordinate
    exactly 1. ``selected`` defaults to all positions.
    """
    if selected is None:
        pts = mesh.positions
    else:
        if not selected:
            raise MeshError("selected set is empty")
        idx = np.asarray(sorted(selected), dtype=np.int64)
        if idx.min() < 0 or idx.max() >= len(mesh.positions):
            raise MeshError("selected index out of range")
        pts = mesh.positions[idx]
    if len(pts) == 0:
        raise MeshError("mesh has no positions")
    lo = pts.min(axis=0)
    hi = pts.max(axis=0)
    extent = (hi - lo).max() / 2.0
    if extent == 0.0:
        raise MeshError("degenerate extent: all selected positions identical")
    translation = -(lo + hi) / 2.0
    scale = 1.0 / extent
    transform = NormalizeTransform(translation=translation, scale=scale)
    out = Mesh(transform.apply(mesh.positions), mesh.uvs, mesh.faces)
    return out, transform


def build_seam_edges(mesh: Mesh) -> list[SeamPair]:
    """Find edge pairs sharing 3D endpoints but mapped to distinct UV segments.

    Edges whose two incident faces agree on UV coordinates are interior
    atlas edges and are skipped. Each seam pair is listed once, ordered by
    (face_a, edge_a).
    """
    by_key: dict[tuple[int, int], list[tuple[int, int]]] = {}
    for f, face in enumerate(mesh.faces):
        for e in range(3):
            a = int(face[e, 0])
            b = int(face[(e + 1) % 3, 0])
            key = (a, b) if a < b else (b, a)
            by_key.setdefault(key, []).append((f, e))
    pairs: list[SeamPair] = []
    for key, edges in by_key.items():
        if len(edges) < 2:
            continue
        for i in range(len(edges)):
            for j in range(i + 1, len(edges)):
                (fa, ea), (fb, eb) = edges[i], edges[j]
                if _uv_edges_equal(mesh, fa, ea, fb, eb):
                    continue
                pairs.append(((fa, ea), (fb, eb)))
    pairs.sort()
    return pairs


def _uv_edges_equal(mesh: Mesh, fa: int, ea: int, fb: int, eb: int) -> bool:
    ua = _edge_uvs(mesh, fa, ea)
    ub = _edge_uvs(mesh, fb, eb)
    # match by shared 3D endpoint, not traversal order
    pa = _edge_pos_idx(mesh, fa, ea)
    pb = _edge_pos_idx(mesh, fb, eb)
    if pa == pb:
        return bool(np.array_equal(ua, ub))
    return bool(np.array_equal(ua, ub[::-1]))


def _edge_uvs(mesh: Mesh, f: int, e: int) -> np.ndarray:
    i0 = mesh.faces[f, e, 1]
    i1 = mesh.faces[f, (e + 1) % 3, 1]
    return mesh.uvs[[i0, i1]]


def _edge_pos_idx(mesh: Mesh, f: int, e: int) -> tuple[int, int]:
    return (int(mesh.faces[f, e, 0]), int(mesh.faces[f, (e + 1) % 3, 0]))


def seam_edge_endpoints(mesh: Mesh, pair: SeamPair):
    """UV segments of both sides of a seam, aligned by shared 3D endpoints.

    Returns (uv_a, uv_b) each of shape (2, 2); row k of both segments maps
    to the same 3D position.
    """
    (fa, ea), (fb, eb) = pair
    ua, ub = _edge_uvs(mesh, fa, ea), _edge_uvs(mesh, fb, eb)
    pa, pb = _edge_pos_idx(mesh, fa, ea), _edge_pos_idx(mesh, fb, eb)
    if pa == pb:
        return ua.copy(), ub.copy()
    if pa == pb[::-1]:
        return ua.copy(), ub[::-1].copy()
    raise MeshError("seam pair does not share 3D endpoints")
