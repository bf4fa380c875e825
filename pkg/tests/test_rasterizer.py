import numpy as np
import pytest

from uvtex.geometry import Mesh
from uvtex.grids import ImageGrid
from uvtex.rasterizer import (Camera, RasterError, UVOverlapError,
                              bake_position_map, render_gbuffer, render_layers,
                              render_view, sample_texture)
from uvtex.synthdata import make_cylinder_shell


def tri_mesh(positions, uvs):
    return Mesh(positions, uvs, [[(0, 0), (1, 1), (2, 2)]])


# ---------------------------------------------------------------------------
# independent oracles


def oracle_coverage(uv_tri, resolution):
    """Scalar point-in-triangle test with the same ownership tie-break."""
    def edge_value(p, q, x, y):
        return (q[0] - p[0]) * (y - p[1]) - (q[1] - p[1]) * (x - p[0])

    def owner(p, q):
        dy, dx = q[1] - p[1], q[0] - p[0]
        return dy < 0 or (dy == 0 and dx < 0)

    v = [(float(u) * resolution, float(w) * resolution) for u, w in uv_tri]
    area = edge_value(v[0], v[1], v[2][0], v[2][1])
    if area == 0:
        return np.zeros((resolution, resolution), dtype=bool)
    order = (0, 1, 2) if area > 0 else (0, 2, 1)
    covered = np.zeros((resolution, resolution), dtype=bool)
    for r in range(resolution):
        for c in range(resolution):
            x, y = c + 0.5, r + 0.5
            ok = True
            for k in range(3):
                p, q = v[order[k]], v[order[(k + 1) % 3]]
                val = edge_value(p, q, x, y)
                if val < 0 or (val == 0 and not owner(p, q)):
                    ok = False
                    break
            covered[r, c] = ok
    return covered


def oracle_bilinear(texture, u, v):
    data = texture.data
    h, w = data.shape[:2]
    x = u * w - 0.5
    y = v * h - 0.5
    x0, y0 = int(np.floor(x)), int(np.floor(y))
    fx, fy = x - x0, y - y0
    out = np.zeros(data.shape[2])
    for dy, wy in ((0, 1 - fy), (1, fy)):
        for dx, wx in ((0, 1 - fx), (1, fx)):
            r = min(max(y0 + dy, 0), h - 1)
            c = min(max(x0 + dx, 0), w - 1)
            out += wy * wx * data[r, c]
    return out


# ---------------------------------------------------------------------------
# baking


def test_bake_single_triangle_analytic():
    mesh = tri_mesh(
        positions=[[-1, -1, 0], [1, -1, 0], [-1, 1, 0]],
        uvs=[[0, 0], [1, 0], [0, 1]],
    )
    xyz, mask = bake_position_map(mesh, 4)
    assert mask.data[0, 0, 0] == 1.0
    assert np.allclose(xyz.data[0, 0], [-0.75, -0.75, 0.0], atol=1e-6)


def test_bake_empty_mesh():
    mesh = Mesh(np.zeros((0, 3)), np.zeros((0, 2)), np.zeros((0, 3, 2), dtype=np.int32))
    xyz, mask = bake_position_map(mesh, 8)
    assert np.all(mask.data == 0.0)
    assert np.all(xyz.data == 0.0)


def test_bake_matches_barycentric_oracle_random_triangles():
    rng = np.random.default_rng(0)
    res = 32
    checked = 0
    for _ in range(25):
        uvs = rng.random((3, 2))
        d1, d2 = uvs[1] - uvs[0], uvs[2] - uvs[0]
        if abs(d1[0] * d2[1] - d1[1] * d2[0]) < 1e-3:
            continue
        positions = rng.uniform(-1, 1, (3, 3))
        mesh = tri_mesh(positions, uvs)
        xyz, mask = bake_position_map(mesh, res)
        cov = oracle_coverage(uvs, res)
        assert np.array_equal(mask.data[:, :, 0] == 1.0, cov)
        rows, cols = np.nonzero(cov)
        for r, c in zip(rows, cols):
            # analytic barycentric solve at the pixel center
            x, y = (c + 0.5) / res, (r + 0.5) / res
            m = np.array([uvs[1] - uvs[0], uvs[2] - uvs[0]]).T
            w12 = np.linalg.solve(m, np.array([x, y]) - uvs[0])
            w = np.array([1 - w12.sum(), *w12])
            expect = w @ positions
            assert np.abs(xyz.data[r, c] - expect).max() < 1e-5
        checked += 1
    assert checked >= 20


def test_bake_coverage_oracle_cylinder():
    mesh = make_cylinder_shell()
    res = 64
    xyz, mask = bake_position_map(mesh, res)
    face_uvs = mesh.face_uvs()
    oracle = np.zeros((res, res), dtype=bool)
    for f in range(mesh.n_faces):
        oracle |= oracle_coverage(face_uvs[f], res)
    assert np.array_equal(mask.data[:, :, 0] == 1.0, oracle)


def test_bake_cylinder_points_on_surface():
    mesh = make_cylinder_shell(segments=24, rows=12, radius=0.35, length=1.6)
    res = 64
    xyz, mask = bake_position_map(mesh, res)
    covered = mask.data[:, :, 0] == 1.0
    pts = xyz.data[covered]
    assert np.abs(pts).max() <= 1.0
    # normalized cylinder radius: scale = 2 / length
    r_norm = 0.35 * 2 / 1.6
    radial = np.sqrt(pts[:, 0] ** 2 + pts[:, 2] ** 2)
    assert np.abs(radial - r_norm).max() < 2.0 / res


def test_bake_overlap_error():
    # two triangles covering the same uv area
    mesh = Mesh(
        [[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1], [1, 0, 1], [0, 1, 1]],
        [[0.1, 0.1], [0.9, 0.1], [0.1, 0.9]],
        [[(0, 0), (1, 1), (2, 2)], [(3, 0), (4, 1), (5, 2)]],
    )
    with pytest.raises(UVOverlapError) as exc:
        bake_position_map(mesh, 16)
    assert (0, 1) in exc.value.face_pairs


def test_bake_requires_normalized_positions():
    mesh = tri_mesh([[0, 0, 0], [3, 0, 0], [0, 3, 0]],
                    [[0, 0], [1, 0], [0, 1]])
    with pytest.raises(RasterError):
        bake_position_map(mesh, 8)


def test_bake_deterministic_and_thread_invariant():
    mesh = make_cylinder_shell()
    xyz1, mask1 = bake_position_map(mesh, 64, threads=1)
    xyz2, mask2 = bake_position_map(mesh, 64, threads=4)
    xyz3, mask3 = bake_position_map(mesh, 64, threads=1)
    assert np.array_equal(xyz1.data, xyz2.data)
    assert np.array_equal(mask1.data, mask2.data)
    assert np.array_equal(xyz1.data, xyz3.data)


# ---------------------------------------------------------------------------
# bilinear sampling


def test_sample_texture_1x1():
    tex = ImageGrid.constant(1, 1, (0.2, 0.5, 0.7), "rgb")
    for uv in ([0, 0], [1, 1], [0.3, 0.9]):
        assert np.allclose(sample_texture(tex, np.array(uv)), [0.2, 0.5, 0.7])


def test_sample_texture_midpoint_gray():
    tex = ImageGrid(np.array([[[0, 0, 0], [1, 1, 1]]], dtype=np.float32), "rgb")
    val = sample_texture(tex, np.array([0.5, 0.5]))
    assert np.allclose(val, 0.5)


def test_sample_texture_pixel_center_exact():
    rng = np.random.default_rng(1)
    tex = ImageGrid(rng.random((8, 8, 3), dtype=np.float32), "rgb")
    uv = np.array([0.5 / 8, 0.5 / 8])
    assert np.array_equal(sample_texture(tex, uv).astype(np.float32), tex.data[0, 0])


def test_sample_texture_matches_scalar_oracle():
    rng = np.random.default_rng(2)
    tex = ImageGrid(rng.random((8, 8, 3), dtype=np.float32), "rgb")
    uvs = rng.random((1000, 2))
    fast = sample_texture(tex, uvs)
    for i in range(0, 1000, 7):
        ref = oracle_bilinear(tex, uvs[i, 0], uvs[i, 1])
        assert np.abs(fast[i] - ref).max() < 1e-6


# ---------------------------------------------------------------------------
# rendering


def quad_mesh():
    return Mesh(
        positions=[[-0.7, -0.5, 0], [0.7, -0.5, 0], [0.7, 0.5, 0], [-0.7, 0.5, 0]],
        uvs=[[0.1, 0.1], [0.9, 0.1], [0.9, 0.9], [0.1, 0.9]],
        faces=[[(0, 0), (1, 1), (2, 2)], [(0, 0), (2, 2), (3, 3)]],
    )


def test_render_solid_quad_front():
    red = ImageGrid.constant(8, 8, (1.0, 0.0, 0.0), "rgb")
    ones = ImageGrid.constant(8, 8, 1.0, "mask")
    img = render_view(quad_mesh(), red, ones, Camera("front"), 32,
                      background=(0.0, 0.0, 0.0))
    reds = img.data[:, :, 0] == 1.0
    assert reds.any()
    rows = np.nonzero(reds.any(axis=1))[0]
    cols = np.nonzero(reds.any(axis=0))[0]
    # axis-aligned rectangle: the red region is exactly its bounding box
    assert reds.sum() == len(rows) * len(cols)
    assert np.all(img.data[~reds] == 0.0)


def test_render_back_mirrors_front():
    red = ImageGrid.constant(8, 8, (1.0, 0.0, 0.0), "rgb")
    ones = ImageGrid.constant(8, 8, 1.0, "mask")
    front = render_view(quad_mesh(), red, ones, Camera("front"), 32)
    back = render_view(quad_mesh(), red, ones, Camera("back"), 32)
    assert np.array_equal(back.data, front.data[:, ::-1])


def test_render_zero_alpha_gives_background():
    red = ImageGrid.constant(8, 8, (1.0, 0.0, 0.0), "rgb")
    zeros = ImageGrid.constant(8, 8, 0.0, "mask")
    bg = (0.3, 0.4, 0.5)
    img = render_view(quad_mesh(), red, zeros, Camera("front"), 16, background=bg)
    assert np.allclose(img.data, np.asarray(bg, dtype=np.float32))


def test_render_resolution_mismatch():
    red = ImageGrid.constant(8, 8, (1.0, 0.0, 0.0), "rgb")
    alpha = ImageGrid.constant(16, 16, 1.0, "mask")
    with pytest.raises(RasterError):
        render_view(quad_mesh(), red, alpha, Camera("front"), 16)


def test_render_zbuffer_nearer_wins():
    near = Mesh([[-0.4, -0.4, 0.5], [0.4, -0.4, 0.5], [0.0, 0.4, 0.5]],
                [[0.2, 0.2], [0.8, 0.2], [0.5, 0.8]],
                [[(0, 0), (1, 1), (2, 2)]])
    far = Mesh([[-0.6, -0.6, -0.5], [0.6, -0.6, -0.5], [0.0, 0.6, -0.5]],
               [[0.2, 0.2], [0.8, 0.2], [0.5, 0.8]],
               [[(0, 0), (1, 1), (2, 2)]])
    red = ImageGrid.constant(4, 4, (1.0, 0.0, 0.0), "rgb")
    blue = ImageGrid.constant(4, 4, (0.0, 0.0, 1.0), "rgb")
    img = render_layers([(far, blue, None), (near, red, None)], Camera("front"), 32)
    center = img.data[16, 16]
    assert center[0] == 1.0 and center[2] == 0.0
    img2 = render_layers([(near, red, None), (far, blue, None)], Camera("front"), 32)
    assert np.array_equal(img.data, img2.data)


def test_bake_render_consistency():
    """Rendering a mesh textured by its own position bake reproduces the
    fragment's interpolated 3D position within 2 / resolution."""
    mesh = make_cylinder_shell()
    res = 64
    xyz, mask = bake_position_map(mesh, res)
    # remap xyz in [-1,1] to rgb in [0,1]
    rgb = ImageGrid(((xyz.data + 1.0) / 2.0 * mask.data), "rgb")
    img = render_view(mesh, rgb, mask, Camera("front"), res, background=(0, 0, 0))
    position, hit = render_gbuffer(mesh, Camera("front"), res, alpha=mask)
    decoded = img.data * 2.0 - 1.0
    err = np.abs(decoded[hit] - position[hit])
    assert err.max() < 2.0 / res
