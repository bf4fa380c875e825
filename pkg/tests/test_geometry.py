import numpy as np
import pytest

from uvtex.geometry import (Mesh, MeshError, ObjParseError, build_seam_edges,
                            load_obj, normalize_mesh, save_obj,
                            seam_edge_endpoints)
from uvtex.synthdata import TypeLabel, make_cylinder_shell, make_garment_mesh


def single_quad_obj(path):
    path.write_text(
        "# single quad\n"
        "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\n"
        "vt 0 0\nvt 1 0\nvt 1 1\nvt 0 1\n"
        "f 1/1 2/2 3/3\n"
        "f 1/1 3/3 4/4\n",
        encoding="utf-8",
    )
    return path


def test_load_obj_single_quad(tmp_path):
    mesh = load_obj(single_quad_obj(tmp_path / "quad.obj"))
    assert mesh.n_faces == 2
    assert len(mesh.positions) == 4
    assert len(mesh.uvs) == 4


def test_load_obj_index_out_of_range(tmp_path):
    p = tmp_path / "bad.obj"
    p.write_text(
        "v 0 0 0\nv 1 0 0\nv 0 1 0\nv 1 1 0\n"
        "vt 0 0\nvt 1 0\nvt 0 1\n"
        "f 1/1 2/2 5/3\n",
        encoding="utf-8",
    )
    with pytest.raises(ObjParseError) as exc:
        load_obj(p)
    assert "line 8" in str(exc.value)
    assert "5" in str(exc.value)


def test_load_obj_missing_uv_corner(tmp_path):
    p = tmp_path / "nouv.obj"
    p.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nvt 0 0\nf 1 2 3\n", encoding="utf-8")
    with pytest.raises(ObjParseError):
        load_obj(p)


def test_obj_roundtrip_bit_exact(tmp_path):
    mesh = make_cylinder_shell()
    path = tmp_path / "cyl.obj"
    save_obj(path, mesh)
    back = load_obj(path)
    assert np.array_equal(back.positions, mesh.positions)
    assert np.array_equal(back.uvs, mesh.uvs)
    assert np.array_equal(back.faces, mesh.faces)


def test_obj_roundtrip_garments(tmp_path):
    for i, label in enumerate(TypeLabel):
        mesh = make_garment_mesh(label, seed=i)
        path = tmp_path / f"{label.value}.obj"
        save_obj(path, mesh)
        back = load_obj(path)
        assert np.array_equal(back.positions, mesh.positions)
        assert np.array_equal(back.faces, mesh.faces)


def test_mesh_rejects_uv_outside_unit_square():
    with pytest.raises(MeshError):
        Mesh([[0, 0, 0], [1, 0, 0], [0, 1, 0]],
             [[0, 0], [1.2, 0], [0, 1]],
             [[(0, 0), (1, 1), (2, 2)]])


def test_mesh_rejects_degenerate_uv_triangle():
    with pytest.raises(MeshError):
        Mesh([[0, 0, 0], [1, 0, 0], [0, 1, 0]],
             [[0, 0], [0.5, 0.5], [1, 1]],
             [[(0, 0), (1, 1), (2, 2)]])


def test_normalize_two_point_example():
    mesh = Mesh([[2, 2, 2], [4, 4, 4], [3, 2, 4]],
                [[0, 0], [1, 0], [0, 1]],
                [[(0, 0), (1, 1), (2, 2)]])
    _, tr = normalize_mesh(mesh, selected={0, 1})
    assert np.allclose(tr.translation, [-3, -3, -3])
    assert tr.scale == pytest.approx(1.0)


def test_normalize_identity_on_unit_cube_corners():
    pts = [[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)]
    mesh = Mesh(pts, [[0, 0], [1, 0], [0, 1]], [[(0, 0), (1, 1), (2, 2)]])
    out, tr = normalize_mesh(mesh)
    assert tr.is_identity()
    assert np.array_equal(out.positions, mesh.positions)


def test_normalize_random_cloud():
    rng = np.random.default_rng(3)
    pts = rng.normal(size=(100, 3)) * [2.0, 5.0, 0.5] + [10, -4, 2]
    mesh = Mesh(pts, [[0, 0], [1, 0], [0, 1]], [[(0, 0), (1, 1), (2, 2)]])
    out, _ = normalize_mesh(mesh)
    assert np.abs(out.positions).max() == pytest.approx(1.0, abs=1e-6)
    # bounding-box midpoint (not the vertex mean) lands on the origin
    mid = (out.positions.min(axis=0) + out.positions.max(axis=0)) / 2
    assert np.abs(mid).max() < 1e-6


def test_normalize_idempotent():
    rng = np.random.default_rng(4)
    pts = rng.normal(size=(50, 3)) * 3 + 1
    mesh = Mesh(pts, [[0, 0], [1, 0], [0, 1]], [[(0, 0), (1, 1), (2, 2)]])
    once, _ = normalize_mesh(mesh)
    twice, tr2 = normalize_mesh(once)
    assert np.abs(tr2.translation).max() < 1e-6
    assert tr2.scale == pytest.approx(1.0, abs=1e-6)
    assert np.allclose(twice.positions, once.positions, atol=1e-6)


def test_normalize_degenerate_extent():
    mesh = Mesh([[1, 1, 1], [1, 1, 1], [1, 1, 1]],
                [[0, 0], [1, 0], [0, 1]],
                [[(0, 0), (1, 1), (2, 2)]])
    with pytest.raises(MeshError):
        normalize_mesh(mesh)


def test_seam_edges_single_triangle_empty():
    mesh = Mesh([[0, 0, 0], [1, 0, 0], [0, 1, 0]],
                [[0, 0], [1, 0], [0, 1]],
                [[(0, 0), (1, 1), (2, 2)]])
    assert build_seam_edges(mesh) == []


def test_seam_edges_continuous_sheet_empty(tmp_path):
    # 2x2 grid of quads with a single continuous UV chart: no seams
    positions, uvs, faces = [], [], []
    for r in range(3):
        for c in range(3):
            positions.append([c, r, 0.0])
            uvs.append([c / 2, r / 2])
    for r in range(2):
        for c in range(2):
            a, b = r * 3 + c, r * 3 + c + 1
            d, e = (r + 1) * 3 + c, (r + 1) * 3 + c + 1
            faces.append([(a, a), (b, b), (e, e)])
            faces.append([(a, a), (e, e), (d, d)])
    mesh = Mesh(positions, uvs, faces)
    assert build_seam_edges(mesh) == []


def test_seam_edges_cylinder_cut_count():
    rows = 12
    mesh = make_cylinder_shell(segments=24, rows=rows)
    seams = build_seam_edges(mesh)
    assert len(seams) == rows


def _aligned_edge_positions(mesh, face, edge, reverse):
    idx = [mesh.faces[face, edge, 0], mesh.faces[face, (edge + 1) % 3, 0]]
    pts = mesh.positions[idx]
    return pts[::-1] if reverse else pts


def test_seam_pairs_map_to_identical_3d_positions():
    mesh = make_garment_mesh(TypeLabel.TOP, seed=2)
    seams = build_seam_edges(mesh)
    assert seams
    s = np.linspace(0.0, 1.0, 9)[:, None]
    for pair in seams:
        (fa, ea), (fb, eb) = pair
        uv_a, uv_b = seam_edge_endpoints(mesh, pair)
        assert not np.allclose(uv_a, uv_b)
        pa = _aligned_edge_positions(mesh, fa, ea, reverse=False)
        ia = (int(mesh.faces[fa, ea, 0]), int(mesh.faces[fa, (ea + 1) % 3, 0]))
        ib = (int(mesh.faces[fb, eb, 0]), int(mesh.faces[fb, (eb + 1) % 3, 0]))
        pb = _aligned_edge_positions(mesh, fb, eb, reverse=(ia != ib))
        qa = pa[0] + s * (pa[1] - pa[0])
        qb = pb[0] + s * (pb[1] - pb[0])
        assert np.abs(qa - qb).max() < 1e-5
