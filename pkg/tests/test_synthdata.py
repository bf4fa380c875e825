import json

import numpy as np
import pytest

from uvtex.geometry import build_seam_edges
from uvtex.grids import ImageGrid
from uvtex.metrics import seam_consistency
from uvtex.rasterizer import Camera, bake_position_map, render_gbuffer
from uvtex.synthdata import (GARMENT_RANGES, BACKGROUND_FILL, GarmentParams,
                             StyleSpec, SynthError, TypeLabel, build_dataset,
                             field_from_spec, generate_record, load_record,
                             load_dataset_record, make_garment_mesh,
                             make_sample, make_texture_field, read_manifest,
                             save_record)


# ---------------------------------------------------------------------------
# labels


def test_type_label_one_hot():
    for i, label in enumerate(TypeLabel):
        vec = label.one_hot
        assert vec.sum() == 1.0
        assert vec[i] == 1.0


def test_type_label_from_name():
    assert TypeLabel.from_name("top") is TypeLabel.TOP
    with pytest.raises(SynthError):
        TypeLabel.from_name("hat")


# ---------------------------------------------------------------------------
# garment meshes


def test_top_has_seams():
    mesh = make_garment_mesh(TypeLabel.TOP, seed=0)
    assert len(build_seam_edges(mesh)) > 0


def test_garment_mesh_deterministic():
    a = make_garment_mesh(TypeLabel.BOTTOM, seed=11)
    b = make_garment_mesh(TypeLabel.BOTTOM, seed=11)
    assert np.array_equal(a.positions, b.positions)
    assert np.array_equal(a.uvs, b.uvs)
    assert np.array_equal(a.faces, b.faces)


def test_top_vs_bottom_differ():
    top = make_garment_mesh(TypeLabel.TOP, seed=3)
    bottom = make_garment_mesh(TypeLabel.BOTTOM, seed=3)
    assert top.n_faces != bottom.n_faces
    # silhouettes differ in the front view
    _, hit_top = render_gbuffer(top, Camera("front"), 48)
    _, hit_bottom = render_gbuffer(bottom, Camera("front"), 48)
    assert (hit_top ^ hit_bottom).sum() > 0


def test_garment_params_range_check():
    ranges = GARMENT_RANGES[TypeLabel.TOP]
    bad = GarmentParams(
        big_len=ranges["big_len"][1] + 1.0,
        big_radius=ranges["big_radius"][0],
        limb_len=ranges["limb_len"][0],
        limb_radius=ranges["limb_radius"][0],
        limb_angle_deg=ranges["limb_angle_deg"][0],
    )
    with pytest.raises(SynthError):
        make_garment_mesh(TypeLabel.TOP, params=bad, seed=0)


def test_garment_normalized_and_bakeable():
    for label in TypeLabel:
        mesh = make_garment_mesh(label, seed=5)
        assert np.abs(mesh.positions).max() == pytest.approx(1.0, abs=1e-9)
        bake_position_map(mesh, 32)  # must not raise (no uv overlap)


# ---------------------------------------------------------------------------
# texture fields


def test_solid_field():
    f = make_texture_field("solid", [(0.9, 0.1, 0.2)], seed=0)
    rng = np.random.default_rng(0)
    pts = rng.uniform(-1, 1, (50, 3))
    assert np.allclose(f(pts), [0.9, 0.1, 0.2])


def test_stripes_period_along_y():
    f = make_texture_field("stripes", [(1, 0, 0), (0, 0, 1)], seed=0,
                           direction=(0, 1, 0), period=0.5, phase=0.0)
    a = f(np.array([0.0, 0.10, 0.0]))
    b = f(np.array([0.0, 0.35, 0.0]))
    assert np.linalg.norm(a - b) > 0.1


def test_checker_alternates_across_boundary():
    f = make_texture_field("checker", [(1, 1, 1), (0, 0, 0)], seed=0,
                           cell=0.6, phase=0.0)
    delta = 0.15
    a = f(np.array([0.6 - delta, 0.3, 0.3]))
    b = f(np.array([0.6 + delta, 0.3, 0.3]))
    assert np.linalg.norm(a - b) > 0.5


def test_field_deterministic_in_seed():
    f1 = make_texture_field("stripes", [(1, 0, 0), (0, 1, 0)], seed=7)
    f2 = make_texture_field("stripes", [(1, 0, 0), (0, 1, 0)], seed=7)
    pts = np.random.default_rng(1).uniform(-1, 1, (20, 3))
    assert np.array_equal(f1(pts), f2(pts))


def test_field_palette_size_check():
    with pytest.raises(SynthError):
        make_texture_field("stripes", [], seed=0)
    with pytest.raises(SynthError):
        make_texture_field("stripes", [(0, 0, 0)] * 5, seed=0)


def test_style_spec_roundtrip():
    spec = StyleSpec.draw(np.random.default_rng(9))
    back = StyleSpec.from_dict(spec.to_dict())
    assert back == spec


# ---------------------------------------------------------------------------
# samples


def test_solid_sample_no_distractor():
    spec = StyleSpec(style="solid", palette=((0.8, 0.1, 0.1),))
    sample = make_sample(TypeLabel.TOP, style=spec, seed=21,
                         include_distractor=False)
    mask = sample.uv_mask.data[:, :, 0] > 0.5
    inside = sample.uv_texture.data[mask]
    assert np.allclose(inside, [0.8, 0.1, 0.1], atol=1e-5)
    # the reference shows the garment in that color somewhere
    ref = sample.reference_image.data.reshape(-1, 3)
    hits = np.abs(ref - np.array([0.8, 0.1, 0.1])).max(axis=1) < 0.02
    assert hits.sum() > 20


def test_sample_background_conventions():
    sample = make_sample(TypeLabel.BOTTOM, seed=22)
    outside = sample.uv_mask.data[:, :, 0] == 0.0
    assert np.all(sample.uv_texture.data[outside] == BACKGROUND_FILL)
    assert np.all(sample.uv_position.data[outside] == 0.0)


def test_sample_mask_equals_bake_mask():
    record = generate_record(TypeLabel.TOP, seed=23)
    _, mask = bake_position_map(record.mesh, record.sample.resolution)
    assert np.array_equal(record.sample.uv_mask.data, mask.data)


def test_distractor_included_and_distinct():
    record = generate_record(TypeLabel.BOTTOM, seed=24)
    assert record.distractor_label is TypeLabel.TOP
    target_primary = np.asarray(record.style.palette[0])
    dist_primary = np.asarray(record.distractor_style.palette[0])
    assert np.linalg.norm(target_primary - dist_primary) >= 0.45
    # both garments visible: reference contains pixels near both primaries
    ref = record.sample.reference_image.data.reshape(-1, 3)
    if record.distractor_style.style == "solid":
        hits = np.abs(ref - dist_primary).max(axis=1) < 0.05
        assert hits.sum() > 5


def test_ground_truth_seam_consistency():
    for seed, label in [(30, TypeLabel.TOP), (31, TypeLabel.BOTTOM),
                        (32, TypeLabel.ONEPIECE)]:
        record = generate_record(label, seed=seed)
        report = seam_consistency(record.sample.uv_texture, record.mesh)
        assert report.applicable
        assert report.mean < 2.0 / record.sample.resolution


def test_generate_record_deterministic():
    a = generate_record(TypeLabel.ONEPIECE, seed=25)
    b = generate_record(TypeLabel.ONEPIECE, seed=25)
    for grid in ("reference_image", "uv_texture", "uv_position", "uv_mask"):
        assert np.array_equal(getattr(a.sample, grid).data,
                              getattr(b.sample, grid).data)
    assert np.array_equal(a.ref_garment_mask, b.ref_garment_mask)


# ---------------------------------------------------------------------------
# dataset


def test_build_dataset_three_samples(tmp_path):
    manifest = build_dataset(3, tmp_path / "data", seed=1, resolution=32,
                             previews=False)
    entries = read_manifest(manifest)
    assert [e["label"] for e in entries] == ["Top", "Bottom", "Onepiece"]
    for entry in entries:
        record = load_dataset_record(manifest, entry)
        assert record.sample.label.value == entry["label"]
        assert record.sample.seed == entry["seed"]


def test_build_dataset_rebuild_identical(tmp_path):
    m1 = build_dataset(4, tmp_path / "a", seed=9, resolution=32, previews=True)
    m2 = build_dataset(4, tmp_path / "b", seed=9, resolution=32, previews=True)
    for entry in read_manifest(m1):
        d1 = m1.parent / entry["dir"]
        d2 = m2.parent / entry["dir"]
        for f in sorted(p.name for p in d1.iterdir()):
            assert (d1 / f).read_bytes() == (d2 / f).read_bytes(), f
    assert m1.read_bytes() == m2.read_bytes()


def test_build_dataset_thread_invariant(tmp_path):
    m1 = build_dataset(4, tmp_path / "a", seed=2, resolution=32, previews=False)
    m2 = build_dataset(4, tmp_path / "b", seed=2, resolution=32, previews=False,
                       threads=3)
    for entry in read_manifest(m1):
        d1, d2 = m1.parent / entry["dir"], m2.parent / entry["dir"]
        for f in sorted(p.name for p in d1.iterdir()):
            assert (d1 / f).read_bytes() == (d2 / f).read_bytes(), f


def test_label_balance_round_robin(tmp_path):
    manifest = build_dataset(8, tmp_path / "data", seed=3, resolution=32,
                             previews=False)
    entries = read_manifest(manifest)
    counts = {lab.value: 0 for lab in TypeLabel}
    for e in entries:
        counts[e["label"]] += 1
    values = sorted(counts.values())
    assert values[-1] - values[0] <= 1


def test_save_load_record_roundtrip(tmp_path):
    record = generate_record(TypeLabel.TOP, seed=26, resolution=32)
    save_record(record, tmp_path / "s", previews=False)
    back = load_record(tmp_path / "s")
    assert back.sample.label is TypeLabel.TOP
    assert np.array_equal(back.sample.uv_texture.data, record.sample.uv_texture.data)
    assert np.array_equal(back.mesh.positions, record.mesh.positions)
    assert back.style == record.style
    assert back.distractor_style == record.distractor_style
    assert np.array_equal(back.ref_garment_mask, record.ref_garment_mask)
