import numpy as np
import pytest

from uvtex.grids import ImageGrid
from uvtex.metrics import (EvalReport, patch_stats_distance, ref_alignment,
                           seam_consistency)
from uvtex.synthdata import (StyleSpec, TypeLabel, field_from_spec,
                             generate_record, make_cylinder_shell)


@pytest.fixture(scope="module")
def cylinder():
    return make_cylinder_shell()


@pytest.fixture(scope="module")
def record():
    return generate_record(TypeLabel.TOP, seed=95, resolution=64)


# ---------------------------------------------------------------------------
# seam consistency


def test_seam_solid_exactly_zero(cylinder):
    solid = ImageGrid.constant(64, 64, (0.3, 0.6, 0.1), "rgb")
    rep = seam_consistency(solid, cylinder)
    assert rep.applicable
    assert rep.mean == 0.0
    assert rep.max == 0.0


def test_seam_random_above_baseline(cylinder):
    rng = np.random.default_rng(0)
    rand = ImageGrid(rng.random((64, 64, 3), dtype=np.float32), "rgb")
    rep = seam_consistency(rand, cylinder)
    assert rep.mean > 0.2


def test_seam_ground_truth_below_bound(record):
    rep = seam_consistency(record.sample.uv_texture, record.mesh)
    assert rep.applicable
    assert rep.mean < 2.0 / 64


def test_seam_not_applicable_without_seams():
    from uvtex.geometry import Mesh

    mesh = Mesh([[0, 0, 0], [1, 0, 0], [0, 1, 0]],
                [[0.2, 0.2], [0.8, 0.2], [0.2, 0.8]],
                [[(0, 0), (1, 1), (2, 2)]])
    rep = seam_consistency(ImageGrid.constant(32, 32, 0.5, "rgb"), mesh)
    assert not rep.applicable
    assert rep.mean is None


def test_seam_zero_iff_samples_agree(cylinder):
    # recolor one chart region only: seams must light up
    tex = np.full((64, 64, 3), 0.5, dtype=np.float32)
    tex[:, :32] = 0.9
    rep = seam_consistency(ImageGrid(tex, "rgb"), cylinder)
    assert rep.mean > 0.0


# ---------------------------------------------------------------------------
# reference alignment


def test_ref_alignment_ground_truth(record):
    align = ref_alignment(record.sample.uv_texture, record)
    assert align.class_match
    assert align.color_error < 0.02


def test_ref_alignment_distractor_texture_mismatch(record):
    # bake the distractor's field onto the target's charts
    mask = record.sample.uv_mask.data
    pos = record.sample.uv_position.data.astype(np.float64)
    colors = np.clip(field_from_spec(record.distractor_style)(pos), 0, 1)
    fake = ImageGrid((colors * mask).astype(np.float32), "rgb")
    align = ref_alignment(fake, record)
    assert not align.class_match
    assert align.distractor_error < align.color_error


def test_ref_alignment_nearby_solid_matches():
    spec = StyleSpec(style="solid", palette=((0.7, 0.2, 0.2),))
    record = generate_record(TypeLabel.BOTTOM, seed=96, style=spec)
    mask = record.sample.uv_mask.data
    shifted = np.clip(record.sample.uv_texture.data + 0.05 * mask, 0, 1)
    align = ref_alignment(ImageGrid(shifted, "rgb"), record)
    assert align.class_match
    assert align.color_error < 0.1


# ---------------------------------------------------------------------------
# patch statistics distance


def grids_from(rng, n, color=None):
    out = []
    for _ in range(n):
        if color is None:
            out.append(ImageGrid(rng.random((32, 32, 3), dtype=np.float32), "rgb"))
        else:
            out.append(ImageGrid.constant(32, 32, color, "rgb"))
    return out


def test_patch_stats_identical_sets_zero():
    rng = np.random.default_rng(1)
    a = grids_from(rng, 4)
    assert patch_stats_distance(a, list(a)) == 0.0


def test_patch_stats_symmetric():
    rng = np.random.default_rng(2)
    a = grids_from(rng, 4)
    b = grids_from(rng, 4)
    assert patch_stats_distance(a, b) == patch_stats_distance(b, a)


def test_patch_stats_solid_color_lower_bound():
    rng = np.random.default_rng(3)
    red = grids_from(rng, 3, color=(1.0, 0.0, 0.0))
    blue = grids_from(rng, 3, color=(0.0, 0.0, 1.0))
    d = patch_stats_distance(red, blue)
    # mean color gap contributes 1^2 + 1^2 to the squared-mean term
    assert d >= 2.0


def test_patch_stats_needs_two_textures():
    rng = np.random.default_rng(4)
    with pytest.raises(ValueError):
        patch_stats_distance(grids_from(rng, 1), grids_from(rng, 3))


def test_patch_stats_ordering_noise_levels():
    rng = np.random.default_rng(5)
    base = [ImageGrid(np.clip(rng.random((32, 32, 3)) * 0.2 + 0.4, 0, 1)
                      .astype(np.float32), "rgb") for _ in range(4)]
    near = [ImageGrid(np.clip(g.data + rng.normal(0, 0.02, g.data.shape)
                              .astype(np.float32), 0, 1), "rgb") for g in base]
    far = [ImageGrid(rng.random((32, 32, 3), dtype=np.float32), "rgb")
           for _ in range(4)]
    assert patch_stats_distance(base, near) < patch_stats_distance(base, far)


def test_eval_report_validation():
    with pytest.raises(ValueError):
        EvalReport(n_samples=1, seam_mean=-0.1, seam_max=0.0,
                   class_match_rate=1.0, ref_color_error=0.0,
                   distractor_color_error=0.0, patch_stats=0.0,
                   cross_half_mass=0.5, attention_localization=0.5)
