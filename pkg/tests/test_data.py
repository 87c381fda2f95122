import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aesthete import data as D
from aesthete.autodiff import default_rng
from aesthete.model import ATTRIBUTE_NAMES


def scene(**overrides):
    base = dict(bg_hue=200.0, bg_sat=0.2, bg_val=0.4, shapes=[], blur=0.0, mirror=False, repetition=1, seed=0)
    base.update(overrides)
    return D.SceneSpec(**base)


def one_circle(area, cx=0.5, cy=0.5, sat=1.0, val=1.0, hue=0.0):
    return [D.Shape("circle", cx, cy, math.sqrt(area), hue, sat, val)]


# ---------------------------------------------------------------------------
# generation


def test_generate_scene_deterministic():
    a = D.generate_scene(default_rng([9, 3]))
    b = D.generate_scene(default_rng([9, 3]))
    assert a.to_dict() == b.to_dict()


def test_generated_scenes_satisfy_invariants():
    for i in range(200):
        spec = D.generate_scene(default_rng([1, i]))
        for s in spec.shapes:
            assert 0 <= s.cx <= 1 and 0 <= s.cy <= 1 and 0 <= s.size <= 1
        assert 0 <= spec.blur <= D.BLUR_MAX


def test_generation_covers_prompt_thresholds():
    areas = []
    for i in range(1000):
        spec = D.generate_scene(default_rng([3, i]))
        areas.append(min(1.0, sum(s.area for s in spec.shapes)))
    assert any(a < 1 / 9 for a in areas)
    assert any(a > 1 / 2 for a in areas)


# ---------------------------------------------------------------------------
# rendering


def test_render_empty_scene_uniform_background():
    img = D.render_scene(scene(), 32)
    assert img.shape == (32, 32, 3)
    assert np.allclose(img, img[0, 0], atol=1e-6)


def test_render_mirror_flag_exact():
    spec = scene(
        shapes=[
            D.Shape("triangle", 0.3, 0.4, 0.25, 120, 0.8, 0.9),
            D.Shape("triangle", 0.7, 0.4, 0.25, 120, 0.8, 0.9),
        ],
        mirror=True,
        blur=0.01,
    )
    img = D.render_scene(spec, 64)
    np.testing.assert_array_equal(img, img[:, ::-1])


@pytest.mark.parametrize("area", [0.05, 0.2, 0.4])
def test_render_circle_pixel_count(area):
    # white circle on black: a pixel reads as painted once majority-covered
    spec = scene(bg_sat=0.0, bg_val=0.0, shapes=one_circle(area, sat=0.0, val=1.0))
    img = D.render_scene(spec, 64)
    painted = int((img.mean(axis=2) > 0.5).sum())
    assert painted == pytest.approx(area * 64 * 64, rel=0.05)


def test_render_deterministic():
    spec = D.generate_scene(default_rng([5, 5]))
    np.testing.assert_array_equal(D.render_scene(spec, 64), D.render_scene(spec, 64))


# ---------------------------------------------------------------------------
# oracle


def attr(vec, name):
    return vec[ATTRIBUTE_NAMES.index(name)]


def test_oracle_object_peak_at_quarter_area():
    _, v = D.oracle_scores(scene(shapes=one_circle(0.25)))
    assert attr(v, "object") == pytest.approx(1.0)
    _, v = D.oracle_scores(scene(shapes=one_circle(0.0625)))
    assert attr(v, "object") == pytest.approx(-1.0)  # clamp region


def test_oracle_vividness_endpoints():
    _, v = D.oracle_scores(scene(shapes=one_circle(0.1, sat=1.0)))
    assert attr(v, "color_vividness") == pytest.approx(1.0)
    _, v = D.oracle_scores(scene(shapes=one_circle(0.1, sat=0.5)))
    assert attr(v, "color_vividness") == pytest.approx(0.0)
    _, v = D.oracle_scores(scene(shapes=one_circle(0.1, sat=0.0)))
    assert attr(v, "color_vividness") == pytest.approx(-1.0)


def test_oracle_mirror_symmetry_is_one():
    spec = scene(shapes=one_circle(0.1, cx=0.5), mirror=True)
    _, v = D.oracle_scores(spec)
    assert attr(v, "symmetry") == 1.0


def test_oracle_rule_of_thirds_on_intersection():
    _, v = D.oracle_scores(scene(shapes=one_circle(0.05, cx=1 / 3, cy=1 / 3)))
    assert attr(v, "rule_of_thirds") == pytest.approx(1.0)


def test_oracle_pure_function():
    spec = D.generate_scene(default_rng([11, 0]))
    o1, v1 = D.oracle_scores(spec)
    o2, v2 = D.oracle_scores(spec)
    assert o1 == o2
    np.testing.assert_array_equal(v1, v2)


def test_oracle_scores_in_range():
    for i in range(100):
        overall, v = D.oracle_scores(D.generate_scene(default_rng([13, i])))
        assert -1.0 <= overall <= 1.0
        assert (v >= -1.0).all() and (v <= 1.0).all()


def test_oracle_vividness_monotone_in_saturation():
    prev = -2.0
    for sat in np.linspace(0, 1, 7):
        _, v = D.oracle_scores(scene(shapes=one_circle(0.1, sat=float(sat))))
        cur = attr(v, "color_vividness")
        assert cur > prev
        prev = cur


def test_oracle_object_monotone_toward_quarter():
    scores = []
    for area in (0.13, 0.17, 0.21, 0.25):
        _, v = D.oracle_scores(scene(shapes=one_circle(area)))
        scores.append(attr(v, "object"))
    assert scores == sorted(scores)


def test_oracle_motion_blur_monotone_in_blur():
    prev = 2.0
    for blur in np.linspace(0, D.BLUR_MAX, 6):
        _, v = D.oracle_scores(scene(shapes=one_circle(0.1), blur=float(blur)))
        cur = attr(v, "motion_blur")
        assert cur < prev or (cur == prev == -1.0)
        prev = cur


def test_oracle_overall_is_hue_band_mixture():
    for hue, band in ((30.0, 0), (150.0, 1), (300.0, 2)):
        spec = scene(bg_hue=hue, shapes=one_circle(0.2, sat=0.7))
        overall, v = D.oracle_scores(spec)
        assert overall == pytest.approx(float(D.HUE_BAND_WEIGHTS[band] @ v))
        assert D.HUE_BAND_WEIGHTS[band].sum() == pytest.approx(1.0)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_oracle_range_property(i):
    overall, v = D.oracle_scores(D.generate_scene(default_rng([99, i])))
    assert -1.0 <= overall <= 1.0
    assert (np.abs(v) <= 1.0).all()


# ---------------------------------------------------------------------------
# manifest I/O


@pytest.fixture(scope="module")
def dataset_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("ds")
    D.write_dataset(out, 12, seed=21, size=32)
    return out


def test_manifest_round_trip(dataset_dir):
    samples = D.load_manifest(dataset_dir / "manifest.csv")
    assert len(samples) == 12
    for i, s in enumerate(samples):
        spec = D.generate_scene(default_rng([21, i]))
        overall, attrs = D.oracle_scores(spec)
        assert s.y_overall == pytest.approx(overall, abs=1e-6)
        np.testing.assert_allclose(s.y_attributes, attrs, atol=1e-6)
        assert s.image.shape == (32, 32, 3)
        assert s.spec is not None  # sidecar provenance came along


def test_manifest_deterministic_bytes(tmp_path):
    a = tmp_path / "a"
    b = tmp_path / "b"
    D.write_dataset(a, 5, seed=7, size=32)
    D.write_dataset(b, 5, seed=7, size=32)
    assert (a / "manifest.csv").read_bytes() == (b / "manifest.csv").read_bytes()
    assert (a / "images/img_00000.png").read_bytes() == (b / "images/img_00000.png").read_bytes()


def test_manifest_out_of_range_score_names_row(dataset_dir, tmp_path):
    lines = (dataset_dir / "manifest.csv").read_text().splitlines()
    parts = lines[3].split(",")
    parts[1] = "1.5"
    lines[3] = ",".join(parts)
    bad = tmp_path / "manifest.csv"
    bad.write_text("\n".join(lines) + "\n")
    (tmp_path / "images").symlink_to(dataset_dir / "images")
    with pytest.raises(ValueError, match="row 4"):
        D.load_manifest(bad)


def test_manifest_missing_image(tmp_path):
    bad = tmp_path / "manifest.csv"
    bad.write_text(",".join(D.MANIFEST_HEADER) + "\n" + "images/nope.png" + ",0" * 12 + "\n")
    with pytest.raises(FileNotFoundError):
        D.load_manifest(bad)


def test_manifest_header_mismatch(tmp_path):
    bad = tmp_path / "manifest.csv"
    bad.write_text("path,overall\n")
    with pytest.raises(ValueError, match="header"):
        D.load_manifest(bad)


def test_load_resizes_and_normalizes(dataset_dir):
    samples = D.load_manifest(dataset_dir / "manifest.csv", image_size=16)
    assert samples[0].image.shape == (16, 16, 3)
    assert samples[0].image.min() >= 0.0 and samples[0].image.max() <= 1.0


def test_downscale_of_constant_image_is_identity(tmp_path):
    from PIL import Image

    arr = np.full((32, 32, 3), 87, dtype=np.uint8)
    p = tmp_path / "const.png"
    Image.fromarray(arr).save(p)
    loaded = D._load_image(p, 16)
    np.testing.assert_allclose(loaded, 87 / 255.0, atol=1e-7)


# ---------------------------------------------------------------------------
# split


def test_split_sizes_and_determinism():
    samples = list(range(100))
    train, val = D.split(samples, 0.8, seed=3)
    assert len(train) == 80 and len(val) == 20
    train2, val2 = D.split(samples, 0.8, seed=3)
    assert train == train2 and val == val2


def test_split_union_is_original_multiset():
    samples = list(range(37))
    train, val = D.split(samples, 0.6, seed=5)
    assert sorted(train + val) == samples
    assert not set(train) & set(val)


def test_split_rejects_empty_side():
    with pytest.raises(ValueError):
        D.split([1, 2], 0.01, seed=0)
    with pytest.raises(ValueError):
        D.split(list(range(10)), 1.5, seed=0)
