import logging
import os

import numpy as np
import pytest

from regnet.data import (
    Dataset,
    LabeledSample,
    SynthParams,
    center_crop,
    crop_factor,
    generate_synthetic,
    identity_templates,
    load_dataset,
    make_enrollment,
    random_crop,
    read_image,
    save_dataset,
    shift_image,
)
from regnet.exceptions import DatasetFormatError, DegenerateDatasetError, DimensionError


def corr(a, b):
    return float(np.corrcoef(a.ravel(), b.ravel())[0, 1])


def test_nuisance_free_samples_equal_templates():
    p = SynthParams(n_identities=3, samples_per_identity=4, illumination=(1, 1), noise_sigma=0)
    pool = generate_synthetic(p)
    templates = identity_templates(p)
    for s in pool.samples:
        np.testing.assert_array_equal(s.image[0], templates[s.identity_id])


def test_generation_deterministic():
    p = SynthParams(n_identities=4, samples_per_identity=5, shift_max=2)
    a, b = generate_synthetic(p), generate_synthetic(p)
    assert a.images.tobytes() == b.images.tobytes()
    assert a.identities.tolist() == b.identities.tolist()
    assert generate_synthetic(SynthParams(n_identities=4, samples_per_identity=5, seed=8)).images.tobytes() != a.images.tobytes()


@pytest.mark.parametrize("seed", [7, 0, 1, 2, 3])
def test_identity_separability(seed):
    p = SynthParams(n_identities=10, seed=seed)
    pool = generate_synthetic(p)
    templates = identity_templates(p)
    for ident in range(10):
        mean = pool.images[pool.identities == ident].mean(axis=0)[0]
        assert corr(mean, templates[ident]) > 0.9
    for i in range(10):
        for j in range(i + 1, 10):
            assert abs(corr(templates[i], templates[j])) < 0.5


def test_values_in_unit_range():
    pool = generate_synthetic(SynthParams(n_identities=3, samples_per_identity=20, noise_sigma=0.5, shift_max=2))
    assert pool.images.min() >= 0 and pool.images.max() <= 1
    assert pool.labels.tolist() == [int(i == 0) for i in pool.identities]


def test_shift_zero_fills():
    img = np.arange(1.0, 10).reshape(3, 3)
    np.testing.assert_array_equal(shift_image(img, 1, -1), [[0, 0, 0], [2, 3, 0], [5, 6, 0]])


@pytest.mark.parametrize(
    "kwargs", [dict(noise_sigma=-0.1), dict(illumination=(1.2, 0.8)), dict(shift_max=4)]
)
def test_synth_params_validation(kwargs):
    with pytest.raises(ValueError):
        SynthParams(**kwargs)


# splitting


@pytest.fixture(scope="module")
def pool():
    return generate_synthetic(SynthParams())


def test_enrollment_split_shape(pool):
    train, calib, test = make_enrollment(pool, 0, 3)
    assert (train.split_tag, calib.split_tag, test.split_tag) == ("train", "calibration", "test")
    assert (len(train), len(calib), len(test)) == (248, 62, 130)
    assert (train.labels.sum(), calib.labels.sum(), test.labels.sum()) == (24, 6, 10)


def test_unseen_impostors(pool):
    train, calib, test = make_enrollment(pool, 0, 3)
    seen = set(train.identities) | set(calib.identities)
    unseen = set(test.identities[test.labels == 0])
    assert len(unseen) == 3 and not unseen & seen
    assert set(test.identities) - {0} == unseen


def test_splits_partition_pool(pool):
    for holdout in (0, 3):
        parts = make_enrollment(pool, 0, holdout)
        ids = [id(s.image) for part in parts for s in part.samples]
        assert sorted(ids) == sorted(id(s.image) for s in pool.samples)


def test_holdout_zero_warns(pool, caplog):
    with caplog.at_level(logging.WARNING):
        train, _, test = make_enrollment(pool, 0, 0)
    assert "held-out" in caplog.text
    assert set(test.identities[test.labels == 0]) <= set(train.identities)


def test_calib_fraction_arithmetic():
    # 27 authorized -> 7 test + 20 train; 6 impostors x 16, one held out -> 80 train
    samples = [LabeledSample(np.zeros((1, 2, 2)), 0, i % 6 + 1) for i in range(96)]
    samples += [LabeledSample(np.zeros((1, 2, 2)), 1, 0) for _ in range(27)]
    train, calib, test = make_enrollment(Dataset(samples), 0, 1, calib_fraction=0.2, test_fraction=0.25)
    assert len(train) + len(calib) == 100
    assert (len(train), len(calib)) == (80, 20)
    assert (train.labels.sum(), calib.labels.sum()) == (16, 4)


def test_splits_deterministic(pool):
    a = make_enrollment(pool, 0, 3, seed=5)
    b = make_enrollment(pool, 0, 3, seed=5)
    for x, y in zip(a, b):
        assert x.images.tobytes() == y.images.tobytes()


def test_split_errors(pool):
    with pytest.raises(DegenerateDatasetError):
        make_enrollment(pool, 99, 3)
    with pytest.raises(DegenerateDatasetError):
        make_enrollment(pool, 0, 10)


# crops


def test_crop_factors():
    assert crop_factor((192, 168), (184, 160)) == 81
    assert crop_factor((202, 149), (186, 133)) == 289


def test_full_crop_is_identity():
    img = np.random.default_rng(0).uniform(size=(1, 5, 4))
    np.testing.assert_array_equal(random_crop(img, (5, 4), np.random.default_rng(1)), img)


def test_random_crop_uniform_and_deterministic():
    img = np.arange(36.0).reshape(1, 6, 6)
    crops = [random_crop(img, (4, 4), np.random.default_rng(3))[0, 0, 0] for _ in range(2)]
    assert crops[0] == crops[1]
    rng = np.random.default_rng(0)
    corners = [random_crop(img, (4, 4), rng)[0, 0, 0] for _ in range(9000)]
    counts = np.unique(corners, return_counts=True)[1]
    assert len(counts) == crop_factor((6, 6), (4, 4)) == 9
    assert np.all(np.abs(counts - 1000) < 4 * np.sqrt(1000 * 8 / 9))


def test_crop_too_large():
    with pytest.raises(DimensionError):
        random_crop(np.zeros((1, 4, 4)), (5, 4), np.random.default_rng(0))


def test_center_crop():
    img = np.arange(25.0).reshape(1, 1, 5, 5)
    np.testing.assert_array_equal(center_crop(img, (3, 3))[0, 0], img[0, 0, 1:4, 1:4])


# disk format


def test_round_trip(tmp_path):
    pool = generate_synthetic(SynthParams(n_identities=3, samples_per_identity=4))
    save_dataset(pool, tmp_path)
    back = load_dataset(tmp_path)
    assert np.max(np.abs(back.images - pool.images)) <= 1 / 255 / 2 + 1e-12
    assert back.labels.tolist() == pool.labels.tolist()
    assert back.identities.tolist() == pool.identities.tolist()


def test_image_file_layout(tmp_path):
    img = np.zeros((1, 2, 3))
    img[0, 1, 2] = 1.0
    pool = Dataset([LabeledSample(img, 1, 4)])
    save_dataset(pool, tmp_path)
    assert (tmp_path / "manifest.txt").read_text() == "img_00000.raw 4 1\n"
    assert (tmp_path / "img_00000.raw").read_bytes() == b"P5-like: 3 2 1\n" + bytes([0, 0, 0, 0, 0, 255])
    np.testing.assert_array_equal(read_image(tmp_path / "img_00000.raw"), img)


def write_manifest(path, text):
    os.makedirs(path, exist_ok=True)
    (path / "manifest.txt").write_text(text)


def test_duplicate_manifest_entry(tmp_path):
    save_dataset(Dataset([LabeledSample(np.zeros((1, 2, 2)), 0, 1)]), tmp_path)
    write_manifest(tmp_path, "img_00000.raw 1 0\nimg_00000.raw 1 0\n")
    with pytest.raises(DatasetFormatError, match=":2: duplicate"):
        load_dataset(tmp_path)


def test_malformed_line_reports_line_number(tmp_path):
    save_dataset(Dataset([LabeledSample(np.zeros((1, 2, 2)), 0, 1)]), tmp_path)
    write_manifest(tmp_path, "img_00000.raw 1 0\nimg_00000.raw one\n")
    with pytest.raises(DatasetFormatError, match=":2:"):
        load_dataset(tmp_path)


def test_empty_manifest(tmp_path):
    write_manifest(tmp_path, "")
    with pytest.raises(DegenerateDatasetError):
        load_dataset(tmp_path)


def test_missing_file_named(tmp_path):
    write_manifest(tmp_path, "ghost.raw 1 0\n")
    with pytest.raises(FileNotFoundError, match="ghost.raw"):
        load_dataset(tmp_path)


def test_truncated_image(tmp_path):
    (tmp_path / "x.raw").write_bytes(b"P5-like: 2 2 1\n\x00\x00")
    with pytest.raises(DatasetFormatError, match="expected 4"):
        read_image(tmp_path / "x.raw")
