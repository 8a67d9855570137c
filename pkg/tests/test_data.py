"""Dataset loading, preprocessing, augmentation and splitting."""

import numpy as np
import pytest

from conftest import write_png_dataset
from lfranet.data import (
    DATASET_SPECS,
    Sample,
    adjust_contrast,
    augment,
    load_dataset,
    preprocess,
    rotate_sample,
    split_train_val,
)
from lfranet.errors import DatasetError, MissingPairError, TooFewSamplesError
from lfranet.synthetic import make_dataset, make_vessel_sample


@pytest.fixture
def fixture_root(tmp_path):
    write_png_dataset(tmp_path, make_dataset(3, size=48, seed=0))
    return tmp_path


class TestLoad:
    def test_three_pair_fixture(self, fixture_root):
        samples = load_dataset(fixture_root)
        assert [s.id for s in samples] == ["sample_00", "sample_01", "sample_02"]
        for s in samples:
            assert s.image.shape == (3, 48, 48)
            assert s.mask.shape == (1, 48, 48)
            assert set(np.unique(s.mask)) <= {0.0, 1.0}
            assert s.fov is not None and s.fov.shape == (1, 48, 48)
            assert s.image.min() >= 0.0 and s.image.max() <= 1.0

    def test_empty_directory_warns(self, tmp_path, caplog):
        (tmp_path / "images").mkdir()
        (tmp_path / "masks").mkdir()
        with caplog.at_level("WARNING"):
            assert load_dataset(tmp_path) == []
        assert "no PNG images" in caplog.text

    def test_missing_mask_names_stem(self, fixture_root):
        (fixture_root / "masks" / "sample_01.png").unlink()
        with pytest.raises(MissingPairError, match="sample_01"):
            load_dataset(fixture_root)

    def test_missing_image_names_stem(self, fixture_root):
        (fixture_root / "images" / "sample_02.png").unlink()
        with pytest.raises(MissingPairError, match="sample_02"):
            load_dataset(fixture_root)

    def test_unreadable_file_rejected(self, fixture_root):
        (fixture_root / "images" / "sample_00.png").write_bytes(b"not a png")
        with pytest.raises(DatasetError, match="unreadable"):
            load_dataset(fixture_root)


class TestPreprocess:
    def test_resize_to_512(self):
        s = Sample("a", np.zeros((3, 584, 565), np.float32), np.zeros((1, 584, 565), np.float32))
        out = preprocess(s, 512)
        assert out.image.shape == (3, 512, 512) and out.mask.shape == (1, 512, 512)

    def test_identity_size_keeps_values(self, rng):
        img = rng.random((3, 64, 64), dtype=np.float32)
        mask = (rng.random((1, 64, 64)) > 0.5).astype(np.float32)
        out = preprocess(Sample("a", img, mask), 64)
        assert np.allclose(out.image, img, atol=1e-6)
        assert np.array_equal(out.mask, mask)

    def test_mask_stays_binary_after_resize(self, rng):
        mask = (rng.random((1, 97, 91)) > 0.5).astype(np.float32)
        out = preprocess(Sample("a", rng.random((3, 97, 91), dtype=np.float32), mask), 64)
        assert set(np.unique(out.mask)) <= {0.0, 1.0}


class TestAugment:
    def test_identity_when_target_equals_input(self):
        samples = make_dataset(4, size=32)
        assert augment(samples, 4, seed=0) == samples

    def test_reaches_reference_counts(self):
        samples = make_dataset(20, size=24, seed=0)
        out = augment(samples, 1080, seed=0)
        assert len(out) == 1080
        assert len({s.id for s in out}) == 1080

    def test_deterministic_under_seed(self):
        samples = make_dataset(3, size=24, seed=0)
        a = augment(samples, 11, seed=5)
        b = augment(samples, 11, seed=5)
        for sa, sb in zip(a, b):
            assert sa.id == sb.id and np.array_equal(sa.image, sb.image)
            assert np.array_equal(sa.mask, sb.mask)

    def test_originals_not_mutated(self):
        samples = make_dataset(2, size=24, seed=0)
        before = [(s.image.copy(), s.mask.copy()) for s in samples]
        augment(samples, 9, seed=1)
        for s, (img, mask) in zip(samples, before):
            assert np.array_equal(s.image, img) and np.array_equal(s.mask, mask)

    def test_target_below_input_rejected(self):
        with pytest.raises(ValueError):
            augment(make_dataset(3, size=24), 2, seed=0)

    def test_rotation_round_trip_constant_interior(self):
        s = Sample("c", np.full((3, 64, 64), 0.6, np.float32), np.zeros((1, 64, 64), np.float32))
        back = rotate_sample(rotate_sample(s, 20.0, "r1"), -20.0, "r2")
        interior = back.image[:, 20:44, 20:44]
        assert np.allclose(interior, 0.6, atol=1e-4)

    def test_contrast_leaves_masks_untouched(self):
        s = make_vessel_sample(32, seed=0)
        out = adjust_contrast(s, 1.2, "c")
        assert np.array_equal(out.mask, s.mask)
        assert not np.array_equal(out.image, s.image)

    def test_sample_invariants_hold_for_augmented(self):
        out = augment(make_dataset(2, size=24, seed=0), 8, seed=2)
        for s in out:
            assert s.image.shape[0] == 3 and s.mask.shape[0] == 1
            assert s.image.shape[1:] == s.mask.shape[1:]
            assert np.isfinite(s.image).all()
            assert 0.0 <= s.image.min() and s.image.max() <= 1.0
            assert set(np.unique(s.mask)) <= {0.0, 1.0}


class TestSplit:
    def test_eight_two(self):
        train, val = split_train_val(make_dataset(10, size=16), 0.8, seed=0)
        assert len(train) == 8 and len(val) == 2

    def test_partition_exact_and_disjoint(self):
        samples = make_dataset(7, size=16)
        train, val = split_train_val(samples, 0.8, seed=3)
        got = {s.id for s in train} | {s.id for s in val}
        assert got == {s.id for s in samples}
        assert not ({s.id for s in train} & {s.id for s in val})

    def test_same_seed_same_split(self):
        samples = make_dataset(9, size=16)
        a = split_train_val(samples, 0.8, seed=4)
        b = split_train_val(samples, 0.8, seed=4)
        assert [s.id for s in a[0]] == [s.id for s in b[0]]

    def test_too_few_samples(self):
        with pytest.raises(TooFewSamplesError):
            split_train_val(make_dataset(1, size=16), 0.8, seed=0)


def test_dataset_specs_carry_reference_values():
    assert DATASET_SPECS["drive"].augmented_count == 1080
    assert DATASET_SPECS["stare"].augmented_count == 1024
    assert DATASET_SPECS["chase"].augmented_count == 1080
    assert all(s.target_size == 512 for s in DATASET_SPECS.values())
    assert (DATASET_SPECS["drive"].train_count, DATASET_SPECS["drive"].test_count) == (20, 20)
    assert (DATASET_SPECS["stare"].train_count, DATASET_SPECS["stare"].test_count) == (16, 4)
    assert (DATASET_SPECS["chase"].train_count, DATASET_SPECS["chase"].test_count) == (20, 8)
