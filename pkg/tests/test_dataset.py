import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hybridtune.dataset import (
    WASTE_CATALOG,
    ClassCatalog,
    LabeledImage,
    as_arrays,
    load_directory_dataset,
    manifest_text,
    parse_manifest,
    read_catalog,
    resize_array,
    resize_bilinear,
    split_sizes,
    stratified_split,
    synthesize_dataset,
    write_directory_dataset,
)
from hybridtune.errors import ConfigurationError, DataError, DatasetFormatError
from hybridtune.ppm import decode_ppm, encode_ppm, read_ppm, to_uint8, write_ppm

from oracles import nearest_centroid_accuracy


def fake_images(counts, h=2, w=2):
    out = []
    for label, n in enumerate(counts):
        for i in range(n):
            out.append(LabeledImage(np.full((3, h, w), (label + 1) / 10, np.float32), label, f"c{label}/{i:04d}"))
    return out


def write_pixel(path, value):
    path.write_bytes(encode_ppm(np.full((1, 1, 3), value, np.uint8)))


class TestPPM:
    def test_round_trip(self, tmp_path):
        rgb = np.random.default_rng(0).integers(0, 256, (5, 7, 3), dtype=np.uint8)
        p = tmp_path / "a.ppm"
        p.write_bytes(encode_ppm(rgb))
        px = read_ppm(p)
        assert px.shape == (3, 5, 7) and px.dtype == np.float32
        assert np.array_equal(to_uint8(px), rgb)

    def test_header_comments(self):
        buf = b"P6\n# made by hand\n2 1\n255\n" + bytes([0, 128, 255, 1, 2, 3])
        assert decode_ppm(buf).tolist() == [[[0, 128, 255], [1, 2, 3]]]

    @pytest.mark.parametrize("buf", [b"P3\n1 1\n255\n0 0 0", b"P6\n1 1\n65535\n" + b"\0" * 6, b"P6\n2 2\n255\n" + b"\0" * 5])
    def test_malformed(self, buf):
        with pytest.raises(DatasetFormatError):
            decode_ppm(buf)


class TestLoad:
    def test_two_classes_lexicographic(self, tmp_path):
        for cls in ("b", "a"):
            (tmp_path / cls).mkdir()
            for name in ("z.ppm", "m.ppm", "c.ppm"):
                write_pixel(tmp_path / cls / name, 255)
        imgs = load_directory_dataset(tmp_path, ["a", "b"])
        assert [im.source_id for im in imgs] == ["a/c.ppm", "a/m.ppm", "a/z.ppm", "b/c.ppm", "b/m.ppm", "b/z.ppm"]
        assert [im.label for im in imgs] == [0, 0, 0, 1, 1, 1]
        assert all(im.pixels.max() == 1.0 for im in imgs)

    def test_empty_class_directory(self, tmp_path):
        (tmp_path / "a").mkdir()
        (tmp_path / "b").mkdir()
        write_pixel(tmp_path / "a" / "x.ppm", 0)
        imgs = load_directory_dataset(tmp_path, ["a", "b"])
        assert len(imgs) == 1 and imgs[0].label == 0

    def test_unknown_directory_warns(self, tmp_path, caplog):
        (tmp_path / "a").mkdir()
        (tmp_path / "stray").mkdir()
        write_pixel(tmp_path / "a" / "x.ppm", 0)
        with caplog.at_level(logging.WARNING):
            imgs = load_directory_dataset(tmp_path, ["a"])
        assert len(imgs) == 1
        assert "stray" in caplog.text

    def test_malformed_lists_paths(self, tmp_path):
        (tmp_path / "a").mkdir()
        (tmp_path / "a" / "bad1.ppm").write_bytes(b"P5\n")
        (tmp_path / "a" / "bad2.ppm").write_bytes(b"garbage")
        write_pixel(tmp_path / "a" / "ok.ppm", 3)
        with pytest.raises(DatasetFormatError) as info:
            load_directory_dataset(tmp_path, ["a"])
        assert "bad1.ppm" in str(info.value) and "bad2.ppm" in str(info.value)
        assert info.value.exit_code == 3

    def test_missing_root(self, tmp_path):
        with pytest.raises(DataError):
            load_directory_dataset(tmp_path / "nope", ["a"])

    def test_full_waste_layout_count(self, tmp_path):
        # directory counts summing to the stated total; the loader only reports what it finds
        counts = dict(zip(WASTE_CATALOG, (403, 501, 410, 594, 482, 137)))
        blob = encode_ppm(np.zeros((1, 1, 3), np.uint8))
        for name, n in counts.items():
            (tmp_path / name).mkdir()
            for i in range(n):
                (tmp_path / name / f"{name}{i}.ppm").write_bytes(blob)
        imgs = load_directory_dataset(tmp_path, WASTE_CATALOG)
        assert len(imgs) == 2527
        assert np.bincount([im.label for im in imgs]).tolist() == list(counts.values())

    def test_catalog_file_and_round_trip(self, tmp_path):
        imgs, cat = synthesize_dataset("target", 2, (8, 8), 3)
        write_directory_dataset(tmp_path, imgs, cat)
        assert read_catalog(tmp_path) == cat
        back = load_directory_dataset(tmp_path, cat)
        assert len(back) == 12
        for a, b in zip(imgs, back):
            assert a.label == b.label
            assert np.abs(a.pixels - b.pixels).max() <= 0.5 / 255 + 1e-7

    def test_catalog_from_sorted_dirs(self, tmp_path):
        for n in ("plastic", "glass"):
            (tmp_path / n).mkdir()
        assert read_catalog(tmp_path).names == ("glass", "plastic")


class TestCatalog:
    def test_canonical_order(self):
        assert WASTE_CATALOG == ("cardboard", "glass", "metal", "paper", "plastic", "other")

    @pytest.mark.parametrize("names", [(), ("a", "a"), ("a", "")])
    def test_invalid(self, names):
        with pytest.raises(ConfigurationError):
            ClassCatalog(names)


class TestSplit:
    def test_137(self):
        assert split_sizes(137) == (68, 34, 35)
        s = stratified_split(fake_images([137]), seed=0)
        assert (len(s.train), len(s.validation), len(s.test)) == (68, 34, 35)

    def test_4(self):
        assert split_sizes(4) == (2, 1, 1)

    def test_same_seed_same_membership(self):
        imgs = fake_images([20, 13])
        a, b = stratified_split(imgs, seed=5), stratified_split(imgs, seed=5)
        for part in ("train", "validation", "test"):
            assert [i.source_id for i in a.part(part)] == [i.source_id for i in b.part(part)]

    def test_different_seed_differs(self):
        imgs = fake_images([40])
        a, b = stratified_split(imgs, seed=1), stratified_split(imgs, seed=2)
        assert {i.source_id for i in a.train} != {i.source_id for i in b.train}

    def test_empty(self):
        with pytest.raises(ConfigurationError):
            stratified_split([], seed=0)

    def test_bad_ratios(self):
        with pytest.raises(ConfigurationError):
            stratified_split(fake_images([4]), ratios=(0.5, 0.5, 0.5))

    def test_manifest(self):
        cat = ClassCatalog(("x", "y"))
        s = stratified_split(fake_images([10, 5]), seed=0)
        m = parse_manifest(manifest_text(s, cat))
        assert m["train.x"] == "5" and m["validation.y"] == "1" and m["test.y"] == "2"
        assert m["total"] == "15" and m["split_seed"] == "0"

    @given(st.lists(st.integers(1, 40), min_size=1, max_size=6), st.integers(0, 2**32 - 1))
    @settings(max_examples=50, deadline=None)
    def test_partition_property(self, counts, seed):
        imgs = fake_images(counts)
        s = stratified_split(imgs, seed=seed)
        ids = [[i.source_id for i in p] for p in (s.train, s.validation, s.test)]
        sets = [set(p) for p in ids]
        assert sum(map(len, ids)) == len(imgs)
        assert not (sets[0] & sets[1] or sets[0] & sets[2] or sets[1] & sets[2])
        assert set().union(*sets) == {i.source_id for i in imgs}
        for label, n in enumerate(counts):
            got = tuple(sum(1 for i in p if i.label == label) for p in (s.train, s.validation, s.test))
            assert got == (n // 2, n // 4, n - n // 2 - n // 4)


class TestResize:
    def test_identity(self):
        px = np.random.default_rng(0).random((3, 5, 4)).astype(np.float32)
        assert np.array_equal(resize_array(px, 5, 4), px)

    def test_constant(self):
        px = np.full((3, 4, 4), 0.3, np.float32)
        np.testing.assert_allclose(resize_array(px, 7, 3), 0.3, atol=1e-7)

    def test_ramp_center_is_corner_mean(self):
        px = np.array([[[0.0, 0.2], [0.6, 1.0]]] * 3, np.float32)
        out = resize_array(px, 3, 3)
        assert out[0, 1, 1] == pytest.approx(0.45, abs=1e-7)
        assert out[0, 0, 0] == 0.0 and out[0, 2, 2] == 1.0

    def test_labeled_image(self):
        im = LabeledImage(np.zeros((3, 4, 4), np.float32), 2, "x")
        out = resize_bilinear(im, (2, 6))
        assert out.pixels.shape == (3, 2, 6) and out.label == 2

    def test_bad_target(self):
        with pytest.raises(ConfigurationError):
            resize_array(np.zeros((3, 2, 2), np.float32), 0, 3)


class TestSynthesize:
    def test_counts(self):
        imgs, cat = synthesize_dataset("source", 10, (32, 32), 1)
        assert len(imgs) == 60 and len(cat) == 6
        assert np.bincount([i.label for i in imgs]).tolist() == [10] * 6

    def test_deterministic(self):
        a, _ = synthesize_dataset("target", 3, (16, 16), 4)
        b, _ = synthesize_dataset("target", 3, (16, 16), 4)
        assert all(x.pixels.tobytes() == y.pixels.tobytes() for x, y in zip(a, b))

    def test_seed_matters(self):
        a, _ = synthesize_dataset("target", 1, (16, 16), 4)
        b, _ = synthesize_dataset("target", 1, (16, 16), 5)
        assert any(x.pixels.tobytes() != y.pixels.tobytes() for x, y in zip(a, b))

    def test_range(self):
        imgs, _ = synthesize_dataset("source", 4, (12, 20), 0)
        x, _ = as_arrays(imgs)
        assert x.shape == (24, 3, 12, 20)
        assert x.min() >= 0.0 and x.max() <= 1.0

    @pytest.mark.parametrize("task,n", [("source", 200), ("target", 100)])
    @pytest.mark.parametrize("seed", [1, 2, 3, 4, 5])
    def test_centroid_beats_chance(self, task, n, seed):
        imgs, _ = synthesize_dataset(task, n, (32, 32), seed)
        s = stratified_split(imgs, seed=seed)
        xt, yt = as_arrays(s.train)
        xs, ys = as_arrays(s.test)
        assert nearest_centroid_accuracy(xt, yt, xs, ys) > 1 / 6

    def test_too_small(self):
        with pytest.raises(ConfigurationError):
            synthesize_dataset("source", 1, (7, 32), 0)

    def test_unknown_task(self):
        with pytest.raises(ConfigurationError):
            synthesize_dataset("imagenet", 1, (8, 8), 0)

