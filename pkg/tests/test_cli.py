import math

import numpy as np
import pytest

from imcat import archive as ar
from imcat import cli
from imcat import pgm
from imcat.raster import GreyImage


def write_shape_image(path, mask, max_grey=255):
    data = np.where(mask, 200, 10).astype(np.int32)
    pgm.write_pgm(GreyImage(data, max_grey), path)


def block_mask(h=24, w=24, y0=6, x0=6, ph=8, pw=12):
    mask = np.zeros((h, w), dtype=bool)
    mask[y0: y0 + ph, x0: x0 + pw] = True
    return mask


class TestAnalyze:
    def test_block_image(self, tmp_path):
        img = tmp_path / "block.pgm"
        write_shape_image(img, block_mask())
        code = cli.main(["analyze", "--in", str(img), "--threshold", "auto",
                         "--out-prefix", str(tmp_path / "out")])
        assert code == 0
        features = (tmp_path / "out.features.txt").read_text().strip().splitlines()
        assert len(features) == 1
        vals = [float(v) for v in features[0].split()]
        assert len(vals) == 8
        # gravity center of the 8x12 block
        assert vals[0] == pytest.approx(6 + 5.5, abs=0.01)
        assert vals[1] == pytest.approx(6 + 3.5, abs=0.01)
        polylines = (tmp_path / "out.polylines.txt").read_text().strip()
        assert polylines.startswith("poly closed")

    def test_empty_image(self, tmp_path):
        img = tmp_path / "empty.pgm"
        pgm.write_pgm(GreyImage(np.zeros((8, 8), dtype=np.int32), 255), img)
        code = cli.main(["analyze", "--in", str(img), "--threshold", "100",
                         "--out-prefix", str(tmp_path / "out")])
        assert code == 0
        assert (tmp_path / "out.features.txt").read_text() == ""

    def test_corrupt_image_exit_code(self, tmp_path):
        bad = tmp_path / "corrupt.pgm"
        bad.write_bytes(b"P5\n4 4\n255\nxx")
        code = cli.main(["analyze", "--in", str(bad), "--out-prefix",
                         str(tmp_path / "out")])
        assert code == 2

    def test_deterministic_outputs(self, tmp_path):
        img = tmp_path / "b.pgm"
        write_shape_image(img, block_mask())
        for prefix in ("one", "two"):
            cli.main(["analyze", "--in", str(img),
                      "--out-prefix", str(tmp_path / prefix)])
        for suffix in (".features.txt", ".blobs.txt", ".polylines.txt"):
            assert ((tmp_path / ("one" + suffix)).read_bytes()
                    == (tmp_path / ("two" + suffix)).read_bytes())


class TestConfigFile:
    def test_flags_override_file(self, tmp_path):
        conf = tmp_path / "imcat.conf"
        conf.write_text("threshold = 50\nprecision = 2.0\n")
        img = tmp_path / "b.pgm"
        write_shape_image(img, block_mask())
        code = cli.main(["analyze", "--in", str(img), "--config", str(conf),
                         "--threshold", "150",
                         "--out-prefix", str(tmp_path / "out")])
        assert code == 0

    def test_bad_key_rejected(self, tmp_path):
        conf = tmp_path / "imcat.conf"
        conf.write_text("no_such_option = 1\n")
        img = tmp_path / "b.pgm"
        write_shape_image(img, block_mask())
        code = cli.main(["analyze", "--in", str(img), "--config", str(conf),
                         "--out-prefix", str(tmp_path / "out")])
        assert code == 1


class TestCatalogAndQuery:
    def analyze_and_catalog(self, tmp_path, masks):
        archive_path = tmp_path / "cat.arc"
        for i, mask in enumerate(masks):
            img = tmp_path / f"img{i}.pgm"
            write_shape_image(img, mask)
            prefix = tmp_path / f"an{i}"
            assert cli.main(["analyze", "--in", str(img),
                             "--out-prefix", str(prefix)]) == 0
            assert cli.main(["catalog", "--archive", str(archive_path),
                             "--features", str(prefix) + ".features.txt",
                             "--polylines", str(prefix) + ".polylines.txt",
                             "--image-id", str(i)]) == 0
        return archive_path

    def test_catalog_counts_and_round_trip(self, tmp_path):
        masks = [block_mask(), block_mask(ph=12, pw=8)]
        path = self.analyze_and_catalog(tmp_path, masks)
        arc = ar.archive_load(path)
        assert arc.object_count == 2
        rec, pts = ar.archive_read_object(arc, 0)
        assert rec.image_id == 0
        assert len(pts) >= 4
        # appended object equals the analyze output
        features = (tmp_path / "an0.features.txt").read_text().split()
        assert rec.attributes == pytest.approx([float(v) for v in features])

    def test_interval_query_all(self, tmp_path):
        masks = [block_mask(), block_mask(ph=12, pw=8)]
        path = self.analyze_and_catalog(tmp_path, masks)
        code = cli.main(["query", "--archive", str(path), "--mode", "interval",
                         "--attrs", "4,5", "--depth", "4",
                         "--interval", "0:2,0:1.001"])
        assert code == 0

    def test_example_query_ranks_rotated_copy_first(self, tmp_path, capsys):
        rng = np.random.RandomState(0)
        masks = []
        for i in range(6):
            mask = np.zeros((28, 28), dtype=bool)
            ph, pw = 4 + i, 14 - i
            mask[6: 6 + ph, 5: 5 + pw] = True
            mask[6: 6 + ph, 5: 5 + max(1, i)] = True
            masks.append(mask)
        path = self.analyze_and_catalog(tmp_path, masks)
        # probe: 90-degree rotation of shape 3, shifted
        probe_mask = np.zeros((36, 36), dtype=bool)
        src = masks[3]
        ys, xs = np.nonzero(src)
        for y, x in zip(ys, xs):
            probe_mask[4 + x, 3 + (src.shape[0] - 1 - y)] = True
        probe = tmp_path / "probe.pgm"
        write_shape_image(probe, probe_mask)
        capsys.readouterr()
        code = cli.main(["query", "--archive", str(path), "--mode", "example",
                         "--probe", str(probe), "--attrs", "4,5,6,7",
                         "--depth", "6"])
        assert code == 0
        out = capsys.readouterr().out.strip().splitlines()
        rank1 = out[0].split()
        assert rank1[0] == "1" and rank1[1] == "3"

    def test_archive_byte_identical_after_reload(self, tmp_path):
        path = self.analyze_and_catalog(tmp_path, [block_mask()])
        blob = path.read_bytes()
        arc = ar.archive_load(path)
        ar.archive_save(arc, path)
        assert path.read_bytes() == blob


class TestRender:
    def test_contours_inside_bbox(self, tmp_path):
        mask = block_mask()
        img = tmp_path / "img.pgm"
        write_shape_image(img, mask)
        prefix = tmp_path / "an"
        cli.main(["analyze", "--in", str(img), "--out-prefix", str(prefix)])
        archive = tmp_path / "cat.arc"
        cli.main(["catalog", "--archive", str(archive),
                  "--features", str(prefix) + ".features.txt",
                  "--polylines", str(prefix) + ".polylines.txt"])
        out = tmp_path / "overlay.pgm"
        code = cli.main(["render", "--archive", str(archive), "--image",
                         str(img), "--out", str(out), "--grey", "255"])
        assert code == 0
        rendered = pgm.read_pgm(out)
        ys, xs = np.nonzero(rendered.data == 255)
        assert len(ys) > 0
        assert xs.min() >= 5 and xs.max() <= 18
        assert ys.min() >= 5 and ys.max() <= 14

    def test_empty_selection_copies_image(self, tmp_path):
        mask = block_mask()
        img = tmp_path / "img.pgm"
        write_shape_image(img, mask)
        prefix = tmp_path / "an"
        cli.main(["analyze", "--in", str(img), "--out-prefix", str(prefix)])
        archive = tmp_path / "cat.arc"
        cli.main(["catalog", "--archive", str(archive),
                  "--features", str(prefix) + ".features.txt",
                  "--polylines", str(prefix) + ".polylines.txt"])
        out = tmp_path / "copy.pgm"
        cli.main(["render", "--archive", str(archive), "--image", str(img),
                  "--selection", "", "--out", str(out)])
        assert np.array_equal(pgm.read_pgm(out).data, pgm.read_pgm(img).data)

    def test_missing_image(self, tmp_path):
        archive = tmp_path / "cat.arc"
        bounds = cli.DEFAULT_BOUNDS
        arc = ar.archive_create(cli.FEATURE_SCHEMA, bounds)
        ar.archive_save(arc, archive)
        code = cli.main(["render", "--archive", str(archive),
                         "--out", str(tmp_path / "x.pgm")])
        assert code == 8


class TestTrainIdentify:
    def write_training(self, tmp_path, rng):
        # three synthetic identities in feature space
        centers = {1: (0.5, 0.6, 0.1, 0.2), 2: (0.9, 0.3, 0.4, 0.1),
                   3: (0.2, 0.9, 0.3, 0.5)}
        rows = []
        labels = []
        for label, center in centers.items():
            for _ in range(20):
                rows.append([c + rng.normal(0, 0.01) for c in center])
                labels.append(label)
        feats = tmp_path / "train.features.txt"
        labs = tmp_path / "train.labels.txt"
        feats.write_text("\n".join(" ".join(f"{v:.6f}" for v in r)
                                   for r in rows) + "\n")
        labs.write_text("\n".join(str(v) for v in labels) + "\n")
        return feats, labs, rows, labels

    def test_closed_set_identification(self, tmp_path, capsys):
        rng = np.random.RandomState(7)
        feats, labs, rows, labels = self.write_training(tmp_path, rng)
        model = tmp_path / "model.txt"
        assert cli.main(["train", "--features", str(feats), "--labels",
                         str(labs), "--out", str(model)]) == 0
        capsys.readouterr()
        assert cli.main(["identify", "--model", str(model),
                         "--features", str(feats)]) == 0
        out = capsys.readouterr().out.strip().splitlines()
        got = [int(line.split()[1]) for line in out]
        assert got == labels

    def test_arity_mismatch_exit_code(self, tmp_path):
        rng = np.random.RandomState(8)
        feats, labs, *_ = self.write_training(tmp_path, rng)
        model = tmp_path / "model.txt"
        cli.main(["train", "--features", str(feats), "--labels", str(labs),
                  "--out", str(model)])
        bad = tmp_path / "bad.features.txt"
        bad.write_text("0.5 0.5\n")
        code = cli.main(["identify", "--model", str(model),
                         "--features", str(bad)])
        assert code == 4

    def test_single_class_model(self, tmp_path, capsys):
        feats = tmp_path / "f.txt"
        labs = tmp_path / "l.txt"
        feats.write_text("0.1 0.2\n0.3 0.1\n0.2 0.2\n")
        labs.write_text("1\n1\n1\n")
        model = tmp_path / "m.txt"
        assert cli.main(["train", "--features", str(feats), "--labels",
                         str(labs), "--out", str(model)]) == 0
        capsys.readouterr()
        assert cli.main(["identify", "--model", str(model),
                         "--features", str(feats)]) == 0
        out = capsys.readouterr().out.strip().splitlines()
        assert all(line.split()[1] == "1" for line in out)


class TestClassifyCommand:
    def test_two_band_classify(self, tmp_path):
        rng = np.random.RandomState(3)
        n = 24
        a = np.zeros((n, n), dtype=np.int32)
        b = np.zeros((n, n), dtype=np.int32)
        for y in range(n):
            for x in range(n):
                cu, cv = (60, 60) if x < n // 2 else (190, 190)
                a[y, x] = cu + rng.binomial(6, 0.5) - 3
                b[y, x] = cv + rng.binomial(6, 0.5) - 3
        pa = tmp_path / "a.pgm"
        pb = tmp_path / "b.pgm"
        pgm.write_pgm(GreyImage(a, 255), pa)
        pgm.write_pgm(GreyImage(b, 255), pb)
        out = tmp_path / "labels.pgm"
        assert cli.main(["classify", "--bands", str(pa), str(pb),
                         "--out", str(out)]) == 0
        labels = pgm.read_pgm(out)
        left = labels.data[:, : n // 2]
        right = labels.data[:, n // 2:]
        assert len(np.unique(left)) == 1
        assert len(np.unique(right)) == 1
        assert left[0, 0] != right[0, 0]
        assert (tmp_path / "labels.pgm.legend").exists()

    def test_mono_classify(self, tmp_path):
        data = np.zeros((20, 20), dtype=np.int32)
        data[:, 10:] = 180
        img = tmp_path / "mono.pgm"
        pgm.write_pgm(GreyImage(data, 255), img)
        out = tmp_path / "labels.pgm"
        assert cli.main(["classify", "--mono", str(img), "--order", "1",
                         "--out", str(out)]) == 0
