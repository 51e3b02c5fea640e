import json
import os

import numpy as np
import pytest

from mvcca.cca import fit_cca2
from mvcca.data import (MFEAT_DIMS, MFEAT_VIEWS, MultiViewDataset, load_manifest,
                        load_matrix, load_mfeat, save_matrix, standardize_apply,
                        standardize_fit, synth_multiview)
from mvcca.exceptions import ConfigError, DataError


class TestLoadMatrix:
    def test_samples_rows(self, tmp_path):
        p = tmp_path / "a.txt"
        p.write_text("1 2\n3 4\n5 6\n")
        np.testing.assert_array_equal(load_matrix(p), [[1, 3, 5], [2, 4, 6]])

    def test_features_rows_and_commas(self, tmp_path):
        p = tmp_path / "a.csv"
        p.write_text("1,2,3\n# comment\n\n4,5,6\n")
        np.testing.assert_array_equal(load_matrix(p, "features-rows"), [[1, 2, 3], [4, 5, 6]])

    def test_empty_file(self, tmp_path):
        p = tmp_path / "e.txt"
        p.write_text("")
        with pytest.raises(DataError, match="no data"):
            load_matrix(p)

    def test_ragged_reports_line(self, tmp_path):
        p = tmp_path / "r.txt"
        p.write_text("1 2\n3 4\n5\n")
        with pytest.raises(DataError, match=":3:"):
            load_matrix(p)

    def test_non_numeric(self, tmp_path):
        p = tmp_path / "n.txt"
        p.write_text("1 2\n3 x\n")
        with pytest.raises(DataError, match="'x'"):
            load_matrix(p)

    def test_round_trip(self, tmp_path, rng):
        X = rng.standard_normal((3, 7))
        for layout in ("samples-rows", "features-rows"):
            p = tmp_path / f"{layout}.txt"
            save_matrix(p, X, layout)
            np.testing.assert_array_equal(load_matrix(p, layout), X)


def _write_mfeat(directory, n_per_class=2, skip=None):
    rng = np.random.default_rng(0)
    for name, dim in zip(MFEAT_VIEWS, MFEAT_DIMS):
        if name == skip:
            continue
        np.savetxt(os.path.join(directory, f"mfeat-{name}"),
                   rng.standard_normal((10 * n_per_class, dim)))


class TestMfeat:
    def test_missing_view_named(self, tmp_path):
        _write_mfeat(tmp_path, skip="zer")
        with pytest.raises(DataError, match="'zer'"):
            load_mfeat(tmp_path)

    def test_wrong_row_count(self, tmp_path):
        _write_mfeat(tmp_path)
        with pytest.raises(DataError, match="shape"):
            load_mfeat(tmp_path)

    @pytest.mark.skipif(not os.environ.get("MVCCA_MFEAT_DIR"), reason="Mfeat files not available")
    def test_real_files(self):
        ds = load_mfeat(os.environ["MVCCA_MFEAT_DIR"])
        assert ds.dims == (216, 76, 64, 6, 240, 47)
        np.testing.assert_array_equal(np.bincount(ds.labels), [200] * 10)


class TestSynthetic:
    def test_planted_linear_correlation(self):
        ds = synth_multiview(k=2, latent_dim=3, dims=(6, 6), n=500, nonlinear=False, noise=0.0)
        assert fit_cca2(*ds.views, 1).extra["correlations"][0] >= 0.99

    def test_deterministic_and_dims(self):
        a = synth_multiview(k=3, dims=(4, 5, 6), n=50, seed=3)
        b = synth_multiview(k=3, dims=(4, 5, 6), n=50, seed=3)
        assert a.dims == (4, 5, 6)
        for x, y in zip(a.views, b.views):
            np.testing.assert_array_equal(x, y)
        np.testing.assert_array_equal(a.labels, b.labels)

    def test_bad_dims(self):
        with pytest.raises(ConfigError):
            synth_multiview(k=3, dims=(2, 2))


class TestDataset:
    def test_validation(self):
        with pytest.raises(DataError):
            MultiViewDataset([np.ones((2, 3)), np.ones((2, 4))])
        with pytest.raises(DataError):
            MultiViewDataset([np.array([[np.nan, 1.0]])])
        with pytest.raises(DataError):
            MultiViewDataset([np.ones((2, 3))], labels=[0, 1])

    def test_take_and_select(self, rng):
        ds = MultiViewDataset([rng.standard_normal((2, 5)), rng.standard_normal((3, 5))],
                              np.arange(5), ["a", "b"])
        sub = ds.take([1, 3]).select_views([1])
        assert sub.names == ["b"] and sub.dims == (3,)
        np.testing.assert_array_equal(sub.labels, [1, 3])

    def test_standardize(self, rng):
        views = [rng.standard_normal((3, 40)) * 5 + 2, np.ones((2, 40))]
        out = standardize_apply(views, standardize_fit(views))
        np.testing.assert_allclose(out[0].mean(1), 0, atol=1e-12)
        np.testing.assert_allclose(out[0].std(1), 1, atol=1e-12)
        np.testing.assert_array_equal(out[1], 0.0)


class TestManifest:
    def test_explicit_views(self, tmp_path, rng):
        X = rng.standard_normal((2, 6))
        save_matrix(tmp_path / "v.txt", X)
        (tmp_path / "y.txt").write_text("\n".join(str(i % 2) for i in range(6)))
        (tmp_path / "m.json").write_text(json.dumps(
            {"views": [{"path": "v.txt", "name": "left"}, "v.txt"], "labels": "y.txt"}))
        ds = load_manifest(tmp_path / "m.json")
        assert ds.names == ["left", "v"]
        np.testing.assert_array_equal(ds.views[0], X)
        np.testing.assert_array_equal(ds.labels, [0, 1, 0, 1, 0, 1])

    def test_synthetic(self, tmp_path):
        (tmp_path / "m.json").write_text('{"synthetic": {"k": 2, "n": 30}}')
        assert load_manifest(tmp_path / "m.json").n_views == 2

    def test_bad_manifest(self, tmp_path):
        (tmp_path / "m.json").write_text("{not json")
        with pytest.raises(ConfigError):
            load_manifest(tmp_path / "m.json")
        (tmp_path / "m.json").write_text('{"synthetic": {"bogus": 1}}')
        with pytest.raises(ConfigError):
            load_manifest(tmp_path / "m.json")
