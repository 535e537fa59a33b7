import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from shiftbench import nn
from shiftbench.synthbench import Dataset, ShiftSpec, generate, load_csv, save_csv, \
    save_manifest

CELLS = dict(full_range=(1.0, 200.0), shift_band=(50.0, 150.0))


def small_spec(**kwargs):
    base = dict(n_train=300, n_val=100, n_test=300, input_dim=8, seed=5, **CELLS)
    base.update(kwargs)
    return ShiftSpec(**base)


class TestShiftSpec:
    def test_tails_ranges(self):
        spec = small_spec(kind="tails", n_test=2000)
        ds = generate(spec)
        for split in ("train", "val"):
            _, y = ds.split_xy(split)
            assert y.min() >= 50.0 and y.max() <= 150.0
        _, y = ds.split_xy("test")
        assert y.min() < 50.0 and y.max() > 150.0  # test spans the full range

    def test_none_ranges_identical(self):
        ds = generate(small_spec(kind="none"))
        lo, hi = ds.shift.full_range
        assert ds.targets.min() >= lo and ds.targets.max() <= hi
        for split in ("train", "val", "test"):
            _, y = ds.split_xy(split)
            # all three splits draw from the full range
            assert y.max() - y.min() > 0.9 * (hi - lo)

    def test_intensity_interpolates_linearly(self):
        # level 2 is halfway between the full range and the tails band
        spec = small_spec(kind="tails", level=2)
        (lo, hi), = spec.trainval_intervals()
        assert lo == pytest.approx(25.5)
        assert hi == pytest.approx(175.0)

    def test_intensity_endpoints(self):
        assert small_spec(kind="tails", level=0).trainval_intervals() == [(1.0, 200.0)]
        assert small_spec(kind="tails", level=4).trainval_intervals() == [(50.0, 150.0)]

    def test_gap_excludes_central_band(self):
        spec = small_spec(kind="gap")
        intervals = spec.trainval_intervals()
        assert intervals == [(1.0, 50.0), (150.0, 200.0)]
        ds = generate(spec)
        for split in ("train", "val"):
            _, y = ds.split_xy(split)
            assert not np.any((y > 50.0) & (y < 150.0))

    def test_gap_band_grows_with_level(self):
        widths = []
        for level in range(5):
            ivs = small_spec(kind="gap", level=level).trainval_intervals()
            if len(ivs) == 1:
                widths.append(0.0)
            else:
                widths.append(ivs[1][0] - ivs[0][1])
        assert all(a <= b for a, b in zip(widths, widths[1:]))

    def test_tails_levels_are_nested(self):
        ranges = [small_spec(kind="tails", level=l).trainval_intervals()[0]
                  for l in range(5)]
        for (lo_a, hi_a), (lo_b, hi_b) in zip(ranges, ranges[1:]):
            assert lo_a <= lo_b and hi_b <= hi_a

    def test_degenerate_range_rejected(self):
        with pytest.raises(ValueError):
            ShiftSpec(full_range=(5.0, 5.0))

    def test_band_outside_range_rejected(self):
        with pytest.raises(ValueError):
            ShiftSpec(full_range=(0.0, 1.0), shift_band=(0.5, 2.0))


class TestGenerate:
    def test_deterministic(self):
        a = generate(small_spec(kind="gap"))
        b = generate(small_spec(kind="gap"))
        assert np.array_equal(a.features, b.features)
        assert np.array_equal(a.targets, b.targets)

    def test_no_nan(self):
        ds = generate(small_spec(kind="tails"))
        assert np.all(np.isfinite(ds.features))
        assert np.all(np.isfinite(ds.targets))

    @given(st.sampled_from(["none", "tails", "gap"]), st.integers(0, 4),
           st.integers(0, 2 ** 16))
    @settings(max_examples=20, deadline=None)
    def test_split_range_invariants(self, kind, level, seed):
        spec = ShiftSpec(kind=kind, level=level, seed=seed, n_train=80, n_val=40,
                         n_test=80, input_dim=4, **CELLS)
        ds = generate(spec)
        intervals = spec.trainval_intervals()
        for split in ("train", "val"):
            _, y = ds.split_xy(split)
            inside = np.zeros(y.size, dtype=bool)
            for lo, hi in intervals:
                inside |= (y >= lo) & (y <= hi)
            assert np.all(inside)
        lo, hi = spec.full_range
        _, y = ds.split_xy("test")
        assert np.all((y >= lo) & (y <= hi))

    def test_task_is_learnable(self):
        # direct model on the unshifted task reaches MAE < 5% of target range
        ds = generate(small_spec(kind="none", n_train=2000, n_val=200, n_test=500))
        X, y = ds.split_xy("train")
        arch = nn.Architecture(input_dim=X.shape[1])
        model = nn.train(nn.init_model(arch, 0), X, y, nn.TrainHyper(epochs=40, seed=0))
        X_test, y_test = ds.split_xy("test")
        mae = np.mean(np.abs(nn.predict(model, X_test) - y_test))
        assert mae < 0.05 * (200.0 - 1.0)


class TestCsv:
    def test_roundtrip_exact(self, tmp_path):
        ds = generate(small_spec(kind="gap", n_train=20, n_val=10, n_test=20))
        path = tmp_path / "ds.csv"
        save_csv(ds, path)
        back = load_csv(path)
        assert np.array_equal(back.features, ds.features)
        assert np.array_equal(back.targets, ds.targets)
        assert np.array_equal(back.split, ds.split)
        assert back.provenance == "csv_import"

    def test_one_row_per_split(self, tmp_path):
        path = tmp_path / "tiny.csv"
        path.write_text("x0,y,split\n1.0,2.0,train\n3.0,4.0,val\n5.0,6.0,test\n")
        ds = load_csv(path)
        assert len(ds) == 3
        assert ds.features.shape == (3, 1)
        for split in ("train", "val", "test"):
            assert ds.split_xy(split)[1].size == 1

    def test_nan_target_rejected_with_row(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("x0,y,split\n1.0,2.0,train\n1.0,nan,val\n")
        with pytest.raises(ValueError, match="row 3"):
            load_csv(path)

    def test_non_numeric_cell(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("x0,y,split\noops,2.0,train\n")
        with pytest.raises(ValueError, match="row 2"):
            load_csv(path)

    def test_unknown_split_label(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("x0,y,split\n1.0,2.0,calibration\n")
        with pytest.raises(ValueError, match="calibration"):
            load_csv(path)

    def test_missing_column(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("x0,target\n1.0,2.0\n")
        with pytest.raises(ValueError, match="missing column"):
            load_csv(path)

    def test_empty_dataset_header_only(self, tmp_path):
        ds = Dataset(features=np.zeros((0, 0)), targets=np.zeros(0),
                     split=np.array([], dtype=str))
        path = tmp_path / "empty.csv"
        save_csv(ds, path)
        assert path.read_text() == "y,split\n"

    def test_single_feature_header(self, tmp_path):
        ds = generate(small_spec(input_dim=1, n_train=2, n_val=1, n_test=1))
        path = tmp_path / "d1.csv"
        save_csv(ds, path)
        assert path.read_text().splitlines()[0] == "x0,y,split"

    def test_manifest(self, tmp_path):
        spec = small_spec(kind="tails")
        path = tmp_path / "m.json"
        save_manifest(spec, path)
        import json
        payload = json.loads(path.read_text())
        assert payload["shift"]["kind"] == "tails"
        assert tuple(payload["shift"]["full_range"]) == spec.full_range
