import csv
import math
import xml.etree.ElementTree as ET

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from edgepress.exceptions import ConfigError, DataError, MetricError
from edgepress.harness import SweepConfig, auc_roc, emit_all, run_sweep, time_single_inference
from edgepress.harness.report import CSV_COLUMNS, read_report, read_rows_json
from edgepress.harness.sweep import SweepRow, aggregate, prepare_data
from edgepress.harness.timing import median_of_means


def pairwise_auc(scores, labels):
    pos = [s for s, l in zip(scores, labels) if l == 1]
    neg = [s for s, l in zip(scores, labels) if l == 0]
    wins = sum(1.0 if p > n else 0.5 if p == n else 0.0 for p in pos for n in neg)
    return wins / (len(pos) * len(neg))


class TestAuc:
    def test_separated(self):
        assert auc_roc([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]) == 1.0

    def test_all_equal(self):
        assert auc_roc([0.3] * 6, [0, 1] * 3) == 0.5

    def test_hand(self):
        assert auc_roc([0.9, 0.8, 0.7, 0.1], [1, 0, 1, 0]) == 0.75

    def test_single_class(self):
        with pytest.raises(MetricError):
            auc_roc([0.1, 0.2], [1, 1])

    @given(st.lists(st.tuples(st.integers(0, 5), st.integers(0, 1)), min_size=2, max_size=60))
    def test_matches_pairwise_with_ties(self, pairs):
        scores, labels = zip(*pairs)
        if len(set(labels)) < 2:
            return
        assert auc_roc(np.array(scores) / 5, labels) == pytest.approx(pairwise_auc(scores, labels), abs=1e-12)


class TestTiming:
    def test_counts_and_order(self):
        calls = []
        t = time_single_inference(lambda x: calls.append(x), np.arange(7), warmup=3)
        assert len(calls) == 10 and t.samples == 7
        assert t.mean_us > 0 and t.std_us >= 0

    def test_empty(self):
        with pytest.raises(DataError):
            time_single_inference(lambda x: x, np.zeros((0, 3)))

    def test_wider_dense_is_slower(self):
        from edgepress.model import LayerSpec, ModelConfig, build_model

        def net(units):
            layers = [dict(kind="dense", name="d1", units=units), dict(kind="activation", name="a", function="relu"),
                      dict(kind="dense", name="d2", units=1), dict(kind="activation", name="o", function="sigmoid")]
            return build_model(ModelConfig([2048], [LayerSpec.from_dict(d) for d in layers]))

        X = np.random.default_rng(0).standard_normal((60, 2048)).astype(np.float32)
        narrow = time_single_inference(net(256), X).median_us
        wide = time_single_inference(net(1024), X).median_us
        assert wide > narrow

    def test_median_of_means(self):
        assert median_of_means([1, 1, 1, 1, 100]) == 1.0


TINY = dict(schedules=("polynomial",), sparsities=(0.5, 0.9), n_seeds=1, epochs=3, fine_tune_epochs=2,
            dataset={"source": "synthetic", "n": 24, "seed": 3}, timing_samples=3, warmup=1)


@pytest.fixture(scope="module")
def tiny_data():
    return prepare_data(SweepConfig(**TINY))


class TestSweep:
    def test_row_count(self, tiny_data):
        cfg = SweepConfig(**TINY)
        rows = run_sweep(cfg, data=tiny_data)
        assert cfg.n_rows == len(rows) == 3
        assert [r.schedule for r in rows] == ["baseline", "polynomial", "polynomial"]
        assert all(r.ok for r in rows)
        assert set(rows[0].auc) == {"f32", "q8", "q16"}

    def test_deterministic(self, tiny_data):
        cfg = SweepConfig(**TINY)
        a = run_sweep(cfg, data=tiny_data, timing=False)
        b = run_sweep(cfg, data=tiny_data, timing=False)
        assert [(r.auc, r.size_bytes) for r in a] == [(r.auc, r.size_bytes) for r in b]

    def test_failed_cell_recorded(self, tiny_data, monkeypatch):
        from edgepress.harness import sweep

        def boom(*a, **k):
            raise FloatingPointError("diverged")

        monkeypatch.setattr(sweep, "prune_fine_tune", boom)
        rows = run_sweep(SweepConfig(**TINY), data=tiny_data, timing=False)
        bad = [r for r in rows if not r.ok]
        assert len(bad) == 2 and "diverged" in bad[0].error
        assert math.isnan(bad[0].auc["f32"])

    @pytest.mark.parametrize("kw", [dict(schedules=("cosine",)), dict(sparsities=(1.0,)), dict(n_seeds=0),
                                    dict(precisions=("q8",)), dict(sparsities=(0.5, 0.5))])
    def test_invalid(self, kw):
        with pytest.raises(ConfigError):
            SweepConfig(**kw)

    def test_config_round_trip(self, tmp_path):
        cfg = SweepConfig(**TINY)
        (tmp_path / "s.json").write_text(cfg.to_json())
        assert SweepConfig.from_json(tmp_path / "s.json") == cfg

    def test_default_shape(self):
        assert SweepConfig().n_rows == 3 * (1 + 2 * 16)


def fake_rows():
    rows = []
    for seed in (1, 2):
        for sched, sp in [("baseline", 0.0), ("constant", 0.5), ("constant", 0.9), ("polynomial", 0.5), ("polynomial", 0.9)]:
            r = SweepRow(sched, sp, seed)
            for p, f in (("f32", 1.0), ("q8", 0.25), ("q16", 0.5)):
                r.auc[p] = 0.9 - sp / 10 + seed / 100
                r.size_bytes[p] = int(1e5 * f * (1 - sp))
                r.infer_mean_us[p] = 100.0 * f + seed
                r.infer_std_us[p] = 1.0
                r.infer_median_us[p] = 100.0 * f
            rows.append(r)
    return rows


class TestReport:
    def test_emit_all(self, tmp_path):
        rows = fake_rows()
        out = emit_all(rows, tmp_path, SweepConfig(schedules=("constant", "polynomial"), sparsities=(0.5, 0.9), n_seeds=2))
        with open(out["csv"]) as fh:
            table = list(csv.reader(fh))
        assert tuple(table[0]) == CSV_COLUMNS and len(CSV_COLUMNS) == 12
        assert len(table) == 1 + len(rows) and all(len(r) == 12 for r in table)
        for name in ("auc.svg", "size.svg", "time.svg"):
            root = ET.parse(tmp_path / name).getroot()
            ids = {el.get("id") for el in root.iter()}
            assert {"series-constant-f32", "series-polynomial-q8"} <= ids
        assert "± " in (tmp_path / "summary.md").read_text()

    def test_svg_bytes_stable(self, tmp_path):
        emit_all(fake_rows(), tmp_path / "a")
        emit_all(fake_rows(), tmp_path / "b")
        for name in ("auc.svg", "size.svg", "time.svg"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_reload(self, tmp_path):
        rows = fake_rows()
        emit_all(rows, tmp_path)
        again = read_rows_json(tmp_path / "rows.json")
        assert [r.to_dict() for r in again] == [r.to_dict() for r in rows]
        from_csv = read_report(tmp_path / "results.csv")
        for a, b in zip(from_csv, rows):
            assert a.auc == pytest.approx(b.auc, abs=1e-6)
            assert a.size_bytes == b.size_bytes

    def test_aggregate(self):
        agg = aggregate(fake_rows())
        base = [e for e in agg if e["schedule"] == "baseline"][0]
        assert base["runs"] == 2
        assert base["auc"] == pytest.approx(0.915)
        assert base["auc_std"] == pytest.approx(0.005)
        assert base["size_q8"] == 25000

    def test_unwritable(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("x")
        with pytest.raises(OSError):
            emit_all(fake_rows(), blocker / "sub")
