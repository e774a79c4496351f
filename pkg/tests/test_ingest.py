import numpy as np
import pandas as pd
import pytest

from helpers import TinyInputs
from narralpha.errors import SchemaError
from narralpha.formats import read_embeddings, write_embeddings
from narralpha.ingest import IngestConfig, load_dataset, match_numeric_records


def make_base(tmp_path, n_reports=3):
    t = TinyInputs(tmp_path)
    t.add_firm("F1", daily_ret=0.001)
    t.add_firm("F2", daily_ret=0.002)
    for i in range(n_reports):
        blocks = np.ones((2, 4), dtype=np.float32) * (i + 1)
        t.add_report(f"R{i}", "F1" if i % 2 == 0 else "F2", t.days[5 + i], blocks=blocks)
    return t


def test_fully_consistent_input_loads_with_zero_rejects(tmp_path):
    t = make_base(tmp_path)
    ds = load_dataset(t.write())
    assert len(ds.reports) == 3
    assert len(ds.rejects) == 0


def test_unjoinable_report_goes_to_rejects_not_dropped(tmp_path):
    t = make_base(tmp_path)
    t.add_report("R_bad", "NOSUCH", t.days[8])
    ds = load_dataset(t.write())
    assert len(ds.reports) == 3
    assert list(ds.rejects["report_id"]) == ["R_bad"]
    assert list(ds.rejects["reason"]) == ["no market data"]
    # accepted + rejected = input count
    assert len(ds.reports) + len(ds.rejects) == 4


def test_report_without_embedding_rejected(tmp_path):
    t = make_base(tmp_path)
    cfg = t.write()
    reports = pd.read_csv(t.dir / "reports.csv")
    extra = reports.iloc[[0]].assign(report_id="R_noemb")
    pd.concat([reports, extra]).to_csv(t.dir / "reports.csv", index=False)
    ds = load_dataset(cfg)
    assert list(ds.rejects["reason"]) == ["no embedding"]


def test_duplicate_report_id_is_fatal(tmp_path):
    t = make_base(tmp_path)
    cfg = t.write()
    reports = pd.read_csv(t.dir / "reports.csv")
    pd.concat([reports, reports.iloc[[0]]]).to_csv(t.dir / "reports.csv", index=False)
    with pytest.raises(SchemaError, match="duplicate report_id"):
        load_dataset(cfg)


def test_missing_column_is_fatal_with_filename(tmp_path):
    t = make_base(tmp_path)
    cfg = t.write()
    pd.read_csv(t.dir / "market.csv").drop(columns=["ret"]).to_csv(t.dir / "market.csv", index=False)
    with pytest.raises(SchemaError, match="market.csv"):
        load_dataset(cfg)


def test_inconsistent_sentence_counts_fatal(tmp_path):
    t = make_base(tmp_path)
    t.add_report("R_bad", "F1", t.days[9], n_pos=8, n_neg=7, n_sent=10)
    with pytest.raises(SchemaError, match="n_pos"):
        load_dataset(t.write())


def test_bad_weight_sum_fatal(tmp_path):
    t = make_base(tmp_path)
    t.add_report("R_w", "F1", t.days[9], weights=[0.7, 0.2])
    with pytest.raises(SchemaError, match="sum"):
        load_dataset(t.write())


def test_join_is_deterministic(tmp_path):
    t = make_base(tmp_path)
    cfg = t.write()
    h1 = load_dataset(cfg).content_hash()
    h2 = load_dataset(cfg).content_hash()
    assert h1 == h2


def test_synth_round_trip_zero_rejects(mini_dir, mini_dataset):
    assert len(mini_dataset.rejects) == 0
    # logical content: every written report came back
    reports = pd.read_csv(mini_dir / "reports.csv", dtype=str)
    assert set(reports["report_id"]) == set(mini_dataset.reports["report_id"])


def test_embedding_reconstruction_identity(mini_dataset):
    store = mini_dataset.embeddings
    full = store.full_vectors()
    direct = np.einsum("ng,ngd->nd", store.weights, store.blocks.astype(np.float64))
    assert np.abs(full - direct).max() < 1e-6
    assert np.abs(store.weights.sum(axis=1) - 1.0).max() <= 1e-9


def test_binary_format_round_trips(tmp_path):
    rng = np.random.default_rng(0)
    labels = ["x", "y", "z"]
    rids = [f"R{i}" for i in range(7)]
    w = rng.dirichlet(np.ones(3), size=7)
    b = rng.standard_normal((7, 3, 5)).astype(np.float32)
    path = tmp_path / "e.bin"
    write_embeddings(path, labels, rids, w, b)
    labels2, rids2, w2, b2 = read_embeddings(path)
    assert labels2 == labels and rids2 == rids
    np.testing.assert_array_equal(w, w2)
    np.testing.assert_array_equal(b, b2)


# -- numeric record matching ----------------------------------------------

def _history(rows):
    return pd.DataFrame(
        rows, columns=["analyst_id", "firm_id", "date", "recommendation", "eps_forecast", "target_price"]
    ).assign(date=lambda d: pd.to_datetime(d["date"]))


def _report(tmp_path):
    t = make_base(tmp_path)
    ds = load_dataset(t.write())
    return ds, ds.reports.iloc[0]  # R0, F1, released days[5]


def test_match_picks_closest_record(tmp_path):
    ds, rep = _report(tmp_path)
    day = rep.release_date
    hist = _history([
        ("A1", "F1", ds.calendar.day(rep.day0_idx - 1), 3, 1.0, 10.0),
        ("A1", "F1", ds.calendar.day(rep.day0_idx + 2), 5, 2.0, 20.0),
    ])
    got = match_numeric_records(rep, hist, window_days=2, calendar=ds.calendar)
    assert got.recommendation == 3  # t-1 beats t+2


def test_match_outside_window_missing(tmp_path):
    ds, rep = _report(tmp_path)
    hist = _history([("A1", "F1", ds.calendar.day(rep.day0_idx + 3), 3, 1.0, 10.0)])
    got = match_numeric_records(rep, hist, window_days=2, calendar=ds.calendar)
    assert got.missing


def test_match_tie_breaks_to_earlier_date(tmp_path):
    ds, rep = _report(tmp_path)
    hist = _history([
        ("A1", "F1", ds.calendar.day(rep.day0_idx + 2), 5, 2.0, 20.0),
        ("A1", "F1", ds.calendar.day(rep.day0_idx - 2), 2, 1.0, 10.0),
    ])
    got = match_numeric_records(rep, hist, window_days=2, calendar=ds.calendar)
    assert got.recommendation == 2


def test_match_ignores_other_analysts(tmp_path):
    ds, rep = _report(tmp_path)
    hist = _history([("A9", "F1", rep.release_date, 4, 1.0, 10.0)])
    assert match_numeric_records(rep, hist, window_days=2, calendar=ds.calendar).missing
