import pytest

from dseprot.analysis import TraceRow, analyze_trace, read_trace
from dseprot.models import ModelKind

U, AG = ModelKind.Unfaulted, ModelKind.FaultAG


def row(k, committed, conf):
    c = [0.0] * 8
    c[int(conf[0])] = conf[1]
    return TraceRow(k * 5e-4, conf[0], committed, "None" if committed is U else "TripAll", tuple(c))


def synthetic():
    rows = [row(k, U, (U, 0.0 if k < 4 else 0.9)) for k in range(20)]
    rows += [row(k, U, (U, 0.01)) for k in range(20, 23)]
    rows += [row(k, U, (AG, 0.95)) for k in range(23, 29)]
    rows += [row(k, AG, (AG, 0.95)) for k in range(29, 40)]
    return rows


def test_latency_changes_and_blackout():
    s = analyze_trace(synthetic(), fault_time=0.01, threshold=0.05, window_N=5)
    assert s.fault_index == 20
    assert s.latency_samples == 9
    assert s.detected_model is AG
    assert s.commitment_changes == 1 and s.changes == [(29 * 5e-4, U, AG)]
    assert s.final_committed is AG
    # the warm-up rows 0..3 are not a blackout
    assert s.blackout_spans == [(20, 22)]
    assert s.longest_blackout == 3


def test_model_stats():
    s = analyze_trace(synthetic(), window_N=5)
    st = s.model_stats[AG]
    assert st["max"] == 0.95
    # fractions are over the 36 post-warm-up rows
    assert st["argmax_frac"] == pytest.approx(17 / 36)
    assert s.stats_csv_rows()[0] == ["model", "mean_conf", "max_conf", "min_conf", "argmax_frac"]
    assert "longest blackout: 3 samples" in s.report()


def test_no_fault_time_means_no_latency():
    s = analyze_trace(synthetic())
    assert s.latency_samples is None and s.fault_index is None
    assert "detection latency: none" in s.report()


def test_trailing_blackout_span_closed():
    rows = synthetic() + [row(k, AG, (AG, 0.0)) for k in range(40, 43)]
    assert analyze_trace(rows).blackout_spans[-1] == (40, 42)


def test_read_trace_rejects_bad_header(tmp_path):
    p = tmp_path / "t.csv"
    p.write_text("a,b,c\n")
    with pytest.raises(ValueError):
        read_trace(p)
    p.write_text("")
    assert read_trace(p) == []
