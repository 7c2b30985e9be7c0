import subprocess
import sys

import pytest

from dseprot.analysis import analyze_trace, read_trace
from dseprot.cli import main
from dseprot.models import ModelKind

PY = [sys.executable, "-m", "dseprot"]
SHORT = ["--t-fault", "0.05", "--t-end", "0.1"]  # 201 samples, fault at sample 100


@pytest.fixture(scope="module")
def short_case(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli") / "case1.csv"
    assert main(["simulate", "--case", "I", "--out", str(out), *SHORT]) == 0
    return out


def pipeline(csv, trace, *run_args):
    rp = subprocess.Popen([*PY, "replay", "--in", str(csv), "--speed", "0"], stdout=subprocess.PIPE)
    run = subprocess.run([*PY, "run", "--trace", str(trace), *run_args], stdin=rp.stdout, capture_output=True, text=True)
    rp.stdout.close()
    assert rp.wait() == 0
    return run


def test_simulate_reports_and_writes(tmp_path, capsys):
    out = tmp_path / "m.csv"
    assert main(["simulate", "--fault", "CA", "--out", str(out), *SHORT, "--noise-v", "0.5", "--seed", "3"]) == 0
    text = capsys.readouterr().out
    assert "rows: 201" in text and "FaultCA" in text
    assert len(out.read_text().splitlines()) == 202


def test_pipeline_end_to_end(short_case, tmp_path):
    traces = []
    for n in range(2):
        trace = tmp_path / f"trace{n}.csv"
        run = pipeline(short_case, trace)
        assert run.returncode == 0, run.stderr
        assert run.stdout.splitlines() == ["TRIP TripAll model=FaultAG t=0.055"]
        traces.append(trace.read_text())
    assert traces[0] == traces[1]
    s = analyze_trace(read_trace(tmp_path / "trace0.csv"), fault_time=0.05)
    assert s.latency_samples == 10 and s.detected_model is ModelKind.FaultAG


def test_zero_hysteresis_commits_earlier(short_case, tmp_path):
    run = pipeline(short_case, tmp_path / "t.csv", "--hysteresis", "0")
    assert run.returncode == 0
    (line,) = run.stdout.splitlines()
    assert float(line.rsplit("t=", 1)[1]) < 0.055


def test_config_file_and_flag_precedence(short_case, tmp_path):
    conf = tmp_path / "c.conf"
    conf.write_text("hysteresis = 0\n")
    baseline = pipeline(short_case, tmp_path / "a.csv", "--in", str(short_case))
    assert baseline.stdout.strip().endswith("t=0.055")
    run = subprocess.run([*PY, "--config", str(conf), "run", "--trace", str(tmp_path / "b.csv"), "--in", str(short_case)], capture_output=True, text=True)
    t_file = float(run.stdout.strip().rsplit("t=", 1)[1])
    assert t_file < 0.055
    run = subprocess.run([*PY, "--config", str(conf), "run", "--trace", str(tmp_path / "c.csv"), "--in", str(short_case), "--hysteresis", "5"], capture_output=True, text=True)
    assert run.stdout.strip().endswith("t=0.055")


def test_run_on_empty_input(tmp_path):
    trace = tmp_path / "t.csv"
    run = subprocess.run([*PY, "run", "--trace", str(trace)], input="", capture_output=True, text=True)
    assert run.returncode == 0 and run.stdout == ""
    assert trace.read_text().startswith("t,chosen,committed,action,c_U")


def test_run_skips_malformed_lines(tmp_path, short_case):
    lines = short_case.read_text().splitlines()[:8]
    lines.insert(3, "not,a,row")
    trace = tmp_path / "t.csv"
    run = subprocess.run([*PY, "run", "--trace", str(trace)], input="\n".join(lines) + "\n", capture_output=True, text=True)
    assert run.returncode == 0
    assert "skipped" in run.stderr
    assert len(read_trace(trace)) == 7


def test_estimate(short_case, capsys):
    assert main(["estimate", "--model", "AG", "--in", str(short_case), "--at", "0.08"]) == 0
    kv = dict(line.split(" = ") for line in capsys.readouterr().out.splitlines())
    assert kv["model"] == "FaultAG" and kv["dof"] == "11"
    assert float(kv["G_f"]) == pytest.approx(66.667, rel=5e-3)
    assert float(kv["confidence"]) > 0.99


def test_analyze_writes_stats(short_case, tmp_path, capsys):
    trace = tmp_path / "t.csv"
    assert main(["run", "--trace", str(trace), "--in", str(short_case)]) == 0
    capsys.readouterr()
    stats = tmp_path / "s.csv"
    assert main(["analyze", "--trace", str(trace), "--fault-time", "0.05", "--csv", str(stats)]) == 0
    report = capsys.readouterr().out
    assert "detection latency: 10 samples -> FaultAG" in report
    assert "commitment changes: 1" in report
    assert stats.read_text().splitlines()[0] == "model,mean_conf,max_conf,min_conf,argmax_frac"


@pytest.mark.parametrize(
    "argv",
    [
        [],
        ["frobnicate"],
        ["simulate", "--out", "x.csv"],
        ["simulate", "--case", "I", "--fault", "AG", "--out", "x.csv"],
        ["simulate", "--case", "I", "--out", "x.csv", "--t-fault", "2"],
        ["estimate", "--model", "FaultXY", "--in", "x.csv"],
        ["run", "--trace", "t.csv", "--window", "1"],
        ["run"],
    ],
)
def test_usage_errors_exit_1(argv, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    with pytest.raises(SystemExit) as exc:
        sys.exit(main(argv))
    assert exc.value.code == 1


def test_runtime_errors_exit_2(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("t,va,vb,vc,ia,ib,ic\n0.1,1,2,3,4,5,6\n0.0,1,2,3,4,5,6\n")
    assert main(["replay", "--in", str(bad), "--speed", "0"]) == 2
    assert main(["replay", "--in", str(tmp_path / "missing.csv")]) == 2
    assert main(["analyze", "--trace", str(tmp_path / "missing.csv")]) == 2


def test_bad_config_file_exit_1(tmp_path):
    conf = tmp_path / "c.conf"
    conf.write_text("unknown_key = 3\n")
    assert main(["--config", str(conf), "analyze", "--trace", "x"]) == 1
