import math

import numpy as np
import pytest

from dseprot.models import ModelKind
from dseprot.scenario import (
    CSV_HEADER,
    FaultSpec,
    ScenarioConfig,
    case_config,
    read_measurements_csv,
    simulate_case,
    simulate_detailed,
    steady_state_phasors,
    write_measurements_csv,
)
from oracles import load_phasor

import runs

LINE = complex(0.097, 2 * math.pi * 60 * 88e-6)


def rms_and_lag(res, lo, hi, phase=0):
    """rms of the line current and its lag behind the bus voltage, by projection on 60 Hz."""
    t = res.t[lo:hi]
    ref = np.exp(-1j * 2 * math.pi * 60 * t)
    v = 2 * np.mean(res.v[phase, lo:hi] * ref)
    i = 2 * np.mean(res.i[phase, lo:hi] * ref)
    return abs(i) / math.sqrt(2), math.degrees(np.angle(v) - np.angle(i)), abs(v) / math.sqrt(2)


def test_frozen_phasor_oracle():
    # stiff source, no line: 480 V across 18.432 + j9.048 ohm
    irms, lag = load_phasor(480.0, 18.432, 24e-3, 60.0)
    assert irms == pytest.approx(13.4968, abs=1e-4)
    assert lag == pytest.approx(26.145, abs=1e-3)


def test_prefault_current_matches_phasor_without_line():
    cfg = ScenarioConfig(fault_kind=None, line_R=0.0, line_L=1e-12, t_fault=0.0, t_end=0.1)
    res = simulate_detailed(cfg)
    irms, lag, vrms = rms_and_lag(res, 0, 200)  # 200 samples = 6 cycles
    assert irms == pytest.approx(13.4968, rel=1e-3)
    assert lag == pytest.approx(26.145, abs=0.05)
    assert vrms == pytest.approx(480 / math.sqrt(3), rel=1e-4)


def test_prefault_current_matches_phasor_with_line():
    res = runs.detailed("I")
    for ph in range(3):
        irms, _, _ = rms_and_lag(res, 0, 400, ph)  # 12 whole cycles
        assert irms == pytest.approx(load_phasor(480.0, 18.432, 24e-3, 60.0, LINE)[0], rel=1e-3)


def test_bus_kcl_and_neutral_every_sample():
    for case in ("I", "II", "III"):
        res = runs.detailed(case)
        np.testing.assert_allclose(res.i, res.i_load + res.i_fault, atol=1e-6)
        np.testing.assert_allclose(res.v_neutral, 10e-3 * res.i_load.sum(axis=0), atol=1e-9)


def test_fault_current_only_after_inception():
    res = runs.detailed("I")
    assert np.all(res.i_fault[:, : runs.FAULT_INDEX] == 0.0)
    assert np.abs(res.i_fault[0, runs.FAULT_INDEX + 1 :]).max() > 1000.0
    assert np.all(res.i_fault[1:] == 0.0)


def test_prefault_is_periodic():
    res = runs.detailed("II")
    # 100 samples at 2 kHz are exactly three 60 Hz cycles
    np.testing.assert_allclose(res.v[:, 100:400], res.v[:, 0:300], atol=1e-6 * 392)
    np.testing.assert_allclose(res.i[:, 100:400], res.i[:, 0:300], atol=1e-6 * 19)


def test_second_order_convergence():
    # against the continuous steady state, error falls 4x per halving of the step
    errs = []
    for h in (100e-6, 50e-6, 25e-6):
        res = simulate_detailed(ScenarioConfig(fault_kind=None, internal_step=h, t_fault=0.0, t_end=0.05))
        z = complex(18.432, 2 * math.pi * 60 * 24e-3) + LINE
        exact = math.sqrt(2) * (480 / math.sqrt(3)) / abs(z) * np.cos(2 * math.pi * 60 * res.t - np.angle(z))
        errs.append(np.abs(res.i[0] - exact).max())
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.05)
    assert errs[1] / errs[2] == pytest.approx(4.0, rel=0.05)


def test_steady_state_phasors_close_to_continuous():
    V, I = steady_state_phasors(case_config("I"))
    irms, _ = load_phasor(480.0, 18.432, 24e-3, 60.0, LINE)
    np.testing.assert_allclose(np.abs(I) / math.sqrt(2), irms, rtol=1e-4)


@pytest.mark.parametrize("case", ["I", "II", "III"])
def test_clamped_currents_respect_limit(case):
    res = runs.detailed(case, "current-limited")
    ilim = res.config.current_limit
    assert ilim == pytest.approx(2 * 13.4968, rel=1e-4)
    assert np.abs(res.i).max() <= ilim * (1 + 1e-12)
    assert res.clamped[:, runs.FAULT_INDEX + 1 :].any()
    assert not res.clamped[:, : runs.FAULT_INDEX].any()


def test_clamped_case_has_no_numerical_ringing():
    res = runs.detailed("II", "current-limited")
    assert np.abs(res.v).max() < 1.2 * 392.0


def test_csv_round_trip(tmp_path):
    S = runs.samples("I")
    path = write_measurements_csv(S, tmp_path / "m.csv")
    lines = path.read_text().splitlines()
    assert lines[0] == ",".join(CSV_HEADER)
    assert len(lines) == 1002
    assert tuple(read_measurements_csv(path)) == S


def test_noise_reproducible_by_seed():
    a = runs.samples("I", noisy=True, seed=7)
    b = simulate_case(case_config("I", noise_sigma_v=0.5, noise_sigma_i=0.05, seed=7))
    c = simulate_case(case_config("I", noise_sigma_v=0.5, noise_sigma_i=0.05, seed=8))
    assert tuple(b) == a
    assert tuple(c) != a
    clean = runs.samples("I")
    dv = np.array([s.va - c0.va for s, c0 in zip(a, clean)])
    assert np.std(dv) == pytest.approx(0.5, rel=0.1)


def test_fault_admittance_shapes():
    Y = FaultSpec(ModelKind.FaultCA, 100.0).admittance()
    assert Y[2, 2] == Y[0, 0] == 100.0 and Y[0, 2] == Y[2, 0] == -100.0
    assert np.allclose(Y.sum(axis=1), 0.0)
    np.testing.assert_array_equal(FaultSpec(ModelKind.Fault3P, 5.0).admittance(), 5.0 * np.eye(3))


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(t_fault=0.6),
        dict(internal_step=70e-6),
        dict(source_mode="droop"),
        dict(I_limit=-1.0),
        dict(noise_sigma_v=-0.1),
        dict(fault_conductance=0.0),
    ],
)
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        ScenarioConfig(**kwargs)


def test_case_label_must_match_fault():
    with pytest.raises(ValueError):
        ScenarioConfig(case="I", fault_kind=ModelKind.Fault3P)
    with pytest.raises(ValueError):
        case_config("IV")
