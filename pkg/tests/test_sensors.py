"""Sensor model tests: divider arithmetic done by hand, filter and
envelope behaviour checked against analytic values."""

from __future__ import annotations

import numpy as np
import pytest

from fescycle.sensors import (
    CalibrationTable,
    FsrConfig,
    MmgConfig,
    MmgFrame,
    calibrate_fsr,
    force_from_voltage,
    fsr_voltage,
    mmg_denoise,
    mmg_envelope,
    mmg_synthesize,
    read_calibration_csv,
    write_calibration_csv,
    write_mmg_csv,
)


def test_fsr_voltage_hand_computed():
    cfg = FsrConfig(vcc=5.0, r_fixed=10e3, k_fsr=100e3, alpha=1.0)
    # F=20 N -> R = 100k/20 = 5 kOhm -> 5 * 10/(10+5) = 3.333 V
    assert fsr_voltage(20.0, cfg) == pytest.approx(10.0 / 3.0, rel=1e-9)
    # Divider symmetry point: R = r_fixed at F = k/r_fixed = 10 N
    assert fsr_voltage(10.0, cfg) == pytest.approx(2.5)
    assert fsr_voltage(0.0, cfg) == 0.0


def test_fsr_voltage_monotone_and_validated():
    cfg = FsrConfig()
    forces = np.linspace(cfg.f_min, 200.0, 400)
    v = np.array([fsr_voltage(f, cfg) for f in forces])
    assert (np.diff(v) > 0).all()
    with pytest.raises(ValueError):
        fsr_voltage(-1.0, cfg)
    with pytest.raises(ValueError):
        FsrConfig(alpha=2.0)
    with pytest.raises(ValueError):
        FsrConfig(r_fixed=0.0)


def test_calibrate_fsr_table_shape():
    cfg = FsrConfig()
    weights = [float(w) for w in range(5, 55, 5)]
    table = calibrate_fsr(weights, cfg)
    assert len(table.points) == 10
    assert (np.diff(table.voltages) > 0).all()


def test_calibration_table_validation():
    cfg = FsrConfig()
    with pytest.raises(ValueError):
        calibrate_fsr([5.0, 10.0], cfg)  # too few points
    with pytest.raises(ValueError):
        calibrate_fsr([10.0, 5.0, 15.0], cfg)  # unsorted
    with pytest.raises(ValueError):
        calibrate_fsr([5.0, 12.0, 19.0], cfg)  # wrong spacing
    with pytest.raises(ValueError):
        CalibrationTable(((5.0, 1.0), (10.0, 0.9), (15.0, 1.1)))  # non-monotone


def test_force_from_voltage_knots_and_midpoints():
    cfg = FsrConfig()
    table = calibrate_fsr([float(w) for w in range(5, 55, 5)], cfg)
    v20 = fsr_voltage(20.0, cfg)
    assert force_from_voltage(v20, table) == pytest.approx(20.0)
    v25 = fsr_voltage(25.0, cfg)
    assert force_from_voltage((v20 + v25) / 2, table) == pytest.approx(22.5)
    assert force_from_voltage(table.voltages[-1] + 1.0, table) == 50.0
    assert force_from_voltage(0.0, table) == 5.0


def test_fsr_round_trip_within_two_percent():
    # Interpolation error between 5 N knots for v = vcc*F/(F+c) is bounded
    # by 6.25/(F*(F+c)) relative; with the default c = k/r_fixed = 50 N the
    # worst case (midpoint of the 5..10 N segment) is about 1.5%.
    cfg = FsrConfig()
    table = calibrate_fsr([float(w) for w in range(5, 55, 5)], cfg)
    for f in np.arange(5.0, 50.01, 0.5):
        back = force_from_voltage(fsr_voltage(float(f), cfg), table)
        assert abs(back - f) / f <= 0.02, f


def test_mmg_determinism_and_rms():
    cfg = MmgConfig()
    f1 = mmg_synthesize(0.8, np.random.default_rng(5), cfg, 4000, 1000.0)
    f2 = mmg_synthesize(0.8, np.random.default_rng(5), cfg, 4000, 1000.0)
    np.testing.assert_array_equal(f1.mic_muscle, f2.mic_muscle)
    np.testing.assert_array_equal(f1.mic_ambient, f2.mic_ambient)
    muscle = f1.mic_muscle - cfg.c_amb * f1.mic_ambient
    assert np.sqrt(np.mean(muscle ** 2)) == pytest.approx(cfg.g_mmg * 0.8, rel=1e-9)


def test_mmg_zero_activation_is_pure_ambient():
    cfg = MmgConfig(c_amb=0.7)
    frame = mmg_synthesize(0.0, np.random.default_rng(1), cfg, 1000, 1000.0)
    np.testing.assert_allclose(frame.mic_muscle, 0.7 * frame.mic_ambient)


def test_mmg_denoise_cancellation():
    cfg = MmgConfig()
    frame = mmg_synthesize(0.0, np.random.default_rng(2), cfg, 2000, 1000.0)
    residual = mmg_denoise(frame, cfg.c_amb)
    assert np.max(np.abs(residual)) <= 1e-12
    # c_amb = 0 passes the muscle mic through untouched.
    np.testing.assert_array_equal(mmg_denoise(frame, 0.0), frame.mic_muscle)


def test_mmg_denoise_attenuation_and_mismatch():
    # Ambient attenuation with the true coupling gain; then verify a +/-20%
    # mis-estimate still never amplifies the ambient leakage.
    cfg = MmgConfig()
    ambient_only = mmg_synthesize(0.0, np.random.default_rng(9), cfg, 8000, 1000.0)
    raw = np.sqrt(np.mean(ambient_only.mic_muscle ** 2))
    exact = np.sqrt(np.mean(mmg_denoise(ambient_only, cfg.c_amb) ** 2))
    att_db = 20 * np.log10(raw / exact) if exact > 0 else np.inf
    assert att_db >= 20.0
    for c_est in (0.8 * cfg.c_amb, 1.2 * cfg.c_amb):
        resid = np.sqrt(np.mean(mmg_denoise(ambient_only, c_est) ** 2))
        assert resid <= raw


def test_mmg_frame_validation():
    with pytest.raises(ValueError):
        MmgFrame(np.zeros(10), np.zeros(9), 1000.0)
    with pytest.raises(ValueError):
        MmgFrame(np.zeros(10), np.zeros(10), 100.0)
    with pytest.raises(ValueError):
        mmg_synthesize(1.5, np.random.default_rng(0), MmgConfig(), 100, 1000.0)


def test_envelope_constants_and_sine():
    fs = 1000.0
    assert (mmg_envelope(np.zeros(500), fs) == 0).all()
    env = mmg_envelope(np.full(500, 0.5), fs)
    np.testing.assert_allclose(env, 0.5)
    # 50 Hz sine, amplitude 2: a 200 ms window holds 10 full cycles, so the
    # envelope sits at 2/sqrt(2) once warmed up.
    t = np.arange(2000) / fs
    env = mmg_envelope(2.0 * np.sin(2 * np.pi * 50.0 * t), fs)
    np.testing.assert_allclose(env[400:], 2.0 / np.sqrt(2.0), rtol=0.05)
    with pytest.raises(ValueError):
        mmg_envelope(np.array([]), fs)
    with pytest.raises(ValueError):
        mmg_envelope(np.ones(10), fs, window_ms=0.1)


def test_envelope_monotone_in_activation():
    cfg = MmgConfig()
    means = []
    for act in (0.2, 0.5, 0.8):
        frame = mmg_synthesize(act, np.random.default_rng(33), cfg, 4000, 1000.0)
        clean = mmg_denoise(frame, cfg.c_amb)
        means.append(float(np.mean(mmg_envelope(clean, 1000.0))))
    assert means[0] < means[1] < means[2]


def test_csv_round_trips(tmp_path):
    cfg = FsrConfig()
    table = calibrate_fsr([float(w) for w in range(5, 55, 5)], cfg)
    cal_path = tmp_path / "cal.csv"
    write_calibration_csv(table, cal_path)
    loaded = read_calibration_csv(cal_path)
    np.testing.assert_allclose(loaded.forces, table.forces)
    np.testing.assert_allclose(loaded.voltages, table.voltages)

    frame = mmg_synthesize(0.5, np.random.default_rng(4), MmgConfig(), 300, 1000.0)
    clean = mmg_denoise(frame, 1.0)
    env = mmg_envelope(clean, 1000.0)
    mmg_path = tmp_path / "mmg.csv"
    write_mmg_csv(mmg_path, frame, clean, env)
    header = mmg_path.read_text().splitlines()[0]
    assert header == "t_s,mic_muscle_V,mic_ambient_V,denoised_V,envelope_V"
    assert len(mmg_path.read_text().splitlines()) == 301
