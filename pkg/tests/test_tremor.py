"""Tremor scoring tests.

The reconstruction checks lean on closed forms (double integral of a
sinusoid) and on filter-response arithmetic; the Markov checks compare
against hand-counted smoothed transition tables.
"""

import numpy as np
import pytest
from scipy import signal as sig

from dbsim.tremor import (
    DEFAULT_RADII_MM,
    TremorModel,
    TremorRecording,
    Trajectory,
    assign_states,
    estimate_markov,
    fit_tremor_model,
    load_recording,
    reconstruct_trajectory,
    save_recording,
    score_report,
    tremor_distribution,
    tremor_score,
)


def sine_recording(amp_m, freq_hz=5.0, fs=100.0, duration_s=20.0, axis=0):
    t = np.arange(int(round(fs * duration_s))) / fs
    w = 2.0 * np.pi * freq_hz
    a = np.zeros((t.size, 3))
    a[:, axis] = -np.asarray(amp_m) * w**2 * np.sin(w * t)
    return TremorRecording(fs, a)


def write_csv(path, t, axyz, header="t_s,ax,ay,az"):
    rows = [header]
    for i in range(len(t)):
        rows.append(
            f"{t[i]:.6f},{axyz[i, 0]:.9f},{axyz[i, 1]:.9f},{axyz[i, 2]:.9f}"
        )
    path.write_text("\n".join(rows) + "\n")


# ---------------------------------------------------------------------------
# file handling


def test_load_recording_counts(tmp_path):
    t = np.arange(2000) / 100.0
    a = np.zeros((2000, 3))
    a[:, 1] = 0.5
    f = tmp_path / "rec.csv"
    write_csv(f, t, a)
    rec = load_recording(f)
    assert rec.n_samples == 2000
    assert rec.sample_rate_hz == pytest.approx(100.0, rel=1e-9)
    assert np.allclose(rec.accel_mps2[:, 1], 0.5)


def test_load_recording_missing_axis(tmp_path):
    f = tmp_path / "short.csv"
    f.write_text("t_s,ax,ay\n0.0,0.1,0.2\n0.01,0.1,0.2\n")
    with pytest.raises(ValueError, match="missing"):
        load_recording(f)


def test_load_recording_jitter_gate(tmp_path):
    t = np.arange(600) / 100.0
    a = np.zeros((600, 3))
    rng = np.random.default_rng(3)

    wobble = t + rng.uniform(-0.004, 0.004, t.size) / 100.0  # 0.4% jitter
    f_ok = tmp_path / "ok.csv"
    write_csv(f_ok, wobble, a)
    assert load_recording(f_ok).sample_rate_hz == pytest.approx(100.0, rel=0.01)

    bad = t.copy()
    bad[300] += 0.25 / 100.0  # one 25% gap
    f_bad = tmp_path / "bad.csv"
    write_csv(f_bad, bad, a)
    with pytest.raises(ValueError, match="non-uniform"):
        load_recording(f_bad)


def test_export_roundtrip(tmp_path):
    rng = np.random.default_rng(11)
    rec = TremorRecording(128.0, rng.standard_normal((700, 3)))
    back = load_recording(save_recording(rec, tmp_path / "out.tsv"))
    assert np.array_equal(back.accel_mps2, rec.accel_mps2)
    assert back.sample_rate_hz == pytest.approx(128.0, rel=1e-9)


def test_recording_validation():
    with pytest.raises(ValueError):
        TremorRecording(0.0, np.zeros((10, 3)))
    with pytest.raises(ValueError):
        TremorRecording(100.0, np.zeros((10, 2)))
    with pytest.raises(ValueError):
        TremorRecording(100.0, np.zeros((10, 3)), lifts_s=((0.5, 5.0),))
    rec = TremorRecording(100.0, np.zeros((501, 3)), lifts_s=((0.0, 2.0),))
    assert rec.duration_s == pytest.approx(5.0)
    assert rec.lifts_s == ((0.0, 2.0),)


# ---------------------------------------------------------------------------
# trajectory reconstruction


def test_zero_acceleration_zero_trajectory():
    rec = TremorRecording(100.0, np.zeros((1500, 3)))
    traj = reconstruct_trajectory(rec)
    assert traj.xy_mm.shape == (1500, 2)
    assert np.allclose(traj.xy_mm, 0.0)


def test_sinusoid_amplitude_recovered_within_5pct():
    # a(t) = -A w^2 sin(wt) integrates back to A sin(wt) exactly
    rec = sine_recording(0.003, freq_hz=5.0)
    traj = reconstruct_trajectory(rec)
    fs = int(rec.sample_rate_hz)
    core = traj.xy_mm[fs:-fs, 0]          # clear of filter edge transients
    amp_mm = np.sqrt(2.0) * np.std(core)
    assert amp_mm == pytest.approx(3.0, rel=0.05)
    # single-axis input: the second principal axis carries nothing
    assert np.abs(traj.xy_mm[fs:-fs, 1]).max() < 1e-9 * amp_mm


def test_projection_recovers_oblique_motion():
    # same sinusoid split across two sensor axes; the principal
    # projection must recover the full amplitude, not a component
    fs = 100.0
    t = np.arange(2000) / fs
    w = 2.0 * np.pi * 5.0
    a = np.zeros((t.size, 3))
    drive = -0.002 * w**2 * np.sin(w * t)
    a[:, 0] = drive * np.cos(0.7)
    a[:, 2] = drive * np.sin(0.7)
    traj = reconstruct_trajectory(TremorRecording(fs, a))
    amp = np.sqrt(2.0) * np.std(traj.xy_mm[int(fs):-int(fs), 0])
    assert amp == pytest.approx(2.0, rel=0.05)


def test_out_of_band_noise_attenuated_20db():
    fs = 100.0
    t = np.arange(2000) / fs
    rng = np.random.default_rng(7)
    noise = rng.standard_normal((t.size, 3))
    sos_hi = sig.butter(4, (18.0, 45.0), btype="bandpass", fs=fs, output="sos")
    noise = sig.sosfiltfilt(sos_hi, noise, axis=0)
    rho = 0.05
    noise *= rho / np.sqrt(np.mean(noise**2))
    inband = np.zeros_like(noise)
    inband[:, 0] = np.sqrt(2.0) * rho * np.sin(2.0 * np.pi * 5.0 * t)
    assert np.sqrt(np.mean(inband**2)) == pytest.approx(rho / np.sqrt(3), rel=0.05)

    core = slice(int(fs), -int(fs))
    r_in = np.sqrt(np.mean(
        reconstruct_trajectory(TremorRecording(fs, inband)).radial_mm()[core] ** 2
    ))
    r_out = np.sqrt(np.mean(
        reconstruct_trajectory(TremorRecording(fs, noise)).radial_mm()[core] ** 2
    ))
    measured_db = 20.0 * np.log10(r_in / r_out)

    # response oracle: displacement gain is |H_bp|^2 / w^2 (zero-phase
    # filtering squares the magnitude); every frequency in the noise band
    # sits far more than 20 dB below the 5 Hz reference
    freqs, h = sig.sosfreqz(
        sig.butter(4, (2.0, 12.0), btype="bandpass", fs=fs, output="sos"),
        worN=8192, fs=fs,
    )

    def gain(f):
        i = np.argmin(np.abs(freqs - f))
        return np.abs(h[i]) ** 2 / (2.0 * np.pi * f) ** 2

    band = freqs[(freqs >= 18.0) & (freqs <= 45.0)]
    oracle_db = min(20.0 * np.log10(gain(5.0) / gain(f)) for f in band)
    assert oracle_db > 20.0
    assert measured_db >= 20.0


def test_reconstruction_preconditions():
    rec = TremorRecording(100.0, np.zeros((1500, 3)))
    with pytest.raises(ValueError, match="band"):
        reconstruct_trajectory(rec, band_hz=(12.0, 2.0))
    with pytest.raises(ValueError, match="band"):
        reconstruct_trajectory(rec, band_hz=(0.0, 12.0))
    with pytest.raises(ValueError, match="band"):
        reconstruct_trajectory(rec, band_hz=(2.0, 60.0))
    with pytest.raises(ValueError, match="shorter"):
        reconstruct_trajectory(TremorRecording(100.0, np.zeros((400, 3))))


# ---------------------------------------------------------------------------
# state assignment


def staircase_trajectory(values_mm, fs=100.0, window_s=0.5):
    per = int(round(fs * window_s))
    x = np.repeat(np.asarray(values_mm, dtype=float), per)
    xy = np.stack([x, np.zeros_like(x)], axis=1)
    return Trajectory(fs, xy)


def test_assign_states_rule_instances():
    zero = Trajectory(100.0, np.zeros((400, 2)))
    assert np.all(assign_states(zero) == 1)

    one = staircase_trajectory([3.2])
    assert assign_states(one).tolist() == [3]  # 3.2 <= 4 but > 2

    values = [0.5, 1.5, 3.2, 9.0, 20.0, 1.0, 16.0]
    traj = staircase_trajectory(values)
    got = assign_states(traj)
    radii = np.asarray(DEFAULT_RADII_MM)
    oracle = np.minimum(
        np.searchsorted(radii, np.asarray(values), side="left") + 1, radii.size
    )
    assert np.array_equal(got, oracle)
    assert got.tolist() == [1, 2, 3, 5, 5, 1, 5]


def test_assign_states_windows_and_errors():
    # trailing partial window is not scored
    traj = staircase_trajectory([1.0, 1.0, 1.0])
    clipped = Trajectory(100.0, traj.xy_mm[:130])
    assert assign_states(clipped).size == 2
    with pytest.raises(ValueError, match="radi"):
        assign_states(traj, radii_mm=())
    with pytest.raises(ValueError, match="radi"):
        assign_states(traj, radii_mm=(1.0, 1.0, 2.0))
    with pytest.raises(ValueError, match="window"):
        assign_states(traj, window_s=0.0)
    with pytest.raises(ValueError, match="shorter"):
        assign_states(Trajectory(100.0, np.zeros((10, 2))))


def test_assign_states_radial_not_per_axis():
    # 3/5 on both axes put the radius at 34/5: state by the norm, not max axis
    n = 50
    xy = np.full((n, 2), 0.0)
    xy[:, 0] = 3.0
    xy[:, 1] = 4.0
    assert assign_states(Trajectory(100.0, xy)).tolist() == [4]  # r = 5.0


# ---------------------------------------------------------------------------
# Markov estimation


def oracle_markov(states, n):
    counts = np.ones((n, n))
    for a, b in zip(states[:-1], states[1:]):
        counts[a - 1, b - 1] += 1
    p = counts / counts.sum(axis=1, keepdims=True)
    w, v = np.linalg.eig(p.T)
    i = np.argmin(np.abs(w - 1.0))
    pi = np.real(v[:, i])
    return p, pi / pi.sum()


def test_constant_sequence_concentrates():
    states = np.full(100, 2)
    p, pi = estimate_markov(states)
    # smoothed counts in closed form: row 2 keeps 100/101 self weight,
    # row 1 is uniform; stationary mass on 2 is 101/103
    assert p[1, 1] == pytest.approx(100.0 / 101.0)
    assert p[0, 0] == pytest.approx(0.5)
    assert pi[1] == pytest.approx(101.0 / 103.0, abs=1e-8)
    assert pi[1] >= 0.95

    single = np.full(50, 4)
    p1, pi1 = estimate_markov(single, n_states=4)
    assert pi1.argmax() == 3


def test_alternating_sequence_splits_evenly():
    # odd length so both transition counts match and the chain is symmetric
    states = np.append(np.tile([1, 2], 60), 1)
    _, pi = estimate_markov(states)
    assert np.allclose(pi, 0.5, atol=1e-6)


def test_markov_against_eigen_oracle():
    rng = np.random.default_rng(23)
    states = rng.integers(1, 6, size=400)
    p, pi = estimate_markov(states, n_states=5)
    p_ref, pi_ref = oracle_markov(states, 5)
    assert np.allclose(p, p_ref, atol=1e-12)
    assert np.allclose(pi, pi_ref, atol=1e-8)
    assert np.allclose(p.sum(axis=1), 1.0, atol=1e-12)
    assert np.max(np.abs(pi @ p - pi)) < 1e-6


def test_markov_errors():
    with pytest.raises(ValueError):
        estimate_markov(np.array([1]))
    with pytest.raises(ValueError):
        estimate_markov(np.array([0, 1, 2]))
    with pytest.raises(ValueError):
        estimate_markov(np.array([1, 5, 2]), n_states=3)


# ---------------------------------------------------------------------------
# scoring


def concentrated_model(n, k):
    pi = np.zeros(n)
    pi[k - 1] = 1.0
    return TremorModel(
        radii_mm=tuple(float(2**i) for i in range(n)),
        states=np.full(10, k),
        transition=np.eye(n),
        stationary=pi,
        score=0.0,
    )


def test_score_anchor_points():
    assert tremor_score(concentrated_model(5, 1)) == 0.0
    assert tremor_score(concentrated_model(5, 5)) == 100.0
    uniform = TremorModel(
        radii_mm=(1.0, 2.0, 4.0, 8.0, 16.0),
        states=np.arange(1, 6),
        transition=np.full((5, 5), 0.2),
        stationary=np.full(5, 0.2),
        score=50.0,
    )
    assert tremor_score(uniform) == pytest.approx(50.0)
    with pytest.raises(ValueError, match="two states"):
        tremor_score(
            TremorModel(
                radii_mm=(1.0,), states=np.ones(4, dtype=int),
                transition=np.eye(1), stationary=np.ones(1), score=0.0,
            )
        )


def test_model_invariant_validation():
    bad_rows = np.array([[0.7, 0.2], [0.5, 0.5]])
    with pytest.raises(ValueError, match="sum to one"):
        TremorModel((1.0, 2.0), np.ones(3, dtype=int), bad_rows,
                    np.array([0.5, 0.5]), 0.0)
    with pytest.raises(ValueError, match="pi P = pi"):
        TremorModel((1.0, 2.0), np.ones(3, dtype=int),
                    np.array([[0.9, 0.1], [0.4, 0.6]]),
                    np.array([0.5, 0.5]), 0.0)
    with pytest.raises(ValueError, match="radii"):
        TremorModel((2.0, 1.0), np.ones(3, dtype=int), np.eye(2),
                    np.array([1.0, 0.0]), 0.0)


def test_distribution_rules():
    assert np.array_equal(tremor_distribution(np.full(7, 3)),
                          np.array([0.0, 0.0, 1.0]))
    rng = np.random.default_rng(5)
    states = rng.integers(1, 6, size=200)
    hist = tremor_distribution(states, 5)
    assert hist.sum() == pytest.approx(1.0)
    assert np.array_equal(hist, np.bincount(states - 1, minlength=5) / 200)
    with pytest.raises(ValueError):
        tremor_distribution(np.array([]))


# ---------------------------------------------------------------------------
# end to end


def test_two_amplitude_signal_bimodal_histogram():
    fs = 100.0
    t = np.arange(2001) / fs
    w = 2.0 * np.pi * 5.0
    amps = np.where(t < 10.0, 0.0015, 0.006)   # 1.5 mm then 6 mm
    a = np.zeros((t.size, 3))
    a[:, 0] = -amps * w**2 * np.sin(w * t)
    traj = reconstruct_trajectory(TremorRecording(fs, a))
    model = fit_tremor_model(traj)

    # counting oracle: windowed peak of the reconstructed radius, mapped
    # through the radii by hand
    per = 50
    n_win = traj.n_samples // per
    peaks = traj.radial_mm()[: n_win * per].reshape(n_win, per).max(axis=1)
    expect = np.minimum(
        np.searchsorted(np.asarray(DEFAULT_RADII_MM), peaks, side="left") + 1, 5
    )
    assert np.array_equal(model.states, expect)

    hist = tremor_distribution(model.states, 5)
    assert hist[1] > 0.4 and hist[3] > 0.4       # mass at states 2 and 4
    # windows away from the amplitude step follow the ideal staircase
    assert np.all(model.states[2:18] == 2)
    assert np.all(model.states[22:38] == 4)


def test_score_monotone_in_amplitude():
    scores = []
    for amp in (0.0005, 0.0015, 0.006, 0.020):
        traj = reconstruct_trajectory(sine_recording(amp))
        scores.append(fit_tremor_model(traj).score)
    assert all(b > a for a, b in zip(scores, scores[1:]))
    assert scores[0] < 25.0 and scores[-1] > 75.0


def test_scale_covariance():
    values = [0.5, 1.5, 3.2, 9.0, 2.5, 0.7, 12.0, 1.1]
    traj = staircase_trajectory(values)
    scaled = Trajectory(100.0, traj.xy_mm * 3.0)
    radii3 = tuple(3.0 * r for r in DEFAULT_RADII_MM)
    a = assign_states(traj, DEFAULT_RADII_MM)
    b = assign_states(scaled, radii3)
    assert np.array_equal(a, b)
    m_a = fit_tremor_model(traj, DEFAULT_RADII_MM)
    m_b = fit_tremor_model(scaled, radii3)
    assert np.array_equal(m_a.transition, m_b.transition)
    assert np.array_equal(m_a.stationary, m_b.stationary)
    assert m_a.score == m_b.score


def test_on_off_contrast_shifts_mass_down():
    # damping the tremor must move occupancy mass to the low states
    rng = np.random.default_rng(41)
    fs = 100.0
    t = np.arange(3000) / fs
    w = 2.0 * np.pi * 4.5
    envelope = 0.004 * (1.0 + 0.5 * np.sin(2.0 * np.pi * 0.15 * t))
    a = np.zeros((t.size, 3))
    a[:, 0] = -envelope * w**2 * np.sin(w * t)
    a += 0.002 * rng.standard_normal(a.shape)
    on = a * 0.2                                  # stimulation damps it
    m_off = fit_tremor_model(reconstruct_trajectory(TremorRecording(fs, a)))
    m_on = fit_tremor_model(reconstruct_trajectory(TremorRecording(fs, on)))
    h_off = tremor_distribution(m_off.states, 5)
    h_on = tremor_distribution(m_on.states, 5)
    assert m_on.score < m_off.score
    # cumulative mass in the low states grows when amplitude drops
    assert h_on[:2].sum() > h_off[:2].sum()


def test_score_report_totals():
    lh = fit_tremor_model(reconstruct_trajectory(sine_recording(0.006)))
    rh = fit_tremor_model(reconstruct_trajectory(sine_recording(0.0015)))
    text = score_report([("LH", "C3-,C4+", lh), ("RH", "C3-,C4+", rh)])
    assert "setting C3-,C4+" in text
    assert "LH" in text and "RH" in text
    assert f"total {lh.score + rh.score:.2f}" in text
    assert "radii_mm  1 2 4 8 16" in text
    with pytest.raises(ValueError):
        score_report([])
