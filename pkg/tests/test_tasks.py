import datetime as dt
import logging

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.special import binom

from qrcforge import pipeline as P
from qrcforge import tasks as T


# ---------------------------------------------------------------- normalization

def test_normalize_examples(caplog):
    z, rec = T.normalize(np.array([0.0, 5.0, 10.0]))
    assert np.allclose(z, [0, 0.5, 1])
    with caplog.at_level(logging.WARNING):
        z, rec = T.normalize(np.array([[3.0, 1.0], [3.0, 2.0]]))
    assert np.array_equal(z[:, 0], [3.0, 3.0])
    assert rec.constant.tolist() == [True, False]
    assert "constant" in caplog.text


@given(st.integers(0, 2**31), st.integers(2, 40))
def test_normalize_round_trip(seed, rows):
    x = np.random.default_rng(seed).normal(size=(rows, 3)) * 100
    z, rec = T.normalize(x, fit_rows=max(2, rows // 2))
    assert np.allclose(T.denormalize(z, rec), x, rtol=0, atol=1e-12 * max(1, np.abs(x).max()))
    zr, _ = T.normalize(x)
    assert zr.min() >= 0 and zr.max() <= 1


def test_normalize_uses_fit_rows_only():
    z, rec = T.normalize(np.array([0.0, 1.0, 2.0]), fit_rows=2)
    assert np.allclose(z, [0, 1, 2])


def test_next_step_alignment():
    states = np.arange(12, dtype=float)[:, None]
    ds = T.next_step_dataset(states, P.EpisodeSplit(2, 8, 10), "ramp")
    assert ds.K == 10
    assert np.allclose(ds.targets[:-1], ds.inputs[1:])
    assert np.allclose(ds.norm.invert(ds.inputs[:, 0]), states[:10, 0])


# ---------------------------------------------------------------- repressilator

def test_repressilator_pure_decay():
    # proteins start at or above their mRNA, so no component rises first
    p = T.RepressilatorParams(alpha=0.0, alpha0=0.0, steps=200)
    traj = T.repressilator_trajectory(p, init=(0.2, 0.1, 0.3, 0.4, 0.5, 0.6))
    assert np.all(np.diff(traj, axis=0) <= 0)
    assert np.all(traj[-1] < traj[0])


def _bisect(f, lo, hi, tol=1e-14):
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if (f(lo) < 0) == (f(mid) < 0):
            lo = mid
        else:
            hi = mid
        if hi - lo < tol:
            break
    return 0.5 * (lo + hi)


def test_repressilator_symmetric_fixed_point():
    p = T.REPRESSILATOR_TRAIN
    star = _bisect(lambda x: p.alpha / (1 + x**p.hill_n) + p.alpha0 - x, 0.0, p.alpha + p.alpha0 + 1)
    x0 = np.full(6, star)
    step = T.rk4_integrate(T.repressilator_rhs(p), x0, p.dt, 1)
    assert np.abs(step[1] - x0).max() < 1e-9


def _local_maxima(x):
    return int(np.sum((x[1:-1] > x[:-2]) & (x[1:-1] > x[2:])))


def test_repressilator_oscillates_at_training_parameters():
    traj = T.repressilator_trajectory(T.REPRESSILATOR_TRAIN)
    assert traj.shape == (6101, 6)
    for i in range(3, 6):
        assert _local_maxima(traj[:, i]) >= 3


def test_rk4_fourth_order_convergence():
    p = T.REPRESSILATOR_TRAIN
    f = T.repressilator_rhs(p)
    x0 = T.REPRESSILATOR_INIT
    horizon = 0.4
    ref = T.rk4_integrate(f, x0, horizon / 3200, 3200)[-1]
    errs = [np.abs(T.rk4_integrate(f, x0, horizon / s, s)[-1] - ref).max() for s in (80, 160, 320)]
    ratios = [errs[0] / errs[1], errs[1] / errs[2]]
    assert all(12 < r < 20 for r in ratios), ratios


def test_rk4_blow_up_reports_step():
    with pytest.raises(T.BlowUpError) as info, np.errstate(over="ignore", invalid="ignore"):
        T.rk4_integrate(lambda x: x**2, [1.0], 0.5, 20)
    assert info.value.step > 0


# ---------------------------------------------------------------- chaotic motif

def test_motif_rates_at_origin():
    r = T.motif_rhs(T.MOTIF_TRAIN)(np.zeros(4))
    assert r[0] == 0 and r[2] == 0 and r[3] == 0
    assert r[1] == pytest.approx(1.0)


@settings(max_examples=5)
@given(st.lists(st.floats(0.01, 0.99), min_size=4, max_size=4))
def test_motif_stays_bounded(init):
    traj = T.motif_trajectory(T.MOTIF_TRAIN, init)
    assert traj.min() >= 0.0 and traj.max() <= 1.05


def test_motif_transient_converges_in_dt():
    p = T.MOTIF_TRAIN
    f = T.motif_rhs(p)
    coarse = T.rk4_integrate(f, T.MOTIF_INIT, p.dt, 100)[-1]
    fine = T.rk4_integrate(f, T.MOTIF_INIT, p.dt / 2, 200)[-1]
    assert np.abs(coarse - fine).max() < 1e-5


def test_motif_rejects_out_of_range_init():
    with pytest.raises(ValueError):
        T.motif_trajectory(T.MOTIF_TRAIN, [0.1, 0.2, 1.5, 0.0])


# ---------------------------------------------------------------- fractional Chua

@pytest.mark.parametrize("q", [0.5, 0.9, 0.97, 1.0])
def test_gl_weights_match_binomials(q):
    c = T.gl_weights(q, 51)
    j = np.arange(51)
    direct = (-1.0) ** j * binom(q, j)
    assert np.abs(c - direct).max() < 1e-12
    assert np.abs(np.cumsum(c) - np.cumsum(direct)).max() < 1e-12


def test_chua_zero_is_fixed_point():
    traj = T.fractional_chua_trajectory(T.ChuaParams(steps=300), init=(0, 0, 0, 0))
    assert np.all(traj == 0)


def test_chua_bounded_at_defaults():
    traj = T.fractional_chua_trajectory(T.CHUA_TRAIN)
    first = np.ptp(traj[:1000], axis=0)
    assert np.all(np.abs(traj - traj[:1000].mean(axis=0)).max(axis=0) <= 10 * first)
    # still moving at the end: not collapsed onto an equilibrium
    assert np.all(np.ptp(traj[-1000:, :3], axis=0) > 0.05)


def test_chua_rejects_bad_order():
    with pytest.raises(ValueError):
        T.ChuaParams(q2=1.2)
    with pytest.raises(ValueError):
        T.ChuaParams(q1=0.0)


def test_memristor_boundary_is_outer():
    p = T.CHUA_TRAIN
    assert p.memductance(1.0) == p.f_outer
    assert p.memductance(-1.0) == p.f_outer
    assert p.memductance(0.999) == p.f_inner


def test_chua_unit_order_reduces_to_euler():
    # with q = 1 the memory sum is -x_{k-1}, leaving a forward step in
    # which later components see the already-updated ones
    p = T.ChuaParams(q1=1, q2=1, q3=1, q4=1, steps=50)
    traj = T.fractional_chua_trajectory(p)
    x, y, z, w = T.CHUA_INIT
    h = p.dt
    for k in range(1, 51):
        x_new = x + h * p.alpha * (y - x + p.zeta * x - p.memductance(w) * x)
        y_new = y + h * (x_new - y + z)
        z_new = z + h * (-p.beta * y_new - p.gamma * z)
        w_new = w + h * x_new
        x, y, z, w = x_new, y_new, z_new, w_new
        assert np.allclose(traj[k], [x, y, z, w], rtol=0, atol=1e-12)


def test_chua_components_reading():
    p = T.ChuaParams.from_components()
    assert p.alpha == pytest.approx(0.1)
    assert p.beta == pytest.approx(0.1)
    assert p.gamma == pytest.approx(1 / 13)
    assert p.zeta == pytest.approx(-0.015)


def test_generators_are_deterministic():
    a = T.gen_chaotic_motif(T.MOTIF_TRAIN)
    b = T.gen_chaotic_motif(T.MOTIF_TRAIN)
    assert a.inputs.tobytes() == b.inputs.tobytes()
    assert P.nmse(a.targets, b.targets) == 0
    assert a.inputs.shape == (6100, 4) and a.split == T.DEFAULT_SPLIT


# ---------------------------------------------------------------- binary tasks

def test_binary_delay_zero():
    s = T.binary_inputs(50, 3)
    for kind in ("STM", "PC"):
        y, valid = T.binary_targets(s, kind, 0)
        assert np.array_equal(y, s) and valid.all()


def test_parity_hand_example():
    y, valid = T.binary_targets(np.array([1, 0, 1, 1, 0]), "PC", 2)
    assert y[2:].tolist() == [0, 0, 0]
    assert valid.tolist() == [False, False, True, True, True]


@given(st.integers(0, 2**31), st.integers(0, 6))
def test_binary_targets_oracle(seed, tau):
    s = T.binary_inputs(40, seed)
    stm, _ = T.binary_targets(s, "STM", tau)
    pc, _ = T.binary_targets(s, "PC", tau)
    for k in range(tau, 40):
        assert stm[k] == s[k - tau]
        assert pc[k] == sum(s[k - q] for q in range(tau + 1)) % 2


def test_binary_dataset_masks_early_rows():
    ds = T.gen_binary_task(T.BinaryTaskSpec("PC", 3, 5000, 1))
    assert ds.split == T.BINARY_SPLIT
    assert ds.mask[:3].sum() == 0 and ds.mask[3:].all()
    assert set(np.unique(ds.inputs)) <= {0.0, 1.0}


# ---------------------------------------------------------------- FX

def _write(tmp_path, text, name="pair.csv"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


def test_fx_loader_valid_and_sorted(tmp_path):
    s = T.load_fx_csv(_write(tmp_path, "date,rate\n2020-01-02,1.5\n2020-01-01,1.4\n"))
    assert len(s) == 2
    assert s.dates == [dt.date(2020, 1, 1), dt.date(2020, 1, 2)]
    assert s.rates.tolist() == [1.4, 1.5]
    assert s.pair_name == "pair"


@pytest.mark.parametrize("text,match", [
    ("date,rate\n2020-01-01,1.4\n2020-01-01,1.5\n", "duplicate date 2020-01-01"),
    ("date,rate\n2020-01-01,1.4\n2020-01-02,-1\n", ":3: rate must be positive"),
    ("date,rate\n2020-01-01,1.4\nnot-a-date,1.1\n", ":3:"),
    ("date,rate\n2020-01-01,1.4,7\n", ":2: expected 2 fields"),
    ("when,price\n2020-01-01,1.4\n", "header"),
])
def test_fx_loader_errors(tmp_path, text, match):
    with pytest.raises(T.FxFormatError, match=match):
        T.load_fx_csv(_write(tmp_path, text))


def test_fx_csv_round_trip(tmp_path):
    s = T.synthetic_fx_series(30, seed=4)
    T.write_fx_csv(s, tmp_path / "syn.csv")
    back = T.load_fx_csv(tmp_path / "syn.csv")
    assert back.dates == s.dates and np.array_equal(back.rates, s.rates)


def test_wavelet_constant_series():
    x = np.full(300, 1.37)
    assert np.abs(T.wavelet_denoise(x, 3) - x).max() < 1e-10


def test_wavelet_keeps_slow_sine():
    t = np.arange(1024)
    x = np.sin(2 * np.pi * t / 256)
    out = T.wavelet_denoise(x, 2)
    assert out.shape == x.shape
    assert np.linalg.norm(out - x) / np.linalg.norm(x) < 0.01


def test_wavelet_reduces_noise():
    t = np.arange(1024)
    clean = np.sin(2 * np.pi * t / 128)
    sd = np.sqrt(0.5 / 10)  # SNR 10 in power
    for seed in range(10):
        noisy = clean + np.random.default_rng(seed).normal(0, sd, t.size)
        assert np.linalg.norm(T.wavelet_denoise(noisy, 2) - clean) < np.linalg.norm(noisy - clean)


def test_wavelet_too_short():
    with pytest.raises(ValueError):
        T.wavelet_denoise(np.ones(3), 2)


def test_sliding_window_counts():
    rates = 1 + 0.01 * np.arange(7.0)
    assert T.sliding_window(rates, 6).dataset.K == 1
    long = T.synthetic_fx_series(1300, seed=1)
    task = T.sliding_window(long, 6, denoise_levels=None)
    assert task.dataset.split == T.FX_SPLIT
    assert T.sliding_window(long.rates[:500], 6, denoise_levels=None).dataset.K == 500 - 6
    with pytest.raises(ValueError):
        T.sliding_window(rates[:6], 6)


def test_sliding_window_index_by_index():
    x = np.array([10.0, 11.0, 13.0, 12.0, 15.0, 14.0, 16.0, 20.0])
    task = T.sliding_window(x, 3, split=P.EpisodeSplit(0, 4, 5), denoise_levels=None)
    ds = task.dataset
    # normalization fitted on the first G1 + w = 7 prices: min 10, max 16
    z = (x - 10.0) / 6.0
    expected_inputs = [[z[0], z[1], z[2]], [z[1], z[2], z[3]], [z[2], z[3], z[4]],
                       [z[3], z[4], z[5]], [z[4], z[5], z[6]]]
    assert np.allclose(ds.inputs, expected_inputs, atol=1e-15)
    assert np.allclose(ds.targets[:, 0], [z[3], z[4], z[5], z[6], z[7]], atol=1e-15)
    assert task.raw_targets.tolist() == [12.0, 15.0, 14.0, 16.0, 20.0]
    assert task.raw_previous.tolist() == [13.0, 12.0, 15.0, 14.0, 16.0]


def test_causal_denoise_ignores_future():
    s = T.synthetic_fx_series(400, seed=2)
    split = P.EpisodeSplit(50, 300, 380)
    a = T.sliding_window(s, 6, split=split).dataset
    bumped = s.rates.copy()
    bumped[200:] *= 1.01
    b = T.sliding_window(bumped, 6, split=split).dataset
    # normalization is fitted on rows that include the bump, so compare in raw price units
    early_a = a.norm.invert(a.inputs[:150])
    early_b = b.norm.invert(b.inputs[:150])
    assert np.allclose(early_a, early_b, atol=1e-12)


def test_dataset_round_trip(tmp_path):
    ds = T.gen_binary_task(T.BinaryTaskSpec("STM", 2, 300, 5))
    T.save_dataset(ds, tmp_path / "d.csv", {"seed": 5})
    back = T.load_dataset(tmp_path / "d.csv")
    assert np.array_equal(back.inputs, ds.inputs) and np.array_equal(back.targets, ds.targets)
    assert back.split == ds.split and back.mode == ds.mode and np.array_equal(back.mask, ds.mask)
    ode = T.gen_repressilator(T.RepressilatorParams(steps=300), split=P.EpisodeSplit(50, 250, 300))
    T.save_dataset(ode, tmp_path / "r.csv")
    back = T.load_dataset(tmp_path / "r.csv")
    assert np.array_equal(back.targets, ode.targets)
    assert np.allclose(back.norm.lo, ode.norm.lo)
