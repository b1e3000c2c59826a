import numpy as np
import pytest
from hypothesis import given, strategies as st

from qrcforge import esn as E
from qrcforge import pipeline as P
from qrcforge.qcore import DimensionError


def params(N=5, d_in=2, seed=0, radius=None):
    r = np.random.default_rng(seed)
    M = r.uniform(-1, 1, (N, N))
    if radius is not None:
        M = E.rescale_to_radius(M, radius)
    return E.EsnParams(M, E.random_encoding(N, d_in, seed + 1))


def test_step_zero():
    p = params()
    assert np.array_equal(E.esn_step(np.zeros(5), np.zeros(2), p), np.zeros(5))


@given(st.integers(0, 2**31), st.floats(-1e3, 1e3))
def test_step_inside_open_interval(seed, scale):
    p = params(seed=seed % 1000)
    x = np.random.default_rng(seed).uniform(-0.999, 0.999, 5)
    out = E.esn_step(x, np.array([scale, -scale]), p)
    # tanh saturates to exactly +-1 in floating point only beyond |a| ~ 19
    assert np.all(np.abs(out) <= 1)
    assert np.all(np.abs(E.esn_step(x * 1e-3, np.array([0.5, 0.2]), p)) < 1)


def test_step_small_signal_is_linear():
    p = params()
    r = np.random.default_rng(3)
    x = r.uniform(-1, 1, 5) * 1e-7
    s = r.uniform(-1, 1, 2) * 1e-7
    lin = p.M @ x + p.D @ s
    assert np.allclose(E.esn_step(x, s, p), lin, rtol=1e-12, atol=0)


def test_step_dimension_mismatch():
    with pytest.raises(DimensionError):
        E.esn_step(np.zeros(4), np.zeros(2), params())


def test_spectral_radius_examples():
    assert E.spectral_radius(np.eye(3)) == pytest.approx(1.0, abs=1e-15)
    assert E.spectral_radius(np.diag([0.3, -0.9])) == pytest.approx(0.9, abs=1e-15)
    # rotation: complex pair of modulus 1, real parts 0
    assert E.spectral_radius(np.array([[0.0, -1.0], [1.0, 0.0]])) == pytest.approx(1.0)


@given(st.integers(0, 2**31), st.floats(0.05, 3.0))
def test_rescale_hits_radius(seed, r):
    M = np.random.default_rng(seed).normal(size=(6, 6))
    assert E.spectral_radius(E.rescale_to_radius(M, r)) == pytest.approx(r, abs=1e-10)


def test_rescale_edge_cases():
    M = np.random.default_rng(0).normal(size=(4, 4))
    assert np.allclose(E.rescale_to_radius(M, E.spectral_radius(M)), M, atol=1e-12)
    assert np.array_equal(E.rescale_to_radius(M, 0.0), np.zeros((4, 4)))
    with pytest.raises(ValueError):
        E.rescale_to_radius(np.zeros((3, 3)), 0.8)


def test_params_validation(tmp_path):
    with pytest.raises(ValueError):
        E.EsnParams(np.eye(2), np.full((2, 1), 1.5))
    with pytest.raises(DimensionError):
        E.EsnParams(np.ones((2, 3)), np.zeros((2, 1)))
    with pytest.raises(DimensionError):
        E.EsnParams.from_genome(np.zeros(5), np.zeros((2, 1)))
    p = params(seed=4)
    p.save(tmp_path / "esn.json")
    q = E.EsnParams.load(tmp_path / "esn.json")
    assert np.array_equal(q.M, p.M) and np.array_equal(q.D, p.D)


def _ds(inputs, targets):
    K = inputs.shape[0]
    return P.TaskDataset(inputs, targets, P.EpisodeSplit(K // 5, 4 * K // 5, K), mode=P.OPEN_LOOP)


def test_zero_network_gives_mean_readout():
    r = np.random.default_rng(1)
    y = r.normal(size=(50, 1))
    p = E.EsnParams(np.zeros((4, 4)), np.zeros((4, 2)))
    feats = E.run_esn(p, _ds(r.uniform(size=(50, 2)), y))
    assert feats.shape == (50, 4) and not feats.any()
    ro = P.fit_readout(feats, y, 1e-8)
    assert np.allclose(ro.B, y.mean(), atol=1e-14)


def test_toy_run_matches_hand_composition():
    p = params(N=3, d_in=1, seed=6)
    s = np.array([[0.2], [0.9], [0.4]])
    x = np.zeros(3)
    rows = []
    for k in range(3):
        x = E.esn_step(x, s[k], p)
        rows.append(x)
    assert np.allclose(E.run_esn(p, _ds(s, s)), rows, atol=1e-15)


def test_contraction_for_symmetric_subcritical():
    r = np.random.default_rng(2)
    A = r.normal(size=(6, 6))
    M = E.rescale_to_radius(A + A.T, 0.9)
    p = E.EsnParams(M, np.zeros((6, 1)))
    res = E.EsnReservoir(p)
    _, x = res.collect(np.zeros((300, 1)), state=r.uniform(-1, 1, 6))
    assert np.linalg.norm(x) < 1e-10


def test_collect_step_agree():
    p = params(seed=8)
    s = np.random.default_rng(0).uniform(size=(20, 2))
    res = E.EsnReservoir(p)
    full, _ = res.collect(s)
    _, state = res.collect(s[:10])
    feat, _ = res.step(state, s[10])
    assert np.allclose(feat, full[10], rtol=0, atol=1e-15)


def test_task_encodings_fixed_per_task():
    ds = [_ds(np.zeros((10, 2)), np.zeros((10, 2))), _ds(np.zeros((10, 3)), np.zeros((10, 3)))]
    a = E.task_encodings(6, ds, 7)
    b = E.task_encodings(6, ds, 7)
    assert [x.shape for x in a] == [(6, 2), (6, 3)]
    assert all(np.array_equal(x, y) for x, y in zip(a, b))
    assert not np.array_equal(a[0], a[1][:, :2])
    assert max(np.abs(x).max() for x in a) <= 1


def test_esn_loss_additivity_and_determinism():
    r = np.random.default_rng(5)
    t = np.sin(np.arange(200) * 0.3)[:, None] * 0.4 + 0.5
    ds = _ds(np.roll(t, 1, axis=0), t)
    M = E.rescale_to_radius(r.normal(size=(6, 6)), 0.8)
    enc = E.task_encodings(6, [ds], 0)
    one = E.esn_multi_task_loss(M, enc, [ds], 1e-8)
    assert one == E.esn_multi_task_loss(M, enc, [ds], 1e-8)
    assert E.esn_multi_task_loss(M, enc * 2, [ds, ds], 1e-8) == 2 * one


def test_initial_population_radius():
    pop = np.random.default_rng(0).uniform(-1, 1, (6, 16))
    out = E.init_esn_population(pop, 0.8)
    for g in out:
        assert E.spectral_radius(g.reshape(4, 4)) == pytest.approx(0.8, abs=1e-10)
