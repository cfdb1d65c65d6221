import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from outage_cbf import BeamformerSet, ChannelSet, generate_channel_set, instantaneous_rate, sample_channels
from outage_cbf.model import (
    ChannelDraws,
    complex_to_pairs,
    covariance_factor,
    generate_scalar_channel_set,
    link_gains,
    pairs_to_complex,
)


def test_generate_normalization_and_rank():
    cs = generate_channel_set(4, 8, eta=0.4, rank=2, seed=7)
    lam = np.linalg.eigvalsh(cs.Q)
    for k in range(4):
        for i in range(4):
            target = 1.0 if k == i else 0.4
            assert abs(lam[k, i, -1] - target) <= 1e-9
            assert np.sum(lam[k, i] > 1e-10 * lam[k, i, -1]) == 2


def test_generate_single_user():
    cs = generate_channel_set(1, 2, eta=1.0, rank=2, seed=0)
    assert cs.Q.shape == (1, 1, 2, 2)
    assert abs(np.linalg.eigvalsh(cs.Q[0, 0])[-1] - 1) <= 1e-9


def test_generate_deterministic():
    a = generate_channel_set(3, 4, seed=11)
    b = generate_channel_set(3, 4, seed=11)
    assert a.Q.tobytes() == b.Q.tobytes()
    assert not np.array_equal(a.Q, generate_channel_set(3, 4, seed=12).Q)


def test_generate_link_streams_independent_of_K():
    # Q_ki depends only on (seed, k, i)
    a = generate_channel_set(2, 3, seed=5)
    b = generate_channel_set(3, 3, seed=5)
    assert np.array_equal(a.Q[1, 0], b.Q[1, 0])


def test_generate_bad_rank():
    with pytest.raises(ValueError):
        generate_channel_set(2, 2, rank=3)
    with pytest.raises(ValueError):
        generate_channel_set(2, 2, eta=0.0)


def test_hermitian_psd_invariants(cs34):
    Q = cs34.Q
    assert np.max(np.abs(Q - np.conj(np.swapaxes(Q, -1, -2)))) <= 1e-12
    assert np.min(np.linalg.eigvalsh(Q)) >= -1e-10
    assert np.all((cs34.rho > 0) & (cs34.rho < 1))


def test_channel_set_json_roundtrip(tmp_path, cs34):
    path = tmp_path / "cs.json"
    cs34.save(path)
    d = json.loads(path.read_text())
    assert set(d) >= {"K", "Nt", "eta", "delta", "sigma2", "P", "eps", "Q"}
    assert np.array(d["Q"]).shape == (3, 3, 4, 4, 2)
    back = ChannelSet.load(path)
    assert np.array_equal(back.Q, cs34.Q)
    assert np.array_equal(back.sigma2, cs34.sigma2)
    assert back.delta == cs34.delta


def test_pairs_roundtrip():
    A = np.array([[1 + 2j, -3j], [0.5, 4 - 1j]])
    assert np.array_equal(pairs_to_complex(complex_to_pairs(A)), A)


def test_beamformer_set_forms():
    w = np.array([[1.0, 1j], [0.5, 0.0]])
    bf = BeamformerSet(vectors=w)
    assert bf.is_vector and bf.K == 2
    np.testing.assert_allclose(bf.power(), [2.0, 0.25])
    M = BeamformerSet(matrices=bf.as_matrices())
    np.testing.assert_allclose(M.power(), bf.power())
    assert np.array_equal(BeamformerSet.from_dict(bf.to_dict()).vectors, bf.vectors)
    with pytest.raises(ValueError):
        BeamformerSet()


def test_sample_zero_covariance():
    cs = ChannelSet(Q=np.zeros((1, 1, 2, 2)), sigma2=1.0, P=1.0, eps=0.1)
    d = sample_channels(cs, 10, seed=0)
    assert isinstance(d, ChannelDraws) and len(d) == 10
    assert np.all(d.h == 0)


def test_sample_covariance_and_mean():
    cs = generate_channel_set(1, 2, seed=4)
    h = sample_channels(cs, 200_000, seed=1).h[:, 0, 0]
    S = h.T @ h.conj() / len(h)
    assert np.linalg.norm(S - cs.Q[0, 0]) <= 0.02
    assert np.linalg.norm(h.mean(axis=0)) <= 0.02


def test_sample_covariance_error_shrinks():
    cs = generate_channel_set(1, 2, seed=4)
    Q = cs.Q[0, 0]
    errs = []
    for n in (5_000, 20_000, 80_000):
        e = []
        for s in range(8):
            h = sample_channels(cs, n, seed=s).h[:, 0, 0]
            e.append(np.linalg.norm(h.T @ h.conj() / n - Q))
        errs.append(np.mean(e))
    # O(n^-1/2): quadrupling n roughly halves the error
    assert 0.3 < errs[1] / errs[0] < 0.75
    assert 0.3 < errs[2] / errs[1] < 0.75


def test_sample_deterministic(cs22):
    a = sample_channels(cs22, 50, seed=9).h
    b = sample_channels(cs22, 50, seed=9).h
    assert np.array_equal(a, b)


def test_covariance_factor_rejects_non_psd():
    with pytest.raises(ValueError):
        covariance_factor(np.diag([1.0, -0.1]))
    L = covariance_factor(np.diag([1.0, -1e-13]))
    np.testing.assert_allclose(L @ L.conj().T, np.diag([1.0, 0.0]), atol=1e-12)


def test_instantaneous_rate_examples():
    cs = ChannelSet(Q=np.ones((1, 1, 1, 1)), sigma2=1.0, P=1.0, eps=0.1)
    bf = BeamformerSet(vectors=[[1.0]])
    draw = np.ones((1, 1, 1), complex)
    assert instantaneous_rate(draw, bf, cs)[0] == pytest.approx(1.0)
    cs2 = ChannelSet(Q=np.ones((2, 2, 1, 1)), sigma2=1.0, P=3.0, eps=0.1)
    bf2 = BeamformerSet(vectors=[[np.sqrt(3.0)], [1.0]])
    draw2 = np.ones((2, 2, 1), complex)
    assert instantaneous_rate(draw2, bf2, cs2)[0] == pytest.approx(np.log2(2.5), abs=1e-12)
    zero = BeamformerSet(vectors=np.zeros((2, 1)))
    assert np.all(instantaneous_rate(draw2, zero, cs2) == 0)


@given(st.floats(0.0, 10.0), st.floats(0.0, 10.0))
def test_rate_monotone_in_interference(i1, i2):
    cs = ChannelSet(Q=np.ones((2, 2, 1, 1)), sigma2=0.5, P=100.0, eps=0.1)
    lo, hi = sorted((i1, i2))
    draw = np.ones((2, 2, 1), complex)
    r_lo = instantaneous_rate(draw, BeamformerSet(vectors=[[1.0], [np.sqrt(lo)]]), cs)[0]
    r_hi = instantaneous_rate(draw, BeamformerSet(vectors=[[1.0], [np.sqrt(hi)]]), cs)[0]
    assert r_hi <= r_lo + 1e-12
    assert r_hi >= 0


def test_link_gains_shape(cs34):
    from outage_cbf import mrt_init
    g = link_gains(cs34, mrt_init(cs34), 100, seed=0)
    assert g.shape == (100, 3, 3) and np.all(g >= 0)


def test_scalar_generator():
    a = generate_scalar_channel_set(2, seed=0)
    b = generate_scalar_channel_set(2, seed=1)
    assert a.Nt == 1 and np.all(np.diag(a.Q[:, :, 0, 0].real) == 1)
    assert not np.array_equal(a.Q, b.Q)
    off = a.Q[:, :, 0, 0].real[~np.eye(2, dtype=bool)]
    assert np.all((off >= 0.1) & (off <= 1.0))


def test_masks():
    g = np.array([[1.0, 0.0], [1e-6, 1.0]])
    cs = ChannelSet(Q=g[:, :, None, None], sigma2=1.0, P=1.0, eps=0.1, delta=1e-5)
    assert cs.link_active().tolist() == [[True, False], [True, True]]
    # 1e-6 * P < 2 delta, so that link carries no floor
    assert cs.floor_active().tolist() == [[True, False], [False, True]]
