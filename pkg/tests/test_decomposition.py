import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from conftest import random_scenario
from nlosfim.channel_fim import PathInfo
from nlosfim.decomposition import (
    LAMBDA_MAX,
    RankOneTerm,
    TermSource,
    decompose,
    efim_brute_force,
    fim_position_domain,
    fim_position_domain_dense,
    los_gain_terms,
    net_nlos_matrix,
    net_nlos_term,
    nlos_gain_matrix,
    nlos_loss_matrix,
    nlos_loss_weights,
    projected_gains,
    projected_gains_closed_form,
    upsilon,
)
from nlosfim.errors import DegenerateError
from nlosfim.geometry import SPEED_OF_LIGHT as C
from nlosfim.geometry import Anchor, Mobile, Scenario, all_path_params, global_angles, transformation_matrix

BASE = PathInfo(sigma2_tau=9e-21, sigma2_aod=1.3e-4, sigma2_aoa=2.5e-6)


def random_info(rng):
    return PathInfo(*(rng.uniform(0.2, 5.0, 3) * [1e-20, 1e-4, 1e-5]))


def nlos_case(rng):
    """Random single-NLOS geometry: returns (info, g_tx, g_rx, d_qs, d_ps, tp, ts)."""
    sc = random_scenario(rng, n_nlos=1, has_los=False)
    prm = all_path_params(sc)[0]
    t = transformation_matrix(sc, [prm])
    g_tx, g_rx = global_angles(sc, prm)
    s = sc.incidence_points[0]
    d_qs, d_ps = np.linalg.norm(sc.anchor.q - s), np.linalg.norm(sc.mobile.p - s)
    return random_info(rng), g_tx, g_rx, d_qs, d_ps, t.b_blocks[0], t.d_blocks[0]


def rel(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


def test_upsilon_examples():
    np.testing.assert_allclose(upsilon(0, 0, 0.0, 0.0, 0.0), np.diag([1.0, 0.0, 0.0]), atol=1e-16)
    th = 0.7
    assert upsilon(1, 0, th, np.pi / 2, 0.0)[1, 1] == pytest.approx(np.cos(th) ** 2)
    assert upsilon(1, 1, np.pi / 4, np.pi / 2, 2.0)[0, 2] == pytest.approx(-np.sqrt(2))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 1), st.integers(0, 1), st.floats(-4, 4), st.sampled_from([0.0, np.pi / 2]), st.floats(0, 50))
def test_upsilon_symmetric_rank_one(n, m, theta, phi, rho):
    U = upsilon(n, m, theta, phi, rho)
    np.testing.assert_array_equal(U, U.T)
    # instances used by the decomposition: Y_{0,m}(theta, 0, 0) and Y_{1,m}(theta, pi/2, rho)
    if (n, phi, rho) == (0, 0.0, 0.0) or (n, phi) == (1, np.pi / 2):
        ev = np.linalg.eigvalsh(U)
        assert abs(ev[1]) <= 1e-12 * max(1.0, ev[2])


def test_position_domain_single_path():
    sc = Scenario(Anchor([0, 0]), Mobile([3, 4], 0.4))
    t = transformation_matrix(sc)
    J = np.diag([1e18, 2e3, 3e4])
    np.testing.assert_allclose(fim_position_domain([J], t), t.a_block @ J @ t.a_block.T, rtol=1e-15)


def test_position_domain_matches_dense(rng):
    for _ in range(20):
        sc = random_scenario(rng, n_nlos=3)
        t = transformation_matrix(sc)
        Js = [random_info(rng).efim for _ in range(sc.n_paths)]
        blk = fim_position_domain(Js, t)
        dense = fim_position_domain_dense(Js, t)
        assert rel(blk, dense) < 1e-12
        np.testing.assert_array_equal(blk[3:5, 5:], 0.0)
        np.testing.assert_array_equal(blk[5:7, 7:], 0.0)


def test_los_terms_reconstruct_and_are_eigenpairs():
    th, d = 0.9, 7.0
    terms, M = los_gain_terms(BASE, th, d)
    assert rel(sum(t.matrix for t in terms), M) < 1e-12
    pieces = [
        upsilon(0, 0, th, 0.0, 0.0) / (BASE.sigma2_tau * C**2),
        upsilon(1, 0, th, np.pi / 2, 0.0) / (BASE.sigma2_aod * d**2),
        upsilon(1, 0, th, np.pi / 2, d) / (BASE.sigma2_aoa * d**2),
    ]
    for t, piece in zip(terms, pieces):
        assert np.linalg.norm(t.lam * t.v - piece @ t.v) < 1e-10 * t.lam
        assert np.linalg.norm(t.v) == pytest.approx(1.0, abs=1e-12)
    # TOA and AOD directions are orthogonal in the position plane
    assert abs(terms[0].v @ terms[1].v) < 1e-15
    w, V = np.linalg.eigh(pieces[1])
    assert abs(V[:, -1] @ terms[1].v) == pytest.approx(1.0, abs=1e-12)


def test_los_sign_convention():
    for th in np.linspace(-3, 3, 13):
        for t in los_gain_terms(BASE, th, 4.0)[0]:
            first = t.v[np.flatnonzero(np.abs(t.v) > 1e-12)[0]]
            assert first > 0


def test_los_without_aoa_information():
    info = PathInfo(BASE.sigma2_tau, BASE.sigma2_aod, np.inf)
    terms, M = los_gain_terms(info, 0.3, 5.0)
    assert terms[2].lam == 0.0
    np.testing.assert_array_equal(M[2], 0.0)


def test_los_aoa_far_field():
    terms, _ = los_gain_terms(BASE, 0.3, 1e6)
    assert terms[2].lam == pytest.approx(1 / BASE.sigma2_aoa, rel=1e-9)
    np.testing.assert_allclose(np.abs(terms[2].v), [0, 0, 1], atol=1e-6)


def test_nlos_gain_matches_dense(rng):
    for _ in range(50):
        info, g_tx, g_rx, d_qs, d_ps, tp, ts = nlos_case(rng)
        M, terms = nlos_gain_matrix(info, g_rx, d_ps)
        assert rel(M, tp @ info.efim @ tp.T) < 1e-12
        assert rel(sum(t.matrix for t in terms), M) < 1e-12
        assert abs(terms[0].v @ np.array([-np.sin(g_rx), np.cos(g_rx), 0.0])) < 1e-15


def test_nlos_gain_limits():
    M, _ = nlos_gain_matrix(PathInfo(np.inf, 1e-4, 1e-5), 0.4, 3.0)
    assert rel(M, upsilon(1, 1, 0.4, np.pi / 2, 3.0) / (1e-5 * 9.0)) < 1e-15
    _, terms = nlos_gain_matrix(BASE, 0.4, 1e6)
    assert terms[1].lam == pytest.approx(1 / BASE.sigma2_aoa, rel=1e-9)
    np.testing.assert_allclose(terms[1].v, [0, 0, 1], atol=1e-6)


def test_loss_weights_match_dense(rng):
    for _ in range(100):
        info, g_tx, g_rx, d_qs, d_ps, tp, ts = nlos_case(rng)
        w = nlos_loss_weights(info, g_tx, g_rx, d_qs, d_ps)
        blk = ts @ info.efim @ ts.T
        assert w.det == pytest.approx(np.linalg.det(blk), rel=1e-9)
        np.testing.assert_allclose([[w.a, w.b], [w.b, w.d]], blk, rtol=1e-12, atol=1e-12 * np.abs(blk).max())
        dense_loss = tp @ info.efim @ ts.T @ np.linalg.solve(blk, ts @ info.efim @ tp.T)
        assert rel(nlos_loss_matrix(w, g_rx, d_ps), dense_loss) < 1e-10
        gain = tp @ info.efim @ tp.T
        assert np.linalg.eigvalsh(gain - dense_loss).min() >= -1e-9 * np.linalg.norm(gain)
        assert rel(net_nlos_matrix(w, g_rx, d_ps), gain - dense_loss) < 1e-9


def test_aligned_angles_give_zero_gamma():
    w = nlos_loss_weights(BASE, 0.5, 0.5, 3.0, 4.0)
    assert w.gamma == 0.0 and w.epsilon == 0.0
    M = nlos_loss_matrix(w, 0.5, 4.0)
    expect = w.w_r * upsilon(0, 0, 0.5, 0, 0) + w.w_a * upsilon(1, 1, 0.5, np.pi / 2, 4.0)
    np.testing.assert_array_equal(M, expect)


def test_degenerate_incidence_block():
    # point of incidence on the segment between anchor and mobile
    with pytest.raises(DegenerateError):
        nlos_loss_weights(BASE, 0.3, 0.3 + np.pi, 2.0, 3.0)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_weight_identity(seed):
    rng = np.random.default_rng(seed)
    info, g_tx, g_rx, d_qs, d_ps, _, _ = nlos_case(rng)
    try:
        w = nlos_loss_weights(info, g_tx, g_rx, d_qs, d_ps)
    except DegenerateError:
        assume(False)
    assert abs(w.epsilon * w.beta - w.gamma**2) <= 1e-12 * max(w.epsilon * w.beta, w.gamma**2, 1e-300)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_net_term_is_the_rank_one_part(seed):
    rng = np.random.default_rng(seed)
    info, g_tx, g_rx, d_qs, d_ps, _, _ = nlos_case(rng)
    term = net_nlos_term(info, g_tx, g_rx, d_qs, d_ps)
    assert term.lam > 0
    assert np.linalg.norm(term.v) == pytest.approx(1.0, abs=1e-12)
    try:
        psi = net_nlos_matrix(nlos_loss_weights(info, g_tx, g_rx, d_qs, d_ps), g_rx, d_ps)
    except DegenerateError:
        return
    ev, V = np.linalg.eigh(psi)
    assert abs(ev[1]) < 1e-10 * ev[2] and abs(ev[0]) < 1e-10 * ev[2]
    assert ev[2] == pytest.approx(term.lam, rel=1e-9)
    assert abs(V[:, 2] @ term.v) > 1 - 1e-10


def test_net_term_aligned_angles():
    info, d_qs, d_ps = BASE, 3.0, 4.0
    term = net_nlos_term(info, 0.2, 0.2, d_qs, d_ps)
    expect = (2 + 2 * d_ps**2) / (2 * (d_ps**2 * info.sigma2_aoa + d_qs**2 * info.sigma2_aod))
    assert term.lam == pytest.approx(expect, rel=1e-13)
    assert "aligned_angles" in term.flags
    psi = net_nlos_matrix(nlos_loss_weights(info, 0.2, 0.2, d_qs, d_ps), 0.2, d_ps)
    assert psi @ term.v == pytest.approx(term.lam * term.v, rel=1e-9, abs=1e-9 * term.lam)


def test_net_term_without_information():
    term = net_nlos_term(PathInfo(np.inf, np.inf, np.inf), 0.2, 1.0, 3.0, 4.0)
    assert term.lam == 0.0 and "no_information" in term.flags


def test_net_term_cap():
    term = net_nlos_term(PathInfo(0.0, 0.0, 0.0), 0.2, 1.0, 3.0, 4.0)
    assert term.lam == LAMBDA_MAX and "capped" in term.flags


def test_aod_uncertainty_kills_net_gain():
    base = net_nlos_term(BASE, 0.2, 1.4, 3.0, 4.0).lam
    worse = net_nlos_term(PathInfo(BASE.sigma2_tau, BASE.sigma2_aod * 1e12, BASE.sigma2_aoa), 0.2, 1.4, 3.0, 4.0).lam
    assert worse < 1e-10 * base


def test_direction_becomes_orientation_far_away():
    v = net_nlos_term(BASE, 0.2, 0.2 + 1e-3, 1000.0, 1000.0).v
    assert abs(v[0]) < 2e-3 and abs(v[1]) < 2e-3


def test_decompose_los_only():
    sc = Scenario(Anchor([0, 0]), Mobile([5, 5], np.pi / 2))
    dec = decompose(sc, [BASE], all_path_params(sc))
    assert dec.nlos_terms == [] and len(dec.los_terms) == 3
    np.testing.assert_allclose(dec.efim, dec.los_matrix, rtol=1e-15)


def test_decompose_three_reflectors_full_rank():
    sc = Scenario(Anchor([0, 0]), Mobile([5, 5], np.pi / 2), ([8, 1], [3, 4], [6, 8]), has_los=False)
    dec = decompose(sc, [BASE] * 3, all_path_params(sc))
    assert np.linalg.matrix_rank(dec.efim) == 3
    assert [t.source for t in dec.nlos_terms] == [TermSource.NLOS] * 3


def test_decompose_matches_schur_oracle(rng):
    for _ in range(100):
        sc = random_scenario(rng)
        infos = [random_info(rng) for _ in range(sc.n_paths)]
        params = all_path_params(sc)
        try:
            dec = decompose(sc, infos, params)
        except DegenerateError:
            continue
        assert rel(dec.efim, efim_brute_force(sc, infos, params)) < 1e-9
        assert rel(dec.reconstruct(), dec.efim) < 1e-9
        np.testing.assert_allclose(dec.gain_matrix - dec.loss_matrix, dec.net_matrix, atol=1e-9 * np.linalg.norm(dec.gain_matrix))
        assert np.linalg.eigvalsh(dec.efim).min() >= -1e-9 * np.linalg.norm(dec.efim)


def test_decompose_checks_lengths():
    sc = Scenario(Anchor([0, 0]), Mobile([5, 5]), ([1, 2],))
    with pytest.raises(ValueError):
        decompose(sc, [BASE], all_path_params(sc))


def test_projected_gains_pure_orientation():
    t = RankOneTerm(3.0, np.array([0.0, 0.0, 1.0]), TermSource.NLOS, 1)
    assert projected_gains(t) == (0.0, 3.0)
    assert projected_gains(t, squared=False) == (0.0, 3.0)


def test_projected_gains_closed_form(rng):
    for _ in range(100):
        info, g_tx, g_rx, d_qs, d_ps, _, _ = nlos_case(rng)
        term = net_nlos_term(info, g_tx, g_rx, d_qs, d_ps)
        xy, a = projected_gains(term)
        cxy, ca = projected_gains_closed_form(info, g_tx, g_rx, d_qs, d_ps)
        assert xy == pytest.approx(cxy, rel=1e-10)
        assert a == pytest.approx(ca, rel=1e-10, abs=1e-10 * term.lam)
        assert xy + a == pytest.approx(term.lam, rel=1e-12)
        lxy, la = projected_gains(term, squared=False)
        assert lxy + abs(la) >= term.lam * np.abs(term.v).max() * (1 - 1e-12)
