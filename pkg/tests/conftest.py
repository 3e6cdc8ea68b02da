import numpy as np
import pytest

from nlosfim.bounds import bounds, reference_setup
from nlosfim.channel_fim import TAU, THETA_RX, THETA_TX, fim_channel_exact, schur_efim
from nlosfim.errors import GeometryError
from nlosfim.geometry import SPEED_OF_LIGHT, Anchor, Mobile, Scenario, all_path_params, assemble_T, transformation_matrix, ula_offsets
from nlosfim.signal import SignalConfig, dft_beamformer, path_gain


def random_scenario(rng, n_nlos=None, has_los=None, n_tx=1, n_rx=1, extent=10.0, min_sep=0.5):
    """Random non-degenerate scenario; nodes at least ``min_sep`` apart."""
    n_nlos = int(rng.integers(1, 4)) if n_nlos is None else n_nlos
    has_los = bool(rng.integers(0, 2)) if has_los is None else has_los
    while True:
        pts = rng.uniform(-extent, extent, (2 + n_nlos, 2))
        d = np.linalg.norm(pts[:, None] - pts[None], axis=-1) + np.eye(len(pts)) * 1e9
        if d.min() < min_sep:
            continue
        try:
            return Scenario(
                Anchor(pts[0], rng.uniform(-np.pi, np.pi), ula_offsets(n_tx, 0.004)),
                Mobile(pts[1], rng.uniform(-np.pi, np.pi), ula_offsets(n_rx, 0.004)),
                tuple(pts[2:]),
                has_los,
            )
        except GeometryError:
            continue


def geometric_map(p, alpha, points, has_los, q, phi):
    sc = Scenario(Anchor(q, phi), Mobile(p, alpha), tuple(points), has_los)
    return np.array([[SPEED_OF_LIGHT * x.tau, x.theta_tx, x.theta_rx] for x in all_path_params(sc)]).ravel()


def finite_difference_T(sc, h=1e-6):
    """Central differences of (c*tau, theta_tx, theta_rx) w.r.t. (p, alpha, s_1, ...)."""
    x0 = np.concatenate([sc.mobile.p, [sc.mobile.alpha], np.ravel(sc.incidence_points)])

    def f(x):
        pts = x[3:].reshape(-1, 2)
        return geometric_map(x[:2], x[2], pts, sc.has_los, sc.anchor.q, sc.anchor.phi)

    rows = []
    for i in range(x0.size):
        e = np.zeros_like(x0)
        e[i] = h
        d = f(x0 + e) - f(x0 - e)
        d[1::3] = np.angle(np.exp(1j * d[1::3]))
        d[2::3] = np.angle(np.exp(1j * d[2::3]))
        rows.append(d / (2 * h))
    return np.array(rows)


def random_setup(rng, n_nlos=None, has_los=None):
    """Random scenario with realistic arrays, evaluated with the default link budget."""
    n_nlos = int(rng.integers(1, 4)) if n_nlos is None else n_nlos
    has_los = bool(rng.integers(0, 2)) if has_los is None else has_los
    sc = random_scenario(rng, n_nlos, has_los)
    return reference_setup(
        int(rng.choice([8, 16, 25])),
        int(rng.choice([8, 16, 25])),
        list(sc.incidence_points),
        has_los,
        p=sc.mobile.p,
        alpha=sc.mobile.alpha,
        q=sc.anchor.q,
        phi=sc.anchor.phi,
        seed=int(rng.integers(1 << 30)),
    )


def small_instance():
    """N_TX = N_RX = 4, N_B = 2, N_s = 4, LOS plus one overlapping NLOS path."""
    cfg = SignalConfig(
        fc=38e9, bandwidth=20e6, n_symbols=4, symbol_time=1 / 20e6,
        symbol_energy=1e-3 / 20e6, noise_psd=1e-20, n_beams=2,
    )
    lam = cfg.wavelength
    sc = Scenario(
        Anchor([0, 0], 0.0, ula_offsets(4, lam / 2)),
        Mobile([5, 5], np.pi / 2, ula_offsets(4, lam / 2)),
        ([4, 2],),
        True,
    )
    params = [
        prm.with_gain(path_gain(sc, k, lam, 0.7, ph))
        for prm, k, ph in zip(all_path_params(sc), sc.path_indices, (0.3, 1.9))
    ]
    beams = dft_beamformer(4, 2, lam, sc.anchor.tx_offsets)
    return sc, cfg, beams, params


def unsimplified_efim(setup, phases=None):
    """Oracle: EFIM of (p, alpha) from the complete channel FIM, gains and incidence points as nuisance."""
    sc, cfg = setup.scenario, setup.config
    beams = dft_beamformer(sc.anchor.n_tx, cfg.n_beams, cfg.wavelength, sc.anchor.tx_offsets)
    phases = np.zeros(sc.n_nlos + 1) if phases is None else phases
    params = [
        prm.with_gain(path_gain(sc, k, cfg.wavelength, setup.gamma_r, phases[k]))
        for k, prm in zip(sc.path_indices, all_path_params(sc))
    ]
    J = fim_channel_exact(sc, cfg, beams, params).matrix
    K = sc.n_paths
    T = assemble_T(transformation_matrix(sc, params))
    n = T.shape[0]
    M = np.zeros((n + 2 * K, 5 * K))
    for k in range(K):
        for col, group in enumerate((TAU, THETA_TX, THETA_RX)):
            M[:n, group * K + k] = T[:, 3 * k + col]
    M[n:, 3 * K :] = np.eye(2 * K)
    return schur_efim(M @ J @ M.T, [0, 1, 2], pinv_fallback=False)


def unsimplified_peb(setup, phases=None):
    return bounds(unsimplified_efim(setup, phases)).peb


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
