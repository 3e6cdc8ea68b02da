"""Fisher information of the channel parameters and its per-path reduction.

The channel parameter vector is grouped by parameter type::

    eta = [theta_rx(K), theta_tx(K), tau(K), h_R(K), h_I(K)]

and, after :func:`reorder_by_path`, grouped by path with the per-path order
``(tau, theta_tx, h_R, h_I, theta_rx)``.
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateError
from .signal import array_response, array_response_derivative, sinc_autocorrelation, sinc_pulse

# index of each parameter type in the grouped ordering
THETA_RX, THETA_TX, TAU, H_R, H_I = range(5)
# per-path order after reordering, expressed as grouped type indices
PATH_ORDER = (TAU, THETA_TX, H_R, H_I, THETA_RX)


class Ordering(enum.Enum):
    BY_PARAMETER = "by_parameter"
    BY_PATH = "by_path"


@dataclass(frozen=True)
class ChannelFim:
    matrix: np.ndarray
    ordering: Ordering
    K: int


@dataclass(frozen=True)
class PathInfo:
    """Diagonal information of one path after marginalising the complex gain.

    Every ``sigma2_*`` is the inverse of the corresponding Fisher information;
    ``inf`` marks a parameter that carries no information.
    """

    sigma2_tau: float
    sigma2_aod: float
    sigma2_aoa: float
    b_r: float = 0.0
    b_i: float = 0.0
    sigma2_hr: float = np.inf
    sigma2_hi: float = np.inf
    sigma2_aod_raw: float = np.inf
    aod_estimable: bool = True

    @property
    def efim(self):
        """3x3 information of ``(tau, theta_tx, theta_rx)``."""
        return np.diag([_inv(self.sigma2_tau), _inv(self.sigma2_aod), _inv(self.sigma2_aoa)])


def _inv(x):
    if x == 0:
        return np.inf
    if not np.isfinite(x):
        return 0.0
    return 1.0 / x


def _derivative_templates(rx_offsets, tx_offsets, F, wavelength, params):
    """Matrices X_u with d mu / d eta_u = sqrt(Es) X_u s^(order_u)(t - tau_u)."""
    K = len(params)
    n_rx, n_b = rx_offsets.shape[0], F.shape[1]
    scale = np.sqrt(rx_offsets.shape[0] * tx_offsets.shape[0])
    X = np.zeros((5, K, n_rx, n_b), dtype=complex)
    for k, prm in enumerate(params):
        a_r = array_response(rx_offsets, prm.theta_rx, wavelength)
        da_r = array_response_derivative(rx_offsets, prm.theta_rx, wavelength)
        tf = array_response(tx_offsets, prm.theta_tx, wavelength).conj() @ F
        dtf = array_response_derivative(tx_offsets, prm.theta_tx, wavelength).conj() @ F
        base = scale * np.outer(a_r, tf)
        X[THETA_RX, k] = scale * prm.h * np.outer(da_r, tf)
        X[THETA_TX, k] = scale * prm.h * np.outer(a_r, dtf)
        X[TAU, k] = -prm.h * base
        X[H_R, k] = base
        X[H_I, k] = 1j * base
    return X.reshape(5 * K, n_rx * n_b)


def fim_channel_exact(scenario, config, beamformer, params, cross_paths=True):
    """FIM of the channel parameters with the pilot expectation taken analytically.

    With IID unit-energy pilots the time integral of every entry reduces to
    ``N_s`` times a pulse autocorrelation term evaluated at the delay
    difference of the two paths involved.

    Parameters
    ----------
    cross_paths : bool
        If False, only same-path entries are evaluated and all inter-path
        blocks are left at zero. Used by the fast pipeline.
    """
    K = len(params)
    if K == 0:
        raise ValueError("at least one path is required")
    if any(p.h is None for p in params):
        raise ValueError("every path needs its complex gain set before computing the FIM")
    X = _derivative_templates(
        scenario.mobile.rx_offsets,
        scenario.anchor.tx_offsets,
        beamformer.F,
        config.wavelength,
        params,
    )
    gram = X.conj() @ X.T

    path = np.tile(np.arange(K), 5)
    deriv = np.repeat(np.array([0, 0, 1, 0, 0]), K)
    tau = np.array([p.tau for p in params])[path]
    r0, r1, r2 = sinc_autocorrelation(tau[:, None] - tau[None, :], config.bandwidth)
    du, dv = deriv[:, None], deriv[None, :]
    overlap = np.where(
        du == 0,
        np.where(dv == 0, r0, r1),
        np.where(dv == 0, -r1, -r2),
    )
    J = config.snr_scale * np.real(gram * overlap)
    if not cross_paths:
        J = J * (path[:, None] == path[None, :])
    J = 0.5 * (J + J.T)
    return ChannelFim(J, Ordering.BY_PARAMETER, K)


def simplification_mask(K):
    """Boolean mask of the entries kept by the large-array/large-bandwidth approximation."""
    group = np.repeat(np.arange(5), K)
    path = np.tile(np.arange(K), 5)
    same_path = path[:, None] == path[None, :]
    same_group = group[:, None] == group[None, :]
    gu, gv = group[:, None], group[None, :]
    tx_gain = ((gu == THETA_TX) & ((gv == H_R) | (gv == H_I))) | ((gv == THETA_TX) & ((gu == H_R) | (gu == H_I)))
    return same_path & (same_group | tx_gain)


def simplify_fim(fim):
    if fim.ordering is not Ordering.BY_PARAMETER:
        raise ValueError("simplify_fim expects the grouped-by-parameter ordering")
    J = np.where(simplification_mask(fim.K), fim.matrix, 0.0)
    return ChannelFim(0.5 * (J + J.T), Ordering.BY_PARAMETER, fim.K)


def path_permutation(K):
    """Index array ``perm`` with ``J_by_path = J[perm][:, perm]``."""
    return np.array([g * K + k for k in range(K) for g in PATH_ORDER])


def permutation_matrix(K):
    P = np.zeros((5 * K, 5 * K))
    P[np.arange(5 * K), path_permutation(K)] = 1.0
    return P


def reorder_by_path(fim):
    """Similarity transform ``P J P^T`` into per-path blocks."""
    if fim.ordering is not Ordering.BY_PARAMETER:
        raise ValueError("reorder_by_path expects the grouped-by-parameter ordering")
    perm = path_permutation(fim.K)
    return ChannelFim(fim.matrix[np.ix_(perm, perm)], Ordering.BY_PATH, fim.K)


def per_path_info(fim_reordered, k):
    """Read the diagonal information of path ``k`` and marginalise its gain.

    The AOD information is the Schur complement of the 2x2 gain block inside
    the 3x3 ``(theta_tx, h_R, h_I)`` block. If that complement is not
    positive the AOD is reported as not estimable (``sigma2_aod = inf``).
    """
    if fim_reordered.ordering is not Ordering.BY_PATH:
        raise ValueError("per_path_info expects a FIM reordered by path")
    if not 0 <= k < fim_reordered.K:
        raise IndexError(f"path {k} out of range for K={fim_reordered.K}")
    blk = fim_reordered.matrix[5 * k : 5 * k + 5, 5 * k : 5 * k + 5]
    j_tx, b_r, b_i, j_hr, j_hi = blk[1, 1], blk[1, 2], blk[1, 3], blk[2, 2], blk[3, 3]
    loss = (b_r**2 / j_hr if j_hr > 0 else 0.0) + (b_i**2 / j_hi if j_hi > 0 else 0.0)
    j_aod = j_tx - loss
    # relative floor: a complement at rounding level of j_tx carries no information
    estimable = j_aod > 1e-12 * max(j_tx, 0.0) and j_aod > 0
    return PathInfo(
        sigma2_tau=_inv(blk[0, 0]) if blk[0, 0] > 0 else np.inf,
        sigma2_aod=1.0 / j_aod if estimable else np.inf,
        sigma2_aoa=_inv(blk[4, 4]) if blk[4, 4] > 0 else np.inf,
        b_r=float(b_r),
        b_i=float(b_i),
        sigma2_hr=_inv(j_hr) if j_hr > 0 else np.inf,
        sigma2_hi=_inv(j_hi) if j_hi > 0 else np.inf,
        sigma2_aod_raw=_inv(j_tx) if j_tx > 0 else np.inf,
        aod_estimable=bool(estimable),
    )


def path_infos(scenario, config, beamformer, params, mode="full"):
    """Per-path information for every active path.

    ``mode="full"`` builds the complete channel FIM including inter-path
    terms, simplifies and reorders it; ``mode="fast"`` evaluates same-path
    entries only. Both give identical per-path blocks because the
    simplification discards every inter-path entry.
    """
    if mode not in ("full", "fast"):
        raise ValueError(f"unknown mode {mode!r}")
    fim = fim_channel_exact(scenario, config, beamformer, params, cross_paths=(mode == "full"))
    reordered = reorder_by_path(simplify_fim(fim))
    return [per_path_info(reordered, k) for k in range(fim.K)]


class PseudoInverseWarning(RuntimeWarning):
    """The nuisance block of a Schur complement was inverted with a pseudo-inverse."""


def schur_efim(J, keep, pinv_fallback=True):
    """Equivalent FIM of the parameters in ``keep`` (Schur complement).

    Parameters
    ----------
    J : (n, n) array
        Symmetric positive semi-definite FIM.
    keep : sequence of int
        Indices of the parameters of interest, returned in this order.
    pinv_fallback : bool
        If the nuisance block is singular, invert it with a Moore-Penrose
        pseudo-inverse (relative threshold 1e-12) and warn; otherwise raise
        :class:`DegenerateError`.
    """
    J = np.asarray(J, dtype=float)
    keep = list(keep)
    rest = [i for i in range(J.shape[0]) if i not in set(keep)]
    J11 = J[np.ix_(keep, keep)]
    if not rest:
        return J11.copy()
    J12 = J[np.ix_(keep, rest)]
    J22 = J[np.ix_(rest, rest)]
    norm22 = np.linalg.norm(J22, 2)
    eig = np.linalg.eigvalsh(J22)
    if norm22 == 0 or eig.min() <= 1e-12 * norm22:
        if not pinv_fallback:
            raise DegenerateError("nuisance block of the FIM is singular")
        warnings.warn("singular nuisance block inverted with a pseudo-inverse", PseudoInverseWarning, stacklevel=2)
        inv22 = np.linalg.pinv(J22, rcond=1e-12, hermitian=True)
        out = J11 - J12 @ inv22 @ J12.T
    else:
        out = J11 - J12 @ np.linalg.solve(J22, J12.T)
    return 0.5 * (out + out.T)


def fim_channel_monte_carlo(
    scenario,
    config,
    beamformer,
    params,
    n_draws=100_000,
    oversample=16,
    pad_symbols=200,
    seed=0,
    angle_step=1e-6,
    delay_step=1e-4,
):
    """Monte-Carlo, time-domain estimate of the channel FIM (test oracle).

    The noise-free signal is sampled on a grid with ``oversample`` samples per
    ``1/B`` over the pilot burst padded by ``pad_symbols`` symbol times on
    both sides. Parameter derivatives are central finite differences of the
    sampled signal, and the pilot expectation is replaced by the average over
    ``n_draws`` random unit-modulus pilot realisations.

    ``delay_step`` is relative to ``1/B``.
    """
    rng = np.random.default_rng(seed)
    rx, tx = scenario.mobile.rx_offsets, scenario.anchor.tx_offsets
    F = beamformer.F
    lam, B, Ts, Ns = config.wavelength, config.bandwidth, config.symbol_time, config.n_symbols
    K = len(params)
    n_rx, n_b = rx.shape[0], F.shape[1]
    scale = np.sqrt(rx.shape[0] * tx.shape[0])

    taus = np.array([p.tau for p in params])
    dt = 1.0 / (oversample * B)
    t0 = -pad_symbols * Ts
    t1 = (Ns + pad_symbols) * Ts + taus.max()
    t = np.arange(t0, t1, dt)
    sym = np.arange(Ns) * Ts

    def basis(eta):
        # eta is a (5, K) array in grouped order; returns mu basis (Nt, n_rx, n_b * Ns)
        out = np.zeros((t.size, n_rx, n_b, Ns), dtype=complex)
        for k in range(K):
            h = eta[H_R, k] + 1j * eta[H_I, k]
            g = scale * h * np.outer(
                array_response(rx, eta[THETA_RX, k], lam),
                array_response(tx, eta[THETA_TX, k], lam).conj() @ F,
            )
            pulses = sinc_pulse(t[:, None] - eta[TAU, k] - sym[None, :], B)
            out += g[None, :, :, None] * pulses[:, None, None, :]
        return np.sqrt(config.symbol_energy) * out.reshape(t.size, n_rx, n_b * Ns)

    eta0 = np.array(
        [
            [p.theta_rx for p in params],
            [p.theta_tx for p in params],
            taus,
            [p.h.real for p in params],
            [p.h.imag for p in params],
        ]
    )
    steps = {
        THETA_RX: angle_step,
        THETA_TX: angle_step,
        TAU: delay_step / B,
        H_R: None,
        H_I: None,
    }
    derivs = []
    for g in range(5):
        for k in range(K):
            step = steps[g] if steps[g] is not None else 1e-3 * max(abs(params[k].h), 1e-30)
            plus, minus = eta0.copy(), eta0.copy()
            plus[g, k] += step
            minus[g, k] -= step
            derivs.append((basis(plus) - basis(minus)) / (2 * step))
    dM = np.stack(derivs).reshape(5 * K, -1, n_b * Ns)
    # A[u, v] = int dM_u^H dM_v dt, a quadratic form in the pilot vector
    A = dt * np.einsum("uti,vtj->uvij", dM.conj(), dM, optimize=True)

    n_sym = n_b * Ns
    cov = np.zeros((n_sym, n_sym), dtype=complex)
    done = 0
    while done < n_draws:
        n = min(20_000, n_draws - done)
        d = np.exp(2j * np.pi * rng.random((n, n_sym)))
        cov += d.T @ d.conj()
        done += n
    cov /= n_draws
    # E[d^H A d] = tr(A E[d d^H]); cov[j, i] = mean d_j conj(d_i)
    J = np.real(np.einsum("uvij,ji->uv", A, cov)) / config.noise_psd
    J = 0.5 * (J + J.T)
    return ChannelFim(J, Ordering.BY_PARAMETER, K)
