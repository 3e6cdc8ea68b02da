"""Closed-form decomposition of the position/orientation EFIM into rank-one terms.

Every matrix here lives in ``(p_x, p_y, alpha)`` space, with positions in
metres and the orientation in radians (unit normalisation 1 m / 1 rad).
Angles entering the closed forms are *global* ray angles, i.e. the
array-relative angle plus the orientation of the observing array.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateError
from .geometry import SPEED_OF_LIGHT, assemble_T, global_angles, transformation_matrix

LAMBDA_MAX = 1e18


class TermSource(enum.Enum):
    LOS_TOA = "los_toa"
    LOS_AOD = "los_aod"
    LOS_AOA = "los_aoa"
    NLOS = "nlos"


@dataclass(frozen=True)
class RankOneTerm:
    """One ``lam * v v^T`` contribution to the EFIM."""

    lam: float
    v: np.ndarray
    source: TermSource
    path_index: int = 0
    flags: tuple = ()

    @property
    def matrix(self):
        return self.lam * np.outer(self.v, self.v)

    @property
    def label(self):
        if self.source is TermSource.NLOS:
            return f"nlos_{self.path_index}"
        return self.source.value


@dataclass(frozen=True)
class LossWeights:
    w_r: float
    w_a: float
    gamma: float
    a: float
    b: float
    d: float
    epsilon: float
    beta: float

    @property
    def det(self):
        return self.a * self.d - self.b**2


@dataclass(frozen=True)
class EfimDecomposition:
    efim: np.ndarray
    los_terms: list
    nlos_terms: list
    los_matrix: np.ndarray
    gain_matrix: np.ndarray
    loss_matrix: np.ndarray
    net_matrix: np.ndarray
    weights: list = field(default_factory=list)

    @property
    def terms(self):
        return list(self.los_terms) + list(self.nlos_terms)

    def reconstruct(self):
        """Sum of all rank-one terms; equals :attr:`efim` up to rounding."""
        out = np.zeros((3, 3))
        for t in self.terms:
            out += t.matrix
        return out


def upsilon(n, m, theta, phi, rho):
    """3x3 template matrix shared by all gain and loss terms."""
    s, c = np.sin(theta), np.cos(theta)
    sn, sm, sm1 = (-1.0) ** n, (-1.0) ** m, (-1.0) ** (m + 1)
    return np.array(
        [
            [np.cos(theta + phi) ** 2, sn * s * c, sm * rho * s],
            [sn * s * c, np.sin(theta + phi) ** 2, sm1 * rho * c],
            [sm * rho * s, sm1 * rho * c, rho**2],
        ]
    )


def _info(sigma2):
    if sigma2 == 0:
        return np.inf
    return 0.0 if not np.isfinite(sigma2) else 1.0 / sigma2


def _unit(v):
    return v / np.linalg.norm(v)


def _first_positive(v):
    nz = np.flatnonzero(np.abs(v) > 1e-15 * np.abs(v).max())
    return -v if v[nz[0]] < 0 else v


def fim_position_domain(J_path, T):
    """FIM of ``(p, alpha, s_1, ..., s_{K-1})`` assembled block by block.

    Parameters
    ----------
    J_path : list of (3, 3) arrays
        Per-path FIM of ``(tau, theta_tx, theta_rx)``, one per active path.
    T : TransformMatrix
    """
    blocks = T.path_blocks
    if len(J_path) != len(blocks):
        raise ValueError(f"{len(J_path)} path FIMs for {len(blocks)} paths")
    n_nlos = len(T.b_blocks)
    offset = len(blocks) - n_nlos
    out = np.zeros((3 + 2 * n_nlos, 3 + 2 * n_nlos))
    for tp, jk in zip(blocks, J_path):
        out[:3, :3] += tp @ jk @ tp.T
    for i, (tp, ts) in enumerate(zip(T.b_blocks, T.d_blocks)):
        jk = J_path[offset + i]
        sl = slice(3 + 2 * i, 5 + 2 * i)
        cross = tp @ jk @ ts.T
        out[:3, sl] = cross
        out[sl, :3] = cross.T
        out[sl, sl] = ts @ jk @ ts.T
    return out


def fim_position_domain_dense(J_path, T):
    """Same as :func:`fim_position_domain` via one dense ``T J T^T`` product."""
    Tfull = assemble_T(T)
    n = len(J_path)
    Jbar = np.zeros((3 * n, 3 * n))
    for k, jk in enumerate(J_path):
        Jbar[3 * k : 3 * k + 3, 3 * k : 3 * k + 3] = jk
    return Tfull @ Jbar @ Tfull.T


def los_gain_terms(info0, theta_tx0, dist_pq, c=SPEED_OF_LIGHT):
    """Rank-one LOS terms from TOA, AOD and AOA and their sum.

    ``theta_tx0`` is the global direction from the anchor to the mobile.

    Returns
    -------
    terms : list of RankOneTerm
    matrix : (3, 3) array
    """
    th, d = theta_tx0, dist_pq
    s, co = np.sin(th), np.cos(th)
    lam_r = _info(info0.sigma2_tau) / c**2
    lam_d = _info(info0.sigma2_aod) / d**2
    lam_a = _info(info0.sigma2_aoa) * (d**2 + 1) / d**2
    v_r = _first_positive(np.array([co, s, 0.0]))
    # orthogonal to v_r, as required by the Upsilon_{1,0}(theta, pi/2, 0) structure
    v_d = _first_positive(np.array([-s, co, 0.0]))
    v_a = _first_positive(_unit(np.array([s / d, -co / d, 1.0])))
    terms = [
        RankOneTerm(lam_r, v_r, TermSource.LOS_TOA),
        RankOneTerm(lam_d, v_d, TermSource.LOS_AOD),
        RankOneTerm(lam_a, v_a, TermSource.LOS_AOA),
    ]
    matrix = (
        _info(info0.sigma2_tau) / c**2 * upsilon(0, 0, th, 0.0, 0.0)
        + lam_d * upsilon(1, 0, th, np.pi / 2, 0.0)
        + _info(info0.sigma2_aoa) / d**2 * upsilon(1, 0, th, np.pi / 2, d)
    )
    return terms, matrix


def nlos_gain_matrix(info_k, theta_rx_k, dist_ps_k, c=SPEED_OF_LIGHT, path_index=1):
    """Information an NLOS path would give if its incidence point were known.

    Returns the 3x3 gain matrix and its two rank-one terms (TOA, AOA).
    """
    th, d = theta_rx_k, dist_ps_k
    s, co = np.sin(th), np.cos(th)
    i_tau, i_rx = _info(info_k.sigma2_tau), _info(info_k.sigma2_aoa)
    matrix = i_tau / c**2 * upsilon(0, 0, th, 0.0, 0.0) + i_rx / d**2 * upsilon(1, 1, th, np.pi / 2, d)
    terms = [
        RankOneTerm(i_tau / c**2, np.array([co, s, 0.0]), TermSource.NLOS, path_index),
        RankOneTerm(
            i_rx * (d**2 + 1) / d**2,
            _unit(np.array([-s / d, co / d, 1.0])),
            TermSource.NLOS,
            path_index,
        ),
    ]
    return matrix, terms


def _geometry_terms(info_k, theta_tx_k, theta_rx_k, dist_qs_k, dist_ps_k, c):
    """Per-path informations scaled to position units and the angle difference."""
    A = _info(info_k.sigma2_tau) / c**2
    T = _info(info_k.sigma2_aod) / dist_qs_k**2
    R = _info(info_k.sigma2_aoa) / dist_ps_k**2
    dth = theta_rx_k - theta_tx_k
    dth = np.arctan2(np.sin(dth), np.cos(dth))
    return A, T, R, dth


def nlos_loss_weights(info_k, theta_tx_k, theta_rx_k, dist_qs_k, dist_ps_k, c=SPEED_OF_LIGHT):
    """Weights of the information lost because the incidence point is unknown.

    ``epsilon`` and ``beta`` (the net TOA and AOA weights) are evaluated in
    the cancellation-free form obtained by expanding ``a d - b^2``; the
    printed differences ``1/(sigma_tau^2 c^2) - w_R`` and
    ``1/(sigma_rx^2 ||p-s||^2) - w_A`` equal them exactly in real arithmetic.
    """
    A, T, R, dth = _geometry_terms(info_k, theta_tx_k, theta_rx_k, dist_qs_k, dist_ps_k, c)
    ct, st = np.cos(theta_tx_k), np.sin(theta_tx_k)
    cr, sr = np.cos(theta_rx_k), np.sin(theta_rx_k)
    a = A * (ct + cr) ** 2 + T * st**2 + R * sr**2
    b = A * (ct + cr) * (st + sr) - T * st * ct - R * sr * cr
    d = A * (st + sr) ** 2 + T * ct**2 + R * cr**2
    cd, sd = np.cos(dth), np.sin(dth)
    # same determinant written as a sum of non-negative terms
    det = A * (1 + cd) ** 2 * (T + R) + T * R * sd**2
    scale = (a + d) ** 2
    if not det > 1e-14 * scale or scale == 0:
        raise DegenerateError(
            "incidence-point information block is singular (degenerate geometry or missing information)"
        )
    w_r = A**2 * (1 + cd) ** 2 * (R + T) / det
    w_a = (A * (1 + cd) ** 2 * R**2 + T * sd**2 * R**2) / det
    gamma = (1 + cd) * sd * T * R * A / det
    epsilon = A * T * R * sd**2 / det
    beta = A * T * R * (1 + cd) ** 2 / det
    return LossWeights(w_r, w_a, gamma, a, b, d, epsilon, beta)


def loss_shape_matrix(theta_rx_k, dist_ps_k):
    """Matrix multiplying ``gamma`` in the loss term (outer-product cross term)."""
    s, c, d = np.sin(theta_rx_k), np.cos(theta_rx_k), dist_ps_k
    return np.array(
        [
            [-2 * s * c, c**2 - s**2, c * d],
            [c**2 - s**2, 2 * s * c, s * d],
            [c * d, s * d, 0.0],
        ]
    )


def nlos_loss_matrix(weights, theta_rx_k, dist_ps_k):
    th, d = theta_rx_k, dist_ps_k
    return (
        weights.w_r * upsilon(0, 0, th, 0.0, 0.0)
        + weights.w_a * upsilon(1, 1, th, np.pi / 2, d)
        - weights.gamma * loss_shape_matrix(th, d)
    )


def net_nlos_matrix(weights, theta_rx_k, dist_ps_k):
    """Net gain ``Psi_k = epsilon Y00 + beta Y11 + gamma B_k``."""
    th, d = theta_rx_k, dist_ps_k
    return (
        weights.epsilon * upsilon(0, 0, th, 0.0, 0.0)
        + weights.beta * upsilon(1, 1, th, np.pi / 2, d)
        + weights.gamma * loss_shape_matrix(th, d)
    )


def net_nlos_term(
    info_k,
    theta_tx_k,
    theta_rx_k,
    dist_qs_k,
    dist_ps_k,
    c=SPEED_OF_LIGHT,
    path_index=1,
    lam_max=LAMBDA_MAX,
):
    """Only non-zero eigen-pair of the net gain matrix of one NLOS path.

    The eigenvalue is evaluated from the sigma^2 closed form, which stays
    finite when some sigma^2 are infinite. The eigenvector is proportional
    to ``sin(dtheta) e + (1 + cos(dtheta)) f`` with ``e = [cos, sin, 0]``
    and ``f = [-sin, cos, ||p-s||]`` at the arrival angle; it depends on the
    geometry only and is well defined when ``sin(dtheta) = 0``.
    """
    th, d_ps, d_qs = theta_rx_k, dist_ps_k, dist_qs_k
    dth = np.arctan2(np.sin(th - theta_tx_k), np.cos(th - theta_tx_k))
    cd, sd = np.cos(dth), np.sin(dth)
    flags = []

    num = 2.0 + d_ps**2 * (1 + cd)
    den_terms = [
        ((1 - cd), c**2 * info_k.sigma2_tau),
        ((1 + cd), d_ps**2 * info_k.sigma2_aoa),
        ((1 + cd), d_qs**2 * info_k.sigma2_aod),
    ]
    den = 0.0
    for coef, var in den_terms:
        if coef == 0:
            continue
        den += coef * var
    if not np.isfinite(den):
        lam = 0.0
        flags.append("no_information")
    elif den <= 0 or num / den > lam_max:
        lam = lam_max
        flags.append("capped")
    else:
        lam = num / den

    e = np.array([np.cos(th), np.sin(th), 0.0])
    f = np.array([-np.sin(th), np.cos(th), d_ps])
    v = sd * e + (1 + cd) * f
    if np.linalg.norm(v) < 1e-12:
        v = np.array([0.0, 0.0, 1.0])
        flags.append("degenerate_direction")
    else:
        v = _unit(v)
    if abs(sd) < 1e-12:
        flags.append("aligned_angles")
    return RankOneTerm(float(lam), v, TermSource.NLOS, path_index, tuple(flags))


def projected_gains(term, squared=True):
    """Split a rank-one term into its position-plane and orientation parts.

    With ``squared=True`` (default) returns ``lam * (v_x^2 + v_y^2)`` and
    ``lam * v_alpha^2``: the trace of the position block and the orientation
    entry of ``lam v v^T``. These add up to ``lam``. With ``squared=False``
    the lengths ``lam * sqrt(v_x^2 + v_y^2)`` and ``lam * v_alpha`` of the
    projected eigenvalue-eigenvector product are returned instead.
    """
    v = np.asarray(term.v, dtype=float)
    if squared:
        return term.lam * (v[0] ** 2 + v[1] ** 2), term.lam * v[2] ** 2
    return term.lam * np.hypot(v[0], v[1]), term.lam * v[2]


def projected_gains_closed_form(info_k, theta_tx_k, theta_rx_k, dist_qs_k, dist_ps_k, c=SPEED_OF_LIGHT):
    """Net position and orientation gains of an NLOS path straight from sigma^2."""
    dth = theta_rx_k - theta_tx_k
    cd = np.cos(dth)
    den = (1 - cd) * c**2 * info_k.sigma2_tau + (1 + cd) * (
        dist_ps_k**2 * info_k.sigma2_aoa + dist_qs_k**2 * info_k.sigma2_aod
    )
    if not np.isfinite(den):
        return 0.0, 0.0
    return 2.0 / den, dist_ps_k**2 * (1 + cd) / den


def _nlos_geometry(scenario, k, params):
    s = scenario.incidence_points[k - 1]
    g_tx, g_rx = global_angles(scenario, params)
    d_qs = float(np.linalg.norm(scenario.anchor.q - s))
    d_ps = float(np.linalg.norm(scenario.mobile.p - s))
    return g_tx, g_rx, d_qs, d_ps


def decompose(scenario, per_path_infos, params, c=SPEED_OF_LIGHT):
    """EFIM of ``(p_x, p_y, alpha)`` and its rank-one decomposition.

    Parameters
    ----------
    scenario : Scenario
    per_path_infos : list of PathInfo
        One per active path, in ``scenario.path_indices`` order.
    params : list of PathParams
        Same order.
    """
    if len(per_path_infos) != scenario.n_paths or len(params) != scenario.n_paths:
        raise ValueError("per_path_infos and params must cover every active path")
    los_terms = []
    los_matrix = np.zeros((3, 3))
    gain = np.zeros((3, 3))
    loss = np.zeros((3, 3))
    net = np.zeros((3, 3))
    nlos_terms, weights = [], []
    for k, info, prm in zip(scenario.path_indices, per_path_infos, params):
        if k == 0:
            g_tx, _ = global_angles(scenario, prm)
            d = float(np.linalg.norm(scenario.mobile.p - scenario.anchor.q))
            los_terms, los_matrix = los_gain_terms(info, g_tx, d, c)
            continue
        g_tx, g_rx, d_qs, d_ps = _nlos_geometry(scenario, k, prm)
        g_mat, _ = nlos_gain_matrix(info, g_rx, d_ps, c, k)
        w = nlos_loss_weights(info, g_tx, g_rx, d_qs, d_ps, c)
        gain += g_mat
        loss += nlos_loss_matrix(w, g_rx, d_ps)
        net += net_nlos_matrix(w, g_rx, d_ps)
        weights.append(w)
        nlos_terms.append(net_nlos_term(info, g_tx, g_rx, d_qs, d_ps, c, k))
    efim = los_matrix + net
    efim = 0.5 * (efim + efim.T)
    return EfimDecomposition(efim, los_terms, nlos_terms, los_matrix, gain, loss, net, weights)


def efim_brute_force(scenario, per_path_infos, params, c=SPEED_OF_LIGHT):
    """EFIM via the dense position-domain FIM and a generic Schur complement."""
    from .channel_fim import schur_efim

    T = transformation_matrix(scenario, params, c)
    J = fim_position_domain_dense([i.efim for i in per_path_infos], T)
    return schur_efim(J, [0, 1, 2], pinv_fallback=False)
