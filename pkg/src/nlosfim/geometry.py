"""Planar geometry of a single-anchor downlink with LOS and single-bounce paths.

Conventions
-----------
All angles are measured counter-clockwise from the global x-axis and then
made array-relative by subtracting the orientation of the array that
observes them::

    theta_tx = atan2(target - q) - phi      (departure, seen from the anchor)
    theta_rx = atan2(source - p) - alpha    (arrival, pointing from the mobile
                                             towards where the ray came from)

For the LOS path the "source" of the arrival is the anchor itself, for an
NLOS path it is the point of incidence. With these definitions the analytic
Jacobian below is the exact derivative of the geometric map; the closed-form
Jacobian entries are written in terms of the *global* angles
``theta + orientation``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import GeometryError

SPEED_OF_LIGHT = 299_792_458.0
EPS_GEO = 1e-6  # m


def wrap_angle(theta):
    """Wrap an angle (or array of angles) to (-pi, pi]."""
    wrapped = np.arctan2(np.sin(theta), np.cos(theta))
    # arctan2 returns -pi for the negative branch cut; fold it onto +pi
    wrapped = np.where(np.isclose(wrapped, -np.pi, rtol=0.0, atol=1e-15), np.pi, wrapped)
    if np.ndim(wrapped) == 0:
        return float(wrapped)
    return wrapped


def _as_point(x, name):
    arr = np.array(x, dtype=float).reshape(-1)
    if arr.shape != (2,):
        raise ValueError(f"{name} must be a 2-vector, got shape {np.shape(x)}")
    arr.setflags(write=False)
    return arr


def _as_offsets(x, name):
    arr = np.array(x, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2 or arr.shape[0] < 1:
        raise ValueError(f"{name} must be an (N, 2) array with N >= 1")
    centroid = arr.mean(axis=0)
    scale = max(np.abs(arr).max(), 1.0)
    if np.linalg.norm(centroid) > 1e-9 * scale:
        raise ValueError(f"{name} must have its centroid at the origin, got {centroid}")
    arr = arr - centroid
    arr.setflags(write=False)
    return arr


def ula_offsets(n, spacing):
    """Element offsets of an ``n``-element ULA along the local x-axis.

    The array is centred on its centroid, so the offsets sum to zero.
    """
    if n < 1:
        raise ValueError("a ULA needs at least one element")
    x = (np.arange(n) - (n - 1) / 2.0) * spacing
    return np.column_stack([x, np.zeros(n)])


@dataclass(frozen=True)
class Anchor:
    """Base station with known position ``q`` and orientation ``phi``."""

    q: np.ndarray
    phi: float = 0.0
    tx_offsets: np.ndarray = field(default_factory=lambda: np.zeros((1, 2)))

    def __post_init__(self):
        object.__setattr__(self, "q", _as_point(self.q, "q"))
        object.__setattr__(self, "phi", float(self.phi))
        object.__setattr__(self, "tx_offsets", _as_offsets(self.tx_offsets, "tx_offsets"))

    @property
    def n_tx(self):
        return self.tx_offsets.shape[0]


@dataclass(frozen=True)
class Mobile:
    """Mobile terminal with unknown position ``p`` and orientation ``alpha``."""

    p: np.ndarray
    alpha: float = 0.0
    rx_offsets: np.ndarray = field(default_factory=lambda: np.zeros((1, 2)))

    def __post_init__(self):
        object.__setattr__(self, "p", _as_point(self.p, "p"))
        object.__setattr__(self, "alpha", float(self.alpha))
        object.__setattr__(self, "rx_offsets", _as_offsets(self.rx_offsets, "rx_offsets"))

    @property
    def n_rx(self):
        return self.rx_offsets.shape[0]


@dataclass(frozen=True)
class Scenario:
    """Anchor, mobile and the points of incidence of the NLOS paths.

    Path index 0 denotes the LOS path (only valid when ``has_los``); path
    index ``k >= 1`` is the single-bounce path through ``incidence_points[k-1]``.
    """

    anchor: Anchor
    mobile: Mobile
    incidence_points: tuple = ()
    has_los: bool = True

    def __post_init__(self):
        pts = tuple(_as_point(s, f"s_{i + 1}") for i, s in enumerate(self.incidence_points))
        object.__setattr__(self, "incidence_points", pts)
        object.__setattr__(self, "has_los", bool(self.has_los))
        if not self.has_los and not pts:
            raise ValueError("a scenario without LOS needs at least one incidence point")
        validate_geometry(self)

    @property
    def n_nlos(self):
        return len(self.incidence_points)

    @property
    def path_indices(self):
        """Active path indices in the order used by every FIM in the package."""
        return ([0] if self.has_los else []) + list(range(1, self.n_nlos + 1))

    @property
    def n_paths(self):
        return self.n_nlos + int(self.has_los)

    def with_incidence_points(self, points, has_los=None):
        """Copy of the scenario with a different set of incidence points."""
        return Scenario(
            self.anchor,
            self.mobile,
            tuple(points),
            self.has_los if has_los is None else has_los,
        )


def validate_geometry(scenario, eps=EPS_GEO):
    """Raise :class:`GeometryError` if any two nodes are closer than ``eps``."""
    p, q = scenario.mobile.p, scenario.anchor.q
    if np.linalg.norm(p - q) < eps:
        raise GeometryError("mobile p coincides with anchor q", node="p")
    for i, s in enumerate(scenario.incidence_points, start=1):
        if np.linalg.norm(s - p) < eps:
            raise GeometryError(f"incidence point s_{i} coincides with mobile p", node=f"s_{i}")
        if np.linalg.norm(s - q) < eps:
            raise GeometryError(f"incidence point s_{i} coincides with anchor q", node=f"s_{i}")


@dataclass(frozen=True)
class PathParams:
    """Delay, departure angle, arrival angle and complex gain of one path."""

    tau: float
    theta_tx: float
    theta_rx: float
    h: complex | None = None

    def with_gain(self, h):
        return PathParams(self.tau, self.theta_tx, self.theta_rx, complex(h))


def _check_index(scenario, path_index):
    if path_index == 0:
        if not scenario.has_los:
            raise ValueError("path 0 (LOS) requested but the scenario has no LOS path")
    elif not 1 <= path_index <= scenario.n_nlos:
        raise ValueError(f"path index {path_index} out of range 0..{scenario.n_nlos}")


def _angle(v):
    return float(np.arctan2(v[1], v[0]))


def path_lengths(scenario, path_index):
    """Return ``(total_length, d_tx, d_rx)`` for one path.

    ``d_tx`` is the anchor-to-first-node distance and ``d_rx`` the
    mobile-to-last-node distance; both equal ``||p - q||`` for the LOS path.
    """
    _check_index(scenario, path_index)
    p, q = scenario.mobile.p, scenario.anchor.q
    if path_index == 0:
        d = float(np.linalg.norm(p - q))
        return d, d, d
    s = scenario.incidence_points[path_index - 1]
    d_qs = float(np.linalg.norm(q - s))
    d_ps = float(np.linalg.norm(p - s))
    return d_qs + d_ps, d_qs, d_ps


def channel_params_from_geometry(scenario, path_index, speed_of_light=SPEED_OF_LIGHT):
    """Map the scenario geometry to ``(tau, theta_tx, theta_rx)`` of one path.

    The gain of the returned :class:`PathParams` is left unset.
    """
    _check_index(scenario, path_index)
    validate_geometry(scenario)
    p, q = scenario.mobile.p, scenario.anchor.q
    phi, alpha = scenario.anchor.phi, scenario.mobile.alpha
    if path_index == 0:
        tau = np.linalg.norm(p - q) / speed_of_light
        theta_tx = _angle(p - q) - phi
        theta_rx = _angle(q - p) - alpha
    else:
        s = scenario.incidence_points[path_index - 1]
        tau = (np.linalg.norm(q - s) + np.linalg.norm(p - s)) / speed_of_light
        theta_tx = _angle(s - q) - phi
        theta_rx = _angle(s - p) - alpha
    return PathParams(float(tau), wrap_angle(theta_tx), wrap_angle(theta_rx))


def all_path_params(scenario, speed_of_light=SPEED_OF_LIGHT):
    """Path parameters for every active path, in ``scenario.path_indices`` order."""
    return [channel_params_from_geometry(scenario, k, speed_of_light) for k in scenario.path_indices]


def global_angles(scenario, params):
    """Return ``(theta_tx + phi, theta_rx + alpha)`` for one path."""
    return params.theta_tx + scenario.anchor.phi, params.theta_rx + scenario.mobile.alpha


@dataclass(frozen=True)
class TransformMatrix:
    """Blocks of the Jacobian from (p, alpha, s_1, ...) to per-path (tau, theta_tx, theta_rx).

    Rows of every block follow the position-domain parameters, columns the
    channel parameters ``(tau, theta_tx, theta_rx)`` of one path.

    Attributes
    ----------
    a_block : ndarray (3, 3) or None
        LOS block, ``None`` if the scenario has no LOS path.
    b_blocks : list of ndarray (3, 3)
        Derivatives of NLOS path parameters with respect to ``(p_x, p_y, alpha)``.
    d_blocks : list of ndarray (2, 3)
        Derivatives of NLOS path parameters with respect to their incidence point.
    """

    a_block: np.ndarray | None
    b_blocks: list
    d_blocks: list

    @property
    def n_paths(self):
        return len(self.b_blocks) + (self.a_block is not None)

    @property
    def path_blocks(self):
        """The (3, 3) blocks of the first three rows, one per active path."""
        head = [] if self.a_block is None else [self.a_block]
        return head + list(self.b_blocks)


def _los_block(scenario, params, c):
    g = params.theta_tx + scenario.anchor.phi
    d = np.linalg.norm(scenario.mobile.p - scenario.anchor.q)
    cs, sn = np.cos(g), np.sin(g)
    return np.array(
        [
            [cs / c, -sn / d, -sn / d],
            [sn / c, cs / d, cs / d],
            [0.0, 0.0, -1.0],
        ]
    )


def _nlos_blocks(scenario, k, params, c):
    s = scenario.incidence_points[k - 1]
    d_ps = np.linalg.norm(scenario.mobile.p - s)
    d_qs = np.linalg.norm(scenario.anchor.q - s)
    g_tx, g_rx = global_angles(scenario, params)
    ct, st = np.cos(g_tx), np.sin(g_tx)
    cr, sr = np.cos(g_rx), np.sin(g_rx)
    # cos(pi - x) = -cos x and sin(pi - x) = sin x turn the tabulated forms into these
    tp = np.array(
        [
            [-cr / c, 0.0, sr / d_ps],
            [-sr / c, 0.0, -cr / d_ps],
            [0.0, 0.0, -1.0],
        ]
    )
    ts = np.array(
        [
            [(ct + cr) / c, -st / d_qs, -sr / d_ps],
            [(st + sr) / c, ct / d_qs, cr / d_ps],
        ]
    )
    return tp, ts


def transformation_matrix(
    scenario,
    params=None,
    speed_of_light=SPEED_OF_LIGHT,
    norm_length=1.0,
    norm_angle=1.0,
):
    """Analytic Jacobian blocks of the geometric map, unit-normalised.

    Position rows (p_x, p_y and every s_k row) are multiplied by
    ``norm_length`` in metres and the orientation row by ``norm_angle`` in
    radians so that the transformed FIM is dimensionless.
    """
    validate_geometry(scenario)
    if params is None:
        params = all_path_params(scenario, speed_of_light)
    if len(params) != scenario.n_paths:
        raise ValueError(f"expected {scenario.n_paths} path parameter sets, got {len(params)}")
    row_scale = np.array([norm_length, norm_length, norm_angle])[:, None]
    c = speed_of_light

    a_block = None
    b_blocks, d_blocks = [], []
    for k, prm in zip(scenario.path_indices, params):
        if k == 0:
            a_block = row_scale * _los_block(scenario, prm, c)
        else:
            tp, ts = _nlos_blocks(scenario, k, prm, c)
            b_blocks.append(row_scale * tp)
            d_blocks.append(norm_length * ts)
    return TransformMatrix(a_block, b_blocks, d_blocks)


def assemble_T(t, K=None):
    """Assemble the full upper block-triangular Jacobian.

    Rows are ``(p_x, p_y, alpha, s_1x, s_1y, ...)``, columns
    ``(tau, theta_tx, theta_rx)`` for each active path in order.
    """
    n_paths = t.n_paths
    if K is not None and K != n_paths:
        raise ValueError(f"transform matrix holds {n_paths} paths, K={K} given")
    n_nlos = len(t.b_blocks)
    out = np.zeros((3 + 2 * n_nlos, 3 * n_paths))
    for j, block in enumerate(t.path_blocks):
        out[:3, 3 * j : 3 * j + 3] = block
    offset = 0 if t.a_block is None else 1
    for i, block in enumerate(t.d_blocks):
        col = 3 * (i + offset)
        out[3 + 2 * i : 5 + 2 * i, col : col + 3] = block
    return out


def rotate_scenario(scenario, rho):
    """Rotate every position and both orientations by ``rho`` about the origin."""
    rot = np.array([[np.cos(rho), -np.sin(rho)], [np.sin(rho), np.cos(rho)]])
    anchor = Anchor(rot @ scenario.anchor.q, scenario.anchor.phi + rho, scenario.anchor.tx_offsets)
    mobile = Mobile(rot @ scenario.mobile.p, scenario.mobile.alpha + rho, scenario.mobile.rx_offsets)
    return Scenario(anchor, mobile, tuple(rot @ s for s in scenario.incidence_points), scenario.has_los)


def translate_scenario(scenario, shift):
    shift = np.asarray(shift, dtype=float)
    anchor = Anchor(scenario.anchor.q + shift, scenario.anchor.phi, scenario.anchor.tx_offsets)
    mobile = Mobile(scenario.mobile.p + shift, scenario.mobile.alpha, scenario.mobile.rx_offsets)
    return Scenario(anchor, mobile, tuple(s + shift for s in scenario.incidence_points), scenario.has_los)
