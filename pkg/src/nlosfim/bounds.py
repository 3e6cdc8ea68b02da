"""Position and orientation error bounds, PEB reduction and scatterer grid sweeps."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .channel_fim import path_infos
from .decomposition import decompose, projected_gains
from .errors import DegenerateError, GeometryError
from .geometry import EPS_GEO, Anchor, Mobile, Scenario, all_path_params, ula_offsets
from .signal import SignalConfig, dft_beamformer, path_gain

RANK_TOL = 1e-12
CSV_COLUMNS = ("cell_x", "cell_y", "lambda_xy", "lambda_alpha", "delta_peb_pct", "valid")


@dataclass(frozen=True)
class BoundReport:
    peb: float
    oeb: float
    efim_rank: int
    condition_number: float
    terms: list = field(default_factory=list)

    def to_dict(self):
        return {
            "peb": self.peb,
            "oeb": self.oeb,
            "efim_rank": self.efim_rank,
            "condition_number": self.condition_number,
            "terms": [_term_dict(t) for t in self.terms],
        }


def _term_dict(term):
    lam_xy, lam_alpha = projected_gains(term)
    return {
        "source": term.label,
        "lam": float(term.lam),
        "v": [float(x) for x in term.v],
        "lambda_xy": float(lam_xy),
        "lambda_alpha": float(lam_alpha),
        "flags": list(term.flags),
    }


def bounds(efim, terms=()):
    """PEB (m) and OEB (rad) of a 3x3 EFIM over ``(p_x, p_y, alpha)``.

    A rank-deficient EFIM yields infinite bounds instead of an error.
    """
    J = np.asarray(efim, dtype=float)
    if J.shape != (3, 3):
        raise ValueError("efim must be 3x3")
    if not np.allclose(J, J.T, rtol=1e-10, atol=0):
        raise ValueError("efim must be symmetric")
    J = 0.5 * (J + J.T)
    eig = np.linalg.eigvalsh(J)
    top = eig.max()
    rank = int(np.sum(eig > RANK_TOL * top)) if top > 0 else 0
    if rank < 3:
        return BoundReport(math.inf, math.inf, rank, math.inf, list(terms))
    inv = np.linalg.inv(J)
    peb = math.sqrt(max(inv[0, 0] + inv[1, 1], 0.0))
    oeb = math.sqrt(max(inv[2, 2], 0.0))
    return BoundReport(peb, oeb, rank, float(top / eig.min()), list(terms))


@dataclass(frozen=True)
class Setup:
    """Scenario plus everything needed to evaluate it end to end."""

    scenario: Scenario
    config: SignalConfig = field(default_factory=SignalConfig)
    gamma_r: float = 0.7
    seed: int = 0


def reference_setup(
    n_tx=25,
    n_rx=25,
    incidence_points=(),
    has_los=True,
    p=(5.0, 5.0),
    alpha=np.pi / 2,
    q=(0.0, 0.0),
    phi=0.0,
    config=None,
    seed=0,
):
    """Default numerical setup: 38 GHz, 125 MHz, half-wavelength ULAs, 50 beams."""
    config = config or SignalConfig()
    half = config.wavelength / 2
    anchor = Anchor(np.asarray(q, float), phi, ula_offsets(n_tx, half))
    mobile = Mobile(np.asarray(p, float), alpha, ula_offsets(n_rx, half))
    return Setup(Scenario(anchor, mobile, tuple(incidence_points), has_los), config, 0.7, seed)


def path_phases(scenario, rng):
    """One uniform phase per possible path index ``0..n_nlos`` (LOS slot always drawn)."""
    return rng.uniform(0.0, 2 * np.pi, size=scenario.n_nlos + 1)


@dataclass(frozen=True)
class Analysis:
    report: BoundReport
    decomposition: object
    params: list
    infos: list


def analyze(setup, mode="fast", phases=None):
    """Run the full chain from geometry to bounds for one setup.

    ``phases`` (indexed by path index) defaults to draws from ``setup.seed``.
    """
    sc, cfg = setup.scenario, setup.config
    if phases is None:
        phases = path_phases(sc, np.random.default_rng(setup.seed))
    beams = dft_beamformer(sc.anchor.n_tx, cfg.n_beams, cfg.wavelength, sc.anchor.tx_offsets)
    params = [
        prm.with_gain(path_gain(sc, k, cfg.wavelength, setup.gamma_r, phases[k]))
        for k, prm in zip(sc.path_indices, all_path_params(sc))
    ]
    infos = path_infos(sc, cfg, beams, params, mode=mode)
    dec = decompose(sc, infos, params)
    report = bounds(dec.efim, dec.terms)
    return Analysis(report, dec, params, infos)


def relative_reduction(peb_base, peb_aug):
    if not math.isfinite(peb_base):
        return 1.0 if math.isfinite(peb_aug) else 0.0
    return (peb_base - peb_aug) / peb_base


def delta_peb(base, augmented, config=None, mode="fast", seed=0):
    """Relative PEB reduction ``(peb_base - peb_aug) / peb_base`` from extra paths.

    ``base`` and ``augmented`` may be :class:`Scenario` or :class:`Setup`
    objects. Both share the phase draw of ``seed``.
    """
    def as_setup(x):
        if isinstance(x, Setup):
            return x
        return Setup(x, config or SignalConfig(), seed=seed)

    b, a = as_setup(base), as_setup(augmented)
    if b.config != a.config:
        raise ValueError("base and augmented setups must share a SignalConfig")
    phases = path_phases(a.scenario, np.random.default_rng(a.seed))
    peb_b = analyze(b, mode, phases[: b.scenario.n_nlos + 1]).report.peb
    peb_a = analyze(a, mode, phases).report.peb
    return relative_reduction(peb_b, peb_a)


@dataclass
class SweepGrid:
    """Cell-centred grid ``linspace(min, max, n)`` on each axis, plus per-cell results."""

    x_range: tuple = (0.2, 10.0, 50)
    y_range: tuple = (0.2, 10.0, 50)
    lambda_xy: np.ndarray = None
    lambda_alpha: np.ndarray = None
    delta_peb: np.ndarray = None
    valid: np.ndarray = None

    def __post_init__(self):
        for r in (self.x_range, self.y_range):
            if len(r) != 3 or int(r[2]) < 2:
                raise ValueError("grid axes need (min, max, n) with n >= 2")

    @classmethod
    def uniform(cls, n, lo=0.0, hi=10.0):
        """``n`` cells per axis covering ``(lo, hi]``, sampled at the upper cell edge."""
        step = (hi - lo) / n
        return cls((lo + step, hi, n), (lo + step, hi, n))

    @property
    def xs(self):
        lo, hi, n = self.x_range
        return np.linspace(lo, hi, int(n))

    @property
    def ys(self):
        lo, hi, n = self.y_range
        return np.linspace(lo, hi, int(n))

    @property
    def shape(self):
        return (int(self.y_range[2]), int(self.x_range[2]))

    def cells(self):
        """Yield ``(flat_index, iy, ix, x, y)`` in row-major order (y outer)."""
        xs, ys = self.xs, self.ys
        for iy, y in enumerate(ys):
            for ix, x in enumerate(xs):
                yield iy * len(xs) + ix, iy, ix, float(x), float(y)


def _cell_phases(seed, index, n):
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), int(index)]))
    return rng.uniform(0.0, 2 * np.pi, size=n)


def sweep(setup, grid, mode="fast", progress=None):
    """Move one extra scatterer over ``grid`` and record its net gains and PEB reduction.

    ``setup.scenario`` is the base (typically LOS only); each valid cell
    appends one incidence point at the cell position. Cells closer than the
    geometry tolerance to ``p`` or ``q``, or whose incidence block is
    singular, are marked invalid and filled with NaN.
    """
    base = setup.scenario
    shape = grid.shape
    lam_xy = np.full(shape, np.nan)
    lam_a = np.full(shape, np.nan)
    dpeb = np.full(shape, np.nan)
    valid = np.zeros(shape, dtype=bool)
    base_peb = analyze(setup, mode).report.peb
    k_new = base.n_nlos + 1
    for idx, iy, ix, x, y in grid.cells():
        pt = np.array([x, y])
        if (
            np.linalg.norm(pt - base.mobile.p) < EPS_GEO
            or np.linalg.norm(pt - base.anchor.q) < EPS_GEO
        ):
            continue
        try:
            sc = base.with_incidence_points(base.incidence_points + (pt,))
            res = analyze(replace(setup, scenario=sc), mode, _cell_phases(setup.seed, idx, k_new + 1))
        except (GeometryError, DegenerateError):
            continue
        term = res.decomposition.nlos_terms[-1]
        lam_xy[iy, ix], lam_a[iy, ix] = projected_gains(term)
        dpeb[iy, ix] = 100.0 * relative_reduction(base_peb, res.report.peb)
        valid[iy, ix] = True
        if progress is not None:
            progress(idx)
    grid.lambda_xy, grid.lambda_alpha, grid.delta_peb, grid.valid = lam_xy, lam_a, dpeb, valid
    return grid


def _fmt(x):
    return "nan" if not np.isfinite(x) else repr(float(x))


def sweep_csv(grid):
    """CSV text for a filled grid; row-major, deterministic float formatting."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for _, iy, ix, x, y in grid.cells():
        w.writerow(
            [
                _fmt(x),
                _fmt(y),
                _fmt(grid.lambda_xy[iy, ix]),
                _fmt(grid.lambda_alpha[iy, ix]),
                _fmt(grid.delta_peb[iy, ix]),
                int(grid.valid[iy, ix]),
            ]
        )
    return buf.getvalue()


def sweep_summary(grid):
    """Max, min and argmax of every per-cell field over the valid cells."""
    out = {"n_cells": int(grid.valid.size), "n_valid": int(grid.valid.sum())}
    xs, ys = grid.xs, grid.ys
    for name in ("lambda_xy", "lambda_alpha", "delta_peb"):
        vals = np.where(grid.valid, getattr(grid, name), np.nan)
        key = "delta_peb_pct" if name == "delta_peb" else name
        if not grid.valid.any():
            out[key] = {"max": None, "min": None, "argmax": None}
            continue
        iy, ix = np.unravel_index(np.nanargmax(vals), vals.shape)
        out[key] = {
            "max": float(np.nanmax(vals)),
            "min": float(np.nanmin(vals)),
            "argmax": [float(xs[ix]), float(ys[iy])],
        }
    return out


def sweep_summary_json(grid):
    return json.dumps(sweep_summary(grid), indent=2, sort_keys=True) + "\n"
