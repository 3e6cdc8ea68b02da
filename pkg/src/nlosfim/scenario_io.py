"""YAML scenario files: parsing with line-numbered diagnostics, unit conversion, serialisation.

Example file::

    anchor:
      q: [0, 0]            # m
      phi: 0 deg
      n_tx: 25             # half-wavelength ULA unless `spacing` or `offsets` given
    mobile:
      p: [5, 5]
      alpha: 90 deg
      n_rx: 25
    has_los: true
    incidence_points:      # m
      - [8, 1]
    signal:
      fc: 38 GHz
      bandwidth: 125 MHz
      n_symbols: 16
      symbol_power: 0 dBm  # E_s / T_s
      noise_psd: -170 dBm/Hz
      n_beams: 50
      gamma_r: 0.7
    seed: 0
    sweep:
      x: [0, 10]           # cells cover (min, max]
      y: [0, 10]
      n: 50

Bare numbers are read in SI base units (m, rad, Hz, s, J, W, W/Hz).
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np
import yaml

from .bounds import Setup, SweepGrid
from .errors import ScenarioFileError
from .geometry import Anchor, Mobile, Scenario, ula_offsets
from .signal import SignalConfig, dbm_to_watt

_UNITS = {
    "length": {"m": 1.0, "cm": 1e-2, "mm": 1e-3, "km": 1e3},
    "angle": {"rad": 1.0, "deg": np.pi / 180},
    "frequency": {"Hz": 1.0, "kHz": 1e3, "MHz": 1e6, "GHz": 1e9},
    "time": {"s": 1.0, "ms": 1e-3, "us": 1e-6, "ns": 1e-9},
    "energy": {"J": 1.0},
    "power": {"W": 1.0, "mW": 1e-3},
    "psd": {"W/Hz": 1.0},
}
_LOG_UNITS = {
    "power": {"dBm": lambda x: dbm_to_watt(x), "dBW": lambda x: 10.0 ** (x / 10.0)},
    "psd": {"dBm/Hz": lambda x: dbm_to_watt(x), "dBW/Hz": lambda x: 10.0 ** (x / 10.0)},
}
_QUANTITY = re.compile(r"^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*([A-Za-z/]*)\s*$")

_TOP_KEYS = {"anchor", "mobile", "has_los", "incidence_points", "signal", "seed", "sweep"}
_ANCHOR_KEYS = {"q", "phi", "n_tx", "spacing", "offsets"}
_MOBILE_KEYS = {"p", "alpha", "n_rx", "spacing", "offsets"}
_SIGNAL_KEYS = {
    "fc", "bandwidth", "n_symbols", "symbol_time", "symbol_power", "symbol_energy",
    "noise_psd", "n_beams", "gamma_r",
}
_SWEEP_KEYS = {"x", "y", "n"}


@dataclass(frozen=True)
class ArraySpec:
    """Either an ``n``-element ULA with ``spacing`` (None = half wavelength) or explicit offsets."""

    n: int | None = None
    spacing: float | None = None
    offsets: tuple | None = None

    def build(self, wavelength):
        if self.offsets is not None:
            return np.array(self.offsets, dtype=float)
        return ula_offsets(self.n, wavelength / 2 if self.spacing is None else self.spacing)


@dataclass(frozen=True)
class ScenarioFile:
    q: tuple
    phi: float
    tx: ArraySpec
    p: tuple
    alpha: float
    rx: ArraySpec
    incidence_points: tuple
    has_los: bool
    config: SignalConfig
    gamma_r: float = 0.7
    seed: int = 0
    sweep_x: tuple = (0.0, 10.0)
    sweep_y: tuple = (0.0, 10.0)
    sweep_n: int = 50
    source: str | None = field(default=None, compare=False)

    def scenario(self, n_tx=None):
        tx = self.tx if n_tx is None else ArraySpec(n=n_tx, spacing=self.tx.spacing)
        lam = self.config.wavelength
        return Scenario(
            Anchor(np.array(self.q), self.phi, tx.build(lam)),
            Mobile(np.array(self.p), self.alpha, self.rx.build(lam)),
            tuple(np.array(s) for s in self.incidence_points),
            self.has_los,
        )

    def setup(self, n_tx=None, seed=None):
        return Setup(self.scenario(n_tx), self.config, self.gamma_r, self.seed if seed is None else seed)

    def grid(self, n=None):
        n = self.sweep_n if n is None else n
        (x0, x1), (y0, y1) = self.sweep_x, self.sweep_y
        sx, sy = (x1 - x0) / n, (y1 - y0) / n
        return SweepGrid((x0 + sx, x1, n), (y0 + sy, y1, n))


class _Doc:
    """Parsed YAML plus a map from key paths to 1-based line numbers."""

    def __init__(self, text):
        try:
            node = yaml.compose(text)
            self.data = yaml.safe_load(text)
        except yaml.MarkedYAMLError as exc:
            line = exc.problem_mark.line + 1 if exc.problem_mark else None
            raise ScenarioFileError(f"invalid YAML: {exc.problem}", line) from None
        self.lines = {}
        if node is not None:
            self._index(node, ())

    def _index(self, node, path):
        self.lines[path] = node.start_mark.line + 1
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                self.lines[path + (k.value,)] = k.start_mark.line + 1
                self._index(v, path + (k.value,))
                self.lines[path + (k.value,)] = k.start_mark.line + 1
        elif isinstance(node, yaml.SequenceNode):
            for i, v in enumerate(node.value):
                self._index(v, path + (i,))

    def line(self, path):
        path = tuple(path)
        while path not in self.lines and path:
            path = path[:-1]
        return self.lines.get(path)

    def error(self, path, msg):
        name = ".".join(str(p) for p in path) or "<document>"
        return ScenarioFileError(f"{name}: {msg}", self.line(path))


def parse_quantity(value, kind):
    """Convert a bare number (SI) or a ``"<number> <unit>"`` string to SI."""
    if isinstance(value, bool):
        raise ValueError("expected a number")
    if isinstance(value, (int, float)):
        return float(value)
    if not isinstance(value, str):
        raise ValueError("expected a number or a quantity string")
    m = _QUANTITY.match(value)
    if not m:
        raise ValueError(f"cannot parse quantity {value!r}")
    num, unit = float(m.group(1)), m.group(2)
    if not unit:
        return num
    if unit in _UNITS.get(kind, {}):
        return num * _UNITS[kind][unit]
    if unit in _LOG_UNITS.get(kind, {}):
        return _LOG_UNITS[kind][unit](num)
    allowed = sorted(list(_UNITS.get(kind, {})) + list(_LOG_UNITS.get(kind, {})))
    raise ValueError(f"unit {unit!r} not valid for {kind} (use one of {', '.join(allowed)})")


class _Reader:
    def __init__(self, doc):
        self.doc = doc

    def section(self, path, allowed, required=True):
        d = self.doc.data
        for p in path:
            d = d.get(p) if isinstance(d, dict) else None
        if d is None:
            if required:
                raise self.doc.error(path, "missing section")
            return {}
        if not isinstance(d, dict):
            raise self.doc.error(path, "expected a mapping")
        unknown = sorted(set(d) - allowed, key=str)
        if unknown:
            raise self.doc.error(path + (unknown[0],), f"unknown key (allowed: {', '.join(sorted(allowed))})")
        return d

    def quantity(self, sec, path, key, kind, default=None, positive=False):
        if key not in sec:
            if default is None:
                raise self.doc.error(path + (key,), "missing value")
            return default
        try:
            v = parse_quantity(sec[key], kind)
        except ValueError as exc:
            raise self.doc.error(path + (key,), str(exc)) from None
        if positive and not v > 0:
            raise self.doc.error(path + (key,), "must be positive")
        return v

    def integer(self, sec, path, key, default=None, minimum=1):
        v = sec.get(key, default)
        if v is None:
            raise self.doc.error(path + (key,), "missing value")
        if isinstance(v, bool) or not isinstance(v, int):
            raise self.doc.error(path + (key,), "expected an integer")
        if v < minimum:
            raise self.doc.error(path + (key,), f"must be >= {minimum}")
        return v

    def point(self, value, path, kind="length"):
        if not isinstance(value, list) or len(value) != 2:
            raise self.doc.error(path, "expected a 2-element list [x, y]")
        try:
            return tuple(parse_quantity(v, kind) for v in value)
        except ValueError as exc:
            raise self.doc.error(path, str(exc)) from None

    def array(self, sec, path, count_key):
        if "offsets" in sec:
            if count_key in sec or "spacing" in sec:
                raise self.doc.error(path + ("offsets",), f"give either offsets or {count_key}/spacing, not both")
            offs = sec["offsets"]
            if not isinstance(offs, list) or not offs:
                raise self.doc.error(path + ("offsets",), "expected a non-empty list of [x, y]")
            pts = tuple(self.point(o, path + ("offsets", i)) for i, o in enumerate(offs))
            if np.linalg.norm(np.mean(pts, axis=0)) > 1e-9 * max(1.0, np.abs(pts).max()):
                raise self.doc.error(path + ("offsets",), "offsets must have zero centroid")
            return ArraySpec(offsets=pts)
        n = self.integer(sec, path, count_key)
        spacing = self.quantity(sec, path, "spacing", "length", positive=True) if "spacing" in sec else None
        return ArraySpec(n=n, spacing=spacing)


def parse_scenario_text(text, source=None):
    """Parse YAML text into a :class:`ScenarioFile`; errors carry line numbers."""
    doc = _Doc(text)
    if not isinstance(doc.data, dict):
        raise ScenarioFileError("top level must be a mapping", doc.line(()))
    r = _Reader(doc)
    r.section((), _TOP_KEYS)
    anc = r.section(("anchor",), _ANCHOR_KEYS)
    mob = r.section(("mobile",), _MOBILE_KEYS)
    sig = r.section(("signal",), _SIGNAL_KEYS, required=False)
    swp = r.section(("sweep",), _SWEEP_KEYS, required=False)
    data = doc.data

    if "q" not in anc:
        raise doc.error(("anchor", "q"), "missing value")
    if "p" not in mob:
        raise doc.error(("mobile", "p"), "missing value")
    q = r.point(anc["q"], ("anchor", "q"))
    p = r.point(mob["p"], ("mobile", "p"))
    phi = r.quantity(anc, ("anchor",), "phi", "angle", default=0.0)
    alpha = r.quantity(mob, ("mobile",), "alpha", "angle", default=0.0)
    tx = r.array(anc, ("anchor",), "n_tx")
    rx = r.array(mob, ("mobile",), "n_rx")

    pts_raw = data.get("incidence_points") or []
    if not isinstance(pts_raw, list):
        raise doc.error(("incidence_points",), "expected a list of [x, y]")
    pts = tuple(r.point(s, ("incidence_points", i)) for i, s in enumerate(pts_raw))
    has_los = data.get("has_los", True)
    if not isinstance(has_los, bool):
        raise doc.error(("has_los",), "expected true or false")
    if not has_los and not pts:
        raise doc.error(("has_los",), "a scenario without LOS needs at least one incidence point")

    sp = ("signal",)
    defaults = SignalConfig()
    bandwidth = r.quantity(sig, sp, "bandwidth", "frequency", defaults.bandwidth, positive=True)
    ts = r.quantity(sig, sp, "symbol_time", "time", 1.0 / bandwidth, positive=True)
    if "symbol_power" in sig and "symbol_energy" in sig:
        raise doc.error(sp + ("symbol_energy",), "give either symbol_power or symbol_energy, not both")
    if "symbol_energy" in sig:
        es = r.quantity(sig, sp, "symbol_energy", "energy")
    else:
        es = r.quantity(sig, sp, "symbol_power", "power", dbm_to_watt(0.0)) * ts
    fields = dict(
        fc=r.quantity(sig, sp, "fc", "frequency", defaults.fc, positive=True),
        bandwidth=bandwidth,
        n_symbols=r.integer(sig, sp, "n_symbols", defaults.n_symbols),
        symbol_time=ts,
        symbol_energy=es,
        noise_psd=r.quantity(sig, sp, "noise_psd", "psd", defaults.noise_psd, positive=True),
        n_beams=r.integer(sig, sp, "n_beams", defaults.n_beams),
    )
    try:
        config = SignalConfig(**fields)
    except ValueError as exc:
        raise doc.error(sp, str(exc)) from None
    gamma_r = r.quantity(sig, sp, "gamma_r", "", 0.7)
    if gamma_r < 0:
        raise doc.error(sp + ("gamma_r",), "must be non-negative")

    seed = data.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise doc.error(("seed",), "expected a non-negative integer")

    def span(key):
        if key not in swp:
            return (0.0, 10.0)
        lo, hi = r.point(swp[key], ("sweep", key))
        if not hi > lo:
            raise doc.error(("sweep", key), "expected [min, max] with max > min")
        return (lo, hi)

    return ScenarioFile(
        q=q, phi=phi, tx=tx, p=p, alpha=alpha, rx=rx,
        incidence_points=pts, has_los=has_los, config=config, gamma_r=gamma_r, seed=seed,
        sweep_x=span("x"), sweep_y=span("y"), sweep_n=r.integer(swp, ("sweep",), "n", 50, minimum=2),
        source=source,
    )


def load_scenario_file(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ScenarioFileError(f"cannot read {path}: {exc.strerror}") from None
    return parse_scenario_text(text, source=str(path))


def _array_dict(spec, count_key):
    if spec.offsets is not None:
        return {"offsets": [list(o) for o in spec.offsets]}
    out = {count_key: spec.n}
    if spec.spacing is not None:
        out["spacing"] = spec.spacing
    return out


def dump_scenario(sf):
    """YAML text in SI base units; parsing it gives back an equal :class:`ScenarioFile`."""
    c = sf.config
    data = {
        "anchor": {"q": list(sf.q), "phi": sf.phi, **_array_dict(sf.tx, "n_tx")},
        "mobile": {"p": list(sf.p), "alpha": sf.alpha, **_array_dict(sf.rx, "n_rx")},
        "has_los": sf.has_los,
        "incidence_points": [list(s) for s in sf.incidence_points],
        "signal": {
            "fc": c.fc,
            "bandwidth": c.bandwidth,
            "n_symbols": c.n_symbols,
            "symbol_time": c.symbol_time,
            "symbol_energy": c.symbol_energy,
            "noise_psd": c.noise_psd,
            "n_beams": c.n_beams,
            "gamma_r": sf.gamma_r,
        },
        "seed": sf.seed,
        "sweep": {"x": list(sf.sweep_x), "y": list(sf.sweep_y), "n": sf.sweep_n},
    }
    return yaml.safe_dump(data, sort_keys=False, default_flow_style=None)
