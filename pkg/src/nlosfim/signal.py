"""Array responses, DFT beamforming, sinc pulse moments and path gains."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .geometry import SPEED_OF_LIGHT, path_lengths


@dataclass(frozen=True)
class SignalConfig:
    """Waveform and link-budget parameters, all in SI linear units.

    Attributes
    ----------
    fc : float
        Carrier frequency in Hz.
    bandwidth : float
        Bandwidth ``B`` of the ideal sinc pulse in Hz.
    n_symbols : int
        Pilot symbols per beam.
    symbol_time : float
        Symbol duration in s.
    symbol_energy : float
        Energy per symbol in J.
    noise_psd : float
        One-sided noise PSD ``N0`` in W/Hz.
    n_beams : int
        Number of simultaneously transmitted beams.
    """

    fc: float = 38e9
    bandwidth: float = 125e6
    n_symbols: int = 16
    symbol_time: float = 1.0 / 125e6
    symbol_energy: float = 1e-3 / 125e6
    noise_psd: float = 1e-20
    n_beams: int = 50

    def __post_init__(self):
        for name in ("fc", "bandwidth", "symbol_time", "noise_psd"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.symbol_energy < 0:
            raise ValueError("symbol_energy must be non-negative")
        if self.n_symbols < 1 or self.n_beams < 1:
            raise ValueError("n_symbols and n_beams must be >= 1")

    @property
    def wavelength(self):
        return SPEED_OF_LIGHT / self.fc

    @property
    def snr_scale(self):
        """``N_s * E_s / N0``, the common prefactor of every FIM entry."""
        return self.n_symbols * self.symbol_energy / self.noise_psd


def dbm_to_watt(dbm):
    return 10.0 ** ((dbm - 30.0) / 10.0)


def config_from_link_budget(
    fc=38e9,
    bandwidth=125e6,
    n_symbols=16,
    symbol_power_dbm=0.0,
    noise_psd_dbm_hz=-170.0,
    n_beams=50,
    symbol_time=None,
):
    """Build a :class:`SignalConfig` from ``E_s/T_s`` in dBm and ``N0`` in dBm/Hz.

    ``symbol_time`` defaults to ``1 / bandwidth``.
    """
    ts = 1.0 / bandwidth if symbol_time is None else symbol_time
    return SignalConfig(
        fc=fc,
        bandwidth=bandwidth,
        n_symbols=n_symbols,
        symbol_time=ts,
        symbol_energy=dbm_to_watt(symbol_power_dbm) * ts,
        noise_psd=dbm_to_watt(noise_psd_dbm_hz),
        n_beams=n_beams,
    )


def _wavevector(theta, wavelength):
    return (2 * np.pi / wavelength) * np.array([np.cos(theta), np.sin(theta)])


def array_response(offsets, theta, wavelength):
    """Unit-norm narrowband array response ``exp(-j offsets @ k(theta)) / sqrt(N)``."""
    offsets = np.asarray(offsets, dtype=float)
    if wavelength <= 0:
        raise ValueError("wavelength must be positive")
    phase = offsets @ _wavevector(theta, wavelength)
    return np.exp(-1j * phase) / np.sqrt(offsets.shape[0])


def array_response_derivative(offsets, theta, wavelength):
    """Derivative of :func:`array_response` with respect to ``theta``."""
    offsets = np.asarray(offsets, dtype=float)
    dk = (2 * np.pi / wavelength) * np.array([-np.sin(theta), np.cos(theta)])
    return -1j * (offsets @ dk) * array_response(offsets, theta, wavelength)


@dataclass(frozen=True)
class Beamformer:
    beam_angles: np.ndarray
    F: np.ndarray


def dft_beamformer(n_tx, n_beams, wavelength, offsets):
    """``n_beams`` beams uniformly spaced over ``[0, pi)``, normalised so tr(F^H F) = 1."""
    offsets = np.asarray(offsets, dtype=float)
    if n_beams < 1:
        raise ValueError("n_beams must be >= 1")
    if offsets.shape[0] != n_tx:
        raise ValueError(f"{offsets.shape[0]} offsets given for n_tx={n_tx}")
    angles = np.arange(n_beams) * np.pi / n_beams
    F = np.column_stack([array_response(offsets, a, wavelength) for a in angles]) / np.sqrt(n_beams)
    return Beamformer(angles, F)


@dataclass(frozen=True)
class PulseMoments:
    energy: float
    msb: float
    cross: float


def sinc_pulse_moments(bandwidth):
    """Energy, mean-square bandwidth and cross moment of the unit-energy sinc pulse.

    The pulse has a flat spectrum of height ``1/B`` on ``[-B/2, B/2]``, so
    ``msb = int (2 pi f)^2 / B df = pi^2 B^2 / 3``.
    """
    if bandwidth <= 0:
        raise ValueError("bandwidth must be positive")
    return PulseMoments(energy=1.0, msb=np.pi**2 * bandwidth**2 / 3.0, cross=0.0)


def sinc_pulse(t, bandwidth):
    """Unit-energy ideal sinc pulse ``sqrt(B) sinc(B t)``."""
    return np.sqrt(bandwidth) * np.sinc(bandwidth * np.asarray(t, dtype=float))


def sinc_autocorrelation(delta, bandwidth):
    """Autocorrelation ``r(x) = int p(t) p(t + x) dt`` and its first two derivatives.

    Returns ``(r, r', r'')`` evaluated at ``delta`` (seconds). For the sinc
    pulse ``r(x) = sinc(B x)``.
    """
    u = np.asarray(delta, dtype=float) * bandwidth
    x = np.pi * u
    small = np.abs(u) < 1e-2
    safe = np.where(small, 1.0, u)
    psafe = np.pi * safe
    s, c = np.sin(psafe), np.cos(psafe)
    # Taylor branch avoids the 1/u^k cancellation near zero lag
    f = np.where(small, 1 - x**2 / 6 + x**4 / 120 - x**6 / 5040, s / psafe)
    f1 = np.where(
        small,
        np.pi * (-x / 3 + x**3 / 30 - x**5 / 840),
        c / safe - s / (np.pi * safe**2),
    )
    f2 = np.where(
        small,
        np.pi**2 * (-1 / 3 + x**2 / 10 - x**4 / 168),
        -np.pi * s / safe - 2 * c / safe**2 + 2 * s / (np.pi * safe**3),
    )
    return f, bandwidth * f1, bandwidth**2 * f2


def path_gain(scenario, path_index, wavelength, gamma_r=0.7, phase=0.0):
    """Free-space path gain with a reflection loss ``gamma_r`` on NLOS paths."""
    total, _, _ = path_lengths(scenario, path_index)
    power = (wavelength / (4 * np.pi)) ** 2 / total**2
    if path_index != 0:
        power *= gamma_r
    return complex(np.sqrt(power) * np.exp(1j * phase))


def check_narrowband(offsets, bandwidth, speed_of_light=SPEED_OF_LIGHT):
    """Warn if the array aperture is not small compared to ``c / B``."""
    offsets = np.asarray(offsets, dtype=float)
    diffs = offsets[:, None, :] - offsets[None, :, :]
    aperture = float(np.sqrt((diffs**2).sum(-1)).max())
    if aperture >= speed_of_light / bandwidth:
        warnings.warn(
            f"array aperture {aperture:.3g} m is not << c/B = {speed_of_light / bandwidth:.3g} m; "
            "the narrowband array model is questionable",
            RuntimeWarning,
            stacklevel=2,
        )
    return aperture
