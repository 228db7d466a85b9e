"""Wigner functions, probe sideband spectra, and the spectrum-to-population
inversion.

Wigner convention: phase-space coordinates (x, p) are the real and imaginary
parts of the coherent amplitude, so the vacuum gives W(0,0) = 2/pi and
|W| <= 2/pi everywhere; the grid integral of W over dx dp is 1.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from .fock import DensityMatrix
from .lindblad import RateTable

WIGNER_BOUND = 2.0 / np.pi


class SpectrumInversionError(RuntimeError):
    """Peaks too broad or overlapping for the population readout."""


@dataclass(frozen=True)
class WignerData:
    x: np.ndarray
    p: np.ndarray
    values: np.ndarray          # shape (len(p), len(x))
    origin_value: float
    min_value: float
    min_location: tuple[float, float]

    def grid_integral(self) -> float:
        return float(np.trapezoid(np.trapezoid(self.values, self.x, axis=1), self.p))


@dataclass(frozen=True)
class SpectrumPeak:
    n: int
    side: str                   # "+" (at w_L + delta_n) or "-"
    position: float
    height: float
    linewidth: float
    weight: float               # n * A * P (area / 2 pi)


@dataclass(frozen=True)
class SpectrumData:
    frequencies: np.ndarray
    values: np.ndarray
    peaks: tuple[SpectrumPeak, ...]
    omega_probe: float
    resolvable: bool
    probe_resonant: bool = True

    def peak(self, n: int, side: str) -> SpectrumPeak:
        for pk in self.peaks:
            if pk.n == n and pk.side == side:
                return pk
        raise KeyError((n, side))


# ---------------------------------------------------------------------------
# Wigner functions

def _laguerre_table(n_max: int, z: np.ndarray) -> np.ndarray:
    """L_n(z) for n = 0..n_max by the three-term upward recurrence.
    Returns shape (n_max + 1,) + z.shape."""
    out = np.empty((n_max + 1,) + z.shape)
    out[0] = 1.0
    if n_max >= 1:
        out[1] = 1.0 - z
    for n in range(1, n_max):
        out[n + 1] = ((2 * n + 1 - z) * out[n] - n * out[n - 1]) / (n + 1)
    return out


def _genlaguerre_table(m_max: int, k: int, z: np.ndarray) -> np.ndarray:
    """Associated Laguerre L_m^(k)(z) for m = 0..m_max, upward recurrence."""
    out = np.empty((m_max + 1,) + z.shape)
    out[0] = 1.0
    if m_max >= 1:
        out[1] = 1.0 + k - z
    for m in range(1, m_max):
        out[m + 1] = ((2 * m + 1 + k - z) * out[m] - (m + k) * out[m - 1]) / (m + 1)
    return out


def wigner_origin(populations) -> float:
    """Alternating-sum origin value (2/pi) sum_n (-1)^n P_n."""
    p = np.asarray(populations, dtype=float)
    signs = np.where(np.arange(p.size) % 2 == 0, 1.0, -1.0)
    return float(WIGNER_BOUND * np.dot(signs, p))


def _package(x, p, w, origin, check_norm):
    idx = np.unravel_index(np.argmin(w), w.shape)
    data = WignerData(
        x=np.asarray(x, dtype=float), p=np.asarray(p, dtype=float),
        values=w, origin_value=float(origin),
        min_value=float(w[idx]),
        min_location=(float(np.asarray(x)[idx[1]]), float(np.asarray(p)[idx[0]])))
    if check_norm:
        norm = data.grid_integral()
        if abs(norm - 1.0) > 1e-3:
            warnings.warn(
                f"Wigner grid integral {norm:.6f} deviates from 1; "
                "the grid may be too coarse or too small", stacklevel=3)
    return data


def wigner_from_populations(populations, x, p, check_norm=True) -> WignerData:
    """Wigner function of a diagonal (Fock-mixture) state:
    W(r) = (2/pi) e^(-2 r^2) sum_n P_n (-1)^n L_n(4 r^2), radially symmetric.
    """
    pn = np.asarray(populations, dtype=float)
    x = np.asarray(x, dtype=float)
    p = np.asarray(p, dtype=float)
    r2 = x[None, :] ** 2 + p[:, None] ** 2
    lag = _laguerre_table(pn.size - 1, 4.0 * r2)
    signs = np.where(np.arange(pn.size) % 2 == 0, 1.0, -1.0)
    # fold the Gaussian into the sum per point to keep large-n terms bounded
    w = WIGNER_BOUND * np.exp(-2.0 * r2) * np.tensordot(signs * pn, lag, axes=(0, 0))
    return _package(x, p, w, wigner_origin(pn), check_norm)


def wigner_from_density_matrix(rho: DensityMatrix, x, p,
                               check_norm=True) -> WignerData:
    """Wigner function of a general single-mode state via the displaced
    parity series; agrees with the population path for diagonal states."""
    if len(rho.space.factors) != 1:
        raise ValueError("single-mode density matrix required")
    m = rho.matrix
    nrm = np.linalg.norm(m)
    if nrm > 0 and np.linalg.norm(m - m.conj().T) / nrm > 1e-10:
        raise ValueError("density matrix is not Hermitian")
    d = m.shape[0]
    x = np.asarray(x, dtype=float)
    p = np.asarray(p, dtype=float)
    alpha = x[None, :] + 1j * p[:, None]
    # the row-major (upper-triangle) accumulation below effectively sums
    # rho_{mn} <n|D(beta)|m> with beta = 2 conj(alpha); conjugating here
    # keeps the phase-space orientation (displacement by alpha peaks at
    # alpha, not at its mirror image)
    beta = 2.0 * np.conj(alpha)
    babs2 = np.abs(beta) ** 2

    # W(alpha) = (2/pi) sum_{mn} rho_{mn} (-1)^m <n|D(beta)|m>, with
    # <n|D(beta)|m> = sqrt(m!/n!) beta^(n-m) e^(-|beta|^2/2) L_m^(n-m)(|beta|^2)
    # for n >= m; Hermiticity folds the lower triangle into twice the real part.
    w = np.zeros(babs2.shape)
    phase = np.ones_like(beta)
    logb = np.zeros(babs2.shape)
    with np.errstate(divide="ignore"):
        logabs_b = np.log(np.abs(beta), out=np.full(babs2.shape, -np.inf),
                          where=np.abs(beta) > 0)
    unit_b = np.divide(beta, np.abs(beta), out=np.ones_like(beta),
                       where=np.abs(beta) > 0)
    for k in range(d):          # k = n - m
        lag = _genlaguerre_table(d - 1 - k, k, babs2)
        if k > 0:
            phase = phase * unit_b
            logb = logb + logabs_b
        for mm in range(d - k):
            nn = mm + k
            coef = m[nn, mm] * (-1) ** mm
            if coef == 0:
                continue
            logpref = (0.5 * (gammaln(mm + 1) - gammaln(nn + 1))
                       + logb - 0.5 * babs2)
            term = coef * phase * np.exp(logpref) * lag[mm]
            w += term.real if k == 0 else 2.0 * term.real
    w *= WIGNER_BOUND
    origin = wigner_origin(np.real(np.diag(m)))
    return _package(x, p, w, origin, check_norm)


def default_grid(mech_dim: int, points: int = 121):
    """Symmetric quadrature grid wide enough for the normalization check."""
    r = 4.0 + np.sqrt(mech_dim)
    x = np.linspace(-r, r, points)
    return x, x.copy()


# ---------------------------------------------------------------------------
# spectra

def linewidths(rates: RateTable, gamma_m: float, n_bar: float,
               n_max: int | None = None,
               probe_rates: RateTable | None = None) -> np.ndarray:
    """Sideband linewidths Gamma_n for n = 1..n_max:
    Gamma_n = n [A-^n + A+^n + gamma (2 n_bar + 1)]
            + (n-1) [A-^(n-1) + gamma (n_bar + 1)]
            + (n+1) [A+^(n+1) + gamma n_bar]
    with A summed over all lasers (and the probe when supplied)."""
    if n_max is None:
        n_max = rates.n_max - 1
    if n_max + 1 > rates.n_max:
        raise ValueError("rate table must cover n_max + 1")

    def tot(tbl, n, sign):
        a = tbl.a_plus if sign == "+" else tbl.a_minus
        val = float(a[n - 1].sum()) if n >= 1 else 0.0
        if probe_rates is not None and n >= 1:
            pa = probe_rates.a_plus if sign == "+" else probe_rates.a_minus
            val += float(pa[n - 1].sum())
        return val

    out = np.zeros(n_max)
    for n in range(1, n_max + 1):
        out[n - 1] = (
            n * (tot(rates, n, "-") + tot(rates, n, "+")
                 + gamma_m * (2.0 * n_bar + 1.0))
            + (n - 1) * (tot(rates, n - 1, "-") + gamma_m * (n_bar + 1.0))
            + (n + 1) * (tot(rates, n + 1, "+") + gamma_m * n_bar))
    return out


def power_spectrum(populations, drive_rates: RateTable,
                   probe_rates: RateTable, omega_probe: float,
                   frequencies: np.ndarray, gamma_m: float, n_bar: float,
                   include_probe_in_linewidth: bool = True) -> SpectrumData:
    """Probe output sideband spectrum: a Lorentzian pair at w_L +- delta_n per
    phonon line,
    S(w) = sum_n n Gamma_n [A-^n P_n / ((w - w_n+)^2 + Gamma_n^2/4)
                          + A+^n P_(n-1) / ((w - w_n-)^2 + Gamma_n^2/4)].
    The overall scale is arbitrary; only ratios are physical."""
    pn = np.asarray(populations, dtype=float)
    n_lines = min(pn.size - 1, probe_rates.n_max, drive_rates.n_max - 1)
    freqs = np.asarray(frequencies, dtype=float)
    gam = linewidths(drive_rates, gamma_m, n_bar, n_max=n_lines,
                     probe_rates=probe_rates if include_probe_in_linewidth else None)
    values = np.zeros_like(freqs)
    peaks = []
    for n in range(1, n_lines + 1):
        g_n = gam[n - 1]
        a_minus = probe_rates.total_minus(n)
        a_plus = probe_rates.total_plus(n)
        w_plus = omega_probe + drive_rates.delta[n - 1]
        w_minus = omega_probe - drive_rates.delta[n - 1]
        up = n * g_n * a_minus * pn[n]
        lo = n * g_n * a_plus * pn[n - 1]
        values += up / ((freqs - w_plus) ** 2 + g_n**2 / 4.0)
        values += lo / ((freqs - w_minus) ** 2 + g_n**2 / 4.0)
        peaks.append(SpectrumPeak(
            n=n, side="+", position=w_plus, height=4.0 * up / g_n**2,
            linewidth=g_n, weight=n * a_minus * pn[n]))
        peaks.append(SpectrumPeak(
            n=n, side="-", position=w_minus, height=4.0 * lo / g_n**2,
            linewidth=g_n, weight=n * a_plus * pn[n - 1]))
    lam = np.diff(drive_rates.delta).mean() if drive_rates.delta.size > 1 else np.inf
    resolvable = bool(lam >= 3.0 * gam.max())
    if not resolvable:
        warnings.warn("sideband lines overlap (lam < 3 max Gamma_n); "
                      "population inversion will be unreliable", stacklevel=2)
    # a resonant probe has A+^n = A-^n; grade resonance by the actual
    # asymmetry of the probe rate table rather than the raw detuning
    ap = probe_rates.a_plus[:n_lines].sum(axis=1)
    am = probe_rates.a_minus[:n_lines].sum(axis=1)
    asym = float(np.max(np.abs(ap - am) / (ap + am + 1e-300)))
    resonant = asym < 0.01
    if not resonant:
        warnings.warn(f"probe rate asymmetry {asym:.3f}: probe is not "
                      "resonant, peak ratios are biased", stacklevel=2)
    return SpectrumData(frequencies=freqs, values=values, peaks=tuple(peaks),
                        omega_probe=omega_probe, resolvable=resolvable,
                        probe_resonant=resonant)


def _interp_peak(freqs: np.ndarray, values: np.ndarray, center: float,
                 halfwidth: float) -> float:
    """Peak height by quadratic interpolation around the grid maximum inside
    a window centered at the predicted position."""
    mask = np.abs(freqs - center) <= halfwidth
    if mask.sum() < 3:
        raise SpectrumInversionError(
            f"fewer than 3 grid points within {halfwidth:.3e} of predicted "
            f"peak at {center:.6e}; refine the frequency grid")
    idx = np.flatnonzero(mask)
    k = idx[np.argmax(values[idx])]
    if k == 0 or k == freqs.size - 1:
        return float(values[k])
    y0, y1, y2 = values[k - 1], values[k], values[k + 1]
    denom = y0 - 2.0 * y1 + y2
    if denom >= 0:
        return float(y1)
    return float(y1 - 0.125 * (y2 - y0) ** 2 / denom)


def populations_from_spectrum(spectrum: SpectrumData,
                              n_levels: int | None = None):
    """Recover populations from resonant-probe peak-height ratios
    S(w_n+)/S(w_n-) ~ P_n / P_(n-1), assuming negligible occupation above the
    highest detected line.  Returns (P, uncertainty)."""
    if not spectrum.probe_resonant:
        raise SpectrumInversionError(
            "probe is not resonant; peak ratios no longer equal P_n/P_(n-1)")
    if not spectrum.resolvable:
        raise SpectrumInversionError(
            "sideband lines are not resolved; refusing the inversion")
    ns = sorted({pk.n for pk in spectrum.peaks})
    if n_levels is not None:
        ns = [n for n in ns if n <= n_levels]
    log_ratios = []
    uncertainties = []
    for n in ns:
        plus = spectrum.peak(n, "+")
        minus = spectrum.peak(n, "-")
        h_plus = _interp_peak(spectrum.frequencies, spectrum.values,
                              plus.position, plus.linewidth / 2.0)
        h_minus = _interp_peak(spectrum.frequencies, spectrum.values,
                               minus.position, minus.linewidth / 2.0)
        if h_minus <= 0:
            raise SpectrumInversionError(f"vanishing red peak for n={n}")
        ratio = h_plus / h_minus
        # leakage of neighbouring lines sets the systematic error of a
        # peak-height readout; estimate it from the isolated-line heights
        leak_p = abs(h_plus - plus.height) / max(plus.height, 1e-300)
        leak_m = abs(h_minus - minus.height) / max(minus.height, 1e-300)
        log_ratios.append(np.log(max(ratio, 1e-300)))
        uncertainties.append(leak_p + leak_m)
    log_p = np.concatenate([[0.0], np.cumsum(log_ratios)])
    log_p -= log_p.max()
    p = np.exp(log_p)
    p /= p.sum()
    sig = p * np.concatenate([[0.0], np.cumsum(uncertainties)])
    sig = np.maximum(sig, np.full_like(p, 1e-12))
    return p, sig
