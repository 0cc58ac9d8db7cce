"""Photoluminescence spectra: ZPL, phonon sideband, Debye-Waller fraction.

Energies are in eV on the grid and in meV for widths and offsets. Each
spectrum is a sum of area-normalised components convolved with the
spectrometer response and scaled to counts per grid bin.

The response defaults to a Lorentzian of FWHM ``resolution``, so a
resolution-limited ZPL stays an exact Lorentzian whose width is the sum
of intrinsic and instrumental widths. ``instrument="gaussian"`` gives the
Voigt profile instead.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import stats
from scipy.special import voigt_profile

from .fitting import CONVERGED, FitResult, curve_fit
from .rng import SeedLike, as_generator

HC_EV_NM = 1239.842
FWHM_TO_SIGMA = 1.0 / (2.0 * np.sqrt(2.0 * np.log(2.0)))
W_ZPL_EV = 1.018
DW_HALF_WINDOW_MEV = 8.0


def nm_to_ev(wavelength_nm):
    return HC_EV_NM / np.asarray(wavelength_nm, dtype=float)


def ev_to_nm(energy_ev):
    return HC_EV_NM / np.asarray(energy_ev, dtype=float)


@dataclass(frozen=True)
class TemperatureLaw:
    """Polynomial ZPL shift and width versus temperature.

    dE(T) = sum_k shift[k-1] (T - t_ref)^k  (no constant term, meV)
    G(T)  = sum_k width[k]   (T - t_ref)^k  (meV)

    On construction the laws must be a red-shift (dE non-increasing) and a
    broadening (G non-decreasing) over [t_ref, t_max], with G >= resolution.
    """

    shift: tuple[float, ...]
    width: tuple[float, ...]
    t_ref: float = 8.0
    t_max: float = 50.0
    resolution: float = 0.10
    validate: bool = True

    def __post_init__(self):
        if not self.validate:
            return
        t = np.linspace(self.t_ref, self.t_max, 421)
        de, g = self.evaluate(t)
        tol = 1e-12 * max(1.0, float(np.max(np.abs(de))), float(np.max(np.abs(g))))
        if np.any(np.diff(de) > tol):
            raise ValueError("shift law is not a red-shift over the declared range")
        if np.any(np.diff(g) < -tol):
            raise ValueError("width law decreases over the declared range")
        if np.any(g < self.resolution - 1e-12):
            raise ValueError("width law falls below the instrument resolution")

    def evaluate(self, temperature):
        dt = np.asarray(temperature, dtype=float) - self.t_ref
        de = np.polynomial.polynomial.polyval(dt, (0.0,) + tuple(self.shift))
        g = np.polynomial.polynomial.polyval(dt, tuple(self.width) or (0.0,))
        return de, g


def temperature_response(law: TemperatureLaw, temperature):
    """(dE, G) in meV at ``temperature`` (K, >= t_ref)."""
    if np.any(np.asarray(temperature) < law.t_ref):
        raise ValueError(f"temperature must be >= {law.t_ref} K")
    return law.evaluate(temperature)


@dataclass(frozen=True)
class SpectrumModel:
    """ZPL plus phonon sideband.

    ``fwhm`` is the intrinsic Lorentzian ZPL width; the observed width adds
    ``resolution`` for the Lorentzian instrument. The sideband holds
    ``1 - dw`` of the emission: a local-mode replica ``lvm_offset`` below
    the ZPL carrying ``lvm_weight`` of it and broad Gaussian bands
    (offset, sigma, weight) sharing the rest.
    """

    e_zpl: float = W_ZPL_EV
    fwhm: float = 0.01
    dw: float = 0.40
    lvm_offset: float = 70.0
    lvm_sigma: float = 1.0
    lvm_weight: float = 0.10
    bands: tuple[tuple[float, float, float], ...] = ((22.0, 5.0, 0.55), (42.0, 10.0, 0.45))
    resolution: float = 0.10
    instrument: str = "lorentzian"
    temperature_law: TemperatureLaw | None = None

    def __post_init__(self):
        if not 0 <= self.dw <= 1:
            raise ValueError("dw must lie in [0, 1]")
        if not self.fwhm > 0 or not self.e_zpl > 0:
            raise ValueError("fwhm and e_zpl must be > 0")
        if not 0 <= self.lvm_weight <= 1:
            raise ValueError("lvm_weight must lie in [0, 1]")
        if self.instrument not in ("lorentzian", "gaussian"):
            raise ValueError("instrument must be 'lorentzian' or 'gaussian'")

    def zpl_at(self, temperature: float | None) -> tuple[float, float]:
        """(ZPL energy eV, intrinsic fwhm meV), shifted and broadened by the law."""
        if self.temperature_law is None or temperature is None:
            return self.e_zpl, self.fwhm
        de, g = temperature_response(self.temperature_law, temperature)
        _, g_ref = self.temperature_law.evaluate(self.temperature_law.t_ref)
        return self.e_zpl + float(de) * 1e-3, self.fwhm + float(g - g_ref)


@dataclass(frozen=True)
class Spectrum:
    energies: np.ndarray
    intensities: np.ndarray
    components: dict = field(default_factory=dict)

    def __post_init__(self):
        e = np.asarray(self.energies)
        if e.shape != np.shape(self.intensities):
            raise ValueError("energies and intensities differ in length")
        if e.size > 1 and not np.all(np.diff(e) > 0):
            raise ValueError("energy grid must be strictly increasing")

    @classmethod
    def from_wavelengths(cls, wavelength_nm, intensities) -> "Spectrum":
        e = nm_to_ev(wavelength_nm)
        order = np.argsort(e)
        return cls(e[order], np.asarray(intensities, dtype=float)[order])

    def total(self) -> float:
        return float(np.sum(self.intensities))


def default_grid(lo: float = 0.85, hi: float = 1.03, step_mev: float = 0.02) -> np.ndarray:
    n = int(round((hi - lo) / (step_mev * 1e-3))) + 1
    return np.linspace(lo, hi, n)


def _gauss_density(e, center, sigma_ev):
    return np.exp(-0.5 * ((e - center) / sigma_ev) ** 2) / (sigma_ev * np.sqrt(2 * np.pi))


def synth_spectrum(model: SpectrumModel, temperature: float | None = None, grid=None,
                   total_counts: float = 1e6) -> Spectrum:
    """Noiseless spectrum in counts per grid bin; ``components`` holds each part."""
    e = default_grid() if grid is None else np.asarray(grid, dtype=float)
    if temperature is not None and temperature < 0:
        raise ValueError("temperature must be >= 0")
    bin_w = np.gradient(e) if e.size > 1 else np.ones_like(e)
    e0, fwhm = model.zpl_at(temperature)
    if model.instrument == "lorentzian":
        res_sigma = 0.0
        zpl = voigt_profile(e - e0, 0.0, 0.5 * (fwhm + model.resolution) * 1e-3)
    else:
        res_sigma = model.resolution * FWHM_TO_SIGMA * 1e-3
        zpl = voigt_profile(e - e0, res_sigma, 0.5 * fwhm * 1e-3)
    comps = {"zpl": model.dw * zpl}
    side = 1.0 - model.dw
    lvm_sigma = np.hypot(model.lvm_sigma * 1e-3, res_sigma)
    comps["lvm"] = side * model.lvm_weight * _gauss_density(e, e0 - model.lvm_offset * 1e-3, lvm_sigma)
    band_w = np.array([b[2] for b in model.bands], dtype=float)
    band_w = band_w / band_w.sum() if band_w.sum() > 0 else band_w
    for i, ((off, sig, _), w) in enumerate(zip(model.bands, band_w)):
        s = np.hypot(sig * 1e-3, res_sigma)
        comps[f"band{i}"] = side * (1 - model.lvm_weight) * w * _gauss_density(e, e0 - off * 1e-3, s)
    comps = {k: total_counts * v * bin_w for k, v in comps.items()}
    inten = np.sum(list(comps.values()), axis=0)
    return Spectrum(e, inten, comps)


def add_poisson_noise(spectrum: Spectrum, seed: SeedLike = 0, background: float = 0.0) -> Spectrum:
    rng = as_generator(seed, "spectra", "noise")
    return Spectrum(spectrum.energies, rng.poisson(spectrum.intensities + background).astype(float))


@dataclass(frozen=True)
class ZplFit:
    energy: float
    fwhm: float
    amplitude: float
    offset: float
    energy_err: float
    fwhm_err: float
    low_confidence: bool
    result: FitResult

    @property
    def status(self) -> str:
        return self.result.status


def fit_zpl(spectrum: Spectrum, window: tuple[float, float] | None = None) -> ZplFit:
    """Lorentzian fit of the single peak inside ``window`` (eV).

    Returns energy in eV and fwhm in meV. The fit is low-confidence when
    the peak height is under three times the noise floor.
    """
    e = np.asarray(spectrum.energies)
    y = np.asarray(spectrum.intensities, dtype=float)
    if window is not None:
        sel = (e >= window[0]) & (e <= window[1])
        e, y = e[sel], y[sel]
    if e.size < 5:
        raise ValueError("window holds fewer than 5 points")
    center = 0.5 * (e[0] + e[-1])
    x = (e - center) * 1e3
    res = curve_fit("lorentzian", x, y)
    edge = np.concatenate([y[: max(e.size // 10, 2)], y[-max(e.size // 10, 2):]])
    noise = max(float(np.std(edge)), float(np.sqrt(max(np.median(edge), 1.0))))
    low = (not res.ok) or res["amplitude"] < 3 * noise
    return ZplFit(
        energy=center + res["center"] * 1e-3,
        fwhm=res["fwhm"],
        amplitude=res["amplitude"],
        offset=res["offset"],
        energy_err=res.error("center") * 1e-3,
        fwhm_err=res.error("fwhm"),
        low_confidence=bool(low),
        result=res,
    )


@dataclass(frozen=True)
class DebyeWaller:
    fraction: float
    zpl_counts: float
    total_counts: float
    valid: bool


def debye_waller(spectrum: Spectrum, zpl_window: tuple[float, float] | None = None,
                 background: float = 0.0, edge_bins: int = 5) -> DebyeWaller:
    """Fraction of the emission inside ``zpl_window`` (eV).

    A flat ``background`` (counts per bin) is removed everywhere, and the
    sideband under the ZPL is removed by a straight line through the mean
    levels just outside the window. The default window is +/- 8 meV around
    the brightest bin: wide enough to hold all but ~1% of a 0.1 meV
    Lorentzian, narrow enough to stay clear of the sideband bands.
    """
    e = np.asarray(spectrum.energies)
    y = np.asarray(spectrum.intensities, dtype=float) - background
    if zpl_window is None:
        peak = e[int(np.argmax(y))]
        zpl_window = (peak - DW_HALF_WINDOW_MEV * 1e-3, peak + DW_HALF_WINDOW_MEV * 1e-3)
    lo, hi = zpl_window
    inside = (e >= lo) & (e <= hi)
    idx = np.flatnonzero(inside)
    total = float(np.sum(y))
    if idx.size == 0 or total <= 0:
        return DebyeWaller(np.nan, np.nan, total, False)
    left = y[max(idx[0] - edge_bins, 0): idx[0]]
    right = y[idx[-1] + 1: idx[-1] + 1 + edge_bins]
    yl = float(np.mean(left)) if left.size else 0.0
    yr = float(np.mean(right)) if right.size else 0.0
    el = e[max(idx[0] - 1, 0)]
    er = e[min(idx[-1] + 1, e.size - 1)]
    slope = (yr - yl) / (er - el) if er > el else 0.0
    base = yl + slope * (e[idx] - el)
    zpl = float(np.sum(y[idx] - base))
    return DebyeWaller(zpl / total, zpl, total, True)


def sample_inhomogeneous_zpl(n: int, spread: float = 1.0, seed: SeedLike = 0,
                             center: float = W_ZPL_EV) -> np.ndarray:
    """ZPL energies (eV) of ``n`` emitters spread over a full width ``spread`` (meV).

    Draws follow a Gaussian with sigma = spread/4 truncated at +/- 2 sigma, so
    every sample lies within the full width.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if spread < 0:
        raise ValueError("spread must be >= 0")
    if spread == 0:
        return np.full(n, center)
    rng = as_generator(seed, "spectra", "inhomogeneous")
    sigma = spread / 4.0
    draws = stats.truncnorm.rvs(-2.0, 2.0, loc=0.0, scale=sigma, size=n, random_state=rng)
    return center + draws * 1e-3


@dataclass(frozen=True)
class TemperatureFit:
    law: TemperatureLaw | None
    shift: np.ndarray
    shift_err: np.ndarray
    width: np.ndarray
    width_err: np.ndarray
    status: str
    message: str = ""


def _weighted_polyfit(dt, y, err, powers):
    design = np.stack([dt**k for k in powers], axis=-1)
    w = 1.0 / err
    a = design * w[:, None]
    b = y * w
    if np.linalg.matrix_rank(a) < a.shape[1]:
        return None, None
    coef, *_ = np.linalg.lstsq(a, b, rcond=None)
    cov = np.linalg.inv(a.T @ a)
    return coef, np.sqrt(np.diag(cov))


def fit_temperature(t_shift, shift, t_width, width, degree: int = 3, shift_err=None, width_err=None,
                    t_ref: float = 8.0, t_max: float | None = None, resolution: float = 0.10) -> TemperatureFit:
    """Weighted polynomial fits of ZPL shift and width versus temperature.

    Coefficient errors are the standard errors implied by the supplied
    point errors (unit errors when omitted, then scaled by the residual).
    """
    t_shift, shift = np.asarray(t_shift, float), np.asarray(shift, float)
    t_width, width = np.asarray(t_width, float), np.asarray(width, float)
    if min(t_shift.size, t_width.size) < degree + 2:
        raise ValueError(f"need at least {degree + 2} points per series")
    out = []
    for t, y, err, powers in (
        (t_shift, shift, shift_err, range(1, degree + 1)),
        (t_width, width, width_err, range(0, degree + 1)),
    ):
        powers = list(powers)
        if not powers:
            out.append((np.zeros(0), np.zeros(0)))
            continue
        e = np.ones_like(y) if err is None else np.asarray(err, float)
        coef, se = _weighted_polyfit(t - t_ref, y, e, powers)
        if coef is None:
            z = np.full(len(powers), np.nan)
            return TemperatureFit(None, z, z, z, z, "singular", "rank-deficient design")
        if err is None and y.size > len(powers):
            resid = y - np.stack([(t - t_ref) ** k for k in powers], -1) @ coef
            se = se * np.sqrt(np.sum(resid**2) / (y.size - len(powers)))
        out.append((coef, se))
    (sc, se_s), (wc, se_w) = out
    t_hi = t_max if t_max is not None else float(max(t_shift.max(), t_width.max()))
    try:
        law = TemperatureLaw(tuple(sc), tuple(wc), t_ref=t_ref, t_max=t_hi, resolution=resolution)
        status, msg = CONVERGED, ""
    except ValueError as exc:
        law = TemperatureLaw(tuple(sc), tuple(wc), t_ref=t_ref, t_max=t_hi, resolution=resolution, validate=False)
        status, msg = "non-monotone", str(exc)
    return TemperatureFit(law, sc, se_s, wc, se_w, status, msg)


@dataclass(frozen=True)
class TemperatureSeries:
    """Fitted ZPL position and width at each temperature, plus the law fit."""

    temperatures: np.ndarray
    shift: np.ndarray
    shift_err: np.ndarray
    fwhm: np.ndarray
    fwhm_err: np.ndarray
    fit: TemperatureFit


def temperature_series(model: SpectrumModel, temperatures, total_counts: float = 1e6, seed: SeedLike = 0,
                       half_window: float = 1.0, degree: int = 3) -> TemperatureSeries:
    """Synthesise noisy spectra along ``model.temperature_law`` and refit the law.

    Each temperature gets a Lorentzian ZPL fit; shifts are taken relative to
    the first temperature and the observed widths (intrinsic plus
    resolution) are fitted directly, so the width polynomial's constant
    term is ``fwhm + resolution``.
    """
    if model.temperature_law is None:
        raise ValueError("model has no temperature law")
    temps = np.asarray(temperatures, dtype=float)
    rows = []
    for j, t in enumerate(temps):
        e0, fw = model.zpl_at(t)
        half = max(half_window, 3 * (fw + model.resolution))
        grid = default_grid(e0 - 1.2 * half * 1e-3, e0 + 1.2 * half * 1e-3)
        s = add_poisson_noise(synth_spectrum(model, temperature=t, grid=grid, total_counts=total_counts),
                              seed=as_generator(seed, "temperature", j))
        f = fit_zpl(s, (e0 - half * 1e-3, e0 + half * 1e-3))
        rows.append((f.energy, f.energy_err, f.fwhm, f.fwhm_err))
    rows = np.array(rows)
    shift = (rows[:, 0] - rows[0, 0]) * 1e3
    # the first point is the reference, so later shifts carry its error too
    shift_err = np.maximum(np.hypot(rows[:, 1], rows[0, 1]) * 1e3, 1e-6)
    fwhm_err = np.maximum(rows[:, 3], 1e-6)
    tf = fit_temperature(temps, shift, temps, rows[:, 2], degree=degree, shift_err=shift_err,
                         width_err=fwhm_err, t_ref=float(temps[0]), resolution=0.0)
    return TemperatureSeries(temps, shift, shift_err, rows[:, 2], fwhm_err, tf)


def observed_law_coefficients(model: SpectrumModel, degree: int = 3) -> tuple[np.ndarray, np.ndarray]:
    """Coefficients that ``temperature_series`` should recover for ``model``.

    Shift terms are unchanged; the width polynomial starts at the observed
    width ``fwhm + resolution`` at the reference temperature.
    """
    law = model.temperature_law
    if law is None:
        raise ValueError("model has no temperature law")
    shift = np.zeros(degree)
    k = min(degree, len(law.shift))
    shift[:k] = law.shift[:k]
    width = np.zeros(degree + 1)
    k = min(degree + 1, len(law.width))
    width[:k] = law.width[:k]
    width[0] = model.fwhm + model.resolution
    return shift, width


def law_pulls(series: TemperatureSeries, model: SpectrumModel) -> np.ndarray:
    """(fitted - true) / error for every shift and width coefficient."""
    fit = series.fit
    shift, width = observed_law_coefficients(model, len(fit.shift))
    fitted = np.concatenate([fit.shift, fit.width])
    err = np.concatenate([fit.shift_err, fit.width_err])
    return (fitted - np.concatenate([shift, width])) / err


def write_csv(spectrum: Spectrum, path, wavelength: bool = False) -> None:
    with open(path, "w") as fh:
        fh.write("energy_eV,intensity" + (",wavelength_nm" if wavelength else "") + "\n")
        for e, i in zip(spectrum.energies, spectrum.intensities):
            row = f"{e:.9f},{i:.10g}"
            if wavelength:
                row += f",{HC_EV_NM / e:.6f}"
            fh.write(row + "\n")


def read_csv(path) -> Spectrum:
    data = np.genfromtxt(path, delimiter=",", names=True)
    return Spectrum(np.asarray(data["energy_eV"]), np.asarray(data["intensity"]))
