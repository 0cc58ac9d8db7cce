"""Lifetime and saturation analyses built on the fitting engine."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fitting import FitResult, curve_fit
from .photon_stream import DecayHistogram


@dataclass(frozen=True)
class LifetimeFit:
    tau: float
    tau_err: float
    amplitude: float
    offset: float
    result: FitResult

    @property
    def status(self) -> str:
        return self.result.status


def fit_decay(hist: DecayHistogram, window: float | None = None) -> LifetimeFit:
    """Mono-exponential plus offset fit of a TCSPC decay (tau in ns).

    The fit starts at the histogram maximum and spans ``window`` ns
    (default: the rest of the period). A first pass with data weights
    seeds a second pass weighted by the model itself, which removes the
    low-count bias of data-derived Poisson weights. The weights are
    absolute Poisson errors, so the covariance is not rescaled by the
    reduced chi-square, which empty tail bins would pull far below one.
    """
    t = hist.delays * 1e-3
    y = np.asarray(hist.counts, dtype=float)
    start = int(np.argmax(y))
    sel = slice(start, None)
    if window is not None:
        sel = slice(start, start + max(int(window * 1e3 / hist.bin_width), 5))
    x, yy = t[sel] - t[start], y[sel]
    if yy.size < 5:
        raise ValueError("decay holds fewer than 5 bins after the peak")
    bounds = {"offset": (0.0, np.inf)} if np.all(yy >= 0) else None
    first = curve_fit("exponential", x, yy, bounds=bounds)
    res = first
    if first.ok:
        model = np.maximum(first.params[0] * np.exp(-x / first.params[1]) + first.params[2], 1.0)
        res = curve_fit("exponential", x, yy, y_err=np.sqrt(model), p0=first.params, bounds=bounds,
                        scale_covariance=False)
    return LifetimeFit(res["tau"], res.error("tau"), res["amplitude"], res["offset"], res)


@dataclass(frozen=True)
class SaturationFit:
    i_sat: float
    i_sat_err: float
    p_sat: float
    p_sat_err: float
    result: FitResult

    @property
    def status(self) -> str:
        return self.result.status

    @property
    def redchi(self) -> float:
        return self.result.redchi


def fit_saturation(powers, rates, errors=None) -> SaturationFit:
    """Fit I(P) = I_sat P / (P + P_sat); rates in counts/s, powers in uW."""
    res = curve_fit("saturation", np.asarray(powers, float), np.asarray(rates, float), y_err=errors)
    return SaturationFit(res["i_sat"], res.error("i_sat"), res["p_sat"], res.error("p_sat"), res)


def residual_inflation(anomalous: SaturationFit, reference: SaturationFit) -> float:
    """Ratio of reduced chi-square of two standard-model fits.

    Values well above 1 flag a curve the standard saturation law does not
    describe, such as the roll-over caused by a power-driven dark state.
    """
    return float(anomalous.redchi / reference.redchi)
