"""Analytic three-level emitter model.

States are 1 (ground), 2 (emitting excited state) and 3 (metastable
shelving level). Rates are stored in 1/s, delays are taken in ns.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

NS = 1e-9
# relative eigenvalue gap below which the confluent (repeated-root) form is used
DEGENERATE_GAP = 1e-9


@dataclass(frozen=True)
class ThreeLevelRates:
    """Kinetic rates of the three-level emitter, all in 1/s.

    k12 is the pump rate, k21 the radiative decay, k23 the shelving
    (intersystem crossing) rate and k31 the deshelving rate.
    """

    k12: float
    k21: float
    k23: float = 0.0
    k31: float = 0.0

    def __post_init__(self):
        for name in ("k12", "k21", "k23", "k31"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be finite and >= 0, got {v}")
        if self.k21 <= 0:
            raise ValueError("k21 must be > 0")
        if self.k23 > 0 and self.k31 <= 0:
            raise ValueError("k31 must be > 0 when k23 > 0 (no permanent trap)")

    @property
    def lifetime_ns(self) -> float:
        """Observed excited-state lifetime 1/(k21 + k23) in ns."""
        return 1.0 / (self.k21 + self.k23) / NS

    def with_pump(self, k12: float) -> "ThreeLevelRates":
        return replace(self, k12=k12)


@dataclass(frozen=True)
class PowerModel:
    """Maps excitation power (uW) to pump rate, plus detection efficiency."""

    sigma: float
    eta_det: float = 0.10

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be > 0")
        if not 0 < self.eta_det <= 1:
            raise ValueError("eta_det must lie in (0, 1]")

    def pump_rate(self, power_uw: float) -> float:
        return self.sigma * power_uw


@dataclass(frozen=True)
class G2Curve:
    delays: np.ndarray
    values: np.ndarray


def steady_state(rates: ThreeLevelRates) -> tuple[float, float, float]:
    """Steady-state populations (p1, p2, p3) of the rate equations."""
    k12, k21, k23, k31 = rates.k12, rates.k21, rates.k23, rates.k31
    if k12 == 0:
        return (1.0, 0.0, 0.0)
    # p2 * [(k21 + k23)/k12 + 1 + k23/k31] = 1, written without dividing by k12
    shelf = k23 / k31 if k23 > 0 else 0.0
    denom = (k21 + k23) + k12 * (1.0 + shelf)
    p2 = k12 / denom
    p3 = p2 * shelf
    p1 = (k21 + k23) / denom
    # p1 + p2 + p3 == 1 up to rounding; renormalise so the closed form sums exactly
    s = p1 + p2 + p3
    return (p1 / s, p2 / s, p3 / s)


def _reduced_matrix(rates: ThreeLevelRates) -> np.ndarray:
    """Rate matrix for (p2, p3) after eliminating p1 = 1 - p2 - p3, in 1/ns."""
    k12, k21, k23, k31 = (r * NS for r in (rates.k12, rates.k21, rates.k23, rates.k31))
    return np.array([[-(k12 + k21 + k23), -k12], [k23, -k31]])


def _propagate(m: np.ndarray, y0: np.ndarray, tau: np.ndarray) -> np.ndarray:
    """Evaluate exp(m * tau) @ y0 for a 2x2 matrix over an array of tau.

    Uses the spectral (Sylvester) form for distinct real eigenvalues, the
    confluent form for near-repeated ones and the damped-oscillation form
    when the eigenvalues are complex. Returns shape (2, len(tau)).
    """
    s = 0.5 * np.trace(m)
    det = np.linalg.det(m)
    disc = s * s - det
    eye = np.eye(2)
    scale = max(abs(s), 1e-300)
    tau = np.asarray(tau, dtype=float)
    if abs(disc) <= (DEGENERATE_GAP * scale) ** 2:
        n = (m - s * eye) @ y0
        return np.exp(s * tau) * (y0[:, None] + np.outer(n, tau))
    if disc > 0:
        d = np.sqrt(disc)
        lam_p, lam_m = s + d, s - d
        c_p = ((m - lam_m * eye) @ y0) / (lam_p - lam_m)
        c_m = -((m - lam_p * eye) @ y0) / (lam_p - lam_m)
        return np.outer(c_p, np.exp(lam_p * tau)) + np.outer(c_m, np.exp(lam_m * tau))
    w = np.sqrt(-disc)
    n = (m - s * eye) @ y0
    return np.exp(s * tau) * (np.outer(y0, np.cos(w * tau)) + np.outer(n, np.sin(w * tau) / w))


def analytic_g2(rates: ThreeLevelRates, tau) -> np.ndarray:
    """Normalised intensity correlation g2(tau) of a single emitter.

    After a photon the emitter is in the ground state, so g2 is the excited
    population at delay ``tau`` (ns) relative to its steady-state value.
    Negative delays use g2(-tau) = g2(tau).
    """
    tau = np.abs(np.atleast_1d(np.asarray(tau, dtype=float)))
    if rates.k12 == 0:
        # zero-pump limit: the bunching amplitude vanishes with k12
        return 1.0 - np.exp(-(rates.k21 + rates.k23) * NS * tau)
    _, p2, p3 = steady_state(rates)
    m = _reduced_matrix(rates)
    x_inf = np.array([p2, p3])
    y = _propagate(m, -x_inf, tau)
    g2 = 1.0 + y[0] / p2
    g2[tau == 0] = 0.0
    return g2


def g2_parameters(rates: ThreeLevelRates) -> tuple[float, float, float]:
    """(tau1, tau2, a) in ns such that g2 = 1 - (1+a) e^(-t/tau1) + a e^(-t/tau2).

    tau1 is the fast antibunching time, tau2 the slow bunching time. Raises
    ValueError when the reduced rate matrix has complex eigenvalues, where
    no such bi-exponential form exists.
    """
    if rates.k12 == 0:
        return (1.0 / ((rates.k21 + rates.k23) * NS), np.inf, 0.0)
    m = _reduced_matrix(rates)
    s = 0.5 * np.trace(m)
    disc = s * s - np.linalg.det(m)
    if disc < 0:
        raise ValueError("rates give an oscillating g2; no bi-exponential form")
    d = np.sqrt(max(disc, 0.0))
    lam_fast, lam_slow = s - d, s + d
    _, p2, p3 = steady_state(rates)
    y0 = -np.array([p2, p3])
    eye = np.eye(2)
    if d <= DEGENERATE_GAP * abs(s):
        # repeated root: a pure exponential only if the secular term vanishes
        n = (m - s * eye) @ y0
        if abs(n[0]) > 1e-12 * abs(y0[0]):
            raise ValueError("degenerate rates give a (1 + lambda t) e^(-lambda t) g2")
        return (-1.0 / s, -1.0 / s, 0.0)
    c_slow = ((m - lam_fast * eye) @ y0)[0] / (lam_slow - lam_fast) / p2
    a = float(c_slow)
    tau2 = -1.0 / lam_slow if lam_slow < 0 else np.inf
    return (float(-1.0 / lam_fast), float(tau2), a)


def background_mixed_g2(g2_true, rho):
    """g2 observed when a fraction ``1 - rho`` of the counts is Poissonian."""
    if np.any(np.asarray(rho) < 0) or np.any(np.asarray(rho) > 1):
        raise ValueError("rho must lie in [0, 1]")
    return 1.0 + rho**2 * (np.asarray(g2_true) - 1.0)


def signal_fraction_for_g2(g2_zero: float) -> float:
    """Signal fraction that turns a perfect single emitter into ``g2_zero``."""
    if not 0 <= g2_zero <= 1:
        raise ValueError("g2_zero must lie in [0, 1]")
    return float(np.sqrt(1.0 - g2_zero))


def saturation_curve(power, i_sat: float, p_sat: float):
    """Count rate ``I_sat / (1 + P_sat / P)``, written as I_sat*P/(P+P_sat)."""
    if i_sat <= 0 or p_sat <= 0:
        raise ValueError("i_sat and p_sat must be > 0")
    p = np.asarray(power, dtype=float)
    if np.any(p < 0):
        raise ValueError("power must be >= 0")
    out = i_sat * p / (p + p_sat)
    return out if out.ndim else float(out)


def emission_rate(rates: ThreeLevelRates) -> float:
    """Photons emitted per second in steady state (k21 * p2)."""
    return rates.k21 * steady_state(rates)[1]


def detected_rate(rates: ThreeLevelRates, power_model: PowerModel, background: float = 0.0) -> float:
    return power_model.eta_det * emission_rate(rates) + background


def saturation_parameters(rates: ThreeLevelRates, power_model: PowerModel) -> tuple[float, float]:
    """(I_sat counts/s, P_sat uW) of the detected rate when k12 = sigma * P.

    The three-level steady state gives exactly the saturation form with
    I_sat = eta k21 / (1 + k23/k31) and P_sat = (k21 + k23) / (sigma (1 + k23/k31)).
    """
    shelf = rates.k23 / rates.k31 if rates.k23 > 0 else 0.0
    i_sat = power_model.eta_det * rates.k21 / (1.0 + shelf)
    p_sat = (rates.k21 + rates.k23) / (power_model.sigma * (1.0 + shelf))
    return i_sat, p_sat
