"""Cross-correlation of two time-tag channels into a normalised g2 histogram.

Bins are centred on integer multiples of the bin width, so the central bin
straddles zero delay. A delay lying exactly on a bin edge belongs to the
bin further from zero, which keeps the histogram symmetric under swapping
the two channels.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fitting import CONVERGED, FitResult, curve_fit

PS = 1e-12


@dataclass(frozen=True)
class CorrelationHistogram:
    """Coincidence histogram and its normalisation.

    ``g2[b] = raw[b] / (rate_a * rate_b * total_time * bin_width)``. When
    either rate is zero, ``valid`` is False, the rates are 0 and ``g2``
    is all zero; check ``valid`` before using it.
    """

    bin_width: int
    k_min: int
    k_max: int
    raw: np.ndarray
    g2: np.ndarray
    rates: tuple[float, float]
    total_time: float
    valid: bool = True

    @property
    def tau(self) -> np.ndarray:
        """Bin centres in ps."""
        return np.arange(self.k_min, self.k_max + 1) * self.bin_width

    @property
    def tau_ns(self) -> np.ndarray:
        return self.tau * 1e-3

    @property
    def g2_err(self) -> np.ndarray:
        """Poisson error of g2 from the raw counts (at least one count)."""
        if not self.valid:
            return np.zeros(self.raw.shape)
        return np.sqrt(np.maximum(self.raw, 1)) * self.norm_factor

    @property
    def norm_factor(self) -> float:
        return 1.0 / (self.rates[0] * self.rates[1] * self.total_time * self.bin_width * PS)

    def central_bin(self) -> tuple[float, float]:
        """(g2, error) of the bin containing zero delay."""
        i = -self.k_min
        if not 0 <= i < self.raw.size:
            raise ValueError("histogram range does not include zero delay")
        return float(self.g2[i]), float(self.g2_err[i])


def _bin_range(bin_width: int, tau_range) -> tuple[int, int]:
    if np.isscalar(tau_range):
        lo, hi = -float(tau_range), float(tau_range)
    else:
        lo, hi = (float(v) for v in tau_range)
    if not (np.isfinite(lo) and np.isfinite(hi)) or lo > hi:
        raise ValueError(f"bad tau range {tau_range!r}")
    return int(round(lo / bin_width)), int(round(hi / bin_width))


def bin_index(delay: np.ndarray, bin_width: int) -> np.ndarray:
    """Bin number of each integer delay; edges go to the bin further from zero."""
    d = np.asarray(delay, dtype=np.int64)
    mag = (2 * np.abs(d) + bin_width) // (2 * bin_width)
    return np.sign(d) * mag


def _normalise(raw, bin_width, k_min, k_max, n_a, n_b, total_time) -> CorrelationHistogram:
    if n_a == 0 or n_b == 0 or total_time <= 0:
        return CorrelationHistogram(
            bin_width, k_min, k_max, raw, np.zeros(raw.shape), (0.0, 0.0), total_time, valid=False,
        )
    ra, rb = n_a / total_time, n_b / total_time
    g2 = raw / (ra * rb * total_time * bin_width * PS)
    return CorrelationHistogram(bin_width, k_min, k_max, raw, g2, (ra, rb), total_time)


def _span(a: np.ndarray, b: np.ndarray) -> float:
    """Acquisition span in s covered by the two streams."""
    ends = [x[-1] for x in (a, b) if x.size]
    starts = [x[0] for x in (a, b) if x.size]
    if not ends:
        return 0.0
    return (max(ends) - min(starts)) * PS


def correlate(
    stream_a: np.ndarray,
    stream_b: np.ndarray,
    bin_width: int = 1000,
    tau_range=100_000,
    total_time: float | None = None,
    chunk: int = 1 << 20,
) -> CorrelationHistogram:
    """Count all pairs (a, b) with delay t_b - t_a in range and normalise.

    Timestamps are integer ps and must be sorted. ``tau_range`` is either a
    half-width or a (lo, hi) pair in ps. ``total_time`` (s) defaults to the
    span between the first and last tag of either stream.

    Each tag of ``a`` is matched against the sorted window of ``b`` that can
    fall in range; the windows are walked offset by offset across a chunk
    of ``a`` at once, so the cost is linear in the number of pairs found.
    """
    a = np.ascontiguousarray(stream_a, dtype=np.int64)
    b = np.ascontiguousarray(stream_b, dtype=np.int64)
    bin_width = int(bin_width)
    if bin_width <= 0:
        raise ValueError("bin_width must be > 0")
    k_min, k_max = _bin_range(bin_width, tau_range)
    n_bins = k_max - k_min + 1
    raw = np.zeros(n_bins, dtype=np.int64)
    if total_time is None:
        total_time = _span(a, b)
    if a.size == 0 or b.size == 0:
        return _normalise(raw, bin_width, k_min, k_max, a.size, b.size, total_time)

    # search one bin beyond each end, then keep pairs by bin index
    d_lo = k_min * bin_width - bin_width
    d_hi = k_max * bin_width + bin_width
    for start in range(0, a.size, chunk):
        ac = a[start:start + chunk]
        first = np.searchsorted(b, ac + d_lo, side="left")
        last = np.searchsorted(b, ac + d_hi, side="right")
        width = last - first
        active = np.flatnonzero(width > 0)
        offset = 0
        while active.size:
            j = first[active] + offset
            d = b[j] - ac[active]
            k = bin_index(d, bin_width)
            ok = (k >= k_min) & (k <= k_max)
            raw += np.bincount(k[ok] - k_min, minlength=n_bins)
            offset += 1
            active = active[width[active] > offset]
    return _normalise(raw, bin_width, k_min, k_max, a.size, b.size, total_time)


def correlate_brute_force(stream_a, stream_b, bin_width: int = 1000, tau_range=100_000,
                          total_time: float | None = None) -> CorrelationHistogram:
    """O(N*M) reference: every pair, explicit edge tests per bin."""
    a = np.asarray(stream_a, dtype=np.int64)
    b = np.asarray(stream_b, dtype=np.int64)
    bin_width = int(bin_width)
    k_min, k_max = _bin_range(bin_width, tau_range)
    if total_time is None:
        total_time = _span(a, b)
    raw = np.zeros(k_max - k_min + 1, dtype=np.int64)
    half = bin_width / 2.0
    rows = max(1, (1 << 22) // max(b.size, 1))
    for start in range(0, a.size if b.size else 0, rows):
        d = (b[None, :] - a[start:start + rows, None]).ravel()
        d = d[(d >= k_min * bin_width - half) & (d <= k_max * bin_width + half)]
        for i, k in enumerate(range(k_min, k_max + 1)):
            c = k * bin_width
            if k > 0:
                inside = (d >= c - half) & (d < c + half)
            elif k < 0:
                inside = (d > c - half) & (d <= c + half)
            else:
                inside = (d > -half) & (d < half)
            raw[i] += int(np.count_nonzero(inside))
    return _normalise(raw, bin_width, k_min, k_max, a.size, b.size, total_time)


def correlate_stream(stream, bin_width: int = 1000, tau_range=100_000, oracle: bool = False):
    """Correlate channel 0 against channel 1 of a TimeTagStream."""
    fn = correlate_brute_force if oracle else correlate
    total = stream.duration_ps * PS if stream.duration_ps else None
    return fn(stream.times(0), stream.times(1), bin_width, tau_range, total_time=total)


@dataclass(frozen=True)
class G2Fit:
    tau1: float
    tau2: float
    a: float
    g2_zero: float
    g2_zero_err: float
    rho: float
    result: FitResult

    @property
    def status(self) -> str:
        return self.result.status

    def max_g2(self) -> float:
        """Peak of the fitted curve over positive delays."""
        span = max(t for t in (self.tau1, self.tau2) if np.isfinite(t))
        t = np.linspace(0.0, 20 * span, 20001)
        bunch = self.a * np.exp(-t / self.tau2) if np.isfinite(self.tau2) else 0.0
        curve = 1 + self.rho**2 * (bunch - (1 + self.a) * np.exp(-t / self.tau1))
        return float(np.max(curve))


def fit_g2(hist: CorrelationHistogram, model: str = "g2_three_level", p0=None) -> G2Fit:
    """Fit the background-mixed three-level form to a g2 histogram (delays in ns).

    The model is averaged over each bin. g2(0) = 1 - rho^2 and its error
    follows from the rho error.
    """
    if not hist.valid:
        raise ValueError("histogram has no valid normalisation")
    if hist.raw.size < 20:
        raise ValueError("need at least 20 bins")
    x = hist.tau_ns
    res = curve_fit(model, x, hist.g2, y_err=hist.g2_err, p0=p0,
                    options={"bin_width": hist.bin_width * 1e-3})
    rho = res["rho"]
    if model == "g2_three_level":
        tau1, tau2, a = res["tau1"], res["tau2"], res["a"]
    else:
        tau1, tau2, a = res["tau1"], np.inf, 0.0
    g0 = 1.0 - rho**2
    g0_err = 2 * rho * res.error("rho")
    return G2Fit(tau1, tau2, a, g0, g0_err, rho, res)


@dataclass(frozen=True)
class SingleEmitterVerdict:
    single: bool | None
    margin: float
    g2_zero: float
    g2_err: float

    @property
    def indeterminate(self) -> bool:
        return self.single is None


def single_emitter_test(g2_zero: float, g2_err: float = 0.0, k: float = 2.0) -> SingleEmitterVerdict:
    """True iff g2(0) + k * sigma stays below the 0.5 threshold."""
    if g2_zero is None or not np.isfinite(g2_zero) or not np.isfinite(g2_err):
        return SingleEmitterVerdict(None, np.nan, np.nan, np.nan)
    return SingleEmitterVerdict(bool(g2_zero + k * g2_err < 0.5), 0.5 - g2_zero, g2_zero, g2_err)


def histogram_single_emitter_test(hist: CorrelationHistogram, fitted: G2Fit | None = None,
                                  k: float = 2.0) -> SingleEmitterVerdict:
    """Single-emitter test from a fitted g2(0) if given, else from the raw central bin."""
    if fitted is not None and fitted.status == CONVERGED:
        return single_emitter_test(fitted.g2_zero, fitted.g2_zero_err, k)
    if not hist.valid:
        return SingleEmitterVerdict(None, np.nan, np.nan, np.nan)
    return single_emitter_test(*hist.central_bin(), k=k)


def write_csv(hist: CorrelationHistogram, path) -> None:
    """Columns tau_ps, raw, g2, g2_err."""
    with open(path, "w") as fh:
        fh.write("tau_ps,raw,g2,g2_err\n")
        for t, r, g, e in zip(hist.tau, hist.raw, hist.g2, hist.g2_err):
            fh.write(f"{int(t)},{int(r)},{g:.10g},{e:.10g}\n")


def read_csv(path) -> np.ndarray:
    return np.genfromtxt(path, delimiter=",", names=True)
