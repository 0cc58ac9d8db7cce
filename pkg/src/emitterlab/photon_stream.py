"""Kinetic Monte Carlo photon streams from a three-level emitter.

The emitter returns to the ground state after every photon, so the
emission process is a renewal process and its intervals can be drawn
exactly and in bulk. One interval from the ground state contains
``1 + F`` excitation cycles, where ``F`` counts cycles lost to the
shelving level; with ``M`` emissions per detected photon (geometric in the
detection efficiency) the interval between detections is

    Gamma(M + F, 1/k12) + Gamma(M + F, 1/(k21 + k23)) + Gamma(F, 1/k31)

with ``F ~ NegativeBinomial(M, k21/(k21 + k23))``. This is the same law
as stepping every state change and thinning each emission, at the cost
of one draw per detected photon.

Blinking into a long-lived dark state and photobleaching are modelled as
state-independent hazards: bleaching ends the emission at an exponential
time, and dark episodes alternate with bright ones, each bright episode
restarting from the ground state.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .kinetics import PowerModel, ThreeLevelRates, detected_rate, steady_state
from .rng import derive

PS = 1e-12
FLAG_POL = 1
FLAG_BACKGROUND = 2


@dataclass(frozen=True)
class StreamConfig:
    """Parameters of one simulated acquisition.

    Units: duration s, background_rate counts/s, jitter_sigma and dead_time
    ps, dark and bleach rates 1/s, power and bleach_threshold uW.
    ``dark_rate_per_uw`` adds a power-proportional dark-state entry rate.
    """

    rates: ThreeLevelRates
    power_model: PowerModel
    duration: float
    background_rate: float = 0.0
    jitter_sigma: float = 0.0
    dead_time: float = 0.0
    splitter_ratio: float = 0.5
    dark_rate: float = 0.0
    dark_rate_per_uw: float = 0.0
    dark_recovery: float = 0.0
    bleach_rate: float = 0.0
    bleach_threshold: float = 500.0
    power: float | None = None
    pol_angle: float | None = None
    seed: int = 0

    def __post_init__(self):
        if not self.duration > 0:
            raise ValueError("duration must be > 0")
        for name in ("background_rate", "jitter_sigma", "dead_time", "dark_rate",
                     "dark_rate_per_uw", "dark_recovery", "bleach_rate"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if not 0 <= self.splitter_ratio <= 1:
            raise ValueError("splitter_ratio must lie in [0, 1]")
        if self.power is not None and self.power < 0:
            raise ValueError("power must be >= 0")

    def at_power(self, power: float) -> "StreamConfig":
        """Copy with k12 = sigma * power."""
        return replace(self, rates=self.rates.with_pump(self.power_model.pump_rate(power)), power=power)

    @property
    def effective_dark_rate(self) -> float:
        return self.dark_rate + self.dark_rate_per_uw * (self.power or 0.0)

    @property
    def effective_bleach_rate(self) -> float:
        if self.power is not None and self.power < self.bleach_threshold:
            return 0.0
        return self.bleach_rate

    def echo(self) -> dict:
        d = asdict(self)
        d["rates"] = asdict(self.rates)
        d["power_model"] = asdict(self.power_model)
        return d


@dataclass(frozen=True)
class TimeTagStream:
    """Detector clicks sorted by (t, channel).

    ``t`` holds integer picoseconds since the start of the acquisition.
    """

    t: np.ndarray
    channel: np.ndarray
    flags: np.ndarray
    pol_angle: np.ndarray | None = None
    duration_ps: int = 0
    metadata: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return int(self.t.size)

    def times(self, channel: int) -> np.ndarray:
        return self.t[self.channel == channel]

    @property
    def truncated(self) -> bool:
        return bool(self.metadata.get("truncated", False))

    def count_rate(self) -> float:
        return len(self) / (self.duration_ps * PS) if self.duration_ps else 0.0


@dataclass(frozen=True)
class DecayHistogram:
    bin_width: float
    counts: np.ndarray
    pulse_period: float
    metadata: dict = field(default_factory=dict)

    @property
    def delays(self) -> np.ndarray:
        """Bin centres in ps."""
        return (np.arange(self.counts.size) + 0.5) * self.bin_width


# -- sampling helpers -----------------------------------------------------------


def _detection_intervals(rates: ThreeLevelRates, eta: float, n: int, rng) -> np.ndarray:
    """``n`` i.i.d. waiting times (s) from the ground state to the next detected photon."""
    k2 = rates.k21 + rates.k23
    m = rng.geometric(eta, size=n) if eta < 1 else np.ones(n, dtype=np.int64)
    if rates.k23 > 0:
        f = rng.negative_binomial(m, rates.k21 / k2)
    else:
        f = np.zeros(n, dtype=np.int64)
    cycles = (m + f).astype(float)
    t = rng.gamma(cycles, 1.0 / rates.k12) + rng.gamma(cycles, 1.0 / k2)
    if rates.k23 > 0:
        t += rng.gamma(f.astype(float), 1.0 / rates.k31)
    return t


def _renewal_times(rates, eta, start: float, length: float, rng, chunk=2_000_000) -> np.ndarray:
    """Detection times (s) in [start, start + length) for an emitter fresh in the ground state."""
    if rates.k12 == 0 or length <= 0:
        return np.empty(0)
    mean_rate = eta * rates.k21 * steady_state(rates)[1]
    parts = []
    t0 = 0.0
    while True:
        expect = mean_rate * (length - t0)
        n = int(min(max(expect * 1.05 + 5 * np.sqrt(expect) + 16, 16), chunk))
        times = t0 + np.cumsum(_detection_intervals(rates, eta, n, rng))
        if times[-1] >= length:
            parts.append(times[times < length])
            break
        parts.append(times)
        t0 = times[-1]
    return start + np.concatenate(parts)


def _bright_periods(cfg: StreamConfig, end: float, rng) -> tuple[np.ndarray, np.ndarray]:
    """(starts, lengths) of the bright episodes in [0, end)."""
    k_dark, k_rec = cfg.effective_dark_rate, cfg.dark_recovery
    if k_dark == 0:
        return np.array([0.0]), np.array([end])
    if k_rec == 0:
        return np.array([0.0]), np.array([min(rng.exponential(1.0 / k_dark), end)])
    cycle = 1.0 / k_dark + 1.0 / k_rec
    starts, lengths = [], []
    t = 0.0
    while t < end:
        n = int(1.1 * (end - t) / cycle + 5 * np.sqrt((end - t) / cycle) + 16)
        on = rng.exponential(1.0 / k_dark, size=n)
        off = rng.exponential(1.0 / k_rec, size=n)
        st = t + np.concatenate([[0.0], np.cumsum(on + off)[:-1]])
        keep = st < end
        starts.append(st[keep])
        lengths.append(np.minimum(on[keep], end - st[keep]))
        t = st[-1] + on[-1] + off[-1] if keep.all() else end
    return np.concatenate(starts), np.concatenate(lengths)


def _short_period_times(rates, eta, starts, lengths, rng) -> np.ndarray:
    """Renewal detections in many short episodes at once, one interval per round."""
    out = []
    active = np.arange(starts.size)
    elapsed = np.zeros(starts.size)
    while active.size:
        elapsed[active] += _detection_intervals(rates, eta, active.size, rng)
        alive = elapsed[active] < lengths[active]
        active = active[alive]
        out.append(starts[active] + elapsed[active])
    return np.sort(np.concatenate(out)) if out else np.empty(0)


def _episode_times(cfg: StreamConfig, end: float, rng_dark, rng) -> np.ndarray:
    eta = cfg.power_model.eta_det
    starts, lengths = _bright_periods(cfg, end, rng_dark)
    if cfg.rates.k12 == 0:
        return np.empty(0)
    mean_rate = eta * cfg.rates.k21 * steady_state(cfg.rates)[1]
    long = mean_rate * lengths > 64
    parts = [_renewal_times(cfg.rates, eta, a, b, rng) for a, b in zip(starts[long], lengths[long])]
    if (~long).any():
        parts.append(_short_period_times(cfg.rates, eta, starts[~long], lengths[~long], rng))
    return np.sort(np.concatenate(parts)) if parts else np.empty(0)


def apply_dead_time(t: np.ndarray, dead_time: float) -> np.ndarray:
    """Boolean mask of clicks a non-paralysable detector registers.

    A click is kept when it arrives at least ``dead_time`` after the last
    kept click. ``t`` must be sorted.
    """
    n = t.size
    keep = np.ones(n, dtype=bool)
    if n < 2 or dead_time <= 0:
        return keep
    close = np.empty(n, dtype=bool)
    close[0] = False
    close[1:] = np.diff(t) < dead_time
    if not close.any():
        return keep
    # a click far from its predecessor is always kept; only runs of close clicks need a scan
    idx = np.arange(n)
    last_free = np.maximum.accumulate(np.where(~close, idx, -1))
    last_kept_t = None
    last_kept_i = -1
    for i in np.flatnonzero(close):
        anchor = last_free[i]
        if anchor > last_kept_i:
            last_kept_i, last_kept_t = anchor, t[anchor]
        if t[i] - last_kept_t >= dead_time:
            last_kept_i, last_kept_t = i, t[i]
        else:
            keep[i] = False
    return keep


def _finalize(t_s, channel, flags, cfg: StreamConfig, rng, metadata) -> TimeTagStream:
    t = np.rint(np.asarray(t_s) / PS).astype(np.int64)
    if cfg.jitter_sigma > 0 and t.size:
        t = t + np.rint(rng.normal(0.0, cfg.jitter_sigma, size=t.size)).astype(np.int64)
        np.maximum(t, 0, out=t)
    order = np.lexsort((channel, t))
    t, channel, flags = t[order], channel[order], flags[order]
    if cfg.dead_time > 0:
        keep = np.ones(t.size, dtype=bool)
        for ch in (0, 1):
            sel = np.flatnonzero(channel == ch)
            keep[sel] = apply_dead_time(t[sel], cfg.dead_time)
        t, channel, flags = t[keep], channel[keep], flags[keep]
    pol = None
    if cfg.pol_angle is not None:
        pol = np.full(t.size, float(cfg.pol_angle) % 360.0)
        flags = flags | FLAG_POL
    metadata["n_records"] = int(t.size)
    return TimeTagStream(
        t=t, channel=channel.astype(np.uint8), flags=flags.astype(np.uint8), pol_angle=pol,
        duration_ps=int(round(cfg.duration / PS)), metadata=metadata,
    )


def simulate_stream(cfg: StreamConfig) -> TimeTagStream:
    """Simulate an HBT acquisition of the configured emitter.

    Returns both detector channels merged and sorted. When the emitter
    bleaches before ``duration`` the stream continues with background only
    and ``metadata["truncated"]`` is set.
    """
    end = cfg.duration
    meta: dict = {"seed": cfg.seed, "truncated": False}
    k_bleach = cfg.effective_bleach_rate
    if k_bleach > 0:
        t_bleach = derive(cfg.seed, "stream", "bleach").exponential(1.0 / k_bleach)
        if t_bleach < cfg.duration:
            end = t_bleach
            meta["truncated"] = True
            meta["bleach_time_s"] = float(t_bleach)

    sig = _episode_times(cfg, end, derive(cfg.seed, "stream", "dark"), derive(cfg.seed, "stream", "emitter"))

    rng_bg = derive(cfg.seed, "stream", "background")
    n_bg = rng_bg.poisson(cfg.background_rate * cfg.duration) if cfg.background_rate > 0 else 0
    bg = rng_bg.uniform(0.0, cfg.duration, size=n_bg)

    rng_split = derive(cfg.seed, "stream", "splitter")
    times = np.concatenate([sig, bg])
    channel = (rng_split.random(times.size) >= cfg.splitter_ratio).astype(np.uint8)
    flags = np.concatenate([np.zeros(sig.size, np.uint8), np.full(bg.size, FLAG_BACKGROUND, np.uint8)])
    meta["n_signal"] = int(sig.size)
    meta["n_background"] = int(bg.size)
    return _finalize(times, channel, flags, cfg, derive(cfg.seed, "stream", "jitter"), meta)


def expected_rate(cfg: StreamConfig) -> float:
    """Mean detected rate (counts/s) without dark state or bleaching."""
    return detected_rate(cfg.rates, cfg.power_model, cfg.background_rate)


def simulate_pulsed(
    cfg: StreamConfig,
    pulse_period: float,
    pickup_prob: float = 1.0,
    bin_width: float = 50.0,
) -> DecayHistogram:
    """TCSPC decay histogram under pulsed excitation.

    ``pulse_period`` is in ns and ``bin_width`` in ps. Each pulse finding
    the emitter in the ground state excites it with ``pickup_prob``; the
    excited state decays at k21 + k23 and a shelved emitter ignores pulses
    until it returns. Background clicks are uniform over the period.
    """
    if not 0 < pickup_prob <= 1:
        raise ValueError("pickup_prob must lie in (0, 1]")
    period_s = pulse_period * 1e-9
    lifetime_s = 1.0 / (cfg.rates.k21 + cfg.rates.k23)
    if period_s < 3 * lifetime_s:
        raise ValueError("pulse period must exceed several excited-state lifetimes")
    n_pulses = int(cfg.duration / period_s)
    rng = derive(cfg.seed, "pulsed", "emitter")
    k2 = cfg.rates.k21 + cfg.rates.k23
    p_shelve = cfg.rates.k23 / k2

    pulse_idx, delays_s = [], []
    n_exc = 0
    n_emit = 0
    next_pulse = int(rng.geometric(pickup_prob)) - 1
    chunk = 1_000_000
    while next_pulse < n_pulses:
        decay = rng.exponential(1.0 / k2, size=chunk)
        shelved = rng.random(chunk) < p_shelve if p_shelve > 0 else np.zeros(chunk, bool)
        busy = decay.copy()
        if p_shelve > 0:
            busy[shelved] += rng.exponential(1.0 / cfg.rates.k31, size=int(shelved.sum()))
        gap = np.floor(busy / period_s).astype(np.int64) + rng.geometric(pickup_prob, size=chunk)
        idx = next_pulse + np.concatenate([[0], np.cumsum(gap[:-1])])
        inside = idx < n_pulses
        idx, decay, shelved = idx[inside], decay[inside], shelved[inside]
        n_exc += idx.size
        emitted = ~shelved
        n_emit += int(emitted.sum())
        detected = emitted & (rng.random(idx.size) < cfg.power_model.eta_det)
        pulse_idx.append(idx[detected])
        delays_s.append(decay[detected])
        if not inside.all():
            break
        next_pulse = int(idx[-1] + gap[inside.size - 1])
    pulse_idx = np.concatenate(pulse_idx) if pulse_idx else np.empty(0, np.int64)
    delays_s = np.concatenate(delays_s) if delays_s else np.empty(0)
    # one excitation per pulse at most, so at most one photon per pulse
    assert np.all(np.diff(pulse_idx) > 0)

    period_ps = pulse_period * 1e3
    delay_ps = delays_s / PS
    rng_j = derive(cfg.seed, "pulsed", "jitter")
    if cfg.jitter_sigma > 0:
        delay_ps = delay_ps + rng_j.normal(0.0, cfg.jitter_sigma, size=delay_ps.size)
    rng_bg = derive(cfg.seed, "pulsed", "background")
    n_bg = rng_bg.poisson(cfg.background_rate * cfg.duration) if cfg.background_rate > 0 else 0
    delay_ps = np.concatenate([delay_ps, rng_bg.uniform(0.0, period_ps, size=n_bg)])
    delay_ps = np.mod(delay_ps, period_ps)
    n_bins = int(np.ceil(period_ps / bin_width))
    counts = np.bincount((delay_ps // bin_width).astype(np.int64), minlength=n_bins)[:n_bins]
    meta = {
        "seed": cfg.seed, "n_pulses": n_pulses, "n_excitations": n_exc,
        "n_emitted": n_emit, "n_detected": int(pulse_idx.size), "n_background": int(n_bg),
    }
    return DecayHistogram(bin_width=bin_width, counts=counts, pulse_period=pulse_period, metadata=meta)


def saturation_series(cfg: StreamConfig, powers, dwell: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Mean detected rate at each excitation power (uW).

    Returns (powers, rates, standard errors), rates in counts/s. Each
    power point uses its own sub-stream of ``cfg.seed``.
    """
    powers = np.asarray(powers, dtype=float)
    if np.any(powers <= 0):
        raise ValueError("powers must be > 0")
    rates, errs = [], []
    for i, p in enumerate(powers):
        sub = replace(cfg.at_power(p), duration=dwell, seed=int(derive(cfg.seed, "saturation", i).integers(2**63)))
        n = len(simulate_stream(sub))
        rates.append(n / dwell)
        errs.append(np.sqrt(max(n, 1)) / dwell)
    return powers, np.array(rates), np.array(errs)


def timetrace(stream: TimeTagStream, bin_s: float) -> tuple[np.ndarray, np.ndarray]:
    """Counts per time bin over the whole acquisition; returns (bin starts in s, counts)."""
    if not bin_s > 0:
        raise ValueError("bin must be > 0")
    bin_ps = bin_s / PS
    n_bins = max(int(np.floor(stream.duration_ps / bin_ps)), 1)
    idx = (stream.t // bin_ps).astype(np.int64)
    counts = np.bincount(idx[idx < n_bins], minlength=n_bins)
    return np.arange(n_bins) * bin_s, counts
