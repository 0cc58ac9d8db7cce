"""Acceptance suite: one PASS/FAIL line per criterion at the stated tolerances.

Run with ``pytest tests/test_acceptance.py -v -s`` or ``python tests/test_acceptance.py``.
Each check returns (passed, detail); the pytest wrapper prints the line and
then asserts, so a failing criterion shows both the numbers and the failure.
"""

from __future__ import annotations

import hashlib
import sys
import tempfile
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from emitterlab import analysis, dipole, scan, spectra
from emitterlab.cli import main as cli_main
from emitterlab.config import build
from emitterlab.correlator import correlate, correlate_brute_force, correlate_stream, fit_g2
from emitterlab.correlator import histogram_single_emitter_test
from emitterlab.fitting import REGISTRY, curve_fit, get_model, numeric_jacobian
from emitterlab.kinetics import PowerModel, ThreeLevelRates, analytic_g2
from emitterlab.photon_stream import StreamConfig, saturation_series, simulate_pulsed, simulate_stream
from emitterlab.presets import PRESETS, get_preset

SEED = 0


def _line(n: int, ok: bool, detail: str) -> str:
    return f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"


# -- 1, 2: fig1e antibunching and bunching ----------------------------------------


def _fig1e(k23=None, seed=SEED):
    cfg = build(get_preset("fig1e")["config"], overrides={"seed": seed})
    if k23 is not None:
        cfg.simulate.emitter.k23 = k23
        cfg.simulate.emitter.k31 = 0.0 if k23 == 0 else cfg.simulate.emitter.k31
    t0 = time.perf_counter()
    stream = simulate_stream(cfg.simulate.stream_config(seed))
    hist = correlate_stream(stream, cfg.g2.bin_width, cfg.g2.tau_range)
    fit = fit_g2(hist)
    return stream, hist, fit, time.perf_counter() - t0


def check_1():
    stream, hist, fit, dt = _fig1e()
    central, _ = hist.central_bin()
    verdict = histogram_single_emitter_test(hist, fit)
    ok = (len(stream) >= 1_000_000 and abs(fit.g2_zero - 0.12) <= 0.03 and central < 0.5
          and verdict.single is True and dt <= 60)
    return ok, (f"g2(0) = {fit.g2_zero:.3f} +/- {fit.g2_zero_err:.3f} (target 0.12 +/- 0.03), raw central bin "
                f"{central:.3f}, {len(stream)} photons, {dt:.1f} s")


def check_2():
    _, _, fit, _ = _fig1e()
    _, hist0, fit0, _ = _fig1e(k23=0.0)
    # empirical excess over delays between 20 and 200 ns, averaged over 10 ns blocks
    tau = np.abs(hist0.tau_ns)
    mid = (tau >= 20) & (tau <= 200)
    blocks = hist0.g2[mid][: mid.sum() // 10 * 10].reshape(-1, 10).mean(axis=1)
    ok = fit.max_g2() > 1.02 and fit0.max_g2() <= 1.02 and blocks.max() <= 1.02
    return ok, (f"max g2 with shelving {fit.max_g2():.3f} (> 1.02); k23 = 0: fitted max {fit0.max_g2():.4f}, "
                f"largest 10 ns block mean {blocks.max():.4f}")


# -- 3: Monte Carlo vs analytic ------------------------------------------------------


def check_3():
    rates = ThreeLevelRates(1e8, 1e8, 5e6, 2e7)
    pm = PowerModel(1e7, 0.1)
    from emitterlab.kinetics import detected_rate

    duration = 1e7 / detected_rate(rates, pm)
    s = simulate_stream(StreamConfig(rates, pm, duration, seed=SEED))
    bw = 4000
    h = correlate_stream(s, bw, (-25 * bw, 24 * bw))
    # expected raw counts: rate_a * rate_b * T * integral of g2 over each bin
    sub = np.linspace(-0.5, 0.5, 401)
    expected = np.array([np.trapezoid(analytic_g2(rates, (k * bw + sub * bw) * 1e-3), sub) for k in
                         range(h.k_min, h.k_max + 1)]) / h.norm_factor
    chi2 = np.sum((h.raw - expected) ** 2 / expected) / h.raw.size
    return chi2 < 2, f"chi2/bin = {chi2:.3f} over {h.raw.size} bins of 4 ns, {len(s)} photons (< 2)"


# -- 4: correlator correctness and speed -----------------------------------------------


def check_4():
    rng = np.random.default_rng(SEED)
    mismatches = 0
    for _ in range(200):
        n = int(rng.integers(0, 2001))
        na = int(rng.integers(0, n + 1))
        a = np.sort(rng.integers(0, 10**6, na))
        b = np.sort(rng.integers(0, 10**6, n - na))
        bw = int(rng.choice([1, 10, 100, 1000]))
        span = int(rng.integers(1, 50)) * bw
        mismatches += not np.array_equal(correlate(a, b, bw, span).raw, correlate_brute_force(a, b, bw, span).raw)
    n = 5_000_000
    a = np.sort(rng.integers(0, 10**12, n))
    b = np.sort(rng.integers(0, 10**12, n))
    t0 = time.perf_counter()
    correlate(a, b, 1000, 500_000)
    dt = time.perf_counter() - t0
    return mismatches == 0 and dt <= 10, (f"{200 - mismatches}/200 streams bin-exact; 1e7 tags over +/-500 ns "
                                          f"in {dt:.2f} s (<= 10 s)")


# -- 5: lifetimes ------------------------------------------------------------------------


def _lifetime(tau, photons, seed):
    sc = StreamConfig(ThreeLevelRates(0.0, 1e9 / tau), PowerModel(1.0, 0.1),
                      duration=photons / 0.1 * 500e-9, seed=seed)
    return analysis.fit_decay(simulate_pulsed(sc, 500.0, bin_width=50.0))


def check_5():
    quoted = {30.8: 0.3, 12.7: 0.1, 7.1: 0.1}
    parts, ok = [], True
    for i, (tau, tol) in enumerate(quoted.items()):
        f = _lifetime(tau, 1_000_000, seed=100 + i)
        ok &= abs(f.tau - tau) <= tol
        parts.append(f"{f.tau:.2f}/{tau}")
    sweep = np.array([3.0, 5.0, 8.0, 12.0, 16.0, 20.0, 25.0, 30.0])
    pulls = []
    for i, tau in enumerate(sweep):
        f = _lifetime(tau, 1_000_000, seed=200 + i)
        pulls.append((f.tau - tau) / f.tau_err)
    pulls = np.array(pulls)
    ok &= bool(np.all(np.abs(pulls) < 2))
    worst = int(np.argmax(np.abs(pulls)))
    return ok, (f"quoted set {', '.join(parts)} ns; sweep 3-30 ns max |pull| {abs(pulls[worst]):.2f} at "
                f"{sweep[worst]:g} ns (< 2), pull sd {np.std(pulls):.2f}")


# -- 6: saturation ---------------------------------------------------------------------


def check_6():
    cfg = build(get_preset("fig4a")["config"], overrides={"seed": SEED})
    s = cfg.saturation
    base = StreamConfig(s.emitter.rates(), s.emitter.power_model(), duration=s.dwell, seed=11)
    p, r, e = saturation_series(base, s.powers, s.dwell)
    f = analysis.fit_saturation(p, r, e)
    dark = replace(base, dark_rate_per_uw=s.dark_rate_per_uw, dark_recovery=s.dark_recovery, seed=12)
    _, rd, ed = saturation_series(dark, s.powers, s.dwell)
    infl = analysis.residual_inflation(analysis.fit_saturation(p, rd, ed), f)
    ok = abs(f.p_sat / 2.0 - 1) <= 0.10 and abs(f.i_sat / 6000.0 - 1) <= 0.05 and infl >= 5
    return ok, f"P_sat {f.p_sat:.3f} uW (2 +/- 10%), I_sat {f.i_sat:.0f} /s (6000 +/- 5%), dark inflation {infl:.1f}x (>= 5)"


# -- 7: polarization ---------------------------------------------------------------------


def check_7():
    angles = np.arange(0, 360, 10.0)
    vis = [dipole.fit_polarization(dipole.dipole_diagram(a, 1000.0, angles, 0.97)).visibility for a in dipole.ALL_AXES]
    n = 100_000
    h = dipole.orientation_histogram(n, seed=SEED)
    z = abs(h[0] - n / 2) / np.sqrt(n / 4)
    ens = dipole.ensemble_diagram({a: 1.0 for a in dipole.AXES}, 1000.0, angles).visibility()
    ok = min(vis) > 0.96 and z < 4 and ens < 0.05
    return ok, f"min single visibility {min(vis):.3f} (> 0.96); 0/90 split {h[0]}/{h[90]} ({z:.2f} sigma < 4); ensemble {ens:.1e} (< 0.05)"


# -- 8: spectra --------------------------------------------------------------------------


def check_8():
    model = spectra.SpectrumModel()
    clean = spectra.synth_spectrum(model)
    noisy = spectra.add_poisson_noise(clean, seed=SEED)
    dw = spectra.debye_waller(noisy).fraction
    e = clean.energies
    step = e[1] - e[0]
    lvm = e[np.argmax(clean.components["lvm"])]
    f = spectra.fit_zpl(noisy, (model.e_zpl - 5e-4, model.e_zpl + 5e-4))
    z = spectra.sample_inhomogeneous_zpl(27, 1.0, seed=SEED)
    span = np.ptp(z) * 1e3
    ok = abs(dw - 0.40) <= 0.01 and abs(lvm - 0.948) <= step and f.fwhm >= 0.10 and span <= 1.0
    return ok, f"DW {dw:.4f} (0.40 +/- 0.01), LVM {lvm:.5f} eV (0.948 +/- {step * 1e3:.2f} meV), fwhm {f.fwhm:.4f} meV (>= 0.10), 27 ZPLs span {span:.3f} meV (<= 1)"


# -- 9: temperature laws ---------------------------------------------------------------


def check_9():
    cfg = build(get_preset("fig3")["config"])
    sp = cfg.spectrum
    temps = np.asarray(sp.temperatures)
    law = spectra.TemperatureLaw(tuple(sp.shift_coeffs), tuple(sp.width_coeffs), t_max=float(temps.max()))
    t = np.linspace(8, 50, 421)
    de, g = law.evaluate(t)
    mono = bool(np.all(np.diff(de) < 0) and np.all(np.diff(g) > 0))
    model = replace(spectra.SpectrumModel(), temperature_law=law)
    series = spectra.temperature_series(model, temps, sp.total_counts, seed=SEED, half_window=sp.zpl_half_window)
    pulls = spectra.law_pulls(series, model)
    ok = mono and np.all(np.abs(pulls) < 2)
    return ok, f"monotone on 8-50 K: {mono}; {pulls.size} coefficients, max |pull| {np.max(np.abs(pulls)):.2f} (< 2)"


# -- 10: fitting engine -----------------------------------------------------------------


_JAC_POINTS = {
    "linear": (np.linspace(0, 10, 50), [1.5, -2.0], {}),
    "exponential": (np.linspace(0, 50, 101), [1e3, 12.7, 5.0], {}),
    "lorentzian": (np.linspace(-2, 2, 201), [0.1, 0.3, 1e3, 10.0], {}),
    "malus": (np.arange(0, 360, 10.0), [30.0, 1e3, 0.9], {}),
    "saturation": (np.geomspace(0.1, 50, 12), [6000.0, 2.0], {}),
    "g2_three_level": (np.arange(-100, 101, 1.0), [5.0, 50.0, 0.4, 0.94], {"bin_width": 1.0}),
    "g2_two_level": (np.arange(-100, 101, 1.0), [5.0, 0.94], {"bin_width": 1.0}),
    "gaussian2d": (np.stack(np.meshgrid(np.linspace(-2, 2, 21), np.linspace(-2, 2, 21)), -1).reshape(-1, 2),
                   [0.1, -0.2, 0.31, 500.0, 20.0], {}),
}


def check_10():
    worst = {}
    for name, model in REGISTRY.items():
        x, p, opts = _JAC_POINTS[name]
        p = np.asarray(p, float)
        ja = model.jacobian(x, p, **opts)
        jn = numeric_jacobian(lambda q: model(x, q, **opts), p)
        scale = np.maximum(np.max(np.abs(ja), axis=0), 1e-12)
        worst[name] = float(np.max(np.abs(ja - jn) / scale))
    rng = np.random.default_rng(SEED)
    x = np.arange(-60, 61, 1.0)
    big = get_model("g2_three_level")
    violations = 0
    for _ in range(100):
        p = [rng.uniform(2, 8), rng.uniform(20, 80), rng.uniform(0, 1), rng.uniform(0.5, 1)]
        y = rng.poisson(2000 * big(x, p, bin_width=1.0)) / 2000
        err = np.sqrt(np.maximum(y * 2000, 1)) / 2000
        small = curve_fit("g2_two_level", x, y, err, options={"bin_width": 1.0})
        starts = (None, [small["tau1"], 10 * small["tau1"], 0.0, small["rho"]])
        full = min(curve_fit("g2_three_level", x, y, err, p0=s, options={"bin_width": 1.0}).chi2 for s in starts)
        violations += not full <= small.chi2 * (1 + 1e-9)
    w = max(worst.values())
    ok = w < 1e-5 and violations == 0
    return ok, f"{len(worst)} models, max Jacobian rel. error {w:.1e} (< 1e-5); nested-cost violations {violations}/100"


# -- 11: scan ---------------------------------------------------------------------------


def check_11():
    exact = 0
    for s in range(100):
        fld = scan.dozen_field(seed=s)
        exact += len(scan.detect_hotspots(scan.simulate_scan(fld, seed=s))) == 12
    flat = scan.EmitterField((), (100.0, 100.0), 5e3)
    fp = np.mean([len(scan.detect_hotspots(scan.simulate_scan(flat, seed=1000 + s))) for s in range(100)])
    ok = exact >= 95 and fp < 1
    return ok, f"exactly 12 hotspots in {exact}/100 seeds (>= 95); flat-map false positives {fp:.2f} per map over 100 seeds (< 1)"


# -- 12: reproducibility ---------------------------------------------------------------


def _digest(folder: Path) -> dict:
    return {p.relative_to(folder).as_posix(): hashlib.sha256(p.read_bytes()).hexdigest()
            for p in sorted(folder.rglob("*")) if p.is_file()}


def check_12():
    differing = []
    with tempfile.TemporaryDirectory() as tmp:
        for name in sorted(PRESETS):
            runs = []
            for k in ("a", "b"):
                out = Path(tmp) / name / k
                code = cli_main(["reproduce", name, "--out", str(out), "--seed", str(SEED)])
                runs.append((code, _digest(out)))
            if runs[0][0] != 0 or runs[0] != runs[1] or not runs[0][1]:
                differing.append(name)
    return not differing, f"{len(PRESETS) - len(differing)}/{len(PRESETS)} presets byte-identical across two runs"


CHECKS = {i: globals()[f"check_{i}"] for i in range(1, 13)}


@pytest.mark.acceptance
@pytest.mark.parametrize("n", sorted(CHECKS))
def test_criterion(n, capsys):
    ok, detail = CHECKS[n]()
    with capsys.disabled():
        print("\n" + _line(n, ok, detail))
    assert ok, detail


if __name__ == "__main__":
    failed = 0
    for n, fn in CHECKS.items():
        ok, detail = fn()
        failed += not ok
        print(_line(n, ok, detail), flush=True)
    sys.exit(1 if failed else 0)
