"""Command-line front end: ``emitterlab <command> [options]``.

Exit codes: 0 success, 2 configuration error, 3 malformed or missing
input, 4 a fit did not converge (outputs are still written).
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import analysis, correlator, dipole, scan, spectra
from .config import ConfigError, RunConfig, build, dump, load_yaml
from .csvio import InputError, read_columns, read_matrix
from .fitting import CONVERGED, DegenerateDataError
from .kinetics import PowerModel, ThreeLevelRates
from .photon_stream import DecayHistogram, StreamConfig, expected_rate, saturation_series, simulate_pulsed
from .photon_stream import simulate_stream, timetrace
from .presets import PRESETS, get_preset
from .rng import as_generator, derive
from .tagfile import read_tags, write_tags

EXIT_OK, EXIT_CONFIG, EXIT_INPUT, EXIT_FIT = 0, 2, 3, 4
COMMANDS = ("simulate", "g2", "lifetime", "saturation", "polarization", "spectrum", "scan")


def _sub_seed(seed: int, *names) -> int:
    return int(derive(seed, *names).integers(2**63))


def _input_path(name: str, out: Path) -> Path:
    p = Path(name)
    if p.is_absolute() or p.exists():
        return p
    return out / p


def _write_report(out: Path, command: str, lines: list[str]) -> None:
    text = "\n".join(lines) + "\n"
    (out / f"{command}_report.txt").write_text(text)
    sys.stdout.write(text)


def _fmt(v: float, e: float | None = None, unit: str = "") -> str:
    unit = f" {unit}" if unit else ""
    return f"{v:.6g}{unit}" if e is None else f"{v:.6g} +/- {e:.2g}{unit}"


# -- commands --------------------------------------------------------------------


def cmd_simulate(cfg: RunConfig, out: Path) -> bool:
    sc = cfg.simulate.stream_config(cfg.seed)
    stream = simulate_stream(sc)
    path = out / cfg.simulate.output
    write_tags(stream, path, extra={"config": sc.echo(), "expected_rate": expected_rate(sc)})
    lines = [
        "# simulate",
        f"file: {path.name}",
        f"records: {len(stream)}",
        f"duration: {_fmt(sc.duration, unit='s')}",
        f"background rate: {_fmt(sc.background_rate, unit='counts/s')}",
        f"expected rate: {_fmt(expected_rate(sc), unit='counts/s')}",
        f"measured rate: {_fmt(stream.count_rate(), unit='counts/s')}",
        f"truncated: {stream.truncated}",
    ]
    _write_report(out, "simulate", lines)
    return True


def cmd_g2(cfg: RunConfig, out: Path) -> bool:
    g = cfg.g2
    if not g.input:
        raise ConfigError("g2 needs an input time-tag file (g2.input or positional argument)")
    stream = read_tags(_input_path(g.input, out))
    hist = correlator.correlate_stream(stream, g.bin_width, g.tau_range, oracle=g.oracle)
    correlator.write_csv(hist, out / "g2.csv")
    lines = [
        "# g2",
        f"tags: {len(stream)}",
        f"correlator: {'brute-force' if g.oracle else 'windowed'}",
        f"bins: {hist.raw.size} x {g.bin_width} ps",
        f"valid: {hist.valid}",
    ]
    if not hist.valid:
        lines.append("g2 undefined: a channel is empty")
        _write_report(out, "g2", lines)
        return True
    c0, c0_err = hist.central_bin()
    lines.append(f"central bin g2: {_fmt(c0, c0_err)}")
    ok = True
    fitted = None
    if g.fit:
        try:
            fitted = correlator.fit_g2(hist, g.model)
        except (DegenerateDataError, ValueError) as exc:
            lines.append(f"fit: failed ({exc})")
            ok = False
        if fitted is not None:
            lines.append(fitted.result.report())
            lines.append(f"g2(0): {_fmt(fitted.g2_zero, fitted.g2_zero_err)}")
            lines.append(f"max g2: {_fmt(fitted.max_g2())}")
            ok = fitted.status == CONVERGED
    verdict = correlator.histogram_single_emitter_test(hist, fitted, k=g.k_sigma)
    lines.append(f"single emitter (k={g.k_sigma:g}): {verdict.single} margin {_fmt(verdict.margin)}")
    _write_report(out, "g2", lines)
    return ok


def _decay_from_csv(path: Path) -> DecayHistogram:
    cols = read_columns(path, ("delay_ps", "counts"))
    d = cols["delay_ps"]
    if d.size < 5:
        raise InputError(f"{path}: fewer than 5 rows", 0)
    width = float(np.median(np.diff(d)))
    return DecayHistogram(width, cols["counts"], d.size * width * 1e-3)


def _write_decay(hist: DecayHistogram, path: Path) -> None:
    with open(path, "w") as fh:
        fh.write("delay_ps,counts\n")
        for t, c in zip(hist.delays, hist.counts):
            fh.write(f"{t:.3f},{int(c)}\n")


def cmd_lifetime(cfg: RunConfig, out: Path) -> bool:
    lt = cfg.lifetime
    lines = ["# lifetime"]
    ok = True
    if lt.input:
        hists = [("input", _decay_from_csv(_input_path(lt.input, out)))]
    else:
        hists = []
        for i, tau in enumerate(lt.lifetimes):
            rates = ThreeLevelRates(0.0, 1e9 / tau)
            pulses = lt.photons / (lt.eta_det * lt.pickup_prob)
            sc = StreamConfig(
                rates, PowerModel(1.0, lt.eta_det), duration=pulses * lt.pulse_period * 1e-9,
                background_rate=lt.background_rate, jitter_sigma=lt.jitter_sigma,
                seed=_sub_seed(cfg.seed, "lifetime", i),
            )
            h = simulate_pulsed(sc, lt.pulse_period, lt.pickup_prob, lt.bin_width)
            _write_decay(h, out / f"decay_{i}.csv")
            hists.append((f"{tau:g} ns generator", h))
    for label, h in hists:
        f = analysis.fit_decay(h, lt.window)
        ok &= f.status == CONVERGED
        lines.append(f"tau [{label}]: {_fmt(f.tau, f.tau_err, 'ns')} ({f.status}, {int(np.sum(h.counts))} counts)")
    _write_report(out, "lifetime", lines)
    return ok


def cmd_saturation(cfg: RunConfig, out: Path) -> bool:
    s = cfg.saturation
    lines = ["# saturation"]
    if s.input:
        cols = read_columns(_input_path(s.input, out), ("power_uw", "rate"))
        err = cols.get("rate_err")
        f = analysis.fit_saturation(cols["power_uw"], cols["rate"], err)
        lines += [f"I_sat: {_fmt(f.i_sat, f.i_sat_err, 'counts/s')}", f"P_sat: {_fmt(f.p_sat, f.p_sat_err, 'uW')}",
                  f"reduced chi2: {_fmt(f.redchi)}", f"status: {f.status}"]
        _write_report(out, "saturation", lines)
        return f.status == CONVERGED
    base = StreamConfig(s.emitter.rates(), s.emitter.power_model(), duration=s.dwell,
                        background_rate=s.background_rate, seed=_sub_seed(cfg.seed, "saturation", "standard"))
    p, r, e = saturation_series(base, s.powers, s.dwell)
    f = analysis.fit_saturation(p, r, e)
    cols = {"power_uw": p, "rate": r, "rate_err": e}
    lines += [f"I_sat: {_fmt(f.i_sat, f.i_sat_err, 'counts/s')}", f"P_sat: {_fmt(f.p_sat, f.p_sat_err, 'uW')}",
              f"reduced chi2: {_fmt(f.redchi)}", f"status: {f.status}"]
    ok = f.status == CONVERGED
    if s.dark_rate_per_uw > 0:
        dark = replace(base, dark_rate_per_uw=s.dark_rate_per_uw, dark_recovery=s.dark_recovery,
                       seed=_sub_seed(cfg.seed, "saturation", "dark"))
        _, rd, ed = saturation_series(dark, s.powers, s.dwell)
        fd = analysis.fit_saturation(p, rd, ed)
        infl = analysis.residual_inflation(fd, f)
        cols.update(rate_dark=rd, rate_dark_err=ed)
        lines += [
            "dark-state curve:",
            f"  I_sat: {_fmt(fd.i_sat, fd.i_sat_err, 'counts/s')}", f"  P_sat: {_fmt(fd.p_sat, fd.p_sat_err, 'uW')}",
            f"  reduced chi2: {_fmt(fd.redchi)}",
            f"  residual inflation: {_fmt(infl)} (anomalous: {infl >= s.inflation_threshold})",
        ]
    with open(out / "saturation.csv", "w") as fh:
        fh.write(",".join(cols) + "\n")
        for row in zip(*cols.values()):
            fh.write(",".join(f"{v:.10g}" for v in row) + "\n")
    if s.trace_power is not None:
        tc = replace(base.at_power(s.trace_power), duration=s.trace_duration,
                     seed=_sub_seed(cfg.seed, "saturation", "trace"))
        starts, counts = timetrace(simulate_stream(tc), s.trace_bin)
        with open(out / "timetrace.csv", "w") as fh:
            fh.write("t_s,counts\n")
            for t, c in zip(starts, counts):
                fh.write(f"{t:.6f},{int(c)}\n")
        lines.append(f"time trace at {s.trace_power:g} uW: mean {_fmt(np.mean(counts))} counts/bin, "
                     f"sd {_fmt(np.std(counts))}")
    _write_report(out, "saturation", lines)
    return ok


def cmd_polarization(cfg: RunConfig, out: Path) -> bool:
    pc = cfg.polarization
    lines = ["# polarization"]
    ok = True
    if pc.input:
        cols = read_columns(_input_path(pc.input, out), ("angle_deg", "intensity"))
        fits = [("input", dipole.PolarizationDiagram(cols["angle_deg"], cols["intensity"]))]
    else:
        angles = np.arange(0.0, 360.0, pc.angle_step)
        fits = []
        for name in pc.axes:
            d = dipole.dipole_diagram(dipole.DipoleAxis(name), pc.i_max, angles, pc.visibility)
            if pc.noise:
                rng = as_generator(cfg.seed, "polarization", name)
                d = dipole.PolarizationDiagram(angles, rng.poisson(d.intensities).astype(float))
            fits.append((name, d))
        fits.append(("ensemble", dipole.ensemble_diagram({a: 1.0 for a in dipole.AXES}, pc.i_max / 4, angles)))
        hist = dipole.orientation_histogram(pc.n_emitters, cfg.seed, pc.stratified)
        with open(out / "orientation.csv", "w") as fh:
            fh.write("angle_deg,count\n")
            for k, v in hist.items():
                fh.write(f"{k},{v}\n")
        lines.append(f"orientations of {pc.n_emitters} emitters: 0 deg {hist[0]}, 90 deg {hist[90]}")
    for label, d in fits:
        safe = label.replace("[", "").replace("]", "").replace("-", "m")
        dipole.write_csv(d, out / f"polarization_{safe}.csv")
        f = dipole.fit_polarization(d)
        ok &= f.status == CONVERGED
        lines.append(f"{label}: theta0 {_fmt(f.theta0, f.result.error('theta0'), 'deg')}, "
                     f"visibility {_fmt(f.visibility, f.result.error('visibility'))} ({f.status})")
    _write_report(out, "polarization", lines)
    return ok


def _zpl_window(center: float, half_mev: float) -> tuple[float, float]:
    return center - half_mev * 1e-3, center + half_mev * 1e-3


def cmd_spectrum(cfg: RunConfig, out: Path) -> bool:
    sp = cfg.spectrum
    lines = ["# spectrum"]
    if sp.input:
        cols = read_columns(_input_path(sp.input, out), ("energy_eV", "intensity"))
        order = np.argsort(cols["energy_eV"])
        spec = spectra.Spectrum(cols["energy_eV"][order], cols["intensity"][order])
        peak = spec.energies[int(np.argmax(spec.intensities))]
        f = spectra.fit_zpl(spec, _zpl_window(peak, sp.zpl_half_window))
        dw = spectra.debye_waller(spec)
        lines += [f"ZPL: {_fmt(f.energy, f.energy_err, 'eV')}", f"fwhm: {_fmt(f.fwhm, f.fwhm_err, 'meV')}",
                  f"status: {f.status}", f"Debye-Waller: {_fmt(dw.fraction)}"]
        _write_report(out, "spectrum", lines)
        return f.status == CONVERGED

    model = spectra.SpectrumModel(e_zpl=sp.e_zpl, fwhm=sp.fwhm, dw=sp.dw, lvm_offset=sp.lvm_offset,
                                  resolution=sp.resolution, instrument=sp.instrument)
    clean = spectra.synth_spectrum(model, total_counts=sp.total_counts)
    spec = spectra.add_poisson_noise(clean, seed=_sub_seed(cfg.seed, "spectrum", "main")) if sp.noise else clean
    spectra.write_csv(spec, out / "spectrum.csv", wavelength=True)
    f = spectra.fit_zpl(spec, _zpl_window(sp.e_zpl, sp.zpl_half_window))
    dw = spectra.debye_waller(spec)
    e = spec.energies
    lvm = np.abs(e - (sp.e_zpl - sp.lvm_offset * 1e-3)) < 5e-3
    lvm_peak = e[lvm][np.argmax(clean.intensities[lvm])]
    lines += [
        f"ZPL: {_fmt(f.energy, f.energy_err, 'eV')} ({f.status})",
        f"fwhm: {_fmt(f.fwhm, f.fwhm_err, 'meV')} (resolution {sp.resolution:g} meV)",
        f"Debye-Waller: {_fmt(dw.fraction)}",
        f"LVM replica peak: {lvm_peak:.4f} eV",
    ]
    ok = f.status == CONVERGED

    zpl = spectra.sample_inhomogeneous_zpl(sp.n_emitters, sp.inhomogeneous_spread,
                                           seed=_sub_seed(cfg.seed, "spectrum", "inhomogeneous"), center=sp.e_zpl)
    grid = spectra.default_grid(sp.e_zpl - 2e-3, sp.e_zpl + 2e-3)
    with open(out / "zpl_energies.csv", "w") as fh:
        fh.write("emitter,true_eV,fitted_eV,fitted_err_eV,fwhm_meV\n")
        for i, e0 in enumerate(zpl):
            s_i = spectra.synth_spectrum(replace(model, e_zpl=float(e0)), grid=grid, total_counts=sp.total_counts)
            s_i = spectra.add_poisson_noise(s_i, seed=_sub_seed(cfg.seed, "spectrum", "emitter", i))
            fi = spectra.fit_zpl(s_i, _zpl_window(float(e0), sp.zpl_half_window))
            fh.write(f"{i},{e0:.9f},{fi.energy:.9f},{fi.energy_err:.3g},{fi.fwhm:.6g}\n")
    lines.append(f"inhomogeneous sample: {sp.n_emitters} ZPLs spanning {np.ptp(zpl) * 1e3:.3f} meV")

    if sp.temperatures:
        temps = np.asarray(sp.temperatures, dtype=float)
        law = spectra.TemperatureLaw(tuple(sp.shift_coeffs), tuple(sp.width_coeffs), t_max=float(temps.max()),
                                     resolution=sp.resolution)
        tm = replace(model, temperature_law=law)
        ts = spectra.temperature_series(tm, temps, sp.total_counts,
                                        seed=_sub_seed(cfg.seed, "spectrum", "temperature"),
                                        half_window=sp.zpl_half_window, degree=sp.law_degree)
        tf = ts.fit
        with open(out / "temperature.csv", "w") as fh:
            fh.write("temperature_K,shift_meV,shift_err_meV,fwhm_meV,fwhm_err_meV\n")
            for row in zip(ts.temperatures, ts.shift, ts.shift_err, ts.fwhm, ts.fwhm_err):
                fh.write("{:g},{:.6g},{:.3g},{:.6g},{:.3g}\n".format(*row))
        lines.append(f"temperature law fit ({tf.status}):")
        lines.append("  shift coeffs (meV/K^k, k>=1): " + ", ".join(
            f"{c:.4g} +/- {e:.2g}" for c, e in zip(tf.shift, tf.shift_err)))
        lines.append("  width coeffs (meV/K^k, k>=0): " + ", ".join(
            f"{c:.4g} +/- {e:.2g}" for c, e in zip(tf.width, tf.width_err)))
        pulls = spectra.law_pulls(ts, tm)
        lines.append(f"  max |fitted - true| / sigma: {np.max(np.abs(pulls)):.3g}")
        ok &= tf.status in (CONVERGED, "non-monotone")
    _write_report(out, "spectrum", lines)
    return ok


def _scan_field(sc, layout: str, seed: int) -> scan.EmitterField:
    if layout == "dozen":
        return scan.random_field(12, tuple(sc.extent), sc.brightness, sc.background, min_separation=10.0, seed=seed)
    if layout == "random":
        return scan.random_field(sc.n_emitters, tuple(sc.extent), sc.brightness, sc.background, seed=seed)
    if layout == "implanted":
        return scan.implanted_square_field(seed=seed)
    raise ConfigError(f"unknown scan layout {layout!r}; choose dozen, random or implanted")


def cmd_scan(cfg: RunConfig, out: Path) -> bool:
    sc = cfg.scan
    psf = sc.psf_sigma if sc.psf_sigma is not None else scan.DEFAULT_PSF_SIGMA
    lines = ["# scan", f"psf sigma: {psf:.4f} um, pitch {sc.pitch:g} um, dwell {sc.dwell:g} s"]
    if sc.input:
        m = scan.ScanMap(read_matrix(_input_path(sc.input, out)), sc.pitch, sc.dwell, psf)
        hs = scan.detect_hotspots(m, sc.threshold_sigma)
        scan.write_hotspots(hs, out / "hotspots_input.csv")
        lines.append(f"input: {len(hs)} hotspots at {sc.threshold_sigma:g} sigma")
    for layout in ([] if sc.input else sc.layouts):
        fld = _scan_field(sc, layout, seed=_sub_seed(cfg.seed, "scan", layout))
        m = scan.simulate_scan(fld, psf, sc.pitch, sc.dwell, seed=_sub_seed(cfg.seed, "scan", layout, "noise"))
        hs = scan.detect_hotspots(m, sc.threshold_sigma)
        scan.write_csv(m, out / f"scan_{layout}.csv")
        scan.write_pgm(m, out / f"scan_{layout}.pgm")
        scan.write_hotspots(hs, out / f"hotspots_{layout}.csv")
        lines.append(f"{layout}: {len(fld.emitters)} emitters, {len(hs)} hotspots at {sc.threshold_sigma:g} sigma")
    _write_report(out, "scan", lines)
    return True


HANDLERS = {
    "simulate": cmd_simulate, "g2": cmd_g2, "lifetime": cmd_lifetime, "saturation": cmd_saturation,
    "polarization": cmd_polarization, "spectrum": cmd_spectrum, "scan": cmd_scan,
}


# -- entry point -----------------------------------------------------------------


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="YAML run configuration")
    common.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
    common.add_argument("--out", metavar="DIR", help="output directory")
    common.add_argument("--preset", choices=sorted(PRESETS), help="figure preset")
    common.add_argument("--oracle", action="store_true", help="use the brute-force correlator")
    p = argparse.ArgumentParser(prog="emitterlab", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name, parents=[common], help=HANDLERS[name].__name__.replace("cmd_", "") + " pipeline")
        if name in ("g2", "lifetime", "saturation", "polarization", "spectrum", "scan"):
            sp.add_argument("input", nargs="?", help="input file (overrides the config's input)")
    rp = sub.add_parser("reproduce", parents=[common], help="run figure presets end to end")
    rp.add_argument("figures", nargs="*", help="presets to run (default: all, or --preset)")
    sub.add_parser("show-config", parents=[common], help="print the resolved configuration")
    return p


def _resolve(args, preset: str | None, section: str | None) -> RunConfig:
    layer = get_preset(preset)["config"] if preset else None
    file_data = load_yaml(args.config) if args.config else None
    over: dict = {}
    if args.seed is not None:
        over["seed"] = args.seed
    if args.out is not None:
        over["out"] = args.out
    if args.oracle:
        over["g2"] = {"oracle": True}
    if section and getattr(args, "input", None):
        over.setdefault(section, {})["input"] = args.input
    cfg = build(layer, file_data, over)
    cfg.preset = preset
    return cfg


def _run(cfg: RunConfig, commands, out: Path) -> bool:
    out.mkdir(parents=True, exist_ok=True)
    (out / "run_config.yaml").write_text(dump(cfg))
    ok = True
    for c in commands:
        ok &= HANDLERS[c](cfg, out)
    return ok


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "show-config":
            sys.stdout.write(dump(_resolve(args, args.preset, None), drop=()))
            return EXIT_OK
        if args.command == "reproduce":
            names = args.figures or ([args.preset] if args.preset else sorted(PRESETS))
            ok = True
            for name in names:
                cfg = _resolve(args, name, None)
                base = Path(cfg.out)
                ok &= _run(cfg, get_preset(name)["pipeline"], base / name if len(names) > 1 else base)
        else:
            cfg = _resolve(args, args.preset, args.command)
            ok = _run(cfg, [args.command], Path(cfg.out))
    except ConfigError as exc:
        print(f"emitterlab: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except KeyError as exc:
        print(f"emitterlab: configuration error: {exc.args[0]}", file=sys.stderr)
        return EXIT_CONFIG
    except InputError as exc:
        print(f"emitterlab: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (ValueError, DegenerateDataError) as exc:
        print(f"emitterlab: invalid parameters: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if not ok:
        print("emitterlab: a fit did not converge; see the report", file=sys.stderr)
        return EXIT_FIT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
