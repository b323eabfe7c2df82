"""Scenario-driven command line front end.

Subcommands:

    kernels            dump scattering kernels, cross-sections, decay rates
    propagate          closed-form transport solve (or --mc for Monte Carlo)
    coherence          coherence function on a (dt, dx) grid
    image-doa          arrival-direction image and peak fit
    image-range        temporal-decay image and range inversion
    estimate-velocity  peak-tracking velocity estimate
    localize           full localization pipeline (range + direction + velocity)
    verify             run the built-in oracle cross-check battery

Every run writes its artifacts beneath ``--out`` together with
``manifest.json`` recording the scenario hash, the seed and the SHA-256 of
every output file; re-running with the same scenario and seed reproduces
the hashes.  Delimited tables are the primary outputs; companion PNG
figures are rendered next to them unless ``--no-figures`` is given.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 non-identifiable scenario or no detection.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys

import numpy as np

from . import coherence as coh
from . import transport
from .crosscheck import run_crosschecks
from .errors import (ConfigurationError, ModelValidityError, NoDetectionError,
                     NonIdentifiableError, NumericalError, RangeBracketError)
from .imaging import (ClosedFormImager, RangeConstants, estimate_velocity,
                      image_doa, image_range, localize_source)
from .scenario import default_scenario_path, load_scenario


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _dispatch(args)
    except (ConfigurationError, ModelValidityError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (NumericalError,) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        if getattr(exc, "diagnostics", None):
            print(f"diagnostics: {exc.diagnostics}", file=sys.stderr)
        return 3
    except (NonIdentifiableError, NoDetectionError, RangeBracketError) as exc:
        print(f"non-identifiable scenario: {exc}", file=sys.stderr)
        return 4


def _build_parser():
    p = argparse.ArgumentParser(prog="beamflow", description=__doc__,
                                formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("scenario", nargs="?", default=None,
                        help="scenario YAML (default: bundled scenario)")
        sp.add_argument("--out", default="out", help="output directory")
        sp.add_argument("--seed", type=int, default=None, help="override solver seed")
        sp.add_argument("--threads", type=int, default=None,
                        help="worker count (default: hardware parallelism)")
        sp.add_argument("--no-figures", action="store_true",
                        help="skip PNG rendering next to the tables")

    sp = sub.add_parser("kernels", help="dump kernels and decay rates")
    common(sp)
    sp = sub.add_parser("propagate", help="transport solve to the scenario range")
    common(sp)
    sp.add_argument("--mc", action="store_true", help="Monte Carlo instead of closed form")
    sp.add_argument("--particles", type=int, default=None)
    sp.add_argument("--z", type=float, default=None, help="override the range [m]")
    sp = sub.add_parser("coherence", help="coherence function on a lag grid")
    common(sp)
    sp = sub.add_parser("image-doa", help="arrival-direction image")
    common(sp)
    sp = sub.add_parser("image-range", help="range image and inversion")
    common(sp)
    sp = sub.add_parser("estimate-velocity", help="lateral velocity estimate")
    common(sp)
    sp = sub.add_parser("localize", help="full localization pipeline")
    common(sp)
    sp.add_argument("--z-known", type=float, default=None,
                    help="skip range inversion and assume this range")
    sp = sub.add_parser("verify", help="run the oracle cross-check battery")
    common(sp)
    sp.add_argument("--thorough", action="store_true",
                    help="full-size Monte Carlo cross-validation")
    return p


def _dispatch(args):
    path = args.scenario or default_scenario_path()
    scenario = load_scenario(path)
    if args.seed is not None:
        scenario.solver["seed"] = args.seed
    if args.threads is not None:
        scenario.solver["workers"] = args.threads
    os.makedirs(args.out, exist_ok=True)
    writer = _Writer(args.out, render=not args.no_figures)
    diag = scenario.diagnostics(warn=True)
    writer.add_json("diagnostics.json", diag.to_dict())
    handler = {
        "kernels": _cmd_kernels,
        "propagate": _cmd_propagate,
        "coherence": _cmd_coherence,
        "image-doa": _cmd_doa,
        "image-range": _cmd_range,
        "estimate-velocity": _cmd_velocity,
        "localize": _cmd_localize,
        "verify": _cmd_verify,
    }[args.command]
    code = handler(args, scenario, writer)
    writer.manifest(scenario, args.command)
    return code


class _Writer:
    """Accumulates output files and hashes them into the manifest."""

    def __init__(self, out_dir, render=True):
        self.out = out_dir
        self.render = render
        self.files = []

    def path(self, name):
        return os.path.join(self.out, name)

    def _track(self, name):
        self.files.append(name)
        return self.path(name)

    def add_json(self, name, obj):
        with open(self._track(name), "w") as fh:
            json.dump(obj, fh, indent=2, sort_keys=True)
            fh.write("\n")

    def add_table(self, name, header, columns):
        cols = [np.asarray(c) for c in columns]
        with open(self._track(name), "w") as fh:
            fh.write(",".join(header) + "\n")
            for row in zip(*cols):
                fh.write(",".join(f"{v:.10g}" for v in row) + "\n")

    def add_matrix_table(self, name, row_name, rows, col_name, cols, values):
        with open(self._track(name), "w") as fh:
            fh.write(f"{row_name}\\{col_name}," +
                     ",".join(f"{c:.8g}" for c in cols) + "\n")
            for r, row in zip(rows, values):
                fh.write(f"{r:.10g}," + ",".join(f"{v:.10g}" for v in row) + "\n")

    def add_binary(self, name, save_fn):
        save_fn(self._track(name))

    def figure(self, name, fn, *fargs, **fkw):
        if self.render:
            fn(self.path(name), *fargs, **fkw)
            self.files.append(name)

    def manifest(self, scenario, command):
        hashes = {}
        for name in sorted(self.files):
            with open(self.path(name), "rb") as fh:
                hashes[name] = hashlib.sha256(fh.read()).hexdigest()
        blob = {
            "command": command,
            "config_hash": scenario.config_hash(),
            "seed": scenario.seed,
            "outputs": hashes,
        }
        with open(self.path("manifest.json"), "w") as fh:
            json.dump(blob, fh, indent=2, sort_keys=True)
            fh.write("\n")


def _workers(scenario):
    w = scenario.solver.get("workers")
    return os.cpu_count() if w is None else int(w)


def _cmd_kernels(args, sc, wr):
    from .figures import line_plot
    stats, wn, flow = sc.medium, sc.wavenumbers, sc.flow
    sig = transport.total_cross_section_paraxial(stats, wn)
    mfp = transport.scattering_mean_free_path_paraxial(stats, wn)
    omega = np.linspace(-8.0 / stats.T_corr, 8.0 / stats.T_corr, 161)
    kline = np.linspace(-8.0 / stats.ell, 8.0 / stats.ell, 161)
    q_omega = transport.dcs_paraxial(stats, wn, omega, np.zeros((161, sc.d)))
    q_k = transport.dcs_paraxial(
        stats, wn, 0.0, np.column_stack([kline] + [np.zeros(161)] * (sc.d - 1)))
    wr.add_table("kernel_paraxial.csv",
                 ["omega [rad/s]", "Q_par(omega,0)", "k [1/m]", "Q_par(0,k)"],
                 [omega, q_omega, kline, q_k])
    ks = np.linspace(-0.6, 0.6, 13) * wn.k_o
    decay = []
    for kv in ks:
        k = np.zeros(sc.d)
        k[0] = kv
        D = transport.decay_rate(stats, wn, flow, k)
        decay.append((kv, D.real, D.imag, -1.0 / D.real))
    decay = np.array(decay)
    wr.add_table("decay_rate.csv",
                 ["k [1/m]", "Re D [1/m]", "Im D [1/m]", "mean free path [m]"],
                 [decay[:, 0], decay[:, 1], decay[:, 2], decay[:, 3]])
    wr.add_json("cross_sections.json", {
        "Sigma_par [1/m]": sig,
        "mean_free_path_par [m]": mfp,
        "range_over_mfp": transport.strong_scattering_ratio(stats, wn, sc.z),
    })
    wr.figure("kernel_paraxial.png", line_plot, omega, [q_omega],
              "frequency shift [rad/s]", "Q_par", title="narrow-cone kernel")
    wr.figure("decay_rate.png", line_plot, decay[:, 0], [-decay[:, 1]],
              "k [1/m]", "-Re D [1/m]", title="coherent decay rate")
    print(f"Sigma_par = {sig:.6g} 1/m, mean free path = {mfp:.6g} m, "
          f"z/S_par = {sc.z / mfp:.3g}")
    return 0


def _cmd_propagate(args, sc, wr):
    from .figures import heatmap
    stats, wn, src, flow = sc.medium, sc.wavenumbers, sc.source, sc.flow
    z = args.z if args.z is not None else sc.z
    grids = transport.design_grids(
        stats, wn, src, flow, z,
        n_t=sc.grids.get("n_t"), n_y=sc.grids.get("n_y"), n_q=sc.grids.get("n_q"))
    if args.mc:
        n = args.particles or int(sc.solver.get("particles", 100000))
        res = transport.propagate_monte_carlo(
            stats, wn, src, flow, z, n, seed=sc.seed, grids=grids,
            workers=_workers(sc))
        field = res.field
        print(f"Monte Carlo: {n} particles, mean jumps {res.mean_jumps:.3f} "
              f"(expected {transport.total_cross_section_paraxial(stats, wn) * z:.3f})")
    else:
        field = transport.propagate_closed_form(stats, wn, src, flow, z,
                                                grids=grids)
        print(f"closed form: mass {field.total_mass():.6g} "
              f"(source {transport.initial_mass(src, wn, sc.d):.6g})")
    wr.add_binary("wigner_field.wigf", field.save)
    if sc.d == 1:
        wr.add_binary("wigner_slice.csv",
                      lambda p: field.to_csv(p, kind="k_slice"))
        wr.add_binary("wigner_marginal_x.csv",
                      lambda p: field.to_csv(p, kind="marginal_x"))
        mid_k = len(field.k_axes[0]) // 2
        wr.figure("wigner_omega_x.png", heatmap, field.omega, field.x_axes[0],
                  field.values[:, mid_k, :], "omega [rad/s]", "x [m]",
                  title=f"W at k=0, z={z} m")
    return 0


def _cmd_coherence(args, sc, wr):
    from .figures import heatmap
    stats, wn, src, flow = sc.medium, sc.wavenumbers, sc.source, sc.flow
    p = coh.coherence_params(stats, wn, src, flow, sc.array.kappa, sc.z)
    wr.add_json("coherence_params.json", {
        "decoherence_time [s]": p.decoherence_time,
        "decoherence_length [m]": p.decoherence_length,
        "beam_radius [m]": p.beam_radius,
        "speckle_len_1 [m]": p.speckle_len_1,
        "speckle_len_2 [m]": p.speckle_len_2,
        "drift_factor": p.drift_factor,
        "critical_range [m]": p.critical_range,
        "effective_aperture [m]": p.effective_aperture,
        "peak_scale": p.peak_scale,
        "decay_scale": p.decay_scale,
        "slope_bias": p.slope_bias,
        "mix_ratio": p.mix_ratio,
        "peak_bias": p.peak_bias,
    })
    tz = p.decoherence_time if np.isfinite(p.decoherence_time) else stats.T_corr
    dts = np.linspace(-3 * tz, 3 * tz, 81)
    dxs = np.linspace(-3 * p.speckle_len_1, 3 * p.speckle_len_1, 81)
    vals = np.empty((81, 81))
    for i, dt in enumerate(dts):
        for j, dxv in enumerate(dxs):
            dx = np.zeros(sc.d)
            dx[0] = dxv
            vals[i, j] = abs(coh.coherence_function(
                stats, wn, src, flow, dt, dx, np.zeros(sc.d), sc.z,
                method="closed", params=p))
    wr.add_matrix_table("coherence_grid.csv", "dt [s]", dts, "dx [m]", dxs, vals)
    wr.figure("coherence_grid.png", heatmap, dts, dxs, vals,
              "time lag [s]", "space lag [m]", title="|C(dt, dx)|")
    print(f"decoherence time {p.decoherence_time:.4g} s, length "
          f"{p.decoherence_length:.4g} m, beam radius {p.beam_radius:.4g} m")
    return 0


def _imager(sc):
    return ClosedFormImager(sc.medium, sc.wavenumbers, sc.source, sc.flow,
                            sc.array, sc.z)


def _cmd_doa(args, sc, wr):
    from .figures import line_plot
    imager = _imager(sc)
    axes, vals = imager.doa_image()
    res = image_doa(imager)
    if sc.d == 1:
        wr.add_table("doa_image.csv", ["k [1/m]", "|O_DoA|"], [axes[0], vals])
        wr.figure("doa_image.png", line_plot, axes[0], [vals], "k [1/m]",
                  "|O_DoA|", title="arrival-direction image")
    wr.add_json("doa_result.json", {
        "k_peak [1/m]": res.k_peak.tolist(),
        "theta_doa_fit": res.theta_doa_fit,
        "k_pred [1/m]": res.k_pred.tolist(),
        "theta_doa_pred": res.theta_doa_pred,
        "z_assumed [m]": res.z_assumed,
    })
    print(f"k_peak = {res.k_peak} 1/m (predicted {res.k_pred}); width "
          f"{res.theta_doa_fit:.4g} k_o units")
    return 0


def _cmd_range(args, sc, wr):
    from .figures import line_plot
    from .errors import NonIdentifiableError
    imager = _imager(sc)
    p = imager.params
    width = p.range_width()
    if not math.isfinite(width):
        raise NonIdentifiableError(
            "frozen medium: the temporal decay carries no range information")
    tg = np.linspace(-4 * width, 4 * width, 257)
    trace = imager.range_trace(tg)
    constants = RangeConstants.from_stats(sc.medium, sc.wavenumbers, sc.source)
    rr = image_range(tg, trace, constants, float(np.linalg.norm(sc.flow.v_perp)),
                     (sc.z / 10.0, sc.z * 10.0))
    wr.add_table("range_image.csv", ["t [s]", "|O_range|"], [tg, np.abs(trace)])
    wr.add_json("range_result.json", {
        "z_hat [m]": rr.z_hat, "theta_range_fit [s]": rr.theta_range_fit,
        "true_z [m]": sc.z,
    })
    wr.figure("range_image.png", line_plot, tg, [np.abs(trace)], "t [s]",
              "|O_range|", title="range image", logy=True)
    print(f"z_hat = {rr.z_hat:.4g} m (scenario z = {sc.z} m), width "
          f"{rr.theta_range_fit:.4g} s")
    return 0


def _cmd_velocity(args, sc, wr):
    from .figures import line_plot
    imager = _imager(sc)
    res = estimate_velocity(imager)
    wr.add_json("velocity_result.json", {
        "v_hat [m/s]": res.v_hat.tolist(),
        "slope [m/s]": res.slope.tolist(),
        "slope_bias_s_z": res.slope_bias,
        "res_v [m/s]": res.res_v,
        "n_slices": res.n_slices,
        "true_v [m/s]": sc.flow.v_perp.tolist(),
    })
    p = imager.params
    tg = np.linspace(-p.decoherence_time, p.decoherence_time, 9) \
        if np.isfinite(p.decoherence_time) else np.linspace(-1, 1, 9)
    wr.figure("velocity_track.png", line_plot, tg,
              [res.slope[0] * tg, sc.flow.v_perp[0] * p.slope_bias * tg],
              "t [s]", "peak drift y_max [m]", labels=["fit", "model"],
              title="velocity peak track")
    print(f"v_hat = {res.v_hat} m/s (true {sc.flow.v_perp}), "
          f"s_z = {res.slope_bias:.4g}, res_v = {res.res_v:.4g} m/s")
    return 0


def _cmd_localize(args, sc, wr):
    imager = _imager(sc)
    report = localize_source(imager, z_known=args.z_known)
    wr.add_json("estimate_report.json", report.to_dict())
    print(f"z_hat = {report.z_hat:.5g} m, x_o_hat = {report.x_o_hat} m"
          + (f", v_hat = {report.v_hat} m/s" if report.v_hat else ""))
    print(f"(true: z = {sc.z} m, x_o = {sc.array.x_o.tolist()} m, "
          f"v = {sc.flow.v_perp.tolist()} m/s)")
    return 0


def _cmd_verify(args, sc, wr):
    results = run_crosschecks(sc, quick=not args.thorough)
    all_ok = True
    for r in results:
        tag = "PASS" if r["passed"] else "FAIL"
        print(f"[{tag}] {r['name']}: {r['detail']} ({r['seconds']:.2f} s)")
        all_ok &= r["passed"]
    wr.add_json("verify_report.json", results)
    return 0 if all_ok else 3


if __name__ == "__main__":
    sys.exit(main())
