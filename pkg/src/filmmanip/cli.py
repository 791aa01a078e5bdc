"""Command-line front end.

Every subcommand writes its artifacts into one output directory with fixed
file names (or to the file named by ``--out`` when it has a suffix) and
prints a one-line summary.  Exit status: 0 success, 1 domain error,
2 usage error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import design, experiments, fileio, identification, kinematics, plant
from .errors import ManipulatorError
from .model import MAIN_MORPH_BOUNDS, Morph, NeedleSpec, rotation_from_direction
from .presets import get_preset

DEFAULT_SEED = 0


def _floats(text, n=None, name="value"):
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"{name} must be comma-separated numbers") from None
    if n is not None and len(vals) != n:
        raise argparse.ArgumentTypeError(f"{name} needs {n} comma-separated numbers")
    return vals


def _bounds(text):
    lo, hi = _floats(text, 2, "bounds")
    if not lo < hi:
        raise argparse.ArgumentTypeError("bounds must satisfy lo < hi")
    return (lo, hi)


def _vec(n, name):
    return lambda text: _floats(text, n, name)


def _freqs(text):
    vals = _floats(text, None, "freqs")
    if not vals:
        raise argparse.ArgumentTypeError("freqs must list at least one frequency")
    return vals


def _levels(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError("levels must be an integer") from None
    if v < 2:
        raise argparse.ArgumentTypeError("levels must be >= 2")
    return v


class Run:
    """Resolved run context: plant, seed, output locations and provenance."""

    def __init__(self, args, subcommand):
        self.args = args
        self.subcommand = subcommand
        if args.config:
            cfg = fileio.load_config(args.config)
        else:
            cfg = get_preset(args.preset)
        if args.seed is not None:
            cfg = cfg.replace(seed=args.seed)
        self.cfg = cfg
        self.seed = cfg.seed
        self.hash = fileio.config_hash(cfg)
        out = Path(args.out)
        if out.suffix:
            self.dir, self.primary = out.parent, out
        else:
            self.dir, self.primary = out, None
        self.dir.mkdir(parents=True, exist_ok=True)

    @property
    def prov(self):
        return fileio.provenance(self.subcommand, self.seed, self.hash)

    def path(self, default_name, primary=False):
        if self.primary is None:
            return self.dir / default_name
        if primary:
            return self.primary
        return self.dir / f"{self.primary.stem}_{default_name}"


def _coefficients(run: Run, morph=Morph.MAIN):
    """Coefficients from ``--coeffs`` or fitted on a noiseless plant grid."""
    if getattr(run.args, "coeffs", None):
        return fileio.load_coefficients(run.args.coeffs)
    data = identification.generate_dataset(run.cfg, 8, run.cfg.bounds, run.seed, morph,
                                           noise_sigma=0.0)
    coeffs, _ = identification.fit(data, run.cfg.needle)
    return coeffs


def _trajectory_rows(traj):
    return np.column_stack([traj.t, traj.currents, traj.poses])


def cmd_plant(run: Run):
    a = run.args
    data = identification.generate_dataset(run.cfg, a.levels, tuple(a.bounds), run.seed,
                                           Morph.parse(a.morph), allow_unsafe=a.allow_unsafe,
                                           noise_sigma=a.noise)
    path = run.path("calibration.csv", primary=True)
    fileio.save_calibration_csv(path, data, run.prov)
    return f"plant: wrote {len(data)} calibration rows to {path}"


def cmd_fit(run: Run):
    a = run.args
    data = fileio.load_calibration_csv(a.data)
    needle = NeedleSpec(a.needle, a.lever if a.lever is not None else max(a.needle, 43.6))
    coeffs, diag = identification.fit(data, needle)
    path = run.path("coeffs.json", primary=True)
    fileio.write_json(path, fileio.coefficients_doc(coeffs, diag), run.prov)
    return (f"fit: {diag.samples} rows, max residual {diag.max_residual:.3g} mm, "
            f"condition {diag.condition:.3g}; wrote {path}")


def cmd_fk(run: Run):
    a = run.args
    coeffs = _coefficients(run)
    pose = kinematics.forward(coeffs, a.currents)
    u = pose[3:] - pose[:3]
    angles = rotation_from_direction(u / np.linalg.norm(u))
    doc = {"currents": list(a.currents), "platform_mm": pose[:3].tolist(),
           "tip_mm": pose[3:].tolist(), "angles_deg": angles.tolist()}
    path = run.path("metrics.json", primary=True)
    fileio.write_json(path, doc, run.prov)
    return "fk: tip = (" + ", ".join(f"{v:.6g}" for v in pose[3:]) + f") mm; wrote {path}"


def cmd_ik(run: Run):
    a = run.args
    coeffs = _coefficients(run)
    opts = kinematics.IkOptions(bounds=tuple(a.bounds), lam=a.lam, tol=a.tol)
    i = kinematics.inverse(coeffs, a.target, opts)
    tip = kinematics.forward_tip(coeffs, i)
    doc = {"target_mm": list(a.target), "currents": i.tolist(), "tip_mm": tip.tolist(),
           "residual_mm": float(np.linalg.norm(tip - np.asarray(a.target)))}
    path = run.path("metrics.json", primary=True)
    fileio.write_json(path, doc, run.prov)
    return "ik: currents = (" + ", ".join(f"{v:.6g}" for v in i) + f") A; wrote {path}"


def cmd_workspace(run: Run):
    a = run.args
    bounds = tuple(a.bounds)
    if a.all_morphs:
        comp = kinematics.morph_workspaces(run.cfg, a.levels, bounds)
        reports = list(comp.reports.values())
        summary = comp.summary()
        ext = comp.extents
    else:
        source = fileio.load_coefficients(a.coeffs) if a.coeffs else run.cfg
        rep = kinematics.workspace(source, a.levels, bounds, Morph.parse(a.morph))
        reports = [rep]
        summary = rep.summary()
        ext = rep.extents
    rows = np.vstack([np.column_stack([r.points, r.angles]) for r in reports])
    csv_path = run.path("workspace.csv", primary=True)
    fileio.write_csv(csv_path, fileio.WORKSPACE_HEADER, rows, run.prov,
                     {"levels": a.levels, "bounds": f"{bounds[0]},{bounds[1]}"})
    fileio.write_json(run.path("metrics.json"), summary, run.prov)
    return (f"workspace: {len(rows)} points, extents "
            + " x ".join(f"{v:.4g}" for v in ext) + f" mm; wrote {csv_path}")


def cmd_design_search(run: Run):
    a = run.args
    if a.objective == "paper":
        obj = design.paper_objective()
    else:
        obj = design.plant_objective(run.cfg, levels=a.levels)
    cfg = design.SearchConfig(design.DesignParams(*a.initial), tuple(a.steps), a.max_restarts)
    res = design.coordinate_descent(obj, cfg)
    rows = [(p.t, p.p, p.w, p.l, s) for p, s in res.trace]
    trace_path = run.path("trace.csv", primary=True)
    fileio.write_csv(trace_path, ("t_um", "p_mm", "w_mm", "l_mm", "S"), rows, run.prov,
                     {"objective": a.objective})
    p = res.params
    doc = {"objective": a.objective, "t_um": p.t, "p_mm": p.p, "w_mm": p.w, "l_mm": p.l,
           "S": res.value, "converged": res.converged, "passes": res.passes,
           "evaluations": res.evaluations}
    fileio.write_json(run.path("metrics.json"), doc, run.prov)
    return (f"design-search: T={p.t:g} um P={p.p:g} mm W={p.w:g} mm L={p.l:g} mm "
            f"(converged={res.converged}, {res.evaluations} evaluations)")


def _path_spec(a, freq=None):
    return experiments.PathSpec(a.shape, a.size, a.freq if freq is None else freq, a.cycles,
                                None if a.center is None else tuple(a.center))


def cmd_follow(run: Run):
    a = run.args
    coeffs = _coefficients(run)
    spec = _path_spec(a)
    traj = experiments.follow(run.cfg, coeffs, spec)
    m = experiments.metrics(traj)
    trace_path = run.path("trace.csv", primary=True)
    fileio.write_csv(trace_path, fileio.TRAJECTORY_HEADER, _trajectory_rows(traj), run.prov,
                     {"shape": spec.shape, "size_mm": spec.size, "freq_hz": spec.frequency})
    doc = m.as_dict()
    doc["nominal_speed_mm_s"] = spec.nominal_speed
    fileio.write_json(run.path("metrics.json"), doc, run.prov)
    prec = "n/a" if m.precision is None else f"{m.precision:.4g} um"
    return (f"follow: speed {m.speed:.4g} mm/s, precision {prec}, "
            f"accuracy {m.accuracy:.4g} um; wrote {trace_path}")


def cmd_sweep(run: Run):
    a = run.args
    coeffs = _coefficients(run)
    rows = experiments.amplitude_sweep(run.cfg, coeffs, _path_spec(a, a.freqs[0]), a.freqs)
    path = run.path("bode.csv", primary=True)
    fileio.write_csv(path, fileio.BODE_HEADER,
                     [(r.freq_hz, r.amp_db, r.mean_radius_mm) for r in rows], run.prov,
                     {"shape": a.shape, "size_mm": a.size})
    peak = max(rows, key=lambda r: r.amp_db)
    return f"sweep: {len(rows)} frequencies, peak {peak.amp_db:.3g} dB at {peak.freq_hz:g} Hz; wrote {path}"


def cmd_chirp(run: Run):
    a = run.args
    res = experiments.chirp_response(run.cfg, a.coil, (a.fmin, a.fmax), a.duration, a.amplitude)
    path = run.path("chirp.csv", primary=True)
    rows = np.column_stack([res.freq_hz, res.amplitude, res.gain_db])
    fileio.write_csv(path, ("freq_hz", "amp_x_mm", "amp_y_mm", "amp_z_mm",
                            "gain_x_db", "gain_y_db", "gain_z_db"), rows, run.prov,
                     {"coil": a.coil, "duration_s": a.duration, "amplitude_a": a.amplitude})
    axis = int(np.nanargmax(np.nanmax(np.abs(res.amplitude), axis=0)))
    peaks = experiments.resonance_peaks(res.freq_hz, res.gain_db[:, axis])
    return ("chirp: resonances near " + ", ".join(f"{p:.1f}" for p in peaks)
            + f" Hz on axis {'xyz'[axis]}; wrote {path}")


def cmd_morph(run: Run):
    a = run.args
    rng = np.random.default_rng(run.seed)
    state = plant.initial_state(run.cfg)
    traces, events = [], []
    for pulse in a.pulses:
        before = state.morph
        state, trace = plant.morph_transition(state, pulse, run.cfg, rng, settle=a.settle)
        traces.extend(trace)
        events.append({"pulse": pulse, "from": before.value, "to": state.morph.value,
                       "t_s": state.t, "tip_mm": state.x[3:].tolist()})
    rows = [np.concatenate([[t], i, st.y]) for t, i, st in traces]
    trace_path = run.path("trace.csv", primary=True)
    fileio.write_csv(trace_path, fileio.TRAJECTORY_HEADER, rows, run.prov,
                     {"pulses": "+".join(a.pulses)})
    fileio.write_json(run.path("metrics.json"), {"events": events,
                                                 "final_morph": state.morph.value}, run.prov)
    return "morph: " + " -> ".join([events[0]["from"]] + [e["to"] for e in events])


COMMANDS = {
    "plant": cmd_plant, "fit": cmd_fit, "fk": cmd_fk, "ik": cmd_ik,
    "workspace": cmd_workspace, "design-search": cmd_design_search, "follow": cmd_follow,
    "sweep": cmd_sweep, "chirp": cmd_chirp, "morph": cmd_morph,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="plant configuration file (key = value lines)")
    common.add_argument("--preset", default="paper", help="named plant preset (default: paper)")
    common.add_argument("--seed", type=int, default=None, help="random seed")
    common.add_argument("--out", default="results",
                        help="output directory, or file name for the main artifact")

    coeff = argparse.ArgumentParser(add_help=False)
    coeff.add_argument("--coeffs", help="coefficient document; default fits the plant")

    path = argparse.ArgumentParser(add_help=False)
    path.add_argument("--shape", choices=("circle", "square"), default="circle")
    path.add_argument("--size", type=float, default=0.64, help="diameter or side, mm")
    path.add_argument("--cycles", type=int, default=5)
    path.add_argument("--center", type=_vec(3, "center"), default=None)

    parser = argparse.ArgumentParser(prog="filmmanip", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("plant", parents=[common], help="generate a synthetic calibration dataset")
    p.add_argument("--levels", type=_levels, default=8)
    p.add_argument("--bounds", type=_bounds, default=MAIN_MORPH_BOUNDS)
    p.add_argument("--morph", default="Main")
    p.add_argument("--noise", type=float, default=None, help="position noise sigma, mm")
    p.add_argument("--allow-unsafe", action="store_true", help="permit bounds beyond the safe range")

    p = sub.add_parser("fit", parents=[common], help="fit coefficients to a calibration CSV")
    p.add_argument("--data", required=True)
    p.add_argument("--needle", type=float, default=40.0, help="needle length N1, mm")
    p.add_argument("--lever", type=float, default=None, help="rotation lever, mm")

    p = sub.add_parser("fk", parents=[common, coeff], help="forward kinematics")
    p.add_argument("--currents", type=_vec(4, "currents"), required=True)

    p = sub.add_parser("ik", parents=[common, coeff], help="inverse kinematics for a tip target")
    p.add_argument("--target", type=_vec(3, "target"), required=True)
    p.add_argument("--bounds", type=_bounds, default=MAIN_MORPH_BOUNDS)
    p.add_argument("--lam", type=float, default=1e-4)
    p.add_argument("--tol", type=float, default=1e-3)

    p = sub.add_parser("workspace", parents=[common, coeff], help="sample the workspace")
    p.add_argument("--levels", type=_levels, default=8)
    p.add_argument("--bounds", type=_bounds, default=MAIN_MORPH_BOUNDS)
    p.add_argument("--morph", default="Main")
    p.add_argument("--all-morphs", action="store_true")

    p = sub.add_parser("design-search", parents=[common], help="coordinate search over T, P, W, L")
    p.add_argument("--objective", choices=("paper", "plant"), default="paper")
    p.add_argument("--initial", type=_vec(4, "initial"), default=[110.0, 10.0, 3.0, 26.0])
    p.add_argument("--steps", type=_vec(4, "steps"), default=[10.0, 1.0, 1.0, 2.0])
    p.add_argument("--max-restarts", type=int, default=10)
    p.add_argument("--levels", type=_levels, default=4)

    p = sub.add_parser("follow", parents=[common, coeff, path], help="open-loop path following")
    p.add_argument("--freq", type=float, default=1.0)

    p = sub.add_parser("sweep", parents=[common, coeff, path], help="amplitude sweep (bode)")
    p.add_argument("--freqs", type=_freqs, default=[1, 5, 10, 20, 30, 40, 50, 60, 70])

    p = sub.add_parser("chirp", parents=[common], help="chirp magnitude response of one coil")
    p.add_argument("--coil", type=int, choices=(1, 2, 3, 4), default=1)
    p.add_argument("--fmin", type=float, default=1.0)
    p.add_argument("--fmax", type=float, default=100.0)
    p.add_argument("--duration", type=float, default=100.0)
    p.add_argument("--amplitude", type=float, default=0.05)

    p = sub.add_parser("morph", parents=[common], help="run morph switching pulses")
    p.add_argument("--pulses", type=lambda s: [v.strip() for v in s.split(",") if v.strip()],
                   default=["enter_side_1", "exit_to_main"])
    p.add_argument("--settle", type=float, default=1.0)
    return parser


def run_command(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        run = Run(args, args.command)
        summary = COMMANDS[args.command](run)
    except (ManipulatorError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(summary)
    return 0


def main(argv=None):
    sys.exit(run_command(argv))


if __name__ == "__main__":
    main()
