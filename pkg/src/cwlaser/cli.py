"""Command-line front end.

Subcommands: simulate, spectrum, critical, reduce, compare, verify, sweep.
Global flags: --config, --out, --seed, --threads.  Scenario options in the
config file supply defaults; explicit command-line flags win.

Time series go to CSV (complex values as paired _re/_im columns), structured
results to JSON.  Outputs are deterministic for a fixed config and seed.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

import numpy as np

from . import modes, oracle, spectral, twm
from ._kernels import BACKEND
from .configio import Scenario, fig1_config_path, parse_config
from .errors import CwlaserError
from .grid import make_grid
from .params import LaserConfig, validate


def _fmt(x) -> str:
    return f"{float(x):.17g}"


def _write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([v if isinstance(v, str) else _fmt(v) for v in row])


def _write_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _cplx(z) -> dict:
    return {"re": float(np.real(z)), "im": float(np.imag(z))}


def _opt(args, scenario, name, default):
    val = getattr(args, name, None)
    if val is not None:
        return val
    if name in scenario.options:
        return type(default)(scenario.options[name])
    return default


def _load(args):
    path = args.config or str(fig1_config_path())
    config, scenario = parse_config(path)
    if args.seed is not None:
        scenario.seed = args.seed
    if args.out is not None:
        scenario.out = args.out
    os.makedirs(scenario.out, exist_ok=True)
    return config, scenario


# ---------------------------------------------------------------------------
# tasks

def _task_simulate(config, scenario, args) -> int:
    horizon = _opt(args, scenario, "horizon", 500.0)
    stride = _opt(args, scenario, "stride", 125)
    amplitude = _opt(args, scenario, "amplitude", 1e-3)
    grid = make_grid(config)
    state = twm.initial_state(config, grid, amplitude=amplitude)
    out = twm.run(config, state, twm.InjectionSignal.zero(), horizon, grid,
                  stride=stride)
    m = config.m
    header = (["t"] + [f"n_{k}" for k in range(m)]
              + [f"power_{k}" for k in range(m)]
              + ["out0_re", "out0_im", "outL_re", "outL_im", "D"])
    rows = []
    for i in range(len(out.t)):
        rows.append([out.t[i], *out.n[i], *out.power[i],
                     out.out0[i].real, out.out0[i].imag,
                     out.outL[i].real, out.outL[i].imag, out.D[i]])
    path = os.path.join(scenario.out, "simulate.csv")
    _write_csv(path, header, rows)
    print(f"simulate: {len(rows)} samples -> {path}")
    return 0


def _spectrum_payload(config, n):
    spec = spectral.find_eigenvalues(config, n)
    return {
        "n": [float(v) for v in np.atleast_1d(n)],
        "window": {"re": [spec.window[0], spec.window[1]],
                   "im": [spec.window[2], spec.window[3]]},
        "growth_rates": {"field": spec.R_psi, "polarization": spec.R_p,
                         "essential": spec.R_inf},
        "upper_bound": spec.Lambda_u,
        "eigenvalues": [{"lambda": _cplx(ev.lam),
                         "multiplicity": ev.multiplicity,
                         "rel_residual": ev.residual}
                        for ev in spec.eigenvalues],
    }


def _task_spectrum(config, scenario, args) -> int:
    n = _opt(args, scenario, "density", 1.0)
    nvec = np.full(config.m, float(n))
    payload = _spectrum_payload(config, nvec)
    path = os.path.join(scenario.out, "spectrum.json")
    _write_json(path, payload)
    dom = max(payload["eigenvalues"], default=None,
              key=lambda e: e["lambda"]["re"])
    print(f"spectrum: {len(payload['eigenvalues'])} eigenvalues -> {path}")
    if dom:
        print(f"  dominant: {dom['lambda']['re']:+.6f} "
              f"{dom['lambda']['im']:+.6f}i")
    return 0


def _task_critical(config, scenario, args) -> int:
    free_index = _opt(args, scenario, "free_index", 0)
    n_seed = np.full(config.m, float(_opt(args, scenario, "density", 1.0)))
    n_crit, omega, spec = spectral.dominant_crossing(config, n_seed, free_index)
    payload = {
        "n_critical": [float(v) for v in n_crit],
        "omega": float(omega),
        "q": spec.q,
        "gap": spec.xi,
        "free_index": free_index,
    }
    path = os.path.join(scenario.out, "critical.json")
    _write_json(path, payload)
    print(f"critical: n = {np.array2string(np.asarray(n_crit), precision=8)} "
          f"omega = {omega:.8f} gap = {spec.xi:.5f} -> {path}")
    return 0


def _reduced_setup(config, scenario, args):
    free_index = _opt(args, scenario, "free_index", 0)
    n_seed = np.full(config.m, float(_opt(args, scenario, "density", 1.0)))
    n_crit, omega, spec = spectral.dominant_crossing(config, n_seed, free_index)
    n_crit = np.asarray(n_crit)
    grid = make_grid(config)
    half = float(_opt(args, scenario, "box_halfwidth", 0.02))
    box = np.stack([n_crit - half, n_crit + half], axis=1)
    basis = modes.build_basis(config, n_crit, spec.q, box, grid=grid)
    return n_crit, basis


def _equilibrium_amplitude(config, basis, n_crit, free) -> float:
    """90% of the rotating-wave equilibrium |E|; keeps the carrier
    transient inside the validity box."""
    _, Q, _ = modes.ExactEvaluator(basis, config).coefficients(n_crit)
    sec = config.sections[free]
    pump = (sec.current - n_crit[free] / sec.lifetime) / config.epsilon
    q00 = Q[free, 0, 0].real
    return 0.9 * math.sqrt(pump / q00) if pump > 0 and q00 > 0 else 1e-3


def _task_reduce(config, scenario, args) -> int:
    horizon = _opt(args, scenario, "horizon", 500.0)
    n_crit, basis = _reduced_setup(config, scenario, args)
    amp = _opt(args, scenario, "amplitude", 0.0)
    if amp == 0.0:
        amp = _equilibrium_amplitude(
            config, basis, n_crit, int(_opt(args, scenario, "free_index", 0)))
    e0 = complex(amp)
    init = modes.ReducedState(E_c=np.full(basis.q, e0, dtype=complex),
                              n=n_crit.copy(), t=0.0)
    out = modes.integrate_reduced(basis, config, init, horizon,
                                  rtol=float(_opt(args, scenario, "rtol", 1e-9)))
    header = ["t"] + [f"E_{j}_re" for j in range(basis.q)] \
        + [f"E_{j}_im" for j in range(basis.q)] \
        + [f"n_{k}" for k in range(config.m)]
    rows = [[out.t[i], *out.E_c[i].real, *out.E_c[i].imag, *out.n[i]]
            for i in range(len(out.t))]
    path = os.path.join(scenario.out, "reduce.csv")
    _write_csv(path, header, rows)
    print(f"reduce: q = {basis.q}, {len(rows)} samples -> {path}")
    return 0


def _task_compare(config, scenario, args) -> int:
    horizon = _opt(args, scenario, "horizon", 100.0)
    n_crit, basis = _reduced_setup(config, scenario, args)
    amp = _opt(args, scenario, "amplitude", 0.0)
    if amp == 0.0:
        amp = _equilibrium_amplitude(
            config, basis, n_crit, int(_opt(args, scenario, "free_index", 0)))
    init = modes.ReducedState(E_c=np.full(basis.q, complex(amp), dtype=complex),
                              n=n_crit.copy(), t=0.0)
    rep = modes.compare_full_vs_reduced(config, basis, init, horizon)
    header = (["t"] + [f"n_full_{k}" for k in range(config.m)]
              + [f"n_red_{k}" for k in range(config.m)]
              + [f"Eproj_abs_{j}" for j in range(basis.q)]
              + [f"E_abs_{j}" for j in range(basis.q)])
    rows = [[rep.t[i], *rep.n_full[i], *rep.n_reduced[i],
             *rep.E_proj_abs[i], *rep.E_c_abs[i]]
            for i in range(len(rep.t))]
    path = os.path.join(scenario.out, "compare.csv")
    _write_csv(path, header, rows)
    _write_json(os.path.join(scenario.out, "compare.json"),
                {"max_n_error": rep.max_n_error,
                 "max_E_error": rep.max_E_error,
                 "epsilon": config.epsilon})
    print(f"compare: max |n_full - n_red| = {rep.max_n_error:.3e}, "
          f"max |E| error = {rep.max_E_error:.3e} -> {path}")
    return 0


# ---------------------------------------------------------------------------
# verify: oracle battery

def _verify_checks(config, seed):
    rng = np.random.default_rng(seed)
    checks = []

    # transfer matrix closed form vs direct RK4 integration
    sec = config.sections[0]
    worst = 0.0
    worst_det = 0.0
    count = 0
    while count < 200:
        nu = 1.0 + 0.5 * rng.random()
        lam = complex(rng.uniform(-5, 5), rng.uniform(-30, 30))
        z = rng.uniform(0.05, 1.5)
        try:
            st = spectral.transfer_section(sec, nu, lam, z)
        except CwlaserError:
            continue
        if abs(st.gamma * z) >= 20.0:    # scaled-form validity range
            continue
        count += 1
        T_ref = oracle.transfer_by_integration(sec, nu, lam, z)
        worst = max(worst, float(np.max(np.abs(st.matrix - T_ref))))
        # det T = 1 checked in the scaled form det(mantissa) = e^{-2 gamma z}
        # (the raw determinant of an e^{20}-sized matrix is not resolvable)
        worst_det = max(worst_det, abs(np.linalg.det(st.mantissa)
                                       - np.exp(-2.0 * st.gamma * z)))
    checks.append(("transfer closed form vs RK4", worst, 1e-8))
    checks.append(("transfer determinant = 1", worst_det, 1e-10))

    # dominant eigenvalue: root of the characteristic function vs
    # finite-difference residual of the reconstructed eigenfunction
    n = np.ones(config.m)
    spec = spectral.find_eigenvalues(config, n)
    dom = spec.dominant()
    grid = make_grid(config, target_cells=1024)
    mode = spectral.eigenmode(config, n, dom.lam, grid)
    h1, h2, hp1, hp2 = oracle.apply_H_fd(config, n, grid, mode.psi1,
                                         mode.psi2, mode.p1, mode.p2)
    res = max(np.max(np.abs(h1 - dom.lam * mode.psi1)),
              np.max(np.abs(h2 - dom.lam * mode.psi2)),
              np.max(np.abs(hp1 - dom.lam * mode.p1)),
              np.max(np.abs(hp2 - dom.lam * mode.p2)))
    checks.append(("eigenmode FD residual", float(res), 1e-5))

    # spectral bound
    ub = spectral.lambda_upper_bound(config, n)
    margin = max((ev.lam.real - ub for ev in spec.eigenvalues),
                 default=-math.inf)
    checks.append(("Re lambda < upper bound", float(margin), 0.0))

    # backend agreement on a short nonlinear run
    grid2 = make_grid(config)
    state = twm.initial_state(config, grid2, amplitude=0.05)
    sig = twm.InjectionSignal.zero()
    out_np = twm.run(config, state, sig, 5.0, grid2, stride=100,
                     backend="numpy")
    if BACKEND == "compiled":
        out_cy = twm.run(config, state, sig, 5.0, grid2, stride=100,
                         backend="compiled")
        diff = max(float(np.max(np.abs(out_np.n - out_cy.n))),
                   float(np.max(np.abs(out_np.out0 - out_cy.out0))))
        checks.append(("numpy vs compiled backend", diff, 1e-12))
    return checks


def _task_verify(config, scenario, args) -> int:
    checks = _verify_checks(config, scenario.seed)
    width = max(len(name) for name, _, _ in checks)
    failures = 0
    for name, value, tol in checks:
        ok = value <= tol
        failures += 0 if ok else 1
        print(f"  {name:<{width}}  {value:11.3e}  (tol {tol:g})  "
              f"{'PASS' if ok else 'FAIL'}")
    print(f"verify: {len(checks) - failures}/{len(checks)} checks passed")
    return 0 if failures == 0 else 1


# ---------------------------------------------------------------------------
# sweep

_SWEEPABLE = ("rL.abs", "rL.phase", "r0.abs", "r0.phase", "epsilon")


def _apply_path(config: LaserConfig, path: str, value: float) -> LaserConfig:
    if path == "epsilon":
        return replace(config, epsilon=float(value))
    try:
        target, field = path.split(".")
    except ValueError:
        raise CwlaserError(f"unknown sweep parameter {path!r}; "
                           f"supported: {', '.join(_SWEEPABLE)}") from None
    if target not in ("r0", "rL") or field not in ("abs", "phase"):
        raise CwlaserError(f"unknown sweep parameter {path!r}; "
                           f"supported: {', '.join(_SWEEPABLE)}")
    old = getattr(config, target)
    if field == "abs":
        new = float(value) * np.exp(1j * np.angle(old))
    else:
        new = abs(old) * np.exp(1j * float(value))
    return config.with_reflectivity(**{target: new})


def _classify(power, t, settle_fraction=0.5):
    """steady / oscillatory / off, from the total-power tail."""
    k0 = int(len(t) * settle_fraction)
    tail = power[k0:]
    mean = float(np.mean(tail))
    if mean < 1e-8:
        return "off", 0, mean
    rel = float(np.std(tail) / mean)
    interior = tail[1:-1]
    peaks = int(np.sum((interior > tail[:-2]) & (interior > tail[2:])
                       & (interior > mean * 1.001)))
    if rel > 1e-3 and peaks >= 3:
        return "oscillatory", peaks, mean
    return "steady", peaks, mean


def _sweep_point(payload):
    config, horizon, stride = payload
    try:
        grid = make_grid(config)
        state = twm.initial_state(config, grid, amplitude=1e-3)
        out = twm.run(config, state, twm.InjectionSignal.zero(), horizon,
                      grid, stride=stride)
        total = out.power.sum(axis=1)
        regime, peaks, mean_power = _classify(total, out.t)
        try:
            spec = spectral.find_eigenvalues(config, out.n[-1])
            dom = spec.dominant().lam
        except (CwlaserError, AttributeError):
            dom = complex(np.nan, np.nan)
        return {"regime": regime, "peaks": peaks, "power": mean_power,
                "n_final": out.n[-1].tolist(),
                "dom_re": dom.real, "dom_im": dom.imag, "error": ""}
    except Exception as exc:            # per-point failures recorded in-row
        return {"regime": "error", "peaks": 0, "power": math.nan,
                "n_final": [math.nan] * config.m,
                "dom_re": math.nan, "dom_im": math.nan,
                "error": f"{type(exc).__name__}: {exc}"}


def _axis_values(spec_dict, which):
    path = spec_dict.get(f"param{which}")
    if path is None:
        return None, None
    start = float(spec_dict[f"start{which}"])
    stop = float(spec_dict[f"stop{which}"])
    count = int(spec_dict[f"count{which}"])
    return path, np.linspace(start, stop, count)


def _task_sweep(config, scenario, args) -> int:
    opts = dict(scenario.options)
    for key in ("param1", "start1", "stop1", "count1",
                "param2", "start2", "stop2", "count2"):
        val = getattr(args, key, None)
        if val is not None:
            opts[key] = val
    horizon = float(_opt(args, scenario, "horizon", 400.0))
    stride = int(_opt(args, scenario, "stride", 125))

    p1, v1 = _axis_values(opts, 1)
    if p1 is None:
        raise CwlaserError("sweep needs at least param1/start1/stop1/count1")
    p2, v2 = _axis_values(opts, 2)
    points = []
    for a in v1:
        if p2 is None:
            points.append(((a,), _apply_path(config, p1, a)))
        else:
            for b in v2:
                points.append(((a, b),
                               _apply_path(_apply_path(config, p1, a), p2, b)))

    payloads = [(cfg, horizon, stride) for _, cfg in points]
    if args.threads and args.threads > 1:
        with ProcessPoolExecutor(max_workers=args.threads) as pool:
            results = list(pool.map(_sweep_point, payloads))
    else:
        results = [_sweep_point(p) for p in payloads]

    header = [p1] + ([p2] if p2 else []) + \
        ["regime", "peaks", "mean_power",
         *(f"n_final_{k}" for k in range(config.m)),
         "dom_re", "dom_im", "error"]
    rows = []
    for (coords, _), res in zip(points, results):
        rows.append([*coords, res["regime"], res["peaks"], res["power"],
                     *res["n_final"], res["dom_re"], res["dom_im"],
                     res["error"]])
    path = os.path.join(scenario.out, "sweep.csv")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([v if isinstance(v, str)
                        else (str(v) if isinstance(v, int) else _fmt(v))
                        for v in row])
    regimes = sorted({r["regime"] for r in results})
    print(f"sweep: {len(rows)} points, regimes: {', '.join(regimes)} -> {path}")
    return 0


# ---------------------------------------------------------------------------

_TASKS = {
    "simulate": _task_simulate,
    "spectrum": _task_spectrum,
    "critical": _task_critical,
    "reduce": _task_reduce,
    "compare": _task_compare,
    "verify": _task_verify,
    "sweep": _task_sweep,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cwlaser",
        description="Coupled-wave laser model: simulation, spectra, "
                    "mode reduction")
    parser.add_argument("--config", help="configuration file "
                        "(default: shipped two-section example)")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--seed", type=int, help="seed for randomized checks")
    parser.add_argument("--threads", type=int, default=1,
                        help="worker processes for sweep")
    sub = parser.add_subparsers(dest="task")

    p = sub.add_parser("simulate", help="time-domain run, CSV time series")
    p.add_argument("--horizon", type=float)
    p.add_argument("--stride", type=int)
    p.add_argument("--amplitude", type=float)

    p = sub.add_parser("spectrum", help="eigenvalues at frozen carriers")
    p.add_argument("--density", type=float)

    p = sub.add_parser("critical", help="critical carrier density search")
    p.add_argument("--density", type=float)
    p.add_argument("--free-index", dest="free_index", type=int)

    p = sub.add_parser("reduce", help="integrate the reduced mode ODE")
    p.add_argument("--horizon", type=float)
    p.add_argument("--amplitude", type=float)
    p.add_argument("--rtol", type=float)
    p.add_argument("--density", type=float)
    p.add_argument("--free-index", dest="free_index", type=int)
    p.add_argument("--box-halfwidth", dest="box_halfwidth", type=float)

    p = sub.add_parser("compare", help="full PDE vs reduced ODE")
    p.add_argument("--horizon", type=float)
    p.add_argument("--amplitude", type=float)
    p.add_argument("--density", type=float)
    p.add_argument("--free-index", dest="free_index", type=int)
    p.add_argument("--box-halfwidth", dest="box_halfwidth", type=float)

    sub.add_parser("verify", help="run the oracle battery")

    p = sub.add_parser("sweep", help="parameter sweep, one CSV row per point")
    p.add_argument("--horizon", type=float)
    p.add_argument("--stride", type=int)
    p.add_argument("--param1")
    p.add_argument("--start1", type=float)
    p.add_argument("--stop1", type=float)
    p.add_argument("--count1", type=int)
    p.add_argument("--param2")
    p.add_argument("--start2", type=float)
    p.add_argument("--stop2", type=float)
    p.add_argument("--count2", type=int)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config, scenario = _load(args)
    except (OSError, CwlaserError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    task = args.task or scenario.task
    if task not in _TASKS:
        print(f"error: no task given (use one of {', '.join(_TASKS)})",
              file=sys.stderr)
        return 2
    try:
        return _TASKS[task](config, scenario, args)
    except CwlaserError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
