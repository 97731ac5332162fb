"""Command-line harness: one subcommand per experiment, static artifacts plus a manifest."""
from __future__ import annotations

import argparse
import json
import os
import platform
import sys
import time
from pathlib import Path

import mpmath
import numpy as np
import scipy

from . import __version__, cfrac, density, dynamics, fatou, geometry
from .errors import ArtifactError, InputError
from .io import (atomic_write_bytes, atomic_write_text, csv_text, json_text, mask_bytes, parse_config,
                 ppm_bytes, read_mask)

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC, EXIT_CHECK = 0, 1, 2, 3


def _bool(s):
    v = str(s).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(s)


def _ints(s):
    return tuple(int(v) for v in str(s).replace(",", " ").split())


def _opt_float(s):
    return None if str(s).strip().lower() in ("", "none") else float(s)


def _opt_int(s):
    return None if str(s).strip().lower() in ("", "none") else int(s)


def _seq(spec: str) -> cfrac.QuotientSequence:
    """Preset name, or an inline quotient description such as 'prefix: 2 3; tail: periodic 1'."""
    if spec in cfrac.PRESETS:
        return cfrac.PRESETS[spec]
    if ":" in spec:
        return cfrac.QuotientSequence.loads(spec.replace(";", "\n"))
    raise InputError(f"unknown sequence {spec!r}; use a preset ({', '.join(cfrac.PRESETS)}) or 'prefix: ...; tail: ...'")


# option tables: name -> (converter, default, help)
COMMON = {
    "precision": (int, 128, "working precision in bits"),
    "seed": (int, 12345, "master seed"),
}
CASE = {
    "alpha": (str, "golden", "rotation number alpha"),
    "theta": (str, "golden", "tail theta"),
    "n": (int, 5, "perturbation level n"),
    "An": (int, 10, "large quotient A_n"),
}
GEOM = {
    "ladder": (str, "desk", "region ladder: desk | default"),
    "a_floor": (_opt_float, None, "ladder floor 1/A (default ladder only)"),
    "mode": (str, "exact", "exploded-map mode: exact | proxy"),
}
SCHEMAS = {
    "approximants": {"alpha": CASE["alpha"], "k": (int, 10, "number of convergents")},
    "setup": {**CASE},
    "brjuno": {"alpha": CASE["alpha"], "k": (int, 20, "number of terms")},
    "alpha0": {"N": (int, 1, "background quotient N"), "idx": (_ints, (2, 4), "indices n_j"),
               "k": (int, 50, "convergents requested")},
    "linearizer": {"alpha": CASE["alpha"], "M": (int, 200, "series order"),
                   "radius_frac": (float, 0.5, "residual circle as a fraction of r_hat")},
    "cycle": {"p": (int, 3, "numerator"), "q": (int, 8, "denominator"),
              "delta_abs": (float, 0.3, "|delta|"), "delta_arg": (float, 0.0, "arg delta")},
    "fn-check": {**CASE, "mode": GEOM["mode"], "samples": (int, 64, "sample points")},
    "geometry-check": {**CASE, **GEOM, "samples": (int, 100000, "monte-carlo samples"),
                       "raster": (int, 256, "Y_n raster resolution")},
    "fatou-check": {**CASE, **GEOM, "samples": (int, 50, "validation samples"),
                    "renorm": (_bool, True, "also estimate R(f_n)'(0)")},
    "density": {"alpha": CASE["alpha"], "theta": CASE["theta"], "n_values": (_ints, (4, 5, 6), "levels n"),
                "A_rule": (str, "power", "fixed | power"), "A": (float, 2.0, "base A of ceil(A^q_n)"),
                "A_fixed": (int, 10, "A_n under the fixed rule"), "a_floor": GEOM["a_floor"],
                "samples": (int, 100000, "monte-carlo samples"), "orbit": (_bool, False, "orbit path for Delta'_n"),
                "budget": (_opt_int, None, "orbit budget T (default 10 q^2 (A_n+1))"),
                "orbit_samples": (int, 2000, "orbit-path samples"), "trap_resolution": (int, 512, "trap mask pixels"),
                "trap_T": (int, 10000, "trap mask budget"), "workers": (int, 0, "worker threads (0 = all cores)")},
    "render": {"mask": (str, "", "mask file"), "scale": (int, 1, "pixel replication")},
}
CHECKS = {
    "setup": "dual evaluation of epsilon_n agrees to 2^-(P-20)",
    "approximants": "determinant identity holds",
    "alpha0": "determinant identity holds for every materializable k",
    "linearizer": "conjugacy residual < 1e-12",
    "cycle": "invariance residual < 1e-10",
    "fn-check": "f_n residuals finite and below 1e-9",
    "geometry-check": "monte-carlo density of Y_n within 3 sigma of quadrature",
    "fatou-check": "Abel residual < 1e-6 and rotation within 1e-2",
    "density": "dens_Yn >= 0.5 - slack - 3 sigma at the largest n and non-decreasing",
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_INPUT)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="artifact", description="Near-parabolic Siegel-disk experiments.")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, schema in SCHEMAS.items():
        sp = sub.add_parser(name)
        for key, (conv, default, help_) in {**COMMON, **schema}.items():
            sp.add_argument(f"--{key.replace('_', '-')}", dest=key, default=None, help=f"{help_} (default {default})")
        sp.add_argument("--config", help="strict key = value file; flags override it")
        sp.add_argument("--manifest", help="re-run from an emitted manifest")
        sp.add_argument("--out", default="out", help="output directory")
        sp.add_argument("--check", action="store_true", help="exit 3 when the acceptance property fails")
    return ap


def resolve(command: str, ns: argparse.Namespace) -> dict:
    schema = {**COMMON, **SCHEMAS[command]}
    opts = {k: v[1] for k, v in schema.items()}
    if ns.manifest:
        try:
            man = json.loads(Path(ns.manifest).read_text())
        except (OSError, ValueError) as exc:
            raise InputError(f"cannot read manifest: {exc}") from exc
        if man.get("command") != command:
            raise InputError(f"manifest is for {man.get('command')!r}, not {command!r}")
        unknown = set(man.get("options", {})) - set(schema)
        if unknown:
            raise InputError(f"unknown manifest keys {sorted(unknown)}")
        for k, v in man["options"].items():
            opts[k] = schema[k][0](" ".join(map(str, v)) if isinstance(v, list) else v) if v is not None else None
    if ns.config:
        try:
            text = Path(ns.config).read_text()
        except OSError as exc:
            raise InputError(f"cannot read config: {exc}") from exc
        opts.update(parse_config(text, {k: v[0] for k, v in schema.items()}))
    for k, (conv, _, _) in schema.items():
        raw = getattr(ns, k, None)
        if raw is not None:
            try:
                opts[k] = conv(raw)
            except (ValueError, TypeError) as exc:
                raise InputError(f"bad value for --{k}: {raw!r}") from exc
    return opts


# subcommands: each returns (artifacts {name: bytes|str}, summary dict, check passed)

def _case(o):
    return cfrac.make_setup(_seq(o["alpha"]), _seq(o["theta"]), o["n"], o["An"], o["precision"])


def _params(o, setup):
    if o["ladder"] == "desk":
        return geometry.make_params(setup, geometry.DESK_LADDER, geometry.DESK_FLOOR)
    if o["ladder"] == "default":
        return geometry.make_params(setup, None, o["a_floor"] if o["a_floor"] is not None else 0.5)
    raise InputError(f"unknown ladder {o['ladder']!r}")


def cmd_approximants(o):
    seq = _seq(o["alpha"])
    cs = cfrac.convergents(seq, o["k"])
    ok = all(cs[i + 1].p * cs[i].q - cs[i + 1].q * cs[i].p == (-1) ** (i + 1) for i in range(len(cs) - 1))
    rows = [(c.k, c.p, c.q) for c in cs]
    return {"convergents.csv": csv_text(("k", "p", "q"), rows)}, {"count": len(rows)}, ok


def cmd_setup(o):
    s = _case(o)
    tol = mpmath.mpf(2) ** -(s.precision_bits - 20)
    ok = s.dual_relative_error < tol
    return {"setup.json": json_text(s.as_dict())}, {"epsilon_n": s.eps, "dual_relative_error": float(s.dual_relative_error)}, ok


def cmd_brjuno(o):
    b = cfrac.brjuno_sum(_seq(o["alpha"]), o["k"], o["precision"])
    rows, acc = [], mpmath.mpf(0)
    for k, t in enumerate(b.terms, 1):
        acc += t
        rows.append((k, mpmath.nstr(t, 20), mpmath.nstr(acc, 20)))
    return {"brjuno.csv": csv_text(("k", "term", "partial_sum"), rows)}, {"value": float(b.value)}, True


def cmd_alpha0(o):
    seq = cfrac.build_alpha0(o["N"], o["idx"])
    p, q, rows, stopped = [1, 0], [0, 1], [], None
    for k in range(1, o["k"] + 1):
        try:
            a = seq.quotient(k)
        except ArtifactError as exc:
            stopped = f"k={k}: {exc}"
            break
        p.append(a * p[-1] + p[-2])
        q.append(a * q[-1] + q[-2])
        rows.append((k, a.bit_length(), p[-1].bit_length(), q[-1].bit_length(),
                     p[-1] * q[-2] - q[-1] * p[-2] == (-1) ** (k - 1)))
    ok = stopped is None and all(r[-1] for r in rows)
    return ({"alpha0.csv": csv_text(("k", "a_k_bits", "p_k_bits", "q_k_bits", "determinant_ok"), rows),
             "alpha0.txt": seq.dumps()},
            {"materialized": len(rows), "stopped": stopped}, ok)


def cmd_linearizer(o):
    alpha = cfrac.eval_to_precision(_seq(o["alpha"]), o["precision"]).value
    lam = dynamics.QuadraticMap(alpha, o["precision"]).lam_mp
    lin = dynamics.linearizer(lam, o["M"], precision_bits=o["precision"])
    res = lin.residual(o["radius_frac"] * lin.radius_estimate, 100)
    rows = [(m, float(mpmath.re(c)), float(mpmath.im(c))) for m, c in enumerate(lin.coeffs)]
    info = {"M": lin.M, "r_hat": lin.radius_estimate, "residual": float(res), "breakdown_at": lin.breakdown_at}
    return {"coefficients.csv": csv_text(("m", "re", "im"), rows), "linearizer.json": json_text(info)}, info, res < 1e-12


def cmd_cycle(o):
    delta = o["delta_abs"] * np.exp(1j * o["delta_arg"])
    cyc = dynamics.explosion_cycle(o["p"], o["q"], complex(delta), precision_bits=o["precision"])
    info = {"p": o["p"], "q": o["q"], "delta": delta, "eta": cyc.eta, "max_residual": cyc.max_residual,
            "continuation_steps": len(cyc.continuation_trace)}
    return ({"cycle.csv": csv_text(("j", "re", "im", "residual"), cyc.csv_rows()), "cycle.json": json_text(info)},
            info, cyc.max_residual < 1e-10)


def cmd_fn_check(o):
    s = _case(o)
    ctx = dynamics.ExplodedMapContext(s, o["mode"])
    rng = np.random.default_rng(o["seed"])
    r = 0.5 * ctx.univalence_radius if o["mode"] == "exact" else 0.5
    z = r * np.sqrt(rng.random(o["samples"])) * np.exp(2j * np.pi * rng.random(o["samples"]))
    w, dw, res = ctx.f_iter(z, 1)
    rows = [(float(a.real), float(a.imag), float(b.real), float(b.imag), float(c)) for a, b, c in zip(z, w, res)]
    info = {"mode": o["mode"], "q_n": s.q_n, "epsilon_n": s.eps, "max_residual": float(np.max(res)),
            "qn_expansion_residual": dynamics.qn_expansion_residual(ctx, 0.5 * r),
            "chi_prime0_abs": abs(dynamics.chi_prime0(ctx)), "univalence_radius": ctx.univalence_radius}
    ok = bool(np.all(np.isfinite(res)) and np.max(res) < 1e-9)
    return {"fn.csv": csv_text(("re_z", "im_z", "re_f", "im_f", "residual"), rows), "fn.json": json_text(info)}, info, ok


def cmd_geometry_check(o):
    s = _case(o)
    P = _params(o, s)
    est = density.dens(geometry.Annulus(P.r7, P.r8), geometry.Yn(), P, o["samples"], o["seed"])
    quad = geometry.yn_density_exact(P)
    t = 0.5 * (P.r7 + P.r8)
    arc = geometry.arc_coverage(P, t, 0.0, 2 * np.pi, 10000)
    pts = density.sample_Yn(P, 200, o["seed"])
    W, res, _ = geometry.lift_to_H_array(P, pts)
    n = o["raster"]
    bits = geometry.raster(P, geometry.Yn(), 0j, (P.r8, P.r8), (n, n))
    info = {"params": P.as_dict(), "dens_Yn": est.value, "stderr": est.stderr, "quadrature": quad,
            "arc": {"t": t, "length": arc.length, "stderr": arc.stderr, "pi_t": np.pi * t},
            "lift_max_residual": float(np.max(res)), "lift_in_strip": float(np.mean(
                geometry.contains_array(P, geometry.Hn_strip(), W)))}
    ok = abs(est.value - quad) < 3 * est.stderr + 1e-12
    return {"geometry.json": json_text(info), "yn.ppm": ppm_bytes(bits)}, info, ok


def cmd_fatou_check(o):
    s = _case(o)
    P = _params(o, s)
    ctx = fatou.LiftContext(P, dynamics.ExplodedMapContext(s, o["mode"]))
    phi = fatou.FatouCoordinate(ctx)
    Z = fatou.validation_samples(ctx, o["samples"], o["seed"], steps=3)
    abel = phi.abel_residual(Z)
    F3 = Z
    for _ in range(3):
        F3 = ctx.F(F3)[0]
    tele = np.abs(phi(F3) - phi(Z) - 3)
    info = {"fatou": phi.describe(), "phi_B_minus_B": abs(phi(np.array([phi.B]))[0] - phi.B),
            "abel_max": float(np.max(abel)), "telescoped_max": float(np.max(tele)),
            "cr_defect_max": float(np.max(phi.cr_defect(Z)))}
    ok = info["abel_max"] < 1e-6 and info["telescoped_max"] < 3e-6
    if o["renorm"]:
        rc = fatou.RenormContext(phi)
        est = fatou.rotation_check(rc, rc.rho_n / 20)
        target = np.exp(-2j * np.pi * s.theta)
        info["rotation"] = {"rho_n": rc.rho_n, "estimate": est.estimate, "target": target,
                            "error": abs(est.estimate - target), "spread": est.spread}
        ok = ok and abs(est.estimate - target) < 1e-2 and not est.unstable
    rows = [(float(a.real), float(a.imag), float(b)) for a, b in zip(Z, abel)]
    return {"fatou.json": json_text(info), "abel.csv": csv_text(("re", "im", "abel_residual"), rows)}, info, ok


def cmd_density(o):
    cfg = density.ExperimentConfig(
        alpha=_seq(o["alpha"]), theta=_seq(o["theta"]), n_values=o["n_values"], A_rule=o["A_rule"], A=o["A"],
        A_fixed=o["A_fixed"], a_floor=o["a_floor"], samples=o["samples"], seed=o["seed"], orbit=o["orbit"],
        budget=o["budget"], orbit_samples=o["orbit_samples"], trap_resolution=o["trap_resolution"],
        trap_T=o["trap_T"], precision_bits=o["precision"])
    workers = o["workers"] or os.cpu_count() or 1
    rows, text = density.density_experiment(cfg, workers=workers)
    arts = {"density.csv": text}
    if cfg.orbit:
        trap = density.alpha_trap(cfg)
        arts["alpha_trap.mask"] = mask_bytes(trap.bits, trap.meta_json())
    vals = [r["dens_Yn"] for r in rows]
    last = rows[-1]
    ok = last["dens_Yn"] >= 0.5 - density.DENSITY_SLACK - 3 * last["stderr_Yn"] and \
        all(b >= a for a, b in zip(vals, vals[1:]))
    return arts, {"dens_Yn": vals}, ok


def cmd_render(o):
    if not o["mask"]:
        raise InputError("--mask is required")
    try:
        bits, meta = read_mask(o["mask"])
    except OSError as exc:
        raise InputError(f"cannot read mask: {exc}") from exc
    k = max(1, o["scale"])
    img = np.kron(bits, np.ones((k, k), bool)) if k > 1 else bits
    side = "\n".join(f"{key} = {meta[key]}" for key in sorted(meta)) + f"\ninside_pixels = {int(bits.sum())}\n"
    return {"render.ppm": ppm_bytes(img), "render.txt": side}, {"inside_pixels": int(bits.sum())}, True


COMMANDS = {
    "approximants": cmd_approximants, "setup": cmd_setup, "brjuno": cmd_brjuno, "alpha0": cmd_alpha0,
    "linearizer": cmd_linearizer, "cycle": cmd_cycle, "fn-check": cmd_fn_check,
    "geometry-check": cmd_geometry_check, "fatou-check": cmd_fatou_check, "density": cmd_density,
    "render": cmd_render,
}


def _versions():
    return {"artifact": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "mpmath": mpmath.__version__}


def run(argv=None) -> int:
    try:
        ns = build_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    t0 = time.perf_counter()
    try:
        opts = resolve(ns.command, ns)
        arts, summary, ok = COMMANDS[ns.command](opts)
    except ArtifactError as exc:
        ctx = f" {exc.context}" if exc.context else ""
        print(f"artifact {ns.command}: {exc.code}: {exc}{ctx}", file=sys.stderr)
        return exc.exit_code
    if ns.check and not ok:
        print(f"artifact {ns.command}: check failed: {CHECKS.get(ns.command, 'property')}; {summary}", file=sys.stderr)
        return EXIT_CHECK
    out = Path(ns.out)
    manifest = {"command": ns.command, "options": opts, "versions": _versions(), "seed": opts["seed"],
                "wall_time_s": time.perf_counter() - t0, "check": bool(ns.check), "check_passed": bool(ok),
                "artifacts": sorted(arts), "summary": summary}
    try:
        for name, data in arts.items():
            (atomic_write_text if isinstance(data, str) else atomic_write_bytes)(out / name, data)
        atomic_write_text(out / "manifest.json", json_text(manifest))
    except OSError as exc:
        print(f"artifact {ns.command}: cannot write outputs: {exc}", file=sys.stderr)
        return EXIT_INPUT
    print(json_text(summary), end="", file=sys.stderr)
    return EXIT_OK


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
