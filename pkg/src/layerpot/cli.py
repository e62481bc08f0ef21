"""Command line front end: ``layerpot {eval-kernel, maxfunc-sweep, pv-check, verify}``.

Exit codes: 0 pass, 1 verification failure, 2 configuration error,
3 numerical non-convergence.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from . import _backend
from .coeffs import PRESETS, EllipticityError, apply_operator, factorize, from_config
from .fundsol import KR_MAX, FundamentalSolution, builtin, laplace_components, verify_ppgr_identity
from .geometry import QuadratureConfig, make_surface, surface_fd_gradient
from .kernels import (
    ADDENDS,
    DoubleLayerKernel,
    cialdea_bound_check,
    dl_kernel,
    dl_kernel_tangential_gradient,
    dl_potential,
    even_kernel,
    riesz_kernel,
)
from .maxfunc import (
    annulus_difference_scaling,
    geometric_radii,
    gradS_maximal,
    main_theorem_stability,
    main_theorem_sweep,
    maximal_sweep,
    stability,
)
from .pvalue import builtin_g, builtin_gamma, parse_eps_grid, truncated_difference

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3

DEFAULT_SURFACE = {2: "circle", 3: "sphere"}


class ConfigError(Exception):
    pass


class NumericalError(Exception):
    pass


# --------------------------------------------------------------------------
# configuration


def _load_config(args) -> dict:
    cfg = {}
    if args.config:
        try:
            cfg = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
    for key in ("operator", "surface", "seed", "k"):
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    cfg.setdefault("operator", "laplace3d")
    cfg.setdefault("k", 1.0)
    cfg.setdefault("seed", 0)
    if args.deterministic:
        cfg["deterministic"] = True
    return cfg


def _operator(cfg) -> FundamentalSolution:
    op = cfg["operator"]
    k = float(cfg.get("k", 1.0))
    if isinstance(op, str) and op.strip().startswith("{"):
        op = json.loads(op)
    if isinstance(op, dict) and "preset" in op:
        k = float(op.get("k", k))
        op = op["preset"]
    if isinstance(op, str):
        if op not in PRESETS:
            raise ConfigError(f"unknown operator preset {op!r}; choose from {', '.join(PRESETS)}")
        if op.startswith("helmholtz") and not k > 0:
            raise ConfigError("wave number k must be positive")
        return builtin(op, k)
    # explicit coefficients: only principal-part operators have built-in components
    coeffs = from_config(op)
    if np.any(coeffs.a1 != 0) or coeffs.a0 != 0:
        raise ConfigError("explicit operators with lower order terms need plugin components (library API)")
    return FundamentalSolution(coeffs, factorize(coeffs), laplace_components(coeffs.n), "custom")


def _surface(cfg, n):
    spec = cfg.get("surface") or DEFAULT_SURFACE.get(n)
    quad = QuadratureConfig(**cfg.get("quadrature", {}))
    quad.deterministic = bool(cfg.get("deterministic", quad.deterministic))
    surf = make_surface(spec, quad)
    if surf.n != n:
        raise ConfigError(f"surface dimension {surf.n} does not match operator dimension {n}")
    k = cfg.get("k", 1.0)
    if str(cfg.get("operator", "")).startswith("helmholtz") and float(k) * surf.diameter > KR_MAX:
        raise ConfigError(f"k * diameter exceeds {KR_MAX:g}; only desk-scale wave numbers are supported")
    return surf


def _point(text, n):
    try:
        vals = [float(v) for v in text.replace(" ", "").split(",")]
    except ValueError as exc:
        raise ConfigError(f"bad point {text!r}") from exc
    if len(vals) != n:
        raise ConfigError(f"point {text!r} has {len(vals)} coordinates, expected {n}")
    if not np.any(vals):
        raise ConfigError("point must be nonzero")
    return np.array(vals)


def _rng(seed):
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed))))


def _cplx(z):
    z = complex(z)
    return [z.real, z.imag]


def _manifest(args, cfg, outputs, started, extra=None):
    man = {
        "command": args.command,
        "argv": sys.argv[1:],
        "config": cfg,
        "seed": cfg.get("seed"),
        "quadrature": asdict(QuadratureConfig(**cfg.get("quadrature", {}))),
        "version": __version__,
        "backend": _backend.NAME,
        "wall_time_s": round(time.time() - started, 3),
        "outputs": [str(p) for p in outputs],
    }
    if extra:
        man.update(extra)
    return man


def _write_manifest(path: Path, manifest):
    mpath = path.with_name(path.name + ".manifest.json")
    mpath.write_text(json.dumps(manifest, indent=2, default=str) + "\n")
    return mpath


def _emit_json(args, cfg, payload, started):
    text = json.dumps(payload, indent=2, default=str)
    if args.out:
        out = Path(args.out)
        out.write_text(text + "\n")
        _write_manifest(out, _manifest(args, cfg, [out], started))
    print(text)


# --------------------------------------------------------------------------
# eval-kernel


def cmd_eval_kernel(args, cfg, started) -> int:
    fs = _operator(cfg)
    surf = _surface(cfg, fs.n)
    dlk = DoubleLayerKernel(fs, surf)
    rng = _rng(cfg["seed"])
    x = surf.point_at(_point(args.x, fs.n)) if args.x else surf.point(rng.standard_normal(fs.n))
    y = surf.point_at(_point(args.y, fs.n)) if args.y else surf.point(rng.standard_normal(fs.n))
    if np.linalg.norm(x.x - y.x) == 0:
        raise ConfigError("x and y coincide on the surface")
    kv = dl_kernel(dlk, x, y)
    out = {
        "operator": fs.name,
        "surface": surf.spec(),
        "x": x.x.tolist(),
        "y": y.x.tolist(),
        "distance": float(np.linalg.norm(x.x - y.x)),
        "kernel": _cplx(kv.value),
        "terms": {k: _cplx(v) for k, v in kv.terms.items()},
    }
    tg = dl_kernel_tangential_gradient(dlk, x, y)
    out["tangential_gradient"] = [_cplx(v) for v in tg.total]
    if args.addends:
        out["addends"] = {k: [_cplx(v) for v in vec] for k, vec in tg.addends.items()}
    if args.check:
        fd = surface_fd_gradient(surf, x, lambda p: dl_kernel(dlk, surf.point_at(p), y).value)
        err = float(np.linalg.norm(tg.total - fd) / max(np.linalg.norm(tg.total), 1e-300))
        out["fd_gradient"] = [_cplx(v) for v in fd]
        out["fd_rel_err"] = err
        out["tangentiality"] = float(abs(x.normal @ tg.total) / max(np.linalg.norm(tg.total), 1e-300))
    _emit_json(args, cfg, out, started)
    return EXIT_OK


# --------------------------------------------------------------------------
# maxfunc-sweep


def _fmt(v):
    return repr(float(v))


def _write_sweep_csv(path: Path, report):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["center_index", "rho", "value", "flag"])
    for i, rho, val, flag in report.rows():
        w.writerow([i, _fmt(rho), _fmt(val), int(flag)])
    path.write_text(buf.getvalue())


GNUPLOT_TEMPLATE = """# maximal function sweep: sup over centres of |truncated integral| versus rho
set datafile separator ','
set logscale x
set xlabel 'rho'
set ylabel '|integral|'
set key off
plot '{csv}' every ::1 using 2:3 with points pt 7 ps 0.3
"""


def cmd_maxfunc_sweep(args, cfg, started) -> int:
    fs = _operator(cfg)
    surf = _surface(cfg, fs.n)
    n = fs.n
    if args.radii < 1:
        raise ConfigError("radii grid must not be empty")
    if args.centers < 1:
        raise ConfigError("need at least one centre")
    h = args.component - 1
    if not 0 <= h < n:
        raise ConfigError(f"component must lie in 1..{n}")
    radii = geometric_radii(surf, args.radii, args.rho_min)
    centers = surf.sample_centers(args.centers)
    summary = {"kernel": args.kernel, "operator": fs.name, "surface": surf.spec(), "component": args.component,
               "centers": len(centers), "radii": len(radii), "rho_min": args.rho_min, "level": args.level}

    if args.kernel in ("riesz", "even"):
        k = riesz_kernel(n, h) if args.kernel == "riesz" else even_kernel(n)
        run = lambda r, lev: maximal_sweep(surf, k, centers, r, lev)
        summary["kernel_norm"] = k.norm
    elif args.kernel == "grad-fs":
        run = lambda r, lev: gradS_maximal(surf, fs, h, r, centers, lev)
    else:
        dlk = DoubleLayerKernel(fs, surf)
        run = None

    if run is not None:
        if args.stability:
            st = stability(run, radii, args.level, args.tol)
            report = st.coarse_report
            summary.update(stability_ratio=st.ratio, stability_change=st.change, stable=st.stable,
                           fine_maxEstimate=st.fine, diverging=not st.stable)
        else:
            report = run(radii, args.level)
    else:
        if args.stability:
            res = main_theorem_stability(surf, dlk, radii, centers, args.level, args.tol)
            report = res["total"][h].coarse_report
            summary["addends"] = {name: {"maxEstimate": r[h].coarse, "fine_maxEstimate": r[h].fine,
                                         "change": r[h].change, "stable": r[h].stable} for name, r in res.items()}
            tot = res["total"][h]
            summary.update(stability_ratio=tot.ratio, stability_change=tot.change, stable=tot.stable,
                           fine_maxEstimate=tot.fine, diverging=not tot.stable)
        else:
            mt = main_theorem_sweep(surf, dlk, radii, centers, args.level)
            report = mt.reports["total"][h]
            summary["addends"] = {name: {"maxEstimate": mt.reports[name][h].maxEstimate} for name in ADDENDS}

    summary["maxEstimate"] = report.maxEstimate
    ci, rho = report.argmax
    summary["argmax"] = {"center_index": ci, "rho": rho}
    summary["flagged"] = int(np.count_nonzero(~report.flags))

    if args.scaling:
        if args.kernel != "riesz":
            raise ConfigError("--scaling needs the odd riesz kernel")
        fit = annulus_difference_scaling(surf, riesz_kernel(n, h), args.rho_min / 2, centers=centers, level=args.level)
        summary["scaling"] = {"slope": fit.slope, "residual": fit.residual, "c_tilde": fit.c_tilde,
                              "noise_floor": fit.noise_floor, "status": fit.status, "pairs": fit.pairs}

    outputs = []
    if args.out:
        out = Path(args.out)
        _write_sweep_csv(out, report)
        outputs.append(out)
        sum_path = out.with_suffix(".summary.json")
        sum_path.write_text(json.dumps(summary, indent=2, default=str) + "\n")
        outputs.append(sum_path)
        if args.gnuplot:
            gp = out.with_suffix(".gp")
            gp.write_text(GNUPLOT_TEMPLATE.format(csv=out.name))
            outputs.append(gp)
        man = _manifest(args, cfg, outputs, started)
        for p in outputs:
            _write_manifest(p, man)
    print(json.dumps(summary, indent=2, default=str))
    if not np.all(np.isfinite(report.raw)):
        return EXIT_NUMERIC
    return EXIT_OK


# --------------------------------------------------------------------------
# pv-check


def cmd_pv_check(args, cfg, started) -> int:
    m = args.dim
    a = None
    if args.a:
        try:
            a = [float(v) for v in args.a.split(",")]
        except ValueError as exc:
            raise ConfigError(f"bad gradient vector {args.a!r}") from exc
        if len(a) != m:
            raise ConfigError(f"--a needs {m} entries")
    elif args.gamma in ("linear", "mixed", "holder"):
        a = [0.5] + [0.0] * (m - 1)
    try:
        gf = builtin_gamma(args.gamma, a, args.holder, m)
        g = builtin_g(args.g, m)
        eps_grid = parse_eps_grid(args.eps_grid, args.per_decade)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    rows = []
    any_fail = False
    unconverged = False
    for eps in eps_grid:
        try:
            c = truncated_difference(gf, g, float(eps))
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        any_fail |= not c.ok_b or c.ok_c is False
        unconverged |= not c.converged
        rows.append(c)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["eps", "alpha", "lhs", "bound_b", "bound_c", "ok_b", "ok_c"])
    for c in rows:
        w.writerow([_fmt(c.eps), _fmt(c.alphaEps), _fmt(c.lhs), _fmt(c.bound_b),
                    "" if c.bound_c is None else _fmt(c.bound_c), int(c.ok_b), "" if c.ok_c is None else int(c.ok_c)])
    text = buf.getvalue()
    if args.out:
        out = Path(args.out)
        out.write_text(text)
        _write_manifest(out, _manifest(args, cfg, [out], started, {"gamma": gf.name, "g": g.name}))
    sys.stdout.write(text)
    if any_fail:
        return EXIT_FAIL
    if unconverged:
        return EXIT_NUMERIC
    return EXIT_OK


# --------------------------------------------------------------------------
# verify


def _check(name, ok, **data):
    return {"name": name, "pass": bool(ok), **data}


def run_verify(fs: FundamentalSolution, surf, rng) -> list:
    n = fs.n
    checks = []
    fact = fs.fact
    a2 = fs.coeffs.a2
    recon = float(np.linalg.norm(fact.T @ fact.T.T - a2) / np.linalg.norm(a2))
    checks.append(_check("cholesky_reconstruction", recon <= 1e-12, residual=recon))

    xs = rng.standard_normal((200, n))
    ppgr = max(verify_ppgr_identity(fact, x) for x in xs)
    checks.append(_check("ppgr_identity", ppgr <= 1e-12, residual=ppgr))

    xi = rng.standard_normal((1000, n))
    gap = float(np.min(np.linalg.norm(xi @ fact.Tinv.T, axis=1) * fact.opNormT - np.linalg.norm(xi, axis=1)))
    checks.append(_check("inverse_norm_bound", gap >= -1e-12, min_margin=gap))

    # gradient against central differences
    pts = rng.standard_normal((50, n))
    pts *= (rng.uniform(0.1, 2.0, 50) / np.linalg.norm(pts, axis=1))[:, None]
    worst = 0.0
    for x in pts:
        h = 1e-5 * np.linalg.norm(x)
        fd = np.array([(fs.value(x + h * e) - fs.value(x - h * e)) / (2 * h) for e in np.eye(n)])
        worst = max(worst, float(np.linalg.norm(fs.gradient(x) - fd) / np.linalg.norm(fs.gradient(x))))
    checks.append(_check("gradient_fd", worst <= 1e-6, max_rel_err=worst))

    # decomposition: value minus principal and log parts stays bounded near 0
    comp = fs.components
    rays = rng.standard_normal((8, n))
    rays /= np.linalg.norm(rays, axis=1)[:, None]
    rem = []
    for r in (1e-2, 1e-4, 1e-6):
        x = r * rays
        lg = comp.B1(x) + (comp.b0 if n != 2 else 0)
        rem.append(float(np.max(np.abs(fs.value(x) - fs.principal_part(x) - lg * np.log(r)))))
    checks.append(_check("decomposition_bounded", max(rem) < 1.0 and rem[-1] <= 2 * rem[0] + 1e-12, remainders=rem))

    if fs.exact is not None:
        x = rays * 0.7
        err = float(np.max(np.abs(fs.value(x) - fs.exact(x)) / np.abs(fs.exact(x))))
        checks.append(_check("closed_form_agreement", err <= 1e-10, max_rel_err=err))

    theta = rays
    r0 = np.zeros(len(theta))
    odd = float(np.max(np.abs(comp.A1(-theta, r0) + comp.A1(theta, r0))))
    even = float(np.max(np.abs(comp.A2(-theta, r0) - comp.A2(theta, r0))))
    checks.append(_check("parity", odd <= 1e-10 and even <= 1e-10, A1_odd_residual=odd, A2_even_residual=even))

    x0 = rays[0] * 0.8
    lead = abs(fs.gradient(x0)).max() / 0.8
    res = abs(apply_operator(fs.coeffs, fs.value, x0, h=1e-4))
    checks.append(_check("annihilation", res <= 1e-5 * max(lead, 1.0) * 10, residual=float(res)))

    if fs.coeffs.a0 == 0 and not np.any(fs.coeffs.a1):
        dlk = DoubleLayerKernel(fs, surf)
        x = surf.point(rng.standard_normal(n))
        q = dl_potential(dlk, lambda y: np.ones(len(y)), x)
        tol = 1e-4 if n == 3 else 1e-6
        checks.append(_check("gauss_identity", abs(q.value - 0.5) <= tol and q.converged, value=float(q.value.real)))

    ok = 0
    for h in range(n):
        k = riesz_kernel(n, h)
        u = rng.standard_normal((300, n))
        v = rng.standard_normal((300, n))
        ok += int(np.sum(cialdea_bound_check(k, u, v)[2]))
    checks.append(_check("cialdea_bound", ok == 300 * n, ok_rate=ok / (300 * n)))
    return checks


def cmd_verify(args, cfg, started) -> int:
    fs = _operator(cfg)
    surf = _surface(cfg, fs.n)
    checks = run_verify(fs, surf, _rng(cfg["seed"]))
    payload = {"operator": fs.name, "checks": checks, "pass": all(c["pass"] for c in checks)}
    _emit_json(args, cfg, payload, started)
    return EXIT_OK if payload["pass"] else EXIT_FAIL


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--operator", help="preset name or JSON coefficients")
    common.add_argument("--k", type=float, help="wave number for Helmholtz presets")
    common.add_argument("--surface", help="shape name or JSON shape spec")
    common.add_argument("--config", help="JSON file with operator/surface/quadrature/seed")
    common.add_argument("--seed", type=int)
    common.add_argument("--deterministic", action="store_true")
    common.add_argument("--out", help="output path")
    common.add_argument("--json", action="store_true", help="machine-readable output (default for all commands)")

    p = argparse.ArgumentParser(prog="layerpot", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    e = sub.add_parser("eval-kernel", parents=[common], help="double layer kernel and its tangential gradient")
    e.add_argument("--x", help="comma separated point (projected radially onto the surface)")
    e.add_argument("--y")
    e.add_argument("--addends", action="store_true")
    e.add_argument("--check", action="store_true", help="compare with a surface finite-difference gradient")

    m = sub.add_parser("maxfunc-sweep", parents=[common], help="maximal function of truncated integrals")
    m.add_argument("--kernel", choices=("riesz", "even", "dl-grad", "grad-fs"), default="riesz")
    m.add_argument("--component", type=int, default=1, help="vector component (1-based)")
    m.add_argument("--radii", type=int, default=24)
    m.add_argument("--rho-min", type=float, default=1e-3)
    m.add_argument("--centers", type=int, default=None)
    m.add_argument("--level", type=int, default=0)
    m.add_argument("--stability", action="store_true", help="also run one refinement level with rho_min halved")
    m.add_argument("--tol", type=float, default=0.01)
    m.add_argument("--scaling", action="store_true", help="fit the annulus scaling law (riesz only)")
    m.add_argument("--gnuplot", action="store_true")

    v = sub.add_parser("pv-check", parents=[common], help="compare graph and tangent-plane truncations")
    v.add_argument("--gamma", choices=("zero", "linear", "quad", "mixed", "holder", "sinprod"), default="quad")
    v.add_argument("--a", help="gradient of gamma at 0, comma separated")
    v.add_argument("--holder", type=float, default=0.5)
    v.add_argument("--g", choices=("riesz-odd", "weak", "critical"), default="riesz-odd")
    v.add_argument("--eps-grid", default="1e-1:1e-4")
    v.add_argument("--per-decade", type=int, default=1)
    v.add_argument("--dim", type=int, default=2, choices=(1, 2), help="parameter dimension n-1")

    sub.add_parser("verify", parents=[common], help="identity and oracle checks for an operator")
    return p


COMMANDS = {
    "eval-kernel": cmd_eval_kernel,
    "maxfunc-sweep": cmd_maxfunc_sweep,
    "pv-check": cmd_pv_check,
    "verify": cmd_verify,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else EXIT_OK
    started = time.time()
    try:
        cfg = _load_config(args)
        if args.command == "maxfunc-sweep" and args.centers is None:
            args.centers = 200 if (_operator(cfg).n == 3) else 256
        return COMMANDS[args.command](args, cfg, started)
    except (ConfigError, EllipticityError, ValueError, KeyError) as exc:
        print(f"layerpot: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, FloatingPointError) as exc:
        print(f"layerpot: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
