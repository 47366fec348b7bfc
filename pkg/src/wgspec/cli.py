"""Command-line entry point: reproducible experiments with JSON/CSV output.

Exit codes: 0 success, 1 error, 2 success with warnings (e.g. a degenerate
second eigenvalue).  Every JSON artifact echoes the invocation arguments and
a timestamp for reproducibility.
"""

from __future__ import annotations

import argparse
import json
import sys
import time

import numpy as np

from . import conditions, crosssec, curves, mesh as meshmod, shapederiv


def _echo(args):
    return {
        "argv": list(getattr(args, "_argv", sys.argv[1:])),
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S"),
        "options": {k: (v if not isinstance(v, np.ndarray) else list(v))
                    for k, v in vars(args).items()
                    if not callable(v) and k != "_argv"},
    }


def _write(path, text):
    if path in (None, "-"):
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
    else:
        with open(path, "w") as f:
            f.write(text)


def _load_mesh(args):
    if args.rect:
        ell, L, nx, ny = args.rect
        return meshmod.gen_rectangle(float(ell), float(L), int(nx), int(ny))
    if args.triangle:
        return meshmod.gen_right_triangle(int(args.triangle))
    if args.polygon:
        with open(args.polygon) as f:
            data = json.load(f)
        poly = meshmod.Polygon(np.asarray(data["loop"]), float(data["target_h"]))
        return meshmod.gen_polygon(poly)
    if args.gmsh:
        with open(args.gmsh) as f:
            return meshmod.import_gmsh22(f.read())
    if args.mesh_json:
        with open(args.mesh_json) as f:
            return meshmod.mesh_from_json(f.read())
    raise ValueError("no mesh source given")


def cmd_section(args):
    mesh = _load_mesh(args)
    rep = crosssec.analyze(
        mesh, origin=tuple(args.origin), tol=args.tol,
        estimate_error=not args.fast,
    )
    payload = json.loads(rep.to_json())
    payload["config"] = _echo(args)
    _write(args.output, json.dumps(payload, indent=2))
    return 2 if not rep.simple else 0


_CURVES = {
    "line": lambda a: curves.line(),
    "circle": lambda a: curves.circle(a.radius),
    "helix": lambda a: curves.helix(a.radius, a.pitch),
    "parabola": lambda a: curves.parabola(a.scale),
    "sbend": lambda a: curves.sbend(),
}


def cmd_curve(args):
    if args.samples:
        data = np.loadtxt(args.samples, delimiter=",")
        curve = curves.from_samples(data[:, 0], data[:, 1:])
    else:
        curve = _CURVES[args.kind](args).window(args.window)
    fc = curves.frame_curve(curve, args.n)
    norms = curves.curvature_norms(fc)
    Y = curves.yvector(fc)
    summary = {
        "name": fc.name,
        "window": [curve.t0, curve.t1],
        "n": args.n,
        "kappa_sup": norms["sup"],
        "kappa_l1": norms["l1"],
        "kappa_l1_tail": norms["tail"],
        "tail_missing": norms["tail_missing"],
        "Y": [float(Y[0]), float(Y[1])],
        "orthonormality_defect": fc.orthonormality_defect(),
        "config": _echo(args),
    }
    # for planar sign-constant curvature the tail extends Y exactly
    planar = float(np.abs(fc.k2).max()) <= 1e-10
    sign_const = fc.k1.min() >= -1e-12 or fc.k1.max() <= 1e-12
    if planar and sign_const and norms["tail"] > 0 and not norms["tail_missing"]:
        sgn = 1.0 if fc.k1.max() > 0 else -1.0
        summary["Y_total"] = [float(Y[0] + sgn * norms["tail"]), float(Y[1])]
    _write(args.output, json.dumps(summary, indent=2))
    if args.csv:
        _write(args.csv, fc.to_csv())
    return 2 if norms["tail_missing"] and not curve.asymptotically_straight else 0


def cmd_check(args):
    with open(args.section) as f:
        sec = json.load(f)
    with open(args.curve) as f:
        cur = json.load(f)
    medium = conditions.Medium(eps0=args.eps0, mu0=args.mu0)
    X = np.asarray(sec["X_boundary"], dtype=float)
    Y = np.asarray(cur.get("Y_total", cur["Y"]), dtype=float)
    kappa_l1 = cur["kappa_l1"] + cur.get("kappa_l1_tail", 0.0)
    rep = conditions.build_report(
        X=X, Y=Y,
        lambda2=sec["lambda2"], b=sec["b"],
        kappa_sup=cur["kappa_sup"],
        kappa_l1=kappa_l1,
        theta="auto" if args.theta == "auto" else float(args.theta),
        medium=medium,
        eps0_in_rhs=args.eps0_in_rhs,
        delta=args.delta,
        inputs={"section": args.section, "curve": args.curve,
                "delta": args.delta, "config": _echo(args)},
    )
    _write(args.output, rep.to_json())
    return 0 if rep.trapped.holds else 2


def cmd_shapederiv(args):
    ell, L = args.rect[0], args.rect[1]
    nx = args.nx or 128
    ny = args.ny or max(4, int(round(nx * L / ell)))
    mesh = meshmod.gen_rectangle(ell, L, nx, ny)
    w = np.asarray(args.w, dtype=float)
    w = w / np.linalg.norm(w)

    if args.analytic_compare:
        import math

        from .fem import assemble, neumann_eigs

        spec = neumann_eigs(mesh, 2, tol=args.tol)
        _, M = assemble(mesh)
        lam2 = float(spec.eigenvalues[1])
        psi = spec.eigenvectors[:, 1]
        psi = psi / math.sqrt(psi @ (M @ psi))
        ref = math.sqrt(2.0 / (ell * L)) * np.cos(np.pi * mesh.vertices[:, 0] / ell)
        if psi @ (M @ ref) < 0:
            psi = -psi
        adj = shapederiv.adjoint_solve(mesh, lam2, psi, w)
        if abs(w[0]) > abs(w[1]):
            q_ref = -(2.0 * math.sqrt(2.0) / math.pi) * math.sqrt(ell / L) * np.sin(
                np.pi * mesh.vertices[:, 0] / ell
            )
            integrand_ref = (4 * np.pi / (ell**2 * L)) * np.cos(
                np.pi * mesh.vertices[:, 0] / ell
            ) * np.sin(np.pi * mesh.vertices[:, 0] / ell)
        else:
            q_ref = math.sqrt(2.0 / ell) * (
                -2.0 * mesh.vertices[:, 1] / math.sqrt(L) + math.sqrt(L)
            ) * np.cos(np.pi * mesh.vertices[:, 0] / ell)
            integrand_ref = (2 * np.pi**2 / ell**3) * (
                -2 * mesh.vertices[:, 1] / L + 1
            ) * (np.sin(np.pi * mesh.vertices[:, 0] / ell) ** 2
                 - np.cos(np.pi * mesh.vertices[:, 0] / ell) ** 2)
        err = adj.q - q_ref
        l2 = math.sqrt(err @ (M @ err)) / math.sqrt(q_ref @ (M @ q_ref))
        mids, vals = shapederiv.boundary_integrand(mesh, lam2, psi, adj.q, w)
        a = mesh.boundary_edges[:, 0]
        b = mesh.boundary_edges[:, 1]
        iref = 0.5 * (integrand_ref[a] + integrand_ref[b])
        payload = {
            "lambda2": lam2,
            "adjoint_l2_rel_error": l2,
            "integrand_max_error": float(np.abs(vals - iref).max()),
            "config": _echo(args),
        }
        _write(args.output, json.dumps(payload, indent=2))
        return 0

    c, R = args.bump_center, args.bump_radius
    x, y = mesh.vertices[:, 0], mesh.vertices[:, 1]
    V = np.zeros_like(mesh.vertices)
    side = args.bump_side
    prof = np.cos(np.pi * (x - c) / (2 * R)) ** 2 * (np.abs(x - c) < R)
    if side == "top":
        V[np.abs(y - L) < 1e-12, 1] = prof[np.abs(y - L) < 1e-12]
    else:
        V[np.abs(y) < 1e-12, 1] = -prof[np.abs(y) < 1e-12]
    rep = shapederiv.fd_check(mesh, V, w, args.ladder, tol=args.tol)
    payload = json.loads(rep.to_json())
    payload["config"] = _echo(args)
    _write(args.output, json.dumps(payload, indent=2))
    return 0


def cmd_sweep(args):
    lo, hi, step = args.radii
    radii = list(np.arange(lo, hi + 0.5 * step, step))
    rows = shapederiv.bump_sweep(
        args.rect[0], args.rect[1], args.side, args.center, radii,
        target_h=args.target_h, tol=args.tol,
    )
    _write(args.output, shapederiv.sweep_to_csv(rows))
    return 1 if all(r.X is None for r in rows) else 0


def _radii(text):
    parts = text.split(":")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("radii must be lo:hi:step")
    return tuple(float(p) for p in parts)


def build_parser():
    p = argparse.ArgumentParser(
        prog="wgspec",
        description="Spectral trapping toolkit for bent/twisted waveguides",
    )
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("section", help="analyze a cross-section mesh")
    s.add_argument("--rect", nargs=4, type=float, metavar=("ELL", "L", "NX", "NY"))
    s.add_argument("--triangle", type=int, metavar="N")
    s.add_argument("--polygon", metavar="FILE.json")
    s.add_argument("--gmsh", metavar="FILE.msh")
    s.add_argument("--mesh-json", metavar="FILE.json")
    s.add_argument("--origin", nargs=2, type=float, default=[0.0, 0.0])
    s.add_argument("--tol", type=float, default=1e-8)
    s.add_argument("--fast", action="store_true",
                   help="skip the refinement-based error estimate")
    s.add_argument("-o", "--output", default="-")
    s.set_defaults(func=cmd_section)

    c = sub.add_parser("curve", help="frame a base curve and report norms")
    kind = c.add_mutually_exclusive_group()
    for name in _CURVES:
        kind.add_argument(f"--{name}", dest="kind", action="store_const",
                          const=name)
    c.add_argument("--samples", metavar="FILE.csv")
    c.add_argument("--radius", type=float, default=1.0)
    c.add_argument("--pitch", type=float, default=0.5)
    c.add_argument("--scale", type=float, default=1.0)
    c.add_argument("--window", type=float, default=50.0)
    c.add_argument("--n", type=int, default=20000)
    c.add_argument("--csv", default=None)
    c.add_argument("-o", "--output", default="-")
    c.set_defaults(func=cmd_curve, kind="parabola")

    k = sub.add_parser("check", help="evaluate the trapping conditions")
    k.add_argument("--section", required=True)
    k.add_argument("--curve", required=True)
    k.add_argument("--theta", default="auto")
    k.add_argument("--delta", type=float, default=None,
                   help="evaluate the slightly-curved family at this scale")
    k.add_argument("--eps0", type=float, default=1.0)
    k.add_argument("--mu0", type=float, default=1.0)
    k.add_argument("--eps0-in-rhs", action="store_true")
    k.add_argument("-o", "--output", default="-")
    k.set_defaults(func=cmd_check)

    d = sub.add_parser("shapederiv", help="adjoint shape derivative checks")
    d.add_argument("--rect", nargs=2, type=float, default=[2.0, 1.0])
    d.add_argument("--nx", type=int)
    d.add_argument("--ny", type=int)
    d.add_argument("--w", nargs=2, type=float, required=True)
    d.add_argument("--analytic-compare", action="store_true")
    d.add_argument("--bump-side", choices=["top", "bottom"], default="top")
    d.add_argument("--bump-center", type=float, default=4.0)
    d.add_argument("--bump-radius", type=float, default=0.5)
    d.add_argument("--ladder", nargs="+", type=float,
                   default=[1e-3, 2e-3, 4e-3])
    d.add_argument("--tol", type=float, default=1e-8)
    d.add_argument("-o", "--output", default="-")
    d.set_defaults(func=cmd_shapederiv)

    w = sub.add_parser("sweep", help="bump-radius sweep on the rectangle")
    w.add_argument("--rect", nargs=2, type=float, default=[2 * np.pi, np.pi])
    w.add_argument("--side", choices=["top", "bottom", "left", "right"],
                   default="top")
    w.add_argument("--center", type=float, default=1.7)
    w.add_argument("--radii", type=_radii, default=(0.2, 0.64, 0.05),
                   metavar="LO:HI:STEP")
    w.add_argument("--target-h", type=float, default=0.06)
    w.add_argument("--tol", type=float, default=1e-8)
    w.add_argument("-o", "--output", default="-")
    w.set_defaults(func=cmd_sweep)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    args._argv = [str(a) for a in (argv if argv is not None else sys.argv[1:])]
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: no such file: {exc.filename}", file=sys.stderr)
        return 1
    except (KeyError, json.JSONDecodeError) as exc:
        print(f"error: bad input schema: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
