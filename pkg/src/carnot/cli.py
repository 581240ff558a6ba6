"""Command-line front end.

Commands::

    carnot info --group heisenberg
    carnot distance --group heisenberg --target 0,0,1 --out control.csv
    carnot scan --group h_times_r --base 0,0,1,0 --axes 3,4 --u-range 0.5,1.5 --v-range -0.2,0.2 --grid 5,5
    carnot probe --probe engel-vertical

Exit codes: 0 success or consistent probe, 1 usage or configuration error,
2 probe violation, 3 inconclusive probe, 4 solver non-convergence on a
required point. Output is deterministic for a fixed configuration and seed.
"""

from __future__ import annotations

import argparse
import csv
import io
import sys

import numpy as np

from . import probes
from .distance import SolverOptions, distance
from .errors import CarnotError, NotConvergedError, OrthogonalityError
from .groups import StepTwoGroup, check_metivier, load_group
from .linalg_skew import Bivector

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VIOLATION = 2
EXIT_INCONCLUSIVE = 3
EXIT_NOT_CONVERGED = 4

PROBE_KINDS = (
    "cusp",
    "free-cusp",
    "engel-vertical",
    "engel-horizontal",
    "horizontal",
    "second-difference",
    "martinet-vertical",
    "martinet-horizontal",
)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """Argument parser that reports usage errors with exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _floats(text):
    try:
        return [float(v) for v in str(text).replace(" ", "").split(",") if v != ""]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _ints(text):
    vals = _floats(text)
    if any(v != int(v) for v in vals):
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    return [int(v) for v in vals]


def _add_solver_flags(p):
    d = SolverOptions()
    p.add_argument("--n-steps", type=int, default=d.n_steps, help=f"grid cells per control (default: {d.n_steps})")
    p.add_argument("--n-starts", type=int, default=d.n_starts, help=f"multistart count (default: {d.n_starts})")
    p.add_argument("--seed", type=int, default=d.rng_seed, help=f"random seed (default: {d.rng_seed})")
    p.add_argument("--feas-tol", type=float, default=d.feas_tol, help=f"endpoint tolerance (default: {d.feas_tol:g})")


def build_parser():
    parser = _Parser(prog="carnot", description="Sub-Riemannian distances and semiconcavity probes on Carnot groups.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("info", help="structure summary and Metivier check")
    p.add_argument("--group", required=True, help="preset name (e.g. heisenberg, free(3)) or JSON config path")

    p = sub.add_parser("distance", help="distance from the identity to a target")
    p.add_argument("--group", required=True, help="preset name or JSON config path")
    p.add_argument("--target", required=True, type=_floats, help="comma-separated coordinates x1,..,xm,t1,..,tl")
    p.add_argument("--out", help="write the optimal control to this CSV file")
    _add_solver_flags(p)

    p = sub.add_parser("scan", help="distance on a 2-D coordinate section")
    p.add_argument("--group", required=True, help="preset name or JSON config path")
    p.add_argument("--base", required=True, type=_floats, help="base point of the section")
    p.add_argument("--axes", required=True, type=_ints, help="two 1-based coordinate indices, e.g. 3,4")
    p.add_argument("--u-range", required=True, type=_floats, help="lo,hi offsets along the first axis")
    p.add_argument("--v-range", required=True, type=_floats, help="lo,hi offsets along the second axis")
    p.add_argument("--grid", required=True, type=_ints, help="number of samples along each axis, e.g. 5,5")
    p.add_argument("--out", help="CSV output path (default: stdout)")
    _add_solver_flags(p)

    p = sub.add_parser("probe", help="difference-quotient probe with a verdict")
    p.add_argument("--probe", required=True, choices=PROBE_KINDS, help="probe kind")
    p.add_argument("--group", help="preset name or JSON config path (cusp, free-cusp, horizontal, second-difference)")
    p.add_argument("--params", type=_floats, help="probe parameters (betas, lambdas, scales or radii)")
    p.add_argument("--w", type=_floats, help="cusp: horizontal unit vector (default: kernel of the Metivier witness)")
    p.add_argument("--sigma", type=_floats, help="cusp: vertical covector; free-cusp: bivector coefficients")
    p.add_argument("--base", type=_floats, help="base point (free-cusp, horizontal, second-difference)")
    p.add_argument("--direction", type=_floats, help="second-difference: coordinate direction h")
    p.add_argument("--x2", type=float, default=1.0, help="Engel probes: x2 coordinate (default: 1)")
    p.add_argument("--out", help="CSV output path (default: stdout)")
    _add_solver_flags(p)
    return parser


def _options(args):
    try:
        return SolverOptions(n_steps=args.n_steps, n_starts=args.n_starts, rng_seed=args.seed, feas_tol=args.feas_tol)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _emit(text, path, stdout):
    if path:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    else:
        stdout.write(text)


# -- commands ---------------------------------------------------------------------


def cmd_info(args, stdout):
    G = load_group(args.group)
    lines = [f"group: {G.name}", f"kind: {G.kind}"]
    if isinstance(G, StepTwoGroup):
        lines += [f"m: {G.m}", f"ell: {G.ell}", "hormander: yes"]
        rep = check_metivier(G)
        lines.append(f"metivier: {rep.verdict} ({rep.method})")
        if rep.witness_sigma is not None:
            lines.append("witness sigma: " + ",".join(f"{v:.6g}" for v in rep.witness_sigma))
        if rep.verdict == "yes":
            lines.append("abnormal minimizers: none")
        elif G.free:
            lines.append(f"abnormal set: union of W x ^2 W over subspaces W with dim W = {G.m - 2}")
        elif rep.verdict == "no":
            lines.append("abnormal minimizers: present")
    else:
        lines += [f"dimension: {G.dim}", f"controls: {G.m}", "weights: " + ",".join(str(w) for w in G.weights)]
        lines.append("metivier: not applicable (not step two)")
        if G.kind == "engel":
            lines.append("abnormal set: line (0, x2, 0, 0)")
        else:
            lines.append("abnormal set: line (x, 0, 0)")
    stdout.write("\n".join(lines) + "\n")
    return EXIT_OK


def cmd_distance(args, stdout):
    G = load_group(args.group)
    opts = _options(args)
    if len(args.target) != G.dim:
        raise UsageError(f"--target needs {G.dim} coordinates for {G.name}, got {len(args.target)}")
    try:
        res = distance(G, args.target, opts)
        code = EXIT_OK
    except NotConvergedError as err:
        res, code = err.result, EXIT_NOT_CONVERGED
    if args.out:
        res.control.to_csv(args.out)
    stdout.write(res.to_json(args.out) + "\n")
    return code


def cmd_scan(args, stdout):
    G = load_group(args.group)
    opts = _options(args)
    base = np.asarray(args.base, dtype=float)
    if base.shape[0] != G.dim:
        raise UsageError(f"--base needs {G.dim} coordinates for {G.name}")
    if len(args.axes) != 2 or not all(1 <= a <= G.dim for a in args.axes) or args.axes[0] == args.axes[1]:
        raise UsageError(f"--axes needs two distinct indices in 1..{G.dim}")
    for name in ("u_range", "v_range"):
        if len(getattr(args, name)) != 2:
            raise UsageError(f"--{name.replace('_', '-')} needs lo,hi")
    if len(args.grid) != 2 or min(args.grid) < 0:
        raise UsageError("--grid needs two nonnegative counts")
    nu, nv = args.grid
    us = np.linspace(*args.u_range, nu)
    vs = np.linspace(*args.v_range, nv)
    ia, ib = args.axes[0] - 1, args.axes[1] - 1

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["u", "v", "distance", "converged"])
    for u in us:
        for v in vs:
            g = base.copy()
            g[ia] += u
            g[ib] += v
            try:
                value, ok = distance(G, g, opts).value, True
            except NotConvergedError as err:
                value, ok = err.result.value, False
            writer.writerow([repr(float(u)), repr(float(v)), repr(float(value)), str(ok).lower()])
    _emit(buf.getvalue(), args.out, stdout)
    return EXIT_OK


def _default_cusp_pair(G):
    rep = check_metivier(G)
    if rep.verdict != "no":
        raise OrthogonalityError(f"{G.name}: no sigma with degenerate sigma.A, so no cusp pair exists")
    sigma = rep.witness_sigma
    _, _, Vt = np.linalg.svd(G.sigma_A(sigma))
    return Vt[-1], sigma


def _run_probe(args, opts):
    kind = args.probe

    def need_group():
        if not args.group:
            raise UsageError(f"probe {kind} needs --group")
        return load_group(args.group)

    if kind == "cusp":
        G = need_group()
        if not isinstance(G, StepTwoGroup):
            raise UsageError("probe cusp needs a step-two group")
        if args.w is None or args.sigma is None:
            w, sigma = _default_cusp_pair(G)
        w = w if args.w is None else args.w
        sigma = sigma if args.sigma is None else args.sigma
        return probes.vertical_cusp_probe(G, w, sigma, args.params or (0.01, 0.05, 0.1), opts)
    if kind == "free-cusp":
        G = need_group()
        if not (isinstance(G, StepTwoGroup) and G.free):
            raise UsageError("probe free-cusp needs a free group")
        base = args.base if args.base is not None else np.eye(G.dim)[0]
        sigma = args.sigma if args.sigma is not None else Bivector.basis(G.m, G.m - 2, G.m - 1).coeffs
        return probes.free_vertical_cusp_probe(G, base, sigma, args.params or (0.01, 0.05, 0.1), opts)
    if kind == "engel-vertical":
        return probes.engel_vertical_probe(args.x2, args.params or (0.05, 0.1, 0.2), opts)
    if kind == "engel-horizontal":
        return probes.engel_horizontal_probe(args.x2, args.params or (0.4, 0.2, 0.1), opts)
    if kind == "horizontal":
        G = need_group()
        if not (isinstance(G, StepTwoGroup) and G.free and G.m >= 3):
            raise UsageError("probe horizontal needs a free group of rank >= 3")
        base = args.base if args.base is not None else np.eye(G.dim)[0]
        radii = args.params or (0.1,)
        angles = np.linspace(0.0, np.pi / 2, 3)
        e2, e3 = np.eye(G.m)[1], np.eye(G.m)[2]
        ys = [r * (np.cos(a) * e2 + np.sin(a) * e3) for r in radii for a in angles]
        return probes.horizontal_semiconcavity_probe(G, base, ys, max(radii), opts)
    if kind == "second-difference":
        G = need_group()
        if args.base is None or args.direction is None:
            raise UsageError("probe second-difference needs --base and --direction")
        return probes.second_difference(G, args.base, args.direction, args.params or (0.1, 0.05, 0.025), opts)
    if kind == "martinet-vertical":
        return probes.martinet_probes("vertical", args.params, opts)
    return probes.martinet_probes("horizontal", args.params, opts)


def cmd_probe(args, stdout):
    opts = _options(args)
    report = _run_probe(args, opts)
    _emit(report.csv_text(), args.out, stdout)
    sys.stderr.write(f"{report.probe_kind}: {report.verdict}\n")
    for note in report.notes:
        sys.stderr.write(f"  {note}\n")
    return {probes.CONSISTENT: EXIT_OK, probes.VIOLATION: EXIT_VIOLATION}.get(report.verdict, EXIT_INCONCLUSIVE)


COMMANDS = {"info": cmd_info, "distance": cmd_distance, "scan": cmd_scan, "probe": cmd_probe}


def main(argv=None, stdout=None):
    stdout = stdout or sys.stdout
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args, stdout)
    except (UsageError, CarnotError, ValueError, TypeError) as exc:
        sys.stderr.write(f"carnot {args.command}: error: {exc}\n")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
