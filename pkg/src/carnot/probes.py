"""Difference-quotient probes for the regularity of the distance.

Each probe solves a handful of distances, forms difference quotients, and
compares them with closed-form lower bounds where one is known. The verdict
is ``"violation"`` only when a solver value falls below a rigorous lower
bound by more than the combined tolerance; growth or stability claims that
cannot be certified numerically yield ``"consistent"`` or
``"inconclusive"``. A point whose solve did not converge makes the whole
report inconclusive (it is still listed).
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .distance import SolverOptions, check_cusp_pair, cusp_lower_bound, distance
from .errors import NotConvergedError
from .extremals import abnormal_membership_free
from .groups import StepTwoGroup, engel, free, martinet
from .linalg_skew import Bivector, bivector_support, wedge

#: assumed relative accuracy of a solver value
VALUE_RTOL = 1e-3
#: smallest nonzero probe parameter (10x the value-accuracy floor)
MIN_PARAMETER = 1e-2
#: max/min ratio accepted as "uniform" for the horizontal probe
UNIFORMITY_RATIO = 1.5
#: relative spread accepted as "bounded" for second differences
SPREAD_RTOL = 0.5

CONSISTENT = "consistent"
VIOLATION = "violation"
INCONCLUSIVE = "inconclusive"

CSV_COLUMNS = ("parameter", "distance", "base_distance", "quotient", "lower_bound", "converged")


def combined_tolerance(d, opts):
    """Tolerance on a single distance value: ``2 VALUE_RTOL d + feas_tol``."""
    return 2 * VALUE_RTOL * abs(d) + opts.feas_tol


@dataclass
class ProbePoint:
    parameter: float
    distance: float
    base_distance: float
    quotient: float
    lower_bound: float | None = None
    converged: bool = True


@dataclass
class ProbeReport:
    """Quotient table of one probe.

    ``lower_bound`` entries bound the ``distance`` column (not the quotient).
    """

    probe_kind: str
    points: list
    verdict: str
    opts: SolverOptions
    notes: list = field(default_factory=list)

    @property
    def parameters(self):
        return np.array([p.parameter for p in self.points])

    @property
    def quotients(self):
        return np.array([p.quotient for p in self.points])

    @property
    def distances(self):
        return np.array([p.distance for p in self.points])

    def csv_text(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for p in self.points:
            lb = "" if p.lower_bound is None else repr(float(p.lower_bound))
            writer.writerow([
                repr(float(p.parameter)), repr(float(p.distance)), repr(float(p.base_distance)),
                repr(float(p.quotient)), lb, str(bool(p.converged)).lower(),
            ])
        return buf.getvalue()

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            fh.write(self.csv_text())
        return path


def _solve(G, g, opts):
    """Distance value and convergence flag; never raises on non-convergence."""
    try:
        res = distance(G, g, opts)
    except NotConvergedError as err:
        return float(err.result.value), False
    return float(res.value), True


def _check_parameters(params, name="parameter"):
    params = [float(p) for p in params]
    for p in params:
        if p != 0 and abs(p) < MIN_PARAMETER:
            raise ValueError(f"{name} {p:g} is below the accuracy floor {MIN_PARAMETER:g}")
    return params


def _verdict(points, opts, extra_ok=True, notes=None):
    """Violation beats inconclusive beats consistent."""
    for p in points:
        if p.converged and p.lower_bound is not None:
            if p.distance < p.lower_bound - combined_tolerance(p.distance, opts):
                if notes is not None:
                    notes.append(f"value {p.distance:.6g} below bound {p.lower_bound:.6g} at {p.parameter:g}")
                return VIOLATION
    if not all(p.converged for p in points):
        if notes is not None:
            notes.append("some solves did not converge")
        return INCONCLUSIVE
    return CONSISTENT if extra_ok else INCONCLUSIVE


def _strictly_increasing(points, scale_fn, opts):
    """Quotients grow along ``points`` by more than their combined tolerances."""
    for a, b in zip(points, points[1:]):
        tol = combined_tolerance(a.distance, opts) / scale_fn(a) + combined_tolerance(b.distance, opts) / scale_fn(b)
        if not b.quotient - a.quotient > tol:
            return False
    return True


# -- generic second differences ----------------------------------------------------


def second_difference(G, base, h, scales=(0.1, 0.05, 0.025), opts=None):
    """Coordinate second differences ``(d(b + s h) + d(b - s h) - 2 d(b)) / (2 s^2 |h|^2)``.

    Consistent when the quotients over all scales stay within
    ``SPREAD_RTOL`` of their largest magnitude (up to solver tolerance);
    growth as ``s`` shrinks, as at abnormal points, gives inconclusive.
    """
    opts = opts or SolverOptions()
    base = np.asarray(base, dtype=float)
    h = np.asarray(h, dtype=float)
    if not np.any(base):
        raise ValueError("base must differ from the identity")
    scales = _check_parameters(scales, "scale")
    d0, ok0 = _solve(G, base, opts)
    hn2 = float(h @ h)
    points = []
    for s in scales:
        if s == 0 or hn2 == 0:
            points.append(ProbePoint(s, d0, d0, 0.0, None, ok0))
            continue
        dp, okp = _solve(G, base + s * h, opts)
        dm, okm = _solve(G, base - s * h, opts)
        q = (dp + dm - 2 * d0) / (2 * s * s * hn2)
        points.append(ProbePoint(s, 0.5 * (dp + dm), d0, q, None, ok0 and okp and okm))
    q = np.array([p.quotient for p in points])
    tol = max(4 * combined_tolerance(d0, opts) / (2 * s * s * hn2) for s in scales if s) if hn2 and any(scales) else 0.0
    bounded = np.ptp(q) <= SPREAD_RTOL * np.max(np.abs(q)) + tol
    notes = [] if bounded else ["quotients grow as the scale shrinks"]
    return ProbeReport("second-difference", points, _verdict(points, opts, bounded, notes), opts, notes)


# -- vertical cusps in step-two groups ---------------------------------------------


def vertical_cusp_probe(G, w, sigma, betas=(0.01, 0.05, 0.1), opts=None):
    """Quotients ``(d(w, beta sigma) - d(w, 0)) / |beta|`` at an abnormal ``(w, 0)``.

    The lower-bound column is :func:`~carnot.distance.cusp_lower_bound`.

    Raises
    ------
    OrthogonalityError
        unless ``(sigma.A) w = 0``.
    """
    opts = opts or SolverOptions()
    w, sigma = check_cusp_pair(G, w, sigma)
    betas = _check_parameters(betas, "beta")
    d0, ok0 = _solve(G, np.concatenate([w, np.zeros(G.ell)]), opts)
    points = []
    for b in betas:
        if b == 0:
            points.append(ProbePoint(b, d0, d0, 0.0, 1.0, ok0))
            continue
        d, ok = _solve(G, np.concatenate([w, b * sigma]), opts)
        lb = cusp_lower_bound(G, w, sigma, b, opts)
        points.append(ProbePoint(b, d, d0, (d - d0) / abs(b), lb, ok and ok0))
    return ProbeReport("vertical-cusp", points, _verdict(points, opts), opts)


def free_vertical_cusp_probe(G, g, sigma, betas=(0.01, 0.05, 0.1), opts=None):
    """Quotients ``(d(x, t + beta sigma) - d(x, t)) / |beta|`` in a free group.

    ``(x, t)`` must lie in ``W x ^2 W`` with ``dim W <= m - 2`` and
    ``sigma`` (a :class:`Bivector` or its coefficients) must be supported
    in ``V = W^perp`` for the minimal such ``W``. Splitting a competitor
    into its ``W`` and ``V`` parts gives the lower bound
    ``sqrt(d(x, t)^2 + d_V(0, beta sigma)^2)``, with ``d_V`` the distance in
    the free group over ``V``.
    """
    opts = opts or SolverOptions()
    if not (isinstance(G, StepTwoGroup) and G.free):
        raise TypeError("free_vertical_cusp_probe needs a free group")
    g = np.asarray(g, dtype=float)
    sig = sigma if isinstance(sigma, Bivector) else Bivector(G.m, sigma)
    if sig.norm() == 0:
        raise ValueError("sigma must be nonzero")
    sig = sig * (1.0 / sig.norm())
    abnormal, W = abnormal_membership_free(G, g)
    if not abnormal:
        raise ValueError("the base point is not an abnormal endpoint (dim W_min > m - 2)")
    _, support = bivector_support(sig)
    if len(W) and np.linalg.norm(W @ support.T) > 1e-10:
        raise ValueError("sigma is not supported in V = W_min^perp")
    V = _complement(W, G.m)
    betas = _check_parameters(betas, "beta")
    x, t = G.split(g)
    d0, ok0 = _solve(G, g, opts)
    FV = free(len(V))
    pairs = [(j, k) for j in range(len(V)) for k in range(j + 1, len(V))]
    sig_V = np.array([wedge(V[j], V[k]).dot(sig) for j, k in pairs])
    points = []
    for b in betas:
        if b == 0:
            points.append(ProbePoint(b, d0, d0, 0.0, d0, ok0))
            continue
        d, ok = _solve(G, np.concatenate([x, t + b * sig.coeffs]), opts)
        dV, okV = _solve(FV, np.concatenate([np.zeros(len(V)), b * sig_V]), opts)
        lb = float(np.sqrt(d0**2 + dV**2))
        points.append(ProbePoint(b, d, d0, (d - d0) / abs(b), lb, ok and ok0 and okV))
    return ProbeReport("free-vertical-cusp", points, _verdict(points, opts), opts)


def _complement(W, m):
    """Orthonormal rows spanning the orthogonal complement of the rows of ``W``."""
    if len(W) == 0:
        return np.eye(m)
    _, _, Vt = np.linalg.svd(W)
    return Vt[len(W):]


# -- Engel and Martinet ------------------------------------------------------------


def engel_vertical_bound(x2, lam):
    """``|x2| 2 sqrt(1/4 + |lam| / |x2|^3)``; at ``x2 = 1`` this is ``2 sqrt(1/4 + |lam|)``."""
    a = abs(x2)
    return a * 2.0 * np.sqrt(0.25 + abs(lam) / a**3)


def engel_vertical_probe(x2=1.0, lambdas=(0.05, 0.1, 0.2), opts=None):
    """Quotients ``(d(0, x2, 0, lam) - |x2|) / |lam|`` in the Engel group.

    ``d(0, x2, 0, 0) = |x2|`` exactly (straight line). The lower-bound
    column follows from the closed form at ``x2 = 1`` by dilation.
    """
    opts = opts or SolverOptions()
    if x2 == 0:
        raise ValueError("x2 must be nonzero")
    lambdas = _check_parameters(lambdas, "lambda")
    G = engel()
    base = abs(float(x2))
    points = []
    for lam in lambdas:
        if lam == 0:
            points.append(ProbePoint(lam, base, base, 0.0, base, True))
            continue
        d, ok = _solve(G, [0.0, x2, 0.0, lam], opts)
        points.append(ProbePoint(lam, d, base, (d - base) / abs(lam), float(engel_vertical_bound(x2, lam)), ok))
    return ProbeReport("engel-vertical", points, _verdict(points, opts), opts)


def _horizontal_ladder(G, kind, make_target, params, base, check_symmetry, opts):
    params = _check_parameters(params)
    if any(p == 0 for p in params):
        raise ValueError("the horizontal quotient is undefined at 0")
    params = sorted(params, key=lambda p: -abs(p))
    points = []
    notes = []
    symmetric = True
    for p in params:
        d, ok = _solve(G, make_target(p), opts)
        q = (d - base) / p**2
        points.append(ProbePoint(p, d, base, q, float(np.hypot(base, p)), ok))
        if check_symmetry:
            d_neg, ok_neg = _solve(G, make_target(-p), opts)
            if not ok_neg or abs(d_neg - d) > combined_tolerance(d, opts):
                symmetric = False
                notes.append(f"asymmetry {d_neg - d:.3g} under sign flip at {p:g}")
    increasing = _strictly_increasing(points, lambda pt: pt.parameter**2, opts)
    if not increasing:
        notes.append("quotients do not increase strictly beyond tolerance")
    verdict = _verdict(points, opts, increasing and symmetric, notes)
    return ProbeReport(kind, points, verdict, opts, notes)


def engel_horizontal_probe(x2=1.0, lambdas=(0.4, 0.2, 0.1), opts=None, check_symmetry=True):
    """Quotients ``(d(lam, x2, 0, 0) - |x2|) / lam^2`` for decreasing ``|lam|``.

    Consistent iff the quotients increase strictly (beyond the combined
    tolerance) as ``|lam|`` decreases and, with ``check_symmetry``, the
    values at ``+-lam`` agree. The lower-bound column is the Euclidean bound
    ``sqrt(lam^2 + x2^2)``.
    """
    opts = opts or SolverOptions()
    if x2 == 0:
        raise ValueError("x2 must be nonzero")
    return _horizontal_ladder(
        engel(), "engel-horizontal", lambda lam: [lam, x2, 0.0, 0.0], lambdas, abs(float(x2)), check_symmetry, opts
    )


def horizontal_semiconcavity_probe(G, g, ys, delta=0.5, opts=None):
    """Horizontal second differences ``(d(g.(y,0)) + d(g.(-y,0)) - 2 d(g)) / |y|^2``.

    ``g`` must be an abnormal endpoint of the free group ``G``. Consistent
    when all quotients are finite and the nonzero ones agree within the
    ratio ``UNIFORMITY_RATIO``; otherwise inconclusive. The parameter
    column holds ``|y|``.
    """
    opts = opts or SolverOptions()
    if not (isinstance(G, StepTwoGroup) and G.free):
        raise TypeError("horizontal_semiconcavity_probe needs a free group")
    g = np.asarray(g, dtype=float)
    if not abnormal_membership_free(G, g)[0]:
        raise ValueError("the base point is not an abnormal endpoint")
    ys = [np.asarray(y, dtype=float) for y in ys]
    for y in ys:
        if np.linalg.norm(y) > delta:
            raise ValueError(f"|y| = {np.linalg.norm(y):g} exceeds delta = {delta:g}")
    _check_parameters([np.linalg.norm(y) for y in ys], "|y|")
    d0, ok0 = _solve(G, g, opts)
    points = []
    for y in ys:
        ny = float(np.linalg.norm(y))
        if ny == 0:
            points.append(ProbePoint(0.0, d0, d0, 0.0, None, ok0))
            continue
        dp, okp = _solve(G, G.multiply(g, G.element(y)), opts)
        dm, okm = _solve(G, G.multiply(g, G.element(-y)), opts)
        q = (dp + dm - 2 * d0) / ny**2
        points.append(ProbePoint(ny, 0.5 * (dp + dm), d0, q, None, ok0 and okp and okm))
    q = np.array([p.quotient for p in points if p.parameter > 0])
    notes = []
    uniform = True
    if len(q):
        notes.append(f"max quotient {q.max():.6g}")
        tol = 4 * combined_tolerance(d0, opts) / min(p.parameter for p in points if p.parameter > 0) ** 2
        uniform = bool(np.all(np.isfinite(q)) and q.max() - tol <= UNIFORMITY_RATIO * (q.min() + tol))
        if not uniform:
            notes.append("quotients are not uniform across directions")
    return ProbeReport("horizontal-semiconcavity", points, _verdict(points, opts, uniform, notes), opts, notes)


def martinet_probes(kind="vertical", params=None, opts=None, check_symmetry=False):
    """Martinet analogues of the Engel probes.

    ``kind="vertical"``: quotients ``(d(1, 0, z) - 1) / |z|`` with lower
    bound ``2 sqrt(1/4 + |z|)``. ``kind="horizontal"``: quotients
    ``(d(1, y, 0) - 1) / y^2`` for decreasing ``|y|``, consistent iff
    strictly increasing.
    """
    opts = opts or SolverOptions()
    G = martinet()
    if kind == "vertical":
        zs = _check_parameters(params if params is not None else (0.05, 0.1, 0.2), "z")
        points = []
        for z in zs:
            if z == 0:
                points.append(ProbePoint(z, 1.0, 1.0, 0.0, 1.0, True))
                continue
            d, ok = _solve(G, [1.0, 0.0, z], opts)
            points.append(ProbePoint(z, d, 1.0, (d - 1.0) / abs(z), float(engel_vertical_bound(1.0, z)), ok))
        return ProbeReport("martinet-vertical", points, _verdict(points, opts), opts)
    if kind == "horizontal":
        ys = params if params is not None else (0.4, 0.2, 0.1)
        return _horizontal_ladder(G, "martinet-horizontal", lambda y: [1.0, y, 0.0], ys, 1.0, check_symmetry, opts)
    raise ValueError(f"unknown Martinet probe {kind!r}")
