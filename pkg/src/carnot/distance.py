"""Numerical Carnot-Caratheodory distance from the identity.

The distance to ``g`` is the minimum of ``|u|_{L^2}`` over controls with
``E(u) = g``. Two solvers produce feasible controls, so every reported value
is an upper estimate of the true distance:

* :func:`solve_direct` -- augmented Lagrangian over piecewise-constant
  controls with the exact endpoint Jacobian, multistarted;
* :func:`solve_shooting` -- root finding for normal extremals
  ``exp(-s tau.A) u0`` of step-two groups, whose length is ``|u0|``.

Both also accept linear endpoint constraints ``C E(u) = rhs`` internally;
the cusp lower bound needs ``x = 0`` together with one vertical component.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.optimize

from .controls import Control, d_endpoint, endpoint, endpoint_values
from .errors import NoRootFoundError, NotConvergedError, OrthogonalityError, PointNotInSubgroupError
from .extremals import extremal_endpoint, extremal_endpoint_expm, make_extremal
from .groups import StepTwoGroup, free
from .linalg_skew import orthonormal_rows, wedge

#: initial penalty relative to the energy of the start
INITIAL_PENALTY = 1e3

#: Levenberg-Marquardt evaluations per unknown and shooting start
SHOOT_MAX_NFEV = 40

#: start-noise amplitudes relative to the target size, cycled over the starts
NOISE_LADDER = (1.0, 0.5, 2.0, 4.0)

# share of the oracle budget spent on random sampling before refinement
RANDOM_FRACTION = 0.1


@dataclass
class SolverOptions:
    n_steps: int = 64
    n_starts: int = 32
    rng_seed: int = 42
    feas_tol: float = 1e-6
    grad_tol: float = 1e-8
    max_outer: int = 20
    penalty_growth: float = 10.0
    n_jobs: int = 1

    def __post_init__(self):
        for name in ("n_steps", "n_starts", "max_outer", "n_jobs"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be positive")
        for name in ("feas_tol", "grad_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not self.penalty_growth > 1:
            raise ValueError("penalty_growth must exceed 1")
        if self.rng_seed < 0:
            raise ValueError("rng_seed must be nonnegative")


@dataclass
class DistanceResult:
    value: float
    control: Control | None
    residual: float
    method: str
    n_starts: int
    converged: bool
    seed: int = 42
    start_index: int = -1
    extremal: object = None
    runs: list = field(default_factory=list, repr=False)

    def to_dict(self, control_csv_path=None):
        out = {
            "value": self.value,
            "residual": self.residual,
            "method": self.method,
            "n_starts": self.n_starts,
            "seed": self.seed,
            "converged": self.converged,
            "control_csv_path": None if control_csv_path is None else str(control_csv_path),
        }
        if self.extremal is not None:
            out["extremal"] = self.extremal.to_dict()
        return out

    def to_json(self, control_csv_path=None):
        return json.dumps(self.to_dict(control_csv_path), indent=2, sort_keys=True)


@dataclass(frozen=True, eq=False)
class _Problem:
    """Minimize ``|u|`` subject to ``C E(u) = rhs``."""

    G: object
    C: np.ndarray
    rhs: np.ndarray
    x_guess: np.ndarray  # horizontal part used for the straight-line start
    scale: float  # homogeneous size of the target, for start noise
    row_weights: np.ndarray  # dilation weight of each constraint row

    @classmethod
    def point(cls, G, target):
        target = np.asarray(target, dtype=float).reshape(-1)
        if target.shape[0] != G.dim:
            raise ValueError(f"target must have {G.dim} coordinates for {G.name}")
        return cls(G, np.eye(G.dim), target, target[: G.m], homogeneous_norm(G, target), coordinate_weights(G))

    @property
    def row_scale(self):
        """Size of each constraint row at the scale of the target."""
        return max(self.scale, 1e-3) ** self.row_weights

    def residual(self, E):
        return E @ self.C.T - self.rhs


def coordinate_weights(G):
    """Dilation weight of every coordinate."""
    if isinstance(G, StepTwoGroup):
        return np.array([1.0] * G.m + [2.0] * G.ell)
    return np.asarray(G.weights, dtype=float)


def homogeneous_norm(G, g):
    """``sum_i |g_i|^(1/w_i)`` with the dilation weights of the coordinates."""
    g = np.asarray(g, dtype=float)
    if isinstance(G, StepTwoGroup):
        x, t = G.split(g)
        return float(np.linalg.norm(x) + np.sqrt(np.linalg.norm(t)))
    return float(np.sum(np.abs(g) ** (1.0 / coordinate_weights(G))))


# -- direct method --------------------------------------------------------------


def _direct_run(prob, y0, opts, rng):
    """One augmented-Lagrangian solve from the scaled start ``y0``.

    Variables are ``y = sqrt(h) u`` so that ``|y| = |u|_{L^2}``, and each
    constraint row is divided by its size at the scale of the target. The
    start is first moved onto the constraint by Gauss-Newton steps and the
    multipliers are initialized by least squares, so that the iteration
    stays near the feasible curve closest to the start instead of sliding
    to the straight line (which may be far from feasible). When an outer
    round fails to reduce the residual the iterate gets a small random kick
    from ``rng``: the inner solver stops at critical points such as singular
    controls, where the constraint gradient degenerates.
    """
    G, N, m = prob.G, opts.n_steps, prob.G.m
    sh = np.sqrt(1.0 / N)
    row = prob.row_scale

    def constraint(y):
        vals = (y / sh).reshape(N, m)
        c = prob.residual(endpoint_values(G, vals)) / row
        J = (prob.C @ d_endpoint(G, vals)) / (sh * row[:, None])
        return c, J

    y0 = _project(constraint, y0, max_iter=50, damped=True)
    _, J = constraint(y0)
    mu = scipy.linalg.lstsq(J.T, 2 * y0, cond=1e-10)[0]
    rho = INITIAL_PENALTY * max(y0 @ y0, prob.scale**2, 1e-6)

    def lagrangian(y):
        c, J = constraint(y)
        lam = mu - rho * c
        return y @ y - lam @ c - 0.5 * rho * (c @ c), 2 * y - J.T @ lam

    y = y0.copy()
    c_prev = np.inf
    for _ in range(opts.max_outer):
        res = scipy.optimize.minimize(
            lagrangian, y, jac=True, method="L-BFGS-B",
            options={"gtol": opts.grad_tol, "ftol": 1e-12, "maxiter": 2000, "maxcor": 30},
        )
        y = res.x
        c, _ = constraint(y)
        cn = np.linalg.norm(c)
        if np.linalg.norm(c * row) <= opts.feas_tol:
            break
        mu = mu - rho * c
        if cn > 0.25 * c_prev:
            rho *= opts.penalty_growth
            kick = 0.1 * max(prob.scale, np.linalg.norm(y))
            y = y + kick * rng.standard_normal(y.shape) / np.sqrt(y.size)
        c_prev = cn

    y = _project(constraint, y)
    c, _ = constraint(y)
    return y / sh, float(np.linalg.norm(y)), float(np.linalg.norm(c * row))


def _project(constraint, y, max_iter=20, damped=False):
    """Gauss-Newton minimum-norm corrections onto ``c(y) = 0``.

    Plain steps are only taken close to the constraint; ``damped`` halves
    each step until the residual decreases, for use far from it. Returns
    the iterate with the smallest residual seen.
    """
    c, J = constraint(y)
    best_y, best_c = y, np.linalg.norm(c)
    for _ in range(max_iter):
        cn = np.linalg.norm(c)
        if cn < 1e-13 or (cn > 1e-2 and not damped):
            break
        step = scipy.linalg.lstsq(J, c, cond=1e-12)[0]
        t = 1.0
        while True:
            y_new = y - t * step
            c_new, J_new = constraint(y_new)
            if not damped or np.linalg.norm(c_new) < cn or t < 1e-4:
                break
            t *= 0.5
        y, c, J = y_new, c_new, J_new
        if np.linalg.norm(c) < best_c:
            best_y, best_c = y, np.linalg.norm(c)
    return best_y


def _smooth_noise(rng, N, m, n_modes=4):
    """Gaussian random field on the grid with unit variance per entry.

    Half of the variance sits in a few low Fourier modes: cell-wise white
    noise averages out along the curve, while smooth excursions reach
    regions (for instance large loops) that local moves from the straight
    line cannot.
    """
    s = (np.arange(N) + 0.5) / N
    k = np.arange(1, n_modes + 1)
    basis = np.concatenate([np.cos(2 * np.pi * np.outer(s, k)), np.sin(2 * np.pi * np.outer(s, k))], axis=1)
    coef = rng.standard_normal((2 * n_modes, m)) / np.sqrt(n_modes)
    return np.sqrt(0.5) * (basis @ coef + rng.standard_normal((N, m)))


def _starts(prob, opts):
    """Straight-line start plus seeded Gaussian perturbations.

    Returns ``(u0, rng)`` pairs; each start owns an independent stream.
    """
    N, m = opts.n_steps, prob.G.m
    base = np.tile(prob.x_guess, (N, 1))
    starts = []
    for i, seq in enumerate(np.random.SeedSequence(opts.rng_seed).spawn(opts.n_starts)):
        rng = np.random.default_rng(seq)
        noise = prob.scale * NOISE_LADDER[i % len(NOISE_LADDER)] * _smooth_noise(rng, N, m)
        starts.append((base if i == 0 else base + noise, rng))
    return starts


def _map(fn, items, n_jobs):
    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            return list(pool.map(fn, items))
    return [fn(it) for it in items]


def _solve_direct(prob, opts):
    sh = np.sqrt(1.0 / opts.n_steps)
    starts = _starts(prob, opts)
    runs = _map(lambda st: _direct_run(prob, sh * st[0].reshape(-1), opts, st[1]), starts, opts.n_jobs)
    feasible = [i for i, r in enumerate(runs) if r[2] <= opts.feas_tol]
    pool = feasible if feasible else range(len(runs))
    key = (lambda i: (runs[i][1], i)) if feasible else (lambda i: (runs[i][2], i))
    best = min(pool, key=key)
    vals, value, resid = runs[best]
    return DistanceResult(
        value=value,
        control=Control(vals.reshape(opts.n_steps, prob.G.m)),
        residual=resid,
        method="direct",
        n_starts=opts.n_starts,
        converged=bool(feasible),
        seed=opts.rng_seed,
        start_index=best,
        runs=[(r[1], r[2]) for r in runs],
    )


def solve_direct(G, target, opts=None):
    """Augmented-Lagrangian distance estimate over piecewise-constant controls.

    Minimizes ``|u|^2_{L^2}`` subject to ``E(u) = target`` from
    ``opts.n_starts`` starts (the straight line toward the horizontal part of
    the target, then seeded Gaussian perturbations of size comparable to the
    homogeneous norm of the target). Each run finishes with Gauss-Newton
    projections onto the constraint. The best feasible run is returned; if
    none reaches ``feas_tol`` the least infeasible run is returned with
    ``converged=False``.
    """
    opts = opts or SolverOptions()
    return _solve_direct(_Problem.point(G, target), opts)


# -- shooting -------------------------------------------------------------------


def _shoot_residual(prob, T, params):
    r = T.shape[1]
    return prob.residual(extremal_endpoint_expm(prob.G, T @ params[:r], params[r:]))


def fit_extremal(G, control, T=None):
    """Least-squares guess of ``(c, u0)`` with ``u(s) ~ exp(-s (Tc).A) u0``.

    Uses ``u' = -(tau.A) u`` on consecutive cells of a piecewise-constant
    control, with ``tau`` restricted to the columns of ``T``.
    """
    T = np.eye(G.ell) if T is None else T
    vals = control.values
    if len(vals) < 3:
        return np.zeros(T.shape[1]), vals[0].copy()
    h = control.h
    deriv = (np.diff(vals, axis=0) / h).reshape(-1)
    mid = 0.5 * (vals[1:] + vals[:-1])
    cols = [-(mid @ G.sigma_A(T[:, j]).T).reshape(-1) for j in range(T.shape[1])]
    coef = scipy.linalg.lstsq(np.stack(cols, axis=1), deriv)[0]
    return coef, 1.5 * vals[0] - 0.5 * vals[1]


def _solve_shooting(prob, T, opts, warm=None):
    G = prob.G
    r, m = T.shape[1], G.m
    if r + m != len(prob.rhs):
        raise ValueError("shooting needs as many unknowns as constraints")
    A_scale = max(np.linalg.norm(G.sigma_A(T[:, j]), 2) for j in range(r)) or 1.0
    seqs = np.random.SeedSequence(opts.rng_seed + 1).spawn(opts.n_starts)
    starts = [np.concatenate([np.zeros(r), prob.x_guess])]
    if warm is not None and opts.n_starts > 1:
        starts.append(np.concatenate(fit_extremal(G, warm, T)))
    for seq in seqs[len(starts):]:
        rng = np.random.default_rng(seq)
        coef = 2 * np.pi * rng.standard_normal(r) / A_scale
        direction = rng.standard_normal(m)
        size = max(prob.scale, 1e-3) * np.sqrt(4 * np.pi) * rng.uniform(0.3, 1.5)
        starts.append(np.concatenate([coef, size * direction / np.linalg.norm(direction)]))

    def run(p0):
        try:
            sol = scipy.optimize.least_squares(
                lambda p: _shoot_residual(prob, T, p), p0, method="lm",
                xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=SHOOT_MAX_NFEV * (len(p0) + 1),
            )
        except (np.linalg.LinAlgError, ValueError):
            return None
        return sol.x, float(np.linalg.norm(sol.fun))

    runs = _map(run, starts, opts.n_jobs)
    roots = []
    for i, out in enumerate(runs):
        if out is None or not np.all(np.isfinite(out[0])) or out[1] > opts.feas_tol:
            continue
        params, resid = out
        tau, u0 = T @ params[:r], params[r:]
        roots.append((float(np.linalg.norm(u0)), float(np.linalg.norm(tau)), i, tau, u0, resid))
    # re-check candidates with the closed-form endpoint, best first
    for value, _, idx, tau, u0, _ in sorted(roots, key=lambda rt: rt[:3]):
        ext = make_extremal(G, tau, u0)
        resid = float(np.linalg.norm(prob.residual(extremal_endpoint(G, ext))))
        if resid <= opts.feas_tol:
            break
    else:
        raise NoRootFoundError(f"no normal extremal reaches the target within {opts.feas_tol:g}")
    return DistanceResult(
        value=value,
        control=ext.sample(opts.n_steps),
        residual=resid,
        method="shooting",
        n_starts=opts.n_starts,
        converged=True,
        seed=opts.rng_seed,
        start_index=idx,
        extremal=ext,
        runs=[(rt[0], rt[5]) for rt in roots],
    )


def solve_shooting(G, target, opts=None, warm=None):
    """Distance estimate from normal extremals of a step-two group.

    Solves ``extremal_endpoint(tau, u0) = target`` by Levenberg-Marquardt
    from multiple seeded starts and returns the root with the smallest
    ``|u0|`` (ties broken by the smallest ``|tau|``). Start 0 is the
    straight line; a ``warm`` control (typically from the direct solver)
    contributes start 1 through :func:`fit_extremal`.

    Raises
    ------
    NoRootFoundError
        if no start converges to ``feas_tol``.
    """
    if not isinstance(G, StepTwoGroup):
        raise TypeError("shooting is only available for step-two groups")
    opts = opts or SolverOptions()
    return _solve_shooting(_Problem.point(G, target), np.eye(G.ell), opts, warm)


# -- combined -------------------------------------------------------------------


def _zero_result(G, opts):
    return DistanceResult(
        value=0.0,
        control=Control(np.zeros((opts.n_steps, G.m))),
        residual=0.0,
        method="identity",
        n_starts=0,
        converged=True,
        seed=opts.rng_seed,
    )


def _best_of(results):
    ok = [r for r in results if r.converged]
    if ok:
        return min(ok, key=lambda r: r.value)
    raise NotConvergedError("all methods failed to reach the feasibility tolerance", min(results, key=lambda r: r.residual))


def _combined(prob, T, opts):
    results = [_solve_direct(prob, opts)]
    if isinstance(prob.G, StepTwoGroup) and T is not None:
        try:
            results.append(_solve_shooting(prob, T, opts, warm=results[0].control))
        except NoRootFoundError:
            pass
    return _best_of(results)


def distance(G, target, opts=None):
    """Best estimate of the distance from the identity to ``target``.

    The minimum over the direct solver and (for step-two groups) shooting;
    the value is the length of a feasible curve, hence an upper estimate.

    Raises
    ------
    NotConvergedError
        if no method reaches ``feas_tol``; the best attempt is attached.
    """
    opts = opts or SolverOptions()
    prob = _Problem.point(G, target)
    if not np.any(prob.rhs):
        return _zero_result(G, opts)
    T = np.eye(G.ell) if isinstance(G, StepTwoGroup) else None
    return _combined(prob, T, opts)


def result_endpoint(G, result):
    """Endpoint of the curve behind a result, evaluated afresh.

    Shooting results carry the exact extremal; its sampled control only
    approximates the endpoint, so the extremal is used when present.
    """
    if result.extremal is not None:
        return extremal_endpoint(G, result.extremal)
    return endpoint(G, result.control)


# -- brute-force oracle -----------------------------------------------------------


def oracle_bruteforce(G, target, budget=100_000, n_steps=8, seed=0, penalty=1e3, n_keep=4):
    """Independent, derivative-free distance estimate on a coarse grid.

    Random search over piecewise-constant controls with ``n_steps <= 8``
    cells, then compass (coordinate) search with a halving step from the
    ``n_keep`` best samples, on the penalized length
    ``|u| + w |E(u) - target|^2``. Each sample is refined twice: once with
    ``w`` raised geometrically from 10 to ``penalty`` (well conditioned, but
    a weak early penalty can drift onto singular controls) and once at
    ``w = penalty`` throughout. ``budget`` counts endpoint evaluations; a
    share ``RANDOM_FRACTION`` goes to the random phase and the rest to the
    refinement. Returns the best penalized length found, which sits slightly
    below the length of the nearly feasible control behind it.
    """
    if n_steps > 8:
        raise ValueError("the brute-force oracle works on at most 8 cells")
    target = np.asarray(target, dtype=float)
    m = G.m
    n_var = n_steps * m
    rng = np.random.default_rng(seed)
    scale = max(homogeneous_norm(G, target), 1e-3)
    base = np.tile(target[: G.m], (n_steps, 1)).reshape(-1)

    def phi(Z, w=penalty):
        E = endpoint_values(G, Z.reshape(-1, n_steps, m))
        length = np.sqrt(np.sum(Z * Z, axis=-1) / n_steps)
        return length + w * np.sum((E - target) ** 2, axis=-1)

    n_random = int(budget * RANDOM_FRACTION)
    pool_z, pool_f = base[None], phi(base[None])
    used = 1
    while used < n_random:
        k = min(2048, n_random - used)
        sizes = scale * rng.uniform(0.0, 3.0, size=(k, 1))
        Z = base + sizes * rng.standard_normal((k, n_var))
        pool_z = np.concatenate([pool_z, Z])
        pool_f = np.concatenate([pool_f, phi(Z)])
        keep = np.argsort(pool_f, kind="stable")[:n_keep]
        pool_z, pool_f = pool_z[keep], pool_f[keep]
        used += k

    eye = np.eye(n_var)
    schedules = [np.geomspace(10.0, penalty, 4), [penalty]]
    per_stage = (budget - used) // (len(pool_z) * sum(len(ws) for ws in schedules))
    best = np.inf
    for z0 in pool_z:
        for weights in schedules:
            z = z0
            for w in weights:
                f = float(phi(z[None], w)[0])
                step, spent = 0.5 * scale, 0
                while spent + 2 * n_var <= per_stage and step > 1e-9 * scale:
                    trial = np.concatenate([z + step * eye, z - step * eye])
                    ft = phi(trial, w)
                    spent += 2 * n_var
                    i = int(np.argmin(ft))
                    if ft[i] < f:
                        z, f = trial[i], float(ft[i])
                    else:
                        step *= 0.5
            best = min(best, float(phi(z[None])[0]))
    return best


# -- subgroups and the cusp bound ---------------------------------------------------


def subgroup_distance_free(G, W_basis, g, opts=None, tol=1e-10):
    """Distance to a point of ``W x ^2 W`` computed inside the free group on ``W``.

    With an orthonormal basis ``w_1..w_d`` of ``W`` the point has coordinates
    ``xi_j = <x, w_j>`` and ``tau_jk = <w_j ^ w_k, t>`` in the free group of
    rank ``d``, where the distance is solved.

    Raises
    ------
    PointNotInSubgroupError
        if ``x`` leaves ``W`` or ``t`` leaves ``^2 W`` by more than ``tol``.
    """
    if not (isinstance(G, StepTwoGroup) and G.free):
        raise TypeError("subgroup_distance_free needs a free group")
    W = orthonormal_rows(W_basis)
    d = W.shape[0]
    x, t = G.split(np.asarray(g, dtype=float))
    xi = W @ x
    pairs = [(j, k) for j in range(d) for k in range(j + 1, d)]
    biv = [wedge(W[j], W[k]).coeffs for j, k in pairs]
    tau = np.array([b @ t for b in biv])
    t_in = np.sum([c * b for c, b in zip(tau, biv)], axis=0) if biv else np.zeros_like(t)
    scale = max(1.0, np.linalg.norm(x), np.linalg.norm(t))
    if np.linalg.norm(x - W.T @ xi) > tol * scale or np.linalg.norm(t - t_in) > tol * scale:
        raise PointNotInSubgroupError("point does not lie in W x ^2 W")
    if d == 0:
        return 0.0
    if d == 1:
        return float(abs(xi[0]))
    sub = free(d)
    return distance(sub, np.concatenate([xi, tau]), opts).value


def check_cusp_pair(G, w, sigma, tol=1e-10):
    """Normalize ``(w, sigma)`` and check ``(sigma.A) w = 0``."""
    w = np.asarray(w, dtype=float).reshape(-1)
    sigma = np.asarray(sigma, dtype=float).reshape(-1)
    if w.shape[0] != G.m or sigma.shape[0] != G.ell:
        raise ValueError(f"need w in R^{G.m} and sigma in R^{G.ell}")
    nw, ns = np.linalg.norm(w), np.linalg.norm(sigma)
    if nw == 0 or ns == 0:
        raise ValueError("w and sigma must be nonzero")
    w, sigma = w / nw, sigma / ns
    S = G.sigma_A(sigma)
    if np.linalg.norm(S @ w) > tol * max(1.0, np.linalg.norm(S, 2)):
        raise OrthogonalityError("<A w, y> is not orthogonal to sigma for all y")
    return w, sigma


def _vertical_slice_distance(G, sigma, beta, opts):
    """Min length of loops in ``G`` whose vertical endpoint has ``<t, sigma> = beta``."""
    m, ell = G.m, G.ell
    C = np.zeros((m + 1, m + ell))
    C[:m, :m] = np.eye(m)
    C[m, m:] = sigma
    rhs = np.zeros(m + 1)
    rhs[m] = beta
    prob = _Problem(G, C, rhs, np.zeros(m), float(np.sqrt(abs(beta))), np.array([1.0] * m + [2.0]))
    return _combined(prob, sigma[:, None], opts)


def cusp_lower_bound(G, w, sigma, beta, opts=None):
    """Lower bound for the distance to ``(w, beta sigma)`` at an abnormal ``(w, 0)``.

    Splits a competitor as ``u = u_V + u_W`` with ``W = span{w}`` and
    ``V = W^perp``: the ``W`` part has length at least 1, and the ``V`` part
    is a loop in the subgroup over ``V`` whose vertical endpoint has
    ``sigma``-component ``beta``. Hence ``d^2 >= 1 + d_V(beta)^2``; ``d_V`` is
    computed numerically in the subgroup, so the bound holds up to the
    optimality of that solve. Even in ``beta``.

    Raises
    ------
    OrthogonalityError
        unless ``(sigma.A) w = 0``.
    """
    opts = opts or SolverOptions()
    w, sigma = check_cusp_pair(G, w, sigma)
    if beta == 0:
        return 1.0
    V = scipy.linalg.null_space(w[None]).T
    GV = G.restrict(V)
    d_V = _vertical_slice_distance(GV, sigma, abs(beta), opts).value
    return float(np.sqrt(1.0 + d_V**2))
