"""Carnot structures: step-two groups from skew matrices, and the Engel and
Martinet models.

Group elements are flat float arrays. For a step-two group with horizontal
dimension ``m`` and vertical dimension ``ell`` an element is
``np.concatenate([x, t])`` with the law

    (x, t) . (xi, tau) = (x + xi, t + tau + 1/2 <x, A xi>),

where ``<x, A xi>`` is the vector ``(x^T A^1 xi, ..., x^T A^ell xi)``.
Free groups use the structure matrices ``A^{jk} x = x_k e_j - x_j e_k`` so
that ``<x, A xi> = x ^ xi`` in the lexicographic bivector coordinates.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path

import numpy as np
import scipy.optimize

from .errors import ConfigError, HormanderError, NotSkewError
from .linalg_skew import Bivector, as_skew


@dataclass(frozen=True, eq=False)
class StepTwoGroup:
    """Step-two Carnot group on R^m x R^ell.

    Construct through :func:`make_step_two` or :func:`preset`; the bare
    constructor skips validation and is used for subgroups whose restricted
    brackets need not span the whole vertical space.
    """

    A: np.ndarray
    name: str = "step-two"
    free: bool = False

    kind = "step-two"

    def __post_init__(self):
        object.__setattr__(self, "A", np.asarray(self.A, dtype=float))

    @property
    def m(self):
        return self.A.shape[1]

    @property
    def ell(self):
        return self.A.shape[0]

    @property
    def dim(self):
        return self.m + self.ell

    def __repr__(self):
        return f"StepTwoGroup(name={self.name!r}, m={self.m}, ell={self.ell})"

    def identity(self):
        return np.zeros(self.dim)

    def element(self, x, t=None):
        x = np.asarray(x, dtype=float).reshape(-1)
        if isinstance(t, Bivector):
            t = t.coeffs
        t = np.zeros(self.ell) if t is None else np.asarray(t, dtype=float).reshape(-1)
        if x.shape[0] != self.m or t.shape[0] != self.ell:
            raise ValueError(f"element of {self.name} needs x in R^{self.m} and t in R^{self.ell}")
        return np.concatenate([x, t])

    def split(self, g):
        g = self._check(g)
        return g[..., : self.m], g[..., self.m :]

    def bivector(self, g):
        """Vertical part of ``g`` as a :class:`Bivector` (free groups only)."""
        if not self.free:
            raise TypeError(f"{self.name} is not a free group")
        return Bivector(self.m, self.split(g)[1])

    def bracket(self, x, y):
        """The vertical vector ``<x, A y>``."""
        return np.einsum("...i,aij,...j->...a", x, self.A, y)

    def sigma_A(self, sigma):
        """The skew matrix ``sum_a sigma_a A^a``."""
        return np.tensordot(np.asarray(sigma, dtype=float), self.A, axes=1)

    def _check(self, g):
        g = np.asarray(g, dtype=float)
        if g.shape[-1] != self.dim:
            raise ValueError(f"expected an element of dimension {self.dim}, got {g.shape[-1]}")
        return g

    def multiply(self, g, h):
        x, t = self.split(g)
        xi, tau = self.split(h)
        return np.concatenate([x + xi, t + tau + 0.5 * self.bracket(x, xi)], axis=-1)

    def inverse(self, g):
        return -self._check(g)

    def dilate(self, g, r):
        if r <= 0:
            raise ValueError("dilation factor must be positive")
        x, t = self.split(g)
        return np.concatenate([r * x, r * r * t], axis=-1)

    def restrict(self, basis, name=None):
        """Horizontal restriction to ``span(basis)`` in the basis coordinates.

        ``basis`` holds orthonormal rows ``b_1..b_d``; the returned group on
        R^d x R^ell has structure matrices ``B A^a B^T``. No bracket-generating
        check is made.
        """
        B = np.atleast_2d(np.asarray(basis, dtype=float))
        A = np.einsum("ij,ajk,lk->ail", B, self.A, B)
        return StepTwoGroup(A, name=name or f"{self.name}|W{B.shape[0]}")


class _PolynomialModel:
    m = 2

    def identity(self):
        return np.zeros(self.dim)

    def element(self, *coords):
        if len(coords) == 1:
            coords = coords[0]
        g = np.asarray(coords, dtype=float).reshape(-1)
        if g.shape[0] != self.dim:
            raise ValueError(f"element of {self.name} needs {self.dim} coordinates")
        return g

    def _check(self, g):
        g = np.asarray(g, dtype=float)
        if g.shape[-1] != self.dim:
            raise ValueError(f"expected an element of dimension {self.dim}, got {g.shape[-1]}")
        return g

    def __repr__(self):
        return f"{type(self).__name__}()"


class EngelSystem(_PolynomialModel):
    """Engel group on R^4 with ``X1 = d1`` and ``X2 = d2 + x1 d3 + x1^2/2 d4``."""

    kind = "engel"
    name = "engel"
    dim = 4
    weights = (1, 1, 2, 3)

    def multiply(self, g, h):
        x, y = self._check(g), self._check(h)
        x1, x2, x3, x4 = np.moveaxis(x, -1, 0)
        y1, y2, y3, y4 = np.moveaxis(y, -1, 0)
        return np.stack(
            [
                x1 + y1,
                x2 + y2,
                x3 + y3 + x1 * y2,
                x4 + y4 + 0.5 * x1**2 * y2 + x1 * y3,
            ],
            axis=-1,
        )

    def inverse(self, g):
        x1, x2, x3, x4 = np.moveaxis(self._check(g), -1, 0)
        return np.stack([-x1, -x2, -x3 + x1 * x2, -x4 + x1 * x3 - 0.5 * x1**2 * x2], axis=-1)

    def dilate(self, g, r):
        if r <= 0:
            raise ValueError("dilation factor must be positive")
        return self._check(g) * r ** np.array(self.weights, dtype=float)


class MartinetSystem(_PolynomialModel):
    """Martinet structure on R^3 with coordinates ``(x, y, z)``.

    Controls are ordered ``(u_X, u_Y)`` for ``X = dx + y^2/2 dz`` and
    ``Y = dy``. It is the projection of the Engel system forgetting ``x3``
    under ``(x1, x2, x4) -> (y, x, z)``; it carries no group law.
    """

    kind = "martinet"
    name = "martinet"
    dim = 3
    weights = (1, 1, 3)

    def multiply(self, g, h):
        raise TypeError("the Martinet system has no group law")

    inverse = multiply

    def dilate(self, g, r):
        if r <= 0:
            raise ValueError("dilation factor must be positive")
        return self._check(g) * r ** np.array(self.weights, dtype=float)


# -- construction ---------------------------------------------------------------


def _hormander_rank(A, rtol=1e-10):
    m = A.shape[1]
    iu = np.triu_indices(m, 1)
    H = A[:, iu[0], iu[1]]  # (ell, m(m-1)/2)
    if H.size == 0:
        return 0
    s = np.linalg.svd(H, compute_uv=False)
    if s[0] == 0:
        return 0
    return int(np.sum(s > rtol * s[0]))


def make_step_two(A, name="step-two", free=False):
    """Validated step-two group from a list of skew matrices.

    Raises
    ------
    NotSkewError
        if some ``|A + A^T| > 1e-12 |A|``.
    HormanderError
        if the vectors ``(A^1_jk, ..., A^ell_jk)`` do not span R^ell.
    """
    arr = np.asarray(A, dtype=float)
    if arr.ndim == 2:
        arr = arr[None]
    if arr.ndim != 3 or arr.shape[1] != arr.shape[2]:
        raise ValueError(f"structure matrices must be square, got shape {arr.shape}")
    mats = []
    for a, mat in enumerate(arr):
        try:
            mats.append(as_skew(mat))
        except NotSkewError as exc:
            raise NotSkewError(f"A[{a}] is not skew-symmetric") from exc
    arr = np.array(mats)
    if _hormander_rank(arr) < arr.shape[0]:
        raise HormanderError(f"brackets span a proper subspace of R^{arr.shape[0]}")
    return StepTwoGroup(arr, name=name, free=free)


def free_structure(m):
    """Matrices ``A^{jk}`` with ``A^{jk} x = x_k e_j - x_j e_k``, lexicographic in ``j < k``."""
    pairs = list(combinations(range(m), 2))
    A = np.zeros((len(pairs), m, m))
    for a, (j, k) in enumerate(pairs):
        A[a, j, k] = 1.0
        A[a, k, j] = -1.0
    return A


def _symplectic(m, weights):
    A = np.zeros((1, m, m))
    for i, w in enumerate(weights):
        A[0, 2 * i, 2 * i + 1] = w
        A[0, 2 * i + 1, 2 * i] = -w
    return A


def heisenberg():
    return make_step_two(_symplectic(2, [1.0]), name="heisenberg")


def free(m):
    if not 2 <= m <= 8:
        raise ValueError("free(m) is supported for 2 <= m <= 8")
    return make_step_two(free_structure(m), name=f"free({m})", free=True)


def h_times_r():
    """Heisenberg group times a Euclidean line (``e3`` commutes with everything)."""
    return make_step_two(_symplectic(3, [1.0]), name="h_times_r")


def h_alpha(alpha):
    """R^4 x R with bracket ``x1 xi2 - x2 xi1 + alpha (x3 xi4 - x4 xi3)``."""
    if not alpha > 1:
        raise ValueError("h_alpha needs alpha > 1")
    return make_step_two(_symplectic(4, [1.0, float(alpha)]), name=f"h_alpha({alpha:g})")


def engel():
    return EngelSystem()


def martinet():
    return MartinetSystem()


_PRESET_RE = re.compile(r"^\s*([a-z_]+)\s*(?:[(:]\s*([-+0-9.eE]+)\s*\)?)?\s*$")


def preset(name, m=None, alpha=None):
    """Named structure.

    ``name`` is one of ``heisenberg``, ``free``, ``h_times_r``, ``h_alpha``,
    ``engel``, ``martinet``; the parameter may be passed inline as
    ``"free(3)"``, ``"free:3"`` or ``"h_alpha(2)"``.
    """
    match = _PRESET_RE.match(str(name).lower())
    if not match:
        raise ValueError(f"unknown preset {name!r}")
    key, arg = match.groups()
    if key == "heisenberg":
        return heisenberg()
    if key == "free":
        m = int(float(arg)) if arg is not None else m
        if m is None:
            raise ValueError("preset free needs m")
        return free(int(m))
    if key == "h_times_r":
        return h_times_r()
    if key == "h_alpha":
        alpha = float(arg) if arg is not None else alpha
        if alpha is None:
            raise ValueError("preset h_alpha needs alpha")
        return h_alpha(alpha)
    if key == "engel":
        return engel()
    if key == "martinet":
        return martinet()
    raise ValueError(f"unknown preset {name!r}")


def group_from_config(cfg):
    """Build a structure from a parsed JSON config.

    Either ``{"name", "m", "ell", "A"}`` with ``A`` a list of ``ell`` row-major
    ``m x m`` matrices, or ``{"preset", "m"?, "alpha"?}``.
    """
    if not isinstance(cfg, dict):
        raise ConfigError("<root>", "config must be a JSON object")
    if "preset" in cfg:
        try:
            return preset(cfg["preset"], m=cfg.get("m"), alpha=cfg.get("alpha"))
        except ValueError as exc:
            raise ConfigError("preset", str(exc)) from exc
    for key in ("m", "ell", "A"):
        if key not in cfg:
            raise ConfigError(key, "missing")
    m, ell = cfg["m"], cfg["ell"]
    if not isinstance(m, int) or m < 2:
        raise ConfigError("m", "must be an integer >= 2")
    if not isinstance(ell, int) or ell < 1:
        raise ConfigError("ell", "must be a positive integer")
    try:
        A = np.asarray(cfg["A"], dtype=float)
    except (TypeError, ValueError) as exc:
        raise ConfigError("A", "must be a nested list of numbers") from exc
    if A.shape != (ell, m, m):
        raise ConfigError("A", f"expected shape ({ell}, {m}, {m}), got {A.shape}")
    try:
        return make_step_two(A, name=str(cfg.get("name", "custom")))
    except NotSkewError as exc:
        raise ConfigError("A", str(exc)) from exc
    except HormanderError as exc:
        raise ConfigError("A", f"Hormander condition fails: {exc}") from exc


def load_group(spec):
    """Group from a JSON file path or a preset string."""
    path = Path(str(spec))
    if path.suffix == ".json" or path.exists():
        try:
            cfg = json.loads(path.read_text())
        except FileNotFoundError as exc:
            raise ConfigError("group", f"no such file {spec}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError("group", f"invalid JSON in {spec}: {exc}") from exc
        return group_from_config(cfg)
    try:
        return preset(spec)
    except ValueError as exc:
        raise ConfigError("group", str(exc)) from exc


# -- Metivier condition ---------------------------------------------------------


def j_map(G, eta):
    """Matrix of ``J_eta`` in the horizontal basis.

    ``J_eta`` is defined by ``<J_eta X, X'> = eta([X, X'])``; with
    ``[X_j, X_k] = sum_a A^a_jk T_a`` this is ``(eta A)^T = -eta A``.
    """
    eta = np.asarray(eta, dtype=float).reshape(-1)
    if eta.shape[0] != G.ell:
        raise ValueError(f"eta must lie in R^{G.ell}")
    return G.sigma_A(eta).T


def pfaffian(M):
    """Pfaffian of a skew matrix by skew-preserving Gaussian elimination."""
    A = np.array(M, dtype=float)
    n = A.shape[0]
    if n % 2:
        return 0.0
    pf = 1.0
    for k in range(0, n - 1, 2):
        kp = k + 1 + int(np.argmax(np.abs(A[k + 1 :, k])))
        if kp != k + 1:
            A[[k + 1, kp], :] = A[[kp, k + 1], :]
            A[:, [k + 1, kp]] = A[:, [kp, k + 1]]
            pf = -pf
        if A[k + 1, k] == 0.0:
            return 0.0
        pf *= A[k, k + 1]
        if k + 2 < n:
            tau = A[k, k + 2 :] / A[k, k + 1]
            col = A[k + 2 :, k + 1].copy()
            A[k + 2 :, k + 2 :] += np.outer(tau, col) - np.outer(col, tau)
    return pf


@dataclass
class MetivierReport:
    verdict: str  # "yes" | "no" | "inconclusive"
    witness_sigma: np.ndarray | None
    min_singular_value: float
    method: str
    n_samples: int = 0
    details: dict = field(default_factory=dict)

    @property
    def is_metivier(self):
        return {"yes": True, "no": False}.get(self.verdict)


def _sphere_points(ell, n, seed=0):
    if ell == 1:
        return np.ones((1, 1))
    if ell == 2:
        th = np.pi * (np.arange(n) + 0.5) / n
        return np.stack([np.cos(th), np.sin(th)], axis=1)
    if ell == 3:
        i = np.arange(n) + 0.5
        z = 1 - 2 * i / n
        r = np.sqrt(1 - z * z)
        phi = np.pi * (1 + 5**0.5) * i
        return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)
    pts = np.random.default_rng(seed).standard_normal((n, ell))
    return pts / np.linalg.norm(pts, axis=1, keepdims=True)


def _smin(G, sigma, scale):
    return np.linalg.svd(G.sigma_A(sigma) / scale, compute_uv=False)[..., -1]


def check_metivier(G, n_samples=10_000, no_tol=1e-8, yes_tol=1e-4, n_refine=10):
    """Decide whether ``sigma A`` is nonsingular for every unit ``sigma``.

    Exact for ``ell = 1`` (one singular value computation) and for odd ``m``
    (odd skew matrices are singular). Otherwise the smallest singular value
    of ``sigma A / max_a |A^a|`` is minimized over the unit sphere: a
    deterministic point set is scanned, sign changes of the Pfaffian between
    sample points are bisected along great circles, and the best samples are
    refined by Nelder-Mead. The verdict is ``"no"`` below ``no_tol``,
    ``"yes"`` above ``yes_tol`` and ``"inconclusive"`` in between.
    """
    scale = max(np.linalg.norm(a, 2) for a in G.A)
    if G.m % 2 == 1:
        sigma = np.eye(G.ell)[0]
        return MetivierReport("no", sigma, float(_smin(G, sigma, scale)), "odd-dimension")

    if G.ell == 1:
        sigma = np.ones(1)
        s = float(_smin(G, sigma, scale))
        verdict = "no" if s < no_tol else ("yes" if s > yes_tol else "inconclusive")
        return MetivierReport(verdict, sigma if verdict == "no" else None, s, "exact")

    pts = _sphere_points(G.ell, n_samples)
    svals = _smin(G, pts, scale)
    pf = np.array([pfaffian(G.sigma_A(p) / scale) for p in pts])

    best_sigma, best = pts[np.argmin(svals)], float(svals.min())

    # a sign change of the Pfaffian brackets an exact zero on the arc between
    sgn = np.sign(pf)
    pos, neg = np.flatnonzero(sgn > 0), np.flatnonzero(sgn < 0)
    if len(pos) and len(neg):
        a, b = pts[pos[np.argmin(pf[pos])]], pts[neg[np.argmax(pf[neg])]]
        if a @ b < -0.999:  # antipodal pair: pick any other sample to bend through
            b = pts[neg[0]] if not np.allclose(pts[neg[0]], -a) else pts[neg[-1]]

        def pf_arc(s):
            p = (1 - s) * a + s * b
            return pfaffian(G.sigma_A(p / np.linalg.norm(p)) / scale)

        s_root = scipy.optimize.brentq(pf_arc, 0.0, 1.0, xtol=1e-15, rtol=4 * np.finfo(float).eps)
        p = (1 - s_root) * a + s_root * b
        p /= np.linalg.norm(p)
        val = float(_smin(G, p, scale))
        if val < best:
            best_sigma, best = p, val

    if best >= no_tol:
        def objective(y):
            nrm = np.linalg.norm(y)
            return np.inf if nrm == 0 else float(_smin(G, y / nrm, scale))

        for i in np.argsort(svals)[:n_refine]:
            res = scipy.optimize.minimize(
                objective, pts[i], method="Nelder-Mead",
                options={"xatol": 1e-12, "fatol": 1e-14, "maxiter": 4000},
            )
            if res.fun < best:
                best_sigma, best = res.x / np.linalg.norm(res.x), float(res.fun)

    verdict = "no" if best < no_tol else ("yes" if best > yes_tol else "inconclusive")
    return MetivierReport(
        verdict,
        best_sigma if verdict == "no" else None,
        best,
        "sampled",
        n_samples=len(pts),
    )
