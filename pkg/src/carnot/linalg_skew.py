"""Linear algebra for skew-symmetric matrices and bivectors.

A real skew-symmetric matrix ``M`` of rank ``2p`` acts on ``p`` pairwise
orthogonal planes as a rotation generator: there are orthonormal pairs
``(v_h, v_h_perp)`` and frequencies ``lambda_h > 0`` with

    M v_h = lambda_h v_h_perp,    M v_h_perp = -lambda_h v_h,

and ``M`` vanishes on the orthogonal complement of the planes. Everything in
this module is built on that decomposition.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np
import scipy.linalg

from .errors import DuplicateFrequencyError, NotSkewError

#: relative threshold below which a frequency is treated as zero
ZERO_RTOL = 1e-10
#: relative threshold for merging two frequencies into one cluster
MERGE_RTOL = 1e-9


def as_skew(M, check=True):
    """Return ``M`` as an exactly antisymmetric float array.

    With ``check`` the input must already be skew up to ``1e-12 * |M|``;
    the returned array is the antisymmetric part, so the invariant holds
    with tolerance zero afterwards.
    """
    M = np.array(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise NotSkewError(f"expected a square matrix, got shape {M.shape}")
    if check:
        scale = np.linalg.norm(M)
        if np.linalg.norm(M + M.T) > 1e-12 * max(scale, 1e-300):
            raise NotSkewError("matrix is not skew-symmetric")
    return 0.5 * (M - M.T)


@dataclass(frozen=True, eq=False)
class PlaneDecomposition:
    """Rotation planes of a skew matrix.

    ``lambdas`` has shape ``(p,)`` and is sorted ascending; ``v`` and
    ``v_perp`` have shape ``(p, m)``; ``kernel`` has shape ``(k, m)`` with
    ``2 p + k = m``. All rows of ``v``, ``v_perp`` and ``kernel`` together
    form an orthonormal basis of R^m.
    """

    lambdas: np.ndarray
    v: np.ndarray
    v_perp: np.ndarray
    kernel: np.ndarray

    @property
    def dim(self):
        return self.v.shape[1]

    @property
    def rank(self):
        """Number of planes (half the matrix rank)."""
        return len(self.lambdas)

    def support(self):
        """Orthonormal rows spanning the image of the matrix."""
        return np.concatenate([self.v, self.v_perp]) if self.rank else np.zeros((0, self.dim))

    def matrix(self):
        """Reassemble ``sum_h lambda_h (v_perp_h v_h^T - v_h v_perp_h^T)``."""
        M = np.einsum("h,hi,hj->ij", self.lambdas, self.v_perp, self.v)
        return M - M.T

    def apply(self, x):
        lam = self.lambdas[:, None]
        cv, cp = self.v @ x, self.v_perp @ x
        return np.sum(lam * (cv[:, None] * self.v_perp - cp[:, None] * self.v), axis=0)


def _cluster(values, rtol):
    """Group sorted positive values whose relative gaps are below ``rtol``."""
    groups = []
    for i, val in enumerate(values):
        if groups and val - values[groups[-1][-1]] <= rtol * val:
            groups[-1].append(i)
        else:
            groups.append([i])
    return groups


def skew_spectral(M, zero_rtol=ZERO_RTOL, merge_rtol=MERGE_RTOL):
    """Plane decomposition of a skew-symmetric matrix.

    Uses the Hermitian eigenproblem of ``iM``: an eigenvector ``x + iy`` with
    eigenvalue ``lambda > 0`` gives ``M x = lambda y`` and ``M y = -lambda x``,
    and eigenvectors of one eigenspace produce mutually orthogonal real
    pairs. Frequencies within ``merge_rtol`` of each other are snapped to
    their cluster mean.

    Parameters
    ----------
    M : array_like, shape (m, m)
        Skew-symmetric matrix (antisymmetrized exactly).
    zero_rtol : float
        Frequencies below ``zero_rtol * |M|_2`` are assigned to the kernel.
    merge_rtol : float
        Relative tolerance for merging nearly equal frequencies.

    Returns
    -------
    PlaneDecomposition
    """
    M = as_skew(M, check=False)
    m = M.shape[0]
    evals, evecs = np.linalg.eigh(1j * M)
    scale = np.max(np.abs(evals)) if m else 0.0
    keep = evals > zero_rtol * scale if scale > 0 else np.zeros(m, dtype=bool)
    lam = evals[keep]
    W = evecs[:, keep]
    order = np.argsort(lam)
    lam, W = lam[order], W[:, order]

    v = np.sqrt(2.0) * W.real.T
    if len(lam):
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        # re-orthonormalize pairs inside (possibly degenerate) clusters
        lam_out = lam.copy()
        vs, vps = [], []
        for group in _cluster(lam, merge_rtol):
            mean = float(np.mean(lam[group]))
            lam_out[group] = mean
            basis = []
            for i in group:
                cand = v[i].copy()
                for b in basis:
                    cand -= (b @ cand) * b
                nrm = np.linalg.norm(cand)
                cand = cand / nrm if nrm > 1e-8 else v[i]
                vp = M @ cand / mean
                vp -= (cand @ vp) * cand
                for b in basis:
                    vp -= (b @ vp) * b
                vp /= np.linalg.norm(vp)
                basis.extend([cand, vp])
                vs.append(cand)
                vps.append(vp)
        lam = lam_out
        v, v_perp = np.array(vs), np.array(vps)
    else:
        v = np.zeros((0, m))
        v_perp = np.zeros((0, m))

    planes = np.concatenate([v, v_perp]) if len(lam) else np.zeros((0, m))
    if planes.shape[0] == m:
        kernel = np.zeros((0, m))
    elif planes.shape[0] == 0:
        kernel = np.eye(m)
    else:
        kernel = scipy.linalg.null_space(planes).T
    return PlaneDecomposition(lambdas=lam, v=v, v_perp=v_perp, kernel=kernel)


def skew_exp_apply(M, x, decomposition=None):
    """Compute ``expm(M) @ x`` through the plane formula.

    Each plane is rotated by its frequency and the kernel component is left
    untouched, so the result has exactly the norm of ``x`` up to rounding.
    """
    x = np.asarray(x, dtype=float)
    dec = skew_spectral(M) if decomposition is None else decomposition
    cv, cp = dec.v @ x, dec.v_perp @ x
    c, s = np.cos(dec.lambdas), np.sin(dec.lambdas)
    rotated = (c * cv - s * cp) @ dec.v + (c * cp + s * cv) @ dec.v_perp
    return x - cv @ dec.v - cp @ dec.v_perp + rotated


def _pairs(m):
    return list(combinations(range(m), 2))


@dataclass(frozen=True, eq=False)
class Bivector:
    """Element of the second exterior power of R^m.

    ``coeffs`` holds the components on ``e_j ^ e_k`` for ``j < k`` in
    lexicographic order; this is also the flattening used for the vertical
    coordinates of free groups.
    """

    dim: int
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float).reshape(-1)
        if c.shape[0] != self.dim * (self.dim - 1) // 2:
            raise ValueError(f"a bivector over R^{self.dim} needs {self.dim * (self.dim - 1) // 2} coefficients")
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def zero(cls, m):
        return cls(m, np.zeros(m * (m - 1) // 2))

    @classmethod
    def basis(cls, m, j, k):
        """The elementary bivector ``e_j ^ e_k`` (0-based indices)."""
        return wedge(np.eye(m)[j], np.eye(m)[k])

    @classmethod
    def from_matrix(cls, M):
        M = as_skew(M, check=False)
        m = M.shape[0]
        iu = np.triu_indices(m, 1)
        return cls(m, M[iu])

    def matrix(self):
        """Skew matrix with ``M[j, k] = z_jk`` for ``j < k``."""
        M = np.zeros((self.dim, self.dim))
        M[np.triu_indices(self.dim, 1)] = self.coeffs
        return M - M.T

    def dot(self, other):
        return float(self.coeffs @ other.coeffs)

    def norm(self):
        return float(np.linalg.norm(self.coeffs))

    def __add__(self, other):
        return Bivector(self.dim, self.coeffs + other.coeffs)

    def __sub__(self, other):
        return Bivector(self.dim, self.coeffs - other.coeffs)

    def __neg__(self):
        return Bivector(self.dim, -self.coeffs)

    def __mul__(self, scalar):
        return Bivector(self.dim, float(scalar) * self.coeffs)

    __rmul__ = __mul__

    def __repr__(self):
        terms = [f"{c:+g} e{j + 1}^e{k + 1}" for c, (j, k) in zip(self.coeffs, _pairs(self.dim)) if c != 0]
        return f"Bivector({' '.join(terms) or '0'})"


def wedge(x, y):
    """Elementary bivector ``x ^ y`` with components ``x_j y_k - x_k y_j``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("wedge needs two vectors of the same dimension")
    outer = np.outer(x, y)
    return Bivector.from_matrix(outer - outer.T)


def bivector_support(z, tol=1e-10):
    """Rank and support of a bivector.

    Returns the number of rotation planes of the associated skew matrix and
    an orthonormal basis (rows) of their span. Planes whose frequency is
    below ``tol * |z|`` are ignored.
    """
    nrm = z.norm()
    if nrm == 0:
        return 0, np.zeros((0, z.dim))
    M = z.matrix()
    dec = skew_spectral(M, zero_rtol=0.0)
    keep = dec.lambdas > tol * nrm
    basis = np.concatenate([dec.v[keep], dec.v_perp[keep]])
    return int(keep.sum()), basis


def orthonormal_rows(vectors, rtol=1e-10):
    """Orthonormal basis (rows) of the span of the given vectors.

    Singular values below ``rtol`` times the largest are dropped.
    """
    V = np.atleast_2d(np.asarray(vectors, dtype=float))
    if V.size == 0:
        return np.zeros((0, V.shape[-1]))
    _, s, Vt = np.linalg.svd(V, full_matrices=False)
    if s.size == 0 or s[0] == 0:
        return np.zeros((0, V.shape[1]))
    r = int(np.sum(s > rtol * s[0]))
    return Vt[:r]


def vandermonde_span(vs, lambdas, rtol=1e-9):
    """Orthonormal basis of ``span{sum_k lambda_k^(2j-1) v_k : j = 1..p}``.

    For distinct positive frequencies the odd-power Vandermonde matrix is
    invertible, so this is the span of the ``v_k`` themselves. Frequencies
    are rescaled by their maximum first, which leaves the span unchanged and
    keeps the powers bounded.
    """
    vs = np.atleast_2d(np.asarray(vs, dtype=float))
    lam = np.asarray(lambdas, dtype=float).reshape(-1)
    if vs.shape[0] != lam.shape[0]:
        raise ValueError("need exactly one frequency per vector")
    if np.any(lam <= 0):
        raise ValueError("frequencies must be positive")
    srt = np.sort(lam)
    if np.any(np.diff(srt) <= MERGE_RTOL * srt[1:]):
        raise DuplicateFrequencyError("two frequencies coincide within relative 1e-9")
    p = lam.shape[0]
    scaled = lam / lam.max()
    V = scaled[None, :] ** (2 * np.arange(1, p + 1)[:, None] - 1)  # (j, k)
    return orthonormal_rows(V @ vs, rtol=rtol)
