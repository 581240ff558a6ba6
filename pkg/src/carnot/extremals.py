"""Normal extremals of step-two groups and their abnormality.

A normal extremal control is ``u(s) = exp(-s tau.A) u0``. Splitting ``u0``
along the rotation planes of ``-tau.A`` gives the canonical form

    u(s) = sum_k (cos(lambda_k s) a_k + sin(lambda_k s) a_k_perp) + z

with distinct ascending frequencies, ``|a_k| = |a_k_perp|`` and ``z`` in the
kernel. The span ``W`` of all these vectors decides abnormality: the control
is singular iff some ``sigma != 0`` has ``W`` inside ``ker(sigma.A)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .controls import Control
from .groups import StepTwoGroup
from .linalg_skew import MERGE_RTOL, _cluster, bivector_support, orthonormal_rows, skew_spectral

#: amplitude (relative to |u0|) below which a rotation plane is dropped
AMPLITUDE_RTOL = 1e-12
#: relative singular value threshold for the sigma null space and ranks
NULL_RTOL = 1e-10


@dataclass(frozen=True, eq=False)
class NormalExtremal:
    """A normal extremal control with its canonical trigonometric data.

    ``lambdas`` has shape ``(p,)``; ``a`` and ``a_perp`` have shape
    ``(p, m)``; ``z`` has shape ``(m,)``.
    """

    tau: np.ndarray
    u0: np.ndarray
    lambdas: np.ndarray
    a: np.ndarray
    a_perp: np.ndarray
    z: np.ndarray

    @property
    def p(self):
        return len(self.lambdas)

    @property
    def m(self):
        return self.u0.shape[0]

    @property
    def length(self):
        """Length of the curve; equals ``|u0|`` since the flow is orthogonal."""
        return float(np.sqrt(self.z @ self.z + np.sum(self.a**2)))

    def value(self, s):
        """Canonical form evaluated at times ``s``; shape ``(len(s), m)``."""
        s = np.atleast_1d(np.asarray(s, dtype=float))
        ph = np.outer(s, self.lambdas)
        return np.cos(ph) @ self.a + np.sin(ph) @ self.a_perp + self.z

    def cell_averages(self, n_steps):
        """Mean of ``u`` over each cell of the uniform grid."""
        edges = np.linspace(0.0, 1.0, n_steps + 1)
        lam = self.lambdas
        h = 1.0 / n_steps
        S = np.sin(np.outer(edges, lam))
        C = np.cos(np.outer(edges, lam))
        mean_cos = (S[1:] - S[:-1]) / (lam * h) if self.p else np.zeros((n_steps, 0))
        mean_sin = -(C[1:] - C[:-1]) / (lam * h) if self.p else np.zeros((n_steps, 0))
        return mean_cos @ self.a + mean_sin @ self.a_perp + self.z

    def sample(self, n_steps=64):
        """Piecewise-constant control with the same cell integrals."""
        return Control(self.cell_averages(n_steps))

    def W_basis(self, rtol=NULL_RTOL):
        """Orthonormal rows spanning ``W = span{a_k, a_k_perp, z}``."""
        vecs = np.concatenate([self.a, self.a_perp, self.z[None]])
        scale = np.linalg.norm(self.u0)
        if scale == 0:
            return np.zeros((0, self.m))
        vecs = vecs[np.linalg.norm(vecs, axis=1) > rtol * scale]
        return orthonormal_rows(vecs, rtol=rtol)

    def to_dict(self):
        return {"tau": self.tau.tolist(), "u0": self.u0.tolist()}


def make_extremal(G, tau, u0, merge_rtol=MERGE_RTOL):
    """Canonical form of ``u(s) = exp(-s tau.A) u0``.

    Planes sharing a frequency (within ``merge_rtol``) are merged into one
    pair, and pairs carrying no amplitude are dropped, so the data are
    uniquely determined by the function ``u``.
    """
    tau = np.asarray(tau, dtype=float).reshape(-1)
    u0 = np.asarray(u0, dtype=float).reshape(-1)
    if tau.shape[0] != G.ell or u0.shape[0] != G.m:
        raise ValueError(f"need tau in R^{G.ell} and u0 in R^{G.m}")
    M = -G.sigma_A(tau)
    dec = skew_spectral(M, merge_rtol=merge_rtol)
    cv, cp = dec.v @ u0, dec.v_perp @ u0
    a = cv[:, None] * dec.v + cp[:, None] * dec.v_perp
    a_perp = cv[:, None] * dec.v_perp - cp[:, None] * dec.v
    z = dec.kernel.T @ (dec.kernel @ u0)

    lams, As, Ps = [], [], []
    for group in _cluster(dec.lambdas, merge_rtol):
        amp = a[group].sum(axis=0)
        if np.linalg.norm(amp) <= AMPLITUDE_RTOL * max(np.linalg.norm(u0), 1e-300):
            continue
        lams.append(dec.lambdas[group].mean())
        As.append(amp)
        Ps.append(a_perp[group].sum(axis=0))
    m = G.m
    return NormalExtremal(
        tau=tau,
        u0=u0,
        lambdas=np.array(lams),
        a=np.array(As).reshape(-1, m),
        a_perp=np.array(Ps).reshape(-1, m),
        z=z,
    )


# -- closed-form endpoint -------------------------------------------------------


def _int_exp(w):
    """``int_0^1 exp(i w s) ds`` without cancellation near ``w = 0``."""
    w = np.asarray(w, dtype=float)
    return np.sinc(w / np.pi) + 1j * np.sin(w / 2) * np.sinc(w / (2 * np.pi))


def _dd1(x, y):
    """First divided difference of ``g`` with ``g'(z) = exp(iz)/i``."""
    return -1j * np.exp(1j * x) * _int_exp(y - x)


def _dd2(x0, x1, x2, spread_tol=1e-4):
    """Second divided difference of ``g`` with ``g''(z) = exp(iz)``.

    Equals the integral of ``exp(i(x0 t0 + x1 t1 + x2 t2))`` over the
    2-simplex. Nodes are sorted so the division is by the widest gap; nearly
    confluent nodes use a Taylor expansion about their mean.
    """
    nodes = np.sort(np.stack(np.broadcast_arrays(x0, x1, x2)), axis=0)
    n0, n1, n2 = nodes
    spread = n2 - n0
    wide = spread > spread_tol
    safe = np.where(wide, spread, 1.0)
    direct = (_dd1(n1, n2) - _dd1(n0, n1)) / safe
    c = nodes.mean(axis=0)
    y = nodes - c
    p2, p3 = np.sum(y**2, axis=0), np.sum(y**3, axis=0)
    taylor = np.exp(1j * c) * (0.5 - p2 / 48 - 1j * p3 / 360)
    return np.where(wide, direct, taylor)


def _exponential_form(ext):
    """Frequencies and complex amplitudes with ``u(s) = sum_q exp(i w_q s) d_q``."""
    half = 0.5 * (ext.a - 1j * ext.a_perp)
    omegas = np.concatenate([[0.0], ext.lambdas, -ext.lambdas])
    ds = np.concatenate([ext.z[None].astype(complex), half, half.conj()])
    return omegas, ds


def extremal_endpoint(G, ext):
    """Exact endpoint of a normal extremal.

    With ``u(s) = sum_q exp(i w_q s) d_q`` the horizontal endpoint is
    ``sum_q d_q int_0^1 exp(i w_q s) ds`` and the vertical one is
    ``1/2 tr(A^a P)`` with ``P = int_0^1 u(s) x(s)^T ds``; every scalar
    integral is a divided difference of the exponential at the nodes
    ``0, w_q, w_q + w_r``.
    """
    omegas, ds = _exponential_form(ext)
    x_end = (_int_exp(omegas) @ ds).real
    wq, wr = np.meshgrid(omegas, omegas, indexing="ij")
    K = _dd2(np.zeros_like(wq), wq, wq + wr)
    P = np.einsum("qr,qi,rj->ij", K, ds, ds).real
    t_end = 0.5 * np.einsum("aij,ji->a", G.A, P)
    return np.concatenate([x_end, t_end])


def extremal_endpoint_expm(G, tau, u0):
    """Endpoint of ``exp(-s tau.A) u0`` through one block matrix exponential.

    With ``z = (u, x)`` solving ``z' = B z`` the Gram integral
    ``int_0^1 z z^T ds`` is read off ``expm([[-B, z0 z0^T], [0, B^T]])``
    (Van Loan). Independent of the spectral route and cheaper, so the
    shooting solver iterates with it.
    """
    m = G.m
    M = -G.sigma_A(np.asarray(tau, dtype=float))
    u0 = np.asarray(u0, dtype=float)
    B = np.zeros((2 * m, 2 * m))
    B[:m, :m] = M
    B[m:, :m] = np.eye(m)
    z0 = np.concatenate([u0, np.zeros(m)])
    C = np.zeros((4 * m, 4 * m))
    C[: 2 * m, : 2 * m] = -B
    C[: 2 * m, 2 * m :] = np.outer(z0, z0)
    C[2 * m :, 2 * m :] = B.T
    E = scipy.linalg.expm(C)
    F22 = E[2 * m :, 2 * m :]
    gram = F22.T @ E[: 2 * m, 2 * m :]
    x_end = F22.T[m:, :m] @ u0
    P = gram[m:, :m]  # int x u^T
    t_end = 0.5 * np.tensordot(G.A, P, axes=([1, 2], [0, 1]))
    return np.concatenate([x_end, t_end])


# -- abnormality ----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class AbnormalityCertificate:
    """Unit ``sigma`` with ``W`` inside ``ker(sigma.A)``, plus a basis of ``W``."""

    sigma: np.ndarray
    W_basis: np.ndarray

    def residual(self, G):
        if len(self.W_basis) == 0:
            return 0.0
        return float(np.max(np.linalg.norm(self.W_basis @ G.sigma_A(self.sigma).T, axis=1)))


def _sigma_system(G, W_basis):
    # rows (b, i), columns a: (A^a w_b)_i
    return np.einsum("aij,bj->bia", G.A, W_basis).reshape(-1, G.ell)


def abnormality_test(G, ext, tol=NULL_RTOL):
    """Certificate of abnormality for a normal extremal, or ``None``.

    Solves the homogeneous linear system ``(sigma.A) w = 0`` for all ``w``
    in a basis of ``W``; a nontrivial solution (singular values below
    ``tol`` relative to the largest) certifies the control as singular.
    """
    W = ext.W_basis()
    if len(W) == 0:
        return AbnormalityCertificate(np.eye(G.ell)[0], W)
    L = _sigma_system(G, W)
    if not np.any(L):
        return AbnormalityCertificate(np.eye(G.ell)[0], W)
    null = scipy.linalg.null_space(L, rcond=tol)
    if null.shape[1] == 0:
        return None
    sigma = null[:, 0]
    return AbnormalityCertificate(sigma / np.linalg.norm(sigma), W)


def abnormal_membership_free(G, g, tol=NULL_RTOL):
    """Whether ``g`` lies in ``W x ^2 W`` for some ``W`` of dimension ``m - 2``.

    ``W_min`` is the span of the horizontal part together with the support
    of the vertical bivector; ``g`` is an endpoint of a normal-abnormal curve
    iff ``dim W_min <= m - 2``.
    """
    if not (isinstance(G, StepTwoGroup) and G.free):
        raise TypeError("abnormal_membership_free is only defined for free groups")
    x, _ = G.split(g)
    _, support = bivector_support(G.bivector(g), tol=tol)
    vecs = [support] if len(support) else []
    if np.linalg.norm(x) > 0:
        vecs.append(x[None])
    W = orthonormal_rows(np.concatenate(vecs), rtol=tol) if vecs else np.zeros((0, G.m))
    return len(W) <= G.m - 2, W


def image_via_W(G, W_basis, tol=NULL_RTOL):
    """Orthonormal rows spanning ``{(xi, <A w, eta>) : w in W, xi, eta in R^m}``."""
    W = np.atleast_2d(np.asarray(W_basis, dtype=float)).reshape(-1, G.m)
    horiz = np.concatenate([np.eye(G.m), np.zeros((G.m, G.ell))], axis=1)
    # <A w_b, e_j> is the vector (A^a w_b)_j over a
    vert = np.einsum("aij,bj->bia", G.A, W).reshape(-1, G.ell)
    vert = np.concatenate([np.zeros((vert.shape[0], G.m)), vert], axis=1)
    return orthonormal_rows(np.concatenate([horiz, vert]), rtol=tol)
