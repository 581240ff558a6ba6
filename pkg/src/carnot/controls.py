"""Piecewise-constant controls, exact endpoint maps and their differentials.

A control is constant on each cell of the uniform grid ``k/N``. For every
supported system the trajectory is polynomial on a cell, so the endpoint is
integrated in closed form:

* step two: ``x`` is piecewise linear and a cell starting at ``x_k`` with
  value ``u_k`` adds ``h/2 <x_k, A u_k>`` to ``t`` (the ``<u_k, A u_k>``
  term vanishes by skew-symmetry);
* Engel: with ``p`` the value of ``x1`` at the start of a cell and ``(a, b)``
  the control, a cell adds ``b (p h + a h^2/2)`` to ``x3`` and
  ``b/2 (p^2 h + p a h^2 + a^2 h^3/3)`` to ``x4``;
* Martinet: the Engel cascade read in coordinates ``(x, y, z) = (x2, x1, x4)``.

All kernels accept arrays of shape ``(..., N, m)`` so that batches of
controls can be evaluated at once.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .groups import EngelSystem, MartinetSystem, StepTwoGroup

#: default relative rank tolerance for endpoint differentials
RANK_RTOL = 1e-8


@dataclass(frozen=True, eq=False)
class Control:
    """Values on a uniform grid of ``[0, 1]``; shape ``(N, m)``."""

    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if v.ndim != 2 or v.shape[0] < 1:
            raise ValueError("control values must have shape (N, m) with N >= 1")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def n_steps(self):
        return self.values.shape[0]

    @property
    def m(self):
        return self.values.shape[1]

    @property
    def h(self):
        return 1.0 / self.n_steps

    @classmethod
    def constant(cls, w, n_steps=64):
        return cls(np.tile(np.asarray(w, dtype=float), (n_steps, 1)))

    @classmethod
    def from_flat(cls, z, m):
        return cls(np.asarray(z, dtype=float).reshape(-1, m))

    def flat(self):
        return self.values.reshape(-1).copy()

    def l2_norm(self):
        return float(np.sqrt(np.sum(self.values**2) / self.n_steps))

    def l1_length(self):
        return float(np.sum(np.linalg.norm(self.values, axis=1)) / self.n_steps)

    def refine(self, factor=2):
        """Same function on a grid ``factor`` times finer."""
        return Control(np.repeat(self.values, factor, axis=0))

    def __add__(self, other):
        return Control(self.values + other.values)

    def __mul__(self, scalar):
        return Control(float(scalar) * self.values)

    __rmul__ = __mul__

    def to_csv(self, path):
        path = Path(path)
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["step"] + [f"u_{j + 1}" for j in range(self.m)])
            for k, row in enumerate(self.values):
                writer.writerow([k] + [repr(float(v)) for v in row])
        return path

    @classmethod
    def from_csv(cls, path):
        with Path(path).open() as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0], rows[1:]
        if not header or header[0] != "step":
            raise ValueError("control CSV must start with a 'step' column")
        body.sort(key=lambda r: int(r[0]))
        return cls(np.array([[float(v) for v in r[1:]] for r in body]))


def concatenate(u, v):
    """Run ``u`` on ``[0, 1/2]`` and ``v`` on ``[1/2, 1]`` (both at double speed)."""
    if u.n_steps != v.n_steps:
        lcm = np.lcm(u.n_steps, v.n_steps)
        u, v = u.refine(lcm // u.n_steps), v.refine(lcm // v.n_steps)
    return Control(2.0 * np.concatenate([u.values, v.values]))


def _values(G, u):
    vals = u.values if isinstance(u, Control) else np.asarray(u, dtype=float)
    if vals.shape[-1] != G.m:
        raise ValueError(f"{G.name} expects {G.m} control components, got {vals.shape[-1]}")
    return vals


# -- step two -----------------------------------------------------------------


def _step_two_endpoint(A, vals):
    N = vals.shape[-2]
    h = 1.0 / N
    steps = h * vals
    x_end = steps.sum(axis=-2)
    starts = np.cumsum(steps, axis=-2) - steps
    P = np.swapaxes(starts, -1, -2) @ vals  # sum_k starts_k vals_k^T
    t = 0.5 * h * np.tensordot(P, A, axes=([-2, -1], [1, 2]))
    return np.concatenate([x_end, t], axis=-1)


def _step_two_jacobian(A, vals):
    N, m = vals.shape
    h = 1.0 / N
    steps = h * vals
    x_end = steps.sum(axis=0)
    mid = np.cumsum(steps, axis=0) - 0.5 * steps
    # d t / d u_k = h A (x/2 - mid_k), row vector per vertical coordinate
    rows_t = h * ((0.5 * x_end - mid) @ np.swapaxes(A, 1, 2))
    ell = A.shape[0]
    J = np.zeros((m + ell, N, m))
    J[np.arange(m), :, np.arange(m)] = h
    J[m:] = rows_t
    return J.reshape(m + ell, N * m)


# -- Engel / Martinet ---------------------------------------------------------


def _engel_endpoint(vals):
    N = vals.shape[-2]
    h = 1.0 / N
    a, b = vals[..., 0], vals[..., 1]
    p = h * (np.cumsum(a, axis=-1) - a)
    x1 = h * a.sum(axis=-1)
    x2 = h * b.sum(axis=-1)
    x3 = np.sum(b * (p * h + a * h * h / 2), axis=-1)
    x4 = np.sum(0.5 * b * (p * p * h + p * a * h * h + a * a * h**3 / 3), axis=-1)
    return np.stack([x1, x2, x3, x4], axis=-1)


def _rev_cumsum_strict(v):
    """``out[i] = sum_{k > i} v[k]``."""
    c = np.cumsum(v[::-1])[::-1]
    return c - v


def _engel_jacobian(vals):
    N = vals.shape[0]
    h = 1.0 / N
    a, b = vals[:, 0], vals[:, 1]
    p = h * (np.cumsum(a) - a)
    J = np.zeros((4, N, 2))
    J[0, :, 0] = h
    J[1, :, 1] = h
    J[2, :, 0] = h * h * (0.5 * b + _rev_cumsum_strict(b))
    J[2, :, 1] = p * h + 0.5 * a * h * h
    J[3, :, 1] = 0.5 * (p * p * h + p * a * h * h + a * a * h**3 / 3)
    later = _rev_cumsum_strict(0.5 * b * (2 * p * h + a * h * h))
    J[3, :, 0] = 0.5 * b * (p * h * h + 2 * a * h**3 / 3) + h * later
    return J.reshape(4, 2 * N)


# Martinet (x, y, z) <- Engel (x2, x1, x4); controls (u_X, u_Y) <- (u2, u1)
_MARTINET_ROWS = [1, 0, 3]


def _martinet_endpoint(vals):
    return _engel_endpoint(vals[..., ::-1])[..., _MARTINET_ROWS]


def _martinet_jacobian(vals):
    N = vals.shape[0]
    J = _engel_jacobian(vals[:, ::-1])[_MARTINET_ROWS].reshape(3, N, 2)
    return J[:, :, ::-1].reshape(3, 2 * N)


# -- public API ---------------------------------------------------------------


def endpoint_values(G, vals):
    """Endpoint for raw control arrays of shape ``(..., N, m)``."""
    vals = _values(G, vals)
    if isinstance(G, StepTwoGroup):
        return _step_two_endpoint(G.A, vals)
    if isinstance(G, EngelSystem):
        return _engel_endpoint(vals)
    if isinstance(G, MartinetSystem):
        return _martinet_endpoint(vals)
    raise TypeError(f"unsupported system {G!r}")


def endpoint(G, u):
    """Exact endpoint ``E(u)`` of the trajectory started at the identity."""
    return endpoint_values(G, u)


def d_endpoint(G, u):
    """Differential of the endpoint map, shape ``(n, N m)``.

    Column ``k m + j`` is the derivative with respect to component ``j`` of
    the value on cell ``k``; this is exact for the discretized map (no finite
    differences).
    """
    vals = _values(G, u)
    if vals.ndim != 2:
        raise ValueError("d_endpoint takes a single control")
    if isinstance(G, StepTwoGroup):
        return _step_two_jacobian(G.A, vals)
    if isinstance(G, EngelSystem):
        return _engel_jacobian(vals)
    if isinstance(G, MartinetSystem):
        return _martinet_jacobian(vals)
    raise TypeError(f"unsupported system {G!r}")


def endpoint_rank(G, u, tol=RANK_RTOL):
    """Numerical rank of ``dE(u)`` and an orthonormal basis of its image.

    Singular values at least ``tol`` times the largest count. The basis is
    returned as rows of shape ``(rank, n)``.
    """
    J = d_endpoint(G, u)
    U, s, _ = np.linalg.svd(J, full_matrices=False)
    if s.size == 0 or s[0] == 0:
        return 0, np.zeros((0, J.shape[0]))
    r = int(np.sum(s >= tol * s[0]))
    return r, U[:, :r].T


def is_singular_control(G, u, tol=RANK_RTOL):
    """True iff ``dE(u)`` is not onto."""
    return endpoint_rank(G, u, tol)[0] < G.dim
