"""Tangent-space operators on S^{d-1}.

All maps act on plain numpy vectors and broadcast over leading axes, so a
batch of (sigma', sigma, x) triples can be processed in one call.
"""

from __future__ import annotations

import itertools

import numpy as np

UNIT_TOL = 1e-12
TANGENT_TOL = 1e-10


def _dot(u, v):
    return np.einsum("...i,...i->...", u, v)


def check_unit(sigma, tol=UNIT_TOL):
    sigma = np.asarray(sigma, dtype=float)
    if np.any(np.abs(np.linalg.norm(sigma, axis=-1) - 1.0) > tol):
        raise ValueError("vector is not of unit length")
    return sigma


def check_tangent(base, x, tol=TANGENT_TOL):
    x = np.asarray(x, dtype=float)
    if np.any(np.abs(_dot(x, base)) > tol):
        raise ValueError("vector is not tangent at the base point")
    return x


def project_tangent(sigma, x):
    """Orthogonal projection of x onto T_sigma S^{d-1}."""
    return x - _dot(x, sigma)[..., None] * sigma


def map_M(sigma_p, sigma, x):
    """M_{s',s}(x) = (s'.s) x - (s.x) s'.  The result is orthogonal to s."""
    return _dot(sigma_p, sigma)[..., None] * x - _dot(sigma, x)[..., None] * sigma_p


def map_P(sigma_p, sigma, x):
    """P_{s',s}(x) = M_{s',s}(x) + (s'.x) s, a contraction taking T_{s'} to T_s."""
    return map_M(sigma_p, sigma, x) + _dot(sigma_p, x)[..., None] * sigma


def nonlocal_metric(sigma_p, sigma, x, y):
    """|y - x|^2_{s',s} = |x|^2 + |y|^2 - 2 x.P_{s',s}(y), x tangent at s, y at s'."""
    return _dot(x, x) + _dot(y, y) - 2.0 * _dot(x, map_P(sigma_p, sigma, y))


def rotation_generators(d):
    """Antisymmetric matrices A_ij with A_ij sigma = sigma_i e_j - sigma_j e_i.

    For d = 3 the order is (23), (31), (12), reproducing the usual three
    fields; otherwise pairs i < j in lexicographic order.
    """
    if d < 2:
        raise ValueError("d must be >= 2")
    if d == 3:
        pairs = [(1, 2), (2, 0), (0, 1)]
    elif d == 2:
        pairs = [(0, 1)]
    else:
        pairs = list(itertools.combinations(range(d), 2))
    mats = []
    for i, j in pairs:
        a = np.zeros((d, d))
        # b_ij(sigma) = sigma_i e_j - sigma_j e_i
        a[j, i] = 1.0
        a[i, j] = -1.0
        mats.append(a)
    return np.array(mats)


def rotation_fields(d):
    """The d(d-1)/2 rotation fields, as callables sigma -> b_k(sigma)."""
    return [(lambda s, a=a: np.einsum("ij,...j->...i", a, s)) for a in rotation_generators(d)]


def field_values(d, sigma):
    """Stack of all rotation fields at sigma, shape (N, ..., d)."""
    return np.einsum("kij,...j->k...i", rotation_generators(d), sigma)


def random_unit(rng, d, size=()):
    shape = (size,) if isinstance(size, int) else tuple(size)
    v = rng.standard_normal(shape + (d,))
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def random_tangent(rng, sigma):
    return project_tangent(sigma, rng.standard_normal(np.shape(sigma)))


def random_rotation(rng, d):
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def tangent_frame(sigma):
    """Orthonormal basis of T_sigma S^{d-1}, returned as rows of a (d-1, d) array."""
    sigma = np.asarray(sigma, dtype=float)
    d = sigma.size
    # Householder reflection sending e_0 to sigma; its other columns span the tangent space
    e = np.zeros(d)
    e[0] = 1.0
    v = e - sigma
    nv = np.linalg.norm(v)
    if nv < 1e-14:
        return np.eye(d)[1:]
    v = v / nv
    h = np.eye(d) - 2.0 * np.outer(v, v)
    return h[:, 1:].T


def sphere_gradient_fd(func, sigma, step=1e-5):
    """Tangential gradient of a scalar function by central differences along geodesics."""
    sigma = np.asarray(sigma, dtype=float)
    grad = np.zeros_like(sigma)
    for t in tangent_frame(sigma):
        plus = np.cos(step) * sigma + np.sin(step) * t
        minus = np.cos(step) * sigma - np.sin(step) * t
        grad += (func(plus) - func(minus)) / (2 * step) * t
    return grad
