"""
Discrete tangent-point energy with one-point (centroid) quadrature:

    E = sum over ordered pairs (S, T) of non-adjacent faces of
        |n_S . (c_T - c_S)|^alpha / |c_T - c_S|^beta * A_S * A_T

and its exact gradient with respect to vertex positions. Faces sharing a
vertex are adjacent. Pairs are evaluated densely in row blocks; an optional
cutoff radius drops pairs whose centroids are farther apart.
"""

from __future__ import annotations

from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.sparse import csr_matrix

from topogen.errors import SingularConfigurationError
from topogen.mesh import TriangleMesh

DEFAULT_EXPONENTS = (2.0, 8.0)
BLOCK_ELEMENTS = 1 << 20  # face pairs per row block


def check_exponents(exponents: Sequence[float]) -> Tuple[float, float]:
    alpha, beta = (float(x) for x in exponents)
    if alpha <= 0 or beta <= 0:
        raise ValueError(f"energy exponents must be positive, got {(alpha, beta)}")
    if beta <= alpha + 2:
        raise ValueError(f"energy needs beta > alpha + 2, got alpha={alpha}, beta={beta}")
    return alpha, beta


def _incidence(mesh: TriangleMesh) -> csr_matrix:
    f = mesh.faces
    rows = np.repeat(np.arange(len(f)), 3)
    return csr_matrix((np.ones(f.size), (rows, f.ravel())), shape=(len(f), mesh.vertex_count))


def _evaluate(
    mesh: TriangleMesh,
    exponents: Sequence[float],
    cutoff: Optional[float],
    with_gradient: bool,
) -> Tuple[float, Optional[np.ndarray]]:
    alpha, beta = check_exponents(exponents)
    c = mesh.face_centroids
    n = mesh.face_normals
    A = mesh.face_areas
    F = mesh.face_count
    inc = _incidence(mesh)
    inc_t = inc.T.tocsr()

    lo, hi = mesh.bounds
    tiny = (1e-12 * max(float(np.linalg.norm(hi - lo)), 1.0)) ** 2
    cutoff2 = np.inf if cutoff is None else float(cutoff) ** 2

    energy = 0.0
    G_c = np.zeros((F, 3))
    G_n = np.zeros((F, 3))
    G_A = np.zeros(F)

    step = max(1, BLOCK_ELEMENTS // max(F, 1))
    for s in range(0, F, step):
        rows = slice(s, min(s + step, F))
        d = c[None, :, :] - c[rows, None, :]  # d[S, T] = c_T - c_S
        r2 = np.einsum("stk,stk->st", d, d)
        mask = (inc[rows] @ inc_t).toarray() == 0
        mask &= r2 <= cutoff2
        if np.any(mask & (r2 <= tiny)):
            S, T = np.argwhere(mask & (r2 <= tiny))[0]
            raise SingularConfigurationError(
                f"faces {s + S} and {T} are non-adjacent with coincident centroids"
            )
        r2 = np.where(mask, r2, 1.0)
        u = np.einsum("stk,sk->st", d, n[rows])
        au = np.abs(u)
        inv_rb = np.where(mask, r2 ** (-beta / 2), 0.0)
        k = au**alpha * inv_rb
        w = A[rows, None] * A[None, :]
        energy += float(np.sum(k * w))
        if not with_gradient:
            continue

        # alpha |u|^(alpha-1) sign(u); zero at u = 0
        du = np.where(au > 0, alpha * au ** (alpha - 1) * np.sign(u), 0.0) * inv_rb
        dr2 = -0.5 * beta * k / r2
        g_d = w[..., None] * (du[..., None] * n[rows, None, :] + 2.0 * dr2[..., None] * d)
        G_c += g_d.sum(axis=0)
        G_c[rows] -= g_d.sum(axis=1)
        G_n[rows] += np.einsum("st,stk->sk", w * du, d)
        G_A[rows] += k @ A
        G_A += A[rows] @ k

    if not with_gradient:
        return energy, None

    tri = mesh.vertices[mesh.faces]
    p0, p1, p2 = tri[:, 0], tri[:, 1], tri[:, 2]
    norm = 2.0 * A
    tangential = G_n - np.einsum("fk,fk->f", G_n, n)[:, None] * n
    G_N = tangential / np.where(norm > 0, norm, 1.0)[:, None] + 0.5 * G_A[:, None] * n

    grad = np.zeros_like(mesh.vertices)
    np.add.at(grad, mesh.faces[:, 0], np.cross(G_N, p2 - p1))
    np.add.at(grad, mesh.faces[:, 1], np.cross(G_N, p0 - p2))
    np.add.at(grad, mesh.faces[:, 2], np.cross(G_N, p1 - p0))
    for j in range(3):
        np.add.at(grad, mesh.faces[:, j], G_c / 3.0)
    return energy, grad


def tangent_point_energy(
    mesh: TriangleMesh,
    exponents: Sequence[float] = DEFAULT_EXPONENTS,
    cutoff: Optional[float] = None,
) -> float:
    return _evaluate(mesh, exponents, cutoff, with_gradient=False)[0]


def tangent_point_gradient(
    mesh: TriangleMesh,
    exponents: Sequence[float] = DEFAULT_EXPONENTS,
    cutoff: Optional[float] = None,
) -> np.ndarray:
    """(V, 3) gradient of tangent_point_energy with respect to vertex positions."""
    return _evaluate(mesh, exponents, cutoff, with_gradient=True)[1]


def tangent_point_energy_and_gradient(
    mesh: TriangleMesh,
    exponents: Sequence[float] = DEFAULT_EXPONENTS,
    cutoff: Optional[float] = None,
) -> Tuple[float, np.ndarray]:
    energy, grad = _evaluate(mesh, exponents, cutoff, with_gradient=True)
    return energy, grad
