"""Reference computations written independently of the package internals."""

import numpy as np
from scipy.linalg import expm


def laplacian_loops(n, edges, weights):
    """Weighted Laplacian assembled entry by entry."""
    L = [[0.0] * n for _ in range(n)]
    for (i, j), w in zip(edges, weights):
        L[i][i] += w
        L[j][j] += w
        L[i][j] -= w
        L[j][i] -= w
    return np.array(L)


def cycle_gap(n):
    return 2.0 * (1.0 - np.cos(2.0 * np.pi / n))


def zero_sum_basis(n):
    """Orthonormal basis of the vectors summing to zero, from a QR of a shifted identity."""
    M = np.eye(n)[:, 1:] - 1.0 / n
    q, _ = np.linalg.qr(M)
    return q


def second_moment_operator(n, edges, rates, a, theta, coupling, intensity):
    """Generator of ``E[e e^T]`` for the accelerated method on quadratics.

    ``e = (u - v*, v - v*)`` restricted to zero-sum coordinates. Between
    activations the pair mixes at rate ``intensity * theta``; an activation of
    edge ``k`` applies the rank-one jump ``J_k``.
    """
    N = 2 * n
    Q = zero_sum_basis(n)
    Z = np.zeros_like(Q)
    P = np.block([[Q, Z], [Z, Q]])
    B = np.zeros((N, N))
    B[:n, :n] = -np.eye(n)
    B[:n, n:] = np.eye(n)
    B[n:, :n] = np.eye(n)
    B[n:, n:] = -np.eye(n)
    B *= intensity * theta
    Bp = P.T @ B @ P
    M = N - 2
    K = np.kron(Bp, np.eye(M)) + np.kron(np.eye(M), Bp)
    for k, (i, j) in enumerate(edges):
        G = np.zeros(N)
        G[i], G[j] = 1.0 / a[i], -1.0 / a[j]
        s = 1.0 / a[i] + 1.0 / a[j]
        U = np.zeros(N)
        U[i], U[j] = -1.0 / s, 1.0 / s
        V = np.zeros(N)
        V[n + i], V[n + j] = -coupling, coupling
        J = P.T @ (np.eye(N) + np.outer(U + V, G)) @ P
        K += rates[k] * (np.kron(J, J) - np.eye(M * M))
    return K, P


def slowest_second_moment_rate(K):
    return float(-np.max(np.linalg.eigvals(K).real))


def expected_quadratic(K, P, e0, Qform, times):
    """``E[e_t^T Qform e_t]`` for the linear second-moment flow started at ``e0 e0^T``."""
    y0 = P.T @ e0
    M0 = np.outer(y0, y0).ravel()
    Qp = P.T @ Qform @ P
    return np.array([np.sum(Qp * (expm(t * K) @ M0).reshape(y0.size, y0.size)) for t in times])
