"""Reference computations that share no code with the package."""

import itertools
import math

import numpy as np


def geometric_lengths(total, n, ratio):
    # l, l r, ..., l r^(n-1) summing to total
    first = total * (ratio - 1) / (ratio**n - 1)
    return np.array([first * ratio**k for k in range(n)])


def dense_stiffness(nodes, c):
    n = len(nodes)
    K = np.zeros((n, n))
    for e in range(n - 1):
        h = nodes[e + 1] - nodes[e]
        K[e : e + 2, e : e + 2] += c[e] / h * np.array([[1.0, -1.0], [-1.0, 1.0]])
    return K


def dense_lumped_mass(nodes):
    n = len(nodes)
    M = np.zeros((n, n))
    for e in range(n - 1):
        h = nodes[e + 1] - nodes[e]
        M[e, e] += h / 2
        M[e + 1, e + 1] += h / 2
    return M


def truncated_energy_elementwise(nodes, c, chi, phi):
    """Sum over elements of (c/h) * avg(chi) * (phi_i - phi_j)^2."""
    tot = 0.0
    for e in range(len(nodes) - 1):
        h = nodes[e + 1] - nodes[e]
        tot += c[e] / h * 0.5 * (chi[e] + chi[e + 1]) * (phi[e] - phi[e + 1]) ** 2
    return tot


def enumerate_obstacle(A, constrained, lower=1.0):
    """Minimize x^T A x with x_i >= lower on ``constrained`` by trying every active set."""
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    C = list(constrained)
    best = math.inf
    best_x = None
    for k in range(len(C) + 1):
        for S in itertools.combinations(C, k):
            S = list(S)
            F = [i for i in range(n) if i not in S]
            x = np.zeros(n)
            x[S] = lower
            if F:
                x[F] = np.linalg.solve(A[np.ix_(F, F)], -A[np.ix_(F, S)] @ x[S])
            if all(x[i] >= lower - 1e-12 for i in C):
                v = float(x @ A @ x)
                if v < best:
                    best, best_x = v, x
    return best, best_x


def dirichlet_mass_series(t, terms=2001):
    """<1, S_t 1> for the Dirichlet Laplacian on (0,1)."""
    return sum(8.0 / (k * k * math.pi**2) * math.exp(-k * k * math.pi**2 * t) for k in range(1, terms, 2))


def dirichlet_center_series(t, terms=2001):
    """(S_t 1)(1/2) for the Dirichlet Laplacian on (0,1)."""
    return sum(4.0 / (k * math.pi) * math.sin(k * math.pi / 2) * math.exp(-k * k * math.pi**2 * t) for k in range(1, terms, 2))


def exponential_point_capacity(L):
    """Two-sided point capacity of 0 for int |u'|^2 + u^2 on [-L, L], free ends: 2 tanh L."""
    return 2.0 * math.tanh(L)


def one_sided_point_capacity(L):
    return math.tanh(L)
