"""Brute-force reference implementations written independently of the package."""

import itertools
import math

import numpy as np

X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]])
Z = np.diag([1.0, -1.0]).astype(complex)
I2 = np.eye(2, dtype=complex)
PAULIS = {"X": X, "Y": Y, "Z": Z}


def kron_all(ops):
    out = np.array([[1.0 + 0j]])
    for op in ops:
        out = np.kron(out, op)
    return out


def full_operator(op, qubit, n):
    return kron_all([op if q == qubit else I2 for q in range(n)])


def pauli_expectation(rho, qubit, axis):
    n = int(np.log2(rho.shape[0]))
    return float(np.real(np.trace(rho @ full_operator(PAULIS[axis], qubit, n))))


def hamiltonian(J, h):
    n = len(h)
    H = np.zeros((2**n, 2**n), dtype=complex)
    for i in range(n):
        for j in range(i + 1, n):
            H += J[i][j] * full_operator(X, i, n) @ full_operator(X, j, n)
        H += h[i] * full_operator(Z, i, n)
    return H


def partial_trace(rho, keep):
    """Sum over traced bit strings by explicit loops."""
    n = int(np.log2(rho.shape[0]))
    keep = sorted(keep)
    traced = [q for q in range(n) if q not in keep]
    k = len(keep)
    out = np.zeros((2**k, 2**k), dtype=complex)

    def index(bits_keep, bits_traced):
        bits = [0] * n
        for q, b in zip(keep, bits_keep):
            bits[q] = b
        for q, b in zip(traced, bits_traced):
            bits[q] = b
        return int("".join(map(str, bits)), 2)

    for a in itertools.product((0, 1), repeat=k):
        for b in itertools.product((0, 1), repeat=k):
            ia = int("".join(map(str, a)), 2) if k else 0
            ib = int("".join(map(str, b)), 2) if k else 0
            for t in itertools.product((0, 1), repeat=len(traced)):
                out[ia, ib] += rho[index(a, t), index(b, t)]
    return out


def entropy_bits(rho):
    w = np.linalg.eigvalsh(rho)
    w = w[w > 1e-12]
    return float(-np.sum(w * np.log2(w)))


def expm_hermitian(H, t):
    """Taylor-free reference: scipy's general matrix exponential."""
    import scipy.linalg
    return scipy.linalg.expm(-1j * H * t)


def choi_density(U):
    d = U.shape[0]
    phi = np.eye(d).reshape(-1) / math.sqrt(d)
    v = np.kron(np.eye(d), U) @ phi
    return np.outer(v, v.conj())


def i3_oracle(U, a, c, dd):
    n = int(np.log2(U.shape[0]))
    rho = choi_density(U)
    c = [n + q for q in c]
    dd = [n + q for q in dd]

    def S(region):
        return entropy_bits(partial_trace(rho, region)) if len(region) < 2 * n else 0.0

    def I(x, y):
        return S(x) + S(y) - S(sorted(x + y))

    return I(a, c) + I(a, dd) - I(a, sorted(c + dd))
