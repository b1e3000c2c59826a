"""Exact density-matrix dynamics for small transverse-field Ising reservoirs.

Qubit convention: qubit 0 is the leftmost tensor factor, so qubit ``j`` is
addressed by bit ``n - 1 - j`` of a computational-basis index.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

MAX_QUBITS = 12

PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}
AXES = ("X", "Y", "Z")

KET_PLUS = np.array([1.0, 1.0], dtype=complex) / math.sqrt(2.0)
KET_MINUS = np.array([1.0, -1.0], dtype=complex) / math.sqrt(2.0)
KET_0 = np.array([1.0, 0.0], dtype=complex)
KET_1 = np.array([0.0, 1.0], dtype=complex)


class DimensionError(ValueError):
    pass


class NumericalError(RuntimeError):
    pass


@dataclass(frozen=True)
class ReservoirParams:
    """Couplings ``J`` (symmetric, zero diagonal) and transverse fields ``h``."""

    J: np.ndarray
    h: np.ndarray

    def __post_init__(self):
        J = np.asarray(self.J, dtype=float)
        h = np.asarray(self.h, dtype=float).ravel()
        n = h.size
        if n < 1:
            raise DimensionError("need at least one qubit")
        if J.shape != (n, n):
            raise DimensionError(f"J has shape {J.shape}, expected {(n, n)}")
        if not np.allclose(J, J.T, atol=0.0, rtol=0.0):
            raise ValueError("J must be symmetric")
        if np.any(np.diag(J) != 0):
            raise ValueError("J must have zero diagonal")
        object.__setattr__(self, "J", J)
        object.__setattr__(self, "h", h)

    @property
    def n(self) -> int:
        return self.h.size

    @staticmethod
    def num_free(n: int) -> int:
        return n * (n + 1) // 2

    @classmethod
    def from_genome(cls, values: Sequence[float], n: int) -> "ReservoirParams":
        """Upper-triangular couplings (row-major) followed by the fields."""
        values = np.asarray(values, dtype=float)
        if values.size != cls.num_free(n):
            raise DimensionError(
                f"genome of length {values.size} does not match n={n} "
                f"({cls.num_free(n)} parameters)"
            )
        iu = np.triu_indices(n, k=1)
        J = np.zeros((n, n))
        J[iu] = values[: len(iu[0])]
        J = J + J.T
        return cls(J, values[len(iu[0]):].copy())

    def to_genome(self) -> np.ndarray:
        iu = np.triu_indices(self.n, k=1)
        return np.concatenate([self.J[iu], self.h])

    @classmethod
    def random(cls, n: int, seed=None, low: float = -1.0, high: float = 1.0):
        rng = np.random.default_rng(seed)
        return cls.from_genome(rng.uniform(low, high, cls.num_free(n)), n)


@dataclass(frozen=True)
class EncodingConfig:
    """How inputs are written onto the injected qubits.

    ``basis`` is ``"X"`` (amplitude/phase on |+>,|->), ``"Z"`` (same on
    |0>,|1>) or ``"eta"`` (one scalar per qubit on the eigenbasis of
    sin(eta) X + cos(eta) Z).  ``injected_qubits=None`` resolves to
    ceil(d_in / 2) for X/Z and d_in for eta.
    """

    basis: str = "X"
    injected_qubits: int | None = None
    eta: float = math.pi / 2

    def __post_init__(self):
        if self.basis not in ("X", "Z", "eta"):
            raise ValueError(f"unknown encoding basis {self.basis!r}")
        if self.basis == "eta" and not (0.0 <= self.eta <= math.pi / 2 + 1e-12):
            raise ValueError("eta must lie in [0, pi/2]")
        if self.injected_qubits is not None and self.injected_qubits < 1:
            raise ValueError("injected_qubits must be >= 1")

    def qubits_for(self, d_in: int) -> int:
        if self.injected_qubits is not None:
            return self.injected_qubits
        return d_in if self.basis == "eta" else math.ceil(d_in / 2)

    def capacity(self, m: int) -> int:
        """Largest input slice that fits on ``m`` qubits."""
        return m if self.basis == "eta" else 2 * m


def _check_n(n: int, max_qubits: int = MAX_QUBITS) -> None:
    if n > max_qubits:
        raise DimensionError(f"n={n} exceeds the configured maximum of {max_qubits} qubits")


def num_qubits(dim: int) -> int:
    n = int(round(math.log2(dim)))
    if 2**n != dim:
        raise DimensionError(f"dimension {dim} is not a power of two")
    return n


def qubit_mask(j: int, n: int) -> int:
    return 1 << (n - 1 - j)


def embed(op: np.ndarray, qubit: int, n: int) -> np.ndarray:
    """Single-qubit operator acting on ``qubit`` of an n-qubit register."""
    out = np.ones((1, 1), dtype=complex)
    for j in range(n):
        out = np.kron(out, op if j == qubit else PAULI["I"])
    return out


def build_hamiltonian(params: ReservoirParams, max_qubits: int = MAX_QUBITS) -> np.ndarray:
    """sum_{i<j} J_ij X_i X_j + sum_i h_i Z_i as a dense 2^n x 2^n matrix."""
    n = params.n
    _check_n(n, max_qubits)
    dim = 2**n
    idx = np.arange(dim)
    H = np.zeros((dim, dim), dtype=complex)
    zdiag = np.zeros(dim)
    for i in range(n):
        zdiag += params.h[i] * (1 - 2 * ((idx >> (n - 1 - i)) & 1))
    H[idx, idx] = zdiag
    for i in range(n):
        for j in range(i + 1, n):
            if params.J[i, j] != 0.0:
                flip = idx ^ (qubit_mask(i, n) | qubit_mask(j, n))
                H[idx, flip] += params.J[i, j]
    return H


def diagonalize(H: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    try:
        return np.linalg.eigh(H)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"Hamiltonian diagonalization failed: {exc}") from exc


def propagator_from_spectrum(energies: np.ndarray, vectors: np.ndarray, dt: float) -> np.ndarray:
    return (vectors * np.exp(-1j * energies * dt)) @ vectors.conj().T


def propagator(H: np.ndarray, dt: float) -> np.ndarray:
    """exp(-i H dt) through the spectral decomposition of H."""
    energies, vectors = diagonalize(H)
    return propagator_from_spectrum(energies, vectors, dt)


def evolve(rho: np.ndarray, U: np.ndarray) -> np.ndarray:
    if rho.shape != U.shape:
        raise DimensionError(f"state {rho.shape} and propagator {U.shape} do not match")
    return U @ rho @ U.conj().T


def partial_trace(rho: np.ndarray, keep: Iterable[int]) -> np.ndarray:
    """Reduced density matrix on the qubits in ``keep`` (kept in ascending order)."""
    n = num_qubits(rho.shape[0])
    keep = sorted(set(int(q) for q in keep))
    if not keep:
        raise DimensionError("keep must name at least one qubit")
    if keep[0] < 0 or keep[-1] >= n:
        raise DimensionError(f"qubit indices {keep} out of range for n={n}")
    if len(keep) == n:
        return rho.copy()
    letters = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ"
    row = list(letters[:n])
    col = list(letters[n: 2 * n])
    for q in range(n):
        if q not in keep:
            col[q] = row[q]
    out = "".join(row[q] for q in keep) + "".join(col[q] for q in keep)
    t = rho.reshape((2,) * (2 * n))
    red = np.einsum("".join(row) + "".join(col) + "->" + out, t)
    d = 2 ** len(keep)
    return red.reshape(d, d)


def trace_out_leading(rho: np.ndarray, m: int) -> np.ndarray:
    """Partial trace over qubits 0..m-1 (the injected block)."""
    dim = rho.shape[0]
    r = dim >> m
    return np.einsum("iaib->ab", rho.reshape(2**m, r, 2**m, r))


def _eta_states(eta: float) -> tuple[np.ndarray, np.ndarray]:
    c, s = math.cos(eta / 2), math.sin(eta / 2)
    return np.array([c, s], dtype=complex), np.array([-s, c], dtype=complex)


def encode_qubit(amplitude: float, phase: float = 0.0, basis: str = "X") -> np.ndarray:
    lo, hi = (KET_PLUS, KET_MINUS) if basis == "X" else (KET_0, KET_1)
    return math.sqrt(1.0 - amplitude) * lo + np.exp(-1j * phase) * math.sqrt(amplitude) * hi


def encode_pure_state(s_slice: Sequence[float], cfg: EncodingConfig, m: int | None = None) -> np.ndarray:
    """Product state on ``m`` injected qubits carrying ``s_slice``.

    X/Z: qubit j takes amplitude s[2j] and phase s[2j+1]; an odd tail gets
    phase 0 and qubits beyond the slice get amplitude 0.
    eta: qubit j is sqrt(s[j])|eta+> + sqrt(1 - s[j])|eta->.
    """
    s = np.atleast_1d(np.asarray(s_slice, dtype=float))
    if m is None:
        m = cfg.qubits_for(s.size)
    if s.size > cfg.capacity(m):
        raise DimensionError(f"input of length {s.size} does not fit on {m} qubits")
    if np.any(s < 0.0) or np.any(s > 1.0) or not np.all(np.isfinite(s)):
        raise ValueError(f"input amplitudes must lie in [0, 1], got {s}")
    psi = np.ones(1, dtype=complex)
    if cfg.basis == "eta":
        plus, minus = _eta_states(cfg.eta)
        for j in range(m):
            x = s[j] if j < s.size else 0.0
            psi = np.kron(psi, math.sqrt(x) * plus + math.sqrt(1.0 - x) * minus)
        return psi
    for j in range(m):
        amp = s[2 * j] if 2 * j < s.size else 0.0
        phase = s[2 * j + 1] if 2 * j + 1 < s.size else 0.0
        psi = np.kron(psi, encode_qubit(amp, phase, cfg.basis))
    return psi


def inject_input(rho: np.ndarray, s_k: Sequence[float], cfg: EncodingConfig) -> np.ndarray:
    """Measure-and-reset of the leading qubits, at the ensemble level.

    Discarding the outcome of a computational-basis measurement leaves the
    reduced state of the other qubits unchanged, so this is |psi><psi| ⊗
    Tr_{0..m-1}(rho).
    """
    n = num_qubits(rho.shape[0])
    s_k = np.atleast_1d(np.asarray(s_k, dtype=float))
    m = cfg.qubits_for(s_k.size)
    if m > n:
        raise DimensionError(f"{m} injected qubits exceed the {n}-qubit reservoir")
    psi = encode_pure_state(s_k, cfg, m)
    proj = np.outer(psi, psi.conj())
    if m == n:
        return proj
    return np.kron(proj, trace_out_leading(rho, m))


def _flip_and_sign(qubit: int, n: int) -> tuple[np.ndarray, np.ndarray]:
    idx = np.arange(2**n)
    bit = (idx >> (n - 1 - qubit)) & 1
    return idx ^ qubit_mask(qubit, n), 1 - 2 * bit


def pauli_expectation(rho: np.ndarray, qubit: int, axis: str) -> float:
    """Tr(rho sigma_qubit^axis)."""
    n = num_qubits(rho.shape[0])
    if not 0 <= qubit < n:
        raise ValueError(f"qubit {qubit} out of range for n={n}")
    flip, sign = _flip_and_sign(qubit, n)
    idx = np.arange(2**n)
    if axis == "Z":
        val = np.sum(sign * rho[idx, idx])
    elif axis == "X":
        val = np.sum(rho[idx, flip])
    elif axis == "Y":
        val = np.sum(1j * sign * rho[idx, flip])
    else:
        raise ValueError(f"unknown axis {axis!r}")
    return float(val.real)


def pauli_readout(rho: np.ndarray) -> np.ndarray:
    """All single-qubit expectations, ordered qubit-major with X, Y, Z fastest."""
    n = num_qubits(rho.shape[0])
    return np.array([pauli_expectation(rho, j, a) for j in range(n) for a in AXES])


class PauliGather:
    """Vectorized single-qubit Pauli expectations for stacks of density matrices."""

    def __init__(self, n: int):
        self.n = n
        idx = np.arange(2**n)
        self.idx = idx
        self.flips = np.stack([_flip_and_sign(j, n)[0] for j in range(n)])
        self.signs = np.stack([_flip_and_sign(j, n)[1] for j in range(n)]).astype(float)

    def __call__(self, rho: np.ndarray) -> np.ndarray:
        """rho: (..., d, d) -> (..., n, 3)."""
        diag = np.real(rho[..., self.idx, self.idx])
        off = rho[..., self.idx[None, :], self.flips]
        x = np.sum(off.real, axis=-1)
        y = -np.sum(self.signs * off.imag, axis=-1)
        z = diag @ self.signs.T
        return np.stack([x, y, z], axis=-1)


def transposition_sequence(n: int, num_swaps: int, seed) -> list[tuple[int, int]]:
    """The basis-state exchanges drawn by ``random_permutation_unitary``."""
    rng = np.random.default_rng(seed)
    dim = 2**n
    return [tuple(int(v) for v in rng.choice(dim, size=2, replace=False)) for _ in range(num_swaps)]


def random_permutation_indices(n: int, num_swaps: int = 10, seed=None) -> np.ndarray:
    """perm with U|x> = |perm[x]>, composed from independent random transpositions."""
    perm = np.arange(2**n)
    for a, b in transposition_sequence(n, num_swaps, seed):
        # apply the transposition after everything drawn so far
        ia, ib = perm == a, perm == b
        perm[ia], perm[ib] = b, a
    return perm


def random_permutation_unitary(n: int, num_swaps: int = 10, seed=None) -> np.ndarray:
    if num_swaps < 0:
        raise ValueError("num_swaps must be >= 0")
    perm = random_permutation_indices(n, num_swaps, seed)
    dim = 2**n
    U = np.zeros((dim, dim), dtype=complex)
    U[perm, np.arange(dim)] = 1.0
    return U


def haar_random_unitary(dim: int, seed=None) -> np.ndarray:
    """Haar-distributed unitary via QR of a complex Ginibre matrix."""
    if dim < 1:
        raise ValueError("dim must be >= 1")
    rng = np.random.default_rng(seed)
    z = (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / math.sqrt(2.0)
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    return q * (d / np.abs(d))


def maximally_mixed(n: int) -> np.ndarray:
    return np.eye(2**n, dtype=complex) / 2**n


def is_valid_state(rho: np.ndarray, trace_tol: float = 1e-10, herm_tol: float = 1e-12,
                   eig_tol: float = 1e-9) -> bool:
    if np.max(np.abs(rho - rho.conj().T)) > herm_tol:
        return False
    if abs(np.trace(rho).real - 1.0) > trace_tol:
        return False
    return bool(np.linalg.eigvalsh(rho).min() >= -eig_tol)
