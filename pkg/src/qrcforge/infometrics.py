"""Quantum-information diagnostics: l1 coherence, entanglement entropies and
the tripartite mutual information of a propagator."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .qcore import DimensionError, num_qubits

EIG_CUTOFF = 1e-12
DEGENERACY_GAP = 1e-10


def _log(base: str):
    if base == "bits":
        return np.log2
    if base == "nats":
        return np.log
    raise ValueError(f"unknown entropy base {base!r}")


def coherence_l1(rho: np.ndarray) -> float:
    """Sum of |rho_ij| over off-diagonal entries."""
    rho = np.asarray(rho)
    return float(np.abs(rho).sum() - np.abs(np.diagonal(rho)).sum())


def entropy_from_probs(p: np.ndarray, base: str = "bits") -> float:
    p = np.asarray(p, dtype=float)
    p = p[p > EIG_CUTOFF]
    return float(max(0.0, -np.sum(p * _log(base)(p))))


def von_neumann_entropy(rho: np.ndarray, base: str = "bits") -> float:
    return entropy_from_probs(np.linalg.eigvalsh(rho), base)


@dataclass(frozen=True)
class Bipartition:
    region_a: tuple[int, ...]
    n: int

    def __post_init__(self):
        a = tuple(sorted(set(int(q) for q in self.region_a)))
        if not a or len(a) >= self.n or a[0] < 0 or a[-1] >= self.n:
            raise DimensionError(f"region {self.region_a} is not a proper nonempty subset of {self.n} qubits")
        object.__setattr__(self, "region_a", a)

    @property
    def region_b(self) -> tuple[int, ...]:
        return tuple(q for q in range(self.n) if q not in self.region_a)


@dataclass(frozen=True)
class ChannelPartition:
    """A on the input side, C and D splitting the output side."""

    input_region_a: tuple[int, ...]
    output_region_c: tuple[int, ...]
    output_region_d: tuple[int, ...]
    n: int

    def __post_init__(self):
        a, c, d = (tuple(sorted(int(q) for q in r)) for r in
                   (self.input_region_a, self.output_region_c, self.output_region_d))
        everything = set(range(self.n))
        if not a or not set(a) <= everything:
            raise DimensionError(f"input region {a} invalid for {self.n} qubits")
        if set(c) & set(d) or set(c) | set(d) != everything or len(c) + len(d) != self.n:
            raise DimensionError(f"C={c} and D={d} must partition {self.n} output qubits")
        object.__setattr__(self, "input_region_a", a)
        object.__setattr__(self, "output_region_c", c)
        object.__setattr__(self, "output_region_d", d)

    @classmethod
    def leading(cls, k: int, n: int) -> "ChannelPartition":
        """A = C = the first k qubits, D = the rest."""
        lead = tuple(range(k))
        return cls(lead, lead, tuple(range(k, n)), n)


def pure_state_entropy(psi: np.ndarray, region, n_sites: int, base: str = "bits") -> float:
    """Entropy of the reduced state of ``region`` for a pure state on ``n_sites`` qubits."""
    region = list(region)
    if not region or len(region) == n_sites:
        return 0.0
    rest = [q for q in range(n_sites) if q not in region]
    t = np.asarray(psi).reshape((2,) * n_sites).transpose(region + rest)
    sv = np.linalg.svd(t.reshape(2 ** len(region), -1), compute_uv=False)
    return entropy_from_probs(sv**2, base)


@dataclass
class EntanglementReport:
    mean: float
    per_state: np.ndarray
    degenerate: bool
    min_gap: float


def eigenstate_entanglement(H: np.ndarray, part: Bipartition, base: str = "bits",
                            report: bool = False):
    """Mean entanglement entropy of region A over all eigenvectors of H.

    Degenerate spectra make the value basis dependent; the solver's basis is
    used and ``report=True`` exposes the degeneracy flag.
    """
    H = np.asarray(H)
    n = num_qubits(H.shape[0])
    if n != part.n:
        raise DimensionError(f"partition is for {part.n} qubits, H acts on {n}")
    E, Q = np.linalg.eigh(H)
    ents = np.array([pure_state_entropy(Q[:, i], part.region_a, n, base) for i in range(Q.shape[1])])
    gap = float(np.min(np.diff(E))) if E.size > 1 else np.inf
    out = EntanglementReport(float(ents.mean()), ents, gap < DEGENERACY_GAP, gap)
    return out if report else out.mean


def choi_state(U: np.ndarray) -> np.ndarray:
    """Pure state (I (x) U)|Phi> as a vector over 2n qubits: reference first, output second."""
    U = np.asarray(U)
    d = U.shape[0]
    return (U.T / np.sqrt(d)).reshape(-1)


def tripartite_mutual_info(U: np.ndarray, part: ChannelPartition, base: str = "bits") -> float:
    """I(A;C) + I(A;D) - I(A;CD) on the Choi state of U."""
    U = np.asarray(U)
    n = num_qubits(U.shape[0])
    if n != part.n:
        raise DimensionError(f"partition is for {part.n} qubits, U acts on {n}")
    psi = choi_state(U)
    a = list(part.input_region_a)
    c = [n + q for q in part.output_region_c]
    dd = [n + q for q in part.output_region_d]

    def S(region):
        return pure_state_entropy(psi, sorted(region), 2 * n, base)

    def mutual(x, y):
        return S(x) + S(y) - S(x + y)

    return mutual(a, c) + mutual(a, dd) - mutual(a, c + dd)
