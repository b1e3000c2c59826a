"""Echo state network baseline: x_k = tanh(M x_{k-1} + D s_k)."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .pipeline import TaskDataset, evaluate_reservoir
from .qcore import DimensionError, NumericalError


@dataclass
class EsnParams:
    M: np.ndarray
    D: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        self.M = np.atleast_2d(np.asarray(self.M, dtype=float))
        self.D = np.atleast_2d(np.asarray(self.D, dtype=float))
        N = self.M.shape[0]
        if self.M.shape != (N, N):
            raise DimensionError(f"M must be square, got {self.M.shape}")
        if self.D.shape[0] != N:
            raise DimensionError(f"D has {self.D.shape[0]} rows for {N} nodes")
        if not (np.all(np.isfinite(self.M)) and np.all(np.isfinite(self.D))):
            raise ValueError("ESN matrices must be finite")
        if np.any(np.abs(self.D) > 1.0):
            raise ValueError("D entries must lie in [-1, 1]")

    @property
    def n_nodes(self) -> int:
        return self.M.shape[0]

    @property
    def d_in(self) -> int:
        return self.D.shape[1]

    @classmethod
    def from_genome(cls, values, D, seed=None) -> "EsnParams":
        v = np.asarray(values, dtype=float)
        N = int(round(np.sqrt(v.size)))
        if N * N != v.size:
            raise DimensionError(f"genome of length {v.size} is not a square matrix")
        return cls(v.reshape(N, N), D, seed)

    def to_dict(self) -> dict:
        return {"n_nodes": self.n_nodes, "M": self.M.ravel().tolist(), "D": self.D.ravel().tolist(),
                "d_in": self.d_in, "seed": self.seed}

    @classmethod
    def from_dict(cls, d: dict) -> "EsnParams":
        N = d["n_nodes"]
        return cls(np.reshape(d["M"], (N, N)), np.reshape(d["D"], (N, d["d_in"])), d.get("seed"))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "EsnParams":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def random_encoding(n_nodes: int, d_in: int, seed) -> np.ndarray:
    """Input matrix with entries uniform in [-1, 1]."""
    return np.random.default_rng(seed).uniform(-1.0, 1.0, size=(n_nodes, d_in))


def esn_step(x: np.ndarray, s: np.ndarray, p: EsnParams) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    s = np.atleast_1d(np.asarray(s, dtype=float))
    if x.shape != (p.n_nodes,) or s.shape != (p.d_in,):
        raise DimensionError(f"state {x.shape} / input {s.shape} do not match {p.n_nodes} nodes, d_in={p.d_in}")
    return np.tanh(p.M @ x + p.D @ s)


def spectral_radius(M: np.ndarray) -> float:
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionError("spectral radius needs a square matrix")
    try:
        ev = np.linalg.eigvals(M)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigensolver failed: {exc}") from None
    return float(np.max(np.abs(ev)))


def rescale_to_radius(M: np.ndarray, r: float) -> np.ndarray:
    rho = spectral_radius(M)
    if rho == 0.0:
        raise ValueError("cannot rescale a matrix with zero spectral radius")
    return np.asarray(M, dtype=float) * (r / rho)


class EsnReservoir:
    """ESN behind the same collect/step interface as the quantum reservoir."""

    def __init__(self, params: EsnParams):
        self.params = params
        self.feature_dim = params.n_nodes

    def collect(self, inputs: np.ndarray, state=None, record_from: int = 0):
        S = np.atleast_2d(np.asarray(inputs, dtype=float))
        p = self.params
        if S.shape[1] != p.d_in:
            raise DimensionError(f"inputs have {S.shape[1]} columns, D expects {p.d_in}")
        x = np.zeros(p.n_nodes) if state is None else np.asarray(state, dtype=float)
        drive = S @ p.D.T
        feats = np.empty((max(S.shape[0] - record_from, 0), p.n_nodes))
        for k in range(S.shape[0]):
            x = np.tanh(p.M @ x + drive[k])
            if k >= record_from:
                feats[k - record_from] = x
        return feats, x

    def step(self, state, s):
        x = esn_step(state, s, self.params)
        return x, x


def run_esn(p: EsnParams, dataset: TaskDataset) -> np.ndarray:
    """Feature rows x_1..x_K from a zero initial state."""
    return EsnReservoir(p).collect(dataset.inputs)[0]


def task_encodings(n_nodes: int, tasks: list[TaskDataset], seed: int) -> list[np.ndarray]:
    """One fixed D per task, from counter-derived streams of ``seed``."""
    return [random_encoding(n_nodes, t.d_in, np.random.SeedSequence(seed, spawn_key=(i,)))
            for i, t in enumerate(tasks)]


def esn_multi_task_loss(M: np.ndarray, encodings: list[np.ndarray], tasks: list[TaskDataset],
                        ridge_lambda: float) -> float:
    if not tasks:
        raise ValueError("need at least one task")
    total = 0.0
    for D, t in zip(encodings, tasks):
        total += evaluate_reservoir(EsnReservoir(EsnParams(M, D)), t, ridge_lambda).test_nmse
    return float(total)


def init_esn_population(pop: np.ndarray, radius: float) -> np.ndarray:
    """Rescale each random row-major M of a GA population to the given spectral radius."""
    out = np.empty_like(pop)
    N = int(round(np.sqrt(pop.shape[1])))
    for i, g in enumerate(pop):
        out[i] = rescale_to_radius(g.reshape(N, N), radius).ravel()
    return out
