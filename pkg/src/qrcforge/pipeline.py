"""Reservoir-computing loop: feature collection, ridge readout, scoring.

The quantum reservoir is simulated in a form that exploits the injection
structure.  Right after an injection the state is ``|psi><psi| ⊗ R`` where
``R`` lives on the n - m non-injected qubits, so ``R`` is the whole memory.
Between injections ``R`` follows a Kraus map built from the blocks of
exp(-i H tau); the Pauli readout at sub-step v is Tr[(|psi><psi| ⊗ R) O_v]
with O_v = U_v^dag sigma U_v precomputed once per Hamiltonian, so all
readouts of a run come out of a single matrix product.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np
import scipy.linalg

from .qcore import (
    KET_0, KET_1, KET_MINUS, KET_PLUS, DimensionError, EncodingConfig,
    NumericalError, ReservoirParams, _eta_states, build_hamiltonian, diagonalize,
    propagator_from_spectrum, qubit_mask,
)

OPEN_LOOP = "open"
CLOSED_LOOP = "closed"


@dataclass(frozen=True)
class EpisodeSplit:
    G0: int
    G1: int
    K: int

    def __post_init__(self):
        if not (0 <= self.G0 < self.G1 <= self.K):
            raise ValueError(f"need 0 <= G0 < G1 <= K, got {self.G0}, {self.G1}, {self.K}")


@dataclass(frozen=True)
class PipelineConfig:
    tau: float = 1.0
    V: int = 10
    ridge_lambda: float = 1e-8
    encoding: EncodingConfig = field(default_factory=EncodingConfig)

    def __post_init__(self):
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        if self.V < 1:
            raise ValueError("V must be >= 1")
        if self.ridge_lambda < 0:
            raise ValueError("ridge_lambda must be >= 0")


@dataclass
class TaskDataset:
    """Inputs s_k (K x d_in, entries in [0, 1]) and targets y*_k (K x d_out).

    ``mask`` marks rows whose targets are defined; masked-out rows are
    skipped when fitting and scoring.  ``norm`` carries the affine maps
    used to produce the normalized columns, when there are any.
    """

    inputs: np.ndarray
    targets: np.ndarray
    split: EpisodeSplit
    mode: str = CLOSED_LOOP
    name: str = ""
    mask: np.ndarray | None = None
    norm: object | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.inputs = np.atleast_2d(np.asarray(self.inputs, dtype=float))
        self.targets = np.atleast_2d(np.asarray(self.targets, dtype=float))
        if self.inputs.shape[0] != self.targets.shape[0]:
            raise ValueError("inputs and targets must have the same number of rows")
        if self.inputs.shape[0] != self.split.K:
            raise ValueError(f"dataset has {self.inputs.shape[0]} rows but split.K={self.split.K}")
        if self.mode not in (OPEN_LOOP, CLOSED_LOOP):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode == CLOSED_LOOP and self.d_in != self.d_out:
            raise ValueError("closed-loop datasets need d_in == d_out")
        if self.mask is not None:
            self.mask = np.asarray(self.mask, dtype=bool)

    @property
    def K(self) -> int:
        return self.split.K

    @property
    def d_in(self) -> int:
        return self.inputs.shape[1]

    @property
    def d_out(self) -> int:
        return self.targets.shape[1]

    def rows(self, start: int, stop: int) -> np.ndarray:
        if self.mask is None:
            return np.ones(stop - start, dtype=bool)
        return self.mask[start:stop]


@dataclass
class LinearReadout:
    W: np.ndarray
    B: np.ndarray

    def predict(self, features: np.ndarray) -> np.ndarray:
        return features @ self.W.T + self.B


def fit_readout(features: np.ndarray, targets: np.ndarray, lam: float) -> LinearReadout:
    """Ridge regression y = W a + B, penalizing W only.

    Solved through the normal equations of the centred problem, which has
    the same minimizer as the bias-augmented system with an unpenalized bias.
    """
    X = np.asarray(features, dtype=float)
    Y = np.asarray(targets, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    if X.shape[0] != Y.shape[0]:
        raise DimensionError(f"{X.shape[0]} feature rows vs {Y.shape[0]} target rows")
    if X.shape[0] == 0:
        raise ValueError("cannot fit a readout on zero rows")
    xm = X.mean(axis=0)
    ym = Y.mean(axis=0)
    Xc = X - xm
    gram = Xc.T @ Xc
    gram[np.diag_indices_from(gram)] += lam
    rhs = Xc.T @ (Y - ym)
    try:
        Wt = scipy.linalg.cho_solve(scipy.linalg.cho_factor(gram), rhs)
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError):
        if lam == 0:
            raise NumericalError(
                "normal matrix is singular at ridge_lambda=0; use a positive ridge_lambda"
            ) from None
        # rounding made the regularized matrix indefinite; fall back to a clipped eigensolve
        evals, evecs = np.linalg.eigh(gram)
        evals = np.maximum(evals, lam)
        Wt = evecs @ ((evecs.T @ rhs) / evals[:, None])
    if not np.all(np.isfinite(Wt)):
        raise NumericalError("readout weights are not finite; increase ridge_lambda")
    return LinearReadout(W=Wt.T, B=ym - xm @ Wt)


def nmse(pred: np.ndarray, target: np.ndarray) -> float:
    """sum_k |y_k - y*_k|^2 / sum_k |y*_k|^2."""
    pred = np.asarray(pred, dtype=float)
    target = np.asarray(target, dtype=float)
    if pred.shape != target.shape:
        raise DimensionError(f"prediction {pred.shape} and target {target.shape} differ")
    denom = float(np.sum(target**2))
    if denom == 0.0:
        raise ValueError("NMSE is undefined for an all-zero target")
    return float(np.sum((pred - target) ** 2)) / denom


class Reservoir(Protocol):
    """What the readout/scoring loop needs from a reservoir model."""

    feature_dim: int

    def collect(self, inputs: np.ndarray, state=None, record_from: int = 0): ...

    def step(self, state, s: np.ndarray): ...


def _qubit_states(amp: np.ndarray, phase: np.ndarray, basis: str) -> np.ndarray:
    lo, hi = (KET_PLUS, KET_MINUS) if basis == "X" else (KET_0, KET_1)
    a = np.sqrt(1.0 - amp)[..., None] * lo
    b = (np.exp(-1j * phase) * np.sqrt(amp))[..., None] * hi
    return a + b


def encode_batch(S: np.ndarray, enc: EncodingConfig, m: int) -> np.ndarray:
    """Row-wise ``encode_pure_state`` for a (K, d_in) array -> (K, 2^m)."""
    S = np.atleast_2d(S)
    K, d_in = S.shape
    if d_in > enc.capacity(m):
        raise DimensionError(f"d_in={d_in} does not fit on {m} injected qubits")
    if np.any(S < 0.0) or np.any(S > 1.0) or not np.all(np.isfinite(S)):
        raise ValueError("input amplitudes must lie in [0, 1]")
    if enc.basis == "eta":
        plus, minus = _eta_states(enc.eta)
        vals = np.zeros((K, m))
        vals[:, :d_in] = S
        qubits = np.sqrt(vals)[..., None] * plus + np.sqrt(1.0 - vals)[..., None] * minus
    else:
        padded = np.zeros((K, 2 * m))
        padded[:, :d_in] = S
        qubits = _qubit_states(padded[:, 0::2], padded[:, 1::2], enc.basis)
    psi = qubits[:, 0, :]
    for j in range(1, m):
        psi = (psi[:, :, None] * qubits[:, j, None, :]).reshape(K, -1)
    return psi


class QuantumReservoir:
    """Fast exact simulator of the injected, Pauli-read Ising reservoir.

    States passed around by ``collect``/``step`` are the reduced density
    matrices R on the non-injected qubits just before an injection.
    """

    CHUNK_ELEMENTS = 1 << 22

    def __init__(self, params: ReservoirParams, cfg: PipelineConfig, max_qubits: int = 12):
        self.params = params
        self.cfg = cfg
        self.n = params.n
        self.dim = 2**self.n
        self.feature_dim = 3 * self.n * cfg.V
        energies, vectors = diagonalize(build_hamiltonian(params, max_qubits))
        self._spectrum = (energies, vectors)
        self._U_tau = propagator_from_spectrum(energies, vectors, cfg.tau)
        self._coef = self._observable_matrix()
        self._upper = np.triu(np.ones((self.dim, self.dim), dtype=bool))
        self._blocks: dict[int, np.ndarray] = {}

    def _observable_matrix(self) -> np.ndarray:
        """Real (d*d, 3nV) matrix C with features = M(rho) @ C.

        M(rho) keeps Re(rho) on and above the diagonal and Im(rho) below it,
        so Tr(rho O) = sum(M(rho) * M'(O)) with off-diagonal weight 2.
        """
        n, d, V = self.n, self.dim, self.cfg.V
        energies, vectors = self._spectrum
        idx = np.arange(d)
        flips = [idx ^ qubit_mask(j, n) for j in range(n)]
        signs = [1 - 2 * ((idx >> (n - 1 - j)) & 1) for j in range(n)]
        upper = np.triu(np.ones((d, d), dtype=bool))
        weight = np.where(np.eye(d, dtype=bool), 1.0, 2.0)
        C = np.empty((d * d, 3 * n * V))
        col = 0
        for v in range(1, V + 1):
            U = propagator_from_spectrum(energies, vectors, self.cfg.tau * v / V)
            stack = np.empty((3 * n, d, d), dtype=complex)
            for j in range(n):
                stack[3 * j] = U[flips[j]]
                stack[3 * j + 1] = (-1j * signs[j])[:, None] * U[flips[j]]
                stack[3 * j + 2] = signs[j][:, None] * U
            heis = U.conj().T @ stack
            for op in heis:
                C[:, col] = (weight * np.where(upper, op.real, op.imag)).ravel()
                col += 1
        return C

    def injected_qubits(self, d_in: int) -> int:
        m = self.cfg.encoding.qubits_for(d_in)
        if m > self.n:
            raise DimensionError(f"d_in={d_in} needs {m} injected qubits but the reservoir has {self.n}")
        return m

    def _kraus_blocks(self, m: int) -> np.ndarray:
        """exp(-i H tau) rearranged as (2^m, r * 2^m * r) for the psi contraction."""
        if m not in self._blocks:
            r = self.dim >> m
            blocks = self._U_tau.reshape(2**m, r, 2**m, r)
            self._blocks[m] = np.ascontiguousarray(blocks.transpose(2, 1, 0, 3).reshape(2**m, -1))
        return self._blocks[m]

    def initial_state(self, d_in: int) -> np.ndarray:
        r = self.dim >> self.injected_qubits(d_in)
        return np.eye(r, dtype=complex) / r

    def state_from_density(self, rho: np.ndarray, d_in: int) -> np.ndarray:
        """Reservoir memory for an arbitrary full density matrix."""
        m = self.injected_qubits(d_in)
        r = self.dim >> m
        return np.einsum("iaib->ab", rho.reshape(2**m, r, 2**m, r))

    def _features(self, psi: np.ndarray, R: np.ndarray) -> np.ndarray:
        """Readout rows for stacks psi (c, 2^m) and R (c, r, r)."""
        c = psi.shape[0]
        proj = psi[:, :, None] * psi[:, None, :].conj()
        rho = (proj[:, :, None, :, None] * R[:, None, :, None, :]).reshape(c, self.dim, self.dim)
        packed = np.where(self._upper, rho.real, rho.imag).reshape(c, -1)
        return packed @ self._coef

    @staticmethod
    def _advance(R: np.ndarray, row: np.ndarray, row_h: np.ndarray) -> np.ndarray:
        # row = [K_0 K_1 ...] (r x 2^m r); sum_i K_i R K_i^dag = row (I ⊗ R) row^dag
        r = R.shape[0]
        return (row.reshape(-1, r) @ R).reshape(r, -1) @ row_h

    def _kraus_rows(self, blocks: np.ndarray, psi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        r = self.dim // psi.shape[1]
        row = (psi @ blocks).reshape(psi.shape[0], r, -1)
        return row, np.ascontiguousarray(row.conj().transpose(0, 2, 1))

    def collect(self, inputs: np.ndarray, state: np.ndarray | None = None, record_from: int = 0):
        """Run the reservoir over ``inputs`` and return (features, final state).

        Rows k < record_from are simulated but not read out.
        """
        S = np.clip(np.atleast_2d(np.asarray(inputs, dtype=float)), 0.0, 1.0)
        K, d_in = S.shape
        m = self.injected_qubits(d_in)
        r = self.dim >> m
        R = self.initial_state(d_in) if state is None else np.array(state, dtype=complex)
        if R.shape != (r, r):
            raise DimensionError(f"state of shape {R.shape} does not match {r}x{r}")
        blocks = self._kraus_blocks(m)
        psi_all = encode_batch(S, self.cfg.encoding, m)
        n_rec = max(K - record_from, 0)
        feats = np.empty((n_rec, self.feature_dim))
        chunk = max(1, min(512, self.CHUNK_ELEMENTS // (self.dim * self.dim)))
        rec_R = np.empty((chunk, r, r), dtype=complex)
        for start in range(0, K, chunk):
            stop = min(start + chunk, K)
            psi = psi_all[start:stop]
            rows, rows_h = self._kraus_rows(blocks, psi)
            for t in range(stop - start):
                rec_R[t] = R
                R = self._advance(R, rows[t], rows_h[t])
            R = 0.5 * (R + R.conj().T)
            lo = max(start, record_from)
            if lo < stop:
                sel = slice(lo - start, stop - start)
                feats[lo - record_from: stop - record_from] = self._features(psi[sel], rec_R[sel])
        return feats, R

    def step(self, state: np.ndarray, s: np.ndarray):
        s = np.clip(np.atleast_1d(np.asarray(s, dtype=float)), 0.0, 1.0)
        m = self.injected_qubits(s.size)
        psi = encode_batch(s[None, :], self.cfg.encoding, m)
        feat = self._features(psi, np.asarray(state)[None])[0]
        rows, rows_h = self._kraus_rows(self._kraus_blocks(m), psi)
        return feat, self._advance(np.asarray(state), rows[0], rows_h[0])


@dataclass
class TaskResult:
    readout: LinearReadout
    test_nmse: float
    per_step_error: np.ndarray
    predictions: np.ndarray
    targets: np.ndarray
    train_nmse: float
    clamp_events: int = 0


def closed_loop(reservoir: Reservoir, readout: LinearReadout, state, first_input: np.ndarray,
                steps: int, clamp: tuple[float, float] = (0.0, 1.0)):
    """Autonomous prediction: each output becomes the next input."""
    preds = np.empty((steps, readout.W.shape[0]))
    s = np.asarray(first_input, dtype=float)
    clamp_events = 0
    for t in range(steps):
        feat, state = reservoir.step(state, s)
        preds[t] = readout.predict(feat)
        if not np.all(np.isfinite(preds[t])):
            preds[t:] = np.nan
            break
        s = np.clip(preds[t], *clamp)
        clamp_events += int(np.count_nonzero(s != preds[t]))
    return preds, state, clamp_events


def evaluate_reservoir(reservoir: Reservoir, dataset: TaskDataset, ridge_lambda: float,
                       clamp: tuple[float, float] = (0.0, 1.0)) -> TaskResult:
    """Washout on [0, G0), fit on [G0, G1), score on [G1, K)."""
    G0, G1, K = dataset.split.G0, dataset.split.G1, dataset.split.K
    if K == G1:
        raise ValueError(f"task {dataset.name!r} has an empty test segment (G1 == K)")
    feats, state = reservoir.collect(dataset.inputs[:G1], record_from=G0)
    fit_rows = dataset.rows(G0, G1)
    readout = fit_readout(feats[fit_rows], dataset.targets[G0:G1][fit_rows], ridge_lambda)
    train_nmse = nmse(readout.predict(feats[fit_rows]), dataset.targets[G0:G1][fit_rows])

    clamp_events = 0
    if dataset.mode == OPEN_LOOP:
        test_feats, _ = reservoir.collect(dataset.inputs[G1:K], state=state)
        preds = readout.predict(test_feats)
    else:
        preds, _, clamp_events = closed_loop(
            reservoir, readout, state, dataset.inputs[G1], K - G1, clamp
        )
    targets = dataset.targets[G1:K]
    per_step = np.linalg.norm(preds - targets, axis=1)
    score_rows = dataset.rows(G1, K)
    if not np.all(np.isfinite(preds[score_rows])):
        test = math.inf
    else:
        test = nmse(preds[score_rows], targets[score_rows])
    return TaskResult(readout, test, per_step, preds, targets, train_nmse, clamp_events)


def run_reservoir(params: ReservoirParams, dataset: TaskDataset, cfg: PipelineConfig) -> np.ndarray:
    """Readout records A_k for every step k (K x 3nV), starting from I/2^n."""
    feats, _ = QuantumReservoir(params, cfg).collect(dataset.inputs)
    return feats


def evaluate_task(params: ReservoirParams, dataset: TaskDataset, cfg: PipelineConfig) -> TaskResult:
    return evaluate_reservoir(QuantumReservoir(params, cfg), dataset, cfg.ridge_lambda)


def multi_task_loss(params: ReservoirParams, tasks: list[TaskDataset], cfg: PipelineConfig) -> float:
    """Sum of per-task test NMSE; one shared Hamiltonian, one readout per task."""
    if not tasks:
        raise ValueError("need at least one task")
    reservoir = QuantumReservoir(params, cfg)
    return float(sum(evaluate_reservoir(reservoir, t, cfg.ridge_lambda).test_nmse for t in tasks))
