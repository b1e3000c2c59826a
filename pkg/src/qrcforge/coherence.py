"""Controlled-coherence reservoirs: a fixed random permutation or Haar unitary
applied between single-qubit eta-encoded injections, scored on binary
memory tasks."""

from __future__ import annotations

import math

import numpy as np

from .infometrics import coherence_l1
from .pipeline import EpisodeSplit, fit_readout
from .qcore import PauliGather, _eta_states, haar_random_unitary, random_permutation_indices
from .tasks import binary_inputs, binary_targets


class CircuitReservoir:
    """Inject s_k on qubit 0, apply the circuit once, read every Pauli.

    The state is the full density matrix after the circuit; only the
    reduced state of qubits 1..n-1 carries over to the next injection.
    """

    def __init__(self, n: int, eta: float, perm: np.ndarray | None = None, U: np.ndarray | None = None):
        if (perm is None) == (U is None):
            raise ValueError("give exactly one of perm or U")
        self.n = n
        self.dim = 2**n
        self.half = self.dim // 2
        self.eta = eta
        self.perm = perm
        self.inv = None if perm is None else np.argsort(perm)
        self.U = U
        self.gather = PauliGather(n)

    def injected_state(self, s: float) -> np.ndarray:
        plus, minus = _eta_states(self.eta)
        return math.sqrt(s) * plus + math.sqrt(1.0 - s) * minus

    def apply(self, psi: np.ndarray, R: np.ndarray) -> np.ndarray:
        """Circuit applied to |psi><psi| ⊗ R."""
        if self.U is not None:
            P = psi[0] * self.U[:, : self.half] + psi[1] * self.U[:, self.half:]
            return (P @ R) @ P.conj().T
        rho = np.kron(np.outer(psi, psi.conj()), R)
        # U|x> = |perm[x]>  =>  rho'[perm[x], perm[y]] = rho[x, y]
        return rho[np.ix_(self.inv, self.inv)]

    def reduce(self, rho: np.ndarray) -> np.ndarray:
        h = self.half
        return rho[:h, :h] + rho[h:, h:]

    def run(self, inputs: np.ndarray, record_from: int = 0):
        """Features (Pauli X, Y, Z of every qubit) and l1 coherence per step."""
        inputs = np.asarray(inputs, dtype=float)
        K = inputs.size
        R = np.eye(self.half, dtype=complex) / self.half
        feats = np.empty((K, 3 * self.n))
        qc = np.empty(K)
        for k in range(K):
            rho = self.apply(self.injected_state(inputs[k]), R)
            feats[k] = self.gather(rho).ravel()
            qc[k] = coherence_l1(rho)
            R = self.reduce(rho)
        return feats[record_from:], qc[record_from:]


def binary_accuracy(feats: np.ndarray, s: np.ndarray, kind: str, tau_b: int, split: EpisodeSplit,
                    ridge_lambda: float) -> float:
    """Fit on [G0, G1), threshold predictions at 0.5 on [G1, K)."""
    y, valid = binary_targets(s, kind, tau_b)
    G0, G1, K = split.G0, split.G1, split.K
    fit = valid[G0:G1]
    ro = fit_readout(feats[G0:G1][fit], y[G0:G1][fit, None], ridge_lambda)
    test = valid[G1:K]
    pred = ro.predict(feats[G1:K][test])[:, 0] >= 0.5
    return float(np.mean(pred == (y[G1:K][test] >= 0.5)))


def sweep_unit(model: str, replicate: int, n: int, num_swaps: int, unitary_seed: int, input_seed: int,
               etas, tau_bs, split, ridge_lambda: float) -> list[list]:
    """All (eta, tau_b) rows for one model and one replicate."""
    split = EpisodeSplit(*split)
    s = binary_inputs(split.K, input_seed)
    if model == "permutation":
        kw = {"perm": random_permutation_indices(n, num_swaps, unitary_seed)}
    else:
        kw = {"U": haar_random_unitary(2**n, unitary_seed)}
    rows = []
    for eta in etas:
        feats, qc = CircuitReservoir(n, eta, **kw).run(s)
        mean_qc = float(np.mean(qc[split.G0:]))
        for tb in tau_bs:
            stm = binary_accuracy(feats, s, "STM", tb, split, ridge_lambda)
            pc = binary_accuracy(feats, s, "PC", tb, split, ridge_lambda)
            rows.append([model, float(eta), int(tb), int(replicate), stm, pc, mean_qc])
    return rows


def summarize(rows, etas, tau_bs) -> dict:
    """Per-model, per-eta means plus the pooled-SE flatness statistic."""
    out = {}
    models = sorted({r[0] for r in rows})
    for model in models:
        mrows = [r for r in rows if r[0] == model]
        per_eta = {}
        for eta in etas:
            er = [r for r in mrows if r[1] == eta]
            per_eta[repr(eta)] = {
                "stm_accuracy": float(np.mean([r[4] for r in er])),
                "pc_accuracy": float(np.mean([r[5] for r in er])),
                "qc": float(np.mean([r[6] for r in er])),
                "count": len(er),
            }
        flat = {}
        for col, key in ((4, "stm"), (5, "pc")):
            means, cell_vars, counts = [], [], []
            for eta in etas:
                er = [r for r in mrows if r[1] == eta]
                means.append(np.mean([r[col] for r in er]))
                counts.append(len(er))
                for tb in tau_bs:
                    cell = [r[col] for r in er if r[2] == tb]
                    if len(cell) > 1:
                        cell_vars.append(np.var(cell, ddof=1))
            pooled_sd = float(np.sqrt(np.mean(cell_vars))) if cell_vars else 0.0
            n_per = min(counts) if counts else 0
            se_diff = pooled_sd * math.sqrt(2.0 / n_per) if n_per else math.inf
            spread = float(max(means) - min(means))
            flat[key] = {"spread": spread, "pooled_sd": pooled_sd, "se_diff": se_diff,
                         "within_2se": bool(spread <= 2.0 * se_diff)}
        out[model] = {"per_eta": per_eta, "flatness": flat}
    return out
