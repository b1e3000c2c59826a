"""Write a SeededHalf genome file of hand-built Ising reservoirs.

Four families: uniform all-to-all couplings at the mean-field critical
point, a nearest-neighbour chain, random couplings rescaled so their
spectral norm matches the mean field, and weakly coupled disordered fields.

    python scripts/make_seed_genomes.py 6 configs/seed_genomes_n6.json
"""

import json
import sys

import numpy as np

from qrcforge.qcore import ReservoirParams


def _sym(upper: np.ndarray) -> np.ndarray:
    upper = np.triu(upper, 1)
    return upper + upper.T


def seed_genomes(n: int, seed: int = 0) -> dict[str, np.ndarray]:
    rng = np.random.default_rng(seed)
    out = {}
    h = np.full(n, 0.5)
    # mean-field transition of the fully connected model sits at (n - 1) J = h
    J = np.full((n, n), 0.5 / (n - 1))
    out["uniform_critical"] = ReservoirParams(_sym(J), h).to_genome()

    J = np.zeros((n, n))
    J[np.arange(n - 1), np.arange(1, n)] = 0.5
    out["nearest_neighbour_chain"] = ReservoirParams(_sym(J), h).to_genome()

    h = rng.uniform(0.5, 1.0, n)
    A = _sym(rng.uniform(-1, 1, (n, n)))
    A *= np.mean(h) / np.linalg.norm(A, 2)
    out["random_normalized"] = ReservoirParams(A, h).to_genome()

    J = _sym(rng.uniform(-0.2, 0.2, (n, n)))
    out["disordered_fields"] = ReservoirParams(J, rng.uniform(-1, 1, n)).to_genome()
    return out


def main(argv):
    n = int(argv[1]) if len(argv) > 1 else 6
    path = argv[2] if len(argv) > 2 else f"configs/seed_genomes_n{n}.json"
    genomes = seed_genomes(n)
    doc = {"kind": "quantum", "n": n, "names": list(genomes),
           "genomes": [np.clip(g, -1, 1).tolist() for g in genomes.values()]}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")
    print(path)


if __name__ == "__main__":
    main(sys.argv)
