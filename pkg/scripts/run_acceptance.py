"""Run every experiment whose outputs the acceptance suite reads.

Steps run one after another and are skipped when their manifest already
exists, so the script can be restarted after an interruption.  Outputs go
to results/acceptance/<step>/.

    python scripts/run_acceptance.py            # everything
    python scripts/run_acceptance.py coherence  # steps whose name contains 'coherence'
"""

import json
import subprocess
import sys
import time
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]
RESULTS = ROOT / "results" / "acceptance"
CONFIGS = ROOT / "configs"

# seed replicates of the quantum-vs-classical comparison; each QRC/ESN pair
# shares one GA configuration
GAP_SEEDS = (0, 1, 2)
GAP_GA = {"population": 50, "generations": 20}
FX_SEEDS = (0, 1, 2)


def load(name):
    return json.loads((CONFIGS / name).read_text(encoding="utf-8"))


def steps():
    yield "qrc_seed0", "train-qrc", load("train_qrc_full.json"), []
    esn = load("train_esn_full.json")
    esn["options"] = {"reference_manifest": str(RESULTS / "qrc_seed0" / "manifest.json")}
    yield "esn_seed0", "train-esn", esn, []
    for s in GAP_SEEDS:
        q = load("train_qrc_full.json")
        q["ga"] = dict(GAP_GA)
        yield f"gap_qrc_seed{s}", "train-qrc", q, ["--seed", str(s)]
        e = load("train_esn_full.json")
        e["ga"] = dict(GAP_GA)
        e["options"] = {"reference_manifest": str(RESULTS / f"gap_qrc_seed{s}" / "manifest.json")}
        yield f"gap_esn_seed{s}", "train-esn", e, ["--seed", str(s)]
    yield "coherence", "coherence-sweep", load("coherence_sweep.json"), []
    for s in FX_SEEDS:
        yield f"fx_seed{s}", "fx-forecast", load("fx_synthetic.json"), ["--seed", str(s)]
    info = load("info_metrics_seed0.json")
    info["options"]["populations"] = str(RESULTS / "qrc_seed0" / "populations.csv")
    yield "info_metrics_seed0", "info-metrics", info, []


def run_step(name, kind, doc, extra):
    out = RESULTS / name
    if (out / "manifest.json").exists():
        print(f"skip {name}: done")
        return
    out.mkdir(parents=True, exist_ok=True)
    cfg = out / "config.json"
    cfg.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    cmd = [sys.executable, "-m", "qrcforge.cli", kind, "--config", str(cfg), "--out", str(out), "-v", *extra]
    ckpt = out / "checkpoint.json"
    if ckpt.exists():
        cmd += ["--resume", str(ckpt)]
    print(f"run {name}: {' '.join(cmd[2:])}", flush=True)
    t0 = time.time()
    with (out / "run.log").open("a", encoding="utf-8") as log:
        code = subprocess.call(cmd, stdout=log, stderr=subprocess.STDOUT, cwd=ROOT)
    print(f"  exit {code} after {time.time() - t0:.0f} s", flush=True)
    if code != 0:
        raise SystemExit(code)


def main(argv):
    pattern = argv[1] if len(argv) > 1 else ""
    for name, kind, doc, extra in steps():
        if pattern in name:
            run_step(name, kind, doc, extra)


if __name__ == "__main__":
    main(sys.argv)
