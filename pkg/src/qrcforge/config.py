"""Experiment configuration: JSON (or TOML) documents mapped onto dataclasses
with every default materialized, so a manifest fully describes a run."""

from __future__ import annotations

import json
import math
import zlib
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .ga import GaConfig, load_seed_genomes
from .pipeline import PipelineConfig
from .qcore import EncodingConfig

KINDS = ("gen-task", "train-qrc", "train-esn", "evaluate", "coherence-sweep", "info-metrics",
         "fx-forecast")


class ConfigError(ValueError):
    """Invalid or incomplete experiment configuration (exit code 2)."""


@dataclass(frozen=True)
class ModelConfig:
    n: int = 6
    n_nodes: int = 6
    tau: float = 1.0
    V: int = 10
    ridge_lambda: float = 1e-8
    basis: str = "X"
    eta: float = math.pi / 2
    esn_radius: float = 0.8

    def pipeline(self) -> PipelineConfig:
        return PipelineConfig(tau=self.tau, V=self.V, ridge_lambda=self.ridge_lambda,
                              encoding=EncodingConfig(basis=self.basis, eta=self.eta))


@dataclass
class ExperimentConfig:
    kind: str
    seed: int
    model: ModelConfig = field(default_factory=ModelConfig)
    tasks: list = field(default_factory=list)
    eval_tasks: list = field(default_factory=list)
    ga: dict = field(default_factory=dict)
    genome: str | None = None
    resume: str | None = None
    options: dict = field(default_factory=dict)

    def ga_config(self, **override) -> GaConfig:
        d = dict(self.ga)
        d.setdefault("seed", self.seed)
        d.update(override)
        return GaConfig.from_dict(d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["ga"] = self.ga_config().to_dict() if self.kind in ("train-qrc", "train-esn", "fx-forecast") \
            else dict(self.ga)
        return d


def _read_document(path: Path) -> dict:
    text = path.read_text(encoding="utf-8")
    if path.suffix.lower() == ".toml":
        try:
            import tomllib
        except ModuleNotFoundError:
            import tomli as tomllib
        return tomllib.loads(text)
    return json.loads(text)


def _resolve_path(value, base: Path):
    if value is None:
        return None
    p = Path(value)
    return str(p if p.is_absolute() else (base / p).resolve())


PATH_KEYS = ("path", "train_paths", "test_path", "seed_genome_file", "genome_files", "populations",
             "reference_manifest")


def _resolve_paths_in(obj, base: Path):
    if isinstance(obj, dict):
        out = {}
        for k, v in obj.items():
            if k in PATH_KEYS:
                out[k] = [_resolve_path(x, base) for x in v] if isinstance(v, list) else _resolve_path(v, base)
            else:
                out[k] = _resolve_paths_in(v, base)
        return out
    if isinstance(obj, list):
        return [_resolve_paths_in(v, base) for v in obj]
    return obj


def parse_config(doc: dict, base: Path = Path("."), seed: int | None = None,
                 kind: str | None = None) -> ExperimentConfig:
    """Build an ExperimentConfig from a config document or a run manifest."""
    if "config" in doc and "tool_version" in doc:
        doc = doc["config"]
    doc = dict(doc)
    if kind is not None:
        if doc.get("kind") not in (None, kind):
            raise ConfigError(f"config is for {doc.get('kind')!r}, not {kind!r}")
        doc["kind"] = kind
    if doc.get("kind") not in KINDS:
        raise ConfigError(f"unknown experiment kind {doc.get('kind')!r}")
    if seed is not None:
        doc["seed"] = seed
        # the GA stream follows the master seed unless the config pins it
        if "ga" in doc and "seed" in doc["ga"]:
            doc["ga"] = {k: v for k, v in doc["ga"].items() if k != "seed"}
    if "seed" not in doc or doc["seed"] is None:
        raise ConfigError("a master seed is mandatory")
    if not isinstance(doc["seed"], int) or doc["seed"] < 0:
        raise ConfigError("seed must be a nonnegative integer")
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    try:
        model = ModelConfig(**doc.get("model", {}))
        model.pipeline()
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"model section: {exc}") from None
    cfg = ExperimentConfig(
        kind=doc["kind"], seed=int(doc["seed"]), model=model,
        tasks=_resolve_paths_in(list(doc.get("tasks", [])), base),
        eval_tasks=_resolve_paths_in(list(doc.get("eval_tasks", [])), base),
        ga=_resolve_paths_in(dict(doc.get("ga", {})), base),
        genome=_resolve_path(doc.get("genome"), base),
        resume=_resolve_path(doc.get("resume"), base),
        options=_resolve_paths_in(dict(doc.get("options", {})), base),
    )
    seed_file = cfg.options.get("seed_genome_file")
    if seed_file is not None and not cfg.ga.get("seed_genomes"):
        if not Path(seed_file).exists():
            raise ConfigError(f"seed genome file not found: {seed_file}")
        try:
            cfg.ga["seed_genomes"] = load_seed_genomes(seed_file)
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"cannot read seed genomes from {seed_file}: {exc}") from None
    if cfg.kind in ("train-qrc", "train-esn", "fx-forecast"):
        try:
            cfg.ga_config()
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"ga section: {exc}") from None
    for p in [cfg.genome, cfg.resume]:
        if p is not None and not Path(p).exists():
            raise ConfigError(f"referenced file does not exist: {p}")
    return cfg


def load_config(path, seed: int | None = None, kind: str | None = None) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        doc = _read_document(path)
    except (ValueError, UnicodeDecodeError) as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    return parse_config(doc, path.parent.resolve(), seed, kind)


def derive_seed(master: int, label: str) -> int:
    """Stable 63-bit seed for a named sub-stream of the master seed."""
    ss = np.random.SeedSequence([master, zlib.crc32(label.encode())])
    return int(ss.generate_state(2, np.uint64)[0] >> np.uint64(1))
