"""Learning tasks: gene-network ODEs, fractional Chua circuit, binary memory
tasks and FX sliding windows, all delivered as ``TaskDataset``s."""

from __future__ import annotations

import csv
import datetime as dt
import json
import logging
import math
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import pywt

from .pipeline import CLOSED_LOOP, OPEN_LOOP, EpisodeSplit, TaskDataset

log = logging.getLogger(__name__)

DEFAULT_SPLIT = EpisodeSplit(1000, 6000, 6100)
BINARY_SPLIT = EpisodeSplit(1000, 4000, 5000)
FX_SPLIT = EpisodeSplit(200, 1000, 1100)

REPRESSILATOR_INIT = (0.2, 0.1, 0.3, 0.1, 0.4, 0.5)
MOTIF_INIT = (0.1, 0.2, 0.3, 0.4)
CHUA_INIT = (0.1, 0.0, 0.0, 0.0)


class BlowUpError(ArithmeticError):
    def __init__(self, step: int, what: str = "state"):
        super().__init__(f"{what} became non-finite at step {step}")
        self.step = step


# ---------------------------------------------------------------- normalization

@dataclass
class NormRecord:
    """Per-column affine map x -> (x - lo) / (hi - lo)."""

    lo: np.ndarray
    hi: np.ndarray
    constant: np.ndarray

    def apply(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=float) - self.lo) / self.scale

    def invert(self, z: np.ndarray) -> np.ndarray:
        return np.asarray(z, dtype=float) * self.scale + self.lo

    @property
    def scale(self) -> np.ndarray:
        return np.where(self.constant, 1.0, self.hi - self.lo)

    def to_dict(self) -> dict:
        return {"lo": self.lo.tolist(), "hi": self.hi.tolist(), "constant": self.constant.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "NormRecord":
        return cls(np.asarray(d["lo"], float), np.asarray(d["hi"], float),
                   np.asarray(d["constant"], bool))


def normalize(raw: np.ndarray, fit_rows: int | None = None) -> tuple[np.ndarray, NormRecord]:
    """Min-max scale each column using the first ``fit_rows`` rows.

    Rows after ``fit_rows`` get the same map and may leave [0, 1].  A
    constant column is passed through unchanged (identity map).
    """
    raw = np.asarray(raw, dtype=float)
    squeeze = raw.ndim == 1
    x = raw[:, None] if squeeze else raw
    if not np.all(np.isfinite(x)):
        raise ValueError("cannot normalize non-finite data")
    ref = x if fit_rows is None else x[:fit_rows]
    lo, hi = ref.min(axis=0), ref.max(axis=0)
    constant = hi == lo
    if np.any(constant):
        log.warning("constant column(s) %s left unscaled", np.flatnonzero(constant).tolist())
        lo = np.where(constant, 0.0, lo)
        hi = np.where(constant, 1.0, hi)
    rec = NormRecord(lo, hi, constant)
    out = rec.apply(x)
    return (out[:, 0] if squeeze else out), rec


def denormalize(z: np.ndarray, rec: NormRecord) -> np.ndarray:
    return rec.invert(z)


def next_step_dataset(states: np.ndarray, split: EpisodeSplit, name: str,
                      mode: str = CLOSED_LOOP, meta: dict | None = None) -> TaskDataset:
    """Inputs = state k, target = state k+1, normalized on the fitting portion."""
    if states.shape[0] < split.K + 1:
        raise ValueError(f"need {split.K + 1} states for K={split.K}, got {states.shape[0]}")
    scaled, rec = normalize(states[: split.K + 1], fit_rows=split.G1 + 1)
    return TaskDataset(scaled[:-1], scaled[1:], split, mode=mode, name=name, norm=rec,
                       meta=dict(meta or {}))


# ---------------------------------------------------------------- ODE tasks

def rk4_integrate(f: Callable[[np.ndarray], np.ndarray], x0: Sequence[float], dt: float,
                  steps: int) -> np.ndarray:
    """Classical RK4 for an autonomous system; returns steps + 1 states."""
    x = np.asarray(x0, dtype=float).copy()
    out = np.empty((steps + 1, x.size))
    out[0] = x
    for k in range(1, steps + 1):
        k1 = f(x)
        k2 = f(x + 0.5 * dt * k1)
        k3 = f(x + 0.5 * dt * k2)
        k4 = f(x + dt * k3)
        x = x + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(x)):
            raise BlowUpError(k)
        out[k] = x
    return out


@dataclass(frozen=True)
class RepressilatorParams:
    alpha: float = 400.0
    alpha0: float = 0.4
    hill_n: float = 2.0
    beta: float = 5.0
    dt: float = 0.05
    steps: int = 6100

    def __post_init__(self):
        if self.alpha < 0 or self.alpha0 < 0 or self.beta <= 0 or self.dt <= 0:
            raise ValueError("repressilator needs alpha, alpha0 >= 0 and beta, dt > 0")


REPRESSILATOR_TRAIN = RepressilatorParams(alpha=400.0, alpha0=0.4)
REPRESSILATOR_TEST = RepressilatorParams(alpha=500.0, alpha0=0.5)


def repressilator_rhs(p: RepressilatorParams) -> Callable[[np.ndarray], np.ndarray]:
    """State (m_LacI, m_TetR, m_CI, p_LacI, p_TetR, p_CI); LacI <- CI, TetR <- LacI, CI <- TetR."""
    repressor = np.array([2, 0, 1])

    def f(x):
        m, prot = x[:3], x[3:]
        dm = -m + p.alpha / (1.0 + np.abs(prot[repressor]) ** p.hill_n) + p.alpha0
        dp = -p.beta * (prot - m)
        return np.concatenate([dm, dp])

    return f


def repressilator_trajectory(p: RepressilatorParams, init=REPRESSILATOR_INIT) -> np.ndarray:
    init = np.asarray(init, dtype=float)
    if np.any(init < 0):
        raise ValueError("initial concentrations must be nonnegative")
    return rk4_integrate(repressilator_rhs(p), init, p.dt, p.steps)


def gen_repressilator(p: RepressilatorParams, init=REPRESSILATOR_INIT,
                      split: EpisodeSplit | None = None) -> TaskDataset:
    split = split or EpisodeSplit(DEFAULT_SPLIT.G0, DEFAULT_SPLIT.G1, p.steps)
    states = repressilator_trajectory(p, init)
    return next_step_dataset(states, split, "repressilator", meta={"params": asdict(p),
                                                                   "init": list(map(float, init))})


@dataclass(frozen=True)
class MotifParams:
    hill_n: float = 2.5
    kappa: float = 0.134
    dt: float = 0.035
    steps: int = 6100

    def __post_init__(self):
        if self.kappa <= 0 or self.dt <= 0:
            raise ValueError("motif needs kappa > 0 and dt > 0")


MOTIF_TRAIN = MotifParams(hill_n=2.5, kappa=0.134)
MOTIF_TEST = MotifParams(hill_n=2.49, kappa=0.135)


def motif_rhs(p: MotifParams) -> Callable[[np.ndarray], np.ndarray]:
    """Four-gene chaotic motif; every Hill exponent is hill_n."""
    kh = p.kappa**p.hill_n

    def f(x):
        ph = np.abs(x) ** p.hill_n
        return np.array([
            -x[0] + kh / (kh + ph[2]) * ph[1] / (kh + ph[1]),
            -x[1] + kh / (kh + ph[3]),
            -x[2] + kh / (kh + ph[1]) * ph[2] / (kh + ph[2]),
            -x[3] + ph[0] / (kh + ph[0]),
        ])

    return f


def motif_trajectory(p: MotifParams, init=MOTIF_INIT) -> np.ndarray:
    init = np.asarray(init, dtype=float)
    if init.shape != (4,) or np.any(init < 0) or np.any(init > 1):
        raise ValueError("motif initial state must be 4 values in [0, 1]")
    return rk4_integrate(motif_rhs(p), init, p.dt, p.steps)


def gen_chaotic_motif(p: MotifParams, init=MOTIF_INIT, split: EpisodeSplit | None = None) -> TaskDataset:
    split = split or EpisodeSplit(DEFAULT_SPLIT.G0, DEFAULT_SPLIT.G1, p.steps)
    states = motif_trajectory(p, init)
    return next_step_dataset(states, split, "motif", meta={"params": asdict(p),
                                                           "init": list(map(float, init))})


# ---------------------------------------------------------------- fractional Chua

@dataclass(frozen=True)
class ChuaParams:
    """Fractional memristive Chua circuit in dimensionless form.

    The component values (kOhm, mH, uF, uS) are kept as a record.  The
    equations use the dimensionless coefficients alpha, beta, gamma, zeta
    and memristor conductances f_inner, f_outer.  Defaults are the chaotic
    regime obtained by measuring conductances in units of 1/R2: 3 uS and
    8 uS times 100 kOhm give 0.3 and 0.8, and R2/|R3| gives zeta = 1.5.
    ``from_components`` builds the direct reading alpha = 1/C2,
    beta = 1/L1, gamma = R1/L1, zeta = 1/R3 instead.
    """

    q1: float = 0.97
    q2: float = 0.97
    q3: float = 0.97
    q4: float = 0.97
    R1: float = 100.0 / 130.0
    R2: float = 100.0
    R3: float = -200.0 / 3.0
    L1: float = 10.0
    C1: float = 1.0
    C2: float = 10.0
    alpha: float = 10.0
    beta: float = 13.0
    gamma: float = 0.35
    zeta: float = 1.5
    f_inner: float = 0.3
    f_outer: float = 0.8
    dt: float = 0.01
    steps: int = 6100

    def __post_init__(self):
        for q in self.orders:
            if not 0.0 < q <= 1.0:
                raise ValueError(f"fractional order {q} outside (0, 1]")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")

    @property
    def orders(self) -> tuple[float, float, float, float]:
        return (self.q1, self.q2, self.q3, self.q4)

    def memductance(self, w: float) -> float:
        return self.f_inner if abs(w) < 1.0 else self.f_outer

    @classmethod
    def from_components(cls, f_inner_uS: float = 3.0, f_outer_uS: float = 8.0, **kw) -> "ChuaParams":
        base = cls(**kw)
        return replace(base, alpha=1.0 / base.C2, beta=1.0 / base.L1, gamma=base.R1 / base.L1,
                       zeta=1.0 / base.R3, f_inner=f_inner_uS, f_outer=f_outer_uS)


CHUA_TRAIN = ChuaParams()
CHUA_TEST = ChuaParams(f_outer=0.7)


def chua_rhs(p: ChuaParams) -> Callable[[np.ndarray], np.ndarray]:
    """Integer-order right-hand side of the same circuit (for references)."""

    def f(s):
        x, y, z, w = s
        return np.array([
            p.alpha * (y - x + p.zeta * x - p.memductance(w) * x),
            x - y + z,
            -p.beta * y - p.gamma * z,
            x,
        ])

    return f


def gl_weights(q: float, count: int) -> np.ndarray:
    """Grünwald–Letnikov coefficients (-1)^j binom(q, j) by recurrence."""
    c = np.empty(count)
    c[0] = 1.0
    for j in range(1, count):
        c[j] = c[j - 1] * (1.0 - (1.0 + q) / j)
    return c


def fractional_chua_trajectory(p: ChuaParams, init=CHUA_INIT) -> np.ndarray:
    """Full-memory Grünwald–Letnikov scheme; later equations use the
    components already updated in the same step."""
    init = np.asarray(init, dtype=float)
    if init.shape != (4,):
        raise ValueError("Chua initial state must have 4 components")
    K = p.steps
    h = p.dt
    weights = [gl_weights(q, K + 1) for q in p.orders]
    hq = [h**q for q in p.orders]
    traj = np.empty((K + 1, 4))
    traj[0] = init
    # history[i, :k] holds component i at steps k-1, ..., 0 so the memory sum is a dot product
    hist = np.zeros((4, K + 1))
    for k in range(1, K + 1):
        prev = traj[k - 1]
        hist[:, K - k + 1] = prev
        past = hist[:, K - k + 1:]
        mem = [np.dot(weights[i][1:k + 1], past[i]) for i in range(4)]
        x = hq[0] * p.alpha * (prev[1] - prev[0] + p.zeta * prev[0]
                               - p.memductance(prev[3]) * prev[0]) - mem[0]
        y = hq[1] * (x - prev[1] + prev[2]) - mem[1]
        z = hq[2] * (-p.beta * y - p.gamma * prev[2]) - mem[2]
        w = hq[3] * x - mem[3]
        traj[k] = (x, y, z, w)
        if not np.all(np.isfinite(traj[k])):
            raise BlowUpError(k)
    return traj


def gen_fractional_chua(p: ChuaParams, init=CHUA_INIT, split: EpisodeSplit | None = None) -> TaskDataset:
    split = split or EpisodeSplit(DEFAULT_SPLIT.G0, DEFAULT_SPLIT.G1, p.steps)
    states = fractional_chua_trajectory(p, init)
    return next_step_dataset(states, split, "chua", meta={"params": asdict(p),
                                                          "init": list(map(float, init))})


# ---------------------------------------------------------------- binary tasks

@dataclass(frozen=True)
class BinaryTaskSpec:
    kind: str = "STM"
    tau_b: int = 1
    length: int = 5000
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("STM", "PC"):
            raise ValueError(f"unknown binary task {self.kind!r}")
        if self.tau_b < 0:
            raise ValueError("tau_b must be >= 0")
        if self.length <= self.tau_b:
            raise ValueError("length must exceed tau_b")


def binary_targets(s: np.ndarray, kind: str, tau_b: int) -> tuple[np.ndarray, np.ndarray]:
    """Delayed recall or windowed parity of a 0/1 sequence, plus the valid-row mask."""
    s = np.asarray(s, dtype=int)
    y = np.zeros(s.size, dtype=float)
    valid = np.arange(s.size) >= tau_b
    if kind == "STM":
        y[tau_b:] = s[: s.size - tau_b]
    elif kind == "PC":
        csum = np.concatenate([[0], np.cumsum(s)])
        idx = np.arange(tau_b, s.size)
        y[tau_b:] = (csum[idx + 1] - csum[idx - tau_b]) % 2
    else:
        raise ValueError(f"unknown binary task {kind!r}")
    return y, valid


def binary_inputs(length: int, seed) -> np.ndarray:
    return np.random.default_rng(seed).integers(0, 2, size=length)


def gen_binary_task(spec: BinaryTaskSpec, split: EpisodeSplit | None = None,
                    inputs: np.ndarray | None = None) -> TaskDataset:
    s = binary_inputs(spec.length, spec.seed) if inputs is None else np.asarray(inputs, dtype=int)
    y, valid = binary_targets(s, spec.kind, spec.tau_b)
    if split is None:
        split = BINARY_SPLIT if spec.length == BINARY_SPLIT.K else EpisodeSplit(
            spec.length // 5, 4 * spec.length // 5, spec.length)
    return TaskDataset(s[:, None].astype(float), y[:, None], split, mode=OPEN_LOOP,
                       name=f"{spec.kind}{spec.tau_b}", mask=valid, meta={"spec": asdict(spec)})


# ---------------------------------------------------------------- FX data

@dataclass
class FxSeries:
    dates: list
    rates: np.ndarray
    pair_name: str = ""

    def __post_init__(self):
        self.rates = np.asarray(self.rates, dtype=float)
        if len(self.dates) != self.rates.size:
            raise ValueError("dates and rates differ in length")
        if np.any(self.rates <= 0):
            raise ValueError("exchange rates must be positive")
        if any(b <= a for a, b in zip(self.dates, self.dates[1:])):
            raise ValueError("dates must be strictly increasing")

    def __len__(self) -> int:
        return self.rates.size


class FxFormatError(ValueError):
    pass


def load_fx_csv(path, pair_name: str | None = None) -> FxSeries:
    """Read a ``date,rate`` CSV (ISO-8601 dates) into a date-sorted series."""
    path = Path(path)
    rows = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip().lower() for h in header] != ["date", "rate"]:
            raise FxFormatError(f"{path}: expected header 'date,rate', got {header}")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 2:
                raise FxFormatError(f"{path}:{lineno}: expected 2 fields, got {len(row)}")
            try:
                day = dt.date.fromisoformat(row[0].strip())
                rate = float(row[1])
            except ValueError as exc:
                raise FxFormatError(f"{path}:{lineno}: {exc}") from None
            if not math.isfinite(rate) or rate <= 0:
                raise FxFormatError(f"{path}:{lineno}: rate must be positive, got {row[1].strip()}")
            rows.append((day, rate))
    rows.sort(key=lambda r: r[0])
    for (a, _), (b, _) in zip(rows, rows[1:]):
        if a == b:
            raise FxFormatError(f"{path}: duplicate date {a.isoformat()}")
    return FxSeries([r[0] for r in rows], np.array([r[1] for r in rows]),
                    pair_name or path.stem)


def write_fx_csv(series: FxSeries, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", "rate"])
        for d, r in zip(series.dates, series.rates):
            w.writerow([d.isoformat(), repr(float(r))])


def wavelet_denoise(series: np.ndarray, levels: int = 2, wavelet: str = "db4") -> np.ndarray:
    """Soft universal-threshold DWT denoising (sigma from level-1 details)."""
    x = np.asarray(series, dtype=float)
    if x.size < 2**levels:
        raise ValueError(f"series of length {x.size} is too short for {levels} levels")
    coeffs = pywt.wavedec(x, wavelet, mode="symmetric", level=levels)
    sigma = np.median(np.abs(coeffs[-1])) / 0.6745
    thr = sigma * math.sqrt(2.0 * math.log(x.size))
    coeffs[1:] = [pywt.threshold(c, thr, mode="soft") for c in coeffs[1:]]
    return pywt.waverec(coeffs, wavelet, mode="symmetric")[: x.size]


def _trailing_denoise(x: np.ndarray, levels: int) -> np.ndarray:
    lv = min(levels, pywt.dwt_max_level(x.size, pywt.Wavelet("db4").dec_len))
    return wavelet_denoise(x, lv) if lv >= 1 else x.copy()


def _default_fx_split(n_samples: int) -> EpisodeSplit:
    if n_samples >= FX_SPLIT.K:
        return FX_SPLIT
    # short series keep the same proportions
    G1 = max(1, n_samples * FX_SPLIT.G1 // FX_SPLIT.K)
    return EpisodeSplit(min(n_samples * FX_SPLIT.G0 // FX_SPLIT.K, G1 - 1), G1, n_samples)


@dataclass
class FxWindowTask:
    dataset: TaskDataset
    raw_targets: np.ndarray
    raw_previous: np.ndarray
    norm: NormRecord


def sliding_window(series: FxSeries | np.ndarray, w: int = 6, split: EpisodeSplit | None = None,
                   denoise_levels: int | None = 2, causal: bool = True,
                   name: str | None = None) -> FxWindowTask:
    """Inputs = the w prior (normalized, denoised) prices, target = today's price.

    ``causal=True`` denoises, for each sample, only the prices available
    before the target day; ``causal=False`` denoises the whole series once.
    Fitting targets are normalized raw prices.
    """
    rates = series.rates if isinstance(series, FxSeries) else np.asarray(series, dtype=float)
    pair = name or (series.pair_name if isinstance(series, FxSeries) else "series")
    n_samples = rates.size - w
    if n_samples < 1:
        raise ValueError(f"series of length {rates.size} too short for window {w}")
    split = split or _default_fx_split(n_samples)
    if split.K > n_samples:
        raise ValueError(f"split needs {split.K} samples but the series yields {n_samples}")
    scaled, rec = normalize(rates, fit_rows=split.G1 + w)
    if denoise_levels is None:
        smooth_rows = [scaled[k: k + w] for k in range(split.K)]
    elif causal:
        smooth_rows = [_trailing_denoise(scaled[: k + w], denoise_levels)[-w:] for k in range(split.K)]
    else:
        den = _trailing_denoise(scaled, denoise_levels)
        smooth_rows = [den[k: k + w] for k in range(split.K)]
    inputs = np.asarray(smooth_rows)
    targets = scaled[w: w + split.K, None]
    ds = TaskDataset(inputs, targets, split, mode=OPEN_LOOP, name=pair, norm=rec,
                     meta={"window": w, "denoise_levels": denoise_levels, "causal": causal})
    return FxWindowTask(ds, rates[w: w + split.K].copy(), rates[w - 1: w - 1 + split.K].copy(), rec)


def synthetic_fx_series(length: int = 1106, seed=0, noise: float = 0.005,
                        periods=(37.0, 37.0 * (1 + math.sqrt(5)) / 2), amplitudes=(0.05, 0.03),
                        level: float = 1.0, start: dt.date = dt.date(2018, 2, 8),
                        name: str = "SYN") -> FxSeries:
    """Two incommensurate sines plus Gaussian noise of ``noise`` x level."""
    rng = np.random.default_rng(seed)
    t = np.arange(length, dtype=float)
    phase = rng.uniform(0, 2 * math.pi, size=2)
    clean = level + sum(a * np.sin(2 * math.pi * t / p + ph)
                        for a, p, ph in zip(amplitudes, periods, phase))
    rates = clean + noise * level * rng.standard_normal(length)
    dates = [start + dt.timedelta(days=int(i)) for i in range(length)]
    return FxSeries(dates, rates, name)


# ---------------------------------------------------------------- dataset files

def save_dataset(ds: TaskDataset, csv_path, extra: dict | None = None) -> Path:
    """CSV ``k,s_1..s_din,y_1..y_dout`` plus a JSON sidecar with the metadata."""
    csv_path = Path(csv_path)
    with csv_path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["k"] + [f"s_{i + 1}" for i in range(ds.d_in)]
                   + [f"y_{i + 1}" for i in range(ds.d_out)])
        for k in range(ds.K):
            w.writerow([k] + [repr(float(v)) for v in ds.inputs[k]]
                       + [repr(float(v)) for v in ds.targets[k]])
    side = {
        "name": ds.name,
        "mode": ds.mode,
        "split": asdict(ds.split),
        "d_in": ds.d_in,
        "d_out": ds.d_out,
        "mask": None if ds.mask is None else ds.mask.astype(int).tolist(),
        "norm": ds.norm.to_dict() if isinstance(ds.norm, NormRecord) else None,
        "meta": ds.meta,
    }
    if extra:
        side.update(extra)
    sidecar = csv_path.with_suffix(".json")
    sidecar.write_text(json.dumps(side, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return sidecar


def load_dataset(csv_path) -> TaskDataset:
    csv_path = Path(csv_path)
    side = json.loads(csv_path.with_suffix(".json").read_text(encoding="utf-8"))
    data = np.loadtxt(csv_path, delimiter=",", skiprows=1, ndmin=2)
    d_in, d_out = side["d_in"], side["d_out"]
    mask = None if side.get("mask") is None else np.asarray(side["mask"], dtype=bool)
    norm = NormRecord.from_dict(side["norm"]) if side.get("norm") else None
    return TaskDataset(data[:, 1:1 + d_in], data[:, 1 + d_in:1 + d_in + d_out],
                       EpisodeSplit(**side["split"]), mode=side["mode"], name=side["name"],
                       mask=mask, norm=norm, meta=side.get("meta", {}))
