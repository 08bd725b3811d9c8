"""Experiment configuration: one JSON document validated before any work starts."""
from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ParameterError
from .signal import DEFAULT_FRACTIONS, DEFAULT_SHIFTS, DEFAULT_SNR_GRID, PARTITIONS, NoiseSpec, PulseSpec
from .svm import KernelSpec, TrainConfig
from .wavelet import WaveletConfig

DEFAULTS = {
    "pulse": {"n_samples": 1024, "f_start": 0.0075, "f_end": 0.0575, "initial_phase": 0.0},
    "noise": {"sigma": 1.0},
    "seed": 2004,
    "shifts": list(DEFAULT_SHIFTS),
    "wavelet": {"order": 5, "levels": 4, "boundary": "periodic"},
    "scale": 4,
    "svm": {
        "bank": {"c_plus": 0.01, "c_minus": 0.04, "kkt_tol": 1e-3, "max_passes": 10_000},
        "integrator": {"c_plus": 1.0, "c_minus": 4.0, "kkt_tol": 1e-3, "max_passes": 10_000},
    },
    "integrator_kernel": {"kind": "poly", "degree": 2, "offset": 1.0},
    # null: the first three shifts and all shifts, whenever the bank is big enough
    "integrators": None,
    "snr_grid": list(DEFAULT_SNR_GRID),
    "pfa_targets": [1e-1, 1e-2, 1e-3],
    "partition_fractions": list(DEFAULT_FRACTIONS),
    "counts": {
        "pulse": 5000,
        "noise": 5000,
        "calibration_noise": 20_000,
        "eval_noise": 100_000,
        "eval_pulse_per_snr": 500,
        "correlation": 10_000,
        "rates_pulse": 2000,
        "rates_noise": 20_000,
    },
    "correlation_snr_db": 0.0,
    "rates_snr_db": -12.0,
    "output_dir": "wavedet-out",
    "workers": 1,
}


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def set_dotted(doc: dict, assignment: str) -> None:
    """Apply ``a.b.c=value``; the value is parsed as JSON when possible."""
    if "=" not in assignment:
        raise ParameterError(f"override {assignment!r} is not of the form key=value")
    key, raw = assignment.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    parts = key.strip().split(".")
    node = doc
    for p in parts[:-1]:
        if not isinstance(node.get(p), dict):
            raise ParameterError(f"override {key!r}: {p!r} is not a section")
        node = node[p]
    if parts[-1] not in node:
        raise ParameterError(f"override {key!r}: unknown key {parts[-1]!r}")
    node[parts[-1]] = value


def default_integrators(shifts) -> list:
    groups = []
    if len(shifts) > 3:
        groups.append(tuple(shifts[:3]))
    if len(shifts) > 1:
        groups.append(tuple(shifts))
    return groups


@dataclass
class ExperimentConfig:
    pulse: PulseSpec
    noise: NoiseSpec
    shifts: tuple
    wavelet: WaveletConfig
    scale: int
    bank_svm: TrainConfig
    integrator_svm: TrainConfig
    integrator_kernel: KernelSpec
    integrators: list
    snr_grid: tuple
    pfa_targets: tuple
    partition_fractions: tuple
    counts: dict
    correlation_snr_db: float
    rates_snr_db: float
    output_dir: Path
    workers: int = 1
    raw: dict = field(default_factory=dict, repr=False)

    @property
    def seed(self) -> int:
        return self.noise.seed

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        """Merge ``doc`` over the defaults and validate every field."""
        unknown = set(doc) - set(DEFAULTS)
        if unknown:
            raise ParameterError(f"unknown config keys: {sorted(unknown)}")
        d = _merge(DEFAULTS, doc)
        try:
            pulse = PulseSpec(**d["pulse"])
            noise = NoiseSpec(sigma=float(d["noise"]["sigma"]), seed=int(d["seed"]))
            shifts = tuple(int(s) for s in d["shifts"])
            if not shifts or shifts[0] != 0 or any(b <= a for a, b in zip(shifts, shifts[1:])):
                raise ParameterError(f"shifts must start at 0 and increase strictly, got {list(shifts)}")
            if shifts[-1] >= pulse.n_samples:
                raise ParameterError("shifts must be smaller than the window length")
            wavelet = WaveletConfig(**d["wavelet"])
            wavelet.check_length(pulse.n_samples)
            scale = int(d["scale"])
            if not 1 <= scale <= wavelet.levels:
                raise ParameterError(f"scale {scale} outside 1..{wavelet.levels}")
            bank_svm = TrainConfig(**d["svm"]["bank"])
            integrator_svm = TrainConfig(**d["svm"]["integrator"])
            kernel = KernelSpec.from_dict(d["integrator_kernel"])
            if d["integrators"] is None:
                integrators = default_integrators(shifts)
            else:
                integrators = [tuple(int(s) for s in group) for group in d["integrators"]]
            for group in integrators:
                if not group or any(s not in shifts for s in group):
                    raise ParameterError(f"integrator inputs {list(group)} are not a subset of shifts")
            snr_grid = tuple(float(s) for s in d["snr_grid"])
            if not snr_grid:
                raise ParameterError("snr_grid must not be empty")
            pfa = tuple(float(p) for p in d["pfa_targets"])
            if not pfa or any(not 0 < p <= 1 for p in pfa):
                raise ParameterError(f"pfa_targets must lie in (0, 1], got {list(pfa)}")
            fractions = tuple(float(f) for f in d["partition_fractions"])
            if len(fractions) != len(PARTITIONS) or min(fractions) < 0 or abs(sum(fractions) - 1) > 1e-9:
                raise ParameterError(f"partition_fractions must be {len(PARTITIONS)} non-negative values "
                                     f"summing to 1, got {list(fractions)}")
            counts = {k: int(v) for k, v in d["counts"].items()}
            missing = set(DEFAULTS["counts"]) - set(counts)
            if missing:
                raise ParameterError(f"missing counts: {sorted(missing)}")
            if any(v < 0 for v in counts.values()):
                raise ParameterError("counts must be non-negative")
            if counts["pulse"] == 0 or counts["noise"] == 0:
                raise ParameterError("counts.pulse and counts.noise must both be positive")
            workers = int(d["workers"])
            if workers < 1:
                raise ParameterError(f"workers must be >= 1, got {workers}")
        except ParameterError:
            raise
        except (TypeError, KeyError, ValueError) as exc:
            raise ParameterError(f"malformed config: {exc}") from exc
        return cls(pulse, noise, shifts, wavelet, scale, bank_svm, integrator_svm, kernel, integrators,
                   snr_grid, pfa, fractions, counts, float(d["correlation_snr_db"]),
                   float(d["rates_snr_db"]), Path(d["output_dir"]), workers, d)

    @classmethod
    def load(cls, path=None, overrides=(), env_seed: str | None = None) -> "ExperimentConfig":
        doc = {}
        if path is not None:
            try:
                doc = json.loads(Path(path).read_text(encoding="utf-8"))
            except (OSError, json.JSONDecodeError) as exc:
                raise ParameterError(f"cannot read config {path}: {exc}") from exc
            if not isinstance(doc, dict):
                raise ParameterError(f"config {path} must hold a JSON object")
        doc = _merge(DEFAULTS, doc)
        for assignment in overrides:
            set_dotted(doc, assignment)
        if env_seed not in (None, ""):
            try:
                doc["seed"] = int(env_seed)
            except ValueError as exc:
                raise ParameterError(f"WAVEDET_SEED={env_seed!r} is not an integer") from exc
        return cls.from_dict(doc)

    def to_dict(self) -> dict:
        return copy.deepcopy(self.raw)
