"""Shift-bank detectors and the polynomial integration SVM.

One linear SVM is trained per time shift on standardized d_k wavelet
coefficients.  Their real-valued margins are standardized and fused by a
second SVM whose score is compared against a threshold calibrated on
noise-only data.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import _jsonio
from .errors import CalibrationError, ConfigurationError, ParameterError
from .signal import Dataset, WindowObservation, cut_group
from .svm import KernelSpec, SvmModel, TrainConfig, train
from .wavelet import WaveletConfig, dwt, extract_scale

log = logging.getLogger(__name__)

PIPELINE_SCHEMA = "wavedet-pipeline/1"
TARGET_SCALE = 4
# windows per chunk when transforming large batches
CHUNK_WINDOWS = 2048
# Soft penalties for the per-shift linear detectors; heavier ones overfit the 64-dim features.
BANK_TRAIN_CONFIG = TrainConfig(c_plus=0.01, c_minus=0.04)


def extract_features(window, cfg: WaveletConfig | None = None, scale: int = TARGET_SCALE) -> np.ndarray:
    """Raw d_scale coefficients of one window or of a batch along the last axis."""
    cfg = cfg or WaveletConfig()
    samples = window.samples if isinstance(window, WindowObservation) else window
    return extract_scale(dwt(samples, cfg), scale)


def batch_features(windows: np.ndarray, cfg: WaveletConfig | None = None,
                   scale: int = TARGET_SCALE) -> np.ndarray:
    """:func:`extract_features` over an arbitrarily large batch, in chunks."""
    cfg = cfg or WaveletConfig()
    windows = np.asarray(windows, dtype=float)
    lead = windows.shape[:-1]
    flat = windows.reshape(-1, windows.shape[-1])
    out = None
    for start in range(0, len(flat), CHUNK_WINDOWS):
        part = extract_features(flat[start:start + CHUNK_WINDOWS], cfg, scale)
        if out is None:
            out = np.empty((len(flat), part.shape[-1]))
        out[start:start + len(part)] = part
    if out is None:
        out = np.empty((0, windows.shape[-1] >> scale))
    return out.reshape(lead + (out.shape[-1],))


@dataclass
class Standardizer:
    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, x: np.ndarray) -> "Standardizer":
        mean = x.mean(axis=0)
        scale = x.std(axis=0)
        scale = np.where(scale > 0, scale, 1.0)
        return cls(mean, scale)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return (x - self.mean) / self.scale

    def to_dict(self) -> dict:
        return {"mean": self.mean, "scale": self.scale}

    @classmethod
    def from_dict(cls, d: dict) -> "Standardizer":
        return cls(np.asarray(d["mean"], dtype=float), np.asarray(d["scale"], dtype=float))


@dataclass
class ShiftBank:
    shifts: tuple
    models: list
    feature_norm: list
    wavelet: WaveletConfig = field(default_factory=WaveletConfig)
    scale: int = TARGET_SCALE
    train_trials: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def __post_init__(self):
        self.shifts = tuple(int(s) for s in self.shifts)
        if not self.shifts or self.shifts[0] != 0 or any(
                b <= a for a, b in zip(self.shifts, self.shifts[1:])):
            raise ConfigurationError(f"shifts must start at 0 and increase strictly, got {self.shifts}")
        if not (len(self.models) == len(self.feature_norm) == len(self.shifts)):
            raise ConfigurationError("need one model and one feature normalizer per shift")
        dims = {m.feature_dim for m in self.models}
        if len(dims) > 1:
            raise ConfigurationError(f"models disagree on feature_dim: {sorted(dims)}")

    @property
    def size(self) -> int:
        return len(self.shifts)

    @property
    def feature_dim(self) -> int:
        return self.models[0].feature_dim

    def weights(self) -> np.ndarray:
        """Per-shift weights acting on raw features, shape ``(M, S)``, and offsets ``(M,)``."""
        w = np.stack([m.weights() / n.scale for m, n in zip(self.models, self.feature_norm)])
        b = np.array([m.bias - (m.weights() / n.scale) @ n.mean
                      for m, n in zip(self.models, self.feature_norm)])
        return w, b

    def margins_from_features(self, feats: np.ndarray) -> np.ndarray:
        """``feats`` has shape ``(..., M, S)``; returns ``(..., M)`` decision values."""
        out = np.empty(feats.shape[:-1])
        for i, (m, norm) in enumerate(zip(self.models, self.feature_norm)):
            out[..., i] = m.decision_values(norm(feats[..., i, :]))
        return out

    def margins(self, groups: np.ndarray) -> np.ndarray:
        """Margins for window groups of shape ``(..., M, H)``."""
        groups = np.asarray(groups, dtype=float)
        if groups.shape[-2] != self.size:
            raise ParameterError(f"expected groups of {self.size} windows, got {groups.shape[-2]}")
        return self.margins_from_features(batch_features(groups, self.wavelet, self.scale))

    def to_dict(self) -> dict:
        return {"shifts": list(self.shifts), "wavelet": self.wavelet.to_dict(), "scale": self.scale,
                "feature_norm": [n.to_dict() for n in self.feature_norm]}


def train_bank(dataset: Dataset, shifts: Sequence[int] | None = None, svm_cfg: TrainConfig | None = None,
               wavelet_cfg: WaveletConfig | None = None, partition: str = "bank",
               scale: int = TARGET_SCALE) -> ShiftBank:
    """Train one linear SVM per shift: pulse windows at that shift against the shared noise pool."""
    svm_cfg = svm_cfg or BANK_TRAIN_CONFIG
    wavelet_cfg = wavelet_cfg or WaveletConfig()
    shifts = tuple(dataset.shifts if shifts is None else shifts)
    missing = set(shifts) - set(dataset.shifts)
    if missing:
        raise ConfigurationError(f"dataset has no windows for shifts {sorted(missing)}")
    models, norms = [], []
    used = []
    for d in shifts:
        pos = dataset.select(shift=d, is_pulse=True, partition=partition)
        neg = dataset.select(shift=d, is_pulse=False, partition=partition)
        if not pos.any() or not neg.any():
            raise ConfigurationError(f"partition {partition!r} lacks one class for shift {d}")
        x = batch_features(np.concatenate([dataset.samples[pos], dataset.samples[neg]]), wavelet_cfg, scale)
        y = np.concatenate([np.ones(pos.sum()), -np.ones(neg.sum())])
        norm = Standardizer.fit(x)
        model = train(norm(x), y, svm_cfg, KernelSpec.linear())
        log.info("shift %d: %d samples, %d support vectors", d, len(y), model.n_support)
        models.append(model)
        norms.append(norm)
        used.append(dataset.trial[pos | neg])
    trials = np.unique(np.concatenate(used))
    return ShiftBank(shifts, models, norms, wavelet_cfg, scale, trials)


def bank_margins(bank: ShiftBank, window_group) -> np.ndarray:
    """Smooth outputs of every bank detector on one aligned group."""
    if isinstance(window_group, (list, tuple)):
        if len(window_group) != bank.size:
            raise ParameterError(f"group has {len(window_group)} windows, bank has {bank.size} detectors")
        window_group = np.stack([w.samples if isinstance(w, WindowObservation) else w
                                 for w in window_group])
    return bank.margins(window_group)


@dataclass
class DetectionResult:
    score: float
    detected: bool
    per_shift_margins: np.ndarray


@dataclass
class IntegrationPipeline:
    """Fusion of selected bank margins into one thresholded score.

    With ``integrator=None`` the pipeline is the single bank detector
    ``inputs[0]`` and its score is that detector's margin.
    """

    bank: ShiftBank
    inputs: tuple
    integrator: SvmModel | None = None
    score_norm: Standardizer | None = None
    threshold: float = 0.0
    name: str = ""
    train_trials: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    thresholds: dict = field(default_factory=dict)

    def __post_init__(self):
        self.inputs = tuple(int(i) for i in self.inputs)
        if not self.inputs or any(not 0 <= i < self.bank.size for i in self.inputs):
            raise ConfigurationError(f"inputs {self.inputs} do not index a bank of {self.bank.size}")
        if self.integrator is None and len(self.inputs) != 1:
            raise ConfigurationError("a pipeline without integrator must have exactly one input")
        if self.integrator is not None and self.integrator.feature_dim != len(self.inputs):
            raise ConfigurationError(
                f"integrator expects {self.integrator.feature_dim} inputs, pipeline has {len(self.inputs)}")
        if not self.name:
            self.name = scheme_name(self.shifts, self.integrator is not None)

    @classmethod
    def single(cls, bank: ShiftBank, index: int) -> "IntegrationPipeline":
        return cls(bank, (index,))

    @property
    def shifts(self) -> tuple:
        return tuple(self.bank.shifts[i] for i in self.inputs)

    def scores_from_margins(self, margins: np.ndarray) -> np.ndarray:
        """Scores from full-bank margins ``(..., M_bank)``."""
        sel = np.asarray(margins)[..., list(self.inputs)]
        if self.integrator is None:
            return sel[..., 0].copy()
        return self.integrator.decision_values(self.score_norm(sel))

    def scores(self, groups: np.ndarray) -> np.ndarray:
        """Scores for groups cut at the pipeline's own shifts, shape ``(..., len(inputs), H)``."""
        groups = np.asarray(groups, dtype=float)
        if groups.shape[-2] != len(self.inputs):
            raise ParameterError(f"expected groups of {len(self.inputs)} windows, got {groups.shape[-2]}")
        full = np.zeros(groups.shape[:-2] + (self.bank.size,))
        feats = batch_features(groups, self.bank.wavelet, self.bank.scale)
        for k, i in enumerate(self.inputs):
            model, norm = self.bank.models[i], self.bank.feature_norm[i]
            full[..., i] = model.decision_values(norm(feats[..., k, :]))
        return self.scores_from_margins(full)


def scheme_name(shifts: Sequence[int], integrated: bool) -> str:
    if not integrated:
        return f"{shifts[0]}-shift"
    return "svm[" + ",".join(str(s) for s in shifts) + "]"


def _check_disjoint(a: np.ndarray, b: np.ndarray, what: str) -> None:
    overlap = np.intersect1d(a, b)
    if len(overlap):
        raise ConfigurationError(f"{what}: {len(overlap)} trials appear in both partitions")


def train_integrator(bank: ShiftBank, dataset: Dataset, inputs: Sequence[int] | None = None,
                     kernel: KernelSpec | None = None, svm_cfg: TrainConfig | None = None,
                     partition: str = "integrator") -> IntegrationPipeline:
    """Fit the fusion SVM on standardized bank margins of aligned groups.

    ``inputs`` selects bank detectors by position (default: all).  The
    groups used must not overlap the bank's own training trials.
    """
    kernel = kernel or KernelSpec.poly(2, 1.0)
    svm_cfg = svm_cfg or TrainConfig()
    inputs = tuple(range(bank.size)) if inputs is None else tuple(inputs)
    if tuple(dataset.shifts) != bank.shifts:
        raise ConfigurationError(f"dataset shifts {dataset.shifts} differ from bank shifts {bank.shifts}")
    pos, pos_trials, _ = dataset.groups(is_pulse=True, partition=partition)
    neg, neg_trials, _ = dataset.groups(is_pulse=False, partition=partition)
    if not len(pos) or not len(neg):
        raise ConfigurationError(f"partition {partition!r} lacks pulse or noise groups")
    trials = np.concatenate([pos_trials, neg_trials])
    _check_disjoint(trials, bank.train_trials, "integrator vs bank training data")
    margins = bank.margins(np.concatenate([pos, neg]))[:, list(inputs)]
    y = np.concatenate([np.ones(len(pos)), -np.ones(len(neg))])
    norm = Standardizer.fit(margins)
    model = train(norm(margins), y, svm_cfg, kernel)
    log.info("integrator on shifts %s: %d samples, %d support vectors",
             [bank.shifts[i] for i in inputs], len(y), model.n_support)
    return IntegrationPipeline(bank, inputs, model, norm, 0.0, train_trials=trials)


def calibrate_threshold(pipeline: IntegrationPipeline | None, noise_scores, target_pfa: float) -> float:
    """Smallest noise-score order statistic ``t`` with ``mean(scores > t) <= target_pfa``.

    Needs at least ``ceil(10 / target_pfa)`` scores.  ``target_pfa >= 1``
    yields ``-inf``.  When ``pipeline`` is given its threshold is updated.
    """
    if not 0 < target_pfa <= 1:
        raise ParameterError(f"target_pfa must lie in (0, 1], got {target_pfa}")
    scores = np.sort(np.asarray(noise_scores, dtype=float))
    n = len(scores)
    required = math.ceil(10 / target_pfa - 1e-9)
    if n < required:
        raise CalibrationError(required, n, target_pfa)
    if target_pfa >= 1:
        t = -math.inf
    else:
        allowed = int(math.floor(target_pfa * n * (1 + 1e-12)))
        t = float(scores[n - 1 - allowed])
    if pipeline is not None:
        pipeline.threshold = t
        pipeline.thresholds[float(target_pfa)] = t
    return t


def detect(pipeline: IntegrationPipeline, window_group) -> DetectionResult:
    if isinstance(window_group, (list, tuple)):
        window_group = np.stack([w.samples if isinstance(w, WindowObservation) else w
                                 for w in window_group])
    group = np.asarray(window_group, dtype=float)
    if group.ndim != 2 or group.shape[0] != len(pipeline.inputs):
        raise ParameterError(f"expected a group of {len(pipeline.inputs)} windows, got shape {group.shape}")
    full = np.zeros(pipeline.bank.size)
    feats = batch_features(group, pipeline.bank.wavelet, pipeline.bank.scale)
    for k, i in enumerate(pipeline.inputs):
        full[i] = pipeline.bank.models[i].decision_values(pipeline.bank.feature_norm[i](feats[k]))
    score = float(pipeline.scores_from_margins(full))
    return DetectionResult(score, score > pipeline.threshold, full[list(pipeline.inputs)])


def sliding_scan(pipeline: IntegrationPipeline, stream, step: int = 1) -> list:
    """Run :func:`detect` at every candidate pulse start in ``stream``.

    Position ``p`` is the hypothesised first pulse sample; the window for
    shift ``D`` starts at ``p - D``.  Positions run from ``max(shifts)`` to
    ``len(stream) - H`` in steps of ``step``.
    """
    stream = np.asarray(stream, dtype=float)
    if step < 1:
        raise ParameterError(f"step must be >= 1, got {step}")
    h = pipeline.bank.models[0].feature_dim << pipeline.bank.scale
    shifts = pipeline.shifts
    top = max(shifts)
    if len(stream) < h + top:
        raise ParameterError(f"stream of {len(stream)} samples is shorter than H + max(shift) = {h + top}")
    positions = np.arange(top, len(stream) - h + 1, step)
    views = np.lib.stride_tricks.sliding_window_view(stream, h + top)[positions - top]
    results = []
    for start in range(0, len(positions), max(1, CHUNK_WINDOWS // len(shifts))):
        block = cut_group(views[start:start + CHUNK_WINDOWS // len(shifts)], shifts, h)
        full = np.zeros(block.shape[:-2] + (pipeline.bank.size,))
        feats = batch_features(block, pipeline.bank.wavelet, pipeline.bank.scale)
        for k, i in enumerate(pipeline.inputs):
            full[..., i] = pipeline.bank.models[i].decision_values(pipeline.bank.feature_norm[i](feats[..., k, :]))
        scores = pipeline.scores_from_margins(full)
        for j, s in enumerate(scores):
            p = int(positions[start + j])
            results.append((p, DetectionResult(float(s), bool(s > pipeline.threshold),
                                               full[j, list(pipeline.inputs)])))
    return results


# -- persistence --------------------------------------------------------------

def save_bundle(directory, bank: ShiftBank, pipelines: Sequence[IntegrationPipeline],
                manifest_extra: dict | None = None) -> Path:
    """Write bank models, integrators, normalizers, thresholds and a manifest."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    bank_files = []
    for d, model in zip(bank.shifts, bank.models):
        name = f"bank_shift{d}.json"
        model.save(directory / name)
        bank_files.append(name)
    (directory / "bank_norm.json").write_text(_jsonio.dumps(bank.to_dict()), encoding="utf-8")
    entries = []
    thresholds = {}
    for p in pipelines:
        entry = {"name": p.name, "inputs": list(p.inputs), "shifts": list(p.shifts)}
        if p.integrator is not None:
            tag = "integrator_" + "_".join(str(s) for s in p.shifts)
            p.integrator.save(directory / f"{tag}.json")
            (directory / f"{tag}_norm.json").write_text(_jsonio.dumps(p.score_norm.to_dict()), encoding="utf-8")
            entry["model"] = f"{tag}.json"
            entry["score_norm"] = f"{tag}_norm.json"
        entries.append(entry)
        thresholds[p.name] = {"threshold": p.threshold,
                              "by_target_pfa": {format(k, ".17g"): v for k, v in sorted(p.thresholds.items())}}
    (directory / "thresholds.json").write_text(_jsonio.dumps(thresholds), encoding="utf-8")
    manifest = {
        "schema": PIPELINE_SCHEMA,
        "shifts": list(bank.shifts),
        "wavelet": bank.wavelet.to_dict(),
        "scale": bank.scale,
        "bank_models": bank_files,
        "pipelines": entries,
        **(manifest_extra or {}),
    }
    (directory / "manifest.json").write_text(_jsonio.dumps(manifest), encoding="utf-8")
    return directory


def load_bundle(directory) -> tuple:
    """Inverse of :func:`save_bundle`; returns ``(bank, pipelines, manifest)``."""
    directory = Path(directory)
    manifest = json.loads((directory / "manifest.json").read_text(encoding="utf-8"))
    if manifest.get("schema") != PIPELINE_SCHEMA:
        raise ConfigurationError(f"{directory}: unsupported bundle schema {manifest.get('schema')!r}")
    norm = json.loads((directory / "bank_norm.json").read_text(encoding="utf-8"))
    wave = WaveletConfig(**manifest["wavelet"])
    bank = ShiftBank(
        tuple(manifest["shifts"]),
        [SvmModel.load(directory / f) for f in manifest["bank_models"]],
        [Standardizer.from_dict(n) for n in norm["feature_norm"]],
        wave,
        int(manifest.get("scale", TARGET_SCALE)),
    )
    thresholds = json.loads((directory / "thresholds.json").read_text(encoding="utf-8"))
    pipelines = []
    for entry in manifest["pipelines"]:
        model = score_norm = None
        if "model" in entry:
            model = SvmModel.load(directory / entry["model"])
            score_norm = Standardizer.from_dict(
                json.loads((directory / entry["score_norm"]).read_text(encoding="utf-8")))
        th = thresholds.get(entry["name"], {})
        p = IntegrationPipeline(bank, tuple(entry["inputs"]), model, score_norm,
                                float(th.get("threshold", 0.0)), name=entry["name"])
        p.thresholds = {float(k): float(v) for k, v in th.get("by_target_pfa", {}).items()}
        pipelines.append(p)
    return bank, pipelines, manifest
