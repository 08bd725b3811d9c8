"""Chirp pulse, white Gaussian noise and labelled window observations.

A *group* is the set of windows a sliding detector sees for one event: all
windows are cut from one noise stream of length ``H + max(shifts)`` and the
window for shift ``D`` starts ``D`` samples before the pulse, so it holds
``D`` samples of noise followed by the first ``H - D`` pulse samples.
"""
from __future__ import annotations

import enum
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .errors import DegenerateInputError, ParameterError

DATASET_SCHEMA = "wavedet-dataset/1"
PARTITIONS = ("bank", "integrator", "calibration", "test")
DEFAULT_FRACTIONS = (0.4, 0.3, 0.2, 0.1)
DEFAULT_SHIFTS = (0, 11, 23, 37, 53)
DEFAULT_SNR_GRID = tuple(float(-k) for k in range(16))


class Domain(enum.IntEnum):
    """Independent random-number domains; a trial index is unique only within one."""

    DATASET = 0
    CALIBRATION = 1
    EVAL_NOISE = 2
    EVAL_PULSE = 3
    CORRELATION = 4
    SCAN = 5


class Label(str, enum.Enum):
    PULSE = "pulse"
    NOISE_ONLY = "noise_only"


@dataclass(frozen=True)
class PulseSpec:
    n_samples: int = 1024
    f_start: float = 0.0075
    f_end: float = 0.0575
    initial_phase: float = 0.0

    def __post_init__(self):
        n = self.n_samples
        if not isinstance(n, (int, np.integer)) or n <= 0 or n & (n - 1):
            raise ParameterError(f"n_samples must be a positive power of two, got {n!r}")
        if not 0 < self.f_start < self.f_end < 0.5:
            raise ParameterError(
                f"need 0 < f_start < f_end < 0.5, got f_start={self.f_start}, f_end={self.f_end}")


@dataclass(frozen=True)
class NoiseSpec:
    sigma: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if not self.sigma > 0:
            raise ParameterError(f"sigma must be positive, got {self.sigma}")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ParameterError(f"seed must be a 64-bit unsigned integer, got {self.seed}")


@dataclass(frozen=True)
class WindowSpec:
    window_len: int
    shift: int = 0
    snr_db: float = 0.0
    label: Label = Label.PULSE

    def __post_init__(self):
        if self.window_len <= 0:
            raise ParameterError(f"window_len must be positive, got {self.window_len}")
        if not 0 <= self.shift < self.window_len:
            raise ParameterError(
                f"shift must satisfy 0 <= shift < window_len={self.window_len}, got {self.shift}")
        object.__setattr__(self, "label", Label(self.label))


@dataclass
class WindowObservation:
    samples: np.ndarray
    spec: WindowSpec

    def __post_init__(self):
        if len(self.samples) != self.spec.window_len:
            raise ParameterError(
                f"window holds {len(self.samples)} samples, spec says {self.spec.window_len}")


def observation_rng(seed: int, domain: int, *index: int) -> np.random.Generator:
    """Generator for one trial, independent of every other ``(seed, domain, *index)``."""
    key = [int(seed), int(domain)] + [int(i) for i in index]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(key)))


def generate_chirp(spec: PulseSpec) -> np.ndarray:
    """Unit-amplitude linear chirp sweeping ``f_start`` to ``f_end`` over the pulse."""
    n = np.arange(spec.n_samples, dtype=float)
    sweep = (spec.f_end - spec.f_start) * n ** 2 / (2 * spec.n_samples)
    return np.sin(spec.initial_phase + 2 * np.pi * (spec.f_start * n + sweep))


def generate_awgn(count: int, noise: NoiseSpec) -> np.ndarray:
    if count <= 0:
        raise ParameterError(f"count must be positive, got {count}")
    rng = np.random.default_rng(noise.seed)
    return noise.sigma * rng.standard_normal(count)


def snr_amplitude(snr_db: float, pulse, sigma: float = 1.0) -> float:
    """Amplitude ``A`` giving ``10 log10(A^2 meansq(pulse) / sigma^2) == snr_db``."""
    meansq = float(np.mean(np.square(pulse)))
    if meansq == 0.0:
        raise DegenerateInputError("pulse is identically zero")
    if sigma <= 0:
        raise ParameterError(f"sigma must be positive, got {sigma}")
    return float(sigma * np.sqrt(10.0 ** (snr_db / 10.0) / meansq))


def assemble_window(pulse, spec: WindowSpec, noise: NoiseSpec,
                    rng: np.random.Generator | None = None) -> WindowObservation:
    """One window with ``spec.shift`` leading noise samples and a tail-truncated pulse.

    ``rng`` defaults to a generator seeded from ``noise.seed``.
    """
    pulse = np.asarray(pulse, dtype=float)
    h = spec.window_len
    if len(pulse) != h:
        raise ParameterError(f"window length {h} must equal pulse length {len(pulse)}")
    if rng is None:
        rng = np.random.default_rng(noise.seed)
    samples = noise.sigma * rng.standard_normal(h)
    if spec.label is Label.PULSE:
        amp = snr_amplitude(spec.snr_db, pulse, noise.sigma)
        samples[spec.shift:] += amp * pulse[: h - spec.shift]
    return WindowObservation(samples, spec)


def _check_shifts(shifts: Sequence[int], h: int) -> tuple:
    shifts = tuple(int(s) for s in shifts)
    if not shifts:
        raise ParameterError("shifts must be non-empty")
    if any(not 0 <= s < h for s in shifts):
        raise ParameterError(f"every shift must lie in [0, {h}), got {shifts}")
    return shifts


def cut_group(stream: np.ndarray, shifts: Sequence[int], window_len: int) -> np.ndarray:
    """Cut the aligned windows of each stream; ``stream[..., max(shifts)]`` is the pulse start.

    Returns shape ``stream.shape[:-1] + (len(shifts), window_len)``.
    """
    top = max(shifts)
    if stream.shape[-1] < window_len + top:
        raise ParameterError(
            f"stream of {stream.shape[-1]} samples is shorter than {window_len + top}")
    return np.stack([stream[..., top - d: top - d + window_len] for d in shifts], axis=-2)


def _trial_stream(pulse: np.ndarray, top: int, amp: float, sigma: float,
                  rng: np.random.Generator) -> np.ndarray:
    h = len(pulse)
    stream = sigma * rng.standard_normal(h + top)
    if amp:
        stream[top: top + h] += amp * pulse
    return stream


def generate_groups(pulse, shifts: Sequence[int], snr_db, sigma: float, seed: int,
                    domain: int, indices, prefix: Sequence[int] = ()) -> np.ndarray:
    """Aligned window groups for a batch of trials.

    ``snr_db`` is a scalar, an array with one value per index, or ``None``
    for noise-only groups.  Trial ``indices[i]`` draws from its own
    substream, so any subset of trials can be regenerated independently.
    Returns an array of shape ``(len(indices), len(shifts), H)``.
    """
    pulse = np.asarray(pulse, dtype=float)
    h = len(pulse)
    shifts = _check_shifts(shifts, h)
    top = max(shifts)
    indices = np.asarray(indices, dtype=np.int64)
    if snr_db is None:
        amps = np.zeros(len(indices))
    else:
        snrs = np.broadcast_to(np.asarray(snr_db, dtype=float), indices.shape)
        amps = np.array([snr_amplitude(s, pulse, sigma) for s in snrs]) if len(snrs) else np.zeros(0)
    streams = np.empty((len(indices), h + top))
    for row, (idx, amp) in enumerate(zip(indices, amps)):
        streams[row] = _trial_stream(pulse, top, amp, sigma, observation_rng(seed, domain, *prefix, idx))
    return cut_group(streams, shifts, h)


@dataclass
class Dataset:
    """Window observations stored row-wise, one row per (trial, shift).

    Behaves as a read-only sequence of :class:`WindowObservation`.
    """

    pulse: PulseSpec
    noise: NoiseSpec
    shifts: tuple
    samples: np.ndarray          # (rows, H)
    trial: np.ndarray            # (rows,) trial index, unique across both classes
    shift: np.ndarray            # (rows,)
    snr_db: np.ndarray           # (rows,) NaN for noise-only rows
    is_pulse: np.ndarray         # (rows,) bool
    partition: np.ndarray        # (rows,) str, one of PARTITIONS
    snr_grid: tuple = DEFAULT_SNR_GRID
    extra: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.trial)

    def __getitem__(self, i: int) -> WindowObservation:
        label = Label.PULSE if self.is_pulse[i] else Label.NOISE_ONLY
        snr = float(self.snr_db[i]) if self.is_pulse[i] else float("-inf")
        spec = WindowSpec(self.pulse.n_samples, int(self.shift[i]), snr, label)
        return WindowObservation(self.samples[i], spec)

    def __iter__(self) -> Iterator[WindowObservation]:
        return (self[i] for i in range(len(self)))

    @property
    def window_len(self) -> int:
        return self.pulse.n_samples

    def select(self, *, shift=None, is_pulse=None, partition=None) -> np.ndarray:
        """Boolean row mask for the given filters."""
        mask = np.ones(len(self), dtype=bool)
        if shift is not None:
            mask &= self.shift == shift
        if is_pulse is not None:
            mask &= self.is_pulse == is_pulse
        if partition is not None:
            parts = (partition,) if isinstance(partition, str) else tuple(partition)
            mask &= np.isin(self.partition, parts)
        return mask

    def groups(self, *, is_pulse: bool, partition) -> tuple:
        """Aligned groups ``(trials, M, H)`` and their trial ids / SNRs."""
        mask = self.select(is_pulse=is_pulse, partition=partition)
        trials = np.unique(self.trial[mask])
        m = len(self.shifts)
        rows = np.flatnonzero(mask)
        order = np.lexsort((self.shift[rows], self.trial[rows]))
        rows = rows[order]
        if len(rows) != len(trials) * m:
            raise ParameterError("dataset groups are incomplete")
        samples = self.samples[rows].reshape(len(trials), m, -1)
        snr = self.snr_db[rows].reshape(len(trials), m)[:, 0]
        shift_order = np.argsort(self.shifts)
        # rows were sorted by shift value; restore the bank's shift order
        inv = np.empty_like(shift_order)
        inv[shift_order] = np.arange(m)
        return samples[:, inv, :], trials, snr

    def partition_counts(self) -> dict:
        out = {}
        for part in PARTITIONS:
            for lab, flag in (("pulse", True), ("noise_only", False)):
                mask = self.select(is_pulse=flag, partition=part)
                out[f"{part}/{lab}"] = int(len(np.unique(self.trial[mask])))
        return out

    # -- persistence -------------------------------------------------------
    def metadata(self) -> dict:
        return {
            "schema": DATASET_SCHEMA,
            "pulse": asdict(self.pulse),
            "noise": asdict(self.noise),
            "seed": int(self.noise.seed),
            "shifts": list(self.shifts),
            "snr_grid": list(self.snr_grid),
            "window_len": self.window_len,
            "rows": len(self),
            "dtype": "<f8",
            "layout": "row-major [observation x sample]",
            "observations": {
                "trial": self.trial.tolist(),
                "shift": self.shift.tolist(),
                "snr_db": [None if np.isnan(s) else float(s) for s in self.snr_db],
                "label": [Label.PULSE.value if p else Label.NOISE_ONLY.value for p in self.is_pulse],
                "partition": self.partition.tolist(),
            },
            **self.extra,
        }

    def save(self, path) -> tuple:
        """Write ``<path>.bin`` and ``<path>.json``; returns both paths."""
        path = Path(path)
        bin_path = path.with_suffix(".bin")
        json_path = path.with_suffix(".json")
        np.ascontiguousarray(self.samples, dtype="<f8").tofile(bin_path)
        meta = self.metadata()
        meta["binary"] = bin_path.name
        json_path.write_text(json.dumps(meta, indent=1), encoding="utf-8")
        return bin_path, json_path

    @classmethod
    def load(cls, path) -> "Dataset":
        path = Path(path)
        json_path = path.with_suffix(".json")
        meta = json.loads(json_path.read_text(encoding="utf-8"))
        if meta.get("schema") != DATASET_SCHEMA:
            raise ParameterError(f"{json_path}: unsupported schema {meta.get('schema')!r}")
        bin_path = json_path.with_name(meta.get("binary", path.with_suffix(".bin").name))
        h = int(meta["window_len"])
        samples = np.fromfile(bin_path, dtype="<f8")
        if samples.size != meta["rows"] * h:
            raise ParameterError(f"{bin_path}: expected {meta['rows'] * h} values, found {samples.size}")
        obs = meta["observations"]
        return cls(
            pulse=PulseSpec(**meta["pulse"]),
            noise=NoiseSpec(**meta["noise"]),
            shifts=tuple(meta["shifts"]),
            samples=samples.reshape(meta["rows"], h),
            trial=np.asarray(obs["trial"], dtype=np.int64),
            shift=np.asarray(obs["shift"], dtype=np.int64),
            snr_db=np.array([np.nan if s is None else s for s in obs["snr_db"]], dtype=float),
            is_pulse=np.asarray([lab == Label.PULSE.value for lab in obs["label"]]),
            partition=np.asarray(obs["partition"]),
            snr_grid=tuple(meta["snr_grid"]),
        )


def assign_partitions(n: int, fractions=DEFAULT_FRACTIONS, rng=None) -> np.ndarray:
    """Split ``n`` items into PARTITIONS by ``fractions`` after a seeded shuffle."""
    fractions = np.asarray(fractions, dtype=float)
    if len(fractions) != len(PARTITIONS) or np.any(fractions < 0) or not np.isclose(fractions.sum(), 1):
        raise ParameterError(f"fractions must be {len(PARTITIONS)} non-negative values summing to 1")
    bounds = np.round(np.cumsum(fractions) * n).astype(int)
    labels = np.empty(n, dtype=object)
    start = 0
    for name, stop in zip(PARTITIONS, bounds):
        labels[start:stop] = name
        start = stop
    perm = (rng or np.random.default_rng(0)).permutation(n)
    return labels[perm].astype(str)


def build_dataset(pulse_spec: PulseSpec, shifts: Sequence[int] = DEFAULT_SHIFTS,
                  snr_grid: Sequence[float] = DEFAULT_SNR_GRID, n_pulse: int = 1000,
                  n_noise: int = 1000, seed: int = 0, sigma: float = 1.0,
                  fractions=DEFAULT_FRACTIONS) -> Dataset:
    """Aligned pulse and noise-only groups for every shift, tagged with partitions.

    Pulse trials take ids ``0..n_pulse-1`` and noise trials the next
    ``n_noise`` ids; each trial's SNR (drawn uniformly from ``snr_grid``)
    and noise come from its own substream.
    """
    if n_pulse < 0 or n_noise < 0 or n_pulse + n_noise == 0:
        raise ParameterError(f"counts must be non-negative and not both zero, got ({n_pulse}, {n_noise})")
    snr_grid = tuple(float(s) for s in snr_grid)
    if n_pulse and not snr_grid:
        raise ParameterError("snr_grid is empty but pulse observations were requested")
    noise = NoiseSpec(sigma, seed)
    pulse = generate_chirp(pulse_spec)
    h = pulse_spec.n_samples
    shifts = _check_shifts(shifts, h)
    m = len(shifts)
    top = max(shifts)

    n_trials = n_pulse + n_noise
    samples = np.empty((n_trials * m, h))
    snr = np.full(n_trials, np.nan)
    for t in range(n_trials):
        rng = observation_rng(seed, Domain.DATASET, t)
        amp = 0.0
        if t < n_pulse:
            snr[t] = snr_grid[rng.integers(len(snr_grid))]
            amp = snr_amplitude(snr[t], pulse, sigma)
        stream = _trial_stream(pulse, top, amp, sigma, rng)
        samples[t * m:(t + 1) * m] = cut_group(stream, shifts, h)

    part_rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), 0xD5])))
    parts = np.concatenate([assign_partitions(n_pulse, fractions, part_rng),
                            assign_partitions(n_noise, fractions, part_rng)])
    trials = np.arange(n_trials)
    return Dataset(
        pulse=pulse_spec,
        noise=noise,
        shifts=shifts,
        samples=samples,
        trial=np.repeat(trials, m),
        shift=np.tile(np.asarray(shifts), n_trials),
        snr_db=np.repeat(snr, m),
        is_pulse=np.repeat(trials < n_pulse, m),
        partition=np.repeat(parts, m),
        snr_grid=snr_grid,
    )
