"""Monte Carlo detection rates, projection correlations and operation counts."""
from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import stats

from . import _jsonio
from .detector import IntegrationPipeline, ShiftBank, calibrate_threshold
from .errors import CalibrationError, DegenerateInputError, InvariantError, ParameterError
from .signal import DEFAULT_SNR_GRID, Domain, PulseSpec, generate_chirp, generate_groups
from .wavelet import WaveletConfig, op_count

RATES_SCHEMA = "wavedet-rates/1"
CURVE_HEADER = ("scheme", "pfa_target", "neg_log10_pfa", "mean_pd", "n_noise", "n_pulse_per_snr", "seed")
GROUP_CHUNK = 400


def clopper_pearson(k: int, n: int, level: float = 0.95) -> tuple:
    """Exact two-sided binomial interval for ``k`` successes in ``n`` trials."""
    if n <= 0 or not 0 <= k <= n:
        raise ParameterError(f"need 0 <= k <= n and n > 0, got k={k}, n={n}")
    a = 1 - level
    lo = 0.0 if k == 0 else float(stats.beta.ppf(a / 2, k, n - k + 1))
    hi = 1.0 if k == n else float(stats.beta.ppf(1 - a / 2, k + 1, n - k))
    return lo, hi


@dataclass
class RatesEstimate:
    p_d: float
    p_fa: float
    trials_pulse: int
    trials_noise: int
    ci_pd: tuple
    ci_pfa: tuple
    snr_db: float = 0.0
    threshold: float = 0.0
    seed: int = 0

    def __post_init__(self):
        for name, p, (lo, hi) in (("p_d", self.p_d, self.ci_pd), ("p_fa", self.p_fa, self.ci_pfa)):
            if not 0 <= lo <= p <= hi <= 1:
                raise InvariantError(f"{name}={p} outside its interval [{lo}, {hi}]")

    def to_dict(self) -> dict:
        return {
            "schema": RATES_SCHEMA,
            "p_d": self.p_d, "p_fa": self.p_fa,
            "trials_pulse": self.trials_pulse, "trials_noise": self.trials_noise,
            "ci_95": {"p_d": list(self.ci_pd), "p_fa": list(self.ci_pfa)},
            "snr_db": self.snr_db, "threshold": self.threshold, "seed": self.seed,
        }

    def save(self, path) -> None:
        Path(path).write_text(_jsonio.dumps(self.to_dict()), encoding="utf-8")


@dataclass
class CorrelationMatrix:
    labels: list
    entries: np.ndarray

    def check(self) -> None:
        c = self.entries
        m = len(self.labels)
        if c.shape != (m, m):
            raise InvariantError(f"correlation matrix shape {c.shape} does not match {m} labels")
        if np.abs(c - c.T).max() > 1e-12:
            raise InvariantError("correlation matrix is not symmetric")
        if np.abs(np.diag(c) - 1).max() > 1e-12:
            raise InvariantError("correlation matrix diagonal is not 1")
        if c.min() < -1 or c.max() > 1:
            raise InvariantError("correlation entries outside [-1, 1]")
        if np.linalg.eigvalsh(c).min() < -1e-9:
            raise InvariantError("correlation matrix is not positive semidefinite")

    def max_offdiagonal(self) -> tuple:
        c = self.entries.copy()
        np.fill_diagonal(c, -np.inf)
        i, j = np.unravel_index(np.argmax(c), c.shape)
        return (self.labels[min(i, j)], self.labels[max(i, j)]), float(self.entries[i, j])

    def save_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(self.labels)
            for row in self.entries:
                w.writerow([format(v, ".10g") for v in row])

    @classmethod
    def load_csv(cls, path) -> "CorrelationMatrix":
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        return cls(rows[0], np.array([[float(v) for v in r] for r in rows[1:]]))


@dataclass
class PerformanceCurve:
    """Mean P_d over an SNR grid versus target P_fa, one series per scheme.

    ``noise_scores`` and ``pulse_scores`` keep the frozen samples the curve
    was computed from so other operating points can be read off later.
    """

    points: list
    snr_grid: tuple
    n_noise: int = 0
    n_pulse_per_snr: int = 0
    seed: int = 0
    noise_scores: dict = field(default_factory=dict, repr=False)
    pulse_scores: dict = field(default_factory=dict, repr=False)

    @property
    def schemes(self) -> list:
        seen = []
        for p in self.points:
            if p[3] not in seen:
                seen.append(p[3])
        return seen

    def series(self, scheme: str) -> list:
        return sorted((p for p in self.points if p[3] == scheme), key=lambda p: p[1])

    def mean_pd(self, scheme: str, pfa_target: float) -> float:
        for p in self.points:
            if p[3] == scheme and math.isclose(p[0], pfa_target):
                return p[2]
        raise KeyError((scheme, pfa_target))

    def check_monotone(self) -> None:
        for scheme in self.schemes:
            pd = [p[2] for p in self.series(scheme)]
            if any(b > a for a, b in zip(pd, pd[1:])):
                raise InvariantError(f"mean P_d of {scheme} increases with -log10(P_fa)")

    def pd_at_threshold(self, scheme: str, threshold: float) -> float:
        return float(np.mean([np.mean(s > threshold) for s in self.pulse_scores[scheme]]))

    def pfa_for_mean_pd(self, scheme: str, mean_pd: float) -> float:
        """Smallest empirical P_fa at which ``scheme`` reaches ``mean_pd``.

        The threshold is swept over the frozen noise-score order statistics;
        ``nan`` means the target is not reached even with every noise score
        above threshold.
        """
        noise = np.sort(self.noise_scores[scheme])
        n = len(noise)
        # count(noise > noise[n-1-k]) <= k; bisect on k since mean P_d grows with k
        lo, hi = 0, n - 1
        if self.pd_at_threshold(scheme, noise[n - 1 - hi]) < mean_pd:
            return float("nan")
        while lo < hi:
            mid = (lo + hi) // 2
            if self.pd_at_threshold(scheme, noise[n - 1 - mid]) >= mean_pd:
                hi = mid
            else:
                lo = mid + 1
        t = noise[n - 1 - lo]
        return float(np.mean(noise > t))

    def to_rows(self) -> list:
        return [(p[3], p[0], p[1], p[2], self.n_noise, self.n_pulse_per_snr, self.seed)
                for p in self.points]

    def save_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(CURVE_HEADER)
            for scheme, target, x, pd, nn, npp, seed in self.to_rows():
                w.writerow([scheme, format(target, ".10g"), format(x, ".10g"), format(pd, ".10g"), nn, npp, seed])


# -- Monte Carlo plumbing ----------------------------------------------------

def _margins_job(args) -> np.ndarray:
    bank, pulse, snr_db, sigma, seed, domain, indices, prefix = args
    groups = generate_groups(pulse, bank.shifts, snr_db, sigma, seed, domain, indices, prefix)
    return bank.margins(groups)


def simulate_margins(bank: ShiftBank, pulse_spec: PulseSpec, snr_db: float | None, n: int, seed: int,
                     domain: int, prefix: Sequence[int] = (), sigma: float = 1.0,
                     workers: int = 1) -> np.ndarray:
    """Bank margins ``(n, M)`` of fresh groups; results do not depend on ``workers``."""
    pulse = generate_chirp(pulse_spec)
    jobs = [(bank, pulse, snr_db, sigma, seed, int(domain), np.arange(s, min(n, s + GROUP_CHUNK)), tuple(prefix))
            for s in range(0, n, GROUP_CHUNK)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_margins_job, jobs))
    else:
        parts = [_margins_job(j) for j in jobs]
    if not parts:
        return np.zeros((0, bank.size))
    return np.concatenate(parts)


def estimate_rates(pipeline: IntegrationPipeline, pulse_spec: PulseSpec, snr_db: float, n_pulse: int,
                   n_noise: int, seed: int, sigma: float = 1.0, workers: int = 1) -> RatesEstimate:
    """Detection and false-alarm fractions of ``pipeline`` at its current threshold."""
    if n_pulse <= 0 or n_noise <= 0:
        raise ParameterError(f"counts must be positive, got n_pulse={n_pulse}, n_noise={n_noise}")
    bank = pipeline.bank
    noise = pipeline.scores_from_margins(
        simulate_margins(bank, pulse_spec, None, n_noise, seed, Domain.EVAL_NOISE, sigma=sigma, workers=workers))
    pulse = pipeline.scores_from_margins(
        simulate_margins(bank, pulse_spec, snr_db, n_pulse, seed, Domain.EVAL_PULSE, (0,), sigma, workers))
    k_d = int(np.sum(pulse > pipeline.threshold))
    k_fa = int(np.sum(noise > pipeline.threshold))
    return RatesEstimate(k_d / n_pulse, k_fa / n_noise, n_pulse, n_noise,
                         clopper_pearson(k_d, n_pulse), clopper_pearson(k_fa, n_noise),
                         float(snr_db), float(pipeline.threshold), int(seed))


def correlation_matrix(margin_table, labels: Sequence[str]) -> CorrelationMatrix:
    """Pearson correlation between the columns of an ``(n, M)`` table."""
    x = np.asarray(margin_table, dtype=float)
    labels = [str(lab) for lab in labels]
    if x.ndim != 2 or x.shape[1] != len(labels):
        raise ParameterError(f"table shape {x.shape} does not match {len(labels)} labels")
    if x.shape[0] < 2:
        raise ParameterError("need at least two observations")
    centered = x - x.mean(axis=0)
    norms = np.sqrt(np.sum(centered ** 2, axis=0))
    for lab, nrm in zip(labels, norms):
        if nrm == 0:
            raise DegenerateInputError(f"column {lab!r} is constant")
    z = centered / norms
    c = z.T @ z
    c = np.clip(0.5 * (c + c.T), -1.0, 1.0)
    np.fill_diagonal(c, 1.0)
    out = CorrelationMatrix(labels, c)
    out.check()
    return out


def performance_curve(pipelines: Sequence[IntegrationPipeline], pulse_spec: PulseSpec,
                      snr_grid: Sequence[float] = DEFAULT_SNR_GRID,
                      pfa_targets: Sequence[float] = (1e-1, 1e-2, 1e-3), n_noise: int = 100_000,
                      n_pulse_per_snr: int = 500, seed: int = 0, sigma: float = 1.0,
                      workers: int = 1) -> PerformanceCurve:
    """Mean P_d over ``snr_grid`` at each target P_fa for every scheme.

    One noise-score sample and one pulse-score sample per SNR are drawn and
    frozen; each target re-thresholds the same scores.  All pipelines must
    share one bank so margins are computed once.
    """
    if not pipelines:
        raise ParameterError("no pipelines given")
    bank = pipelines[0].bank
    if any(p.bank is not bank for p in pipelines):
        raise ParameterError("all pipelines must share the same bank")
    pfa_targets = sorted({float(t) for t in pfa_targets}, reverse=True)
    need = math.ceil(10 / min(pfa_targets) - 1e-9)
    if n_noise < need:
        raise CalibrationError(need, n_noise, min(pfa_targets))
    snr_grid = tuple(float(s) for s in snr_grid)
    noise_m = simulate_margins(bank, pulse_spec, None, n_noise, seed, Domain.EVAL_NOISE,
                               sigma=sigma, workers=workers)
    pulse_m = [simulate_margins(bank, pulse_spec, snr, n_pulse_per_snr, seed, Domain.EVAL_PULSE, (k,),
                                sigma, workers)
               for k, snr in enumerate(snr_grid)]
    points = []
    curve = PerformanceCurve(points, snr_grid, n_noise, n_pulse_per_snr, seed)
    for p in pipelines:
        curve.noise_scores[p.name] = p.scores_from_margins(noise_m)
        curve.pulse_scores[p.name] = [p.scores_from_margins(m) for m in pulse_m]
        for target in pfa_targets:
            t = calibrate_threshold(None, curve.noise_scores[p.name], target)
            points.append((target, -math.log10(target), curve.pd_at_threshold(p.name, t), p.name))
    curve.check_monotone()
    return curve


def correlation_study(bank: ShiftBank, pulse_spec: PulseSpec, snr_db: float = 0.0, n: int = 10_000,
                      seed: int = 0, sigma: float = 1.0, workers: int = 1) -> CorrelationMatrix:
    """Correlation of bank margins over ``n`` pulse groups at one SNR."""
    margins = simulate_margins(bank, pulse_spec, snr_db, n, seed, Domain.CORRELATION, sigma=sigma,
                               workers=workers)
    return correlation_matrix(margins, [f"{d}-shift" for d in bank.shifts])


# -- operation counts --------------------------------------------------------

@dataclass
class ComplexityRow:
    window_len: int
    wavelet_ops: int
    bank_ops: int
    integrator_ops: int

    @property
    def ratio(self) -> float:
        rest = self.bank_ops + self.integrator_ops
        return self.wavelet_ops / rest if rest else math.inf


def integrator_ops(pipeline: IntegrationPipeline | None) -> int:
    """Multiply-adds of one fusion-SVM evaluation: one dot product of length M per support vector."""
    if pipeline is None or pipeline.integrator is None:
        return 0
    return pipeline.integrator.n_support * pipeline.integrator.feature_dim


def complexity_report(wavelet_cfg: WaveletConfig, window_lens: Sequence[int], bank: ShiftBank | None = None,
                      pipeline: IntegrationPipeline | None = None, n_shifts: int | None = None,
                      check: bool = True) -> list:
    """Counted multiply-adds per stage for each window length.

    The wavelet count is per window (one transform).  The bank count is
    ``M * S`` per group through the explicit linear weights; ``S`` scales
    with the window length.  With ``check`` the wavelet stage must dominate.
    """
    rows = []
    m = bank.size if bank is not None else (n_shifts or 1)
    scale = bank.scale if bank is not None else wavelet_cfg.levels
    for h in window_lens:
        w_ops = op_count(int(h), wavelet_cfg)
        s = int(h) >> scale
        if bank is not None and int(h) == bank.feature_dim << bank.scale:
            weights, _ = bank.weights()
            b_ops = int(weights.size)
        else:
            b_ops = m * s
        rows.append(ComplexityRow(int(h), w_ops, b_ops, integrator_ops(pipeline)))
    if check:
        for r in rows:
            if r.wavelet_ops <= r.bank_ops + r.integrator_ops:
                raise InvariantError(f"wavelet stage does not dominate at H={r.window_len}")
    return rows


def format_complexity(rows: Sequence[ComplexityRow], wavelet_cfg: WaveletConfig) -> str:
    lines = [f"# multiply-adds per stage (db{wavelet_cfg.order}, W={wavelet_cfg.filter_length}, "
             f"K={wavelet_cfg.levels})",
             f"{'H':>6} {'wavelet':>10} {'wavelet/H':>10} {'bank':>8} {'integrator':>11} {'ratio':>8}"]
    for r in rows:
        lines.append(f"{r.window_len:>6} {r.wavelet_ops:>10} {r.wavelet_ops / r.window_len:>10.4f} "
                     f"{r.bank_ops:>8} {r.integrator_ops:>11} {r.ratio:>8.2f}")
    return "\n".join(lines) + "\n"


def load_rates(path) -> dict:
    d = json.loads(Path(path).read_text(encoding="utf-8"))
    if d.get("schema") != RATES_SCHEMA:
        raise ParameterError(f"unsupported rates schema {d.get('schema')!r}")
    return d
