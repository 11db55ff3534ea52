"""Evoked-response measurements, variability, correlations, paired tests,
and session report aggregation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .decoder import RESULT_SUCCESS
from .special import normal_cdf, student_t_two_tailed_p

PEAK_WINDOW_MS = (200.0, 500.0)
MEASUREMENT_CHANNEL = "Cz"


@dataclass(frozen=True)
class ErpMeasurement:
    peak_amp_uV: float
    peak_latency_ms: float
    channel: str = MEASUREMENT_CHANNEL
    window_ms: tuple[float, float] = PEAK_WINDOW_MS


def measure_p300(waveform: np.ndarray, fs_hz: float,
                 t0_ms: float = -100.0) -> ErpMeasurement:
    """Peak of the waveform over [200, 500] ms; ties break to the earliest latency."""
    wave = np.asarray(waveform, dtype=float)
    times = t0_ms + np.arange(len(wave)) * 1000.0 / fs_hz
    mask = (times >= PEAK_WINDOW_MS[0]) & (times <= PEAK_WINDOW_MS[1])
    if not mask.any():
        raise ValueError("waveform does not cover the 200-500 ms search window")
    seg = wave[mask]
    seg_t = times[mask]
    idx = int(np.argmax(seg))  # first maximum = earliest tie
    return ErpMeasurement(peak_amp_uV=float(seg[idx]), peak_latency_ms=float(seg_t[idx]))


def coefficient_of_variation(values) -> float:
    """Population standard deviation over |mean|; NaN when the mean is ~0.

    The absolute-mean convention keeps CV non-negative for all-negative
    series.
    """
    x = np.asarray(values, dtype=float)
    if x.size == 0:
        raise ValueError("need at least one value")
    mean = x.mean()
    sd = x.std()
    if abs(mean) < 1e-12 * max(sd, 1e-12):
        return float("nan")
    return float(sd / abs(mean))


@dataclass(frozen=True)
class PearsonResult:
    r: float
    r2: float
    p: float
    n: int


def pearson(xs, ys) -> PearsonResult:
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("xs and ys must be equal-length 1-D sequences")
    n = len(x)
    if n < 3:
        raise ValueError("need at least 3 points")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValueError("inputs must be finite")
    xc = x - x.mean()
    yc = y - y.mean()
    denom = math.sqrt(float(xc @ xc) * float(yc @ yc))
    if denom == 0.0:
        raise ValueError("zero-variance input")
    r = float(xc @ yc) / denom
    r = max(-1.0, min(1.0, r))
    if abs(r) == 1.0:
        p = 0.0
    else:
        t = r * math.sqrt((n - 2) / (1.0 - r * r))
        p = student_t_two_tailed_p(t, n - 2)
    return PearsonResult(r=r, r2=r * r, p=p, n=n)


def _signed_ranks(diffs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Average ranks of |d| (ties shared) and the signs, zeros removed."""
    d = diffs[diffs != 0.0]
    order = np.argsort(np.abs(d), kind="stable")
    ranks = np.empty(len(d))
    sorted_abs = np.abs(d)[order]
    i = 0
    while i < len(d):
        j = i
        while j + 1 < len(d) and sorted_abs[j + 1] == sorted_abs[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks, np.sign(d)


def wilcoxon_signed_rank(a, b, alternative: str = "two-sided") -> tuple[float, float]:
    """Signed-rank W (sum of positive ranks) and its p-value.

    Exact null by sign enumeration for n <= 12 non-zero differences, normal
    approximation with tie correction above. All-zero differences leave the
    test undefined (NaN, NaN).
    """
    if alternative not in ("two-sided", "greater", "less"):
        raise ValueError("alternative must be two-sided, greater or less")
    d = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    ranks, signs = _signed_ranks(d)
    n = len(ranks)
    if n == 0:
        return float("nan"), float("nan")
    w = float(np.sum(ranks[signs > 0]))

    if n <= 12:
        totals = np.zeros(1)
        for r in ranks:
            totals = np.concatenate([totals, totals + r])  # all 2^n sign patterns
        p_le = np.mean(totals <= w + 1e-12)
        p_ge = np.mean(totals >= w - 1e-12)
    else:
        mean = n * (n + 1) / 4.0
        # tie correction subtracts sum(t^3 - t)/48 from the null variance
        _, counts = np.unique(ranks, return_counts=True)
        var = n * (n + 1) * (2 * n + 1) / 24.0 - np.sum(counts ** 3 - counts) / 48.0
        sd = math.sqrt(var)
        p_le = normal_cdf((w + 0.5 - mean) / sd)
        p_ge = 1.0 - normal_cdf((w - 0.5 - mean) / sd)

    if alternative == "greater":
        return w, float(p_ge)
    if alternative == "less":
        return w, float(p_le)
    return w, float(min(1.0, 2.0 * min(p_le, p_ge)))


@dataclass(frozen=True)
class PairedTests:
    t_stat: float
    t_p: float
    wilcoxon_w: float
    wilcoxon_p: float
    diff_skew: float
    diff_kurtosis_excess: float
    normality_ok: bool


def paired_tests(a, b) -> PairedTests:
    """Paired t and Wilcoxon signed-rank on a - b, plus a normality screen.

    The screen is a skew/kurtosis heuristic recorded for the caller; test
    selection is left to the caller.
    """
    x = np.asarray(a, dtype=float)
    y = np.asarray(b, dtype=float)
    if x.shape != y.shape or x.ndim != 1 or len(x) < 5:
        raise ValueError("need equal-length 1-D samples with n >= 5")
    d = x - y
    n = len(d)
    sd = d.std(ddof=1)
    if sd == 0.0:
        t_stat, t_p = 0.0, 1.0
    else:
        t_stat = float(d.mean() / (sd / math.sqrt(n)))
        t_p = student_t_two_tailed_p(t_stat, n - 1)
    w, w_p = wilcoxon_signed_rank(x, y)

    centered = d - d.mean()
    s_pop = d.std()
    if s_pop == 0.0:
        skew, kurt = 0.0, 0.0
    else:
        skew = float(np.mean(centered ** 3) / s_pop ** 3)
        kurt = float(np.mean(centered ** 4) / s_pop ** 4 - 3.0)
    return PairedTests(t_stat=t_stat, t_p=float(t_p), wilcoxon_w=w, wilcoxon_p=w_p,
                       diff_skew=skew, diff_kurtosis_excess=kurt,
                       normality_ok=abs(skew) < 1.0 and abs(kurt) < 2.0)


@dataclass(frozen=True)
class SessionReport:
    condition: str
    day: int
    n_trials: int
    n_success: int
    success_rate_pct: float
    attempts_mean: float | None
    attempts_sd: float | None
    amp_mean_uV: float
    amp_sd_uV: float
    amp_cv: float
    latency_mean_ms: float
    latency_sd_ms: float
    latency_cv: float
    acc_pct: float | None = None
    fpr_pct: float | None = None
    retrospective: dict = field(default_factory=dict)
    config_hash: str = ""

    def to_dict(self) -> dict:
        return {
            "condition": self.condition,
            "day": self.day,
            "n_trials": self.n_trials,
            "n_success": self.n_success,
            "success_rate_pct": self.success_rate_pct,
            "attempts_mean": self.attempts_mean,
            "attempts_sd": self.attempts_sd,
            "amp_mean_uV": self.amp_mean_uV,
            "amp_sd_uV": self.amp_sd_uV,
            "amp_cv": self.amp_cv,
            "latency_mean_ms": self.latency_mean_ms,
            "latency_sd_ms": self.latency_sd_ms,
            "latency_cv": self.latency_cv,
            "acc_pct": self.acc_pct,
            "fpr_pct": self.fpr_pct,
            "retrospective": self.retrospective,
            "config_hash": self.config_hash,
        }


def _nan_to_none(x: float) -> float | None:
    return None if (isinstance(x, float) and math.isnan(x)) else x


def aggregate_report(condition: str, day: int, outcomes,
                     measurements, continuous_traces=(),
                     retrospective: dict | None = None,
                     config_hash: str = "") -> SessionReport:
    """Roll per-run outcomes and evoked measurements into one report.

    Attempts are aggregated over successful runs only and reported absent
    when there are none. CVs use the population convention across the
    per-run measurements.
    """
    outcomes = list(outcomes)
    measurements = list(measurements)
    if not outcomes:
        raise ValueError("need at least one run outcome")
    n = len(outcomes)
    successes = [o for o in outcomes if o.result == RESULT_SUCCESS]
    attempts = np.array([o.attempts for o in successes], dtype=float)
    amps = np.array([m.peak_amp_uV for m in measurements])
    lats = np.array([m.peak_latency_ms for m in measurements])

    acc = fpr = None
    traces = list(continuous_traces)
    if traces:
        windows = sum(t.n_windows for t in traces)
        hits = sum(t.outcomes.count("hit") for t in traces)
        fps = sum(t.outcomes.count("false_positive") for t in traces)
        acc = 100.0 * hits / windows
        fpr = 100.0 * fps / windows

    return SessionReport(
        condition=condition,
        day=day,
        n_trials=n,
        n_success=len(successes),
        success_rate_pct=100.0 * len(successes) / n,
        attempts_mean=float(attempts.mean()) if len(attempts) else None,
        attempts_sd=float(attempts.std()) if len(attempts) else None,
        amp_mean_uV=float(amps.mean()) if len(amps) else float("nan"),
        amp_sd_uV=float(amps.std()) if len(amps) else float("nan"),
        amp_cv=coefficient_of_variation(amps) if len(amps) else float("nan"),
        latency_mean_ms=float(lats.mean()) if len(lats) else float("nan"),
        latency_sd_ms=float(lats.std()) if len(lats) else float("nan"),
        latency_cv=coefficient_of_variation(lats) if len(lats) else float("nan"),
        acc_pct=acc,
        fpr_pct=fpr,
        retrospective=retrospective or {},
        config_hash=config_hash,
    )
