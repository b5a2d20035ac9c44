"""Age and identity metrics: MAE, bin accuracies, ROC / TMR@FMR, estimation
shift statistics, Student-t intervals and per-group slicing."""

from __future__ import annotations

import csv
import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.special import betaincinv

from .types import AgeGroupBins, default_age_bins

ADULT_AGE = 18.0
DEFAULT_FMR = 1e-4


def _pair(pred, truth):
    p, t = np.asarray(pred, dtype=np.float64).ravel(), np.asarray(truth, dtype=np.float64).ravel()
    if p.size != t.size:
        raise ValueError(f"length mismatch: {p.size} predictions vs {t.size} labels")
    if p.size == 0:
        raise ValueError("empty input")
    return p, t


def mae(pred, truth) -> float:
    p, t = _pair(pred, truth)
    return float(np.abs(p - t).mean())


def age_group_accuracy(pred, truth, bins: AgeGroupBins | None = None) -> float:
    """Fraction of predictions landing in the true age's bin.

    Predictions outside the binned range count as wrong; a true age outside
    it is an error.
    """
    bins = bins or default_age_bins()
    p, t = _pair(pred, truth)
    hits = 0
    for a_hat, a in zip(p, t):
        b = bins.bin_of(a)
        hits += bins.covers(a_hat) and bins.bin_of(a_hat) == b
    return hits / p.size


def minor_adult_accuracy(pred, truth, threshold: float = ADULT_AGE) -> float:
    p, t = _pair(pred, truth)
    return float(np.mean((p >= threshold) == (t >= threshold)))


# ---------------------------------------------------------------------------
# verification

@dataclass(frozen=True, eq=False)
class ScoreSet:
    genuine: np.ndarray
    impostor: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.genuine, dtype=np.float64).ravel()
        i = np.asarray(self.impostor, dtype=np.float64).ravel()
        if g.size == 0 or i.size == 0:
            raise ValueError("genuine and impostor score sets must both be non-empty")
        if not (np.all(np.isfinite(g)) and np.all(np.isfinite(i))):
            raise ValueError("scores must be finite")
        object.__setattr__(self, "genuine", g)
        object.__setattr__(self, "impostor", i)


@dataclass(frozen=True, eq=False)
class RocCurve:
    """Points ordered by decreasing threshold; a pair is accepted when score >= threshold.

    The first point (threshold +inf) accepts nothing, the last (-inf) accepts
    everything.
    """

    thresholds: np.ndarray
    fmr: np.ndarray
    tmr: np.ndarray

    def __len__(self):
        return len(self.thresholds)

    def rows(self) -> list[dict]:
        return [dict(threshold=float(th), fmr=float(f), tmr=float(t))
                for th, f, t in zip(self.thresholds, self.fmr, self.tmr)]


def roc(scores: ScoreSet) -> RocCurve:
    g, i = np.sort(scores.genuine), np.sort(scores.impostor)
    uniq = np.unique(np.concatenate([g, i]))[::-1]
    thr = np.concatenate([[np.inf], uniq, [-np.inf]])
    # count of scores >= thr
    tmr = (g.size - np.searchsorted(g, thr, side="left")) / g.size
    fmr = (i.size - np.searchsorted(i, thr, side="left")) / i.size
    return RocCurve(thr, fmr, tmr)


@dataclass(frozen=True)
class OperatingPoint:
    threshold: float
    fmr: float
    tmr: float
    next_threshold: float | None = None
    next_fmr: float | None = None
    next_tmr: float | None = None


def operating_point(curve: RocCurve, target_fmr: float = DEFAULT_FMR) -> OperatingPoint:
    """Most permissive threshold whose empirical FMR does not exceed the target.

    Also returns the next point along the curve, whose FMR exceeds the target,
    so the quantization of small impostor sets stays visible.
    """
    ok = np.flatnonzero(curve.fmr <= target_fmr)
    k = int(ok[-1])
    nxt = k + 1 if k + 1 < len(curve) else None
    return OperatingPoint(
        float(curve.thresholds[k]), float(curve.fmr[k]), float(curve.tmr[k]),
        *(() if nxt is None else (float(curve.thresholds[nxt]), float(curve.fmr[nxt]), float(curve.tmr[nxt]))),
    )


def tmr_at_fmr(curve: RocCurve, target_fmr: float = DEFAULT_FMR) -> float:
    return operating_point(curve, target_fmr).tmr


def cosine_scores(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    a = a / np.linalg.norm(a, axis=-1, keepdims=True)
    b = b / np.linalg.norm(b, axis=-1, keepdims=True)
    return (a * b).sum(-1)


def build_score_set(original: np.ndarray, processed: np.ndarray, subject_ids: Sequence[str],
                    impostor_ratio: int = 10, seed: int = 0) -> ScoreSet:
    """Genuine: (original, processed) of the same subject. Impostor:
    (original, processed of another subject), ``impostor_ratio`` per genuine
    pair, drawn with a seeded generator."""
    original, processed = np.asarray(original), np.asarray(processed)
    ids = np.asarray(subject_ids)
    n = len(ids)
    if original.shape != processed.shape or original.shape[0] != n:
        raise ValueError("embeddings and subject ids must align")
    genuine = cosine_scores(original, processed)
    rng = np.random.default_rng(seed)
    imp = []
    for k in range(n):
        others = np.flatnonzero(ids != ids[k])
        if others.size == 0:
            continue
        pick = rng.choice(others, size=impostor_ratio, replace=others.size < impostor_ratio)
        imp.append(cosine_scores(original[k][None], processed[pick]))
    if not imp:
        raise ValueError("impostor pairs need at least two distinct subjects")
    return ScoreSet(genuine, np.concatenate(imp))


# ---------------------------------------------------------------------------
# estimation shift and intervals

@dataclass(frozen=True)
class Summary:
    count: int
    mean: float
    std: float

    @classmethod
    def of(cls, x) -> "Summary":
        x = np.asarray(x, dtype=np.float64)
        if x.size == 0:
            return cls(0, math.nan, math.nan)
        return cls(int(x.size), float(x.mean()), float(x.std(ddof=1)) if x.size > 1 else math.nan)


@dataclass(frozen=True, eq=False)
class EstimationShift:
    before: np.ndarray
    after: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.before, dtype=np.float64).ravel()
        a = np.asarray(self.after, dtype=np.float64).ravel()
        if b.size != a.size:
            raise ValueError("before/after lengths differ")
        if b.size == 0:
            raise ValueError("empty input")
        object.__setattr__(self, "before", b)
        object.__setattr__(self, "after", a)

    @property
    def under_mask(self):
        return self.after < self.before

    @property
    def over_mask(self):
        return self.after > self.before


@dataclass(frozen=True)
class ShiftStats:
    before: Summary
    after: Summary
    under: Summary
    over: Summary
    unchanged: int


def shift_stats(shift: EstimationShift) -> ShiftStats:
    """Under-estimation = after < before, over = after > before; both as magnitudes.

    Standard deviations use the n-1 denominator and are NaN below two samples.
    """
    d = shift.after - shift.before
    return ShiftStats(
        Summary.of(shift.before), Summary.of(shift.after),
        Summary.of(-d[shift.under_mask]), Summary.of(d[shift.over_mask]),
        int(np.count_nonzero(d == 0)),
    )


def t_quantile(p: float, df: float) -> float:
    """Student-t inverse CDF via the regularized incomplete beta inverse."""
    if not 0 < p < 1 or df <= 0:
        raise ValueError("need 0 < p < 1 and df > 0")
    if p == 0.5:
        return 0.0
    tail = min(p, 1 - p)
    x = betaincinv(df / 2.0, 0.5, 2.0 * tail)
    t = math.sqrt(df * (1.0 - x) / x)
    return t if p > 0.5 else -t


def t_confidence_interval(samples, level: float = 0.95) -> tuple[float, float, float]:
    x = np.asarray(samples, dtype=np.float64).ravel()
    if x.size < 2:
        raise ValueError("need at least two samples")
    m = float(x.mean())
    margin = t_quantile(0.5 + level / 2.0, x.size - 1) * float(x.std(ddof=1)) / math.sqrt(x.size)
    return m - margin, m + margin, margin


def demographic_slice(records: Iterable[tuple[float, float, str]]) -> dict[str, dict]:
    groups: dict[str, list[tuple[float, float]]] = defaultdict(list)
    for pred, truth, label in records:
        if not label:
            raise ValueError("group labels must be non-empty")
        groups[label].append((pred, truth))
    return {g: {"count": len(v), "mae": mae([p for p, _ in v], [t for _, t in v])}
            for g, v in sorted(groups.items())}


# ---------------------------------------------------------------------------
# reports

@dataclass
class EvalReport:
    metrics: dict[str, float] = field(default_factory=dict)
    groups: dict[str, dict] = field(default_factory=dict)

    def to_csv(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["metric", "value"])
            for k, v in self.metrics.items():
                w.writerow([k, repr(float(v))])
            for g, row in self.groups.items():
                w.writerow([f"group:{g}:count", row["count"]])
                w.writerow([f"group:{g}:mae", repr(float(row["mae"]))])
        return path

    @classmethod
    def from_csv(cls, path) -> "EvalReport":
        rep = cls()
        with Path(path).open(newline="", encoding="utf-8") as fh:
            for row in csv.DictReader(fh):
                key, val = row["metric"], row["value"]
                if key.startswith("group:"):
                    _, g, what = key.split(":", 2)
                    rep.groups.setdefault(g, {})[what] = int(val) if what == "count" else float(val)
                else:
                    rep.metrics[key] = float(val)
        return rep

    def summary(self, title: str = "evaluation") -> str:
        lines = [title, "-" * len(title)]
        lines += [f"{k:<28} {v:.4f}" for k, v in self.metrics.items()]
        if self.groups:
            lines.append("per-group MAE:")
            lines += [f"  {g:<24} n={r['count']:<6} {r['mae']:.3f}" for g, r in self.groups.items()]
        return "\n".join(lines)


def _put_summary(metrics: dict, prefix: str, s: Summary):
    metrics[f"{prefix}_count"] = s.count
    metrics[f"{prefix}_mean"] = s.mean
    metrics[f"{prefix}_std"] = s.std


def age_report(pred, truth, groups: Sequence[str] | None = None, before=None,
               bins: AgeGroupBins | None = None, threshold: float = ADULT_AGE, level: float = 0.95) -> EvalReport:
    p, t = _pair(pred, truth)
    rep = EvalReport()
    rep.metrics["n"] = p.size
    rep.metrics["mae"] = mae(p, t)
    rep.metrics["age_group_accuracy"] = age_group_accuracy(p, t, bins)
    rep.metrics["minor_adult_accuracy"] = minor_adult_accuracy(p, t, threshold)
    if before is not None:
        st = shift_stats(EstimationShift(before, p))
        for name, s in (("before", st.before), ("after", st.after), ("under", st.under), ("over", st.over)):
            _put_summary(rep.metrics, name, s)
        rep.metrics["unchanged_count"] = st.unchanged
        d = p - np.asarray(before, dtype=np.float64)
        for name, mags in (("under", -d[d < 0]), ("over", d[d > 0])):
            if mags.size >= 2:
                lo, hi, m = t_confidence_interval(mags, level)
                rep.metrics[f"{name}_ci_lo"], rep.metrics[f"{name}_ci_hi"], rep.metrics[f"{name}_margin"] = lo, hi, m
    if groups is not None:
        rep.groups = demographic_slice(zip(p, t, groups))
    return rep


def identity_report(scores: ScoreSet, target_fmr: float = DEFAULT_FMR) -> tuple[EvalReport, RocCurve]:
    curve = roc(scores)
    op = operating_point(curve, target_fmr)
    rep = EvalReport()
    rep.metrics.update(n_genuine=scores.genuine.size, n_impostor=scores.impostor.size,
                       target_fmr=target_fmr, tmr=op.tmr, fmr=op.fmr, threshold=op.threshold)
    if op.next_threshold is not None:
        rep.metrics.update(next_tmr=op.next_tmr, next_fmr=op.next_fmr, next_threshold=op.next_threshold)
    return rep, curve
