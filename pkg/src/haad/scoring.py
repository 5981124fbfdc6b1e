"""Anomaly scoring (feature KNN or raw NLL) and ROC/AUC evaluation.

Anomalous clips are the positive class; a higher score means "more anomalous".
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .motion import DatasetManifest, MotionClip, preprocess, read_clip
from .trainer import TrainedModel

SCHEMES = ("knn", "nll")
DEFAULT_K = 3


class ScoringError(ValueError):
    pass


@dataclass(frozen=True)
class FeatureBank:
    vectors: np.ndarray  # N x d

    def __post_init__(self):
        if self.vectors.ndim != 2 or self.vectors.shape[0] < 1:
            raise ScoringError(f"feature bank must be a non-empty N x d matrix, got {self.vectors.shape}")


@dataclass
class ScoreRecord:
    clip_id: str
    label: str
    is_normal: bool
    score: float


@dataclass
class ScoreReport:
    records: list[ScoreRecord] = field(default_factory=list)
    roc: list[tuple[float, float, float]] = field(default_factory=list)  # (threshold, fpr, tpr)
    auc: float | None = None


def knn_score(query_V, bank: FeatureBank | np.ndarray, K: int = DEFAULT_K) -> float:
    """Mean Euclidean distance from ``query_V`` to its K nearest bank rows."""
    vectors = bank.vectors if isinstance(bank, FeatureBank) else np.asarray(bank, dtype=np.float64)
    n = vectors.shape[0]
    if not 1 <= K <= n:
        raise ScoringError(f"K={K} out of range for a feature bank of {n} vectors")
    score, _ = kernels.knn_mean_distance(vectors, query_V, K)
    return float(score)


def _check_clip(clip: MotionClip, model: TrainedModel) -> None:
    if clip.joints != len(model.skeleton) or clip.channels != model.model.channels:
        raise ScoringError(f"clip {clip.id}: J={clip.joints}, Cn={clip.channels} does not match the model "
                           f"(J={len(model.skeleton)}, Cn={model.model.channels})")
    if clip.frames < model.config.M:
        raise ScoringError(f"clip {clip.id}: {clip.frames} frames < M={model.config.M}")


def nll_score(clip: MotionClip, model: TrainedModel) -> float:
    _check_clip(clip, model)
    nll, _ = model.model.evaluate([preprocess(clip)])
    return float(nll[0])


def score_clips(clips: list[MotionClip], model: TrainedModel, scheme: str = "knn",
                K: int = DEFAULT_K) -> np.ndarray:
    if scheme not in SCHEMES:
        raise ScoringError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")
    if scheme == "knn" and not 1 <= K <= model.bank.shape[0]:
        raise ScoringError(f"K={K} out of range for a feature bank of {model.bank.shape[0]} vectors")
    for c in clips:
        _check_clip(c, model)
    if not clips:
        return np.zeros(0)
    nlls, Vs = model.model.evaluate([preprocess(c) for c in clips])
    if scheme == "nll":
        return nlls
    bank = FeatureBank(model.bank)
    return np.array([knn_score(v, bank, K) for v in Vs])


def score_dataset(manifest: DatasetManifest, model: TrainedModel, scheme: str = "knn",
                  K: int = DEFAULT_K) -> ScoreReport:
    """Score every clip in manifest order (scores only; see ``evaluate`` for ROC/AUC)."""
    if list(manifest.skeleton) != list(model.skeleton) or manifest.partition != model.model.partition:
        raise ScoringError("skeleton mismatch: test manifest skeleton/partition differ from the model's")
    clips = [read_clip(d) for d in manifest.clips]
    scores = score_clips(clips, model, scheme, K)
    normal = model.normal_label
    return ScoreReport([ScoreRecord(c.id, c.label, c.label == normal, float(s))
                        for c, s in zip(clips, scores)])


def roc_auc(records) -> tuple[float, list[tuple[float, float, float]]]:
    """Trapezoidal AUC over a descending threshold sweep, plus ROC points.

    Points are (threshold, fpr, tpr); the first is (inf, 0, 0).  Tied scores
    move the curve diagonally, which gives ties half credit.
    """
    scores = np.array([r.score for r in records], dtype=np.float64)
    pos = np.array([not r.is_normal for r in records], dtype=bool)
    n_pos, n_neg = int(pos.sum()), int((~pos).sum())
    if n_pos == 0 or n_neg == 0:
        raise ScoringError("degenerate labels: need at least one normal and one anomalous clip")
    order = np.argsort(-scores, kind="stable")
    s, p = scores[order], pos[order]
    tp = np.cumsum(p)
    fp = np.cumsum(~p)
    last = np.r_[np.nonzero(np.diff(s))[0], len(s) - 1]  # end of each tie group
    tpr = np.r_[0.0, tp[last] / n_pos]
    fpr = np.r_[0.0, fp[last] / n_neg]
    auc = float(np.sum((fpr[1:] - fpr[:-1]) * (tpr[1:] + tpr[:-1])) / 2.0)
    thresholds = np.r_[np.inf, s[last]]
    return auc, list(zip(thresholds.tolist(), fpr.tolist(), tpr.tolist()))


def evaluate(report: ScoreReport) -> ScoreReport:
    report.auc, report.roc = roc_auc(report.records)
    return report


def mann_whitney_auc(normal_scores, anomalous_scores) -> float:
    """Brute-force P(S_anom > S_norm) + P(tie) / 2 over all pairs."""
    n = np.asarray(normal_scores, dtype=np.float64)[None, :]
    a = np.asarray(anomalous_scores, dtype=np.float64)[:, None]
    return float(((a > n).sum() + 0.5 * (a == n).sum()) / (a.size * n.size))


def scores_csv(report: ScoreReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["clip_id", "label", "is_normal", "score"])
    for r in report.records:
        w.writerow([r.clip_id, r.label, int(r.is_normal), repr(r.score)])
    return buf.getvalue()


def roc_csv(report: ScoreReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["threshold", "fpr", "tpr"])
    for t, f, p in report.roc:
        w.writerow([repr(t), repr(f), repr(p)])
    return buf.getvalue()
