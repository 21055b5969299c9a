"""Seeded random search over the baseline's scaling parameters.

Each trial samples a configuration (uniform within ranges, log-uniform for
the IPT scale), rebuilds the index on every repetition's training split,
and scores validation accuracy averaged over the repetitions. The sampler
draws a fixed sequence per seed, so a run can resume from a partial trial
log and reproduce the remaining trials exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Sequence

import numpy as np

from .errors import UsageError
from .features import ScalingConfig, featurize_flows
from .knn import NeighborIndex, VotingConfig, predict_top1_batch, predict_vote_batch
from .metrics import accuracy
from .model import CAPTURE_CAP, Dataset
from .splits import Partition, RepeatedSplits, SplitPlan

# Log-uniform sampling needs a positive floor; the requested range may
# start at 0.
_MIN_LOG_IPT_SCALE = 1e-3


@dataclass(frozen=True)
class SearchSpace:
    """Inclusive parameter ranges; defaults cover the optima reported for
    every public dataset (directions up to 297.5, clip up to 4400, N up
    to 27, IPT scale down to 0.005)."""

    n_packets: tuple[int, int] = (1, CAPTURE_CAP)
    dir_scale: tuple[float, float] = (0.0, 300.0)
    ipt_scale: tuple[float, float] = (0.0, 1.0)
    ipt_maxclip: tuple[float, float] = (100.0, 5000.0)
    use_ipt: tuple[bool, ...] = (True, False)

    def __post_init__(self) -> None:
        lo, hi = self.n_packets
        if not (1 <= lo <= hi <= CAPTURE_CAP):
            raise UsageError(f"n_packets range must lie in [1, {CAPTURE_CAP}]")
        for name in ("dir_scale", "ipt_scale", "ipt_maxclip"):
            lo, hi = getattr(self, name)
            if not lo <= hi:
                raise UsageError(f"empty range for {name}")
        if not self.use_ipt:
            raise UsageError("use_ipt needs at least one choice")

    def to_json_dict(self) -> dict:
        return {
            "n_packets": list(self.n_packets),
            "dir_scale": list(self.dir_scale),
            "ipt_scale": list(self.ipt_scale),
            "ipt_maxclip": list(self.ipt_maxclip),
            "use_ipt": list(self.use_ipt),
        }

    @classmethod
    def from_json_dict(cls, obj: dict) -> "SearchSpace":
        defaults = cls()
        def pair(name, cast):
            value = obj.get(name)
            if value is None:
                return getattr(defaults, name)
            lo, hi = value
            return (cast(lo), cast(hi))

        use_ipt = obj.get("use_ipt")
        return cls(
            n_packets=pair("n_packets", int),
            dir_scale=pair("dir_scale", float),
            ipt_scale=pair("ipt_scale", float),
            ipt_maxclip=pair("ipt_maxclip", float),
            use_ipt=tuple(bool(v) for v in use_ipt) if use_ipt is not None else defaults.use_ipt,
        )


@dataclass(frozen=True)
class TrialResult:
    trial: int
    cfg: ScalingConfig
    mean_val_accuracy: float
    per_rep: tuple[float, ...]

    def to_json_dict(self) -> dict:
        return {
            "trial": self.trial,
            "cfg": self.cfg.to_json_dict(),
            "per_rep": list(self.per_rep),
            "mean_val_accuracy": self.mean_val_accuracy,
        }

    @classmethod
    def from_json_dict(cls, obj: dict) -> "TrialResult":
        return cls(
            trial=int(obj["trial"]),
            cfg=ScalingConfig.from_json_dict(obj["cfg"]),
            mean_val_accuracy=float(obj["mean_val_accuracy"]),
            per_rep=tuple(float(v) for v in obj["per_rep"]),
        )


def sample_configs(space: SearchSpace, n: int, seed: int) -> list[ScalingConfig]:
    """The deterministic trial sequence for ``seed``. All parameters are
    drawn every trial (keeping the stream aligned across use_ipt choices);
    IPT parameters are neutralized when the trial disables IPTs."""
    rng = np.random.default_rng(seed)
    configs = []
    for _ in range(n):
        use_ipt = space.use_ipt[int(rng.integers(0, len(space.use_ipt)))]
        n_packets = int(rng.integers(space.n_packets[0], space.n_packets[1] + 1))
        dir_scale = float(rng.uniform(*space.dir_scale))
        lo = max(space.ipt_scale[0], _MIN_LOG_IPT_SCALE)
        hi = max(space.ipt_scale[1], lo)
        draw = rng.uniform(np.log(lo), np.log(hi))
        # a collapsed range must come back exact, not exp(log(x))
        ipt_scale = lo if lo == hi else float(np.exp(draw))
        ipt_maxclip = float(rng.uniform(*space.ipt_maxclip))
        if not use_ipt:
            ipt_scale = 0.0
            ipt_maxclip = 1000.0
        configs.append(
            ScalingConfig(
                n_packets=n_packets,
                dir_scale=dir_scale,
                ipt_scale=ipt_scale,
                ipt_maxclip=ipt_maxclip,
                use_ipt=use_ipt,
            )
        )
    return configs


def _partition_flows(ds: Dataset, plan: SplitPlan, part: Partition):
    return [f for f in ds.flows if plan.assignment.get(f.id) is part]


def _rep_views(ds: Dataset, splits: RepeatedSplits):
    views = []
    for plan in splits.plans:
        train = _partition_flows(ds, plan, Partition.TRAIN)
        val = _partition_flows(ds, plan, Partition.VAL)
        if not val:
            raise UsageError("tuning requires a non-empty validation partition")
        if not train:
            raise UsageError("tuning requires a non-empty training partition")
        views.append((train, [f.label for f in train], val, [f.label for f in val]))
    return views


def _score_cfg(views, cfg: ScalingConfig) -> tuple[float, tuple[float, ...]]:
    per_rep = []
    for train, train_labels, val, val_labels in views:
        idx = NeighborIndex.from_matrix(
            featurize_flows(train, cfg), train_labels, cfg=cfg
        )
        preds = predict_top1_batch(idx, featurize_flows(val, cfg))
        per_rep.append(accuracy([p.label for p in preds], val_labels))
    return sum(per_rep) / len(per_rep), tuple(per_rep)


def tune(
    ds: Dataset,
    splits: RepeatedSplits,
    space: SearchSpace,
    budget: int,
    seed: int,
    completed: Sequence[TrialResult] = (),
    log_sink: IO[str] | None = None,
) -> tuple[TrialResult, list[TrialResult]]:
    """Run ``budget`` trials and return (best trial, full trial log).

    ``completed`` carries trials already present in a resumed log; the
    search continues at the next trial index with the same seed-derived
    configuration sequence.
    """
    if budget < 1:
        raise UsageError("budget must be >= 1")
    if len(completed) > budget:
        raise UsageError(
            f"resume log has {len(completed)} trials but budget is {budget}"
        )
    views = _rep_views(ds, splits)
    configs = sample_configs(space, budget, seed)
    log: list[TrialResult] = list(completed)
    for k in range(len(completed), budget):
        mean, per_rep = _score_cfg(views, configs[k])
        trial = TrialResult(
            trial=k, cfg=configs[k], mean_val_accuracy=mean, per_rep=per_rep
        )
        log.append(trial)
        if log_sink is not None:
            log_sink.write(json.dumps(trial.to_json_dict(), sort_keys=True) + "\n")
            log_sink.flush()
    best = max(log, key=lambda t: t.mean_val_accuracy)
    return best, log


def read_trial_log(path: str | Path) -> list[TrialResult]:
    trials = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                trials.append(TrialResult.from_json_dict(json.loads(line)))
    return trials


@dataclass(frozen=True)
class VotingTuneResult:
    best_t_maj: float
    accuracies: tuple[tuple[float, float], ...]  # (threshold, mean val accuracy)


def tune_voting(
    ds: Dataset,
    splits: RepeatedSplits,
    cfg: ScalingConfig,
    thresholds: Sequence[float],
) -> VotingTuneResult:
    """Score the radius vote on validation for each candidate threshold and
    return the winner (accuracy ties go to the smallest threshold)."""
    if not thresholds:
        raise UsageError("need at least one candidate threshold")
    if any(t < 0 for t in thresholds):
        raise UsageError("thresholds must be non-negative")
    views = _rep_views(ds, splits)
    prepared = []
    for train, train_labels, val, val_labels in views:
        idx = NeighborIndex.from_matrix(
            featurize_flows(train, cfg), train_labels, cfg=cfg
        )
        prepared.append((idx, featurize_flows(val, cfg), val_labels))

    scored = []
    for t in thresholds:
        per_rep = []
        for idx, val_matrix, val_labels in prepared:
            preds = predict_vote_batch(idx, val_matrix, VotingConfig(t_maj=float(t)))
            per_rep.append(accuracy([p.label for p in preds], val_labels))
        scored.append((float(t), sum(per_rep) / len(per_rep)))
    best_t, _ = min(scored, key=lambda pair: (-pair[1], pair[0]))
    return VotingTuneResult(best_t_maj=best_t, accuracies=tuple(scored))
