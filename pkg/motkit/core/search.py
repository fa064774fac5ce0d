"""
Black-box search over per-sequence confidence thresholds.

A truncated-normal sampling distribution with fixed std is moved by
PPO2-style clipped-surrogate steps on its mean. The objective is any callable
mapping a parameter vector to a score, evaluated once per sample.
"""
import dataclasses
import logging
import subprocess
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import norm, truncnorm

from motkit.core.association import ByteTracker, TrackerConfig
from motkit.core.boxes import BoundingBox, SequenceMeta, Trajectory
from motkit.core.exceptions import ConfigError, MotkitError, ObjectiveFailure
from motkit.core.metrics import average_precision, hota

logger = logging.getLogger(__name__)

Objective = Callable[[np.ndarray], float]


@dataclass(frozen=True)
class SearchConfig:
    rounds: int = 5
    steps_per_round: int = 4
    samples_per_step: int = 8
    dims: int = 1
    init_mean: float = 0.5
    std: float = 0.2
    lower: float = 0.0
    upper: float = 1.0
    clip_epsilon: float = 0.2
    learning_rate: float = 0.1
    update_epochs: int = 1
    seed: int = 0

    def __post_init__(self) -> None:
        keys = (
            "rounds", "steps_per_round", "samples_per_step", "dims", "update_epochs"
        )
        for key in keys:
            value = getattr(self, key)
            if value < 1:
                raise ConfigError(f"search.{key}", f"must be >= 1, got {value}")
        if self.samples_per_step < 2:
            raise ConfigError(
                "search.samples_per_step", "needs at least two samples per step"
            )
        if not self.std > 0:
            raise ConfigError("search.std", f"must be positive, got {self.std}")
        bounds = f"[{self.lower}, {self.upper}]"
        if not self.lower < self.upper:
            raise ConfigError(
                "search.lower", f"bounds must satisfy lower < upper, got {bounds}"
            )
        if not self.lower <= self.init_mean <= self.upper:
            raise ConfigError("search.init_mean", f"must lie within {bounds}")
        if not 0 < self.clip_epsilon < 1:
            raise ConfigError(
                "search.clip_epsilon", f"must be in (0, 1), got {self.clip_epsilon}"
            )
        if not self.learning_rate > 0:
            raise ConfigError(
                "search.learning_rate", f"must be positive, got {self.learning_rate}"
            )


@dataclass(frozen=True)
class SearchDistribution:
    mean: np.ndarray
    std: float
    lower: float = 0.0
    upper: float = 1.0

    def __post_init__(self) -> None:
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        object.__setattr__(self, "mean", np.clip(mean, self.lower, self.upper))

    @classmethod
    def from_config(cls, cfg: SearchConfig) -> "SearchDistribution":
        return cls(np.full(cfg.dims, cfg.init_mean), cfg.std, cfg.lower, cfg.upper)

    def _standard_bounds(self, mean: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        return (self.lower - mean) / self.std, (self.upper - mean) / self.std

    def log_density(
        self, samples: np.ndarray, mean: Optional[np.ndarray] = None
    ) -> np.ndarray:
        """ Joint log density of each sample row, the normaliser included. """
        mean = self.mean if mean is None else mean
        a, b = self._standard_bounds(mean)
        return truncnorm.logpdf(samples, a, b, loc=mean, scale=self.std).sum(axis=1)

    def score_function(self, samples: np.ndarray, mean: np.ndarray) -> np.ndarray:
        """ d log p(x) / d mean for each sample and dimension. """
        a, b = self._standard_bounds(mean)
        mass = np.maximum(norm.cdf(b) - norm.cdf(a), 1e-300)
        log_normaliser_grad = (norm.pdf(a) - norm.pdf(b)) / (self.std * mass)
        return (samples - mean) / self.std ** 2 - log_normaliser_grad


@dataclass
class SearchStep:
    round: int
    step: int
    mean: List[float]
    samples: List[List[float]]
    scores: List[float]
    best_params: List[float]
    best_score: float


@dataclass
class SearchResult:
    best_params: np.ndarray
    best_score: float
    history: List[SearchStep] = field(default_factory=list)

    @property
    def final_mean(self) -> List[float]:
        return self.history[-1].mean if self.history else []


def sample_truncated_normal(
    d: SearchDistribution, m: int, rng: np.random.Generator
) -> np.ndarray:
    """ m parameter vectors, each coordinate from N(mean, std^2) cut to the bounds. """
    if m < 1:
        raise ConfigError("search.samples_per_step", f"must be >= 1, got {m}")
    a, b = d._standard_bounds(d.mean)
    samples = truncnorm.rvs(
        a, b, loc=d.mean, scale=d.std, size=(m, len(d.mean)), random_state=rng
    )
    return np.clip(samples, d.lower, d.upper)


def ppo2_update(
    d: SearchDistribution,
    samples: np.ndarray,
    rewards: Sequence[float],
    cfg: SearchConfig,
) -> SearchDistribution:
    """
    Clipped-surrogate ascent on the distribution mean.

    Rewards are normalised into advantages. Each epoch takes one step of
    learning_rate * std^2 times the surrogate gradient, where the surrogate
    is mean(min(r * A, clip(r, 1 - eps, 1 + eps) * A)) and r is the density
    ratio of the updated to the sampling distribution. The result is projected
    back into the bounds.
    """
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    rewards = np.asarray(rewards, dtype=float)
    if len(samples) != len(rewards) or len(rewards) < 2:
        raise ConfigError(
            "search.samples_per_step", "need as many rewards as samples, at least two"
        )
    advantages = (rewards - rewards.mean()) / (rewards.std() + 1e-8)
    if not np.any(advantages):
        return d

    old_log_density = d.log_density(samples)
    mean = d.mean.copy()
    eps = cfg.clip_epsilon
    for _ in range(cfg.update_epochs):
        ratio = np.exp(d.log_density(samples, mean) - old_log_density)
        clipped = ((advantages > 0) & (ratio > 1 + eps)) | (
            (advantages < 0) & (ratio < 1 - eps)
        )
        weights = np.where(clipped, 0.0, advantages * ratio)
        gradient = (weights[:, None] * d.score_function(samples, mean)).mean(axis=0)
        step = cfg.learning_rate * d.std ** 2 * gradient
        mean = np.clip(mean + step, d.lower, d.upper)
    return dataclasses.replace(d, mean=mean)


def _evaluate(objective: Objective, params: np.ndarray) -> float:
    try:
        score = float(objective(params))
    except ObjectiveFailure:
        raise
    except MotkitError as exc:
        raise ObjectiveFailure(str(exc), params) from exc
    except Exception as exc:
        message = f"Objective raised {type(exc).__name__}: {exc}"
        raise ObjectiveFailure(message, params) from exc
    if not np.isfinite(score):
        raise ObjectiveFailure(f"Objective returned non-finite score {score}", params)
    return score


def search(objective: Objective, cfg: SearchConfig) -> SearchResult:
    """
    Run rounds x steps_per_round sampling steps of samples_per_step evaluations.

    Returns the best parameters ever evaluated and the per-step history.
    Identical seeds and objectives give identical histories.
    """
    rng = np.random.default_rng(cfg.seed)
    distribution = SearchDistribution.from_config(cfg)
    result = SearchResult(best_params=distribution.mean.copy(), best_score=-np.inf)

    for round_index in range(cfg.rounds):
        for step_index in range(cfg.steps_per_round):
            samples = sample_truncated_normal(distribution, cfg.samples_per_step, rng)
            scores = [_evaluate(objective, params) for params in samples]
            best = int(np.argmax(scores))
            if scores[best] > result.best_score:
                result.best_score = scores[best]
                result.best_params = samples[best].copy()
            result.history.append(
                SearchStep(
                    round=round_index,
                    step=step_index,
                    mean=[float(v) for v in distribution.mean],
                    samples=samples.tolist(),
                    scores=scores,
                    best_params=[float(v) for v in result.best_params],
                    best_score=float(result.best_score),
                )
            )
            distribution = ppo2_update(distribution, samples, scores, cfg)
        logger.info(
            "Search round %d/%d: mean=%s best=%.4f",
            round_index + 1,
            cfg.rounds,
            np.round(distribution.mean, 4).tolist(),
            result.best_score,
        )
    return result


# ---------------------------------------------------------------------------
# Shipped objectives


class CommandObjective:
    """
    Run an external command with the parameters appended as arguments.

    The score is the last non-empty line of its standard output.

    Usage:
        >> objective = CommandObjective(["./train_and_eval.sh", "MOT17-04"])
        >> objective(np.array([0.42]))
    """

    def __init__(self, command: Sequence[str], timeout: Optional[float] = None) -> None:
        if not command:
            raise ConfigError("search.command", "objective command must not be empty")
        self.command = list(command)
        self.timeout = timeout

    def __call__(self, params: np.ndarray) -> float:
        args = self.command + [f"{value:.6f}" for value in params]
        try:
            completed = subprocess.run(
                args, capture_output=True, text=True, timeout=self.timeout, check=True
            )
        except subprocess.CalledProcessError as exc:
            raise ObjectiveFailure(
                f"Objective command exited with {exc.returncode}: {exc.stderr.strip()}",
                params,
            )
        except (OSError, subprocess.TimeoutExpired) as exc:
            raise ObjectiveFailure(f"Objective command failed: {exc}", params)
        lines = [line.strip() for line in completed.stdout.splitlines() if line.strip()]
        if not lines:
            raise ObjectiveFailure("Objective command printed no score", params)
        try:
            return float(lines[-1])
        except ValueError:
            raise ObjectiveFailure(
                f"Objective output {lines[-1]!r} is not a number", params
            )


class AveragePrecisionObjective:
    """
    AP@0.5 of the detections kept at a confidence threshold, treated as hard labels.

    Kept detections all score 1, so the objective trades recall against
    precision the way thresholded pseudo-labels do.
    """

    def __init__(
        self,
        detections: Dict[int, List[BoundingBox]],
        reference: Dict[int, List[BoundingBox]],
        iou_thresh: float = 0.5,
    ) -> None:
        self.detections = detections
        self.reference = reference
        self.iou_thresh = iou_thresh

    def __call__(self, params: np.ndarray) -> float:
        threshold = float(params[0])
        kept = {
            frame: [det.replace(score=1.0) for det in dets if det.score >= threshold]
            for frame, dets in self.detections.items()
        }
        return average_precision(kept, self.reference, self.iou_thresh)


class TrackingObjective:
    """ HOTA of the tracker on one sequence with its high threshold at params[0]. """

    def __init__(
        self,
        meta: SequenceMeta,
        detections: Dict[int, List[BoundingBox]],
        ground_truth: Sequence[Trajectory],
        tracker: TrackerConfig = TrackerConfig(),
    ) -> None:
        self.meta = meta
        self.detections = detections
        self.ground_truth = list(ground_truth)
        self.tracker = tracker

    def __call__(self, params: np.ndarray) -> float:
        high = max(float(params[0]), self.tracker.low_thresh + 1e-3)
        cfg = dataclasses.replace(
            self.tracker,
            high_thresh=min(high, 1.0),
            new_track_thresh=None,
            border_score_floor=None,
        )
        tracker = ByteTracker(cfg, self.meta)
        for frame in range(1, self.meta.length + 1):
            tracker.step(self.detections.get(frame, []), frame)
        return hota(tracker.trajectories(), self.ground_truth).hota
