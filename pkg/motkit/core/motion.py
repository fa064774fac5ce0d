"""
Constant-velocity Kalman filter over (cx, cy, a, h) box state.

The state is (cx, cy, a, h, vcx, vcy, va, vh); the measurement is the first
four components. Noise standard deviations scale with the box height.
"""
from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np
import scipy.linalg

from motkit.core.exceptions import DataError, NumericalFailure

NDIM = 4


@dataclass(frozen=True)
class KalmanTrackState:
    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "mean", np.asarray(self.mean, dtype=float))
        object.__setattr__(self, "covariance", np.asarray(self.covariance, dtype=float))


@dataclass(frozen=True)
class WarpMatrix:
    """
    Affine warp mapping previous-frame pixel coordinates to current-frame ones.

    matrix is 2x3, row-major: [[a11, a12, a13], [a21, a22, a23]].
    """

    frame: int
    matrix: np.ndarray

    def __post_init__(self) -> None:
        matrix = np.asarray(self.matrix, dtype=float).reshape(2, 3)
        object.__setattr__(self, "matrix", matrix)
        if abs(np.linalg.det(matrix[:, :2])) < 1e-12:
            raise DataError(f"Warp for frame {self.frame} has a singular linear part")

    @property
    def linear(self) -> np.ndarray:
        return self.matrix[:, :2]

    @property
    def translation(self) -> np.ndarray:
        return self.matrix[:, 2]

    @classmethod
    def identity(cls, frame: int = 0) -> "WarpMatrix":
        return cls(frame, np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]))

    @classmethod
    def translation_only(cls, frame: int, dx: float, dy: float) -> "WarpMatrix":
        return cls(frame, np.array([[1.0, 0.0, dx], [0.0, 1.0, dy]]))


WarpTable = Dict[int, WarpMatrix]


class KalmanFilter:
    """
    Usage:
        >> kf = KalmanFilter()
        >> state = kf.initiate(to_xyah(box))
        >> state = kf.predict(state)
        >> state = kf.update(state, to_xyah(next_box), score=0.9, nsa=True)
    """

    def __init__(
        self,
        std_weight_position: float = 1.0 / 20,
        std_weight_velocity: float = 1.0 / 160,
    ) -> None:
        self._motion_mat = np.eye(2 * NDIM)
        for i in range(NDIM):
            self._motion_mat[i, NDIM + i] = 1.0
        self._update_mat = np.eye(NDIM, 2 * NDIM)
        self.std_weight_position = std_weight_position
        self.std_weight_velocity = std_weight_velocity

    def initiate(self, measurement: np.ndarray) -> KalmanTrackState:
        measurement = np.asarray(measurement, dtype=float)
        h = measurement[3]
        if not h > 0:
            raise DataError(f"Cannot initiate a track from non-positive height {h}")
        mean = np.r_[measurement, np.zeros(NDIM)]
        std = [
            2 * self.std_weight_position * h,
            2 * self.std_weight_position * h,
            1e-2,
            2 * self.std_weight_position * h,
            10 * self.std_weight_velocity * h,
            10 * self.std_weight_velocity * h,
            1e-5,
            10 * self.std_weight_velocity * h,
        ]
        return KalmanTrackState(mean, np.diag(np.square(std)))

    def process_noise(self, mean: np.ndarray) -> np.ndarray:
        h = mean[3]
        std_pos = [
            self.std_weight_position * h,
            self.std_weight_position * h,
            1e-2,
            self.std_weight_position * h,
        ]
        std_vel = [
            self.std_weight_velocity * h,
            self.std_weight_velocity * h,
            1e-5,
            self.std_weight_velocity * h,
        ]
        return np.diag(np.square(np.r_[std_pos, std_vel]))

    def measurement_noise(self, mean: np.ndarray) -> np.ndarray:
        h = mean[3]
        std = [
            self.std_weight_position * h,
            self.std_weight_position * h,
            1e-1,
            self.std_weight_position * h,
        ]
        return np.diag(np.square(std))

    def predict(self, state: KalmanTrackState) -> KalmanTrackState:
        F = self._motion_mat
        mean = F @ state.mean
        covariance = F @ state.covariance @ F.T + self.process_noise(state.mean)
        return KalmanTrackState(mean, _symmetric(covariance))

    def project(self, state: KalmanTrackState, score: float = 0.0, nsa: bool = False):
        """ Project the state into measurement space; NSA scales R by (1 - score). """
        R = self.measurement_noise(state.mean)
        if nsa:
            R = (1.0 - score) * R
        H = self._update_mat
        return H @ state.mean, H @ state.covariance @ H.T + R

    def update(
        self,
        state: KalmanTrackState,
        measurement: np.ndarray,
        score: float = 0.0,
        nsa: bool = False,
    ) -> KalmanTrackState:
        projected_mean, projected_cov = self.project(state, score, nsa)
        try:
            chol = scipy.linalg.cho_factor(
                projected_cov, lower=True, check_finite=False
            )
            kalman_gain = scipy.linalg.cho_solve(
                chol, (state.covariance @ self._update_mat.T).T, check_finite=False
            ).T
        except np.linalg.LinAlgError as exc:
            raise NumericalFailure(
                f"Innovation covariance is not positive definite: {exc}"
            )
        innovation = np.asarray(measurement, dtype=float) - projected_mean
        mean = state.mean + innovation @ kalman_gain.T
        covariance = state.covariance - kalman_gain @ projected_cov @ kalman_gain.T
        return KalmanTrackState(mean, _symmetric(covariance))

    def apply_warp(
        self, state: KalmanTrackState, warp: Optional[WarpMatrix]
    ) -> KalmanTrackState:
        return apply_warp(state, warp)


def apply_warp(state: KalmanTrackState, warp: Optional[WarpMatrix]) -> KalmanTrackState:
    """
    Move a state into the current frame's coordinates.

    Positions map affinely, velocities by the linear part only, h and vh scale by
    sqrt(|det|). The aspect ratio is left as is.
    """
    if warp is None:
        return state
    linear = warp.linear
    scale = float(np.sqrt(abs(np.linalg.det(linear))))
    transform = np.eye(2 * NDIM)
    transform[0:2, 0:2] = linear
    transform[4:6, 4:6] = linear
    transform[3, 3] = scale
    transform[7, 7] = scale
    mean = transform @ state.mean
    mean[0:2] += warp.translation
    covariance = transform @ state.covariance @ transform.T
    return KalmanTrackState(mean, _symmetric(covariance))


def _symmetric(matrix: np.ndarray) -> np.ndarray:
    return (matrix + matrix.T) / 2.0
