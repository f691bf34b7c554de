"""Multi-frame consensus: RANSAC over camera-posed body estimates.

Each capture frame carries a camera pose (camera -> world) and a body estimate
expressed in that camera's coordinates. Frames are aggregated into world-frame
observations, then a hypothesis fit on every sampled frame subset votes for the
body that the most frames agree with. Fitting a subset happens against the mean
of its observations, which minimizes the same sum-of-squares as fitting all of
them jointly.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .bodymodel import BodyModel, BodyParams, pose_body, precompose_root
from .fitting import FitConfig, FitResult, Observation, fit_model
from .geometry import RigidTransform, mean_rotation, transform_points

# hypothesis fits are screening passes: tight iteration caps, full-budget refit after
_HYP_MAX_ITERS_WARM = 4
_HYP_MAX_ITERS_COLD = 15


class ConsensusError(RuntimeError):
    pass


class NoSupportError(ConsensusError):
    """No hypothesis gathered the minimum number of inlier frames."""


@dataclass
class CaptureFrame:
    camera_pose: RigidTransform
    body_estimate: BodyParams


@dataclass(frozen=True)
class RansacConfig:
    sample_size: int = 3
    inlier_threshold_m: float = 0.02
    max_hypotheses: int = 60
    min_inliers: int = 3
    seed: int = 42

    def to_dict(self) -> dict:
        return {"sample_size": self.sample_size,
                "inlier_threshold_m": self.inlier_threshold_m,
                "max_hypotheses": self.max_hypotheses,
                "min_inliers": self.min_inliers, "seed": self.seed}

    @classmethod
    def from_dict(cls, d: dict) -> "RansacConfig":
        from . import jsonio
        jsonio.check_keys(d, [], optional=cls().to_dict().keys(), where="ransac config")
        return cls(**d)


@dataclass
class ConsensusResult:
    params: BodyParams
    inlier_frames: tuple
    per_frame_residual_m: np.ndarray
    hypotheses_evaluated: int
    winner_support: int  # inlier count of the selected hypothesis, before refit
    refit: FitResult


def frame_world_params(model: BodyModel, frame: CaptureFrame) -> BodyParams:
    """The frame's body estimate re-expressed in world coordinates."""
    return precompose_root(model, frame.body_estimate, frame.camera_pose)


def aggregate_to_world(model: BodyModel, frames) -> list:
    """Pose every frame's estimate and map it into the world frame."""
    out = []
    for f in frames:
        body = pose_body(model, f.body_estimate)
        out.append(Observation(
            vertices=transform_points(f.camera_pose, body.vertices),
            joints=transform_points(f.camera_pose, body.joints),
            frame="world"))
    return out


def _stable_mean(arrs) -> np.ndarray:
    # sorting each scalar component across the inputs fixes the fp summation
    # order, so the mean depends only on the multiset of inputs
    return np.sort(np.stack(arrs), axis=0).mean(axis=0)


def mean_observation(obs_list) -> Observation:
    verts = None
    joints = None
    if all(o.vertices is not None for o in obs_list):
        verts = _stable_mean([o.vertices for o in obs_list])
    if all(o.joints is not None for o in obs_list):
        joints = _stable_mean([o.joints for o in obs_list])
    return Observation(vertices=verts, joints=joints, frame=obs_list[0].frame)


def mean_params(model: BodyModel, params_list) -> BodyParams:
    """Parameter-space average; root rotation averaged on the manifold."""
    beta = _stable_mean([p.beta for p in params_list])
    theta = _stable_mean([p.theta for p in params_list])
    t = _stable_mean([p.translation for p in params_list])
    root = model.theta_slices[0]
    if model.pose_dof[0][0] == 3 and len(params_list) > 1:
        rvs = np.stack([p.theta[root] for p in params_list])
        rvs = rvs[np.lexsort(rvs.T[::-1])]
        theta[root] = mean_rotation(rvs)
    return BodyParams(beta, theta, t)


def classify_frames(model: BodyModel, params: BodyParams, world_obs, threshold_m: float):
    """Per-frame masked-vertex RMS against one posed body, and the inlier set."""
    body = pose_body(model, params)
    mv = model.torso_mask_vertices
    pred = body.vertices[mv]
    stacked = np.stack([o.vertices[mv] for o in world_obs])
    d2 = np.sum((stacked - pred[None]) ** 2, axis=2)
    rms = np.sqrt(np.mean(d2, axis=1))
    inliers = np.nonzero(rms < threshold_m)[0]
    return rms, inliers


def _subsets(K: int, config: RansacConfig):
    m = config.sample_size
    if math.comb(K, m) <= config.max_hypotheses:
        return list(itertools.combinations(range(K), m))
    rng = np.random.default_rng(config.seed)
    return [tuple(sorted(rng.choice(K, size=m, replace=False).tolist()))
            for _ in range(config.max_hypotheses)]


def ransac_consensus(model: BodyModel, world_obs, config: RansacConfig | None = None,
                     fit_config: FitConfig | None = None,
                     init_params=None) -> ConsensusResult:
    """Consensus body parameters across world-frame observations.

    Subsets are enumerated exhaustively when there are at most max_hypotheses
    of them, otherwise sampled with the seeded generator. The winner maximizes
    inlier support, breaking ties by total inlier residual and then by
    enumeration order; the final body is a full-budget refit on the mean of
    the winner's inliers, and frames are re-classified against it.

    init_params, when given, holds one world-frame BodyParams per frame and
    warm-starts each hypothesis fit with the subset's parameter mean.
    """
    config = config or RansacConfig()
    fit_config = fit_config or FitConfig()
    K = len(world_obs)
    if K < config.sample_size:
        raise NoSupportError(f"need at least {config.sample_size} frames, got {K}")
    for o in world_obs:
        if o.vertices is None:
            raise ConsensusError("consensus classification needs vertex observations")
    if init_params is not None and len(init_params) != K:
        raise ConsensusError("init_params length must match the number of frames")

    warm = init_params is not None
    hyp_config = FitConfig(
        max_iters=min(fit_config.max_iters, _HYP_MAX_ITERS_WARM if warm else _HYP_MAX_ITERS_COLD),
        rel_tol=fit_config.rel_tol, grad_tol=fit_config.grad_tol,
        joint_weight=fit_config.joint_weight,
        stage1_iters=0 if warm else min(10, fit_config.stage1_iters))

    best = None  # (-support, total_inlier_residual, order, subset, params, inliers)
    count = 0
    for order, subset in enumerate(_subsets(K, config)):
        obs_sub = mean_observation([world_obs[i] for i in subset])
        init = mean_params(model, [init_params[i] for i in subset]) if warm else None
        hyp = fit_model(model, obs_sub, init=init, config=hyp_config)
        count += 1
        rms, inliers = classify_frames(model, hyp.params, world_obs, config.inlier_threshold_m)
        key = (-inliers.size, float(np.sum(rms[inliers])), order)
        if best is None or key < best[0]:
            best = (key, hyp.params, inliers)

    _, win_params, win_inliers = best
    if win_inliers.size < config.min_inliers:
        raise NoSupportError(
            f"best hypothesis has {win_inliers.size} inliers, need {config.min_inliers}")

    refit_obs = mean_observation([world_obs[i] for i in win_inliers])
    refit = fit_model(model, refit_obs, init=win_params, config=fit_config)
    rms, inliers = classify_frames(model, refit.params, world_obs, config.inlier_threshold_m)
    if inliers.size >= config.min_inliers:
        final_params = refit.params
    else:
        # refit drifted out of support (pathological); keep the raw winner
        final_params = win_params
        rms, inliers = classify_frames(model, win_params, world_obs, config.inlier_threshold_m)
        inliers = inliers if inliers.size else win_inliers
    return ConsensusResult(final_params, tuple(int(i) for i in inliers), rms, count,
                           int(win_inliers.size), refit)
