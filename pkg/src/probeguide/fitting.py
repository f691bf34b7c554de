"""Torso-masked nonlinear least-squares fitting of a body model to observations.

The loss is the mean squared distance over masked vertices plus masked joints
(joint term weighted), exactly what the Levenberg-Marquardt loop minimizes.
Jacobians come from forward finite differences, evaluated in batch through a
restricted workspace that only poses the masked vertex rows.

The observation is rigidly pre-aligned to the model's canonical frame before
optimizing (and the result mapped back), so fitting a rigidly transformed
observation with a correspondingly transformed init lands on the same loss to
floating-point precision rather than merely to optimizer slack.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._kernels import lbs_blend
from .bodymodel import _AXIS_INDEX, BodyModel, BodyParams, pose_body, precompose_root
from .geometry import (RigidTransform, invert, kabsch, matrix_to_rotvec,
                       rotvecs_to_matrices, transform_points)

FD_STEP = 1e-6

_LAMBDA_INIT = 1e-3
_LAMBDA_MIN = 1e-12
_LAMBDA_MAX = 1e12


class FitError(RuntimeError):
    pass


class EmptyMaskError(FitError):
    """No masked vertices or joints left to fit against."""


class NonFiniteLossError(FitError):
    """Observation or iterate produced a non-finite loss."""


@dataclass(frozen=True)
class FitConfig:
    max_iters: int = 200
    rel_tol: float = 1e-8
    grad_tol: float = 1e-10
    joint_weight: float = 1.0
    stage1_iters: int = 30

    def to_dict(self) -> dict:
        return {"max_iters": self.max_iters, "rel_tol": self.rel_tol,
                "grad_tol": self.grad_tol, "joint_weight": self.joint_weight,
                "stage1_iters": self.stage1_iters}

    @classmethod
    def from_dict(cls, d: dict) -> "FitConfig":
        from . import jsonio
        jsonio.check_keys(d, [], optional=cls().to_dict().keys(), where="fit config")
        return cls(**d)


@dataclass
class Observation:
    """Vertex and/or joint targets for one (possibly fused) body estimate."""

    vertices: np.ndarray | None = None
    joints: np.ndarray | None = None
    frame: str = "world"

    def __post_init__(self):
        if self.vertices is not None:
            self.vertices = np.asarray(self.vertices, dtype=float)
        if self.joints is not None:
            self.joints = np.asarray(self.joints, dtype=float)
        if self.vertices is None and self.joints is None:
            raise ValueError("observation needs vertices or joints")

    def check_against(self, model: BodyModel):
        if self.vertices is not None and self.vertices.shape != (model.vertex_count, 3):
            raise FitError(f"observation vertices {self.vertices.shape} do not match model "
                           f"({model.vertex_count}, 3)")
        if self.joints is not None and self.joints.shape != (model.joint_count, 3):
            raise FitError(f"observation joints {self.joints.shape} do not match model "
                           f"({model.joint_count}, 3)")

    def is_finite(self) -> bool:
        ok = True
        if self.vertices is not None:
            ok &= bool(np.all(np.isfinite(self.vertices)))
        if self.joints is not None:
            ok &= bool(np.all(np.isfinite(self.joints)))
        return ok

    def transformed(self, T: RigidTransform) -> "Observation":
        return Observation(
            None if self.vertices is None else transform_points(T, self.vertices),
            None if self.joints is None else transform_points(T, self.joints),
            self.frame,
        )


@dataclass
class FitResult:
    params: BodyParams
    final_rms_m: float
    iterations: int
    converged: bool
    loss_history: list = field(default_factory=list)


def _single_axis_rots(angles: np.ndarray, axis: int) -> np.ndarray:
    """Rotation matrices about a coordinate axis for a batch of angles."""
    c, s = np.cos(angles), np.sin(angles)
    S = angles.shape[0]
    M = np.zeros((S, 3, 3))
    i, j = (axis + 1) % 3, (axis + 2) % 3
    M[:, axis, axis] = 1.0
    M[:, i, i] = c
    M[:, j, j] = c
    M[:, j, i] = s
    M[:, i, j] = -s
    return M


def _resolve_masks(model: BodyModel, mask_vertices, mask_joints):
    mv = model.torso_mask_vertices if mask_vertices is None else np.asarray(mask_vertices, dtype=np.int64)
    mj = model.torso_mask_joints if mask_joints is None else np.asarray(mask_joints, dtype=np.int64)
    return mv, mj


class _Workspace:
    """Precomputed restricted tensors for batched masked evaluation.

    Only the masked vertex rows are skinned; the shaped template is evaluated
    on the union of masked rows and the joint regressor's support columns so
    the kinematic chain stays exact.
    """

    def __init__(self, model: BodyModel, obs: Observation, mv, mj, joint_weight: float):
        self.model = model
        self.joint_weight = float(joint_weight)
        self.use_v = obs.vertices is not None and mv.size > 0
        self.use_j = obs.joints is not None and mj.size > 0
        self.mv = mv
        self.mj = mj
        denom = (mv.size if self.use_v else 0) + self.joint_weight * (mj.size if self.use_j else 0)
        if denom <= 0:
            raise EmptyMaskError("no masked vertices or joints to fit")
        self.scale_v = 1.0 / np.sqrt(denom)
        self.scale_j = np.sqrt(self.joint_weight / denom) if self.use_j else 0.0
        support = np.nonzero(np.any(model.joint_regressor != 0.0, axis=0))[0]
        self.U = np.union1d(mv if self.use_v else np.empty(0, dtype=np.int64), support)
        self.template_U = model.template[self.U]
        self.shape_dirs_U = model.shape_dirs[self.U]
        self.reg_U = model.joint_regressor[:, self.U]
        if self.use_v:
            self.mv_in_U = np.searchsorted(self.U, mv)
            self.weights_mv = np.ascontiguousarray(model.skin_weights[mv])
        target = []
        if self.use_v:
            target.append((obs.vertices[mv] * self.scale_v).ravel())
        if self.use_j:
            target.append((obs.joints[mj] * self.scale_j).ravel())
        self.target = np.concatenate(target)
        # free parameters that can move the masked residuals: shape, translation,
        # and the pose segments of mask-relevant joints (with their ancestors)
        relevant = set()
        if self.use_v:
            cols = np.nonzero(np.any(model.skin_weights[mv] != 0.0, axis=0))[0]
            relevant.update(int(c) for c in cols)
        relevant.update(int(j) for j in mj)
        closed = set()
        for j in relevant:
            while j >= 0 and j not in closed:
                closed.add(j)
                j = int(model.parents[j])
        B, P = model.shape_count, model.pose_dim
        theta_free = np.zeros(P, dtype=bool)
        for j in sorted(closed):
            theta_free[model.theta_slices[j]] = True
        self.free_mask = np.concatenate([np.ones(B, dtype=bool), theta_free, np.ones(3, dtype=bool)])
        self.dim = B + P + 3

    def pack(self, params: BodyParams) -> np.ndarray:
        return np.concatenate([params.beta, params.theta, params.translation])

    def unpack(self, x: np.ndarray) -> BodyParams:
        B, P = self.model.shape_count, self.model.pose_dim
        return BodyParams(x[:B], x[B:B + P], x[B + P:])

    def _local_rotations_batch(self, thetas: np.ndarray) -> np.ndarray:
        model = self.model
        S = thetas.shape[0]
        R = np.empty((S, model.joint_count, 3, 3))
        full = [j for j, (dof, _) in enumerate(model.pose_dof) if dof == 3]
        if full:
            rv = np.stack([thetas[:, model.theta_slices[j]] for j in full], axis=1)
            R[:, full] = rotvecs_to_matrices(rv.reshape(-1, 3)).reshape(S, len(full), 3, 3)
        for j, (dof, axes) in enumerate(model.pose_dof):
            if dof == 3:
                continue
            seg = thetas[:, model.theta_slices[j]]
            M = _single_axis_rots(seg[:, 0], _AXIS_INDEX[axes[0]])
            for i in range(1, dof):
                M = M @ _single_axis_rots(seg[:, i], _AXIS_INDEX[axes[i]])
            R[:, j] = M
        return R

    def residuals_batch(self, X: np.ndarray) -> np.ndarray:
        """Residual vectors for a batch of full parameter vectors X (S, dim)."""
        model = self.model
        S = X.shape[0]
        B, P = model.shape_count, model.pose_dim
        betas = X[:, :B]
        thetas = X[:, B:B + P]
        ts = X[:, B + P:]
        shaped_U = self.template_U[None] + np.tensordot(betas, self.shape_dirs_U, axes=(1, 2))
        j0 = np.tensordot(shaped_U, self.reg_U, axes=(1, 1)).transpose(0, 2, 1)
        Rl = self._local_rotations_batch(thetas)
        J = model.joint_count
        Rw = np.empty((S, J, 3, 3))
        pw = np.empty((S, J, 3))
        Rw[:, 0] = Rl[:, 0]
        pw[:, 0] = j0[:, 0]
        for j in range(1, J):
            p = model.parents[j]
            Rw[:, j] = Rw[:, p] @ Rl[:, j]
            pw[:, j] = pw[:, p] + (Rw[:, p] @ (j0[:, j] - j0[:, p])[:, :, None])[:, :, 0]
        parts = []
        if self.use_v:
            rel_t = pw - (Rw @ j0[:, :, :, None])[:, :, :, 0]
            verts = lbs_blend(self.weights_mv, Rw, rel_t, shaped_U[:, self.mv_in_U])
            verts += ts[:, None, :]
            parts.append(verts.reshape(S, -1) * self.scale_v)
        if self.use_j:
            joints = pw[:, self.mj] + ts[:, None, :]
            parts.append(joints.reshape(S, -1) * self.scale_j)
        pred = np.concatenate(parts, axis=1)
        return pred - self.target[None, :]

    def residuals(self, x: np.ndarray) -> np.ndarray:
        return self.residuals_batch(x[None])[0]

    def jacobian(self, x: np.ndarray, free_idx: np.ndarray, step: float = FD_STEP):
        """Forward finite-difference Jacobian over the given free indices."""
        n = free_idx.shape[0]
        X = np.repeat(x[None, :], n + 1, axis=0)
        X[np.arange(1, n + 1), free_idx] += step
        R = self.residuals_batch(X)
        r0 = R[0]
        J = (R[1:] - r0[None, :]).T / step
        return r0, J


def masked_loss(model: BodyModel, params: BodyParams, obs: Observation,
                joint_weight: float = 1.0, mask_vertices=None, mask_joints=None) -> float:
    """Mean squared masked distance; the exact quantity fit_model minimizes."""
    obs.check_against(model)
    mv, mj = _resolve_masks(model, mask_vertices, mask_joints)
    ws = _Workspace(model, obs, mv, mj, joint_weight)
    r = ws.residuals(ws.pack(params))
    return float(r @ r)


def masked_vertex_rms(model: BodyModel, params: BodyParams, obs: Observation,
                      mask_vertices=None) -> float:
    """Root mean squared distance over masked vertices only (no joint term)."""
    obs.check_against(model)
    if obs.vertices is None:
        raise FitError("vertex RMS needs an observation with vertices")
    mv, _ = _resolve_masks(model, mask_vertices, None)
    ws = _Workspace(model, Observation(vertices=obs.vertices, frame=obs.frame),
                    mv, np.empty(0, dtype=np.int64), 0.0)
    r = ws.residuals(ws.pack(params))
    return float(np.sqrt(r @ r))


def _canonicalize(model: BodyModel, obs: Observation, mv, mj):
    """Rigid alignment of the observation onto the rest-pose model."""
    if obs.vertices is not None and mv.size >= 3:
        return kabsch(obs.vertices[mv], model.template[mv])
    if obs.joints is not None and mj.size >= 3:
        return kabsch(obs.joints[mj], model.rest_joints(np.zeros(model.shape_count))[mj])
    return RigidTransform.identity()


def fit_model(model: BodyModel, obs: Observation, init: BodyParams | None = None,
              config: FitConfig | None = None, mask_vertices=None, mask_joints=None) -> FitResult:
    """Levenberg-Marquardt descent on the masked loss.

    One iteration = one Jacobian build plus as many damped retries as the step
    needs; accepted steps never increase the loss. The first stage1_iters
    iterations free only (translation, root rotation), then all parameters.
    """
    config = config or FitConfig()
    obs.check_against(model)
    if not obs.is_finite():
        raise NonFiniteLossError("observation contains non-finite values")
    if init is None:
        init = BodyParams.zeros(model)
    mv, mj = _resolve_masks(model, mask_vertices, mask_joints)

    T_align = _canonicalize(model, obs, mv, mj)
    obs_c = obs.transformed(T_align)
    init_c = precompose_root(model, init, T_align)

    ws = _Workspace(model, obs_c, mv, mj, config.joint_weight)
    B = model.shape_count
    root = model.theta_slices[0]
    stage1_free = np.zeros(ws.dim, dtype=bool)
    stage1_free[B + root.start:B + root.stop] = True
    stage1_free[B + model.pose_dim:] = True
    stages = []
    s1 = min(config.stage1_iters, config.max_iters)
    if s1 > 0:
        stages.append((np.nonzero(stage1_free & ws.free_mask)[0], s1, False))
    stages.append((np.nonzero(ws.free_mask)[0], config.max_iters - s1, True))

    x = ws.pack(init_c)
    r = ws.residuals(x)
    loss = float(r @ r)
    if not np.isfinite(loss):
        raise NonFiniteLossError("non-finite loss at the initial parameters")
    history = [loss]
    iterations = 0
    converged = False
    for free_idx, budget, final_stage in stages:
        if free_idx.size == 0:
            continue
        lam = _LAMBDA_INIT
        stage_done = False
        for _ in range(budget):
            iterations += 1
            r, J = ws.jacobian(x, free_idx)
            g = 2.0 * (J.T @ r)
            if float(np.linalg.norm(g)) < config.grad_tol:
                stage_done = True
                converged = final_stage
                break
            JTJ = J.T @ J
            diag = np.maximum(np.diag(JTJ), 1e-12)
            accepted = False
            while lam <= _LAMBDA_MAX:
                A = JTJ + lam * np.diag(diag)
                try:
                    dx = np.linalg.solve(A, -(J.T @ r))
                except np.linalg.LinAlgError:
                    lam *= 10.0
                    continue
                x_new = x.copy()
                x_new[free_idx] += dx
                r_new = ws.residuals(x_new)
                loss_new = float(r_new @ r_new)
                if not np.isfinite(loss_new):
                    raise NonFiniteLossError("loss diverged to a non-finite value")
                if loss_new < loss:
                    rel = (loss - loss_new) / max(loss, 1e-300)
                    x = x_new
                    loss = loss_new
                    history.append(loss)
                    lam = max(lam / 10.0, _LAMBDA_MIN)
                    accepted = True
                    if rel < config.rel_tol:
                        stage_done = True
                        converged = final_stage
                    break
                lam *= 10.0
            if not accepted or stage_done:
                break
        if not stage_done and final_stage:
            converged = False
    params = precompose_root(model, ws.unpack(x), invert(T_align))
    return FitResult(params, float(np.sqrt(loss)), iterations, converged, history)


def residual_jacobian(model: BodyModel, obs: Observation, params: BodyParams,
                      joint_weight: float = 1.0, step: float = FD_STEP,
                      mask_vertices=None, mask_joints=None):
    """The optimizer's residual vector and FD Jacobian at given parameters.

    Exposed so tests can cross-check the batched workspace against a naive
    per-parameter implementation. Columns cover all parameters in the order
    [beta, theta, translation].
    """
    obs.check_against(model)
    mv, mj = _resolve_masks(model, mask_vertices, mask_joints)
    ws = _Workspace(model, obs, mv, mj, joint_weight)
    x = ws.pack(params)
    return ws.jacobian(x, np.arange(ws.dim), step)


def transfer_init(src_model: BodyModel, src_params: BodyParams,
                  dst_model: BodyModel) -> BodyParams:
    """Map parameters between rig flavors by joint name, as a fit starting point.

    3-DOF target joints take the source joint's local rotation exactly;
    reduced-DOF targets read per-axis components off the source rotation
    vector, which is approximate and meant only to seed convert_params.
    """
    beta = (src_params.beta.copy() if dst_model.shape_count == src_model.shape_count
            else np.zeros(dst_model.shape_count))
    theta = np.zeros(dst_model.pose_dim)
    src_local = src_model.local_rotations(src_params.theta)
    for j, name in enumerate(dst_model.joint_names):
        i = src_model.joint_index.get(name)
        if i is None:
            continue
        rv = matrix_to_rotvec(src_local[i])
        dof, axes = dst_model.pose_dof[j]
        seg = theta[dst_model.theta_slices[j]]
        if dof == 3:
            seg[:] = rv
        else:
            for k, axis in enumerate(axes):
                seg[k] = rv[_AXIS_INDEX[axis]]
    return BodyParams(beta, theta, src_params.translation.copy())


def convert_params(src_model: BodyModel, src_params: BodyParams,
                   dst_model: BodyModel, config: FitConfig | None = None) -> FitResult:
    """Optimization-based conversion of a body into another rig flavor.

    Poses the source body and fits the target model to its vertices over the
    target's torso mask. Requires vertex-aligned meshes (the desk flavors
    share one mesh per resolution).
    """
    if dst_model.vertex_count != src_model.vertex_count:
        raise FitError("flavor conversion requires vertex-aligned meshes "
                       f"({src_model.vertex_count} vs {dst_model.vertex_count})")
    posed = pose_body(src_model, src_params)
    obs = Observation(vertices=posed.vertices, joints=None, frame="world")
    init = transfer_init(src_model, src_params, dst_model)
    return fit_model(dst_model, obs, init=init, config=config)
