"""Synthetic session generator and scorer: the ground-truth harness.

Sessions are built backwards from a known body: sample ground-truth parameters,
derive true probe poses, then emit per-frame camera-frame estimates whose
vertex-space noise is calibrated to a requested RMS. Outlier frames get a gross
rigid corruption on top. Scoring compares pipeline outputs against the stored
truth: surface RMS, outlier precision/recall, and per-view pose errors.

Noise is injected in parameter space (scaled random directions through the
model), not per-vertex, so it resembles estimator jitter the fit could
actually produce. A configurable fraction of the noise variance is a bias
shared by all frames of a session, standing in for systematic depth error.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bodymodel import BodyModel, BodyParams, pose_body, precompose_root
from .consensus import CaptureFrame
from .geometry import RigidTransform, invert, normalized, rotvec_to_matrix, matrix_to_rotvec
from .guidance import SurfaceMesh, default_rules, generate_all
from .metrics import pose_error
from .sessionio import POSTURES, CaptureSession, resolve_model_ref


class SynthError(RuntimeError):
    pass


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 42
    frame_count: int = 8
    vertex_noise_sigma_m: float = 0.0
    outlier_count: int = 0
    outlier_translation_m: float = 0.3
    outlier_rotation_deg: float = 30.0
    beta_range: float = 1.0
    theta_range_deg: float = 8.0
    posture: str = "supine"
    model_ref: str = "builtin:desk_small_surface"
    noise_bias_fraction: float = 0.5
    operator_noise_pos_mm: float = 3.0
    operator_noise_deg: float = 2.0

    def __post_init__(self):
        if self.frame_count < 1:
            raise ValueError("frame_count must be >= 1")
        if not 0 <= self.outlier_count < self.frame_count:
            raise ValueError("outlier_count must satisfy 0 <= count < frame_count")
        if self.vertex_noise_sigma_m < 0:
            raise ValueError("vertex_noise_sigma_m must be >= 0")
        if not 0.0 <= self.noise_bias_fraction <= 1.0:
            raise ValueError("noise_bias_fraction must lie in [0, 1]")
        if self.posture not in POSTURES:
            raise ValueError(f"unknown posture {self.posture!r}")

    def to_dict(self) -> dict:
        return {"seed": self.seed, "frame_count": self.frame_count,
                "vertex_noise_sigma_m": self.vertex_noise_sigma_m,
                "outlier_count": self.outlier_count,
                "outlier_translation_m": self.outlier_translation_m,
                "outlier_rotation_deg": self.outlier_rotation_deg,
                "beta_range": self.beta_range,
                "theta_range_deg": self.theta_range_deg,
                "posture": self.posture, "model_ref": self.model_ref,
                "noise_bias_fraction": self.noise_bias_fraction,
                "operator_noise_pos_mm": self.operator_noise_pos_mm,
                "operator_noise_deg": self.operator_noise_deg}

    @classmethod
    def from_dict(cls, d: dict) -> "SynthConfig":
        from . import jsonio
        jsonio.check_keys(d, [], optional=list(cls().to_dict().keys()) + ["schema_version"],
                          where="synth config")
        d = {k: v for k, v in d.items() if k != "schema_version"}
        return cls(**d)


@dataclass
class GroundTruth:
    session_id: str
    params: BodyParams          # world frame
    true_probe_poses: dict      # view_id -> ProbePose
    outlier_frames: tuple
    thorax_frame: RigidTransform


_POSTURE_ROOTS = {
    # columns: where the body's left / cranial / anterior axes land in world
    "supine": np.array([[0.0, 1.0, 0.0],
                        [-1.0, 0.0, 0.0],
                        [0.0, 0.0, 1.0]]),
    "left_lateral_decubitus": np.array([[0.0, 1.0, 0.0],
                                        [0.0, 0.0, -1.0],
                                        [-1.0, 0.0, 0.0]]),
}


def _pack(p: BodyParams) -> np.ndarray:
    return np.concatenate([p.beta, p.theta, p.translation])


def _unpack(x: np.ndarray, B: int, P: int) -> BodyParams:
    return BodyParams(x[:B], x[B:B + P], x[B + P:])


def _vertex_rms(model: BodyModel, a: BodyParams, b: BodyParams) -> float:
    va = pose_body(model, a).vertices
    vb = pose_body(model, b).vertices
    return float(np.sqrt(np.mean(np.sum((va - vb) ** 2, axis=1))))


def _calibrated_delta(model: BodyModel, base: BodyParams, direction: np.ndarray,
                      target_rms: float) -> np.ndarray:
    """Scale of a parameter-space direction that induces the target vertex RMS.

    Secant iteration on s -> rms(base + s*direction) - target; the response is
    near-linear for the scales involved, so this converges in a few posings.
    """
    B, P = model.shape_count, model.pose_dim
    x0 = _pack(base)

    def rms_at(s: float) -> float:
        return _vertex_rms(model, base, _unpack(x0 + s * direction, B, P))

    probe = 1e-4
    r = rms_at(probe)
    if r <= 0:
        raise SynthError("noise direction produced no vertex displacement")
    s_prev, f_prev = probe, r - target_rms
    s_cur = probe * target_rms / r
    for _ in range(25):
        f_cur = rms_at(s_cur) - target_rms
        if abs(f_cur) <= 1e-6 * target_rms + 1e-12:
            return s_cur * direction
        denom = f_cur - f_prev
        if denom == 0:
            break
        s_next = s_cur - f_cur * (s_cur - s_prev) / denom
        s_prev, f_prev = s_cur, f_cur
        s_cur = s_next
    return s_cur * direction


def _calibrated_frame_delta(model: BodyModel, gt: BodyParams, bias_delta: np.ndarray,
                            direction: np.ndarray, target_rms: float) -> np.ndarray:
    """Total per-frame delta (bias + scaled jitter) hitting target vertex RMS.

    The bias displacement and the jitter response overlap in the model's stiff
    directions, so the jitter scale solves the full quadratic interaction: fit
    rms^2(s) from three probes, take the positive root, refine by secant.
    """
    B, P = model.shape_count, model.pose_dim
    x0 = _pack(gt)

    def rms_at(s: float) -> float:
        return _vertex_rms(model, gt, _unpack(x0 + bias_delta + s * direction, B, P))

    h = 1e-4
    c = rms_at(0.0) ** 2
    gp = rms_at(h) ** 2
    gm = rms_at(-h) ** 2
    b = (gp - gm) / (2.0 * h)
    a = (gp + gm - 2.0 * c) / (2.0 * h * h)
    if a <= 0:
        raise SynthError("noise direction produced no vertex displacement")
    disc = b * b - 4.0 * a * (c - target_rms ** 2)
    s_cur = (-b + np.sqrt(max(disc, 0.0))) / (2.0 * a)
    f_cur = rms_at(s_cur) - target_rms
    s_prev, f_prev = 0.0, np.sqrt(c) - target_rms
    for _ in range(25):
        if abs(f_cur) <= 1e-6 * target_rms + 1e-12:
            break
        denom = f_cur - f_prev
        if denom == 0:
            break
        s_next = s_cur - f_cur * (s_cur - s_prev) / denom
        s_prev, f_prev = s_cur, f_cur
        s_cur, f_cur = s_next, rms_at(s_next) - target_rms
    return bias_delta + s_cur * direction


def _look_at(position: np.ndarray, target: np.ndarray, up_hint: np.ndarray) -> RigidTransform:
    z = normalized(target - position)
    x = normalized(np.cross(up_hint, z))
    y = np.cross(z, x)
    return RigidTransform.from_matrix_parts(np.column_stack([x, y, z]), position)


def _sample_cameras(rng, K: int, thorax: RigidTransform):
    R_th = thorax.rotation_matrix
    center = thorax.t
    cams = []
    for _ in range(K):
        radius = rng.uniform(1.0, 1.6)
        polar = np.arccos(rng.uniform(np.cos(np.radians(60.0)), 1.0))
        azim = rng.uniform(0.0, 2.0 * np.pi)
        local = np.array([np.sin(polar) * np.cos(azim),
                          np.sin(polar) * np.sin(azim),
                          np.cos(polar)])
        pos = center + radius * (R_th @ local)  # anterior hemisphere
        cams.append(_look_at(pos, center, R_th[:, 1]))
    return cams


def _perturbed_pose(rng, pose: RigidTransform, pos_sigma_m: float,
                    rot_sigma_rad: float) -> RigidTransform:
    R = pose.rotation_matrix @ rotvec_to_matrix(rng.normal(0.0, rot_sigma_rad, 3))
    t = pose.t + rng.normal(0.0, pos_sigma_m, 3)
    return RigidTransform.from_matrix_parts(R, t)


def session_id_for(config: SynthConfig) -> str:
    return f"synth-{config.seed}"


def generate_session(config: SynthConfig, model: BodyModel | None = None,
                     rules=None):
    """Build (CaptureSession, GroundTruth) for a seeded configuration."""
    if model is None:
        model = resolve_model_ref(config.model_ref)
    if model.flavor != "surface":
        raise SynthError("synthetic sessions need a surface-flavor model")
    rules = tuple(rules) if rules is not None else default_rules()
    B, P = model.shape_count, model.pose_dim
    dim = B + P + 3

    streams = np.random.SeedSequence(config.seed).spawn(5)
    body_rng = np.random.default_rng(streams[0])
    cam_rng = np.random.default_rng(streams[1])
    noise_rng = np.random.default_rng(streams[2])
    outlier_rng = np.random.default_rng(streams[3])
    operator_rng = np.random.default_rng(streams[4])

    # ground-truth body in a posture-consistent world placement
    beta = body_rng.uniform(-config.beta_range, config.beta_range, B)
    theta = body_rng.uniform(-np.radians(config.theta_range_deg),
                             np.radians(config.theta_range_deg), P)
    R_root = _POSTURE_ROOTS[config.posture] @ rotvec_to_matrix(body_rng.normal(0.0, 0.05, 3))
    theta[model.theta_slices[0]] = matrix_to_rotvec(R_root)
    translation = body_rng.normal(0.0, 0.1, 3)
    gt_params = BodyParams(beta, theta, translation)

    gt_body = pose_body(model, gt_params)
    mesh = SurfaceMesh(gt_body.vertices, model.faces)
    outcomes = generate_all(gt_body, model, rules, mesh=mesh)
    failed = [o.view_id for o in outcomes if o.status != "ok"]
    if failed:
        raise SynthError(f"ground-truth guidance failed for views: {failed}")
    true_poses = {o.view_id: o.pose for o in outcomes}

    cameras = _sample_cameras(cam_rng, config.frame_count, gt_body.thorax_frame)

    # per-frame world-frame noisy parameters
    sigma = config.vertex_noise_sigma_m
    if sigma > 0:
        bias_rms = sigma * np.sqrt(config.noise_bias_fraction)
        bias_delta = np.zeros(dim)
        if bias_rms > 0:
            bias_delta = _calibrated_delta(model, gt_params, noise_rng.normal(size=dim), bias_rms)
        frame_params = []
        for _ in range(config.frame_count):
            d = noise_rng.normal(size=dim)
            if config.noise_bias_fraction < 1.0:
                delta = _calibrated_frame_delta(model, gt_params, bias_delta, d, sigma)
            else:
                delta = bias_delta
            frame_params.append(_unpack(_pack(gt_params) + delta, B, P))
    else:
        frame_params = [gt_params] * config.frame_count

    # gross corruption of designated outlier frames
    if config.outlier_count > 0:
        outliers = tuple(sorted(int(i) for i in outlier_rng.choice(
            config.frame_count, size=config.outlier_count, replace=False)))
        corrupted = []
        for i in outliers:
            axis = normalized(outlier_rng.normal(size=3))
            tdir = normalized(outlier_rng.normal(size=3))
            T_err = RigidTransform.from_rotvec(
                axis * np.radians(config.outlier_rotation_deg),
                tdir * config.outlier_translation_m)
            corrupted.append((i, precompose_root(model, frame_params[i], T_err)))
        for i, p in corrupted:
            frame_params[i] = p
    else:
        outliers = ()

    frames = [CaptureFrame(cam, precompose_root(model, p, invert(cam)))
              for cam, p in zip(cameras, frame_params)]

    recorded = {}
    for view in sorted(true_poses):
        true = true_poses[view].pose
        guided = _perturbed_pose(operator_rng, true,
                                 config.operator_noise_pos_mm / 1000.0,
                                 np.radians(config.operator_noise_deg))
        recorded[view] = {"guided": guided, "ground_truth": true}

    sid = session_id_for(config)
    session = CaptureSession(sid, config.model_ref, config.posture, frames,
                             model.flavor, recorded_poses=recorded)
    gt = GroundTruth(sid, gt_params, true_poses, outliers, gt_body.thorax_frame)
    return session, gt


def gt_from_record(rec: dict, model: BodyModel) -> GroundTruth:
    """Rehydrate a GroundTruth from a sessionio.load_gt record."""
    from .guidance import ProbePose
    body = pose_body(model, rec["params"])
    poses = {view: ProbePose(e["pose"], view, e["contact_point_m"], e["surface_face"])
             for view, e in rec["true_probe_poses"].items()}
    return GroundTruth(rec["session_id"], rec["params"], poses,
                       tuple(rec["outlier_frames"]), body.thorax_frame)


def score_run(fit_rec: dict, guidance_rec: dict, gt: GroundTruth,
              model: BodyModel, total_frames: int) -> dict:
    """Scorecard for pipeline artifacts against ground truth.

    fit_rec / guidance_rec follow sessionio.load_fit_result / load_guidance_file
    shapes; pass loaded dicts or equivalently shaped in-memory records.
    """
    for rec, name in ((fit_rec, "fit"), (guidance_rec, "guidance")):
        if rec["session_id"] != gt.session_id:
            raise SynthError(f"{name} session_id {rec['session_id']!r} "
                             f"does not match ground truth {gt.session_id!r}")

    gt_body = pose_body(model, gt.params)
    fit_body = pose_body(model, fit_rec["params"])
    mv = model.torso_mask_vertices
    rms = float(np.sqrt(np.mean(np.sum(
        (fit_body.vertices[mv] - gt_body.vertices[mv]) ** 2, axis=1))))

    pred_out = set(range(total_frames)) - set(fit_rec["inlier_frames"])
    true_out = set(gt.outlier_frames)
    both = pred_out & true_out
    precision = len(both) / len(pred_out) if pred_out else 1.0
    recall = len(both) / len(true_out) if true_out else 1.0

    view_errors = {}
    failed = []
    for view, true_pp in sorted(gt.true_probe_poses.items()):
        entry = guidance_rec["views"].get(view)
        if entry is None or entry["status"] != "ok":
            failed.append(view)
            continue
        err = pose_error(entry["pose"], true_pp.pose, gt.thorax_frame)
        view_errors[view] = err
    return {"session_id": gt.session_id,
            "consensus_masked_rms_m": rms,
            "outlier_precision": precision,
            "outlier_recall": recall,
            "view_errors": view_errors,
            "views_failed": failed}
