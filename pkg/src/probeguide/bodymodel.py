"""Parametric body model: template + shape blendshapes + joint regressor + LBS.

Two flavors share the machinery:

* "surface": 22 joints, every joint a free 3-DOF rotation (pose dim 66)
* "skeleton": 20 joints with per-joint reduced DOF (pose dim 46)

A model also carries named bony landmarks (barycentric points on faces) and a
torso mask (vertex + joint subsets) that restricts fitting to the trunk.
Pure LBS, no pose-corrective blendshapes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import jsonio
from ._kernels import lbs_blend
from .geometry import RigidTransform, matrix_to_rotvec, normalized, rotvec_to_matrix

SURFACE_POSE_DIM = 66
SKELETON_POSE_DIM = 46

_AXIS_INDEX = {"x": 0, "y": 1, "z": 2}


class ModelError(ValueError):
    """A body model file violates a structural invariant."""


class UnknownLandmarkError(KeyError):
    pass


@dataclass(frozen=True)
class BodyParams:
    """One body configuration: shape beta, pose theta, root translation (m)."""

    beta: np.ndarray
    theta: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "beta", np.asarray(self.beta, dtype=float).reshape(-1))
        object.__setattr__(self, "theta", np.asarray(self.theta, dtype=float).reshape(-1))
        object.__setattr__(self, "translation", np.asarray(self.translation, dtype=float).reshape(3))

    def copy(self) -> "BodyParams":
        return BodyParams(self.beta.copy(), self.theta.copy(), self.translation.copy())

    def to_dict(self) -> dict:
        return {
            "beta": self.beta.tolist(),
            "theta": self.theta.tolist(),
            "translation_m": self.translation.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BodyParams":
        return cls(d["beta"], d["theta"], d["translation_m"])

    @classmethod
    def zeros(cls, model: "BodyModel") -> "BodyParams":
        return cls(np.zeros(model.shape_count), np.zeros(model.pose_dim), np.zeros(3))


class BodyModel:
    """Immutable parametric body. See module docstring for the two flavors."""

    def __init__(self, *, template, faces, shape_dirs, joint_regressor, skin_weights,
                 parents, pose_dof, landmarks, torso_mask_vertices, torso_mask_joints,
                 joint_names, flavor, version):
        self.template = np.asarray(template, dtype=float)
        self.faces = np.asarray(faces, dtype=np.int64)
        self.shape_dirs = np.asarray(shape_dirs, dtype=float)
        self.joint_regressor = np.asarray(joint_regressor, dtype=float)
        self.skin_weights = np.asarray(skin_weights, dtype=float)
        self.parents = np.asarray(parents, dtype=np.int64)
        self.pose_dof = tuple(
            (int(d["dof"]), tuple(d.get("axes", ()))) for d in pose_dof
        )
        self.landmarks = {
            str(k): (int(v["face"]), np.asarray(v["bary"], dtype=float).reshape(3))
            for k, v in landmarks.items()
        }
        self.torso_mask_vertices = np.asarray(sorted(int(i) for i in torso_mask_vertices), dtype=np.int64)
        self.torso_mask_joints = np.asarray(sorted(int(i) for i in torso_mask_joints), dtype=np.int64)
        self.joint_names = tuple(str(n) for n in joint_names)
        self.flavor = str(flavor)
        self.version = str(version)
        self.joint_index = {n: i for i, n in enumerate(self.joint_names)}
        # per-joint slices into the flat theta vector
        dofs = [d for d, _ in self.pose_dof]
        offs = np.concatenate([[0], np.cumsum(dofs)])
        self.theta_slices = tuple(slice(int(offs[j]), int(offs[j + 1])) for j in range(len(dofs)))
        self.pose_dim = int(offs[-1])
        self._validate()
        for a in (self.template, self.faces, self.shape_dirs, self.joint_regressor,
                  self.skin_weights, self.parents, self.torso_mask_vertices,
                  self.torso_mask_joints):
            a.setflags(write=False)

    @property
    def vertex_count(self) -> int:
        return self.template.shape[0]

    @property
    def face_count(self) -> int:
        return self.faces.shape[0]

    @property
    def joint_count(self) -> int:
        return self.parents.shape[0]

    @property
    def shape_count(self) -> int:
        return self.shape_dirs.shape[2]

    def _validate(self):
        V, J = self.vertex_count, self.joint_count
        if self.template.ndim != 2 or self.template.shape[1] != 3:
            raise ModelError("template must be V x 3")
        if self.faces.ndim != 2 or self.faces.shape[1] != 3:
            raise ModelError("faces must be F x 3")
        if self.faces.min(initial=0) < 0 or self.faces.max(initial=-1) >= V:
            raise ModelError("face vertex index out of range")
        if self.shape_dirs.shape[:2] != (V, 3):
            raise ModelError("shape_dirs must be V x 3 x B")
        if self.joint_regressor.shape != (J, V):
            raise ModelError("joint_regressor must be J x V")
        if self.skin_weights.shape != (V, J):
            raise ModelError("skin_weights must be V x J")
        if len(self.pose_dof) != J or len(self.joint_names) != J:
            raise ModelError("pose_dof and joint_names must have one entry per joint")
        for name, arr in (("template", self.template), ("shape_dirs", self.shape_dirs),
                          ("joint_regressor", self.joint_regressor),
                          ("skin_weights", self.skin_weights)):
            if not np.all(np.isfinite(arr)):
                raise ModelError(f"{name} contains non-finite values")
        if np.any(self.joint_regressor < -1e-9) or np.any(self.skin_weights < -1e-9):
            raise ModelError("regressor/skinning weights must be nonnegative")
        bad = np.abs(self.joint_regressor.sum(axis=1) - 1.0) > 1e-6
        if np.any(bad):
            raise ModelError(f"joint_regressor rows {np.nonzero(bad)[0].tolist()} do not sum to 1")
        bad = np.abs(self.skin_weights.sum(axis=1) - 1.0) > 1e-6
        if np.any(bad):
            raise ModelError(f"skin_weights rows {np.nonzero(bad)[0][:5].tolist()} do not sum to 1")
        if self.parents[0] != -1 or np.any(self.parents[1:] < 0):
            raise ModelError("joint 0 must be the single root (parent -1)")
        if np.any(self.parents[1:] >= np.arange(1, J)):
            raise ModelError("kinematic parents must satisfy parent < child")
        for j, (dof, axes) in enumerate(self.pose_dof):
            if dof not in (1, 2, 3):
                raise ModelError(f"joint {j}: dof must be 1, 2, or 3")
            if dof < 3:
                if len(axes) != dof or any(a not in _AXIS_INDEX for a in axes):
                    raise ModelError(f"joint {j}: dof {dof} needs that many axis labels")
            elif axes:
                raise ModelError(f"joint {j}: 3-DOF joints take no axis list")
        if self.flavor == "surface":
            if self.pose_dim != SURFACE_POSE_DIM or any(d != 3 for d, _ in self.pose_dof):
                raise ModelError(f"surface flavor requires 22 free joints (pose dim {SURFACE_POSE_DIM})")
        elif self.flavor == "skeleton":
            if self.pose_dim != SKELETON_POSE_DIM:
                raise ModelError(f"skeleton flavor requires pose dim {SKELETON_POSE_DIM}, got {self.pose_dim}")
        else:
            raise ModelError(f"unknown flavor {self.flavor!r}")
        for name, (face, bary) in self.landmarks.items():
            if not 0 <= face < self.face_count:
                raise ModelError(f"landmark {name}: face index out of range")
            if np.any(bary < -1e-12) or abs(float(bary.sum()) - 1.0) > 1e-9:
                raise ModelError(f"landmark {name}: invalid barycentric coordinates")
        mv = self.torso_mask_vertices
        if mv.size == 0 or mv.size >= V:
            raise ModelError("torso vertex mask must be a nonempty proper subset")
        if mv.min() < 0 or mv.max() >= V:
            raise ModelError("torso vertex mask index out of range")
        mj = self.torso_mask_joints
        if mj.size == 0 or mj.min() < 0 or mj.max() >= J:
            raise ModelError("torso joint mask invalid")
        in_mask = np.zeros(V, dtype=bool)
        in_mask[mv] = True
        for name in self.landmarks:
            if name.startswith("sternum"):
                if not in_mask[self.faces[self.landmarks[name][0]]].all():
                    raise ModelError(f"landmark {name}: triangle not inside torso mask")
        vol = _signed_volume(self.template, self.faces)
        if vol <= 0:
            raise ModelError(f"mesh winding is not consistently outward (signed volume {vol:.3e})")
        needed = {"pelvis", "neck", "l_shoulder", "r_shoulder"}
        if not needed <= set(self.joint_names):
            raise ModelError(f"joint_names must include {sorted(needed)}")

    # ------------------------------------------------------------------
    def shaped_template(self, beta: np.ndarray) -> np.ndarray:
        beta = np.asarray(beta, dtype=float)
        if beta.shape != (self.shape_count,):
            raise ModelError(f"beta must have length {self.shape_count}")
        return self.template + self.shape_dirs @ beta

    def rest_joints(self, beta: np.ndarray) -> np.ndarray:
        return self.joint_regressor @ self.shaped_template(beta)

    def local_rotations(self, theta: np.ndarray) -> np.ndarray:
        """Per-joint local rotation matrices from the flat pose vector.

        3-DOF joints read a rotation vector; reduced joints chain single-axis
        rotations in their declared axis order.
        """
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.pose_dim,):
            raise ModelError(f"theta must have length {self.pose_dim}")
        R = np.empty((self.joint_count, 3, 3))
        for j, (dof, axes) in enumerate(self.pose_dof):
            seg = theta[self.theta_slices[j]]
            if dof == 3:
                R[j] = rotvec_to_matrix(seg)
            else:
                M = np.eye(3)
                for angle, axis in zip(seg, axes):
                    rv = np.zeros(3)
                    rv[_AXIS_INDEX[axis]] = angle
                    M = M @ rotvec_to_matrix(rv)
                R[j] = M
        return R


def _signed_volume(verts: np.ndarray, faces: np.ndarray) -> float:
    tri = verts[faces]
    return float(np.einsum("fi,fi->", tri[:, 0], np.cross(tri[:, 1], tri[:, 2]))) / 6.0


class PosedBody:
    """Result of posing a model: vertices, joints, landmarks, thorax frame."""

    __slots__ = ("vertices", "joints", "landmark_points", "thorax_frame", "frame")

    def __init__(self, vertices, joints, landmark_points, thorax_frame, frame):
        self.vertices = vertices
        self.joints = joints
        self.landmark_points = landmark_points
        self.thorax_frame = thorax_frame
        self.frame = frame
        vertices.setflags(write=False)
        joints.setflags(write=False)


def global_joint_transforms(model: BodyModel, beta: np.ndarray, theta: np.ndarray):
    """Chain local rotations along the kinematic tree.

    Returns (R_world (J,3,3), p_world (J,3), rest_joints (J,3)), all without
    the global translation.
    """
    j0 = model.rest_joints(beta)
    Rl = model.local_rotations(theta)
    J = model.joint_count
    Rw = np.empty((J, 3, 3))
    pw = np.empty((J, 3))
    Rw[0] = Rl[0]
    pw[0] = j0[0]
    for j in range(1, J):
        p = model.parents[j]
        Rw[j] = Rw[p] @ Rl[j]
        pw[j] = pw[p] + Rw[p] @ (j0[j] - j0[p])
    return Rw, pw, j0


def derive_thorax_frame(model: BodyModel, joints: np.ndarray, origin: np.ndarray) -> RigidTransform:
    """Anatomical reference frame from posed joints.

    y: pelvis-to-neck (longitudinal), z: anterior from the shoulder-line cross
    product, x: completes the right-handed triad; origin at the mid-sternum.
    """
    pelvis = joints[model.joint_index["pelvis"]]
    neck = joints[model.joint_index["neck"]]
    lsh = joints[model.joint_index["l_shoulder"]]
    rsh = joints[model.joint_index["r_shoulder"]]
    y = normalized(neck - pelvis)
    z = normalized(np.cross(lsh - rsh, y))
    x = np.cross(y, z)
    R = np.stack([x, y, z], axis=1)
    return RigidTransform.from_matrix_parts(R, origin)


def pose_body(model: BodyModel, params: BodyParams, frame: str = "body") -> PosedBody:
    """Evaluate the model: shape, forward kinematics, skinning, landmarks."""
    beta = np.asarray(params.beta, dtype=float)
    theta = np.asarray(params.theta, dtype=float)
    trans = np.asarray(params.translation, dtype=float).reshape(3)
    if not (np.all(np.isfinite(beta)) and np.all(np.isfinite(theta)) and np.all(np.isfinite(trans))):
        raise ModelError("non-finite body parameters")
    shaped = model.shaped_template(beta)
    Rw, pw, j0 = global_joint_transforms(model, beta, theta)
    rel_t = pw - np.einsum("jab,jb->ja", Rw, j0)
    verts = lbs_blend(model.skin_weights, Rw[None], rel_t[None], shaped[None])[0]
    verts += trans
    joints = pw + trans
    lms = {}
    for name, (face, bary) in model.landmarks.items():
        lms[name] = bary @ verts[model.faces[face]]
    thorax = derive_thorax_frame(model, joints, lms["sternum_mid"]) if "sternum_mid" in lms \
        else derive_thorax_frame(model, joints, joints[model.joint_index["pelvis"]])
    return PosedBody(verts, joints, lms, thorax, frame)


def pose_vertices_batch(model: BodyModel, betas: np.ndarray, thetas: np.ndarray,
                        translations: np.ndarray) -> np.ndarray:
    """Vertices only, for a batch of parameter samples (used by the fitter)."""
    S = betas.shape[0]
    shaped = model.template[None] + np.einsum("vcb,sb->svc", model.shape_dirs, betas)
    Rw = np.empty((S, model.joint_count, 3, 3))
    rel_t = np.empty((S, model.joint_count, 3))
    for s in range(S):
        R, p, j0 = global_joint_transforms(model, betas[s], thetas[s])
        Rw[s] = R
        rel_t[s] = p - np.einsum("jab,jb->ja", R, j0)
    out = lbs_blend(model.skin_weights, Rw, rel_t, shaped)
    out += translations[:, None, :]
    return out


def landmark_point(body: PosedBody, name: str) -> np.ndarray:
    try:
        return body.landmark_points[name]
    except KeyError:
        raise UnknownLandmarkError(name) from None


def surface_normal_at(body: PosedBody, model: BodyModel, face: int) -> np.ndarray:
    """Outward unit normal of a posed triangle (CCW winding seen from outside)."""
    if not 0 <= face < model.face_count:
        raise ModelError(f"face index {face} out of range")
    a, b, c = body.vertices[model.faces[face]]
    n = np.cross(b - a, c - a)
    nn = float(np.linalg.norm(n))
    if nn < 1e-15:
        raise ModelError(f"face {face} is degenerate (zero area)")
    return n / nn


def precompose_root(model: BodyModel, params: BodyParams, T: RigidTransform) -> BodyParams:
    """Fold a rigid transform into the root pose.

    pose_body(precompose_root(p, T)) equals T applied to pose_body(p), exactly:
    the root rotation is left-multiplied and the translation re-derived about
    the shaped root joint.
    """
    root_slice = model.theta_slices[0]
    if root_slice.stop - root_slice.start != 3:
        raise ModelError("root joint must be 3-DOF to precompose a rigid transform")
    R_T = T.rotation_matrix
    theta = params.theta.copy()
    R_root = rotvec_to_matrix(theta[root_slice])
    theta[root_slice] = matrix_to_rotvec(R_T @ R_root)
    j0 = model.rest_joints(params.beta)[0]
    t_new = R_T @ (j0 + params.translation) + T.t - j0
    return BodyParams(params.beta.copy(), theta, t_new)


# ----------------------------------------------------------------------
# model file (.pbm.json)

_MODEL_FIELDS = ["template", "faces", "shape_dirs", "joint_regressor", "skin_weights",
                 "parents", "pose_dof", "landmarks", "torso_mask", "flavor", "version",
                 "joint_names", "schema_version"]


def save_model(model: BodyModel, path) -> None:
    doc = {
        "schema_version": jsonio.SCHEMA_VERSION,
        "flavor": model.flavor,
        "version": model.version,
        "template": jsonio.encode_array(model.template, "<f4"),
        "faces": jsonio.encode_array(model.faces, "<i4"),
        "shape_dirs": jsonio.encode_array(model.shape_dirs, "<f4"),
        "joint_regressor": jsonio.encode_array(model.joint_regressor, "<f4"),
        "skin_weights": jsonio.encode_array(model.skin_weights, "<f4"),
        "parents": model.parents.tolist(),
        "pose_dof": [
            {"dof": d, "axes": list(axes)} if d < 3 else {"dof": d}
            for d, axes in model.pose_dof
        ],
        "landmarks": {
            name: {"face": face, "bary": bary.tolist()}
            for name, (face, bary) in model.landmarks.items()
        },
        "torso_mask": {
            "vertices": model.torso_mask_vertices.tolist(),
            "joints": model.torso_mask_joints.tolist(),
        },
        "joint_names": list(model.joint_names),
    }
    jsonio.write_json(path, doc)


def load_model(path) -> BodyModel:
    doc = jsonio.read_json(path)
    jsonio.check_keys(doc, _MODEL_FIELDS, where=f"model file {path}")
    jsonio.check_schema_version(doc, where=f"model file {path}")
    tm = doc["torso_mask"]
    jsonio.check_keys(tm, ["vertices", "joints"], where="torso_mask")
    try:
        return BodyModel(
            template=jsonio.decode_array(doc["template"], "<f4"),
            faces=jsonio.decode_array(doc["faces"], "<i4"),
            shape_dirs=jsonio.decode_array(doc["shape_dirs"], "<f4"),
            joint_regressor=jsonio.decode_array(doc["joint_regressor"], "<f4"),
            skin_weights=jsonio.decode_array(doc["skin_weights"], "<f4"),
            parents=doc["parents"],
            pose_dof=doc["pose_dof"],
            landmarks=doc["landmarks"],
            torso_mask_vertices=tm["vertices"],
            torso_mask_joints=tm["joints"],
            joint_names=doc["joint_names"],
            flavor=doc["flavor"],
            version=doc["version"],
        )
    except (KeyError, TypeError) as exc:
        raise jsonio.SchemaError(f"model file {path}: malformed field ({exc})") from exc
