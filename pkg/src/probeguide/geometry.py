"""SE(3) rigid transforms, rotation representations, and small vector utilities.

Conventions used throughout the package:

* quaternions are stored (w, x, y, z), unit norm, canonical sign w >= 0
* all lengths are meters; right-handed coordinates everywhere
* the body canonical frame has +Y superior (toward the head), +Z anterior
  (out of the chest), origin at the pelvis root
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "RigidTransform",
    "Plane",
    "compose",
    "invert",
    "transform_points",
    "rotate_vectors",
    "project_onto_plane",
    "normalized",
    "quat_to_matrix",
    "matrix_to_quat",
    "rotvec_to_quat",
    "quat_to_rotvec",
    "rotvec_to_matrix",
    "matrix_to_rotvec",
    "rotvecs_to_matrices",
    "axis_angle_matrix",
    "rotation_angle",
    "mean_rotation",
    "kabsch",
]

_QUAT_NORM_TOL = 1e-9


def normalized(v: np.ndarray, eps: float = 1e-12) -> np.ndarray:
    """Return v / |v|, raising on (near-)zero input."""
    v = np.asarray(v, dtype=float)
    n = float(np.linalg.norm(v))
    if n < eps:
        raise ValueError("cannot normalize near-zero vector")
    return v / n


def _canonical_quat(q: np.ndarray) -> np.ndarray:
    n = float(np.linalg.norm(q))
    if not np.isfinite(n) or n < 1e-8:
        raise ValueError(f"invalid quaternion (norm {n})")
    if abs(n - 1.0) > 1e-15:
        # skip the divide when already unit to the last ulp or two; an
        # already-canonical quaternion then passes through bit-exact, which
        # keeps serialize -> parse -> construct cycles stable
        q = q / n
    # canonical sign: w >= 0; for w == 0, first nonzero component positive
    if q[0] < 0.0:
        q = -q
    elif q[0] == 0.0:
        for c in q[1:]:
            if c != 0.0:
                if c < 0.0:
                    q = -q
                break
    return q


def quat_multiply(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ]
    )


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def matrix_to_quat(R: np.ndarray) -> np.ndarray:
    """Rotation matrix -> unit quaternion (w,x,y,z), canonical sign.

    Uses the standard four-branch trace method, stable for all rotations.
    """
    R = np.asarray(R, dtype=float)
    t = R[0, 0] + R[1, 1] + R[2, 2]
    if t > 0.0:
        s = np.sqrt(t + 1.0) * 2.0
        q = np.array(
            [0.25 * s, (R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s]
        )
    elif R[0, 0] > R[1, 1] and R[0, 0] > R[2, 2]:
        s = np.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2]) * 2.0
        q = np.array(
            [(R[2, 1] - R[1, 2]) / s, 0.25 * s, (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s]
        )
    elif R[1, 1] > R[2, 2]:
        s = np.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2]) * 2.0
        q = np.array(
            [(R[0, 2] - R[2, 0]) / s, (R[0, 1] + R[1, 0]) / s, 0.25 * s, (R[1, 2] + R[2, 1]) / s]
        )
    else:
        s = np.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1]) * 2.0
        q = np.array(
            [(R[1, 0] - R[0, 1]) / s, (R[0, 2] + R[2, 0]) / s, (R[1, 2] + R[2, 1]) / s, 0.25 * s]
        )
    return _canonical_quat(q)


def rotvec_to_quat(rv: np.ndarray) -> np.ndarray:
    rv = np.asarray(rv, dtype=float)
    angle = float(np.linalg.norm(rv))
    if angle < 1e-12:
        # second-order small-angle expansion keeps this smooth through zero
        half = 0.5 * rv
        return _canonical_quat(np.array([1.0 - 0.125 * angle * angle, half[0], half[1], half[2]]))
    axis = rv / angle
    s = np.sin(0.5 * angle)
    return _canonical_quat(np.array([np.cos(0.5 * angle), s * axis[0], s * axis[1], s * axis[2]]))


def quat_to_rotvec(q: np.ndarray) -> np.ndarray:
    q = _canonical_quat(np.asarray(q, dtype=float))
    sin_half = float(np.linalg.norm(q[1:]))
    angle = 2.0 * np.arctan2(sin_half, q[0])
    if sin_half < 1e-12:
        return 2.0 * q[1:]
    return q[1:] * (angle / sin_half)


def rotvec_to_matrix(rv: np.ndarray) -> np.ndarray:
    return quat_to_matrix(rotvec_to_quat(rv))


def matrix_to_rotvec(R: np.ndarray) -> np.ndarray:
    return quat_to_rotvec(matrix_to_quat(R))


def rotvecs_to_matrices(rv: np.ndarray) -> np.ndarray:
    """Batched Rodrigues: (..., 3) rotation vectors -> (..., 3, 3) matrices."""
    rv = np.asarray(rv, dtype=float)
    theta = np.linalg.norm(rv, axis=-1, keepdims=True)
    safe = np.where(theta < 1e-30, 1.0, theta)
    k = rv / safe
    kx, ky, kz = k[..., 0], k[..., 1], k[..., 2]
    zero = np.zeros_like(kx)
    K = np.stack(
        [
            np.stack([zero, -kz, ky], axis=-1),
            np.stack([kz, zero, -kx], axis=-1),
            np.stack([-ky, kx, zero], axis=-1),
        ],
        axis=-2,
    )
    st = np.sin(theta)[..., None]
    ct = np.cos(theta)[..., None]
    eye = np.broadcast_to(np.eye(3), K.shape)
    R = eye + st * K + (1.0 - ct) * (K @ K)
    # exact identity for (numerically) zero rotations
    tiny = (theta < 1e-30)[..., None]
    return np.where(tiny, eye, R)


def axis_angle_matrix(axis: np.ndarray, angle_rad: float) -> np.ndarray:
    """Rotation matrix about a (not necessarily unit) axis."""
    return rotvec_to_matrix(normalized(axis) * float(angle_rad))


def rotation_angle(Ra: np.ndarray, Rb: np.ndarray) -> float:
    """Geodesic angle in radians between two rotation matrices."""
    return float(np.linalg.norm(matrix_to_rotvec(np.asarray(Ra).T @ np.asarray(Rb))))


def mean_rotation(rotvecs: np.ndarray) -> np.ndarray:
    """Chordal mean of rotations, as a rotation vector.

    Averages the rotation matrices and projects back onto SO(3) via SVD,
    which is well behaved even for widely spread inputs.
    """
    rv = np.atleast_2d(np.asarray(rotvecs, dtype=float))
    M = rotvecs_to_matrices(rv).mean(axis=0)
    U, _, Vt = np.linalg.svd(M)
    S = np.diag([1.0, 1.0, float(np.sign(np.linalg.det(U @ Vt)))])
    return matrix_to_rotvec(U @ S @ Vt)


def kabsch(src: np.ndarray, dst: np.ndarray) -> "RigidTransform":
    """Least-squares rigid transform T with T(src) ~ dst (Kabsch/Umeyama, no scale)."""
    src = np.asarray(src, dtype=float)
    dst = np.asarray(dst, dtype=float)
    cs = src.mean(axis=0)
    cd = dst.mean(axis=0)
    H = (src - cs).T @ (dst - cd)
    U, _, Vt = np.linalg.svd(H)
    S = np.diag([1.0, 1.0, float(np.sign(np.linalg.det(Vt.T @ U.T)))])
    R = Vt.T @ S @ U.T
    t = cd - R @ cs
    return RigidTransform.from_matrix_parts(R, t)


class RigidTransform:
    """An SE(3) pose: rotation as a unit quaternion plus a translation in meters.

    Immutable; every constructor renormalizes the quaternion and applies the
    canonical sign, so downstream code can rely on unit norm and w >= 0.
    """

    __slots__ = ("q", "t")

    def __init__(self, rotation_wxyz, translation_m):
        q = _canonical_quat(np.array(rotation_wxyz, dtype=float).reshape(4))
        t = np.array(translation_m, dtype=float).reshape(3)
        if not np.all(np.isfinite(t)):
            raise ValueError("non-finite translation")
        q.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "t", t)

    def __setattr__(self, name, value):
        raise AttributeError("RigidTransform is immutable")

    def __repr__(self):
        return f"RigidTransform(q={self.q.tolist()}, t={self.t.tolist()})"

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls([1.0, 0.0, 0.0, 0.0], [0.0, 0.0, 0.0])

    @classmethod
    def from_matrix_parts(cls, R: np.ndarray, t) -> "RigidTransform":
        return cls(matrix_to_quat(R), t)

    @classmethod
    def from_matrix(cls, M: np.ndarray) -> "RigidTransform":
        M = np.asarray(M, dtype=float)
        if M.shape != (4, 4):
            raise ValueError("expected a 4x4 homogeneous matrix")
        return cls.from_matrix_parts(M[:3, :3], M[:3, 3])

    @classmethod
    def from_rotvec(cls, rv, translation_m=(0.0, 0.0, 0.0)) -> "RigidTransform":
        return cls(rotvec_to_quat(np.asarray(rv, dtype=float)), translation_m)

    @classmethod
    def from_axis_angle(cls, axis, angle_rad, translation_m=(0.0, 0.0, 0.0)) -> "RigidTransform":
        return cls.from_rotvec(normalized(axis) * float(angle_rad), translation_m)

    @property
    def rotation_matrix(self) -> np.ndarray:
        return quat_to_matrix(self.q)

    def matrix(self) -> np.ndarray:
        M = np.eye(4)
        M[:3, :3] = self.rotation_matrix
        M[:3, 3] = self.t
        return M

    def rotvec(self) -> np.ndarray:
        return quat_to_rotvec(self.q)

    def to_dict(self) -> dict:
        return {"rotation_wxyz": self.q.tolist(), "translation_m": self.t.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "RigidTransform":
        return cls(d["rotation_wxyz"], d["translation_m"])

    def approx_equal(self, other: "RigidTransform", tol: float = 1e-9) -> bool:
        dq = min(np.linalg.norm(self.q - other.q), np.linalg.norm(self.q + other.q))
        return dq <= tol and float(np.linalg.norm(self.t - other.t)) <= tol


def compose(a: RigidTransform, b: RigidTransform) -> RigidTransform:
    """Composition a after b: (a o b)(x) = a(b(x))."""
    q = quat_multiply(a.q, b.q)
    t = a.rotation_matrix @ b.t + a.t
    return RigidTransform(q, t)


def invert(T: RigidTransform) -> RigidTransform:
    qi = np.array([T.q[0], -T.q[1], -T.q[2], -T.q[3]])
    Ri = quat_to_matrix(qi)
    return RigidTransform(qi, -(Ri @ T.t))


def transform_points(T: RigidTransform, pts: np.ndarray) -> np.ndarray:
    """Apply p -> R p + t to a single point (3,) or a point cloud (N, 3)."""
    pts = np.asarray(pts, dtype=float)
    single = pts.ndim == 1
    out = np.atleast_2d(pts) @ T.rotation_matrix.T + T.t
    return out[0] if single else out


def rotate_vectors(T: RigidTransform, v: np.ndarray) -> np.ndarray:
    """Rotation part only (for directions / normals)."""
    v = np.asarray(v, dtype=float)
    single = v.ndim == 1
    out = np.atleast_2d(v) @ T.rotation_matrix.T
    return out[0] if single else out


def project_onto_plane(v: np.ndarray, plane_normal: np.ndarray) -> np.ndarray:
    """Component of v orthogonal to a unit plane normal: v - (v.n)n."""
    v = np.asarray(v, dtype=float)
    n = np.asarray(plane_normal, dtype=float)
    return v - float(np.dot(v, n)) * n


class Plane:
    """An oriented plane: unit normal plus a point on the plane."""

    __slots__ = ("normal", "point")

    def __init__(self, normal, point):
        n = np.array(normal, dtype=float).reshape(3)
        if abs(float(np.linalg.norm(n)) - 1.0) > _QUAT_NORM_TOL:
            n = normalized(n)
        p = np.array(point, dtype=float).reshape(3)
        n.setflags(write=False)
        p.setflags(write=False)
        object.__setattr__(self, "normal", n)
        object.__setattr__(self, "point", p)

    def __setattr__(self, name, value):
        raise AttributeError("Plane is immutable")

    @classmethod
    def from_transform(cls, T: RigidTransform) -> "Plane":
        """Plane through T's origin with normal along T's z axis."""
        return cls(T.rotation_matrix[:, 2], T.t)

    def signed_distance(self, p) -> float:
        return float(np.dot(np.asarray(p, dtype=float) - self.point, self.normal))
