"""Anatomy-referenced probe pose generation on the posed torso surface.

A scan-plane rule names a landmark, nudges it inside the thorax frame, picks a
projection direction (radial from the longitudinal axis, or the nearest face
normal), and casts onto the body surface from outside. The probe sits at the
contact point pushed inward by a contact offset, its z axis along the inward
projection direction, its x axis derived from the longitudinal axis plus an
in-plane spin, with final tilts about the thorax axes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._kernels import bvh_build, ray_cast_brute, ray_cast_bvh
from .bodymodel import BodyModel, PosedBody, UnknownLandmarkError
from .geometry import RigidTransform, axis_angle_matrix, normalized

PROJECTION_MODES = ("radial_from_axis", "nearest_surface_normal")

VIEW_IDS = ("suprasternal_lax", "subcostal_4ch", "plax", "psax", "a4c",
            "subcostal_ivc", "lung_r_ant", "lung_l_ant", "lung_r_cpa", "lung_l_cpa")

_DEGENERATE_EPS = 1e-9


class GuidanceError(RuntimeError):
    pass


class ProjectionMissError(GuidanceError):
    """The projection ray never crossed the body surface."""


class DegenerateDirectionError(GuidanceError):
    """Projection or image-plane direction collapsed below threshold."""


@dataclass(frozen=True)
class ScanPlaneRule:
    view_id: str
    landmark: str
    pre_offset_mm: tuple = (0.0, 0.0, 0.0)
    projection_mode: str = "radial_from_axis"
    inward_offset_mm: float = 0.0
    spin_deg: float = 0.0
    tilt_deg: tuple = (0.0, 0.0)

    def __post_init__(self):
        object.__setattr__(self, "pre_offset_mm", tuple(float(v) for v in self.pre_offset_mm))
        object.__setattr__(self, "tilt_deg", tuple(float(v) for v in self.tilt_deg))
        if len(self.pre_offset_mm) != 3:
            raise ValueError("pre_offset_mm must have 3 components")
        if len(self.tilt_deg) != 2:
            raise ValueError("tilt_deg must have 2 components")
        if self.projection_mode not in PROJECTION_MODES:
            raise ValueError(f"unknown projection_mode {self.projection_mode!r}")
        if not self.inward_offset_mm >= 0.0:
            raise ValueError("inward_offset_mm must be >= 0")
        if not abs(self.spin_deg) <= 180.0:
            raise ValueError("spin_deg must lie in [-180, 180]")

    def to_dict(self) -> dict:
        return {"view_id": self.view_id, "landmark": self.landmark,
                "pre_offset_mm": list(self.pre_offset_mm),
                "projection_mode": self.projection_mode,
                "inward_offset_mm": self.inward_offset_mm,
                "spin_deg": self.spin_deg, "tilt_deg": list(self.tilt_deg)}

    @classmethod
    def from_dict(cls, d: dict) -> "ScanPlaneRule":
        from . import jsonio
        jsonio.check_keys(d, ["view_id", "landmark"],
                          optional=["pre_offset_mm", "projection_mode",
                                    "inward_offset_mm", "spin_deg", "tilt_deg"],
                          where="scan plane rule")
        return cls(**d)


@dataclass
class ProbePose:
    pose: RigidTransform
    view_id: str
    contact_point: np.ndarray
    surface_face: int


@dataclass
class GuidanceOutcome:
    """Per-view result of a batch run; failed views carry the error text."""

    view_id: str
    status: str
    pose: ProbePose | None = None
    error: str | None = None


def closest_points_on_triangles(p: np.ndarray, tri: np.ndarray) -> np.ndarray:
    """Closest point to p on each triangle (N, 3, 3), fully vectorized."""
    a, b, c = tri[:, 0], tri[:, 1], tri[:, 2]
    ab = b - a
    ac = c - a
    ap = p[None] - a
    d1 = np.sum(ab * ap, axis=1)
    d2 = np.sum(ac * ap, axis=1)
    bp = p[None] - b
    d3 = np.sum(ab * bp, axis=1)
    d4 = np.sum(ac * bp, axis=1)
    cp = p[None] - c
    d5 = np.sum(ab * cp, axis=1)
    d6 = np.sum(ac * cp, axis=1)
    va = d3 * d6 - d5 * d4
    vb = d5 * d2 - d1 * d6
    vc = d1 * d4 - d3 * d2
    with np.errstate(divide="ignore", invalid="ignore"):
        v_edge_ab = d1 / (d1 - d3)
        w_edge_ac = d2 / (d2 - d6)
        w_edge_bc = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        denom = va + vb + vc
        v_in = vb / denom
        w_in = vc / denom
    out = a + v_in[:, None] * ab + w_in[:, None] * ac          # interior default
    m_bc = (va <= 0) & (d4 - d3 >= 0) & (d5 - d6 >= 0)
    out = np.where(m_bc[:, None], b + w_edge_bc[:, None] * (c - b), out)
    m_ac = (vb <= 0) & (d2 >= 0) & (d6 <= 0)
    out = np.where(m_ac[:, None], a + w_edge_ac[:, None] * ac, out)
    m_ab = (vc <= 0) & (d1 >= 0) & (d3 <= 0)
    out = np.where(m_ab[:, None], a + v_edge_ab[:, None] * ab, out)
    m_c = (d6 >= 0) & (d5 <= d6)
    out = np.where(m_c[:, None], c, out)
    m_b = (d3 >= 0) & (d4 <= d3)
    out = np.where(m_b[:, None], b, out)
    m_a = (d1 <= 0) & (d2 <= 0)
    out = np.where(m_a[:, None], a, out)
    return out


class SurfaceMesh:
    """A posed triangle surface with lazy BVH acceleration."""

    def __init__(self, vertices: np.ndarray, faces: np.ndarray):
        self.vertices = np.ascontiguousarray(vertices, dtype=float)
        self.faces = np.ascontiguousarray(faces, dtype=np.int64)
        self._bvh = None
        self._centroids = None

    @property
    def bvh(self):
        if self._bvh is None:
            self._bvh = bvh_build(self.vertices, self.faces)
        return self._bvh

    @property
    def centroids(self) -> np.ndarray:
        if self._centroids is None:
            self._centroids = self.vertices[self.faces].mean(axis=1)
        return self._centroids

    def bounding_diagonal(self) -> float:
        return float(np.linalg.norm(self.vertices.max(axis=0) - self.vertices.min(axis=0)))

    def face_normal(self, face: int) -> np.ndarray:
        v0, v1, v2 = self.vertices[self.faces[face]]
        return normalized(np.cross(v1 - v0, v2 - v0))

    def nearest_face(self, p: np.ndarray, prefilter: int = 64) -> int:
        """Face with the smallest exact point distance; ties to lowest index."""
        d2 = np.sum((self.centroids - p[None]) ** 2, axis=1)
        k = min(prefilter, d2.shape[0])
        cand = np.argpartition(d2, k - 1)[:k]
        cand = np.sort(cand)
        cp = closest_points_on_triangles(p, self.vertices[self.faces[cand]])
        dist = np.linalg.norm(cp - p[None], axis=1)
        return int(cand[np.argmin(dist)])

    def cast(self, origins: np.ndarray, dirs: np.ndarray, method: str = "bvh"):
        """(t, face, point) per ray; face -1 and NaN point on miss."""
        origins = np.atleast_2d(np.asarray(origins, dtype=float))
        dirs = np.atleast_2d(np.asarray(dirs, dtype=float))
        if method == "bvh":
            return ray_cast_bvh(self.vertices, self.faces, self.bvh, origins, dirs)
        if method == "brute":
            return ray_cast_brute(self.vertices, self.faces, origins, dirs)
        raise ValueError(f"unknown cast method {method!r}")


def ray_mesh_intersect(mesh: SurfaceMesh, origin, direction, method: str = "bvh"):
    """Nearest positive intersection as (point, face, distance), or None on miss."""
    t, face, point = mesh.cast(np.asarray(origin, dtype=float)[None],
                               np.asarray(direction, dtype=float)[None], method=method)
    if face[0] < 0:
        return None
    return point[0], int(face[0]), float(t[0])


def generate_guidance(body: PosedBody, model: BodyModel, rule: ScanPlaneRule,
                      mesh: SurfaceMesh | None = None, method: str = "bvh") -> ProbePose:
    """One probe pose for one rule on one posed body."""
    if mesh is None:
        mesh = SurfaceMesh(body.vertices, model.faces)
    R_th = body.thorax_frame.rotation_matrix
    x_th, y_th = R_th[:, 0], R_th[:, 1]
    try:
        lm = body.landmark_points[rule.landmark]
    except KeyError:
        raise UnknownLandmarkError(rule.landmark) from None
    p = lm + R_th @ (np.asarray(rule.pre_offset_mm) / 1000.0)

    if rule.projection_mode == "radial_from_axis":
        pelvis = body.joints[model.joint_index["pelvis"]]
        v = p - pelvis
        radial = v - (v @ y_th) * y_th
        norm = np.linalg.norm(radial)
        if norm < _DEGENERATE_EPS:
            raise DegenerateDirectionError(
                f"{rule.view_id}: target on the longitudinal axis, no radial direction")
        n = radial / norm
    else:
        n = mesh.face_normal(mesh.nearest_face(p))

    far = mesh.bounding_diagonal() + 1.0
    hit = ray_mesh_intersect(mesh, p + far * n, -n, method=method)
    if hit is None:
        raise ProjectionMissError(f"{rule.view_id}: projection ray missed the surface")
    contact, face, _ = hit

    position = contact - (rule.inward_offset_mm / 1000.0) * n
    z_p = -n
    x_raw = y_th - (y_th @ z_p) * z_p
    x_norm = np.linalg.norm(x_raw)
    if x_norm < _DEGENERATE_EPS:
        raise DegenerateDirectionError(
            f"{rule.view_id}: longitudinal axis parallel to the probe axis")
    x_p = axis_angle_matrix(z_p, np.radians(rule.spin_deg)) @ (x_raw / x_norm)
    y_p = np.cross(z_p, x_p)
    R0 = np.column_stack([x_p, y_p, z_p])
    R_tilt = (axis_angle_matrix(y_th, np.radians(rule.tilt_deg[1]))
              @ axis_angle_matrix(x_th, np.radians(rule.tilt_deg[0])))
    pose = RigidTransform.from_matrix_parts(R_tilt @ R0, position)
    return ProbePose(pose, rule.view_id, contact, face)


def generate_all(body: PosedBody, model: BodyModel, rules,
                 mesh: SurfaceMesh | None = None, method: str = "bvh") -> list:
    """One outcome per rule; a failing view never aborts the batch."""
    if mesh is None:
        mesh = SurfaceMesh(body.vertices, model.faces)
    out = []
    for rule in rules:
        try:
            pose = generate_guidance(body, model, rule, mesh=mesh, method=method)
            out.append(GuidanceOutcome(rule.view_id, "ok", pose=pose))
        except (GuidanceError, UnknownLandmarkError) as e:
            out.append(GuidanceOutcome(rule.view_id, "error", error=str(e)))
    return out


def default_rules() -> tuple:
    """The stock ten-view rule table.

    Offsets and angles are structural placeholders exercising every field, not
    clinically validated probe placements.
    """
    mk = ScanPlaneRule
    return (
        mk("suprasternal_lax", "sternum_upper", (0, 25, 0), "radial_from_axis", 3, 0, (10, 0)),
        mk("subcostal_4ch", "sternum_lower", (15, -30, 0), "radial_from_axis", 4, 80, (-10, 0)),
        mk("plax", "rib_l_ant", (-10, 10, 0), "radial_from_axis", 4, 30, (0, 5)),
        mk("psax", "rib_l_ant", (-10, 10, 0), "radial_from_axis", 4, -60, (0, 5)),
        mk("a4c", "rib_l_apex", (0, -5, 0), "radial_from_axis", 5, 45, (5, 0)),
        mk("subcostal_ivc", "sternum_lower", (0, -30, 0), "radial_from_axis", 4, 0, (-10, 0)),
        mk("lung_r_ant", "rib_r_ant", (0, 20, 0), "nearest_surface_normal", 2, 0, (0, 0)),
        mk("lung_l_ant", "rib_l_ant", (0, 20, 0), "nearest_surface_normal", 2, 0, (0, 0)),
        mk("lung_r_cpa", "rib_r_cpa", (0, -10, 0), "radial_from_axis", 3, 0, (0, -10)),
        mk("lung_l_cpa", "rib_l_cpa", (0, -10, 0), "radial_from_axis", 3, 0, (0, 10)),
    )
