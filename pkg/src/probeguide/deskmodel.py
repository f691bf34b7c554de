"""Procedural desk-scale body model generator.

Builds a fully synthetic articulated body (superellipsoid torso, capsule
limbs, ellipsoid head/hands/feet) with shape blendshapes, a joint regressor,
skinning weights, bony landmarks, and a torso mask, in two flavors:

* surface: 22 free joints (pose dim 66)
* skeleton: 20 anatomically constrained joints (pose dim 46)

Both flavors share the mesh, the blendshapes, and the torso joints, so a
torso-masked fit can convert between them exactly at the desk scale. Two
resolutions are generated: "full" (7002 vertices) and "small" (1694) for
cheaper statistical test runs. Everything is deterministic arithmetic; no RNG.

Run `python -m probeguide.deskmodel --out-dir DIR` to (re)write the bundled
model assets.
"""

from __future__ import annotations

import numpy as np

from .bodymodel import BodyModel, save_model

# canonical frame: +Y superior, +Z anterior, origin at pelvis root; +X = patient left

_JOINT_POS = {
    "pelvis": (0.0, 0.0, 0.0),
    "spine_lower": (0.0, 0.10, -0.01),
    "spine_mid": (0.0, 0.22, -0.015),
    "spine_upper": (0.0, 0.36, -0.01),
    "neck": (0.0, 0.545, 0.0),
    "head": (0.0, 0.66, 0.01),
    "l_clavicle": (0.07, 0.51, 0.0),
    "r_clavicle": (-0.07, 0.51, 0.0),
    "l_shoulder": (0.185, 0.50, 0.0),
    "r_shoulder": (-0.185, 0.50, 0.0),
    "l_elbow": (0.205, 0.24, 0.02),
    "r_elbow": (-0.205, 0.24, 0.02),
    "l_wrist": (0.215, 0.015, 0.045),
    "r_wrist": (-0.215, 0.015, 0.045),
    "l_hip": (0.09, -0.02, 0.0),
    "r_hip": (-0.09, -0.02, 0.0),
    "l_knee": (0.10, -0.42, 0.01),
    "r_knee": (-0.10, -0.42, 0.01),
    "l_ankle": (0.105, -0.82, -0.01),
    "r_ankle": (-0.105, -0.82, -0.01),
    "l_foot": (0.11, -0.885, 0.05),
    "r_foot": (-0.11, -0.885, 0.05),
}

# (name, parent, dof, axes) in a parent-before-child order
_SKELETON_JOINTS = [
    ("pelvis", None, 3, ()),
    ("spine_lower", "pelvis", 3, ()),
    ("l_hip", "pelvis", 3, ()),
    ("r_hip", "pelvis", 3, ()),
    ("spine_mid", "spine_lower", 3, ()),
    ("l_knee", "l_hip", 1, ("x",)),
    ("r_knee", "r_hip", 1, ("x",)),
    ("spine_upper", "spine_mid", 3, ()),
    ("l_ankle", "l_knee", 2, ("x", "z")),
    ("r_ankle", "r_knee", 2, ("x", "z")),
    ("neck", "spine_upper", 2, ("x", "y")),
    ("l_clavicle", "spine_upper", 3, ()),
    ("r_clavicle", "spine_upper", 3, ()),
    ("head", "neck", 2, ("x", "z")),
    ("l_shoulder", "l_clavicle", 3, ()),
    ("r_shoulder", "r_clavicle", 3, ()),
    ("l_elbow", "l_shoulder", 1, ("x",)),
    ("r_elbow", "r_shoulder", 1, ("x",)),
    ("l_wrist", "l_elbow", 2, ("x", "z")),
    ("r_wrist", "r_elbow", 2, ("x", "z")),
]

_SURFACE_JOINTS = [
    ("pelvis", None, 3, ()),
    ("l_hip", "pelvis", 3, ()),
    ("r_hip", "pelvis", 3, ()),
    ("spine_lower", "pelvis", 3, ()),
    ("l_knee", "l_hip", 3, ()),
    ("r_knee", "r_hip", 3, ()),
    ("spine_mid", "spine_lower", 3, ()),
    ("l_ankle", "l_knee", 3, ()),
    ("r_ankle", "r_knee", 3, ()),
    ("spine_upper", "spine_mid", 3, ()),
    ("l_foot", "l_ankle", 3, ()),
    ("r_foot", "r_ankle", 3, ()),
    ("neck", "spine_upper", 3, ()),
    ("l_clavicle", "spine_upper", 3, ()),
    ("r_clavicle", "spine_upper", 3, ()),
    ("head", "neck", 3, ()),
    ("l_shoulder", "l_clavicle", 3, ()),
    ("r_shoulder", "r_clavicle", 3, ()),
    ("l_elbow", "l_shoulder", 3, ()),
    ("r_elbow", "r_shoulder", 3, ()),
    ("l_wrist", "l_elbow", 3, ()),
    ("r_wrist", "r_elbow", 3, ()),
]

_TORSO_JOINTS = ["pelvis", "spine_lower", "spine_mid", "spine_upper", "neck",
                 "l_clavicle", "r_clavicle", "l_shoulder", "r_shoulder",
                 "l_hip", "r_hip"]

# torso superellipsoid: |x/a|^p + |(y-cy)/b|^p + |z/c|^p = 1
_TORSO = {"a": 0.17, "b": 0.31, "c": 0.105, "cy": 0.23, "p": 3.0}

# per-resolution (rings, segments) per component
_GRID = {
    "full": {"torso": (64, 56), "head": (20, 26), "neck": (10, 10),
             "arm": (14, 18), "leg": (16, 22), "foot": (8, 12), "hand": (8, 10)},
    "small": {"torso": (26, 24), "head": (10, 12), "neck": (4, 12),
              "arm": (8, 10), "leg": (8, 12), "foot": (4, 12), "hand": (4, 9)},
}

_LANDMARK_TARGETS = {
    "sternum_upper": (0.0, 0.46, None),
    "sternum_mid": (0.0, 0.36, None),
    "sternum_lower": (0.0, 0.26, None),
    "rib_l_ant": (0.075, 0.30, None),
    "rib_r_ant": (-0.075, 0.30, None),
    "rib_l_apex": (0.095, 0.22, None),
    "rib_l_cpa": (0.12, 0.16, "back"),
    "rib_r_cpa": (-0.12, 0.16, "back"),
}


def _sphere_grid(rings: int, segs: int):
    """Unit-sphere UV grid: vertices (N,3) with poles on +-y, faces (2*rings*segs, 3)."""
    phi = np.pi * (np.arange(rings) + 1) / (rings + 1)
    theta = 2.0 * np.pi * np.arange(segs) / segs
    pts = [np.array([0.0, 1.0, 0.0])]
    for p in phi:
        sp, cp = np.sin(p), np.cos(p)
        for t in theta:
            pts.append(np.array([sp * np.cos(t), cp, sp * np.sin(t)]))
    pts.append(np.array([0.0, -1.0, 0.0]))
    verts = np.array(pts)

    def ring(i, j):
        return 1 + i * segs + (j % segs)

    faces = []
    for j in range(segs):
        faces.append((0, ring(0, j + 1), ring(0, j)))
    for i in range(rings - 1):
        for j in range(segs):
            a, b = ring(i, j), ring(i, j + 1)
            c, d = ring(i + 1, j + 1), ring(i + 1, j)
            faces.append((a, b, c))
            faces.append((a, c, d))
    last = verts.shape[0] - 1
    for j in range(segs):
        faces.append((last, ring(rings - 1, j), ring(rings - 1, j + 1)))
    return verts, np.array(faces, dtype=np.int64)


def _orient_outward(verts: np.ndarray, faces: np.ndarray) -> np.ndarray:
    tri = verts[faces]
    vol = float(np.einsum("fi,fi->", tri[:, 0], np.cross(tri[:, 1], tri[:, 2]))) / 6.0
    if vol < 0:
        return faces[:, [0, 2, 1]]
    return faces


def _superellipsoid(u: np.ndarray, a: float, b: float, c: float, p: float) -> np.ndarray:
    """Scale unit directions onto the superellipsoid surface."""
    w = (np.abs(u[:, 0] / a) ** p + np.abs(u[:, 1] / b) ** p + np.abs(u[:, 2] / c) ** p)
    r = w ** (-1.0 / p)
    return u * r[:, None]


def _capsule(u: np.ndarray, radius: float, length: float) -> np.ndarray:
    """Map unit-sphere points to a y-aligned capsule (cylinder + hemispheres).

    Latitude is re-parameterized so a third of the rings covers each cap and
    a third the cylinder wall, giving the wall real vertices to skin with.
    """
    phi = np.arccos(np.clip(u[:, 1], -1.0, 1.0))
    theta = np.arctan2(u[:, 2], u[:, 0])
    s = phi / np.pi
    out = np.empty_like(u)
    half = length / 2.0
    top = s < 1.0 / 3.0
    mid = (s >= 1.0 / 3.0) & (s <= 2.0 / 3.0)
    bot = s > 2.0 / 3.0
    a = s[top] * 3.0 * (np.pi / 2.0)
    out[top, 0] = radius * np.sin(a) * np.cos(theta[top])
    out[top, 1] = half + radius * np.cos(a)
    out[top, 2] = radius * np.sin(a) * np.sin(theta[top])
    yy = half - (s[mid] - 1.0 / 3.0) * 3.0 * length
    out[mid, 0] = radius * np.cos(theta[mid])
    out[mid, 1] = yy
    out[mid, 2] = radius * np.sin(theta[mid])
    a = (s[bot] - 2.0 / 3.0) * 3.0 * (np.pi / 2.0) + np.pi / 2.0
    out[bot, 0] = radius * np.sin(a) * np.cos(theta[bot])
    out[bot, 1] = -half + radius * np.cos(a)
    out[bot, 2] = radius * np.sin(a) * np.sin(theta[bot])
    return out


def _rot_y_to(axis: np.ndarray) -> np.ndarray:
    """Rotation taking +y onto the given unit axis."""
    y = np.array([0.0, 1.0, 0.0])
    c = float(np.dot(y, axis))
    if c > 1.0 - 1e-12:
        return np.eye(3)
    if c < -1.0 + 1e-12:
        return np.diag([1.0, -1.0, -1.0])
    v = np.cross(y, axis)
    K = np.array([[0, -v[2], v[1]], [v[2], 0, -v[0]], [-v[1], v[0], 0]])
    return np.eye(3) + K + K @ K / (1.0 + c)


class _MeshBuilder:
    def __init__(self):
        self.verts = []
        self.faces = []
        self.component = {}

    def add(self, name: str, verts: np.ndarray, faces: np.ndarray):
        base = sum(v.shape[0] for v in self.verts)
        faces = _orient_outward(verts, faces)
        self.verts.append(verts)
        self.faces.append(faces + base)
        self.component[name] = (base, base + verts.shape[0])

    def finish(self):
        return np.vstack(self.verts), np.vstack(self.faces)

    def comp_indices(self, *names):
        out = []
        for n in names:
            lo, hi = self.component[n]
            out.append(np.arange(lo, hi))
        return np.concatenate(out)


def _build_mesh(resolution: str) -> _MeshBuilder:
    g = _GRID[resolution]
    b = _MeshBuilder()
    J = {k: np.array(v) for k, v in _JOINT_POS.items()}

    u, f = _sphere_grid(*g["torso"])
    t = _TORSO
    v = _superellipsoid(u, t["a"], t["b"], t["c"], t["p"])
    v[:, 1] += t["cy"]
    b.add("torso", v, f)

    u, f = _sphere_grid(*g["head"])
    v = u * np.array([0.09, 0.115, 0.095]) + np.array([0.0, 0.78, 0.01])
    b.add("head", v, f)

    u, f = _sphere_grid(*g["neck"])
    v = _capsule(u, 0.055, 0.07) + np.array([0.0, 0.60, 0.0])
    b.add("neck", v, f)

    def limb(name, start, end, radius, grid):
        u, f = _sphere_grid(*grid)
        axis = J[end] - J[start]
        L = float(np.linalg.norm(axis))
        v = _capsule(u, radius, L)
        R = _rot_y_to(axis / L)
        # capsule runs +y(top)=start joint .. -y(bottom)=end joint before orienting
        v = v @ _rot_y_to(np.array([0.0, -1.0, 0.0])).T
        v = v @ R.T + (J[start] + J[end]) / 2.0
        b.add(name, v, f)

    limb("l_upper_arm", "l_shoulder", "l_elbow", 0.045, g["arm"])
    limb("r_upper_arm", "r_shoulder", "r_elbow", 0.045, g["arm"])
    limb("l_forearm", "l_elbow", "l_wrist", 0.038, g["arm"])
    limb("r_forearm", "r_elbow", "r_wrist", 0.038, g["arm"])

    for side, sx in (("l", 1.0), ("r", -1.0)):
        u, f = _sphere_grid(*g["hand"])
        v = u * np.array([0.04, 0.09, 0.025]) + np.array([sx * 0.22, -0.075, 0.05])
        b.add(f"{side}_hand", v, f)

    limb("l_thigh", "l_hip", "l_knee", 0.07, g["leg"])
    limb("r_thigh", "r_hip", "r_knee", 0.07, g["leg"])
    limb("l_shin", "l_knee", "l_ankle", 0.05, g["leg"])
    limb("r_shin", "r_knee", "r_ankle", 0.05, g["leg"])

    for side, sx in (("l", 1.0), ("r", -1.0)):
        u, f = _sphere_grid(*g["foot"])
        v = u * np.array([0.045, 0.035, 0.11]) + np.array([sx * 0.11, -0.885, 0.05])
        b.add(f"{side}_foot", v, f)
    return b


# ----------------------------------------------------------------------
# shape blendshapes: 10 smooth global displacement fields (meters per unit beta)

def _shape_dirs(b: _MeshBuilder, verts: np.ndarray) -> np.ndarray:
    V = verts.shape[0]
    x, y, z = verts[:, 0], verts[:, 1], verts[:, 2]
    S = np.zeros((V, 3, 10))
    S[:, :, 0] = 0.05 * verts                                   # overall scale
    S[:, 1, 1] = 0.06 * y                                       # height
    S[:, 0, 2] = 0.04 * x                                       # width
    S[:, 2, 3] = 0.04 * z                                       # depth
    belly = np.exp(-(((y - 0.12) / 0.15) ** 2) - ((x / 0.18) ** 2)) / (1.0 + np.exp(-z / 0.03))
    S[:, 2, 4] = 0.04 * belly                                   # belly
    S[:, 0, 5] = 0.04 * np.exp(-(((y - 0.50) / 0.12) ** 2)) * (x / 0.2)   # shoulder width

    limb_names = ["l_upper_arm", "r_upper_arm", "l_forearm", "r_forearm",
                  "l_thigh", "r_thigh", "l_shin", "r_shin"]
    seg_ends = {"l_upper_arm": ("l_shoulder", "l_elbow"), "r_upper_arm": ("r_shoulder", "r_elbow"),
                "l_forearm": ("l_elbow", "l_wrist"), "r_forearm": ("r_elbow", "r_wrist"),
                "l_thigh": ("l_hip", "l_knee"), "r_thigh": ("r_hip", "r_knee"),
                "l_shin": ("l_knee", "l_ankle"), "r_shin": ("r_knee", "r_ankle")}
    for name in limb_names:
        idx = b.comp_indices(name)
        p0 = np.array(_JOINT_POS[seg_ends[name][0]])
        p1 = np.array(_JOINT_POS[seg_ends[name][1]])
        seg = p1 - p0
        tt = np.clip((verts[idx] - p0) @ seg / float(seg @ seg), 0.0, 1.0)
        radial = verts[idx] - (p0 + tt[:, None] * seg)
        nn = np.linalg.norm(radial, axis=1, keepdims=True)
        nn[nn < 1e-9] = 1.0
        S[idx, :, 6] = 0.012 * radial / nn                      # limb thickness

    legs = 1.0 / (1.0 + np.exp(y / 0.04))
    S[:, 1, 7] = 0.07 * legs * (y / 0.85)                       # leg length (y<0 stretches down)
    head_c = np.array([0.0, 0.78, 0.01])
    wh = np.exp(-(np.linalg.norm(verts - head_c, axis=1) / 0.16) ** 2)
    S[:, :, 8] = 0.35 * wh[:, None] * (verts - head_c)          # head size
    chest = np.exp(-(((y - 0.35) / 0.12) ** 2))
    S[:, 0, 9] = 0.20 * chest * x                               # chest girth
    S[:, 2, 9] = 0.20 * chest * z
    return S


# ----------------------------------------------------------------------
# joint regressor: convex vertex weights reproducing each joint center

def _slab_row(verts, idx, y0, half, weight=None):
    sel = idx[np.abs(verts[idx, 1] - y0) <= half]
    if weight is not None:
        w = weight(verts[sel])
        keep = w > 1e-9
        sel, w = sel[keep], w[keep]
    else:
        w = np.ones(sel.shape[0])
    return sel, w / w.sum()


def _knn_row(verts, idx, target, k):
    d = np.linalg.norm(verts[idx] - target, axis=1)
    order = np.lexsort((idx, d))[:k]
    sel = idx[order]
    return sel, np.full(sel.shape[0], 1.0 / sel.shape[0])


def _knn2_row(verts, idx_a, idx_b, target, k):
    """k nearest from each of two components; the symmetric pick cancels the
    bias of capsule cap rings that bulge past the joint center."""
    sa, _ = _knn_row(verts, idx_a, target, k)
    sb, _ = _knn_row(verts, idx_b, target, k)
    sel = np.concatenate([sa, sb])
    return sel, np.full(sel.shape[0], 1.0 / sel.shape[0])


def _joint_regressor(b: _MeshBuilder, verts: np.ndarray, joint_names, resolution: str) -> np.ndarray:
    V = verts.shape[0]
    torso = b.comp_indices("torso")
    neckc = b.comp_indices("neck")
    slab = 0.03 if resolution == "full" else 0.05
    knn = 12 if resolution == "full" else 8
    rows = np.zeros((len(joint_names), V))
    for j, name in enumerate(joint_names):
        p = np.array(_JOINT_POS[name])
        if name in ("pelvis", "spine_lower", "spine_mid", "spine_upper"):
            sel, w = _slab_row(verts, torso, p[1], slab)
        elif name == "neck":
            sel, w = _slab_row(verts, neckc, p[1], 0.06)
        elif name in ("l_hip", "r_hip", "l_clavicle", "r_clavicle"):
            sx = 1.0 if name.startswith("l_") else -1.0
            sel, w = _slab_row(verts, torso, p[1], slab,
                               weight=lambda q, sx=sx: np.maximum(sx * q[:, 0], 0.0) ** 2)
        elif name in ("l_shoulder", "r_shoulder"):
            sel, w = _knn_row(verts, b.comp_indices(f"{name[0]}_upper_arm"), p, knn)
        elif name in ("l_elbow", "r_elbow"):
            sel, w = _knn2_row(verts, b.comp_indices(f"{name[0]}_upper_arm"),
                               b.comp_indices(f"{name[0]}_forearm"), p, knn)
        elif name in ("l_wrist", "r_wrist"):
            sel, w = _knn2_row(verts, b.comp_indices(f"{name[0]}_forearm"),
                               b.comp_indices(f"{name[0]}_hand"), p, knn)
        elif name in ("l_knee", "r_knee"):
            sel, w = _knn2_row(verts, b.comp_indices(f"{name[0]}_thigh"),
                               b.comp_indices(f"{name[0]}_shin"), p, knn)
        elif name in ("l_ankle", "r_ankle"):
            sel, w = _knn2_row(verts, b.comp_indices(f"{name[0]}_shin"),
                               b.comp_indices(f"{name[0]}_foot"), p, knn)
        elif name in ("l_foot", "r_foot"):
            sel, w = _knn_row(verts, b.comp_indices(name), p, knn)
        elif name == "head":
            sel, w = _knn_row(verts, b.comp_indices("head", "neck"), p, 2 * knn)
        else:
            raise AssertionError(name)
        rows[j, sel] = w
    return rows


# ----------------------------------------------------------------------
# skinning: gaussian falloff to bone segments, component-restricted, top-4

_BONE_CHILD = {
    "pelvis": "spine_lower", "spine_lower": "spine_mid", "spine_mid": "spine_upper",
    "spine_upper": "neck", "neck": "head",
    "l_clavicle": "l_shoulder", "r_clavicle": "r_shoulder",
    "l_shoulder": "l_elbow", "r_shoulder": "r_elbow",
    "l_elbow": "l_wrist", "r_elbow": "r_wrist",
    "l_hip": "l_knee", "r_hip": "r_knee",
    "l_knee": "l_ankle", "r_knee": "r_ankle",
}
_BONE_TIP = {
    "head": (0.0, 0.12, 0.0), "l_wrist": (0.005, -0.09, 0.035),
    "r_wrist": (-0.005, -0.09, 0.035), "l_ankle": (0.005, -0.05, 0.09),
    "r_ankle": (-0.005, -0.05, 0.09), "l_foot": (0.0, 0.0, 0.08),
    "r_foot": (0.0, 0.0, 0.08),
}


def _seg_dist(p: np.ndarray, a: np.ndarray, bpt: np.ndarray) -> np.ndarray:
    ab = bpt - a
    denom = float(ab @ ab)
    tt = np.clip((p - a) @ ab / denom, 0.0, 1.0) if denom > 1e-12 else np.zeros(p.shape[0])
    return np.linalg.norm(p - (a + tt[:, None] * ab), axis=1)


def _skin_weights(b: _MeshBuilder, verts: np.ndarray, joint_names, joints: np.ndarray) -> np.ndarray:
    V = verts.shape[0]
    J = len(joint_names)
    jidx = {n: i for i, n in enumerate(joint_names)}
    has_foot = "l_foot" in jidx

    def bone(name):
        a = joints[jidx[name]]
        if name in _BONE_CHILD and _BONE_CHILD[name] in jidx:
            return a, joints[jidx[_BONE_CHILD[name]]]
        return a, a + np.array(_BONE_TIP.get(name, (0.0, 0.02, 0.0)))

    comp_joints = {
        "torso": [(n, 0.09) for n in _TORSO_JOINTS],
        "head": [("neck", 0.05), ("head", 0.09)],
        "neck": [("spine_upper", 0.05), ("neck", 0.05), ("head", 0.05)],
    }
    for s in ("l", "r"):
        comp_joints[f"{s}_upper_arm"] = [(f"{s}_clavicle", 0.05), (f"{s}_shoulder", 0.06), (f"{s}_elbow", 0.05)]
        comp_joints[f"{s}_forearm"] = [(f"{s}_shoulder", 0.05), (f"{s}_elbow", 0.05), (f"{s}_wrist", 0.05)]
        comp_joints[f"{s}_hand"] = [(f"{s}_elbow", 0.05), (f"{s}_wrist", 0.06)]
        comp_joints[f"{s}_thigh"] = [(f"{s}_hip", 0.08), (f"{s}_knee", 0.06)]
        comp_joints[f"{s}_shin"] = [(f"{s}_knee", 0.06), (f"{s}_ankle", 0.05)]
        foot_joints = [(f"{s}_ankle", 0.06)]
        if has_foot:
            foot_joints.append((f"{s}_foot", 0.06))
        comp_joints[f"{s}_foot"] = foot_joints

    W = np.zeros((V, J))
    for comp, cand in comp_joints.items():
        idx = b.comp_indices(comp)
        p = verts[idx]
        raw = np.zeros((idx.shape[0], J))
        for name, sigma in cand:
            a, bp = bone(name)
            d = _seg_dist(p, a, bp)
            raw[:, jidx[name]] = np.exp(-((d / sigma) ** 2))
        if len(cand) > 4:
            order = np.argsort(-raw, axis=1, kind="stable")
            keep = np.zeros_like(raw, dtype=bool)
            np.put_along_axis(keep, order[:, :4], True, axis=1)
            raw[~keep] = 0.0
        # guard: a vertex far from every candidate bone binds to the nearest one
        dead = raw.sum(axis=1) < 1e-12
        if np.any(dead):
            dcols = np.array([jidx[n] for n, _ in cand])
            dists = np.stack([_seg_dist(p[dead], *bone(n)) for n, _ in cand], axis=1)
            raw[np.nonzero(dead)[0], dcols[np.argmin(dists, axis=1)]] = 1.0
        W[idx] = raw / raw.sum(axis=1, keepdims=True)
    return W


# ----------------------------------------------------------------------
# landmarks: closest surface point on the torso component

def _closest_point_bary(p, a, bpt, c):
    """Barycentric coordinates of the closest point to p on triangle (a,b,c)."""
    ab = bpt - a
    ac = c - a
    ap = p - a
    d1, d2 = float(ab @ ap), float(ac @ ap)
    if d1 <= 0 and d2 <= 0:
        return np.array([1.0, 0.0, 0.0])
    bp = p - bpt
    d3, d4 = float(ab @ bp), float(ac @ bp)
    if d3 >= 0 and d4 <= d3:
        return np.array([0.0, 1.0, 0.0])
    vc = d1 * d4 - d3 * d2
    if vc <= 0 and d1 >= 0 and d3 <= 0:
        t = d1 / (d1 - d3)
        return np.array([1.0 - t, t, 0.0])
    cp = p - c
    d5, d6 = float(ab @ cp), float(ac @ cp)
    if d6 >= 0 and d5 <= d6:
        return np.array([0.0, 0.0, 1.0])
    vb = d5 * d2 - d1 * d6
    if vb <= 0 and d2 >= 0 and d6 <= 0:
        t = d2 / (d2 - d6)
        return np.array([1.0 - t, 0.0, t])
    va = d3 * d6 - d5 * d4
    if va <= 0 and (d4 - d3) >= 0 and (d5 - d6) >= 0:
        t = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        return np.array([0.0, 1.0 - t, t])
    denom = 1.0 / (va + vb + vc)
    v = vb * denom
    w = vc * denom
    return np.array([1.0 - v - w, v, w])


def _torso_front_z(x: float, y: float) -> float:
    t = _TORSO
    w = 1.0 - abs(x / t["a"]) ** t["p"] - abs((y - t["cy"]) / t["b"]) ** t["p"]
    return t["c"] * max(w, 0.0) ** (1.0 / t["p"])


def _landmarks(b: _MeshBuilder, verts: np.ndarray, faces: np.ndarray) -> dict:
    lo, hi = b.component["torso"]
    torso_faces = np.nonzero((faces >= lo).all(axis=1) & (faces < hi).all(axis=1))[0]
    cent = verts[faces[torso_faces]].mean(axis=1)
    out = {}
    for name, (x, y, side) in _LANDMARK_TARGETS.items():
        z = _torso_front_z(x, y)
        target = np.array([x, y, -z if side == "back" else z])
        d = np.linalg.norm(cent - target, axis=1)
        cand = torso_faces[np.lexsort((torso_faces, d))[:40]]
        best = None
        for f in cand:
            a, bb, c = verts[faces[f]]
            bary = _closest_point_bary(target, a, bb, c)
            pt = bary[0] * a + bary[1] * bb + bary[2] * c
            dd = float(np.linalg.norm(pt - target))
            key = (dd, int(f))
            if best is None or key < best[0]:
                best = (key, int(f), bary)
        out[name] = {"face": best[1], "bary": best[2].tolist()}
    return out


# ----------------------------------------------------------------------

def build_desk_model(flavor: str, resolution: str = "full") -> BodyModel:
    """Construct one desk model variant in memory."""
    spec = _SURFACE_JOINTS if flavor == "surface" else _SKELETON_JOINTS
    names = [s[0] for s in spec]
    idx = {n: i for i, n in enumerate(names)}
    parents = [-1 if s[1] is None else idx[s[1]] for s in spec]
    pose_dof = [{"dof": s[2]} if s[2] == 3 else {"dof": s[2], "axes": list(s[3])} for s in spec]

    b = _build_mesh(resolution)
    verts, faces = b.finish()
    shape_dirs = _shape_dirs(b, verts)
    regressor = _joint_regressor(b, verts, names, resolution)
    joints = regressor @ verts
    weights = _skin_weights(b, verts, names, joints)
    landmarks = _landmarks(b, verts, faces)
    lo, hi = b.component["torso"]
    return BodyModel(
        template=verts,
        faces=faces,
        shape_dirs=shape_dirs,
        joint_regressor=regressor,
        skin_weights=weights,
        parents=parents,
        pose_dof=pose_dof,
        landmarks=landmarks,
        torso_mask_vertices=list(range(lo, hi)),
        torso_mask_joints=[idx[n] for n in _TORSO_JOINTS],
        joint_names=names,
        flavor=flavor,
        version=f"desk-{resolution}-1",
    )


_VARIANTS = [("full", "surface"), ("full", "skeleton"), ("small", "surface"), ("small", "skeleton")]


def asset_name(resolution: str, flavor: str) -> str:
    return f"desk_{resolution}_{flavor}.pbm.json"


def write_assets(out_dir) -> list:
    import os

    written = []
    for resolution, flavor in _VARIANTS:
        model = build_desk_model(flavor, resolution)
        path = os.path.join(str(out_dir), asset_name(resolution, flavor))
        save_model(model, path)
        written.append(path)
    return written


def main(argv=None) -> int:
    import argparse
    import os

    ap = argparse.ArgumentParser(description="regenerate the bundled desk body models")
    ap.add_argument("--out-dir", default=os.path.join(os.path.dirname(__file__), "assets"))
    args = ap.parse_args(argv)
    os.makedirs(args.out_dir, exist_ok=True)
    for path in write_assets(args.out_dir):
        print(path)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
