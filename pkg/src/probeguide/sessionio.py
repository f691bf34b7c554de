"""Interchange schemas: capture sessions, run configs, rules, results, scenes.

Every file is strict JSON with an explicit schema_version; unknown fields are
rejected so stale or misspelled configs fail loudly. Serialization goes through
the canonical writer, which makes equal inputs produce byte-identical files.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from . import jsonio
from .bodymodel import BodyModel, BodyParams, load_model
from .consensus import CaptureFrame, RansacConfig
from .fitting import FitConfig
from .geometry import RigidTransform
from .guidance import ScanPlaneRule
from .jsonio import SchemaError

POSTURES = ("supine", "left_lateral_decubitus")

_BUILTIN_PREFIX = "builtin:"


# ---------------------------------------------------------------------------
# model references

def resolve_model_ref(ref: str, base_dir: str = ".") -> BodyModel:
    """Load a model from a path or a builtin: token (e.g. builtin:desk_full_surface)."""
    if ref.startswith(_BUILTIN_PREFIX):
        name = ref[len(_BUILTIN_PREFIX):]
        path = os.path.join(os.path.dirname(__file__), "assets", f"{name}.pbm.json")
        if not os.path.exists(path):
            raise SchemaError(f"unknown builtin model {ref!r}")
        return load_model(path)
    path = ref if os.path.isabs(ref) else os.path.join(base_dir, ref)
    if not os.path.exists(path):
        raise SchemaError(f"model file not found: {path}")
    return load_model(path)


# ---------------------------------------------------------------------------
# body params and probe poses as plain JSON values

def params_to_dict(params: BodyParams, flavor: str) -> dict:
    d = params.to_dict()
    d["flavor"] = flavor
    return d


def params_from_dict(d: dict, where: str) -> tuple:
    jsonio.check_keys(d, ["beta", "theta", "translation_m", "flavor"], where=where)
    p = BodyParams(np.asarray(d["beta"], dtype=float),
                   np.asarray(d["theta"], dtype=float),
                   np.asarray(d["translation_m"], dtype=float))
    return p, str(d["flavor"])


def pose_record(pose: RigidTransform, contact=None, face=None) -> dict:
    rec = {"pose": pose.to_dict()}
    rec["contact_point_m"] = None if contact is None else [float(v) for v in contact]
    rec["surface_face"] = None if face is None else int(face)
    return rec


def pose_from_record(d: dict, where: str):
    jsonio.check_keys(d, ["pose"], optional=["contact_point_m", "surface_face"], where=where)
    pose = RigidTransform.from_dict(d["pose"])
    contact = d.get("contact_point_m")
    if contact is not None:
        contact = np.asarray(contact, dtype=float)
        if contact.shape != (3,):
            raise SchemaError(f"{where}: contact_point_m must have 3 components")
    face = d.get("surface_face")
    return pose, contact, (None if face is None else int(face))


# ---------------------------------------------------------------------------
# capture sessions

@dataclass
class CaptureSession:
    session_id: str
    model_ref: str
    posture_label: str
    frames: list
    flavor: str
    units: str = "meters"
    recorded_poses: dict | None = None  # view_id -> {"guided": RT, "ground_truth": RT}
    base_dir: str = "."


def _frame_to_dict(frame: CaptureFrame, flavor: str) -> dict:
    return {"camera_pose": frame.camera_pose.to_dict(),
            "body_estimate": params_to_dict(frame.body_estimate, flavor)}


def session_to_dict(s: CaptureSession) -> dict:
    d = {"schema_version": jsonio.SCHEMA_VERSION,
         "session_id": s.session_id,
         "units": s.units,
         "model_ref": s.model_ref,
         "posture_label": s.posture_label,
         "frames": [_frame_to_dict(f, s.flavor) for f in s.frames]}
    if s.recorded_poses is not None:
        d["recorded_poses"] = {
            view: {"guided": rec["guided"].to_dict(),
                   "ground_truth": rec["ground_truth"].to_dict()}
            for view, rec in sorted(s.recorded_poses.items())}
    return d


def save_session(path: str, session: CaptureSession):
    jsonio.write_json(path, session_to_dict(session))


def load_session(path: str) -> CaptureSession:
    d = jsonio.read_json(path)
    where = os.path.basename(path)
    jsonio.check_schema_version(d, where)
    jsonio.check_keys(d, ["schema_version", "session_id", "units", "model_ref",
                          "posture_label", "frames"],
                      optional=["recorded_poses"], where=where)
    if d["units"] != "meters":
        raise SchemaError(f"{where}: units must be 'meters', got {d['units']!r}")
    if d["posture_label"] not in POSTURES:
        raise SchemaError(f"{where}: unknown posture_label {d['posture_label']!r}")
    if not isinstance(d["frames"], list) or len(d["frames"]) < 1:
        raise SchemaError(f"{where}: frames must be a nonempty list")
    frames = []
    flavor = None
    dim = None
    for i, fd in enumerate(d["frames"]):
        fwhere = f"{where}: frames[{i}]"
        jsonio.check_keys(fd, ["camera_pose", "body_estimate"], where=fwhere)
        cam = RigidTransform.from_dict(fd["camera_pose"])
        params, fl = params_from_dict(fd["body_estimate"], fwhere)
        if flavor is None:
            flavor, dim = fl, params.theta.shape[0]
        elif fl != flavor or params.theta.shape[0] != dim:
            raise SchemaError(f"{fwhere}: flavor/dimension differs from earlier frames")
        frames.append(CaptureFrame(cam, params))
    recorded = None
    if "recorded_poses" in d:
        recorded = {}
        for view, rec in d["recorded_poses"].items():
            rwhere = f"{where}: recorded_poses[{view}]"
            jsonio.check_keys(rec, ["guided", "ground_truth"], where=rwhere)
            recorded[view] = {"guided": RigidTransform.from_dict(rec["guided"]),
                              "ground_truth": RigidTransform.from_dict(rec["ground_truth"])}
    return CaptureSession(str(d["session_id"]), str(d["model_ref"]),
                          str(d["posture_label"]), frames, flavor,
                          units=str(d["units"]), recorded_poses=recorded,
                          base_dir=os.path.dirname(os.path.abspath(path)))


# ---------------------------------------------------------------------------
# run config and rules

@dataclass
class RunConfig:
    fit: FitConfig = field(default_factory=FitConfig)
    ransac: RansacConfig = field(default_factory=RansacConfig)
    rules: str | None = None
    seed: int | None = None


def load_run_config(path: str) -> RunConfig:
    d = jsonio.read_json(path)
    where = os.path.basename(path)
    jsonio.check_schema_version(d, where)
    jsonio.check_keys(d, ["schema_version"], optional=["fit", "ransac", "rules", "seed"],
                      where=where)
    return RunConfig(FitConfig.from_dict(d.get("fit", {})),
                     RansacConfig.from_dict(d.get("ransac", {})),
                     d.get("rules"), d.get("seed"))


def save_run_config(path: str, config: RunConfig):
    d = {"schema_version": jsonio.SCHEMA_VERSION,
         "fit": config.fit.to_dict(), "ransac": config.ransac.to_dict(),
         "rules": config.rules, "seed": config.seed}
    jsonio.write_json(path, d)


def load_rules(path: str) -> tuple:
    d = jsonio.read_json(path)
    where = os.path.basename(path)
    jsonio.check_schema_version(d, where)
    jsonio.check_keys(d, ["schema_version", "rules"], where=where)
    if not isinstance(d["rules"], list) or not d["rules"]:
        raise SchemaError(f"{where}: rules must be a nonempty list")
    try:
        return tuple(ScanPlaneRule.from_dict(r) for r in d["rules"])
    except ValueError as e:
        raise SchemaError(f"{where}: {e}") from e


def save_rules(path: str, rules):
    jsonio.write_json(path, {"schema_version": jsonio.SCHEMA_VERSION,
                             "rules": [r.to_dict() for r in rules]})


# ---------------------------------------------------------------------------
# result files

def fit_result_to_dict(session: CaptureSession, result, thorax: RigidTransform,
                       model_ref: str | None = None, flavor: str | None = None) -> dict:
    """Consensus output record; result is a consensus.ConsensusResult.

    model_ref/flavor default to the session's and are overridden when the
    consensus body was converted into another rig flavor afterwards.
    """
    return {"schema_version": jsonio.SCHEMA_VERSION,
            "session_id": session.session_id,
            "model_ref": session.model_ref if model_ref is None else model_ref,
            "posture_label": session.posture_label,
            "params": params_to_dict(result.params,
                                     session.flavor if flavor is None else flavor),
            "inlier_frames": [int(i) for i in result.inlier_frames],
            "per_frame_residual_m": [float(v) for v in result.per_frame_residual_m],
            "hypotheses_evaluated": int(result.hypotheses_evaluated),
            "final_rms_m": float(result.refit.final_rms_m),
            "iterations": int(result.refit.iterations),
            "converged": bool(result.refit.converged),
            "thorax_frame": thorax.to_dict()}


def write_fit_result(path: str, session: CaptureSession, result, thorax: RigidTransform,
                     model_ref: str | None = None, flavor: str | None = None):
    jsonio.write_json(path, fit_result_to_dict(session, result, thorax,
                                               model_ref=model_ref, flavor=flavor))


def load_fit_result(path: str) -> dict:
    d = jsonio.read_json(path)
    where = os.path.basename(path)
    jsonio.check_schema_version(d, where)
    jsonio.check_keys(d, ["schema_version", "session_id", "model_ref", "posture_label",
                          "params", "inlier_frames", "per_frame_residual_m",
                          "hypotheses_evaluated", "final_rms_m", "iterations",
                          "converged", "thorax_frame"], where=where)
    params, flavor = params_from_dict(d["params"], f"{where}: params")
    return {"session_id": str(d["session_id"]), "model_ref": str(d["model_ref"]),
            "posture_label": str(d["posture_label"]), "params": params,
            "flavor": flavor,
            "inlier_frames": tuple(int(i) for i in d["inlier_frames"]),
            "per_frame_residual_m": np.asarray(d["per_frame_residual_m"], dtype=float),
            "hypotheses_evaluated": int(d["hypotheses_evaluated"]),
            "final_rms_m": float(d["final_rms_m"]),
            "iterations": int(d["iterations"]), "converged": bool(d["converged"]),
            "thorax_frame": RigidTransform.from_dict(d["thorax_frame"])}


def guidance_to_dict(session_id, model_ref: str, flavor: str,
                     thorax: RigidTransform, outcomes) -> dict:
    views = []
    for o in outcomes:
        if o.status == "ok":
            views.append({"view_id": o.view_id,
                          "pose": o.pose.pose.to_dict(),
                          "contact_point_m": [float(v) for v in o.pose.contact_point],
                          "status": "ok"})
        else:
            views.append({"view_id": o.view_id, "pose": None,
                          "contact_point_m": None, "status": f"error: {o.error}"})
    return {"schema_version": jsonio.SCHEMA_VERSION,
            "session_id": session_id, "model_ref": model_ref, "flavor": flavor,
            "thorax_frame": thorax.to_dict(), "views": views}


def write_guidance_file(path: str, session_id, model_ref, flavor, thorax, outcomes):
    jsonio.write_json(path, guidance_to_dict(session_id, model_ref, flavor, thorax, outcomes))


def load_guidance_file(path: str) -> dict:
    d = jsonio.read_json(path)
    where = os.path.basename(path)
    jsonio.check_schema_version(d, where)
    jsonio.check_keys(d, ["schema_version", "session_id", "model_ref", "flavor",
                          "thorax_frame", "views"], where=where)
    views = {}
    for i, v in enumerate(d["views"]):
        vwhere = f"{where}: views[{i}]"
        jsonio.check_keys(v, ["view_id", "pose", "contact_point_m", "status"], where=vwhere)
        entry = {"status": str(v["status"]), "pose": None, "contact_point_m": None}
        if v["pose"] is not None:
            entry["pose"] = RigidTransform.from_dict(v["pose"])
        if v["contact_point_m"] is not None:
            entry["contact_point_m"] = np.asarray(v["contact_point_m"], dtype=float)
        views[str(v["view_id"])] = entry
    return {"session_id": d["session_id"], "model_ref": str(d["model_ref"]),
            "flavor": str(d["flavor"]),
            "thorax_frame": RigidTransform.from_dict(d["thorax_frame"]),
            "views": views}


def write_report_file(path: str, session_id, report, samples):
    """samples: list of {"view_id", "comparison", "e_pos_mm", "e_tilt_deg", "e_spin_deg"}."""
    jsonio.write_json(path, {"schema_version": jsonio.SCHEMA_VERSION,
                             "session_id": session_id,
                             "report": report.to_dict(),
                             "samples": samples})


# ---------------------------------------------------------------------------
# ground truth (synth output)

def gt_to_dict(session_id: str, model_ref: str, posture_label: str, flavor: str,
               params: BodyParams, true_probe_poses: dict, outlier_frames) -> dict:
    return {"schema_version": jsonio.SCHEMA_VERSION,
            "session_id": session_id, "model_ref": model_ref,
            "posture_label": posture_label,
            "params": params_to_dict(params, flavor),
            "true_probe_poses": {
                view: pose_record(pp.pose, pp.contact_point, pp.surface_face)
                for view, pp in sorted(true_probe_poses.items())},
            "outlier_frames": [int(i) for i in outlier_frames]}


def write_gt(path: str, **kw):
    jsonio.write_json(path, gt_to_dict(**kw))


def load_gt(path: str) -> dict:
    d = jsonio.read_json(path)
    where = os.path.basename(path)
    jsonio.check_schema_version(d, where)
    jsonio.check_keys(d, ["schema_version", "session_id", "model_ref", "posture_label",
                          "params", "true_probe_poses", "outlier_frames"], where=where)
    params, flavor = params_from_dict(d["params"], f"{where}: params")
    poses = {}
    for view, rec in d["true_probe_poses"].items():
        pose, contact, face = pose_from_record(rec, f"{where}: true_probe_poses[{view}]")
        poses[str(view)] = {"pose": pose, "contact_point_m": contact, "surface_face": face}
    return {"session_id": str(d["session_id"]), "model_ref": str(d["model_ref"]),
            "posture_label": str(d["posture_label"]), "params": params, "flavor": flavor,
            "true_probe_poses": poses,
            "outlier_frames": tuple(int(i) for i in d["outlier_frames"])}


# ---------------------------------------------------------------------------
# manifest

def write_manifest(out_path: str, inputs: dict, seed=None):
    """Provenance record: input basenames + hashes, seed, package version."""
    from . import __version__
    rec = {"schema_version": jsonio.SCHEMA_VERSION,
           "inputs": {name: {"file": os.path.basename(p),
                             "sha256": jsonio.file_sha256(p)}
                      for name, p in sorted(inputs.items())},
           "seed": seed, "package_version": __version__}
    jsonio.write_json(out_path, rec)


def manifest_path_for(out_path: str) -> str:
    base, _ = os.path.splitext(out_path)
    return base + ".manifest.json"


# ---------------------------------------------------------------------------
# scene export: ASCII PLY mesh + probe-frame glyphs + JSON sidecar

_AXIS_COLORS = ((230, 60, 40), (60, 200, 60), (50, 90, 230))
_GLYPH_LEN = 0.05
_GLYPH_WIDTH = 0.004


def export_scene(path: str, vertices: np.ndarray, faces: np.ndarray, probe_poses: dict):
    """Write an ASCII PLY of the body plus RGB axis glyphs per probe pose.

    probe_poses maps view_id -> RigidTransform. A sidecar JSON holding the
    frames lands next to the PLY.
    """
    vertices = np.asarray(vertices, dtype=float)
    faces = np.asarray(faces, dtype=np.int64)
    extra_v = []
    extra_f = []
    extra_c = []
    base = vertices.shape[0]
    body_color = (190, 170, 150)
    for view in sorted(probe_poses):
        T = probe_poses[view]
        R = T.rotation_matrix
        p = T.t
        for k in range(3):
            a = R[:, k]
            b = R[:, (k + 1) % 3]
            i0 = base + len(extra_v)
            extra_v.extend([p, p + _GLYPH_LEN * a, p + _GLYPH_WIDTH * b])
            extra_c.extend([_AXIS_COLORS[k]] * 3)
            extra_f.append((i0, i0 + 1, i0 + 2))
    nv = base + len(extra_v)
    nf = faces.shape[0] + len(extra_f)
    lines = ["ply", "format ascii 1.0",
             f"element vertex {nv}",
             "property float x", "property float y", "property float z",
             "property uchar red", "property uchar green", "property uchar blue",
             f"element face {nf}", "property list uchar int vertex_indices",
             "end_header"]
    for v in vertices:
        lines.append(f"{v[0]:.6f} {v[1]:.6f} {v[2]:.6f} "
                     f"{body_color[0]} {body_color[1]} {body_color[2]}")
    for v, c in zip(extra_v, extra_c):
        lines.append(f"{v[0]:.6f} {v[1]:.6f} {v[2]:.6f} {c[0]} {c[1]} {c[2]}")
    for f in faces:
        lines.append(f"3 {f[0]} {f[1]} {f[2]}")
    for f in extra_f:
        lines.append(f"3 {f[0]} {f[1]} {f[2]}")
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    sidecar = os.path.splitext(path)[0] + ".frames.json"
    jsonio.write_json(sidecar, {
        "schema_version": jsonio.SCHEMA_VERSION,
        "frames": {view: T.to_dict() for view, T in sorted(probe_poses.items())}})
