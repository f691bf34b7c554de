"""Probe pose comparison metrics and grouped session statistics.

Three components per pose pair: positional distance, probe-axis angle, and the
in-plane spin angle measured between the probes' x axes after projecting both
onto the thorax transverse plane. Spin folds to [0, 90] degrees through the
absolute projected dot product and is flagged undefined when a projection
collapses, so no comparison ever yields NaN.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import RigidTransform

_SPIN_PROJECTION_EPS = 1e-6


class MetricsError(RuntimeError):
    pass


class EmptyGroupError(MetricsError):
    pass


@dataclass
class PoseError:
    e_pos_mm: float
    e_tilt_deg: float
    e_spin_deg: float | None  # None when a projected x axis degenerated

    @property
    def spin_defined(self) -> bool:
        return self.e_spin_deg is not None

    def to_dict(self) -> dict:
        return {"e_pos_mm": self.e_pos_mm, "e_tilt_deg": self.e_tilt_deg,
                "e_spin_deg": self.e_spin_deg}


def _clamped_arccos_deg(x: float) -> float:
    return float(np.degrees(np.arccos(np.clip(x, -1.0, 1.0))))


def pose_error(a, b, thorax: RigidTransform) -> PoseError:
    """Componentwise error between two probe poses.

    Accepts ProbePose-shaped objects (anything with .pose) or RigidTransforms
    directly. The thorax frame supplies the transverse plane used for spin.
    """
    Ta = a.pose if hasattr(a, "pose") else a
    Tb = b.pose if hasattr(b, "pose") else b
    Ra, Rb = Ta.rotation_matrix, Tb.rotation_matrix

    e_pos = float(np.linalg.norm(Ta.t - Tb.t)) * 1000.0
    e_tilt = _clamped_arccos_deg(float(Ra[:, 2] @ Rb[:, 2]))

    n_th = thorax.rotation_matrix[:, 2]
    xa = Ra[:, 0] - (Ra[:, 0] @ n_th) * n_th
    xb = Rb[:, 0] - (Rb[:, 0] @ n_th) * n_th
    na, nb = np.linalg.norm(xa), np.linalg.norm(xb)
    if na < _SPIN_PROJECTION_EPS or nb < _SPIN_PROJECTION_EPS:
        e_spin = None
    else:
        e_spin = _clamped_arccos_deg(abs(float(xa @ xb)) / (na * nb))
    return PoseError(e_pos, e_tilt, e_spin)


@dataclass
class ErrorStats:
    mean: float
    std: float
    n: int
    values: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"mean": self.mean, "std": self.std, "n": self.n,
                "values": list(self.values)}


def _stats(values) -> ErrorStats:
    arr = np.asarray(values, dtype=float)
    # population std (divisor N), fixed so golden files stay stable
    return ErrorStats(float(arr.mean()), float(arr.std()), int(arr.size), [float(v) for v in arr])


@dataclass
class GroupReport:
    label: str
    pos: ErrorStats
    tilt: ErrorStats
    spin: ErrorStats | None
    spin_undefined_count: int

    def to_dict(self) -> dict:
        return {"label": self.label, "e_pos_mm": self.pos.to_dict(),
                "e_tilt_deg": self.tilt.to_dict(),
                "e_spin_deg": None if self.spin is None else self.spin.to_dict(),
                "spin_undefined_count": self.spin_undefined_count}


@dataclass
class ErrorReport:
    groups: dict
    overall: GroupReport

    def to_dict(self) -> dict:
        return {"groups": {k: g.to_dict() for k, g in self.groups.items()},
                "overall": self.overall.to_dict()}


def _group_report(label: str, samples) -> GroupReport:
    if not samples:
        raise EmptyGroupError(f"group {label!r} has no samples")
    spin_vals = [s.e_spin_deg for s in samples if s.spin_defined]
    return GroupReport(
        label,
        _stats([s.e_pos_mm for s in samples]),
        _stats([s.e_tilt_deg for s in samples]),
        _stats(spin_vals) if spin_vals else None,
        sum(1 for s in samples if not s.spin_defined))


def summarize(samples, labels) -> ErrorReport:
    """Grouped statistics over pose errors.

    labels carries one group key per sample (e.g. "guided-pred/supine");
    the report holds one entry per distinct label plus the overall pool.
    """
    samples = list(samples)
    labels = list(labels)
    if len(samples) != len(labels):
        raise MetricsError("labels must match samples one to one")
    if not samples:
        raise EmptyGroupError("no samples to summarize")
    groups = {}
    for lab in labels:
        groups.setdefault(str(lab), [])
    for s, lab in zip(samples, labels):
        groups[str(lab)].append(s)
    return ErrorReport(
        {lab: _group_report(lab, members) for lab, members in sorted(groups.items())},
        _group_report("overall", samples))
