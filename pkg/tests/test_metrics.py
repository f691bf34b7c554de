from types import SimpleNamespace

import numpy as np
import pytest

from probeguide.geometry import RigidTransform, compose
from probeguide.metrics import (EmptyGroupError, MetricsError, PoseError,
                                pose_error, summarize)

IDENTITY = RigidTransform.identity()


def pose_at(t, rotvec=(0.0, 0.0, 0.0)):
    return RigidTransform.from_rotvec(np.asarray(rotvec, dtype=float),
                                      np.asarray(t, dtype=float))


def rot_about(axis_rotvec):
    return RigidTransform.from_rotvec(np.asarray(axis_rotvec, dtype=float), np.zeros(3))


def random_pose(rng):
    return RigidTransform.from_rotvec(rng.normal(size=3), rng.normal(size=3))


# ---------------------------------------------------------------------------
# single-pair errors

def test_three_four_five_position():
    err = pose_error(pose_at([0, 0, 0]), pose_at([0.003, 0.004, 0]), IDENTITY)
    assert err.e_pos_mm == pytest.approx(5.0, abs=1e-12)
    assert err.e_tilt_deg == 0.0
    assert err.e_spin_deg == 0.0


def test_identical_poses_give_zero(small_surface):
    rng = np.random.default_rng(0)
    for _ in range(10):
        T = random_pose(rng)
        err = pose_error(T, T, random_pose(rng))
        assert err.e_pos_mm == 0.0
        # arccos near 1 is noisy at the 1e-6 deg scale, nothing more
        assert err.e_tilt_deg < 1e-5
        assert err.spin_defined and err.e_spin_deg < 1e-5


def test_tilt_equals_rotation_about_probe_x():
    rng = np.random.default_rng(1)
    for deg in (5.0, 30.0, 90.0, 150.0):
        T = random_pose(rng)
        tilted = compose(T, rot_about([np.radians(deg), 0, 0]))
        err = pose_error(T, tilted, IDENTITY)
        assert err.e_tilt_deg == pytest.approx(deg, abs=1e-9)
        assert err.e_pos_mm == pytest.approx(0.0, abs=1e-9)


def test_spin_equals_rotation_about_probe_z_folded():
    for deg, want in ((30.0, 30.0), (120.0, 60.0), (90.0, 90.0), (170.0, 10.0)):
        spun = rot_about([0, 0, np.radians(deg)])
        err = pose_error(IDENTITY, spun, IDENTITY)
        assert err.e_tilt_deg == pytest.approx(0.0, abs=1e-9)
        assert err.e_spin_deg == pytest.approx(want, abs=1e-9)


def test_spin_undefined_when_probe_x_leaves_transverse_plane():
    # probe x axis parallel to the thorax normal: nothing to project
    a = rot_about([0, np.pi / 2, 0])
    err = pose_error(a, IDENTITY, IDENTITY)
    assert err.e_spin_deg is None
    assert not err.spin_defined
    d = err.to_dict()
    assert d["e_spin_deg"] is None
    assert not any(v is not None and np.isnan(v) for v in d.values())


def test_accepts_wrapped_and_bare_poses():
    a = pose_at([0, 0, 0])
    b = pose_at([0.01, 0, 0])
    bare = pose_error(a, b, IDENTITY)
    wrapped = pose_error(SimpleNamespace(pose=a), SimpleNamespace(pose=b), IDENTITY)
    assert bare == wrapped


def test_symmetry_is_exact():
    rng = np.random.default_rng(2)
    for _ in range(20):
        a, b, th = random_pose(rng), random_pose(rng), random_pose(rng)
        ab = pose_error(a, b, th)
        ba = pose_error(b, a, th)
        assert ab.e_pos_mm == ba.e_pos_mm
        assert ab.e_tilt_deg == ba.e_tilt_deg
        assert ab.e_spin_deg == ba.e_spin_deg


def test_rigid_invariance():
    rng = np.random.default_rng(3)
    for _ in range(10):
        a, b, th = random_pose(rng), random_pose(rng), random_pose(rng)
        T = random_pose(rng)
        base = pose_error(a, b, th)
        moved = pose_error(compose(T, a), compose(T, b), compose(T, th))
        assert moved.e_pos_mm == pytest.approx(base.e_pos_mm, abs=1e-9)
        assert moved.e_tilt_deg == pytest.approx(base.e_tilt_deg, abs=1e-7)
        assert moved.e_spin_deg == pytest.approx(base.e_spin_deg, abs=1e-7)


def test_thorax_frame_only_affects_spin():
    rng = np.random.default_rng(4)
    a, b = random_pose(rng), random_pose(rng)
    e1 = pose_error(a, b, random_pose(rng))
    e2 = pose_error(a, b, random_pose(rng))
    assert e1.e_pos_mm == e2.e_pos_mm
    assert e1.e_tilt_deg == e2.e_tilt_deg


def test_spin_range_is_folded():
    rng = np.random.default_rng(5)
    for _ in range(50):
        err = pose_error(random_pose(rng), random_pose(rng), random_pose(rng))
        assert 0.0 <= err.e_tilt_deg <= 180.0
        if err.spin_defined:
            assert 0.0 <= err.e_spin_deg <= 90.0


# ---------------------------------------------------------------------------
# summaries

def mk(pos, tilt=1.0, spin=2.0):
    return PoseError(pos, tilt, spin)


def test_summary_mean_and_population_std():
    report = summarize([mk(10.0), mk(20.0)], ["g", "g"])
    g = report.groups["g"]
    assert g.pos.mean == 15.0
    assert g.pos.std == 5.0  # population std, divisor N
    assert g.pos.n == 2
    assert g.pos.values == [10.0, 20.0]
    assert report.overall.pos.mean == 15.0


def test_single_sample_std_zero():
    report = summarize([mk(7.0)], ["only"])
    assert report.groups["only"].pos.std == 0.0


def test_groups_split_and_overall_pools():
    report = summarize([mk(1.0), mk(3.0), mk(5.0)], ["a", "b", "a"])
    assert sorted(report.groups) == ["a", "b"]
    assert report.groups["a"].pos.mean == 3.0
    assert report.groups["b"].pos.mean == 3.0
    assert report.overall.pos.n == 3


def test_spin_undefined_counted_not_averaged():
    samples = [mk(1.0, spin=10.0), mk(1.0, spin=None), mk(1.0, spin=20.0)]
    g = summarize(samples, ["g"] * 3).groups["g"]
    assert g.spin_undefined_count == 1
    assert g.spin.n == 2
    assert g.spin.mean == 15.0


def test_all_spins_undefined_gives_none_stats():
    g = summarize([mk(1.0, spin=None)] * 2, ["g"] * 2).groups["g"]
    assert g.spin is None
    assert g.spin_undefined_count == 2
    assert g.to_dict()["e_spin_deg"] is None


def test_empty_input_rejected():
    with pytest.raises(EmptyGroupError):
        summarize([], [])


def test_label_length_mismatch_rejected():
    with pytest.raises(MetricsError):
        summarize([mk(1.0)], ["a", "b"])


def test_report_dict_structure():
    d = summarize([mk(10.0, 1.0, 2.0)], ["g"]).to_dict()
    assert set(d) == {"groups", "overall"}
    assert set(d["groups"]) == {"g"}
    grp = d["groups"]["g"]
    assert set(grp) == {"label", "e_pos_mm", "e_tilt_deg", "e_spin_deg",
                        "spin_undefined_count"}
    assert set(grp["e_pos_mm"]) == {"mean", "std", "n", "values"}
    assert d["overall"]["label"] == "overall"
