import numpy as np
import pytest

from probeguide.bodymodel import BodyParams, pose_body, precompose_root
from probeguide.fitting import (EmptyMaskError, FitConfig, FitError, NonFiniteLossError,
                                Observation, convert_params, fit_model, masked_loss,
                                masked_vertex_rms, residual_jacobian, transfer_init)
from probeguide.geometry import RigidTransform, transform_points


def random_params(model, rng, beta=1.0, theta=0.1, trans=0.1):
    return BodyParams(rng.uniform(-beta, beta, model.shape_count),
                      rng.uniform(-theta, theta, model.pose_dim),
                      rng.normal(0, trans, 3))


def observation_of(model, params):
    body = pose_body(model, params)
    return Observation(vertices=body.vertices, joints=body.joints, frame="world")


# ---------------------------------------------------------------------------
# masked loss

def test_loss_zero_on_exact_observation(small_surface):
    rng = np.random.default_rng(0)
    p = random_params(small_surface, rng)
    assert masked_loss(small_surface, p, observation_of(small_surface, p)) < 1e-14


def test_loss_of_uniform_millimeter_offset(small_surface):
    rng = np.random.default_rng(1)
    p = random_params(small_surface, rng)
    body = pose_body(small_surface, p)
    obs = Observation(vertices=body.vertices + [0.001, 0.0, 0.0],
                      joints=body.joints + [0.001, 0.0, 0.0])
    # every masked residual is exactly 1 mm, so the weighted mean square is 1e-6
    assert masked_loss(small_surface, p, obs) == pytest.approx(1e-6, abs=1e-12)


def test_loss_matches_naive_oracle(small_surface):
    m = small_surface
    rng = np.random.default_rng(2)
    p = random_params(m, rng)
    body = pose_body(m, p)
    obs = Observation(vertices=body.vertices + rng.normal(0, 0.003, body.vertices.shape),
                      joints=body.joints + rng.normal(0, 0.003, body.joints.shape))
    w = 0.7
    total = 0.0
    for vi in m.torso_mask_vertices:
        total += np.sum((obs.vertices[vi] - body.vertices[vi]) ** 2)
    for ji in m.torso_mask_joints:
        total += w * np.sum((obs.joints[ji] - body.joints[ji]) ** 2)
    denom = len(m.torso_mask_vertices) + w * len(m.torso_mask_joints)
    assert masked_loss(m, p, obs, joint_weight=w) == pytest.approx(total / denom, rel=1e-12)


def test_loss_ignores_unmasked_vertices(small_surface):
    m = small_surface
    rng = np.random.default_rng(3)
    p = random_params(m, rng)
    body = pose_body(m, p)
    verts = body.vertices.copy()
    outside = np.setdiff1d(np.arange(m.vertex_count), m.torso_mask_vertices)
    verts[outside] += rng.normal(0, 1.0, (outside.size, 3))
    obs = Observation(vertices=verts, joints=body.joints)
    assert masked_loss(m, p, obs) == masked_loss(m, p, observation_of(m, p))


def test_empty_mask_rejected(small_surface):
    rng = np.random.default_rng(4)
    p = random_params(small_surface, rng)
    with pytest.raises(EmptyMaskError):
        masked_loss(small_surface, p, observation_of(small_surface, p),
                    mask_vertices=[], mask_joints=[])


def test_observation_requires_some_target():
    with pytest.raises(ValueError):
        Observation(vertices=None, joints=None)


def test_observation_shape_checked(small_surface):
    obs = Observation(vertices=np.zeros((5, 3)))
    with pytest.raises(FitError):
        obs.check_against(small_surface)


# ---------------------------------------------------------------------------
# fit_model

def test_fit_from_truth_converges_immediately(small_surface):
    rng = np.random.default_rng(5)
    p = random_params(small_surface, rng)
    res = fit_model(small_surface, observation_of(small_surface, p), init=p)
    assert res.converged
    assert res.iterations <= 2
    assert res.final_rms_m < 1e-7


def test_fit_from_zeros_recovers_surface(small_surface):
    rng = np.random.default_rng(6)
    p = random_params(small_surface, rng)
    res = fit_model(small_surface, observation_of(small_surface, p))
    assert res.final_rms_m < 1e-4


def test_fit_skeleton_flavor_from_zeros(small_skeleton):
    rng = np.random.default_rng(7)
    p = random_params(small_skeleton, rng, theta=0.08)
    res = fit_model(small_skeleton, observation_of(small_skeleton, p))
    assert res.final_rms_m < 1e-4


def test_fit_rejects_non_finite_observation(small_surface):
    obs = Observation(vertices=np.full((small_surface.vertex_count, 3), np.nan))
    with pytest.raises(NonFiniteLossError):
        fit_model(small_surface, obs)


def test_accepted_steps_never_increase_loss(small_surface):
    rng = np.random.default_rng(8)
    for _ in range(3):
        p = random_params(small_surface, rng)
        body = pose_body(small_surface, p)
        obs = Observation(vertices=body.vertices + rng.normal(0, 0.004, body.vertices.shape),
                          joints=body.joints)
        res = fit_model(small_surface, obs)
        hist = np.asarray(res.loss_history)
        assert np.all(np.diff(hist) <= 0)


def test_result_rms_equals_masked_loss_at_params(small_surface):
    rng = np.random.default_rng(9)
    p = random_params(small_surface, rng)
    body = pose_body(small_surface, p)
    obs = Observation(vertices=body.vertices + rng.normal(0, 0.002, body.vertices.shape),
                      joints=body.joints)
    res = fit_model(small_surface, obs)
    assert res.final_rms_m == pytest.approx(
        np.sqrt(masked_loss(small_surface, res.params, obs)), rel=1e-9)


def test_frame_invariance(small_surface):
    rng = np.random.default_rng(10)
    p = random_params(small_surface, rng)
    init = random_params(small_surface, rng, beta=0.5, theta=0.05)
    body = pose_body(small_surface, p)
    obs = Observation(vertices=body.vertices + rng.normal(0, 0.002, body.vertices.shape),
                      joints=body.joints)
    base = fit_model(small_surface, obs, init=init)
    for _ in range(3):
        T = RigidTransform.from_rotvec(rng.normal(size=3), rng.normal(size=3))
        obs_T = Observation(vertices=transform_points(T, obs.vertices),
                            joints=transform_points(T, obs.joints))
        init_T = precompose_root(small_surface, init, T)
        moved = fit_model(small_surface, obs_T, init=init_T)
        assert abs(moved.final_rms_m - base.final_rms_m) < 1e-9


def test_jacobian_matches_naive_fd(small_surface):
    m = small_surface
    rng = np.random.default_rng(11)
    p = random_params(m, rng, theta=0.05)
    body = pose_body(m, p)
    obs = Observation(vertices=body.vertices + rng.normal(0, 0.002, body.vertices.shape),
                      joints=body.joints + rng.normal(0, 0.002, body.joints.shape))
    r0, J = residual_jacobian(m, obs, p)
    step = 1e-6
    x0 = np.concatenate([p.beta, p.theta, p.translation])
    B, P = m.shape_count, m.pose_dim

    def residuals(x):
        q = BodyParams(x[:B], x[B:B + P], x[B + P:])
        posed = pose_body(m, q)
        mv, mj = m.torso_mask_vertices, m.torso_mask_joints
        rv = (posed.vertices[mv] - obs.vertices[mv]).ravel()
        rj = (posed.joints[mj] - obs.joints[mj]).ravel()
        denom = np.sqrt(mv.size + 1.0 * mj.size)
        return np.concatenate([rv, rj]) / denom

    assert np.allclose(r0, residuals(x0), atol=1e-12)
    scale = np.abs(J).max()
    for col in rng.choice(J.shape[1], size=10, replace=False):
        xp = x0.copy()
        xp[col] += step
        naive = (residuals(xp) - residuals(x0)) / step
        assert np.allclose(J[:, col], naive, atol=1e-4 * max(scale, 1.0))


def test_masked_vertex_rms_matches_direct(small_surface):
    m = small_surface
    rng = np.random.default_rng(12)
    p = random_params(m, rng)
    body = pose_body(m, p)
    obs = Observation(vertices=body.vertices + 0.002)
    mv = m.torso_mask_vertices
    direct = np.sqrt(np.mean(np.sum((body.vertices[mv] - obs.vertices[mv]) ** 2, axis=1)))
    assert masked_vertex_rms(m, p, obs) == pytest.approx(direct, rel=1e-12)


# ---------------------------------------------------------------------------
# config and flavor conversion

def test_fit_config_round_trip():
    c = FitConfig(max_iters=50, rel_tol=1e-7, grad_tol=1e-9, joint_weight=0.5,
                  stage1_iters=10)
    assert FitConfig.from_dict(c.to_dict()) == c


def test_fit_config_rejects_unknown_keys():
    from probeguide.jsonio import SchemaError
    with pytest.raises(SchemaError):
        FitConfig.from_dict({"max_iters": 10, "typo_field": 1})


def test_convert_between_flavors_round_trip(small_surface, small_skeleton):
    rng = np.random.default_rng(13)
    p = random_params(small_surface, rng, theta=0.08)
    to_skel = convert_params(small_surface, p, small_skeleton)
    assert to_skel.final_rms_m < 1e-3
    back = convert_params(small_skeleton, to_skel.params, small_surface)
    assert back.final_rms_m < 1e-3
    a = pose_body(small_surface, p)
    b = pose_body(small_surface, back.params)
    for name in ("sternum_upper", "sternum_mid", "sternum_lower"):
        assert np.linalg.norm(a.landmark_points[name] - b.landmark_points[name]) < 2e-3


def test_transfer_init_copies_shared_rotations(small_surface, small_skeleton):
    rng = np.random.default_rng(14)
    p = random_params(small_surface, rng, theta=0.08)
    init = transfer_init(small_surface, p, small_skeleton)
    assert np.array_equal(init.beta, p.beta)
    assert np.array_equal(init.translation, p.translation)
    src_root = small_surface.local_rotations(p.theta)[0]
    dst_root = small_skeleton.local_rotations(init.theta)[0]
    assert np.allclose(src_root, dst_root, atol=1e-12)


def test_convert_requires_vertex_aligned_meshes(small_surface, full_surface):
    rng = np.random.default_rng(15)
    p = random_params(small_surface, rng)
    with pytest.raises(FitError, match="vertex-aligned"):
        convert_params(small_surface, p, full_surface)
