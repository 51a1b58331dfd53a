import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from geolin.derivatives import IdJacobians, dXv_dH, did_dH, did_dr, did_ds, did_dv, id_jacobians
from geolin.dynamics import GRAVITY, eidamb, inverse_dynamics
from geolin.model import JointType, MultibodyModel, SystemState, build_test_system, random_model, random_state
from geolin.spatial import Pose, cross_force, cross_force_operand, cross_motion, se3_exp, skew, spatial_inertia, velocity_transform

DELTA = 1e-6
unit = st.floats(-1.0, 1.0, allow_nan=False)
vec6 = arrays(np.float64, 6, elements=unit)


def point(model, seed):
    rng = np.random.default_rng(seed)
    state = random_state(rng, model)
    a0 = rng.uniform(size=6)
    rdot = rng.uniform(size=model.n_joints)
    return state, a0, rdot


def central(f, perturb, dim):
    cols = []
    for e in np.eye(dim):
        cols.append((f(perturb(DELTA * e)) - f(perturb(-DELTA * e))) / (2 * DELTA))
    return np.column_stack(cols)


def fd_blocks(model, state, a0, rdot, hold):
    def f(s):
        return inverse_dynamics(model, s, a0, rdot)

    pose = state.base_pose
    if hold == "world":
        av = state.world_twist()

        def move(x):
            p = pose @ se3_exp(x)
            return SystemState.from_world_twist(p, state.joint_pos, av, state.joint_vel)
    else:
        def move(x):
            return state.replace(base_pose=pose @ se3_exp(x))

    n = model.n_joints
    return (
        central(f, move, 6),
        central(f, lambda x: state.replace(joint_pos=state.joint_pos + x), n),
        central(f, lambda x: state.replace(base_twist=state.base_twist + x), 6),
        central(f, lambda x: state.replace(joint_vel=state.joint_vel + x), n),
    )


def rel_err(a, b):
    return np.abs(a - b).max() / max(1.0, np.abs(b).max())


def test_dxv_zero_vector():
    pose = se3_exp([0.2, 0.1, 0.3, 0.5, -0.4, 0.3])
    assert np.array_equal(dXv_dH(pose.rotation.T, pose.origin, np.zeros(6)), np.zeros((6, 6)))


def test_dxv_identity_pose_linear_vector():
    v = np.array([0.3, -1.2, 0.5])
    expected = np.zeros((6, 6))
    expected[:3, 3:] = skew(v)
    assert np.allclose(dXv_dH(np.eye(3), np.zeros(3), np.concatenate([v, np.zeros(3)])), expected)


@settings(max_examples=200)
@given(vec6, vec6)
def test_dxv_matches_geometric_difference(xi, w):
    pose = se3_exp(3.0 * xi)

    def xw(p):
        return velocity_transform(p.inverse()) @ w

    fd = np.column_stack([
        (xw(pose @ se3_exp(DELTA * e)) - xw(pose @ se3_exp(-DELTA * e))) / (2 * DELTA)
        for e in np.eye(6)
    ])
    assert np.max(np.abs(dXv_dH(pose.rotation.T, pose.origin, w) - fd)) <= 1e-7


@given(vec6, vec6)
def test_dxv_is_cross_of_body_vector(xi, w):
    pose = se3_exp(xi)
    body = velocity_transform(pose.inverse()) @ w
    assert np.allclose(dXv_dH(pose.rotation.T, pose.origin, w), cross_motion(body), atol=1e-12)


def test_left_perturbation_disagrees():
    pose = se3_exp([0.2, 0.1, 0.3, 0.5, -0.4, 0.3])
    w = np.array([0.1, 0.4, -0.2, 0.7, 0.3, -0.5])

    def xw(p):
        return velocity_transform(p.inverse()) @ w

    left = np.column_stack([
        (xw(se3_exp(DELTA * e) @ pose) - xw(se3_exp(-DELTA * e) @ pose)) / (2 * DELTA) for e in np.eye(6)
    ])
    assert np.abs(left - dXv_dH(pose.rotation.T, pose.origin, w)).max() > 1e-2


@pytest.mark.parametrize("model", [build_test_system(), random_model(3, 7), random_model(4, 1)],
                         ids=["test-system", "random-7", "random-1"])
@pytest.mark.parametrize("hold", ["world", "body"])
def test_jacobians_match_central_difference(model, hold):
    state, a0, rdot = point(model, 12)
    _, ws = eidamb(model, state, a0, rdot)
    analytic = (did_dH(model, ws, hold), did_ds(model, ws), did_dv(model, ws), did_dr(model, ws))
    for name, a, f in zip("Hsvr", analytic, fd_blocks(model, state, a0, rdot, hold)):
        assert a.shape == f.shape
        assert rel_err(a, f) <= 1e-7, name


def test_hold_modes_differ_by_twist_chain_rule():
    model = build_test_system()
    state, a0, rdot = point(model, 3)
    _, ws = eidamb(model, state, a0, rdot)
    world = did_dH(model, ws, "world")
    body = did_dH(model, ws, "body")
    chain = did_dv(model, ws) @ cross_motion(state.base_twist)
    assert np.allclose(world, body + chain, atol=1e-12)


def test_hold_rejects_unknown_mode():
    model = build_test_system()
    _, ws = eidamb(model, random_state(0, model), np.zeros(6), np.zeros(9))
    with pytest.raises(ValueError):
        did_dH(model, ws, hold="joint")


def test_dh_zero_without_twist_or_gravity():
    model = build_test_system()
    state = random_state(1, model).replace(base_twist=np.zeros(6))
    _, ws = eidamb(model, state, np.ones(6), np.ones(9), np.zeros(6))
    assert np.array_equal(did_dH(model, ws, "world"), np.zeros((15, 6)))


def test_ds_zero_at_rest_without_gravity():
    model = build_test_system()
    state = random_state(1, model).replace(base_twist=np.zeros(6), joint_vel=np.zeros(9))
    _, ws = eidamb(model, state, np.zeros(6), np.zeros(9), np.zeros(6))
    assert np.array_equal(did_ds(model, ws), np.zeros((15, 9)))


def test_ds_prismatic_gravity_is_translation_invariant():
    # sliding a body does not change the gravity force it feels, only the moment on the base
    link = spatial_inertia(1.2, np.array([0.1, 0.0, 0.2]), np.diag([0.1, 0.2, 0.3]))
    model = MultibodyModel((-1, 0), (None, JointType("prismatic", "z")), (None, Pose.identity()),
                           (np.eye(6), link))
    state = SystemState(Pose.identity(), [0.4], np.zeros(6), [0.0])
    _, ws = eidamb(model, state, np.zeros(6), np.zeros(1))
    ds = did_ds(model, ws)
    assert ds[6, 0] == pytest.approx(0.0, abs=1e-15)
    # base moment = p x (m g) with p moving along z
    expected = np.cross([0.0, 0.0, 1.0], 1.2 * GRAVITY[:3])
    assert np.allclose(ds[3:6, 0], expected, atol=1e-12)
    assert np.allclose(ds[:3, 0], 0.0, atol=1e-15)


def test_dv_base_only_at_rest_is_zero():
    model = MultibodyModel((-1,), (None,), (None,), (np.diag([2.0, 2.0, 2.0, 0.3, 0.2, 0.1]),))
    state = SystemState(Pose.identity(), [], np.zeros(6), [])
    _, ws = eidamb(model, state, np.zeros(6), np.zeros(0))
    assert np.array_equal(did_dv(model, ws), np.zeros((6, 6)))


@given(vec6)
def test_dv_base_only_symbolic(v):
    m = spatial_inertia(2.0, np.array([0.1, -0.2, 0.05]), np.diag([0.3, 0.2, 0.1]))
    model = MultibodyModel((-1,), (None,), (None,), (m,))
    state = SystemState(Pose.identity(), [], v, [])
    _, ws = eidamb(model, state, np.zeros(6), np.zeros(0))
    # d/dv (v x* M v) = (. x* Mv) + v x* M
    expected = cross_force_operand(m @ v) + cross_force(v) @ m
    assert np.allclose(did_dv(model, ws), expected, atol=1e-12)


def test_dr_pendulum_joint_row_is_zero():
    link = spatial_inertia(1.5, np.array([0.0, 0.0, -0.4]), np.diag([0.02, 0.02, 0.01]))
    model = MultibodyModel((-1, 0), (None, JointType("revolute", "x")), (None, Pose.identity()),
                           (np.eye(6), link))
    state = SystemState(Pose.identity(), [0.6], np.zeros(6), [1.7])
    _, ws = eidamb(model, state, np.zeros(6), np.zeros(1))
    dr = did_dr(model, ws)
    # a single hinge on a still base has no velocity-dependent joint torque
    assert dr[6, 0] == pytest.approx(0.0, abs=1e-13)
    # the base supplies the centripetal force -m l r^2 (towards the axis)
    theta, r = 0.6, 1.7
    radial = np.array([0.0, np.sin(theta), -np.cos(theta)])
    assert np.allclose(dr[:3, 0], -2 * 1.5 * 0.4 * r * radial, atol=1e-12)


def test_dv_dr_do_not_depend_on_accelerations():
    model = build_test_system()
    state = random_state(6, model)
    _, ws1 = eidamb(model, state, np.zeros(6), np.zeros(9))
    _, ws2 = eidamb(model, state, np.ones(6), np.linspace(-2, 2, 9))
    assert np.array_equal(did_dv(model, ws1), did_dv(model, ws2))
    assert np.array_equal(did_dr(model, ws1), did_dr(model, ws2))


def test_id_jacobians_container():
    model = build_test_system()
    state, a0, rdot = point(model, 0)
    _, ws = eidamb(model, state, a0, rdot)
    jac = id_jacobians(model, ws)
    assert isinstance(jac, IdJacobians)
    assert [b.shape for b in jac.blocks()] == [(15, 6), (15, 9), (15, 6), (15, 9)]
    assert jac.stacked().shape == (15, 30)
