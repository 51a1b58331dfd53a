import numpy as np
import pytest

from geolin.dynamics import forward_dynamics
from geolin.findiff import (
    FdConfig,
    analytic_forward_dynamics_jacobians,
    error_metrics,
    fd_forward_dynamics_jacobians,
    generate_trials,
    has_interior_minimum,
    make_trial,
    normalized_errors,
    parametric_study,
    run_validation,
    thread_count,
)
from geolin.model import MultibodyModel, SystemState, build_test_system, random_model
from geolin.spatial import cross_force, cross_force_operand, se3_exp, spatial_inertia


@pytest.fixture(scope="module")
def system():
    return build_test_system()


def test_config_validation():
    with pytest.raises(ValueError):
        FdConfig(0.0)
    with pytest.raises(ValueError):
        FdConfig(1e-6, "backward")


def test_block_shapes(system):
    tr = make_trial(system, 0, 0)
    fd = fd_forward_dynamics_jacobians(tr.model, tr.state, tr.tau)
    assert [b.shape for b in fd.blocks()] == [(15, 6), (15, 9), (15, 6), (15, 9)]


def test_base_only_matches_symbolic():
    m = spatial_inertia(2.0, np.array([0.1, -0.2, 0.05]), np.diag([0.3, 0.2, 0.1]))
    model = MultibodyModel((-1,), (None,), (None,), (m,))
    v = np.array([0.3, -0.5, 0.2, 0.7, -0.1, 0.4])
    state = SystemState(se3_exp([0.1, 0.2, 0.3, 0.4, 0.5, 0.6]), [], v, [])
    minv = np.linalg.inv(m)
    # vdot = -M^-1 (M a_g + v x* M v), so d vdot / dv = -M^-1 (. x* Mv + v x* M)
    expected = -minv @ (cross_force_operand(m @ v) + cross_force(v) @ m)
    for d in (1e-4, 1e-5, 1e-6):
        fd = fd_forward_dynamics_jacobians(model, state, np.zeros(0), cfg=FdConfig(d))
        assert np.abs(fd.dv - expected).max() <= 50 * d


def test_perturbed_poses_stay_on_group(system):
    tr = make_trial(system, 0, 1)
    for k in range(6):
        e = np.zeros(6)
        e[k] = 1e-6
        assert (tr.state.base_pose @ se3_exp(e)).is_valid(1e-10)


def test_left_perturbation_is_rejected(system):
    tr = make_trial(system, 1, 0)
    analytic = analytic_forward_dynamics_jacobians(tr.model, tr.state, tr.tau).dH
    d = 1e-6
    base = np.concatenate(forward_dynamics(tr.model, tr.state, tr.tau))
    left = np.column_stack([
        (np.concatenate(forward_dynamics(tr.model, tr.state.replace(base_pose=se3_exp(d * e) @ tr.state.base_pose), tr.tau)) - base) / d
        for e in np.eye(6)
    ])
    right = fd_forward_dynamics_jacobians(tr.model, tr.state, tr.tau).dH
    scale = np.abs(analytic).max()
    assert np.abs(right - analytic).max() <= 1e-4 * scale
    assert np.abs(left - analytic).max() > 1e-2 * scale


def test_metrics_zero_on_equal():
    a = [np.arange(6.0).reshape(2, 3)] * 3
    assert error_metrics(a, a) == (0.0, 0.0)


def test_metrics_single_entry():
    a = [np.full((2, 2), 2.0)]
    f = [a[0].copy()]
    f[0][1, 0] += 1.0
    e_max, e_avg = error_metrics(a, f)
    assert e_max == 0.5
    assert e_avg == pytest.approx(0.125)


def test_metrics_entry_normalization():
    a = [np.array([[1.0, 100.0]]), np.array([[3.0, 100.0]])]
    f = [np.array([[2.0, 100.0]]), np.array([[3.0, 100.0]])]
    assert error_metrics(a, f, "entry")[0] == 0.5
    assert error_metrics(a, f, "block")[0] == pytest.approx(1.0 / 51.0)


def test_zero_normalizer_falls_back_to_absolute():
    zero = [np.zeros((2, 2))]
    errs, flagged = normalized_errors(zero, zero)
    assert not flagged and not errs.any()
    errs, flagged = normalized_errors(zero, [np.full((2, 2), 1e-3)])
    assert flagged and errs.max() == 1e-3


def test_metrics_shape_mismatch():
    with pytest.raises(ValueError):
        error_metrics([np.zeros((2, 2))], [np.zeros((2, 3))])


def test_report_avg_below_max(system):
    res = run_validation(system, trials=4, seed=3)
    assert np.all(res.report.e_avg <= res.report.e_max)
    assert res.report.trial_count == 4
    assert res.trial_max.shape == (4, 4)


def test_trials_stable_under_count(system):
    short = generate_trials(system, 3, 11)
    long = generate_trials(system, 6, 11)
    for a, b in zip(short, long):
        assert np.array_equal(a.tau, b.tau)
        assert np.array_equal(a.state.joint_pos, b.state.joint_pos)


def test_trial_is_consistent(system):
    tr = make_trial(system, 5, 2, random_params=True)
    vdot, rdot = forward_dynamics(tr.model, tr.state, tr.tau)
    assert np.all(np.isfinite(vdot)) and np.all(np.isfinite(rdot))
    assert tr.model is not system


def test_parallel_matches_serial(system):
    a = run_validation(system, trials=6, seed=2, workers=1)
    b = run_validation(system, trials=6, seed=2, workers=4)
    assert np.array_equal(a.trial_max, b.trial_max)
    assert np.array_equal(a.trial_avg, b.trial_avg)


def test_study_empty_and_unsorted(system):
    assert parametric_study(system, []) == []
    with pytest.raises(ValueError):
        parametric_study(system, [1e-6, 1e-4])


def test_single_delta_study_equals_validation(system):
    rep = parametric_study(system, [1e-6], trials=3, seed=8)[0]
    val = run_validation(system, trials=3, seed=8).report
    assert np.array_equal(rep.e_max, val.e_max) and np.array_equal(rep.e_avg, val.e_avg)


def test_convergence_orders():
    model = random_model(2, 5)
    fwd = parametric_study(model, [1e-3, 1e-4], trials=3, seed=1, random_params=True)
    ratio = fwd[0].e_avg / fwd[1].e_avg
    assert np.all((ratio >= 5) & (ratio <= 20)), ratio
    cen = parametric_study(model, [1e-2, 1e-3], trials=3, seed=1, scheme="central", random_params=True)
    ratio = cen[0].e_avg[:2] / cen[1].e_avg[:2]
    assert np.all((ratio >= 50) & (ratio <= 200)), ratio
    # the dynamics are quadratic in the velocities: central differences are exact there
    assert np.all(cen[0].e_avg[2:] <= 1e-9)


def test_interior_minimum():
    assert has_interior_minimum([3, 1, 2])
    assert not has_interior_minimum([1, 2, 3])
    assert not has_interior_minimum([3, 2, 1])
    assert not has_interior_minimum([1, 2])


def test_thread_count_env(monkeypatch):
    monkeypatch.delenv("GEOLIN_THREADS", raising=False)
    assert thread_count() is None
    monkeypatch.setenv("GEOLIN_THREADS", "3")
    assert thread_count() == 3
    monkeypatch.setenv("GEOLIN_THREADS", "zero")
    with pytest.raises(ValueError):
        thread_count()
