"""Finite-difference oracle for forward-dynamics derivatives and the
normalized error metrics used to validate the analytic linearization.

Trial ``t`` of a run with master seed ``seed`` draws everything from
``numpy.random.default_rng([seed, t])``. NumPy hashes the pair through
``SeedSequence``, so trial ``t`` is the same whatever the trial count.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .derivatives import IdJacobians
from .dynamics import GRAVITY, consistent_base_acceleration, eidamb, forward_dynamics, immamb
from .linearization import linearize
from .model import MultibodyModel, SystemState, randomize_parameters, random_state
from .spatial import se3_exp

SCHEMES = ("forward", "central")
BLOCKS = ("H", "s", "v", "r")
THREADS_ENV = "GEOLIN_THREADS"
NORMALIZATIONS = ("block", "entry")


@dataclass(frozen=True)
class FdConfig:
    delta: float = 1e-6
    scheme: str = "forward"

    def __post_init__(self) -> None:
        if not self.delta > 0.0:
            raise ValueError(f"delta must be positive, got {self.delta!r}")
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")


def _fd_block(
    fd: Callable[[SystemState, np.ndarray | None], np.ndarray],
    perturb: Callable[[np.ndarray], SystemState],
    dim: int,
    base: np.ndarray,
    cfg: FdConfig,
    changes_s: bool,
    minv: np.ndarray,
) -> np.ndarray:
    out = np.zeros((base.shape[0], dim))
    d = cfg.delta
    for k in range(dim):
        e = np.zeros(dim)
        e[k] = d
        # the inverse mass matrix only depends on s
        m = None if changes_s else minv
        plus = fd(perturb(e), m)
        if cfg.scheme == "forward":
            out[:, k] = (plus - base) / d
        else:
            minus = fd(perturb(-e), m)
            out[:, k] = (plus - minus) / (2.0 * d)
    return out


def fd_forward_dynamics_jacobians(
    model: MultibodyModel,
    state: SystemState,
    tau: np.ndarray,
    gravity: np.ndarray = GRAVITY,
    cfg: FdConfig = FdConfig(),
) -> IdJacobians:
    """Finite-difference derivatives of the forward dynamics ``[v'; r']``.

    The pose is perturbed on the right, ``H exp(d^)``, with the body twist
    held fixed. Joint positions, the base twist and joint velocities are
    perturbed additively.
    """

    def fd(s: SystemState, minv: np.ndarray | None) -> np.ndarray:
        return np.concatenate(forward_dynamics(model, s, tau, gravity, minv=minv))

    minv = immamb(model, state.joint_pos)
    base = fd(state, minv)
    nj = model.n_joints
    pose = state.base_pose
    blocks = [
        _fd_block(fd, lambda e: state.replace(base_pose=pose @ se3_exp(e)), 6, base, cfg, False, minv),
        _fd_block(fd, lambda e: state.replace(joint_pos=state.joint_pos + e), nj, base, cfg, True, minv),
        _fd_block(fd, lambda e: state.replace(base_twist=state.base_twist + e), 6, base, cfg, False, minv),
        _fd_block(fd, lambda e: state.replace(joint_vel=state.joint_vel + e), nj, base, cfg, False, minv),
    ]
    return IdJacobians(*blocks)


def analytic_forward_dynamics_jacobians(
    model: MultibodyModel,
    state: SystemState,
    tau: np.ndarray,
    gravity: np.ndarray = GRAVITY,
) -> IdJacobians:
    """Analytic counterpart of :func:`fd_forward_dynamics_jacobians`: the
    acceleration rows ``-M^-1 D ID`` of the state matrix."""
    n, nj = model.n_dof, model.n_joints
    a = linearize(model, state, tau, gravity).A[n:]
    return IdJacobians(
        dH=a[:, :6],
        ds=a[:, 6 : 6 + nj],
        dv=a[:, 6 + nj : 12 + nj],
        dr=a[:, 12 + nj :],
    )


@dataclass(frozen=True)
class ErrorReport:
    """Aggregate normalized errors, one entry per block (H, s, v, r).

    ``absolute[i]`` is set when block ``i`` had entries with a zero
    normalizer and a nonzero error; those entries count unnormalized.
    """

    e_max: np.ndarray
    e_avg: np.ndarray
    trial_count: int
    delta: float
    absolute: tuple[bool, ...] = (False, False, False, False)

    def within(self, max_tol: float, avg_tol: float) -> bool:
        return bool(np.all(self.e_max <= max_tol) and np.all(self.e_avg <= avg_tol))


def normalized_errors(
    analytic: Sequence[np.ndarray], fd: Sequence[np.ndarray], normalization: str = "block"
) -> tuple[np.ndarray, bool]:
    """Per-trial normalized error arrays for one block.

    ``|analytic - fd|`` is divided by the mean of ``|analytic|`` over all
    trials. With ``normalization="block"`` that mean also runs over the
    entries of the block (one scalar); with ``"entry"`` every entry has its
    own normalizer, which blows up on entries that are zero up to round-off.
    Entries with a zero normalizer keep their absolute error (zero if the
    error is zero) and raise the returned flag.
    """
    if normalization not in NORMALIZATIONS:
        raise ValueError(f"normalization must be one of {NORMALIZATIONS}, got {normalization!r}")
    a = np.asarray(analytic, dtype=float)
    f = np.asarray(fd, dtype=float)
    if a.shape != f.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {f.shape}")
    err = np.abs(a - f)
    if a.size == 0:
        return err, False
    if normalization == "block":
        norm = np.full(a.shape[1:], np.mean(np.abs(a)))
    else:
        norm = np.mean(np.abs(a), axis=0)
    zero = norm == 0.0
    out = err / np.where(zero, 1.0, norm)
    flagged = bool(np.any(err[:, zero] > 0.0))
    return out, flagged


def error_metrics(
    analytic: Sequence[np.ndarray], fd: Sequence[np.ndarray], normalization: str = "block"
) -> tuple[float, float]:
    """``(e_max, e_avg)`` of one block over all trials and entries."""
    errs, _ = normalized_errors(analytic, fd, normalization)
    if errs.size == 0:
        return 0.0, 0.0
    return float(errs.max()), float(errs.mean())


@dataclass(frozen=True)
class Trial:
    model: MultibodyModel
    state: SystemState
    tau: np.ndarray


def make_trial(model: MultibodyModel, seed: int, index: int, random_params: bool = False,
               gravity: np.ndarray = GRAVITY) -> Trial:
    """Random state, joint accelerations and the matching joint torques.

    The base acceleration is the consistent one, so ``tau`` drives the
    free-floating system to exactly those accelerations.
    """
    rng = np.random.default_rng([seed, index])
    if random_params:
        model = randomize_parameters(model, rng)
    state = random_state(rng, model)
    joint_acc = rng.uniform(0.0, 1.0, model.n_joints)
    _, ws = eidamb(model, state, np.zeros(6), joint_acc, gravity)
    base_acc = consistent_base_acceleration(ws)
    torque, _ = eidamb(model, state, base_acc, joint_acc, gravity)
    return Trial(model, state, torque.joint_torques)


def thread_count() -> int | None:
    raw = os.environ.get(THREADS_ENV)
    if not raw:
        return None
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"{THREADS_ENV} must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ValueError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
    return n


def _map_ordered(fn, items, workers: int | None):
    items = list(items)
    if workers == 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


@dataclass
class ValidationResult:
    """Aggregate report plus per-trial ``(e_max, e_avg)`` rows (4 each)."""

    report: ErrorReport
    trial_max: np.ndarray
    trial_avg: np.ndarray
    analytic: list[IdJacobians] = field(repr=False, default_factory=list)
    fd: list[IdJacobians] = field(repr=False, default_factory=list)


def _evaluate(trials: Sequence[Trial], analytic: Sequence[IdJacobians],
              fd: Sequence[IdJacobians], delta: float,
              normalization: str = "block") -> ValidationResult:
    n = len(trials)
    trial_max = np.zeros((n, 4))
    trial_avg = np.zeros((n, 4))
    flags = []
    for b in range(4):
        errs, flagged = normalized_errors(
            [j.blocks()[b] for j in analytic], [j.blocks()[b] for j in fd], normalization
        )
        flags.append(flagged)
        if errs[0].size:
            trial_max[:, b] = errs.reshape(n, -1).max(axis=1)
            trial_avg[:, b] = errs.reshape(n, -1).mean(axis=1)
    report = ErrorReport(
        e_max=trial_max.max(axis=0) if n else np.zeros(4),
        e_avg=trial_avg.mean(axis=0) if n else np.zeros(4),
        trial_count=n,
        delta=delta,
        absolute=tuple(flags),
    )
    return ValidationResult(report, trial_max, trial_avg, list(analytic), list(fd))


def generate_trials(model: MultibodyModel, trials: int, seed: int, random_params: bool = False,
                    gravity: np.ndarray = GRAVITY) -> list[Trial]:
    if trials < 1:
        raise ValueError("trials must be at least 1")
    return [make_trial(model, seed, t, random_params, gravity) for t in range(trials)]


def run_validation(
    model: MultibodyModel,
    trials: int = 100,
    seed: int = 42,
    cfg: FdConfig = FdConfig(),
    random_params: bool = False,
    gravity: np.ndarray = GRAVITY,
    workers: int | None = None,
    normalization: str = "block",
) -> ValidationResult:
    """Compare analytic and finite-difference forward-dynamics derivatives
    over ``trials`` random trials."""
    workers = thread_count() if workers is None else workers
    cases = generate_trials(model, trials, seed, random_params, gravity)

    def one(tr: Trial) -> tuple[IdJacobians, IdJacobians]:
        return (
            analytic_forward_dynamics_jacobians(tr.model, tr.state, tr.tau, gravity),
            fd_forward_dynamics_jacobians(tr.model, tr.state, tr.tau, gravity, cfg),
        )

    pairs = _map_ordered(one, cases, workers)
    return _evaluate(cases, [p[0] for p in pairs], [p[1] for p in pairs], cfg.delta, normalization)


def parametric_study(
    model: MultibodyModel,
    deltas: Sequence[float],
    trials: int = 20,
    seed: int = 42,
    scheme: str = "forward",
    random_params: bool = False,
    gravity: np.ndarray = GRAVITY,
    workers: int | None = None,
    normalization: str = "block",
) -> list[ErrorReport]:
    """One :class:`ErrorReport` per step size. ``deltas`` must be strictly
    descending; the analytic side is computed once per trial."""
    deltas = [float(d) for d in deltas]
    if any(b >= a for a, b in zip(deltas, deltas[1:])):
        raise ValueError("deltas must be sorted in strictly descending order")
    if not deltas:
        return []
    cfgs = [FdConfig(d, scheme) for d in deltas]
    workers = thread_count() if workers is None else workers
    cases = generate_trials(model, trials, seed, random_params, gravity)

    def one(tr: Trial) -> tuple[IdJacobians, list[IdJacobians]]:
        an = analytic_forward_dynamics_jacobians(tr.model, tr.state, tr.tau, gravity)
        return an, [fd_forward_dynamics_jacobians(tr.model, tr.state, tr.tau, gravity, c) for c in cfgs]

    results = _map_ordered(one, cases, workers)
    analytic = [r[0] for r in results]
    return [
        _evaluate(cases, analytic, [r[1][i] for r in results], d, normalization).report
        for i, d in enumerate(deltas)
    ]


def has_interior_minimum(values: Sequence[float]) -> bool:
    """True when the smallest value is neither the first nor the last."""
    values = list(values)
    if len(values) < 3:
        return False
    k = int(np.argmin(values))
    return 0 < k < len(values) - 1
