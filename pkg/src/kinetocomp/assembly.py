"""Parallel-manipulator assembly: chains rigidly coupled to one platform.

Each chain predicts a platform pose through its end offset; loop closure means
all predictions coincide. Chains may carry end-point errors (base-frame twists
applied to their platform attachment), which makes stress-free assembly at the
nominal pose impossible and produces internal preload.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .chain import (
    ActuatedJoint,
    ChainModel,
    ChainState,
    RigidTransform,
    cartesian_stiffness_linear,
    equilibrium_given_tip,
    forward_geometry,
    inverse_kinematics,
)
from .errors import NoConvergence, SingularAggregate, StabilityLoss
from .se3 import (
    DEFAULT_CHAR_LENGTH,
    Pose,
    Twist,
    Wrench,
    apply_twist,
    compose,
    pose_delta,
    transport_wrench,
    twist_norm,
)
from .se3 import inverse as inverse_pose

log = logging.getLogger(__name__)

WRENCH_TOL = 1e-9  # N / N*m, componentwise force balance at convergence


@dataclass(frozen=True)
class AssemblyState:
    """Converged platform pose with per-chain states and platform-frame reactions."""

    platform_pose: Pose
    chain_states: tuple
    chain_reactions: tuple


@dataclass(frozen=True)
class ParallelManipulator:
    """m >= 2 elastic chains holding one rigid platform.

    `chain_errors` are the per-chain end-point error twists (base frame,
    evaluated at the nominal configuration); zero for a perfect manipulator.
    Construction solves the nominal IK of every chain against
    `platform_frame` and keeps those states as warm-start seeds.
    """

    chains: tuple
    chain_errors: tuple = None
    platform_frame: Pose = Pose.identity()
    char_length: float = DEFAULT_CHAR_LENGTH

    def __post_init__(self):
        chains = tuple(self.chains)
        if len(chains) < 2:
            raise ValueError("a parallel manipulator needs at least two chains")
        object.__setattr__(self, "chains", chains)
        errors = self.chain_errors
        if errors is None:
            errors = tuple(Twist.zero() for _ in chains)
        errors = tuple(errors)
        if len(errors) != len(chains):
            raise ValueError("need one end-point error twist per chain")
        object.__setattr__(self, "chain_errors", errors)

        # Fold each end offset into the element list so chain-level solvers
        # work directly in the platform frame.
        ext = tuple(
            ChainModel(c.elements + (RigidTransform(c.end_offset),), Pose.identity())
            for c in chains
        )
        object.__setattr__(self, "extended_chains", ext)

        homes = []
        for i, (chain, ext_chain) in enumerate(zip(chains, ext)):
            tip_target = compose(self.platform_frame, inverse_pose(chain.end_offset))
            try:
                state = inverse_kinematics(chain, tip_target, chain.zero_state())
            except Exception as exc:
                raise ValueError(f"chain {i} cannot reach the nominal platform frame") from exc
            gap = pose_delta(forward_geometry(ext_chain, state), self.platform_frame)
            if twist_norm(gap, self.char_length) > 1e-7:
                raise ValueError(
                    f"chain {i} misses the nominal platform frame by "
                    f"{twist_norm(gap, self.char_length):.3e}; end offsets do not coincide"
                )
            homes.append(state)
        object.__setattr__(self, "home_states", tuple(homes))

    @property
    def m(self) -> int:
        return len(self.chains)

    def is_perfect(self) -> bool:
        return all(
            float(np.abs(e.as_array()).max()) == 0.0 for e in self.chain_errors
        )


def _chain_states_at(manip: ParallelManipulator, t: Pose, seeds=None) -> list:
    """Nominal (theta = 0) per-chain IK states for platform pose `t`.

    Each chain is solved against the platform target composed with its end
    offset, i.e. against its own tip. For targets the rigid skeleton cannot
    realize (a rotation commanded to a translational chain) this still moves
    the attachment points the way the rigid platform would carry them.
    """
    seeds = seeds if seeds is not None else manip.home_states
    out = []
    for i, chain in enumerate(manip.chains):
        tip_target = compose(t, inverse_pose(chain.end_offset))
        try:
            out.append(inverse_kinematics(chain, tip_target, seeds[i]))
        except NoConvergence as exc:
            raise NoConvergence(f"chain {i}: {exc}", exc.iterations, exc.residual) from exc
    return out


def command_from_target(manip: ParallelManipulator, t0: Pose, seeds=None) -> list:
    """Actuator coordinates per chain placing the rigid skeleton at `t0`."""
    return [s.rho for s in _chain_states_at(manip, t0, seeds)]


def wrench_at(manip: ParallelManipulator, rho_all, t: Pose, seed=None):
    """External wrench needed to hold the platform at `t`, with actuators locked.

    Runs one held-tip equilibrium per chain (through its end-point error) and
    sums the chain reactions about the platform origin. Returns the total
    wrench and the per-chain assembly state.
    """
    states = seed.chain_states if isinstance(seed, AssemblyState) else seed
    if states is None:
        states = manip.home_states
    total = np.zeros(6)
    eq_states, reactions = [], []
    for i, chain in enumerate(manip.extended_chains):
        err = manip.chain_errors[i]
        target = apply_twist(t, -err)
        try:
            eq = equilibrium_given_tip(
                chain, rho_all[i], target, seed=states[i], char_length=manip.char_length
            )
        except NoConvergence as exc:
            raise NoConvergence(f"chain {i}: {exc}", exc.iterations, exc.residual) from exc
        reaction = transport_wrench(eq.reaction, eq.tip_pose.position, t.position)
        total += reaction.as_array()
        eq_states.append(eq.state)
        reactions.append(reaction)
    return Wrench.from_array(total), AssemblyState(t, tuple(eq_states), tuple(reactions))


def _unloaded_guess(manip: ParallelManipulator, rho_all) -> Pose:
    chain = manip.extended_chains[0]
    state = manip.home_states[0].replace(
        rho=np.asarray(rho_all[0], dtype=float), theta=np.zeros(chain.n_theta)
    )
    return apply_twist(forward_geometry(chain, state), manip.chain_errors[0])


def compliance_forward(manip: ParallelManipulator, rho_all, f: Wrench, seed=None, start=None):
    """Platform pose under external wrench `f` (the nonlinear compliance map).

    Damped Newton on the force balance, using the summed linear chain
    stiffness as iteration matrix, with load continuation when the direct
    solve fails. Returns the loaded pose and the assembly state.
    """
    t = start if start is not None else _unloaded_guess(manip, rho_all)
    f6 = f.as_array()
    try:
        return _compliance_newton(manip, rho_all, f6, t, seed)
    except NoConvergence:
        pass
    steps = 4
    while steps <= 64:
        try:
            pose, state = t, seed
            for k in range(1, steps + 1):
                pose, state = _compliance_newton(
                    manip, rho_all, (k / steps) * f6, pose, state
                )
            return pose, state
        except NoConvergence:
            steps *= 2
    raise NoConvergence(f"compliance solve failed even with {steps // 2} load steps")


def _compliance_newton(manip, rho_all, f6, t, seed, max_iter=60):
    w, state = wrench_at(manip, rho_all, t, seed)
    k = None
    refreshed = False
    for _ in range(max_iter):
        err = f6 - w.as_array()
        if np.abs(err).max() <= WRENCH_TOL:
            return t, state
        if k is None:
            # frozen across iterations: the linear aggregate barely moves
            # within one solve and refreshing it dominates the cost
            k = np.zeros((6, 6))
            for i, chain in enumerate(manip.extended_chains):
                k += cartesian_stiffness_linear(chain, state.chain_states[i])
        dt = np.linalg.solve(k, err)
        step = 1.0
        improved = False
        while step > 1e-6:
            t_try = apply_twist(t, Twist.from_array(step * dt))
            try:
                w_try, state_try = wrench_at(manip, rho_all, t_try, state)
            except NoConvergence:
                step *= 0.5
                continue
            if np.linalg.norm(f6 - w_try.as_array()) < np.linalg.norm(err) or np.abs(
                f6 - w_try.as_array()
            ).max() <= WRENCH_TOL:
                t, w, state = t_try, w_try, state_try
                improved = True
                break
            step *= 0.5
        if not improved:
            if not refreshed:
                refreshed = True  # refresh the frozen matrix once before giving up
                k = None
                continue
            tangent = aggregate_stiffness(manip, t, mode="nonlinear", rho_all=rho_all, seed=state)
            if np.linalg.eigvalsh(0.5 * (tangent + tangent.T)).min() < 0.0:
                raise StabilityLoss("no stable equilibrium at this load")
            raise NoConvergence("compliance Newton stalled")
    raise NoConvergence("compliance Newton iteration budget exhausted", max_iter)


def assembly_deflection(manip: ParallelManipulator, at: Pose) -> Twist:
    """Platform shift from force-balanced assembly of non-perfect chains.

    Stiffness-weighted mean of the chain end-point errors, using the unloaded
    linear chain stiffness matrices evaluated at the nominal pose.
    """
    states = _chain_states_at(manip, at)
    ks = [
        cartesian_stiffness_linear(chain, states[i])
        for i, chain in enumerate(manip.extended_chains)
    ]
    total = np.sum(ks, axis=0)
    cond = np.linalg.cond(total)
    if not np.isfinite(cond) or cond > 1e12:
        raise SingularAggregate(f"summed chain stiffness condition {cond:.2e}")
    rhs = np.zeros(6)
    for k, err in zip(ks, manip.chain_errors):
        rhs += k @ err.as_array()
    return Twist.from_array(np.linalg.solve(total, rhs))


def aggregate_stiffness(
    manip: ParallelManipulator,
    at: Pose,
    mode: str = "linear",
    rho_all=None,
    seed=None,
    step: float = 1e-7,
) -> np.ndarray:
    """Manipulator stiffness at pose `at`.

    linear: sum of closed-form unloaded chain matrices (theta = 0 IK states).
    nonlinear: central finite difference of `wrench_at` around `at`, which
    picks up whatever load is implied by holding the platform there.
    """
    if mode == "linear":
        states = _chain_states_at(manip, at)
        return np.sum(
            [
                cartesian_stiffness_linear(chain, states[i])
                for i, chain in enumerate(manip.extended_chains)
            ],
            axis=0,
        )
    if mode != "nonlinear":
        raise ValueError(f"unknown stiffness mode {mode!r}")
    if rho_all is None:
        rho_all = command_from_target(manip, at)
    if seed is None:
        _, seed = wrench_at(manip, rho_all, at)
    k = np.zeros((6, 6))
    for j in range(6):
        d = np.zeros(6)
        d[j] = step
        # seed both sides identically so convergence slack cancels in the difference
        wp, _ = wrench_at(manip, rho_all, apply_twist(at, Twist.from_array(d)), seed)
        wm, _ = wrench_at(manip, rho_all, apply_twist(at, Twist.from_array(-d)), seed)
        k[:, j] = (wp.as_array() - wm.as_array()) / (2.0 * step)
    return k


def mount_error_twist(chain: ChainModel, state: ChainState, angle_rad: float,
                      joint_index: int = 0) -> Twist:
    """End-point error twist from an actuator mounting rotated about its axis.

    Inserts a rigid rotation of `angle_rad` about the actuated joint's own
    axis just before that joint and returns the platform-attachment shift at
    the given nominal state (base-frame twist).
    """
    count = -1
    elements = []
    target_axis = None
    for element in chain.elements:
        if isinstance(element, ActuatedJoint):
            count += 1
            if count == joint_index:
                target_axis = element.axis
                elements.append(RigidTransform(Pose(np.zeros(3), angle_rad * element.axis)))
        elements.append(element)
    if target_axis is None:
        raise ValueError(f"chain has no actuated joint with index {joint_index}")
    perturbed = ChainModel(tuple(elements), chain.end_offset)
    nominal_tip = compose(forward_geometry(chain, state), chain.end_offset)
    shifted_tip = compose(forward_geometry(perturbed, state), chain.end_offset)
    return pose_delta(nominal_tip, shifted_tip)
