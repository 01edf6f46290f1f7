"""Target-point adjustment: place the loaded platform exactly on the desired pose.

Given a desired pose and the machining wrench, these routines solve the
implicit condition "commanding the adjusted target puts the loaded platform
on the desired pose" for the adjusted target. Three iterative schemes are
provided (true Newton on the holding wrench, a frozen-matrix relaxation, and
a matrix-free relaxation on the loaded pose) plus the classic one-shot linear
correction as a baseline. Non-perfect chains are handled by correcting each
chain's command individually so that their stress-free attachment points
coincide on the adjusted target.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .assembly import (
    AssemblyState,
    ParallelManipulator,
    aggregate_stiffness,
    assembly_deflection,
    command_from_target,
    compliance_forward,
    wrench_at,
)
from .chain import ChainEquilibrium, actuator_forces, inverse_kinematics
from .errors import Divergence, NoConvergence, SingularKC, SingularKtp
from .se3 import (
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

SCHEMES = ("newton", "fixed", "free", "linear")


@dataclass(frozen=True)
class SchemeConfig:
    """Which fixed-point scheme to run and how hard to push it."""

    scheme: str = "free"
    alpha: float = 0.5
    tol: float = 1e-9  # scaled twist norm, meters
    max_iter: int = 50

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError("alpha must be in (0, 1]")
        if self.tol <= 0.0:
            raise ValueError("tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")


@dataclass(frozen=True)
class CompensationResult:
    """Adjusted target plus everything a controller or report needs."""

    adjusted_target: Pose
    per_chain_targets: tuple  # per-chain command-correction twists
    rho: tuple  # per-chain actuator coordinates
    delta_rho: tuple  # vs. the nominal unloaded inverse kinematics
    tau: tuple  # per-chain actuator forces at the loaded equilibrium
    residual: float  # scaled twist norm of (loaded pose - desired pose)
    iterations: int  # update steps taken (1 when converged at the initial check)
    scheme_used: str
    converged: bool
    loaded_pose: Pose


def per_chain_targets(manip: ParallelManipulator, delta_t0: Twist, at: Pose) -> list:
    """Per-chain command corrections for a common target shift `delta_t0`.

    Adds the assembly deflection and subtracts each chain's own end-point
    error, so commanded stress-free attachment points coincide again.
    """
    dte = assembly_deflection(manip, at)
    return [delta_t0 + dte - err for err in manip.chain_errors]


class _CommandContext:
    """Shared machinery for one compensation call: command map + warm starts."""

    def __init__(self, manip: ParallelManipulator, t0: Pose):
        self.manip = manip
        self.t0 = t0
        self.dte = assembly_deflection(manip, t0) if not manip.is_perfect() else Twist.zero()
        self._ik_seeds = list(manip.home_states)
        self._assembly_seed = None
        self._loaded_start = None
        self.model_evals = 0

    def chain_corrections(self, t0f: Pose) -> list:
        d0 = pose_delta(self.t0, t0f)
        return [d0 + self.dte - err for err in self.manip.chain_errors]

    def rho_for(self, t0f: Pose, remember=True) -> list:
        corrections = self.chain_corrections(t0f)
        rhos = []
        for i, chain in enumerate(self.manip.chains):
            target = compose(apply_twist(self.t0, corrections[i]), inverse_pose(chain.end_offset))
            state = inverse_kinematics(chain, target, self._ik_seeds[i])
            if remember:
                self._ik_seeds[i] = state
            rhos.append(state.rho)
        return rhos

    def loaded_pose(self, t0f: Pose, f: Wrench):
        pose, state = compliance_forward(
            self.manip, self.rho_for(t0f), f,
            seed=self._assembly_seed, start=self._loaded_start,
        )
        self._assembly_seed = state
        self._loaded_start = pose
        self.model_evals += 1
        return pose, state

    def holding_wrench(self, t0f: Pose, remember=True):
        w, state = wrench_at(
            self.manip, self.rho_for(t0f, remember=remember), self.t0,
            seed=self._assembly_seed,
        )
        if remember:
            self._assembly_seed = state
        self.model_evals += 1
        return w, state


def _finalize(ctx: _CommandContext, t0f: Pose, f: Wrench, residual, iterations,
              scheme, converged, loaded, state) -> CompensationResult:
    manip = ctx.manip
    rho = ctx.rho_for(t0f)
    nominal = command_from_target(manip, ctx.t0)
    taus = []
    for i, chain in enumerate(manip.extended_chains):
        tip_pos = loaded.position - manip.chain_errors[i].dp
        reaction = transport_wrench(state.chain_reactions[i], loaded.position, tip_pos)
        eq = ChainEquilibrium(state.chain_states[i], loaded, reaction, True, 0, 0.0)
        taus.append(actuator_forces(chain, eq))
    return CompensationResult(
        adjusted_target=t0f,
        per_chain_targets=tuple(ctx.chain_corrections(t0f)),
        rho=tuple(rho),
        delta_rho=tuple(r - n for r, n in zip(rho, nominal)),
        tau=tuple(taus),
        residual=residual,
        iterations=max(iterations, 1),
        scheme_used=scheme,
        converged=converged,
        loaded_pose=loaded,
    )


def matrix_free_scheme(manip: ParallelManipulator, t0: Pose, f: Wrench,
                       cfg: SchemeConfig) -> CompensationResult:
    """Relaxation on the loaded pose itself; no stiffness matrices involved.

    Each pass evaluates the loaded pose for the current adjusted target and
    moves the target by alpha times the remaining pose error.
    """
    ctx = _CommandContext(manip, t0)
    t0f = t0
    alpha, halved = cfg.alpha, False
    updates = 0
    prev = None
    grow = 0
    for _ in range(cfg.max_iter + 1):
        loaded, state = ctx.loaded_pose(t0f, f)
        err = pose_delta(loaded, t0)
        en = twist_norm(err, manip.char_length)
        if en <= cfg.tol:
            return _finalize(ctx, t0f, f, en, updates, "free", True, loaded, state)
        if prev is not None and en > prev:
            grow += 1
            if grow >= 5:
                if halved:
                    raise Divergence(f"residual kept growing at alpha={alpha}")
                alpha, halved, grow = 0.5 * alpha, True, 0
                log.warning("matrix-free residual growing; halving alpha to %g", alpha)
        else:
            grow = 0
        prev = en
        if updates == cfg.max_iter:
            break
        t0f = apply_twist(t0f, alpha * err)
        updates += 1
    raise NoConvergence(f"matrix-free scheme: residual {prev:.3e} after {updates} updates",
                        updates, prev)


def _wrench_space_scheme(manip, t0, f, cfg, scheme) -> CompensationResult:
    """Common loop for the Newton and frozen-matrix schemes.

    Iterates on the wrench needed to hold the platform at the desired pose;
    once the implied pose step is small, verifies the actual loaded pose and
    only stops when the verified residual meets the tolerance.
    """
    ctx = _CommandContext(manip, t0)
    f6 = f.as_array()
    t0f = t0
    alpha = cfg.alpha if scheme == "fixed" else 1.0
    halved = False
    k_frozen = aggregate_stiffness(manip, t0, mode="linear") if scheme == "fixed" else None
    updates = 0
    prev = None
    grow = 0
    residual = None
    for _ in range(cfg.max_iter + 1):
        w, _ = ctx.holding_wrench(t0f)
        rw = f6 - w.as_array()
        loaded, lstate = ctx.loaded_pose(t0f, f)
        residual = twist_norm(pose_delta(loaded, t0), manip.char_length)
        if residual <= cfg.tol:
            return _finalize(ctx, t0f, f, residual, updates, scheme, True, loaded, lstate)
        rn = float(np.linalg.norm(rw))
        if prev is not None and rn > prev:
            grow += 1
            if grow >= 5:
                if scheme != "fixed" or halved:
                    raise Divergence(f"{scheme} scheme: wrench residual kept growing")
                alpha, halved, grow = 0.5 * alpha, True, 0
                log.warning("fixed-matrix residual growing; halving alpha to %g", alpha)
        else:
            grow = 0
        prev = rn
        if updates == cfg.max_iter:
            break
        if scheme == "fixed":
            # frozen positive aggregate replaces the (negative) derivative
            dt = -alpha * np.linalg.solve(k_frozen, rw)
        else:
            dt = np.linalg.solve(_target_point_stiffness(ctx, t0f), rw)
        t0f = apply_twist(t0f, Twist.from_array(dt))
        updates += 1
    raise NoConvergence(f"{scheme} scheme: pose residual {residual:.3e} after {updates} updates",
                        updates, residual)


def _target_point_stiffness(ctx: _CommandContext, t0f: Pose, step: float = 1e-7) -> np.ndarray:
    """Central finite difference of the holding wrench over the adjusted target."""
    k = np.zeros((6, 6))
    for j in range(6):
        d = np.zeros(6)
        d[j] = step
        wp, _ = ctx.holding_wrench(apply_twist(t0f, Twist.from_array(d)), remember=False)
        wm, _ = ctx.holding_wrench(apply_twist(t0f, Twist.from_array(-d)), remember=False)
        k[:, j] = (wp.as_array() - wm.as_array()) / (2.0 * step)
    cond = np.linalg.cond(k)
    if not np.isfinite(cond) or cond > 1e12:
        raise SingularKtp(f"target-point stiffness condition {cond:.2e}")
    return k


def newton_scheme(manip: ParallelManipulator, t0: Pose, f: Wrench,
                  cfg: SchemeConfig) -> CompensationResult:
    """True Newton on the holding-wrench condition.

    The derivative of the holding wrench with respect to the adjusted target
    is re-differenced each pass, which keeps the quadratic tail.
    """
    return _wrench_space_scheme(manip, t0, f, cfg, "newton")


def fixed_matrix_scheme(manip: ParallelManipulator, t0: Pose, f: Wrench,
                        cfg: SchemeConfig) -> CompensationResult:
    """Relaxation with the unloaded aggregate stiffness frozen at the start."""
    return _wrench_space_scheme(manip, t0, f, cfg, "fixed")


def linear_one_shot(manip: ParallelManipulator, t0: Pose, f: Wrench,
                    tol: float = 1e-9) -> CompensationResult:
    """Classic one-step correction through the Cartesian compliance matrix.

    Shifts the target by minus the linear deflection prediction and reports
    the verified residual; nothing is iterated.
    """
    ctx = _CommandContext(manip, t0)
    k = aggregate_stiffness(manip, t0, mode="linear")
    cond = np.linalg.cond(k)
    if not np.isfinite(cond) or cond > 1e12:
        raise SingularKC(f"Cartesian stiffness condition {cond:.2e}")
    t0f = apply_twist(t0, Twist.from_array(-np.linalg.solve(k, f.as_array())))
    loaded, state = ctx.loaded_pose(t0f, f)
    residual = twist_norm(pose_delta(loaded, t0), manip.char_length)
    return _finalize(ctx, t0f, f, residual, 1, "linear", residual <= tol, loaded, state)


_SCHEME_FUNCS = {
    "newton": newton_scheme,
    "fixed": fixed_matrix_scheme,
    "free": matrix_free_scheme,
}


def compensate_point(manip: ParallelManipulator, t0: Pose, f: Wrench,
                     cfg: SchemeConfig) -> CompensationResult:
    """Full single-pose pipeline: corrections, scheme, commands, verification.

    Computes the assembly-deflection correction, runs the configured scheme
    for the adjusted target, derives per-chain commands and actuator forces
    at the loaded equilibrium, and records the verified residual.
    """
    if cfg.scheme == "linear":
        return linear_one_shot(manip, t0, f, tol=cfg.tol)
    return _SCHEME_FUNCS[cfg.scheme](manip, t0, f, cfg)
