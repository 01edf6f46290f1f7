"""Virtual-joint model of one elastic serial chain.

A chain is an ordered list of elements: rigid transforms, actuated joints,
passive (torque-free) joints, and lumped elastic joints ("virtual springs").
Rigid links carry no compliance; all elasticity sits in the springs. The
module provides forward geometry, tip Jacobians, inverse kinematics for the
rigid skeleton, and the two static-equilibrium solvers (tip held / wrench
applied) that everything above builds on.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace as _dc_replace

import numpy as np

from .errors import (
    BranchError,
    BucklingDetected,
    DimensionMismatch,
    NoConvergence,
    NonCanonical,
    SingularConfiguration,
    SingularSystem,
)
from .se3 import (
    DEFAULT_CHAR_LENGTH,
    Pose,
    Twist,
    Wrench,
    apply_twist,
    matrix_to_rotvec,
    pose_delta,
    rotvec_to_matrix,
    so3_left_jacobian,
    skew,
)

log = logging.getLogger(__name__)

_COND_LIMIT = 1e14


def _cross(a, b) -> np.ndarray:
    return np.array([
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ])


def _unit_axis(axis) -> np.ndarray:
    v = np.array(axis, dtype=float).reshape(3)
    n = float(np.linalg.norm(v))
    if n == 0.0:
        raise ValueError("joint axis must be nonzero")
    v /= n
    v.flags.writeable = False
    return v


@dataclass(frozen=True)
class RigidTransform:
    pose: Pose

    def __post_init__(self):
        object.__setattr__(self, "_rot", self.pose.rotation())


@dataclass(frozen=True)
class ActuatedJoint:
    axis: np.ndarray
    joint: str = "prismatic"
    stroke: tuple | None = None  # (lo, hi) on the actuator coordinate

    def __post_init__(self):
        object.__setattr__(self, "axis", _unit_axis(self.axis))
        if self.joint not in ("prismatic", "revolute"):
            raise ValueError(f"unknown joint type {self.joint!r}")
        if self.stroke is not None:
            lo, hi = self.stroke
            if not lo < hi:
                raise ValueError("stroke must be an increasing (lo, hi) pair")
            object.__setattr__(self, "stroke", (float(lo), float(hi)))


@dataclass(frozen=True)
class PassiveJoint:
    axis: np.ndarray
    joint: str = "revolute"

    def __post_init__(self):
        object.__setattr__(self, "axis", _unit_axis(self.axis))
        if self.joint not in ("prismatic", "revolute"):
            raise ValueError(f"unknown joint type {self.joint!r}")


@dataclass(frozen=True)
class ElasticJoint:
    """Lumped multi-dof spring: local twist = axes @ theta, torque = k_theta @ theta.

    `axes` selects which local twist directions (dx,dy,dz,rx,ry,rz) the spring
    deflects along; it defaults to the first `dof` coordinates.
    """

    k_theta: np.ndarray
    axes: np.ndarray | None = None

    def __post_init__(self):
        k = np.array(self.k_theta, dtype=float)
        if k.ndim != 2 or k.shape[0] != k.shape[1] or not 1 <= k.shape[0] <= 6:
            raise ValueError("k_theta must be a dxd matrix with 1 <= d <= 6")
        if not np.allclose(k, k.T, rtol=1e-9, atol=1e-12 * max(1.0, np.abs(k).max())):
            raise ValueError("k_theta must be symmetric")
        if np.linalg.eigvalsh(k).min() <= 0.0:
            raise ValueError("k_theta must be positive definite")
        k.flags.writeable = False
        object.__setattr__(self, "k_theta", k)
        axes = self.axes
        if axes is None:
            axes = np.eye(6)[:, : k.shape[0]]
        else:
            axes = np.array(axes, dtype=float)
            if axes.shape != (6, k.shape[0]):
                raise ValueError("axes must be 6 x dof")
        axes.flags.writeable = False
        object.__setattr__(self, "axes", axes)

    @property
    def dof(self) -> int:
        return self.k_theta.shape[0]


@dataclass(frozen=True)
class ChainModel:
    """Ordered chain elements plus the rigid offset from chain tip to platform."""

    elements: tuple
    end_offset: Pose = Pose.identity()

    def __post_init__(self):
        object.__setattr__(self, "elements", tuple(self.elements))
        n_rho = sum(1 for e in self.elements if isinstance(e, ActuatedJoint))
        n_q = sum(1 for e in self.elements if isinstance(e, PassiveJoint))
        n_theta = sum(e.dof for e in self.elements if isinstance(e, ElasticJoint))
        if n_rho < 1:
            raise ValueError("chain needs at least one actuated joint")
        if n_theta < 1:
            raise ValueError("chain needs at least one elastic joint")
        object.__setattr__(self, "n_rho", n_rho)
        object.__setattr__(self, "n_q", n_q)
        object.__setattr__(self, "n_theta", n_theta)

    def zero_state(self) -> "ChainState":
        return ChainState(np.zeros(self.n_rho), np.zeros(self.n_q), np.zeros(self.n_theta))

    def spring_matrix(self) -> np.ndarray:
        """Block-diagonal K_theta over all elastic joints, in theta order."""
        k = np.zeros((self.n_theta, self.n_theta))
        at = 0
        for e in self.elements:
            if isinstance(e, ElasticJoint):
                k[at: at + e.dof, at: at + e.dof] = e.k_theta
                at += e.dof
        return k


@dataclass(frozen=True)
class ChainState:
    """Actuated (rho), passive (q) and elastic (theta) coordinates."""

    rho: np.ndarray
    q: np.ndarray
    theta: np.ndarray

    def __post_init__(self):
        for name in ("rho", "q", "theta"):
            v = np.array(getattr(self, name), dtype=float).reshape(-1)
            v.flags.writeable = False
            object.__setattr__(self, name, v)

    def replace(self, **kw) -> "ChainState":
        return _dc_replace(self, **kw)


@dataclass(frozen=True)
class ChainEquilibrium:
    state: ChainState
    tip_pose: Pose
    reaction: Wrench
    converged: bool
    iterations: int
    residual: float


def _check_state(chain: ChainModel, state: ChainState):
    if state.rho.size != chain.n_rho or state.q.size != chain.n_q or state.theta.size != chain.n_theta:
        raise DimensionMismatch(
            f"state dims (rho={state.rho.size}, q={state.q.size}, theta={state.theta.size}) "
            f"do not match chain (rho={chain.n_rho}, q={chain.n_q}, theta={chain.n_theta})"
        )


def _fk_frames(chain: ChainModel, state: ChainState):
    """Run the chain, returning per-element entry frames and the tip frame."""
    r = np.eye(3)
    p = np.zeros(3)
    frames = []
    i_rho = i_q = i_theta = 0
    for element in chain.elements:
        frames.append((r, p))
        if isinstance(element, RigidTransform):
            p = p + r @ element.pose.position
            r = r @ element._rot
        elif isinstance(element, ActuatedJoint):
            v = state.rho[i_rho]
            i_rho += 1
            if element.joint == "prismatic":
                p = p + r @ (v * element.axis)
            else:
                r = r @ rotvec_to_matrix(v * element.axis)
        elif isinstance(element, PassiveJoint):
            v = state.q[i_q]
            i_q += 1
            if element.joint == "prismatic":
                p = p + r @ (v * element.axis)
            else:
                r = r @ rotvec_to_matrix(v * element.axis)
        elif isinstance(element, ElasticJoint):
            xi = element.axes @ state.theta[i_theta: i_theta + element.dof]
            i_theta += element.dof
            p = p + r @ xi[:3]
            r = r @ rotvec_to_matrix(xi[3:])
        else:
            raise TypeError(f"unknown chain element {element!r}")
    return frames, (r, p)


def forward_geometry(chain: ChainModel, state: ChainState) -> Pose:
    """Tip pose of the chain (end_offset not included)."""
    _check_state(chain, state)
    _, (r, p) = _fk_frames(chain, state)
    return Pose(p, matrix_to_rotvec(r))


def _jacobians_from_frames(chain, state, frames, p_tip):
    j_rho = np.zeros((6, chain.n_rho))
    j_q = np.zeros((6, chain.n_q))
    j_theta = np.zeros((6, chain.n_theta))
    i_rho = i_q = i_theta = 0
    for element, (r_k, p_k) in zip(chain.elements, frames):
        if isinstance(element, (ActuatedJoint, PassiveJoint)):
            axis_w = r_k @ element.axis
            col = np.zeros(6)
            if element.joint == "prismatic":
                col[:3] = axis_w
            else:
                col[:3] = _cross(axis_w, p_tip - p_k)
                col[3:] = axis_w
            if isinstance(element, ActuatedJoint):
                j_rho[:, i_rho] = col
                i_rho += 1
            else:
                j_q[:, i_q] = col
                i_q += 1
        elif isinstance(element, ElasticJoint):
            theta_e = state.theta[i_theta: i_theta + element.dof]
            xi = element.axes @ theta_e
            # dexp correction: derivative of exp(w) along a direction is
            # skew(J_l(w) dw) exp(w), so angular columns pick up J_l(w).
            jl = r_k @ so3_left_jacobian(xi[3:])
            omegas = jl @ element.axes[3:, :]  # 3 x dof
            arm = p_tip - (p_k + r_k @ xi[:3])
            lin = r_k @ element.axes[:3, :] - skew(arm) @ omegas
            j_theta[:, i_theta: i_theta + element.dof] = np.vstack([lin, omegas])
            i_theta += element.dof
    return j_rho, j_q, j_theta


def jacobians(chain: ChainModel, state: ChainState):
    """Tip twist per unit joint rate: (J_rho, J_q, J_theta).

    Columns are expressed in base axes about the tip origin, so
    pose_delta(fk(x), fk(x + dx)) ~= J dx to first order.
    """
    _check_state(chain, state)
    frames, (_, p_tip) = _fk_frames(chain, state)
    return _jacobians_from_frames(chain, state, frames, p_tip)


def _scaled_error(pose: Pose, target: Pose, char_length: float) -> np.ndarray:
    d = pose_delta(target, pose)
    return np.concatenate([d.dp, char_length * d.dphi])


def inverse_kinematics(
    chain: ChainModel,
    target: Pose,
    seed: ChainState,
    tol: float = 1e-12,
    max_iter: int = 200,
    char_length: float = DEFAULT_CHAR_LENGTH,
) -> ChainState:
    """Rigid-skeleton IK: find (rho, q) with theta = 0 reaching `target`.

    Damped least squares over the actuated and passive coordinates. Chains
    that control fewer than 6 directions converge on the reachable subspace
    and leave the rest to the seed; the residual check only looks at the
    range of the Jacobian.
    """
    _check_state(chain, seed)
    n_rho, n_q = chain.n_rho, chain.n_q
    x = np.concatenate([seed.rho, seed.q])
    state = seed.replace(theta=np.zeros(chain.n_theta))
    lam = 1e-12
    range_res = math.inf
    for _ in range(max_iter):
        state = state.replace(rho=x[:n_rho], q=x[n_rho:])
        pose = forward_geometry(chain, state)
        err = _scaled_error(pose, target, char_length)
        j_rho, j_q, _ = jacobians(chain, state)
        jac = np.hstack([j_rho, j_q])
        jac[3:, :] *= char_length

        u, sing, _ = np.linalg.svd(jac, full_matrices=False)
        keep = sing > max(1e-12, 1e-10 * sing[0]) if sing.size else sing > 0
        proj = u[:, keep]
        range_res = float(np.linalg.norm(proj.T @ err))
        if range_res <= tol:
            _check_stroke(chain, x[:n_rho])
            return state
        grad = jac.T @ err
        step = None
        accepted = False
        for _ in range(40):
            try:
                step = np.linalg.solve(jac.T @ jac + lam * np.eye(jac.shape[1]), -grad)
            except np.linalg.LinAlgError:
                lam = max(lam * 10.0, 1e-12)
                continue
            trial = x + step
            t_state = state.replace(rho=trial[:n_rho], q=trial[n_rho:])
            try:
                t_err = _scaled_error(forward_geometry(chain, t_state), target, char_length)
            except (NonCanonical, BranchError):
                lam = max(lam * 10.0, 1e-12)
                continue
            # compare inside the controllable subspace: the unreachable
            # component is (locally) constant and would mask real progress
            if float(np.linalg.norm(proj.T @ t_err)) < range_res or np.linalg.norm(step) < 1e-15:
                accepted = True
                break
            lam = max(lam * 10.0, 1e-12)
        if not accepted or step is None or np.linalg.norm(step) < 1e-15:
            if float(np.linalg.norm(grad)) < 1e-9:
                raise SingularConfiguration(
                    f"IK stalled at a stationary point, residual {range_res:.3e}"
                )
            raise NoConvergence("IK made no progress", residual=range_res)
        x = x + step
        lam = max(lam / 3.0, 1e-14)
    raise NoConvergence(f"IK did not converge in {max_iter} iterations", max_iter, range_res)


def _check_stroke(chain: ChainModel, rho: np.ndarray):
    i = 0
    for element in chain.elements:
        if isinstance(element, ActuatedJoint):
            if element.stroke is not None:
                lo, hi = element.stroke
                if not lo <= rho[i] <= hi:
                    raise NoConvergence(
                        f"actuator {i} coordinate {rho[i]:.6g} outside stroke [{lo:g}, {hi:g}]"
                    )
            i += 1


def _static_stack(chain, state, wrench6, k_theta):
    """Spring-law and passive-balance residual [K th - Jth' W ; Jq' W]."""
    _, j_q, j_theta = jacobians(chain, state)
    r_spring = k_theta @ state.theta - j_theta.T @ wrench6
    r_passive = j_q.T @ wrench6
    return r_spring, r_passive, j_q, j_theta


def equilibrium_given_tip(
    chain: ChainModel,
    rho,
    tip: Pose,
    seed: ChainState | ChainEquilibrium | None = None,
    tol: float = 1e-10,
    max_iter: int = 100,
    char_length: float = DEFAULT_CHAR_LENGTH,
) -> ChainEquilibrium:
    """Static equilibrium of the chain with its tip held at `tip`, rho locked.

    Solves the stacked system: forward geometry matches the tip (6 eqs),
    spring law K_theta theta = J_theta' W (n_theta eqs), and torque-free
    passive joints J_q' W = 0 (n_q eqs). Returns the wrench W the environment
    must apply at the tip to hold it there.
    """
    rho = np.asarray(rho, dtype=float).reshape(chain.n_rho)
    w0 = np.zeros(6)
    if isinstance(seed, ChainEquilibrium):
        w0 = seed.reaction.as_array()
        seed = seed.state
    if seed is None:
        seed = chain.zero_state()
    _check_state(chain, seed)
    state = seed.replace(rho=rho)

    try:
        return _equilibrium_tip_newton(chain, state, tip, w0, tol, max_iter, char_length)
    except NoConvergence:
        pass
    # Continuation in the tip pose, doubling the number of steps on failure.
    start = forward_geometry(chain, state)
    full = pose_delta(start, tip)
    steps = 4
    while steps <= 64:
        try:
            eq = None
            for k in range(1, steps + 1):
                waypoint = apply_twist(start, (k / steps) * full)
                eq = _equilibrium_tip_newton(
                    chain,
                    eq.state if eq else state,
                    waypoint,
                    eq.reaction.as_array() if eq else w0,
                    tol,
                    max_iter,
                    char_length,
                )
            return eq
        except NoConvergence:
            steps *= 2
    raise NoConvergence(f"tip equilibrium failed even with {steps // 2} continuation steps")


def _equilibrium_tip_newton(chain, state, tip, w0, tol, max_iter, char_length):
    n_q, n_theta = chain.n_q, chain.n_theta
    k_theta = chain.spring_matrix()
    q = state.q.copy()
    theta = state.theta.copy()
    w = w0.copy()
    use_geometric = False
    r_tip_t = tip.rotation().T
    p_tip_target = tip.position

    def residual(qv, thv, wv):
        st = state.replace(q=qv, theta=thv)
        frames, (r_fk, p_fk) = _fk_frames(chain, st)
        err_rot = matrix_to_rotvec(r_fk @ r_tip_t)
        j_rho_, j_q, j_theta = _jacobians_from_frames(chain, st, frames, p_fk)
        res = np.empty(6 + n_theta + n_q)
        res[:3] = p_fk - p_tip_target
        res[3:6] = char_length * err_rot
        res[6: 6 + n_theta] = k_theta @ thv - j_theta.T @ wv
        res[6 + n_theta:] = j_q.T @ wv
        return res, (r_fk, p_fk, err_rot, j_q, j_theta, st)

    def merit(res):
        kin = res[:6]
        stat = res[6:]
        return math.sqrt(float(kin @ kin) + 1e-10 * float(stat @ stat))

    res, aux = residual(q, theta, w)
    iterations = 0
    for iterations in range(max_iter + 1):
        if np.abs(res).max() <= tol:
            r_fk, p_fk, _, _, _, st = aux
            return ChainEquilibrium(st, Pose(p_fk, matrix_to_rotvec(r_fk)),
                                    Wrench.from_array(w), True, iterations,
                                    float(np.abs(res).max()))
        if iterations == max_iter:
            break
        _, _, err_rot, j_q, j_theta, st = aux
        corr = np.linalg.inv(so3_left_jacobian(err_rot))
        kin_rows = np.hstack([j_q, j_theta])
        kin_rows = np.vstack([kin_rows[:3], char_length * (corr @ kin_rows[3:])])

        m = np.zeros((6 + n_theta + n_q, n_q + n_theta + 6))
        m[:6, : n_q + n_theta] = kin_rows
        m[6: 6 + n_theta, n_q: n_q + n_theta] = k_theta
        m[6: 6 + n_theta, n_q + n_theta:] = -j_theta.T
        m[6 + n_theta:, n_q + n_theta:] = j_q.T
        if use_geometric:
            g = _geometric_term(chain, st, w, k_theta)
            m[6:, : n_q + n_theta] += g
        if iterations == 0:
            cond = np.linalg.cond(m)
            if not np.isfinite(cond) or cond > _COND_LIMIT:
                raise SingularSystem(f"equilibrium Newton matrix condition {cond:.2e}")
        try:
            dx = np.linalg.solve(m, -res)
        except np.linalg.LinAlgError as exc:
            raise SingularSystem(f"equilibrium Newton matrix is singular: {exc}") from exc

        base = merit(res)
        step = 1.0
        improved = False
        while step > 1e-8:
            q_t = q + step * dx[:n_q]
            th_t = theta + step * dx[n_q: n_q + n_theta]
            w_t = w + step * dx[n_q + n_theta:]
            try:
                res_t, aux_t = residual(q_t, th_t, w_t)
            except (NonCanonical, BranchError, ValueError):
                step *= 0.5
                continue
            if merit(res_t) < base * (1.0 - 1e-4 * step) or merit(res_t) < 1e-16:
                q, theta, w, res, aux = q_t, th_t, w_t, res_t, aux_t
                improved = True
                break
            step *= 0.5
        if not improved:
            cond = np.linalg.cond(m)
            if not np.isfinite(cond) or cond > _COND_LIMIT:
                raise SingularSystem(f"equilibrium Newton matrix condition {cond:.2e}")
            if not use_geometric:
                use_geometric = True  # stiffen the model with load-geometry coupling
                continue
            raise NoConvergence("tip equilibrium line search stalled",
                                iterations, float(np.abs(res).max()))
    raise NoConvergence("tip equilibrium iteration budget exhausted",
                        max_iter, float(np.abs(res).max()))


def _geometric_term(chain, state, wrench6, k_theta, step=1e-7):
    """d([J_theta' W ; J_q' W]) / d(q, theta) by central differences, W fixed."""
    n_q, n_theta = chain.n_q, chain.n_theta

    def g(qv, thv):
        st = state.replace(q=qv, theta=thv)
        _, j_q, j_theta = jacobians(chain, st)
        return np.concatenate([j_theta.T @ wrench6, j_q.T @ wrench6])

    out = np.zeros((n_theta + n_q, n_q + n_theta))
    for j in range(n_q + n_theta):
        dq = np.zeros(n_q)
        dth = np.zeros(n_theta)
        if j < n_q:
            dq[j] = step
        else:
            dth[j - n_q] = step
        gp = g(state.q + dq, state.theta + dth)
        gm = g(state.q - dq, state.theta - dth)
        col = (gp - gm) / (2.0 * step)
        out[:, j] = np.concatenate([-col[:n_theta], col[n_theta:]])
    return out


def equilibrium_given_wrench(
    chain: ChainModel,
    rho,
    w: Wrench,
    seed: ChainState | ChainEquilibrium | None = None,
    tol: float = 1e-10,
    max_iter: int = 100,
    char_length: float = DEFAULT_CHAR_LENGTH,
) -> ChainEquilibrium:
    """Deflected configuration of the chain under an applied tip wrench.

    Minimizes the elastic potential, i.e. solves K_theta theta = J_theta' w
    and J_q' w = 0 with a true-Hessian Newton plus load continuation. Raises
    BucklingDetected when the tangent stiffness turns indefinite along the
    load path (load beyond the stability limit).
    """
    rho = np.asarray(rho, dtype=float).reshape(chain.n_rho)
    if isinstance(seed, ChainEquilibrium):
        seed = seed.state
    if seed is None:
        seed = chain.zero_state()
    _check_state(chain, seed)
    state = seed.replace(rho=rho)
    w6 = w.as_array()

    steps = 1
    while steps <= 64:
        try:
            eq = None
            for k in range(1, steps + 1):
                eq = _equilibrium_wrench_newton(
                    chain, eq.state if eq else state, (k / steps) * w6, tol, max_iter
                )
            st = eq.state
            pose = forward_geometry(chain, st)
            return ChainEquilibrium(st, pose, w, True, eq.iterations, eq.residual)
        except NoConvergence:
            steps = 4 if steps == 1 else steps * 2
    raise NoConvergence(f"wrench equilibrium failed even with {steps // 2} continuation steps")


def _equilibrium_wrench_newton(chain, state, w6, tol, max_iter):
    n_q, n_theta = chain.n_q, chain.n_theta
    k_theta = chain.spring_matrix()
    q = state.q.copy()
    theta = state.theta.copy()

    def residual(qv, thv):
        st = state.replace(q=qv, theta=thv)
        r_spring, r_passive, _, _ = _static_stack(chain, st, w6, k_theta)
        return np.concatenate([r_spring, -r_passive]), st

    def hessian(st):
        h = np.zeros((n_theta + n_q, n_theta + n_q))
        h[:n_theta, :n_theta] = k_theta
        g = _geometric_term(chain, st, w6, k_theta)  # rows [-dJth'W; +dJq'W] over (q, th)
        h[:n_theta, :n_theta] += g[:n_theta, n_q:]
        h[:n_theta, n_theta:] += g[:n_theta, :n_q]
        h[n_theta:, :n_theta] -= g[n_theta:, n_q:]
        h[n_theta:, n_theta:] -= g[n_theta:, :n_q]
        return 0.5 * (h + h.T)

    res, st = residual(q, theta)
    for iterations in range(max_iter + 1):
        if res.size == 0 or np.abs(res).max() <= tol:
            h = hessian(st)
            if h.size and np.linalg.eigvalsh(h).min() < -1e-9 * max(1.0, np.abs(h).max()):
                raise BucklingDetected("tangent stiffness lost positive definiteness under load")
            return ChainEquilibrium(st, forward_geometry(chain, st), Wrench.from_array(w6),
                                    True, iterations, float(np.abs(res).max(initial=0.0)))
        if iterations == max_iter:
            break
        h = hessian(st)
        if np.linalg.eigvalsh(h).min() < -1e-9 * max(1.0, np.abs(h).max()):
            raise BucklingDetected("tangent stiffness lost positive definiteness under load")
        try:
            if np.linalg.cond(h) > 1e12:
                dx = np.linalg.lstsq(h, -res, rcond=None)[0]
            else:
                dx = np.linalg.solve(h, -res)
        except np.linalg.LinAlgError:
            dx = np.linalg.lstsq(h, -res, rcond=None)[0]
        base = float(np.linalg.norm(res))
        step = 1.0
        improved = False
        while step > 1e-8:
            theta_t = theta + step * dx[:n_theta]
            q_t = q + step * dx[n_theta:]
            try:
                res_t, st_t = residual(q_t, theta_t)
            except (NonCanonical, BranchError, ValueError):
                step *= 0.5
                continue
            if float(np.linalg.norm(res_t)) < base * (1.0 - 1e-4 * step) or base == 0.0:
                theta, q, res, st = theta_t, q_t, res_t, st_t
                improved = True
                break
            step *= 0.5
        if not improved:
            raise NoConvergence("wrench equilibrium line search stalled",
                                iterations, float(np.abs(res).max()))
    raise NoConvergence("wrench equilibrium iteration budget exhausted",
                        max_iter, float(np.abs(res).max()))


def cartesian_stiffness(
    chain: ChainModel,
    eq: ChainEquilibrium,
    step: float = 1e-7,
    tol: float = 1e-10,
    char_length: float = DEFAULT_CHAR_LENGTH,
) -> np.ndarray:
    """6x6 tip stiffness dW/dt by central differences of the exact reaction map.

    Evaluated about the equilibrium's tip pose with rho locked; returns the
    symmetric part and logs the raw asymmetry as a diagnostic.
    """
    k = np.zeros((6, 6))
    for j in range(6):
        d = np.zeros(6)
        d[j] = step
        plus = equilibrium_given_tip(
            chain, eq.state.rho, apply_twist(eq.tip_pose, Twist.from_array(d)),
            seed=eq.state, tol=tol, char_length=char_length,
        )
        minus = equilibrium_given_tip(
            chain, eq.state.rho, apply_twist(eq.tip_pose, Twist.from_array(-d)),
            seed=eq.state, tol=tol, char_length=char_length,
        )
        k[:, j] = (plus.reaction.as_array() - minus.reaction.as_array()) / (2.0 * step)
    asym = np.abs(k - k.T).max() / max(1.0, np.abs(k).max())
    log.debug("cartesian_stiffness asymmetry %.3e relative", asym)
    return 0.5 * (k + k.T)


def cartesian_stiffness_linear(chain: ChainModel, state: ChainState) -> np.ndarray:
    """Closed-form (passive-joint-corrected) tip stiffness at a configuration.

    Classic virtual-joint result: with C = J_theta K_theta^-1 J_theta', the
    stiffness is the top-left block of the inverse of [[C, J_q], [J_q', 0]].
    No load-geometry coupling, so this matches the finite-difference value
    only at unloaded equilibria.
    """
    _check_state(chain, state)
    _, j_q, j_theta = jacobians(chain, state)
    k_theta = chain.spring_matrix()
    c = j_theta @ np.linalg.solve(k_theta, j_theta.T)
    n_q = chain.n_q
    m = np.zeros((6 + n_q, 6 + n_q))
    m[:6, :6] = c
    m[:6, 6:] = j_q
    m[6:, :6] = j_q.T
    cond = np.linalg.cond(m)
    if not np.isfinite(cond) or cond > 1e12:
        raise SingularSystem(f"chain is rigid or under-constrained at the tip (cond {cond:.2e})")
    rhs = np.zeros((6 + n_q, 6))
    rhs[:6, :6] = np.eye(6)
    return np.linalg.solve(m, rhs)[:6, :]


def actuator_forces(chain: ChainModel, eq: ChainEquilibrium) -> np.ndarray:
    """Generalized actuator force per actuated joint: tau_j = J_rho[:, j]' W."""
    j_rho, _, _ = jacobians(chain, eq.state)
    return j_rho.T @ eq.reaction.as_array()
