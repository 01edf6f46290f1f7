"""Independent reference implementations used to cross-check the library.

Everything here follows a different route than the package: homogeneous 4x4
matrices with scipy rotations for geometry, central finite differences for
Jacobians, and a generic constrained optimizer for elastic equilibria. These
stay deliberately decoupled from the solver code they validate.
"""

from __future__ import annotations

import numpy as np
from scipy.optimize import minimize
from scipy.spatial.transform import Rotation

from kinetocomp.chain import ActuatedJoint, ElasticJoint, PassiveJoint, RigidTransform
from kinetocomp.se3 import Pose, Twist


def hom(position, rotvec) -> np.ndarray:
    """4x4 homogeneous matrix from position + rotation vector (scipy route)."""
    t = np.eye(4)
    t[:3, :3] = Rotation.from_rotvec(np.array(rotvec, dtype=float)).as_matrix()
    t[:3, 3] = np.asarray(position, dtype=float)
    return t


def hom_from_pose(p: Pose) -> np.ndarray:
    return hom(p.position, p.rotvec)


def pose_from_hom(t: np.ndarray) -> Pose:
    return Pose(t[:3, 3], Rotation.from_matrix(t[:3, :3]).as_rotvec())


def element_matrix(element, coords) -> np.ndarray:
    """Homogeneous matrix of one chain element, built without library FK code."""
    if isinstance(element, RigidTransform):
        return hom_from_pose(element.pose)
    if isinstance(element, (ActuatedJoint, PassiveJoint)):
        value = float(coords[0])
        if element.joint == "prismatic":
            return hom(value * element.axis, np.zeros(3))
        return hom(np.zeros(3), value * element.axis)
    if isinstance(element, ElasticJoint):
        xi = element.axes @ np.asarray(coords, dtype=float)
        return hom(xi[:3], xi[3:])
    raise TypeError(f"unknown element {element!r}")


def chain_fk_matrix(chain, state) -> np.ndarray:
    """Chain forward geometry by plain 4x4 multiplication."""
    t = np.eye(4)
    rho, q, theta = list(state.rho), list(state.q), list(state.theta)
    for element in chain.elements:
        if isinstance(element, ActuatedJoint):
            coords = [rho.pop(0)]
        elif isinstance(element, PassiveJoint):
            coords = [q.pop(0)]
        elif isinstance(element, ElasticJoint):
            coords, theta = theta[: element.dof], theta[element.dof:]
        else:
            coords = []
        t = t @ element_matrix(element, coords)
    return t


def fd_jacobian(fk, x0, step=1e-7) -> np.ndarray:
    """Central finite-difference Jacobian of a pose-valued map.

    `fk` maps a coordinate vector to a Pose; the result columns are twists
    (d position, d rotvec via the relative-rotation log).
    """
    x0 = np.asarray(x0, dtype=float)
    cols = []
    for j in range(x0.size):
        dx = np.zeros_like(x0)
        dx[j] = step
        plus, minus = fk(x0 + dx), fk(x0 - dx)
        dp = (plus.position - minus.position) / (2.0 * step)
        rel = Rotation.from_rotvec(plus.rotvec.copy()) * Rotation.from_rotvec(minus.rotvec.copy()).inv()
        dphi = rel.as_rotvec() / (2.0 * step)
        cols.append(np.concatenate([dp, dphi]))
    return np.array(cols).T


def pose_error_vec(pose: Pose, target: Pose, char_length: float) -> np.ndarray:
    dp = pose.position - target.position
    rel = Rotation.from_rotvec(pose.rotvec.copy()) * Rotation.from_rotvec(target.rotvec.copy()).inv()
    return np.concatenate([dp, char_length * rel.as_rotvec()])


def energy_equilibrium(chain, rho, tip: Pose, seed, char_length=0.1):
    """Constrained minimum of the elastic energy via an augmented Lagrangian.

    Minimizes 0.5 * theta' K theta over (q, theta) subject to the chain tip
    matching `tip`, with generic BFGS inner solves and multiplier updates on
    the outside. Returns (q, theta) plus the tip wrench recovered from the
    stationarity conditions.
    """
    n_q, n_theta = seed.q.size, seed.theta.size
    k_full = chain_spring_matrix(chain)
    rho = np.asarray(rho, dtype=float)

    def constraint(x):
        state = seed.replace(rho=rho, q=x[:n_q], theta=x[n_q:])
        pose = pose_from_hom(chain_fk_matrix(chain, state))
        return pose_error_vec(pose, tip, char_length)

    def constraint_jac(x):
        state = seed.replace(rho=rho, q=x[:n_q], theta=x[n_q:])
        jac = fd_state_jacobian(chain, state)  # columns: (theta, q)
        jac = np.hstack([jac[:, n_theta:], jac[:, :n_theta]])  # -> (q, theta)
        jac[3:, :] *= char_length
        return jac

    mu = 1e8
    lam = np.zeros(6)
    x = np.concatenate([seed.q, seed.theta])
    cv = constraint(x)
    for _ in range(40):
        def objective(z):
            c = constraint(z)
            th = z[n_q:]
            return 0.5 * float(th @ k_full @ th) + float(lam @ c) + 0.5 * mu * float(c @ c)

        def gradient(z):
            c = constraint(z)
            jc = constraint_jac(z)
            g = np.concatenate([np.zeros(n_q), k_full @ z[n_q:]])
            return g + jc.T @ (lam + mu * c)

        res = minimize(objective, x, jac=gradient, method="BFGS",
                       options={"maxiter": 400, "gtol": 1e-9})
        x = res.x
        cv = constraint(x)
        if np.linalg.norm(cv) < 1e-13:
            break
        lam = lam + mu * cv
    if np.linalg.norm(cv) > 1e-10:
        raise RuntimeError(f"oracle constraint violation stayed at {np.linalg.norm(cv):.3e}")
    q, theta = x[:n_q], x[n_q:]

    # Reaction from stationarity: [J_theta' ; J_q'] W = [K theta ; 0].
    state = seed.replace(rho=rho, q=q, theta=theta)
    jac = fd_state_jacobian(chain, state)
    j_q = jac[:, n_theta:]
    j_theta = jac[:, :n_theta]
    lhs = np.vstack([j_theta.T, j_q.T])
    rhs = np.concatenate([k_full @ theta, np.zeros(n_q)])
    wrench, *_ = np.linalg.lstsq(lhs, rhs, rcond=None)
    return q, theta, wrench


def fd_state_jacobian(chain, state, step=1e-7) -> np.ndarray:
    """Finite-difference tip Jacobian over (theta, q) at fixed rho."""
    n_theta, n_q = state.theta.size, state.q.size

    def fk(x):
        s = state.replace(theta=x[:n_theta], q=x[n_theta:])
        return pose_from_hom(chain_fk_matrix(chain, s))

    return fd_jacobian(fk, np.concatenate([state.theta, state.q]))


def chain_spring_matrix(chain) -> np.ndarray:
    """Block-diagonal stack of all elastic-joint stiffness matrices."""
    blocks = [e.k_theta for e in chain.elements if isinstance(e, ElasticJoint)]
    n = sum(b.shape[0] for b in blocks)
    k = np.zeros((n, n))
    at = 0
    for b in blocks:
        k[at: at + b.shape[0], at: at + b.shape[0]] = b
        at += b.shape[0]
    return k


def random_pose(rng, pos_scale=0.5, rot_scale=0.5) -> Pose:
    return Pose(rng.uniform(-pos_scale, pos_scale, 3), rng.uniform(-rot_scale, rot_scale, 3))


def random_twist(rng, dp_scale, dphi_scale) -> Twist:
    return Twist(rng.uniform(-dp_scale, dp_scale, 3), rng.uniform(-dphi_scale, dphi_scale, 3))
