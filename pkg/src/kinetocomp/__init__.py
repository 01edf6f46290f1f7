"""Kinetostatic modeling and compliance-error compensation for parallel manipulators."""

from .se3 import (
    DEFAULT_CHAR_LENGTH,
    Pose,
    Twist,
    Wrench,
    apply_twist,
    compose,
    inverse,
    pose_delta,
    transport_wrench,
    twist_norm,
)
from .chain import (
    ActuatedJoint,
    ChainEquilibrium,
    ChainModel,
    ChainState,
    ElasticJoint,
    PassiveJoint,
    RigidTransform,
    actuator_forces,
    cartesian_stiffness,
    cartesian_stiffness_linear,
    equilibrium_given_tip,
    equilibrium_given_wrench,
    forward_geometry,
    inverse_kinematics,
    jacobians,
)
from . import errors

__version__ = "0.1.0"
