"""Momentum-aware jump planning and control for bipeds with lightweight legs.

The package is organized bottom-up:

- ``model`` / ``kinematics`` / ``dynamics``: rigid-body tree, forward kinematics,
  centroidal momentum matrix and composite-rigid-body inertia about the CoM.
- ``calibration``: quadratic leg-inertia fit used by the reduced flight model.
- ``optim``: dense/sparse QP solver and an SQP nonlinear solver built on it.
- ``schedule`` / ``kmp``: contact schedules and the offline kinodynamic planner.
- ``mpc``: receding-horizon centroidal controller with the leg-inertia model,
  plus the constant-inertia baseline.
- ``ik`` / ``landing`` / ``wbc``: momentum-consistent inverse kinematics, the
  flight-phase foot placement heuristic, and the torque-level QP controller.
- ``sim`` / ``episode``: compliant-contact simulator and the closed-loop harness.
- ``config`` / ``cli``: scenario files and the command-line front end.
"""

__version__ = "0.1.0"

from .model import JointState, RobotModel, load_robot_model
from .dynamics import cmm, ccrbi, average_angular_velocity, dynamics_terms
from .schedule import ContactSchedule, jump_schedule, stance_schedule
from .kmp import KmpParams, PlanTrajectory, plan, validate_plan

__all__ = [
    "JointState",
    "RobotModel",
    "load_robot_model",
    "cmm",
    "ccrbi",
    "average_angular_velocity",
    "dynamics_terms",
    "ContactSchedule",
    "jump_schedule",
    "stance_schedule",
    "KmpParams",
    "PlanTrajectory",
    "plan",
    "validate_plan",
    "__version__",
]
