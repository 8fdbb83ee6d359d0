"""Execution-time-aware inverse kinematics for dual-arm manipulators."""

from .collision import CollisionWorld, HaltonSampler, config_in_collision, motion_in_collision
from .errors import (ContractViolation, DivergenceError, ModelFileError, NoFreeSampleError,
                     NoSolutionError, PlanningError)
from .kinematics import ChainModel, DualArmSystem, Joint, Pose, forward_kinematics, relative_pose
from .robot_file import Scene, load_scene

__version__ = "0.1.0"
