"""Modelling, allocation, design and control of a three-link thrust-vectoring multirotor."""

from .robot_model import RobotModel, default_model, forward_kinematics
from .allocation import build_allocation, distribute_flight, components_to_command
from .control import Controller, ControllerConfig, LocomotionMode
from .sim import SimConfig, SimState, Simulator

__version__ = "0.1.0"

__all__ = [
    "RobotModel",
    "default_model",
    "forward_kinematics",
    "build_allocation",
    "distribute_flight",
    "components_to_command",
    "Controller",
    "ControllerConfig",
    "LocomotionMode",
    "SimConfig",
    "SimState",
    "Simulator",
]
