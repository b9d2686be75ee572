"""Registered environments; ids are ``<Name>-sparse`` and ``<Name>-dense``."""

from functools import partial

from goalforge.core import REWARD_MODES, register
from goalforge.envs.grasp import GraspPlace
from goalforge.envs.planar import PlanarPush, Slide
from goalforge.envs.pose import PoseEnv
from goalforge.envs.reach import PointReach

ENV_FACTORIES = {
    "PointReach": PointReach,
    "PlanarPush": PlanarPush,
    "Slide": Slide,
    "GraspPlace": GraspPlace,
    "PoseRotateZ": partial(PoseEnv, "rotate_z"),
    "PoseRotateParallel": partial(PoseEnv, "rotate_parallel"),
    "PoseRotateXYZ": partial(PoseEnv, "rotate_xyz"),
    "PoseFull": partial(PoseEnv, "full"),
    "PenRotate": partial(PoseEnv, "pen_rotate"),
    "PenFull": partial(PoseEnv, "pen_full"),
}

BASE_IDS = tuple(ENV_FACTORIES)

for _name, _factory in ENV_FACTORIES.items():
    for _mode in REWARD_MODES:
        register(f"{_name}-{_mode}", partial(_factory, reward_mode=_mode))

__all__ = ["BASE_IDS", "ENV_FACTORIES", "GraspPlace", "PlanarPush", "PointReach", "PoseEnv", "Slide"]
