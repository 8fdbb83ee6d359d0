"""Loader for the declarative robot/scene description (YAML).

Layout::

    format: timeik-robot
    version: 1
    robot_a:                      # reference robot
      name: left
      base: {position: [x, y, z], quaternion: [w, x, y, z]}
      tcp:  {position: [...], quaternion: [...]}
      joints:
        - {axis: [0, 0, 1], origin_position: [...], origin_quaternion: [...],
           q_min: -3.1, q_max: 3.1, vel_max: 2.0, acc_max: 3.0}
      links:                      # links[0] is the base link
        - spheres: [[cx, cy, cz, r], ...]
      collision_exclusions: [[0, 2]]   # optional, extra never-tested link pairs
    robot_b: {...}                # tool robot
    scene:
      obstacles: [{center: [x, y, z], radius: r}]

Unknown keys anywhere are rejected.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .errors import ModelFileError
from .kinematics import ChainModel, DualArmSystem, Joint, Pose

FORMAT = "timeik-robot"
VERSION = 1

_TOP_KEYS = {"format", "version", "robot_a", "robot_b", "scene"}
_ROBOT_KEYS = {"name", "base", "tcp", "joints", "links", "collision_exclusions"}
_JOINT_KEYS = {"name", "type", "axis", "origin_position", "origin_quaternion",
               "q_min", "q_max", "vel_max", "acc_max"}
_POSE_KEYS = {"position", "quaternion"}
_LINK_KEYS = {"spheres"}
_SCENE_KEYS = {"obstacles"}
_OBSTACLE_KEYS = {"center", "radius"}


@dataclass(frozen=True, eq=False)
class Scene:
    system: DualArmSystem
    obstacles: np.ndarray  # (k, 4): center xyz, radius


def _keys(d, allowed, where, required=()):
    if not isinstance(d, dict):
        raise ModelFileError(f"{where}: expected a mapping")
    unknown = set(d) - allowed
    if unknown:
        raise ModelFileError(f"{where}: unknown key(s) {sorted(unknown)}")
    missing = [k for k in required if k not in d]
    if missing:
        raise ModelFileError(f"{where}: missing key(s) {missing}")


def _vec(v, n, where):
    try:
        a = np.array(v, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ModelFileError(f"{where}: not numeric") from exc
    if a.shape != (n,) or not np.all(np.isfinite(a)):
        raise ModelFileError(f"{where}: expected {n} finite numbers")
    return a


def _pose(d, where):
    if d is None:
        return Pose()
    _keys(d, _POSE_KEYS, where)
    return Pose(_vec(d.get("position", [0, 0, 0]), 3, f"{where}.position"),
                _vec(d.get("quaternion", [1, 0, 0, 0]), 4, f"{where}.quaternion"))


def _joint(d, where):
    _keys(d, _JOINT_KEYS, where, ("axis", "q_min", "q_max", "vel_max", "acc_max"))
    jtype = d.get("type", "revolute")
    if jtype != "revolute":
        raise ModelFileError(f"{where}: unsupported joint type {jtype!r} (revolute only)")
    try:
        return Joint(
            axis=_vec(d["axis"], 3, f"{where}.axis"),
            origin=Pose(_vec(d.get("origin_position", [0, 0, 0]), 3, f"{where}.origin_position"),
                        _vec(d.get("origin_quaternion", [1, 0, 0, 0]), 4, f"{where}.origin_quaternion")),
            q_min=float(d["q_min"]), q_max=float(d["q_max"]),
            vel_max=float(d["vel_max"]), acc_max=float(d["acc_max"]),
            name=str(d.get("name", "")),
        )
    except ValueError as exc:
        raise ModelFileError(f"{where}: {exc}") from exc


def _robot(d, where):
    _keys(d, _ROBOT_KEYS, where, ("joints",))
    joints = [_joint(j, f"{where}.joints[{i}]") for i, j in enumerate(d["joints"] or [])]
    links = d.get("links") or []
    spheres = []
    for i, link in enumerate(links):
        _keys(link, _LINK_KEYS, f"{where}.links[{i}]")
        s = np.array(link.get("spheres") or [], dtype=float).reshape(-1, 4)
        spheres.append(s)
    try:
        chain = ChainModel(joints=joints, tcp=_pose(d.get("tcp"), f"{where}.tcp"),
                           link_spheres=spheres,
                           collision_exclusions=frozenset(tuple(p) for p in d.get("collision_exclusions") or []),
                           name=str(d.get("name", "")))
    except ValueError as exc:
        raise ModelFileError(f"{where}: {exc}") from exc
    return chain, _pose(d.get("base"), f"{where}.base")


def parse_scene(data: dict, where: str = "<model>") -> Scene:
    _keys(data, _TOP_KEYS, where, ("robot_a", "robot_b"))
    if data.get("format", FORMAT) != FORMAT:
        raise ModelFileError(f"{where}: unexpected format {data.get('format')!r}")
    if int(data.get("version", VERSION)) != VERSION:
        raise ModelFileError(f"{where}: unsupported version {data.get('version')}")
    a, base_a = _robot(data["robot_a"], "robot_a")
    b, base_b = _robot(data["robot_b"], "robot_b")
    scene = data.get("scene") or {}
    _keys(scene, _SCENE_KEYS, "scene")
    obstacles = []
    for i, ob in enumerate(scene.get("obstacles") or []):
        _keys(ob, _OBSTACLE_KEYS, f"scene.obstacles[{i}]", ("center", "radius"))
        r = float(ob["radius"])
        if r <= 0:
            raise ModelFileError(f"scene.obstacles[{i}]: radius must be > 0")
        obstacles.append([*_vec(ob["center"], 3, f"scene.obstacles[{i}].center"), r])
    return Scene(DualArmSystem(a, b, base_a, base_b), np.array(obstacles, dtype=float).reshape(-1, 4))


def load_scene(path) -> Scene:
    """Load a robot/scene file. ``path`` may also name a shipped scene (``desk``)."""
    p = Path(path)
    if not p.exists() and p.suffix == "":
        p = shipped_scene_path(str(path))
    try:
        data = yaml.safe_load(p.read_text())
    except yaml.YAMLError as exc:
        raise ModelFileError(f"{p}: {exc}") from exc
    return parse_scene(data, str(p))


def shipped_scene_path(name: str) -> Path:
    ref = resources.files("timeik") / "scenes" / f"{name}.yaml"
    if not ref.is_file():
        raise ModelFileError(f"no such scene file or shipped scene: {name!r}")
    return Path(str(ref))


def _pose_dict(pose: Pose):
    return {"position": pose.position.tolist(), "quaternion": pose.orientation.tolist()}


def _robot_dict(chain: ChainModel, base: Pose):
    d = {
        "name": chain.name,
        "base": _pose_dict(base),
        "tcp": _pose_dict(chain.tcp),
        "joints": [{
            "name": j.name, "axis": j.axis.tolist(),
            "origin_position": j.origin.position.tolist(),
            "origin_quaternion": j.origin.orientation.tolist(),
            "q_min": j.q_min, "q_max": j.q_max, "vel_max": j.vel_max, "acc_max": j.acc_max,
        } for j in chain.joints],
        "links": [{"spheres": s.tolist()} for s in chain.link_spheres],
    }
    if chain.collision_exclusions:
        d["collision_exclusions"] = [list(p) for p in sorted(chain.collision_exclusions)]
    return d


def scene_to_dict(scene: Scene) -> dict:
    sys = scene.system
    return {
        "format": FORMAT, "version": VERSION,
        "robot_a": _robot_dict(sys.robot_a, sys.base_a),
        "robot_b": _robot_dict(sys.robot_b, sys.base_b),
        "scene": {"obstacles": [{"center": o[:3].tolist(), "radius": float(o[3])}
                                for o in scene.obstacles]},
    }


def dump_scene(scene: Scene, path) -> None:
    Path(path).write_text(yaml.safe_dump(scene_to_dict(scene), sort_keys=False))
