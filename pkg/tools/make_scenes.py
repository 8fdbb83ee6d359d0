"""Regenerate the shipped scene files under src/timeik/scenes/."""

import math
from pathlib import Path

import numpy as np
import yaml

OUT = Path(__file__).resolve().parents[1] / "src" / "timeik" / "scenes"


def planar_arm(name, base_xy, yaw, lengths, radii, q_lim, vel, acc):
    joints, links = [], [{"spheres": [[0.0, 0.0, 0.0, 0.08]]}]
    prev = 0.0
    for i, (L, r) in enumerate(zip(lengths, radii)):
        joints.append({
            "name": f"{name}_j{i + 1}", "axis": [0.0, 0.0, 1.0],
            "origin_position": [prev, 0.0, 0.0], "origin_quaternion": [1.0, 0.0, 0.0, 0.0],
            "q_min": -q_lim[i], "q_max": q_lim[i], "vel_max": vel[i], "acc_max": acc[i],
        })
        n = max(int(math.ceil(L / (1.5 * r))), 1)
        xs = np.linspace(0.0, L, n + 1)[1:] if i < len(lengths) - 1 else np.linspace(0.0, L, n + 1)
        links.append({"spheres": [[round(float(x), 4), 0.0, 0.0, r] for x in xs]})
        prev = L
    return {
        "name": name,
        "base": {"position": [base_xy[0], base_xy[1], 0.0],
                 "quaternion": [math.cos(yaw / 2), 0.0, 0.0, math.sin(yaw / 2)]},
        "tcp": {"position": [prev, 0.0, 0.0], "quaternion": [1.0, 0.0, 0.0, 0.0]},
        "joints": joints,
        "links": links,
    }


def desk(obstacles, q_lim=(2.6, 2.3, 2.3), sep=1.2):
    lengths = (0.45, 0.35, 0.2)
    radii = (0.05, 0.045, 0.04)
    return {
        "format": "timeik-robot", "version": 1,
        "robot_a": planar_arm("ref", (0.0, 0.0), 0.0, lengths, radii, q_lim,
                              (2.0, 2.5, 3.0), (3.0, 4.0, 5.0)),
        "robot_b": planar_arm("tool", (sep, 0.0), math.pi, lengths, radii, q_lim,
                              (1.5, 2.0, 3.0), (2.5, 3.0, 4.0)),
        "scene": {"obstacles": [{"center": c, "radius": r} for c, r in obstacles]},
    }


def dh_chain(name, base, dh, q_lim, vel, acc, radius):
    """Chain from standard DH rows (d, a, alpha)."""
    joints, links = [], [{"spheres": [[0.0, 0.0, 0.0, radius * 1.4]]}]
    prev = (0.0, 0.0, 0.0)
    for i, (d, a, alpha) in enumerate(dh):
        pd, pa, palpha = prev
        joints.append({
            "name": f"{name}_j{i + 1}", "axis": [0.0, 0.0, 1.0],
            "origin_position": [pa, 0.0, pd],
            "origin_quaternion": [math.cos(palpha / 2), math.sin(palpha / 2), 0.0, 0.0],
            "q_min": -q_lim[i], "q_max": q_lim[i], "vel_max": vel[i], "acc_max": acc[i],
        })
        # spheres along the segment from this joint frame to the next origin
        pts = [[0.0, 0.0, 0.0]]
        seg = np.array([a, 0.0, 0.0]) + np.array([0.0, 0.0, d])
        n = max(int(math.ceil(np.linalg.norm(seg) / (1.5 * radius))), 1)
        for k in range(1, n + 1):
            p = seg * k / n
            pts.append([round(float(x), 4) for x in p])
        links.append({"spheres": [[*p, radius] for p in pts]})
        prev = (d, a, alpha)
    d, a, alpha = prev
    tcp = {"position": [a, 0.0, d], "quaternion": [math.cos(alpha / 2), math.sin(alpha / 2), 0.0, 0.0]}
    excl = [[i, i + 2] for i in range(len(dh) - 1)]
    return {"name": name, "base": base, "tcp": tcp, "joints": joints, "links": links,
            "collision_exclusions": excl}


def ur5_iiwa():
    # standard DH: T_i = Rz(q) Tz(d) Tx(a) Rx(alpha); rows are applied after each joint
    iiwa_dh = [(0.36, 0.0, -math.pi / 2), (0.0, 0.0, math.pi / 2), (0.42, 0.0, math.pi / 2),
               (0.0, 0.0, -math.pi / 2), (0.40, 0.0, -math.pi / 2), (0.0, 0.0, math.pi / 2),
               (0.126, 0.0, 0.0)]
    ur5_dh = [(0.089159, 0.0, math.pi / 2), (0.0, -0.425, 0.0), (0.0, -0.39225, 0.0),
              (0.10915, 0.0, math.pi / 2), (0.09465, 0.0, -math.pi / 2), (0.0823, 0.0, 0.0)]
    iiwa = dh_chain("iiwa", {"position": [0.0, 0.0, 0.0], "quaternion": [1.0, 0.0, 0.0, 0.0]},
                    iiwa_dh, (2.96, 2.09, 2.96, 2.09, 2.96, 2.09, 3.05), (10.0,) * 7,
                    (5.0, 5.0, 3.0, 2.0, 2.0, 2.0, 2.0), 0.07)
    ur5 = dh_chain("ur5", {"position": [1.0, 0.0, 0.0], "quaternion": [0.0, 0.0, 0.0, 1.0]},
                   ur5_dh, (2 * math.pi,) * 6, (3.15, 3.15, 3.15, 3.2, 3.2, 3.2),
                   (5.0, 5.0, 3.0, 2.0, 2.0, 2.0), 0.06)
    return {"format": "timeik-robot", "version": 1, "robot_a": iiwa, "robot_b": ur5,
            "scene": {"obstacles": [{"center": [0.5, 0.0, -0.3], "radius": 0.25}]}}


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    files = {
        "desk": desk([([0.6, 0.8, 0.0], 0.12)]),
        "desk_open": desk([], q_lim=(2.6, 1.4, 1.4), sep=10.0),
        "ur5_iiwa": ur5_iiwa(),
    }
    for name, data in files.items():
        (OUT / f"{name}.yaml").write_text(yaml.safe_dump(data, sort_keys=False, default_flow_style=None))


if __name__ == "__main__":
    main()
