"""Compiled per-configuration collision kernels used by the planner and samplers.

Both arms are packed into flat arrays: joint rows for arm A come first, then
arm B, and ``joint_start[arm]`` marks where each arm begins. Spheres carry a
global link-frame index into the stacked per-arm frame arrays.
"""

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def _frames(q, joint_start, n_joints, base_R, base_p, origin_R, origin_p, axes, frame_R, frame_p):
    f = 0
    for arm in range(2):
        R = base_R[arm].copy()
        p = base_p[arm].copy()
        frame_R[f] = R
        frame_p[f] = p
        f += 1
        for k in range(n_joints[arm]):
            j = joint_start[arm] + k
            # p += R @ origin_p
            for r in range(3):
                p[r] += R[r, 0] * origin_p[j, 0] + R[r, 1] * origin_p[j, 1] + R[r, 2] * origin_p[j, 2]
            x, y, z = axes[j, 0], axes[j, 1], axes[j, 2]
            c = np.cos(q[j])
            s = np.sin(q[j])
            C = 1.0 - c
            A = np.empty((3, 3))
            A[0, 0] = c + x * x * C
            A[0, 1] = x * y * C - z * s
            A[0, 2] = x * z * C + y * s
            A[1, 0] = y * x * C + z * s
            A[1, 1] = c + y * y * C
            A[1, 2] = y * z * C - x * s
            A[2, 0] = z * x * C - y * s
            A[2, 1] = z * y * C + x * s
            A[2, 2] = c + z * z * C
            M = np.empty((3, 3))
            for r in range(3):
                for cc in range(3):
                    M[r, cc] = R[r, 0] * origin_R[j, 0, cc] + R[r, 1] * origin_R[j, 1, cc] + R[r, 2] * origin_R[j, 2, cc]
            Rn = np.empty((3, 3))
            for r in range(3):
                for cc in range(3):
                    Rn[r, cc] = M[r, 0] * A[0, cc] + M[r, 1] * A[1, cc] + M[r, 2] * A[2, cc]
            R = Rn
            frame_R[f] = R
            frame_p[f] = p
            f += 1


@njit(cache=True, nogil=True)
def _hit(q, joint_start, n_joints, base_R, base_p, origin_R, origin_p, axes,
         sphere_frame, sphere_local, sphere_r, pair_i, pair_j, pair_r2, obstacles,
         frame_R, frame_p, centers):
    _frames(q, joint_start, n_joints, base_R, base_p, origin_R, origin_p, axes, frame_R, frame_p)
    for s in range(sphere_frame.shape[0]):
        f = sphere_frame[s]
        for r in range(3):
            centers[s, r] = (frame_p[f, r] + frame_R[f, r, 0] * sphere_local[s, 0]
                             + frame_R[f, r, 1] * sphere_local[s, 1] + frame_R[f, r, 2] * sphere_local[s, 2])
    for k in range(pair_i.shape[0]):
        a = pair_i[k]
        b = pair_j[k]
        dx = centers[a, 0] - centers[b, 0]
        dy = centers[a, 1] - centers[b, 1]
        dz = centers[a, 2] - centers[b, 2]
        if dx * dx + dy * dy + dz * dz < pair_r2[k]:
            return True
    for o in range(obstacles.shape[0]):
        for s in range(sphere_frame.shape[0]):
            dx = centers[s, 0] - obstacles[o, 0]
            dy = centers[s, 1] - obstacles[o, 1]
            dz = centers[s, 2] - obstacles[o, 2]
            rr = sphere_r[s] + obstacles[o, 3]
            if dx * dx + dy * dy + dz * dz < rr * rr:
                return True
    return False


@njit(cache=True, nogil=True)
def config_hits(Q, joint_start, n_joints, base_R, base_p, origin_R, origin_p, axes,
                sphere_frame, sphere_local, sphere_r, pair_i, pair_j, pair_r2, obstacles):
    n_frames = n_joints[0] + n_joints[1] + 2
    frame_R = np.empty((n_frames, 3, 3))
    frame_p = np.empty((n_frames, 3))
    centers = np.empty((sphere_frame.shape[0], 3))
    out = np.zeros(Q.shape[0], dtype=np.bool_)
    for b in range(Q.shape[0]):
        out[b] = _hit(Q[b], joint_start, n_joints, base_R, base_p, origin_R, origin_p, axes,
                      sphere_frame, sphere_local, sphere_r, pair_i, pair_j, pair_r2, obstacles,
                      frame_R, frame_p, centers)
    return out


@njit(cache=True, nogil=True)
def segment_hits(QA, QB, step, joint_start, n_joints, base_R, base_p, origin_R, origin_p, axes,
                 sphere_frame, sphere_local, sphere_r, pair_i, pair_j, pair_r2, obstacles):
    """Per row: does the straight line QA->QB, sampled at k/n for k=0..n with
    n = max(ceil(max|QB-QA|/step), 1), touch a collision?"""
    n_frames = n_joints[0] + n_joints[1] + 2
    frame_R = np.empty((n_frames, 3, 3))
    frame_p = np.empty((n_frames, 3))
    centers = np.empty((sphere_frame.shape[0], 3))
    out = np.zeros(QA.shape[0], dtype=np.bool_)
    dim = QA.shape[1]
    q = np.empty(dim)
    for b in range(QA.shape[0]):
        span = 0.0
        for j in range(dim):
            d = abs(QB[b, j] - QA[b, j])
            if d > span:
                span = d
        n = max(int(np.ceil(span / step)), 1)
        for k in range(n + 1):
            t = k / n
            for j in range(dim):
                q[j] = QA[b, j] + t * (QB[b, j] - QA[b, j])
            if _hit(q, joint_start, n_joints, base_R, base_p, origin_R, origin_p, axes,
                    sphere_frame, sphere_local, sphere_r, pair_i, pair_j, pair_r2, obstacles,
                    frame_R, frame_p, centers):
                out[b] = True
                break
    return out
