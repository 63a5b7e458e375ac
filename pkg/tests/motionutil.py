"""Clip generation and deformation helpers shared by fitting-related tests."""

import numpy as np

from animrig.deform import blend_skin
from animrig.skeleton import MotionClip, MotionFrame, RigidTransform, forward_kinematics
from animrig import rotations as rot


def smooth_clip(rng, num_bones, num_frames, max_deg=30.0, scale_amp=0.1,
                root_translation=0.5, root_rotation=0.25):
    """Smooth sinusoidal ground-truth clip starting at the rest pose.

    Per-component angle amplitudes are drawn up to max_deg and swept through a
    full cycle, so frame angles cover [-max_deg, max_deg] while consecutive
    frames stay close (mesh-sequence-like motion).
    """
    amp = np.deg2rad(rng.uniform(0.3, 1.0, size=(num_bones, 3)) * max_deg)
    sign = rng.choice([-1.0, 1.0], size=(num_bones, 3))
    cycles = rng.uniform(0.75, 1.25)
    sc_amp = rng.uniform(0.0, scale_amp, size=num_bones)
    tr_amp = rng.uniform(-root_translation, root_translation, size=3)
    rr_amp = rng.uniform(-root_rotation, root_rotation, size=3)
    frames = []
    for t in range(num_frames):
        u = t / max(num_frames - 1, 1)
        s = np.sin(np.pi * cycles * u) ** 2
        angles = sign * amp * s
        scales = np.clip(1.0 + sc_amp * np.sin(2 * np.pi * u), 1 - scale_amp, 1 + scale_amp)
        root = RigidTransform(rot.quat_from_rotation_vector(rr_amp * s), tr_amp * s)
        frames.append(MotionFrame(root, angles, scales))
    return MotionClip(tuple(frames))


def deform_clip(mesh, skeleton, weights, clip):
    """Blend-skin every clip frame through the public FK path."""
    out = []
    for i, frame in enumerate(clip.frames):
        transforms = forward_kinematics(skeleton, frame)
        out.append(blend_skin(mesh, weights, frame.root, transforms, frame_index=i))
    return out


def clip_rmse(frames_a, frames_b):
    """Pooled per-vertex RMSE between two deformed sequences."""
    sq = [
        ((a.vertices - b.vertices) ** 2).sum(axis=1)
        for a, b in zip(frames_a, frames_b)
    ]
    return float(np.sqrt(np.concatenate(sq).mean()))


def max_interframe_jump(frames):
    """Largest single-vertex displacement between consecutive frames."""
    worst = 0.0
    for prev, curr in zip(frames[:-1], frames[1:]):
        worst = max(worst, float(np.linalg.norm(curr.vertices - prev.vertices, axis=1).max()))
    return worst
