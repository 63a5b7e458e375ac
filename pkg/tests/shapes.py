"""Deterministic mesh and rig builders shared by the test suite."""

import numpy as np

from animrig.geometry import TriMesh
from animrig.skeleton import Skeleton


def make_quad():
    """Planar 4-vertex, 2-triangle quad."""
    vertices = np.array([[0.0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0]])
    faces = np.array([[0, 1, 2], [0, 2, 3]])
    return TriMesh(vertices, faces)


def make_cube():
    """Axis-aligned unit cube, 8 vertices / 12 triangles."""
    vertices = np.array(
        [
            [0.0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0],
            [0, 0, 1], [1, 0, 1], [1, 1, 1], [0, 1, 1],
        ]
    )
    faces = np.array(
        [
            [0, 2, 1], [0, 3, 2],  # z=0
            [4, 5, 6], [4, 6, 7],  # z=1
            [0, 1, 5], [0, 5, 4],  # y=0
            [3, 6, 2], [3, 7, 6],  # y=1
            [0, 7, 3], [0, 4, 7],  # x=0
            [1, 2, 6], [1, 6, 5],  # x=1
        ]
    )
    return TriMesh(vertices, faces)


def make_grid(nx=6, ny=6, spacing=1.0):
    """Flat triangulated grid in the z=0 plane."""
    xs, ys = np.meshgrid(np.arange(nx) * spacing, np.arange(ny) * spacing, indexing="ij")
    vertices = np.stack([xs.ravel(), ys.ravel(), np.zeros(nx * ny)], axis=1)
    faces = []
    for i in range(nx - 1):
        for j in range(ny - 1):
            a = i * ny + j
            b = (i + 1) * ny + j
            faces.append([a, b, b + 1])
            faces.append([a, b + 1, a + 1])
    return TriMesh(vertices, np.array(faces))


def make_capsule(
    length=3.0, radius=0.25, radius_z=None, rings=24, sides=16, cap_rings=4, taper=0.0
):
    """Closed capsule along +x: cylinder body with spherical caps.

    radius_z lets the cross-section be elliptical (breaks the axial-twist
    symmetry) and taper modulates the radius along the length (breaks axial
    sliding); both matter for pose-recovery tests, where a perfectly uniform
    circular cylinder leaves twist and slide invisible to point-set losses.
    """
    if radius_z is None:
        radius_z = radius
    vertices = []
    ring_starts = []

    def body_scale(x):
        # smooth lumps, incommensurate with the bone spacing
        return 1.0 + taper * np.sin(2.4 * np.pi * x / length + 0.7)

    def add_ring(x, ry, rz):
        start = len(vertices)
        for k in range(sides):
            ang = 2.0 * np.pi * k / sides
            vertices.append([x, ry * np.cos(ang), rz * np.sin(ang)])
        ring_starts.append(start)

    # left cap (hemisphere around x=0), pole first; pole offset uses the smaller radius
    vertices.append([-min(radius, radius_z), 0.0, 0.0])
    left_pole = 0
    for r in range(1, cap_rings + 1):
        phi = 0.5 * np.pi * r / cap_rings
        add_ring(-min(radius, radius_z) * np.cos(phi), radius * np.sin(phi), radius_z * np.sin(phi))
    # body rings
    for r in range(1, rings):
        x = length * r / rings
        s = body_scale(x)
        add_ring(x, radius * s, radius_z * s)
    # right cap
    for r in range(cap_rings, 0, -1):
        phi = 0.5 * np.pi * r / cap_rings
        add_ring(
            length + min(radius, radius_z) * np.cos(phi),
            radius * np.sin(phi),
            radius_z * np.sin(phi),
        )
    right_pole = len(vertices)
    vertices.append([length + min(radius, radius_z), 0.0, 0.0])

    faces = []
    first = ring_starts[0]
    for k in range(sides):
        faces.append([left_pole, first + k, first + (k + 1) % sides])
    for a, b in zip(ring_starts[:-1], ring_starts[1:]):
        for k in range(sides):
            k2 = (k + 1) % sides
            faces.append([a + k, b + k, b + k2])
            faces.append([a + k, b + k2, a + k2])
    last = ring_starts[-1]
    for k in range(sides):
        faces.append([last + k, right_pole, last + (k + 1) % sides])
    return TriMesh(np.array(vertices), np.array(faces))


def make_icosphere(subdivisions=2, radius=1.0, center=(0.0, 0.0, 0.0)):
    """Icosphere by midpoint subdivision of an icosahedron."""
    t = (1.0 + np.sqrt(5.0)) / 2.0
    verts = np.array(
        [
            [-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
            [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
            [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1],
        ],
        dtype=np.float64,
    )
    verts /= np.linalg.norm(verts, axis=1)[:, None]
    faces = [
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ]
    verts = [v for v in verts]
    for _ in range(subdivisions):
        cache = {}

        def midpoint(i, j):
            key = (min(i, j), max(i, j))
            if key not in cache:
                m = verts[i] + verts[j]
                m /= np.linalg.norm(m)
                cache[key] = len(verts)
                verts.append(m)
            return cache[key]

        new_faces = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_faces += [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
        faces = new_faces
    vertices = np.array(verts) * radius + np.asarray(center, dtype=np.float64)
    return TriMesh(vertices, np.array(faces))


def chain_skeleton(num_joints, length=1.0, axis=(1.0, 0.0, 0.0), names=False):
    """Straight chain of num_joints along an axis, root at the origin."""
    axis = np.asarray(axis, dtype=np.float64)
    joints = np.array([axis * length * i for i in range(num_joints)])
    parents = np.arange(num_joints) - 1
    labels = [f"joint{i}" for i in range(num_joints)] if names else None
    return Skeleton(joints, parents, labels)


def limb_rig(num_bones=3, segment=1.0, radius=0.25, radius_z=0.16, rings=24, sides=16,
             taper=0.2):
    """Tapered elliptical capsule limb along +x plus its straight chain skeleton.

    The elliptical cross-section keeps rotations about the limb axis visible to
    point-set losses and the taper keeps axial sliding visible; a uniform
    circular cylinder would leave both directions unobservable.
    """
    mesh = make_capsule(
        length=num_bones * segment, radius=radius, radius_z=radius_z,
        rings=rings, sides=sides, taper=taper,
    )
    skel = chain_skeleton(num_bones + 1, length=segment)
    return mesh, skel
