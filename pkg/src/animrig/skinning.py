"""Skinning weights: Gaussian-ellipsoid mixture, bone-heat diffusion, part labels.

Both weight computations return row-stochastic N x B matrices binding each
vertex to the skeleton's bones. The argmax part decomposition built from the
weights drives the part-level chamfer term.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .geometry import TriMesh, bbox_diagonal
from .skeleton import Skeleton


@dataclass(frozen=True)
class EllipsoidBones:
    """Anisotropic Gaussian bones: centers, orthonormal orientations, axis precisions."""

    centers: np.ndarray      # (B, 3)
    orientations: np.ndarray  # (B, 3, 3), rows are ellipsoid axes
    scales: np.ndarray       # (B, 3) positive inverse-variance entries

    def __post_init__(self):
        centers = np.ascontiguousarray(self.centers, dtype=np.float64)
        orient = np.ascontiguousarray(self.orientations, dtype=np.float64)
        scales = np.ascontiguousarray(self.scales, dtype=np.float64)
        B = len(centers)
        if centers.shape != (B, 3) or orient.shape != (B, 3, 3) or scales.shape != (B, 3):
            raise ValueError("inconsistent ellipsoid array shapes")
        if B < 1:
            raise ValueError("need at least one ellipsoid bone")
        gram = np.einsum("bij,bkj->bik", orient, orient)
        if np.max(np.abs(gram - np.eye(3))) > 1e-8:
            raise ValueError("orientations must be orthonormal")
        if np.any(scales <= 0):
            raise ValueError("scales must be positive")
        for name, arr in (("centers", centers), ("orientations", orient), ("scales", scales)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def num_bones(self):
        return len(self.centers)

    def precision_matrices(self):
        """Per-bone V^T diag(scale) V, shape (B, 3, 3)."""
        return np.einsum("bji,bj,bjk->bik", self.orientations, self.scales, self.orientations)


class SkinWeights:
    """Row-stochastic vertex-to-bone weight matrix."""

    __slots__ = ("weights",)

    def __init__(self, weights):
        weights = np.ascontiguousarray(weights, dtype=np.float64)
        if weights.ndim != 2:
            raise ValueError("weights must be a 2-D (N, B) matrix")
        if np.any(weights < 0):
            raise ValueError("weights must be nonnegative")
        sums = weights.sum(axis=1)
        if len(weights) and np.max(np.abs(sums - 1.0)) > 1e-6:
            worst = int(np.argmax(np.abs(sums - 1.0)))
            raise ValueError(f"row {worst} sums to {sums[worst]:.8f}, expected 1")
        weights.setflags(write=False)
        self.weights = weights

    @property
    def num_vertices(self):
        return self.weights.shape[0]

    @property
    def num_bones(self):
        return self.weights.shape[1]

    def __repr__(self):
        return f"SkinWeights({self.num_vertices} vertices x {self.num_bones} bones)"


@dataclass(frozen=True)
class PartDecomposition:
    """Per-vertex argmax bone labels; ties go to the lowest bone index."""

    labels: np.ndarray        # (N,) bone indices
    part_count: int           # number of parts with at least one vertex
    present_parts: np.ndarray  # sorted bone indices with nonzero membership

    def indices_of(self, part):
        return np.flatnonzero(self.labels == part)


def part_decompose(weights: SkinWeights) -> PartDecomposition:
    """Argmax part labels from skin weights.

    Ties, up to 1e-9 relative solver roundoff, break to the lowest bone index
    so symmetric weights label deterministically.
    """
    w = weights.weights
    row_max = w.max(axis=1, keepdims=True)
    tied = w >= row_max * (1.0 - 1e-9)
    labels = np.argmax(tied, axis=1).astype(np.int64)
    present = np.unique(labels)
    return PartDecomposition(labels=labels, part_count=len(present), present_parts=present)


def gaussian_skinning(mesh, bones: EllipsoidBones) -> SkinWeights:
    """Mixture-of-Gaussian-ellipsoids weights, row-normalized.

    A vertex so far from every bone that all exponentials underflow to zero is
    bound one-hot to the nearest center (with a warning).
    """
    points = mesh.vertices if isinstance(mesh, TriMesh) else np.asarray(mesh, dtype=np.float64)
    diffs = points[:, None, :] - bones.centers[None, :, :]
    Q = bones.precision_matrices()
    mahal = np.einsum("nbi,bij,nbj->nb", diffs, Q, diffs)
    raw = np.exp(-0.5 * mahal)
    sums = raw.sum(axis=1)
    dead = sums == 0.0
    if np.any(dead):
        warnings.warn(
            f"{int(dead.sum())} vertices underflowed all Gaussian bones; "
            "falling back to nearest-center one-hot"
        )
        d2 = np.einsum("nbi,nbi->nb", diffs[dead], diffs[dead])
        raw[dead] = 0.0
        raw[np.flatnonzero(dead), np.argmin(d2, axis=1)] = 1.0
        sums = raw.sum(axis=1)
    return SkinWeights(raw / sums[:, None])


def ellipsoids_from_skeleton(skeleton: Skeleton, length_fraction=0.5, width_fraction=0.25):
    """Derive Gaussian bones from skeleton geometry.

    Centers sit at bone midpoints; the major axis follows the bone with
    standard deviation length_fraction * rest_length, transverse deviations
    width_fraction * rest_length. Zero-length bones become small isotropic
    blobs sized from the skeleton height.
    """
    B = skeleton.num_bones
    if B < 1:
        raise ValueError("skeleton has no bones")
    a = skeleton.joints[skeleton.bone_parent_joints]
    b = skeleton.joints[skeleton.bone_joints]
    centers = 0.5 * (a + b)
    fallback = max(skeleton.height(), 1.0) * 0.05
    orientations = np.zeros((B, 3, 3))
    scales = np.zeros((B, 3))
    for k in range(B):
        length = float(skeleton.rest_lengths[k])
        axis = skeleton.bone_directions[k]
        if length < 1e-12:
            orientations[k] = np.eye(3)
            scales[k] = 1.0 / fallback**2
            continue
        helper = np.array([0.0, 0.0, 1.0]) if abs(axis[2]) < 0.9 else np.array([0.0, 1.0, 0.0])
        n1 = np.cross(axis, helper)
        n1 /= np.linalg.norm(n1)
        n2 = np.cross(axis, n1)
        orientations[k] = np.stack([axis, n1, n2])
        sigma_axis = length_fraction * length
        sigma_side = width_fraction * length
        scales[k] = [1.0 / sigma_axis**2, 1.0 / sigma_side**2, 1.0 / sigma_side**2]
    return EllipsoidBones(centers, orientations, scales)


def cotangent_laplacian(mesh: TriMesh, clamp=1e-8):
    """Sparse cotangent-weighted graph Laplacian L = D - W.

    Per-edge weights are clamped to >= clamp so obtuse triangulations keep the
    operator positive semidefinite.
    """
    V, F = mesh.vertices, mesh.faces
    n = mesh.num_vertices
    if not len(F):
        return sp.csr_matrix((n, n))
    rows, cols, vals = [], [], []
    for corner, (i, j) in ((0, (1, 2)), (1, (2, 0)), (2, (0, 1))):
        pc = V[F[:, corner]]
        pi = V[F[:, i]]
        pj = V[F[:, j]]
        u = pi - pc
        w = pj - pc
        cross = np.cross(u, w)
        area2 = np.linalg.norm(cross, axis=1)
        cot = np.einsum("fi,fi->f", u, w) / np.maximum(area2, 1e-12)
        rows.append(F[:, i])
        cols.append(F[:, j])
        vals.append(0.5 * cot)
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals)
    W = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    W = W + W.T  # symmetrize; coo->csr summed duplicate corners already
    W.data = np.maximum(W.data, clamp)
    deg = np.asarray(W.sum(axis=1)).ravel()
    return sp.diags(deg) - W


def point_segment_distances(points, seg_starts, seg_ends):
    """Distances and closest points from each point to each segment.

    Returns (dist (N, B), closest (N, B, 3)).
    """
    points = np.asarray(points, dtype=np.float64)
    a = np.asarray(seg_starts, dtype=np.float64)
    d = np.asarray(seg_ends, dtype=np.float64) - a
    len2 = np.einsum("bi,bi->b", d, d)
    rel = points[:, None, :] - a[None, :, :]
    t = np.einsum("nbi,bi->nb", rel, d) / np.maximum(len2, 1e-30)
    t = np.clip(t, 0.0, 1.0)
    closest = a[None, :, :] + t[..., None] * d[None, :, :]
    dist = np.linalg.norm(points[:, None, :] - closest, axis=2)
    return dist, closest


def _ray_blocked(origin, target, vertices, faces, exclude_vertex):
    """True when the open segment origin->target crosses a mesh triangle.

    Faces incident to exclude_vertex are skipped; grazing or numerically
    ambiguous hits do not count as blocking.
    """
    direction = target - origin
    length = np.linalg.norm(direction)
    if length < 1e-12 or not len(faces):
        return False
    v0 = vertices[faces[:, 0]]
    e1 = vertices[faces[:, 1]] - v0
    e2 = vertices[faces[:, 2]] - v0
    h = np.cross(direction, e2)
    det = np.einsum("fi,fi->f", e1, h)
    ok = np.abs(det) > 1e-14
    if exclude_vertex is not None:
        ok &= ~np.any(faces == exclude_vertex, axis=1)
    if not ok.any():
        return False
    inv = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
    s = origin - v0
    u = inv * np.einsum("fi,fi->f", s, h)
    q = np.cross(s, e1)
    v = inv * np.einsum("fi,fi->f", np.broadcast_to(direction, v0.shape), q)
    t = inv * np.einsum("fi,fi->f", e2, q)
    eps = 1e-9
    hit = (
        ok
        & (u > eps)
        & (v > eps)
        & (u + v < 1.0 - eps)
        & (t > 1e-7)
        & (t < 1.0 - 1e-7)
    )
    return bool(hit.any())


def nearest_visible_bones(mesh: TriMesh, skeleton: Skeleton, use_visibility=True):
    """Per-vertex anchor assignment to the nearest unoccluded bone segment.

    Returns (anchors (N, B), dist (N,)): anchors holds 1 at each vertex's
    nearest visible bone (split evenly across exact distance ties, so
    symmetric geometry yields symmetric weights) and dist the anchored
    distance. When every candidate is occluded the nearest bone wins anyway
    (open meshes must keep a heat source).
    """
    seg_a = skeleton.joints[skeleton.bone_parent_joints]
    seg_b = skeleton.joints[skeleton.bone_joints]
    dist, closest = point_segment_distances(mesh.vertices, seg_a, seg_b)
    order = np.argsort(dist, axis=1, kind="stable")
    n_verts, n_bones = dist.shape
    anchors = np.zeros((n_verts, n_bones))
    picked = np.zeros(n_verts)
    test_rays = use_visibility and len(mesh.faces) > 0
    for n in range(n_verts):
        visible = order[n, 0]
        if test_rays:
            for b in order[n]:
                if not _ray_blocked(mesh.vertices[n], closest[n, b], mesh.vertices, mesh.faces, n):
                    visible = b
                    break
        d_star = dist[n, visible]
        tol = 1e-9 * max(d_star, 1.0)
        tied = [int(visible)]
        for b in order[n]:
            if b == visible or dist[n, b] > d_star + tol:
                continue
            if not test_rays or not _ray_blocked(
                mesh.vertices[n], closest[n, b], mesh.vertices, mesh.faces, n
            ):
                tied.append(int(b))
        anchors[n, tied] = 1.0 / len(tied)
        picked[n] = d_star
    return anchors, picked


def heat_diffusion_skinning(
    mesh: TriMesh, skeleton: Skeleton, heat_coefficient=1.0, use_visibility=True
) -> SkinWeights:
    """Bone-heat skinning: per bone solve (L + H) w_b = H p_b on the mesh.

    L is the clamped cotangent Laplacian. H is diagonal with
    heat_coefficient / d(i)^2 where d(i) is vertex i's distance to its
    nearest visible bone segment, and p_b is the indicator of that nearest
    bone being b (ties split evenly). Assembled rows are clamped to >= 0 and
    normalized to sum 1.
    """
    if mesh.num_vertices < 4:
        raise ValueError("heat diffusion needs at least 4 vertices")
    if skeleton.num_bones < 1:
        raise ValueError("skeleton has no bones")
    B = skeleton.num_bones
    n = mesh.num_vertices
    if B == 1:
        return SkinWeights(np.ones((n, 1)))

    anchors, dist = nearest_visible_bones(mesh, skeleton, use_visibility)
    floor = max(1e-8 * bbox_diagonal(mesh), 1e-12)
    heat = heat_coefficient / np.maximum(dist, floor) ** 2

    A = (cotangent_laplacian(mesh) + sp.diags(heat)).tocsc()
    try:
        solver = spla.factorized(A)
    except Exception:
        solver = None
        warnings.warn("heat system is singular; using one-hot nearest-bone weights")
    cols = np.zeros((n, B))
    for b in range(B):
        rhs = heat * anchors[:, b]
        if solver is None:
            cols[:, b] = anchors[:, b]
            continue
        w = solver(rhs)
        if not np.all(np.isfinite(w)):
            warnings.warn(f"heat solve for bone {b} failed; using one-hot fallback")
            w = anchors[:, b]
        cols[:, b] = w
    cols = np.maximum(cols, 0.0)
    sums = cols.sum(axis=1)
    dead = sums <= 0.0
    if np.any(dead):
        warnings.warn(
            f"{int(dead.sum())} vertices received no heat; binding them to the nearest bone"
        )
        dead_idx = np.flatnonzero(dead)
        cols[dead_idx, np.argmax(anchors[dead_idx], axis=1)] = 1.0
        sums = cols.sum(axis=1)
    return SkinWeights(cols / sums[:, None])


# --- JSON wire format --------------------------------------------------------


def weights_to_dict(weights: SkinWeights):
    return {
        "num_vertices": weights.num_vertices,
        "num_bones": weights.num_bones,
        "rows": [[float(w) for w in row] for row in weights.weights],
    }


def weights_from_dict(data) -> SkinWeights:
    rows = np.array(data["rows"], dtype=np.float64)
    if rows.size == 0:
        rows = rows.reshape(0, int(data["num_bones"]))
    if rows.shape != (int(data["num_vertices"]), int(data["num_bones"])):
        raise ValueError("weights rows do not match the declared dimensions")
    return SkinWeights(rows)


def save_weights(weights: SkinWeights, path):
    with open(path, "w") as fh:
        json.dump(weights_to_dict(weights), fh, sort_keys=True)


def load_weights(path) -> SkinWeights:
    with open(path) as fh:
        return weights_from_dict(json.load(fh))
