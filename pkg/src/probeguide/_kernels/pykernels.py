"""Pure-numpy implementations of the numeric hot paths.

These are the reference semantics for the compiled extension: linear blend
skinning over a batch of parameter samples, brute-force and BVH-accelerated
ray/triangle casting. The triangle intersection predicate is written with an
explicit, fixed operation order so the compiled and pure paths agree bit for
bit, and every tie between hits is broken by the lexicographic (t, face)
minimum so results never depend on traversal order.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

DET_EPS = 1e-18


def lbs_blend(weights: np.ndarray, rel_rot: np.ndarray, rel_t: np.ndarray,
              verts: np.ndarray) -> np.ndarray:
    """Blend per-joint affine transforms onto rest vertices.

    weights: (V, J) blend weights (rows sum to 1)
    rel_rot: (S, J, 3, 3) joint rotations relative to rest, per sample
    rel_t:   (S, J, 3) joint translations relative to rest, per sample
    verts:   (S, V, 3) rest-pose vertices per sample (shape already applied)
    returns  (S, V, 3) skinned vertices
    """
    weights = np.asarray(weights, dtype=np.float64)
    rel_rot = np.asarray(rel_rot, dtype=np.float64)
    rel_t = np.asarray(rel_t, dtype=np.float64)
    verts = np.asarray(verts, dtype=np.float64)
    out = np.einsum("vj,sjab,svb->sva", weights, rel_rot, verts, optimize=True)
    out += np.einsum("vj,sja->sva", weights, rel_t, optimize=True)
    return out


def _tri_corners(verts: np.ndarray, faces: np.ndarray, idx: np.ndarray):
    f = faces[idx]
    return verts[f[:, 0]], verts[f[:, 1]], verts[f[:, 2]]


def _moller_trumbore(o: np.ndarray, d: np.ndarray, v0: np.ndarray, v1: np.ndarray,
                     v2: np.ndarray):
    """Vectorized ray/triangle test. Returns (t, valid).

    Inclusive edge/vertex boundaries; near-zero determinant rejected; only
    strictly positive ray parameters count as hits. The arithmetic is spelled
    out component-wise in the exact order the compiled kernel uses.
    """
    e1x = v1[:, 0] - v0[:, 0]
    e1y = v1[:, 1] - v0[:, 1]
    e1z = v1[:, 2] - v0[:, 2]
    e2x = v2[:, 0] - v0[:, 0]
    e2y = v2[:, 1] - v0[:, 1]
    e2z = v2[:, 2] - v0[:, 2]
    dx, dy, dz = d[:, 0], d[:, 1], d[:, 2]
    px = dy * e2z - dz * e2y
    py = dz * e2x - dx * e2z
    pz = dx * e2y - dy * e2x
    det = e1x * px + e1y * py + e1z * pz
    sx = o[:, 0] - v0[:, 0]
    sy = o[:, 1] - v0[:, 1]
    sz = o[:, 2] - v0[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / det
        u = (sx * px + sy * py + sz * pz) * inv
        qx = sy * e1z - sz * e1y
        qy = sz * e1x - sx * e1z
        qz = sx * e1y - sy * e1x
        v = (dx * qx + dy * qy + dz * qz) * inv
        t = (e2x * qx + e2y * qy + e2z * qz) * inv
        valid = (np.abs(det) >= DET_EPS) & (u >= 0.0) & (u <= 1.0) & (v >= 0.0) \
            & (u + v <= 1.0) & (t > 0.0)
    return t, valid


def ray_cast_brute(verts: np.ndarray, faces: np.ndarray, origins: np.ndarray,
                   dirs: np.ndarray, chunk: int = 128):
    """Test every ray against every triangle.

    Returns (t, face, point): t is +inf and face is -1 where a ray misses;
    among equal-t hits the lowest face index wins.
    """
    verts = np.asarray(verts, dtype=np.float64)
    faces = np.asarray(faces, dtype=np.int64)
    origins = np.atleast_2d(np.asarray(origins, dtype=np.float64))
    dirs = np.atleast_2d(np.asarray(dirs, dtype=np.float64))
    n = origins.shape[0]
    nf = faces.shape[0]
    v0, v1, v2 = verts[faces[:, 0]], verts[faces[:, 1]], verts[faces[:, 2]]
    best_t = np.full(n, np.inf)
    best_face = np.full(n, -1, dtype=np.int64)
    for lo in range(0, n, chunk):
        hi = min(lo + chunk, n)
        m = hi - lo
        o = np.repeat(origins[lo:hi], nf, axis=0)
        d = np.repeat(dirs[lo:hi], nf, axis=0)
        t, valid = _moller_trumbore(
            o, d,
            np.tile(v0, (m, 1)), np.tile(v1, (m, 1)), np.tile(v2, (m, 1)),
        )
        t = np.where(valid, t, np.inf).reshape(m, nf)
        # argmin takes the first minimum, so ties resolve to the lowest face
        idx = np.argmin(t, axis=1)
        tmin = t[np.arange(m), idx]
        hit = np.isfinite(tmin)
        best_t[lo:hi] = np.where(hit, tmin, np.inf)
        best_face[lo:hi] = np.where(hit, idx, -1)
    point = np.full_like(origins, np.nan)
    hit = best_face >= 0
    point[hit] = origins[hit] + best_t[hit, None] * dirs[hit]
    return best_t, best_face, point


class Bvh(NamedTuple):
    """Flat bounding volume hierarchy over triangles.

    A node is a leaf iff left == -1; leaves reference prim[start:start+count].
    """

    bmin: np.ndarray
    bmax: np.ndarray
    left: np.ndarray
    right: np.ndarray
    start: np.ndarray
    count: np.ndarray
    prim: np.ndarray


def bvh_build(verts: np.ndarray, faces: np.ndarray, leaf_size: int = 8) -> Bvh:
    """Median-split BVH on triangle centroids, widest centroid axis first.

    The split ordering is a total order on (centroid coordinate, face index),
    so the tree is a pure function of the mesh.
    """
    verts = np.asarray(verts, dtype=np.float64)
    faces = np.asarray(faces, dtype=np.int64)
    tri = verts[faces]
    tri_min = tri.min(axis=1)
    tri_max = tri.max(axis=1)
    cent = tri.mean(axis=1)
    prim = np.arange(faces.shape[0], dtype=np.int64)

    bmin, bmax, left, right, start, count = [], [], [], [], [], []

    def build(lo: int, hi: int) -> int:
        node = len(left)
        sel = prim[lo:hi]
        bmin.append(tri_min[sel].min(axis=0))
        bmax.append(tri_max[sel].max(axis=0))
        left.append(-1)
        right.append(-1)
        start.append(lo)
        count.append(hi - lo)
        if hi - lo > leaf_size:
            c = cent[sel]
            axis = int(np.argmax(c.max(axis=0) - c.min(axis=0)))
            order = np.lexsort((sel, c[:, axis]))
            prim[lo:hi] = sel[order]
            mid = lo + (hi - lo) // 2
            left[node] = build(lo, mid)
            right[node] = build(mid, hi)
        return node

    build(0, prim.shape[0])
    return Bvh(
        np.asarray(bmin), np.asarray(bmax),
        np.asarray(left, dtype=np.int64), np.asarray(right, dtype=np.int64),
        np.asarray(start, dtype=np.int64), np.asarray(count, dtype=np.int64),
        prim,
    )


def _slab_interval(o, d, bmin, bmax):
    """Per-pair ray/box overlap [near, far] with an explicit zero-direction branch."""
    near = np.full(o.shape[0], -np.inf)
    far = np.full(o.shape[0], np.inf)
    for ax in range(3):
        da = d[:, ax]
        oa = o[:, ax]
        nonzero = da != 0.0
        with np.errstate(divide="ignore"):
            t0 = (bmin[:, ax] - oa) / da
            t1 = (bmax[:, ax] - oa) / da
        lohi = np.minimum(t0, t1)
        hihi = np.maximum(t0, t1)
        near = np.where(nonzero, np.maximum(near, lohi), near)
        far = np.where(nonzero, np.minimum(far, hihi), far)
        inside = (oa >= bmin[:, ax]) & (oa <= bmax[:, ax])
        miss_parallel = ~nonzero & ~inside
        near = np.where(miss_parallel, np.inf, near)
        far = np.where(miss_parallel, -np.inf, far)
    return near, far


def _expand_ranges(starts: np.ndarray, counts: np.ndarray) -> np.ndarray:
    """Concatenate arange(s, s+c) for each (s, c) without a Python loop."""
    total = int(counts.sum())
    if total == 0:
        return np.empty(0, dtype=np.int64)
    reps = np.repeat(np.arange(len(counts)), counts)
    offs = np.arange(total) - np.repeat(np.cumsum(counts) - counts, counts)
    return starts[reps] + offs


def ray_cast_bvh(verts: np.ndarray, faces: np.ndarray, bvh: Bvh,
                 origins: np.ndarray, dirs: np.ndarray):
    """BVH-accelerated casting, wave traversal vectorized across rays.

    Produces exactly the brute-force answer: nodes are pruned only when their
    entry distance strictly exceeds the ray's current best t, so equal-t
    candidates survive to the (t, face) tie-break.
    """
    verts = np.asarray(verts, dtype=np.float64)
    faces = np.asarray(faces, dtype=np.int64)
    origins = np.atleast_2d(np.asarray(origins, dtype=np.float64))
    dirs = np.atleast_2d(np.asarray(dirs, dtype=np.float64))
    n = origins.shape[0]
    best_t = np.full(n, np.inf)
    best_face = np.full(n, -1, dtype=np.int64)

    rays = np.arange(n, dtype=np.int64)
    nodes = np.zeros(n, dtype=np.int64)
    while rays.size:
        near, far = _slab_interval(origins[rays], dirs[rays], bvh.bmin[nodes], bvh.bmax[nodes])
        alive = (near <= far) & (far >= 0.0) & (near <= best_t[rays])
        rays = rays[alive]
        nodes = nodes[alive]
        if not rays.size:
            break
        is_leaf = bvh.left[nodes] == -1
        leaf_rays = rays[is_leaf]
        leaf_nodes = nodes[is_leaf]
        if leaf_rays.size:
            counts = bvh.count[leaf_nodes]
            pair_ray = np.repeat(leaf_rays, counts)
            pair_prim = bvh.prim[_expand_ranges(bvh.start[leaf_nodes], counts)]
            v0, v1, v2 = _tri_corners(verts, faces, pair_prim)
            t, valid = _moller_trumbore(origins[pair_ray], dirs[pair_ray], v0, v1, v2)
            pair_ray = pair_ray[valid]
            pair_prim = pair_prim[valid]
            t = t[valid]
            if pair_ray.size:
                # best candidate per ray first, then compare against the running best
                order = np.lexsort((pair_prim, t, pair_ray))
                pair_ray, pair_prim, t = pair_ray[order], pair_prim[order], t[order]
                uniq, first = np.unique(pair_ray, return_index=True)
                ct, cf = t[first], pair_prim[first]
                win = (ct < best_t[uniq]) | ((ct == best_t[uniq]) & (cf < best_face[uniq]))
                upd = uniq[win]
                best_t[upd] = ct[win]
                best_face[upd] = cf[win]
        inner = ~is_leaf
        rays = np.concatenate([rays[inner], rays[inner]])
        nodes = np.concatenate([bvh.left[nodes[inner]], bvh.right[nodes[inner]]])
    point = np.full_like(origins, np.nan)
    hit = best_face >= 0
    point[hit] = origins[hit] + best_t[hit, None] * dirs[hit]
    return best_t, best_face, point
