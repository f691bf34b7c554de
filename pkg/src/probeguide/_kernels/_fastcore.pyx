# Compiled twins of the pykernels hot paths: linear blend skinning and
# ray/triangle casting (brute force and BVH). The triangle predicate keeps
# the exact operation order of the pure-numpy version (the extension is
# built with FP contraction off) so both backends agree bit for bit, and
# hits are ranked by the lexicographic (t, face) minimum.

from libc.math cimport fabs
from libc.stdint cimport int64_t

import numpy as np

cdef double DET_EPS = 1e-18
cdef enum:
    STACK_CAP = 256

backend = "cython"


def lbs_blend(weights, rel_rot, rel_t, verts):
    w = np.ascontiguousarray(weights, dtype=np.float64)
    R = np.ascontiguousarray(rel_rot, dtype=np.float64)
    tr = np.ascontiguousarray(rel_t, dtype=np.float64)
    vv = np.ascontiguousarray(verts, dtype=np.float64)
    out = np.zeros_like(vv)
    _lbs_blend(w, R, tr, vv, out)
    return out


cdef void _lbs_blend(const double[:, ::1] w, const double[:, :, :, ::1] R, const double[:, :, ::1] tr,
                     const double[:, :, ::1] verts, double[:, :, ::1] out) noexcept nogil:
    cdef Py_ssize_t S = verts.shape[0], V = verts.shape[1], J = w.shape[1]
    cdef Py_ssize_t s, v, j
    cdef double wj, x, y, z
    for s in range(S):
        for v in range(V):
            x = verts[s, v, 0]
            y = verts[s, v, 1]
            z = verts[s, v, 2]
            for j in range(J):
                wj = w[v, j]
                if wj == 0.0:
                    continue
                out[s, v, 0] += wj * (R[s, j, 0, 0] * x + R[s, j, 0, 1] * y + R[s, j, 0, 2] * z + tr[s, j, 0])
                out[s, v, 1] += wj * (R[s, j, 1, 0] * x + R[s, j, 1, 1] * y + R[s, j, 1, 2] * z + tr[s, j, 1])
                out[s, v, 2] += wj * (R[s, j, 2, 0] * x + R[s, j, 2, 1] * y + R[s, j, 2, 2] * z + tr[s, j, 2])


cdef inline double _mt_hit(double ox, double oy, double oz,
                           double dx, double dy, double dz,
                           double v0x, double v0y, double v0z,
                           double v1x, double v1y, double v1z,
                           double v2x, double v2y, double v2z) noexcept nogil:
    # Returns the ray parameter t, or -1.0 on a miss. Boundaries inclusive.
    cdef double e1x = v1x - v0x, e1y = v1y - v0y, e1z = v1z - v0z
    cdef double e2x = v2x - v0x, e2y = v2y - v0y, e2z = v2z - v0z
    cdef double px = dy * e2z - dz * e2y
    cdef double py = dz * e2x - dx * e2z
    cdef double pz = dx * e2y - dy * e2x
    cdef double det = e1x * px + e1y * py + e1z * pz
    if fabs(det) < DET_EPS:
        return -1.0
    cdef double inv = 1.0 / det
    cdef double sx = ox - v0x, sy = oy - v0y, sz = oz - v0z
    cdef double u = (sx * px + sy * py + sz * pz) * inv
    if u < 0.0 or u > 1.0:
        return -1.0
    cdef double qx = sy * e1z - sz * e1y
    cdef double qy = sz * e1x - sx * e1z
    cdef double qz = sx * e1y - sy * e1x
    cdef double v = (dx * qx + dy * qy + dz * qz) * inv
    if v < 0.0 or u + v > 1.0:
        return -1.0
    cdef double t = (e2x * qx + e2y * qy + e2z * qz) * inv
    if t <= 0.0:
        return -1.0
    return t


def ray_cast_brute(verts, faces, origins, dirs, chunk=0):
    # chunk is accepted for signature parity with the numpy path; unused here
    V = np.ascontiguousarray(verts, dtype=np.float64)
    F = np.ascontiguousarray(faces, dtype=np.int64)
    O = np.ascontiguousarray(np.atleast_2d(origins), dtype=np.float64)
    D = np.ascontiguousarray(np.atleast_2d(dirs), dtype=np.float64)
    n = O.shape[0]
    t = np.full(n, np.inf)
    face = np.full(n, -1, dtype=np.int64)
    _brute(V, F, O, D, t, face)
    point = np.full_like(O, np.nan)
    hit = face >= 0
    point[hit] = O[hit] + t[hit, None] * D[hit]
    return t, face, point


cdef void _brute(const double[:, ::1] V, const int64_t[:, ::1] F, const double[:, ::1] O,
                 const double[:, ::1] D, double[::1] best_t, int64_t[::1] best_f) noexcept nogil:
    cdef Py_ssize_t n = O.shape[0], nf = F.shape[0]
    cdef Py_ssize_t i, f
    cdef int64_t a, b, c
    cdef double t
    for i in range(n):
        for f in range(nf):
            a = F[f, 0]; b = F[f, 1]; c = F[f, 2]
            t = _mt_hit(O[i, 0], O[i, 1], O[i, 2], D[i, 0], D[i, 1], D[i, 2],
                        V[a, 0], V[a, 1], V[a, 2], V[b, 0], V[b, 1], V[b, 2],
                        V[c, 0], V[c, 1], V[c, 2])
            # ascending face scan: strict improvement keeps the lowest face on ties
            if t >= 0.0 and t < best_t[i]:
                best_t[i] = t
                best_f[i] = f


def ray_cast_bvh(verts, faces, bvh, origins, dirs):
    V = np.ascontiguousarray(verts, dtype=np.float64)
    F = np.ascontiguousarray(faces, dtype=np.int64)
    O = np.ascontiguousarray(np.atleast_2d(origins), dtype=np.float64)
    D = np.ascontiguousarray(np.atleast_2d(dirs), dtype=np.float64)
    bmin = np.ascontiguousarray(bvh.bmin, dtype=np.float64)
    bmax = np.ascontiguousarray(bvh.bmax, dtype=np.float64)
    left = np.ascontiguousarray(bvh.left, dtype=np.int64)
    right = np.ascontiguousarray(bvh.right, dtype=np.int64)
    start = np.ascontiguousarray(bvh.start, dtype=np.int64)
    count = np.ascontiguousarray(bvh.count, dtype=np.int64)
    prim = np.ascontiguousarray(bvh.prim, dtype=np.int64)
    n = O.shape[0]
    t = np.full(n, np.inf)
    face = np.full(n, -1, dtype=np.int64)
    ok = _bvh_cast(V, F, O, D, bmin, bmax, left, right, start, count, prim, t, face)
    if not ok:
        raise RuntimeError("BVH traversal stack overflow")
    point = np.full_like(O, np.nan)
    hit = face >= 0
    point[hit] = O[hit] + t[hit, None] * D[hit]
    return t, face, point


cdef bint _bvh_cast(const double[:, ::1] V, const int64_t[:, ::1] F, const double[:, ::1] O,
                    const double[:, ::1] D, const double[:, ::1] bmin, const double[:, ::1] bmax,
                    const int64_t[::1] left, const int64_t[::1] right, const int64_t[::1] start,
                    const int64_t[::1] count, const int64_t[::1] prim,
                    double[::1] best_t, int64_t[::1] best_f) noexcept nogil:
    cdef Py_ssize_t n = O.shape[0]
    cdef int64_t stack[STACK_CAP]
    cdef int sp
    cdef Py_ssize_t i, k
    cdef int64_t node, f, a, b, c
    cdef int ax
    cdef double ox, oy, oz, dx, dy, dz, oa, da, lo, hi, t0, t1, near, far, t
    for i in range(n):
        ox = O[i, 0]; oy = O[i, 1]; oz = O[i, 2]
        dx = D[i, 0]; dy = D[i, 1]; dz = D[i, 2]
        sp = 0
        stack[sp] = 0
        sp += 1
        while sp > 0:
            sp -= 1
            node = stack[sp]
            near = -1e308
            far = 1e308
            for ax in range(3):
                if ax == 0:
                    oa = ox; da = dx
                elif ax == 1:
                    oa = oy; da = dy
                else:
                    oa = oz; da = dz
                lo = bmin[node, ax]
                hi = bmax[node, ax]
                if da != 0.0:
                    t0 = (lo - oa) / da
                    t1 = (hi - oa) / da
                    if t0 > t1:
                        t0, t1 = t1, t0
                    if t0 > near:
                        near = t0
                    if t1 < far:
                        far = t1
                elif oa < lo or oa > hi:
                    near = 1e308
                    far = -1e308
                    break
            # prune only when the box entry strictly exceeds the current best
            if near > far or far < 0.0 or near > best_t[i]:
                continue
            if left[node] == -1:
                for k in range(start[node], start[node] + count[node]):
                    f = prim[k]
                    a = F[f, 0]; b = F[f, 1]; c = F[f, 2]
                    t = _mt_hit(ox, oy, oz, dx, dy, dz,
                                V[a, 0], V[a, 1], V[a, 2], V[b, 0], V[b, 1], V[b, 2],
                                V[c, 0], V[c, 1], V[c, 2])
                    if t >= 0.0 and (t < best_t[i] or (t == best_t[i] and f < best_f[i])):
                        best_t[i] = t
                        best_f[i] = f
            else:
                if sp + 2 > STACK_CAP:
                    return False
                stack[sp] = right[node]
                sp += 1
                stack[sp] = left[node]
                sp += 1
    return True
