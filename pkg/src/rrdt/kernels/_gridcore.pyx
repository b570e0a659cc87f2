# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled hot kernels: occupancy-grid collision checks and the exact
nearest-neighbor machinery (static kd-tree plus linear-buffer scans).

Semantics are shared with ``_gridpy`` (the pure-Python lane): half-open
bounds [lo, hi), cell index = floor((p - lo) * inv_cell), segment
interpolation at ceil(len/resolution)+1 equally spaced points with endpoints
canonically ordered so the check is exactly symmetric, closed-ball radius
queries, and nearest ties resolved toward the lowest id.
"""

from cpython.mem cimport PyMem_Free, PyMem_Malloc, PyMem_Realloc
from libc.math cimport ceil, floor, sqrt

import numpy as np

cimport numpy as cnp

cnp.import_array()

DEF MAX_DIM = 64
DEF LEAF_SIZE = 16
DEF STACK_SIZE = 512


cdef inline bint _pt_free(const unsigned char* occ, const double* lo,
                          const double* hi, const double* inv,
                          const cnp.npy_intp* shape, const cnp.npy_intp* stride,
                          Py_ssize_t d, const double* p) noexcept nogil:
    cdef Py_ssize_t ax, i
    cdef Py_ssize_t off = 0
    cdef double x
    for ax in range(d):
        x = p[ax]
        if x < lo[ax] or x >= hi[ax]:
            return False
        i = <Py_ssize_t>floor((x - lo[ax]) * inv[ax])
        if i < 0 or i >= shape[ax]:
            return False
        off += i * stride[ax]
    return occ[off] == 0


cdef inline void _unpack(cnp.ndarray occ, cnp.npy_intp* shape,
                         cnp.npy_intp* stride, Py_ssize_t d):
    cdef Py_ssize_t ax
    for ax in range(d):
        shape[ax] = cnp.PyArray_DIM(occ, <int>ax)
        stride[ax] = cnp.PyArray_STRIDE(occ, <int>ax)  # bytes == elements for u8


def point_free(cnp.ndarray occ, const double[::1] lo, const double[::1] hi,
               const double[::1] inv, const double[::1] p):
    cdef Py_ssize_t d = cnp.PyArray_NDIM(occ)
    if d > MAX_DIM:
        raise ValueError(f"compiled kernels support at most {MAX_DIM} dimensions")
    cdef cnp.npy_intp shape[MAX_DIM]
    cdef cnp.npy_intp stride[MAX_DIM]
    _unpack(occ, shape, stride, d)
    cdef const unsigned char* base = <const unsigned char*>cnp.PyArray_DATA(occ)
    return bool(_pt_free(base, &lo[0], &hi[0], &inv[0], shape, stride, d, &p[0]))


def points_free(cnp.ndarray occ, const double[::1] lo, const double[::1] hi,
                const double[::1] inv, const double[:, ::1] pts):
    cdef Py_ssize_t d = cnp.PyArray_NDIM(occ)
    if d > MAX_DIM:
        raise ValueError(f"compiled kernels support at most {MAX_DIM} dimensions")
    cdef cnp.npy_intp shape[MAX_DIM]
    cdef cnp.npy_intp stride[MAX_DIM]
    _unpack(occ, shape, stride, d)
    cdef const unsigned char* base = <const unsigned char*>cnp.PyArray_DATA(occ)
    cdef Py_ssize_t n = pts.shape[0]
    out = np.empty(n, dtype=np.bool_)
    cdef unsigned char[::1] ov = out.view(np.uint8)
    cdef Py_ssize_t k
    with nogil:
        for k in range(n):
            ov[k] = _pt_free(base, &lo[0], &hi[0], &inv[0], shape, stride,
                             d, &pts[k, 0])
    return out


cdef bint _seg_free(const unsigned char* base, const double* lo,
                    const double* hi, const double* inv,
                    const cnp.npy_intp* shape, const cnp.npy_intp* stride,
                    Py_ssize_t d, const double* a, const double* b,
                    double resolution) noexcept nogil:
    cdef double p0[MAX_DIM]
    cdef double p1[MAX_DIM]
    cdef double pt[MAX_DIM]
    cdef Py_ssize_t ax, i
    cdef bint swap = False
    for ax in range(d):
        if a[ax] < b[ax]:
            break
        if a[ax] > b[ax]:
            swap = True
            break
    for ax in range(d):
        p0[ax] = b[ax] if swap else a[ax]
        p1[ax] = a[ax] if swap else b[ax]
    cdef double acc = 0.0, diff, t
    for ax in range(d):
        diff = p1[ax] - p0[ax]
        acc += diff * diff
    cdef Py_ssize_t m = <Py_ssize_t>ceil(sqrt(acc) / resolution)
    for i in range(m + 1):
        t = (<double>i) / (<double>m) if m > 0 else 0.0
        for ax in range(d):
            pt[ax] = p0[ax] + t * (p1[ax] - p0[ax])
        if not _pt_free(base, lo, hi, inv, shape, stride, d, pt):
            return False
    return True


def segment_free(cnp.ndarray occ, const double[::1] lo, const double[::1] hi,
                 const double[::1] inv, const double[::1] a,
                 const double[::1] b, double resolution):
    cdef Py_ssize_t d = cnp.PyArray_NDIM(occ)
    if d > MAX_DIM:
        raise ValueError(f"compiled kernels support at most {MAX_DIM} dimensions")
    cdef cnp.npy_intp shape[MAX_DIM]
    cdef cnp.npy_intp stride[MAX_DIM]
    _unpack(occ, shape, stride, d)
    cdef const unsigned char* base = <const unsigned char*>cnp.PyArray_DATA(occ)
    cdef bint ok
    with nogil:
        ok = _seg_free(base, &lo[0], &hi[0], &inv[0], shape, stride, d,
                       &a[0], &b[0], resolution)
    return bool(ok)


def segments_free(cnp.ndarray occ, const double[::1] lo, const double[::1] hi,
                  const double[::1] inv, const double[:, ::1] starts,
                  const double[::1] q, double resolution):
    """Per-row segment checks from each start to the shared endpoint q."""
    cdef Py_ssize_t d = cnp.PyArray_NDIM(occ)
    if d > MAX_DIM:
        raise ValueError(f"compiled kernels support at most {MAX_DIM} dimensions")
    cdef cnp.npy_intp shape[MAX_DIM]
    cdef cnp.npy_intp stride[MAX_DIM]
    _unpack(occ, shape, stride, d)
    cdef const unsigned char* base = <const unsigned char*>cnp.PyArray_DATA(occ)
    cdef Py_ssize_t n = starts.shape[0], k
    out = np.empty(n, dtype=np.bool_)
    cdef unsigned char[::1] ov = out.view(np.uint8)
    with nogil:
        for k in range(n):
            ov[k] = _seg_free(base, &lo[0], &hi[0], &inv[0], shape, stride, d,
                              &starts[k, 0], &q[0], resolution)
    return out


# ---------------------------------------------------------------------------
# nearest-neighbor kernels

def brute_nearest(const double[:, ::1] pts, const double[::1] q):
    """(squared distance, index) of the nearest row; ties -> lowest index."""
    cdef Py_ssize_t n = pts.shape[0], d = pts.shape[1]
    cdef Py_ssize_t i, ax
    cdef double best = -1.0, d2, diff
    cdef Py_ssize_t best_i = -1
    with nogil:
        for i in range(n):
            d2 = 0.0
            for ax in range(d):
                diff = pts[i, ax] - q[ax]
                d2 += diff * diff
            if best_i < 0 or d2 < best:
                best = d2
                best_i = i
    if best_i < 0:
        raise ValueError("empty point set")
    return best, best_i


def brute_ball(const double[:, ::1] pts, const double[::1] q, double r2):
    """Indices of rows with squared distance <= r2, ascending."""
    cdef Py_ssize_t n = pts.shape[0], d = pts.shape[1]
    cdef Py_ssize_t i, ax, count = 0
    cdef double d2, diff
    out = np.empty(n, dtype=np.int64)
    cdef cnp.int64_t[::1] ov = out
    with nogil:
        for i in range(n):
            d2 = 0.0
            for ax in range(d):
                diff = pts[i, ax] - q[ax]
                d2 += diff * diff
            if d2 <= r2:
                ov[count] = i
                count += 1
    return out[:count].copy()


cdef class KDIndex:
    """Static kd-tree over a frozen (n, d) array; exact queries."""

    cdef double[:, ::1] pts
    cdef cnp.int64_t[::1] order
    cdef cnp.int64_t[::1] axis      # -1 marks a leaf
    cdef double[::1] value
    cdef cnp.int64_t[::1] left, right, start, end
    cdef Py_ssize_t n, d

    def __init__(self, pts):
        arr = np.ascontiguousarray(pts, dtype=np.float64)
        if arr.ndim != 2 or len(arr) == 0:
            raise ValueError("KDIndex needs a nonempty (n, d) array")
        self.pts = arr.copy()
        self.n, self.d = arr.shape
        order = np.arange(self.n, dtype=np.int64)
        ax_l, val_l, left_l, right_l, start_l, end_l = [], [], [], [], [], []

        def build(lo, hi):
            node = len(ax_l)
            ax_l.append(-1), val_l.append(0.0)
            left_l.append(-1), right_l.append(-1)
            start_l.append(lo), end_l.append(hi)
            if hi - lo <= LEAF_SIZE:
                return node
            sub = arr[order[lo:hi]]
            axis = int(np.argmax(sub.max(axis=0) - sub.min(axis=0)))
            mid = (lo + hi) // 2
            part = np.argpartition(sub[:, axis], mid - lo)
            order[lo:hi] = order[lo:hi][part]
            ax_l[node] = axis
            val_l[node] = float(arr[order[mid], axis])
            left_l[node] = build(lo, mid)
            right_l[node] = build(mid, hi)
            return node

        build(0, self.n)
        self.order = order
        self.axis = np.asarray(ax_l, dtype=np.int64)
        self.value = np.asarray(val_l, dtype=np.float64)
        self.left = np.asarray(left_l, dtype=np.int64)
        self.right = np.asarray(right_l, dtype=np.int64)
        self.start = np.asarray(start_l, dtype=np.int64)
        self.end = np.asarray(end_l, dtype=np.int64)

    def __len__(self):
        return self.n

    def nearest(self, const double[::1] q):
        """(squared distance, point id); ties -> lowest id."""
        cdef Py_ssize_t node_stack[STACK_SIZE]
        cdef double dist_stack[STACK_SIZE]
        cdef Py_ssize_t sp = 1, node, k, i, ax
        cdef double best = -1.0, pd2, d2, diff
        cdef Py_ssize_t best_i = -1
        node_stack[0] = 0
        dist_stack[0] = 0.0
        with nogil:
            while sp:
                sp -= 1
                node = node_stack[sp]
                pd2 = dist_stack[sp]
                if best_i >= 0 and pd2 > best:
                    continue
                while self.axis[node] >= 0:
                    ax = self.axis[node]
                    diff = q[ax] - self.value[node]
                    if diff < 0:
                        node_stack[sp] = self.right[node]
                        node = self.left[node]
                    else:
                        node_stack[sp] = self.left[node]
                        node = self.right[node]
                    dist_stack[sp] = diff * diff
                    sp += 1
                for k in range(self.start[node], self.end[node]):
                    i = self.order[k]
                    d2 = 0.0
                    for ax in range(self.d):
                        diff = self.pts[i, ax] - q[ax]
                        d2 += diff * diff
                    if best_i < 0 or d2 < best or (d2 == best and i < best_i):
                        best = d2
                        best_i = i
        return best, best_i

    def ball(self, const double[::1] q, double r):
        """Point ids with distance <= r (closed ball), ascending."""
        cdef Py_ssize_t node_stack[STACK_SIZE]
        cdef Py_ssize_t sp = 1, node, k, i, ax, count = 0, cap = 64
        cdef double r2 = r * r, d2, diff
        cdef cnp.int64_t* buf = <cnp.int64_t*>PyMem_Malloc(cap * sizeof(cnp.int64_t))
        cdef cnp.int64_t* grown
        if buf == NULL:
            raise MemoryError()
        node_stack[0] = 0
        try:
            while sp:
                sp -= 1
                node = node_stack[sp]
                while self.axis[node] >= 0:
                    ax = self.axis[node]
                    diff = q[ax] - self.value[node]
                    if diff * diff <= r2:
                        node_stack[sp] = self.right[node] if diff < 0 else self.left[node]
                        sp += 1
                    node = self.left[node] if diff < 0 else self.right[node]
                for k in range(self.start[node], self.end[node]):
                    i = self.order[k]
                    d2 = 0.0
                    for ax in range(self.d):
                        diff = self.pts[i, ax] - q[ax]
                        d2 += diff * diff
                    if d2 <= r2:
                        if count == cap:
                            cap *= 2
                            grown = <cnp.int64_t*>PyMem_Realloc(buf, cap * sizeof(cnp.int64_t))
                            if grown == NULL:
                                raise MemoryError()
                            buf = grown
                        buf[count] = i
                        count += 1
            out = np.empty(count, dtype=np.int64)
            for k in range(count):
                out[k] = buf[k]
        finally:
            PyMem_Free(buf)
        out.sort()
        return out


def propagate_costs(double[::1] cost, const double[::1] edge,
                    const cnp.int64_t[::1] first_child,
                    const cnp.int64_t[::1] next_sibling, Py_ssize_t start):
    """Recompute cost = parent cost + edge over the subtree below start."""
    cdef Py_ssize_t cap = 256, sp = 0, v, c
    cdef cnp.int64_t* stack = <cnp.int64_t*>PyMem_Malloc(cap * sizeof(cnp.int64_t))
    cdef cnp.int64_t* grown
    if stack == NULL:
        raise MemoryError()
    try:
        stack[0] = start
        sp = 1
        while sp:
            sp -= 1
            v = stack[sp]
            c = first_child[v]
            while c >= 0:
                cost[c] = cost[v] + edge[c]
                if sp == cap:
                    cap *= 2
                    grown = <cnp.int64_t*>PyMem_Realloc(stack, cap * sizeof(cnp.int64_t))
                    if grown == NULL:
                        raise MemoryError()
                    stack = grown
                stack[sp] = c
                sp += 1
                c = next_sibling[c]
    finally:
        PyMem_Free(stack)
