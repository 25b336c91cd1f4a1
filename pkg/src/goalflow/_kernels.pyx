# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops: multi-stencil fast marching and 4-connected labeling.

Mirrors ``_kernels_py`` exactly; ``goalflow.kernels`` picks whichever imports.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, INFINITY
from libc.stdlib cimport malloc, free

cdef double SQRT2 = 1.4142135623730951


cdef inline double _solve(double a, double b, double hh) noexcept nogil:
    cdef double tmp
    if a > b:
        tmp = a
        a = b
        b = tmp
    if a == INFINITY:
        return INFINITY
    if b - a >= hh:
        return a + hh
    return 0.5 * (a + b + sqrt(2.0 * hh * hh - (a - b) * (a - b)))


cdef inline void _push(double* keys, Py_ssize_t* ids, Py_ssize_t* size,
                       double key, Py_ssize_t idx) noexcept nogil:
    cdef Py_ssize_t i = size[0]
    cdef Py_ssize_t parent
    size[0] += 1
    while i > 0:
        parent = (i - 1) >> 1
        if keys[parent] <= key:
            break
        keys[i] = keys[parent]
        ids[i] = ids[parent]
        i = parent
    keys[i] = key
    ids[i] = idx


cdef inline Py_ssize_t _pop(double* keys, Py_ssize_t* ids, Py_ssize_t* size) noexcept nogil:
    cdef Py_ssize_t top = ids[0]
    cdef Py_ssize_t n = size[0] - 1
    cdef double key = keys[n]
    cdef Py_ssize_t idx = ids[n]
    cdef Py_ssize_t i = 0
    cdef Py_ssize_t child
    size[0] = n
    while True:
        child = 2 * i + 1
        if child >= n:
            break
        if child + 1 < n and keys[child + 1] < keys[child]:
            child += 1
        if keys[child] >= key:
            break
        keys[i] = keys[child]
        ids[i] = ids[child]
        i = child
    if n > 0:
        keys[i] = key
        ids[i] = idx
    return top


cdef inline double _known(const double* T, const unsigned char* state,
                          Py_ssize_t r, Py_ssize_t c, Py_ssize_t h, Py_ssize_t w) noexcept nogil:
    if r < 0 or r >= h or c < 0 or c >= w or state[r * w + c] != 2:
        return INFINITY
    return T[r * w + c]


cdef inline double _known_diag(const double* T, const unsigned char* state,
                               const unsigned char* trav,
                               Py_ssize_t r, Py_ssize_t c, Py_ssize_t r0, Py_ssize_t c0,
                               Py_ssize_t h, Py_ssize_t w) noexcept nogil:
    if r < 0 or r >= h or c < 0 or c >= w or state[r * w + c] != 2:
        return INFINITY
    # no corner cutting: both shared orthogonal cells must be open
    if trav[r0 * w + c] == 0 or trav[r * w + c0] == 0:
        return INFINITY
    return T[r * w + c]


def fmm(const unsigned char[:, ::1] trav_view, const Py_ssize_t[:, ::1] sources):
    cdef Py_ssize_t h = trav_view.shape[0]
    cdef Py_ssize_t w = trav_view.shape[1]
    out = np.full((h, w), np.inf, dtype=np.float64)
    state_arr = np.zeros((h, w), dtype=np.uint8)
    cdef double[:, ::1] T_view = out
    cdef unsigned char[:, ::1] state_view = state_arr
    cdef double* T = &T_view[0, 0]
    cdef unsigned char* state = &state_view[0, 0]
    cdef const unsigned char* trav = &trav_view[0, 0]
    cdef Py_ssize_t cap = 8 * h * w + sources.shape[0] + 1
    cdef double* keys = <double*> malloc(cap * sizeof(double))
    cdef Py_ssize_t* ids = <Py_ssize_t*> malloc(cap * sizeof(Py_ssize_t))
    cdef Py_ssize_t size = 0
    cdef Py_ssize_t k, idx, r, c, rr, cc, dr, dc, j
    cdef double a, b, t, t2
    if keys == NULL or ids == NULL:
        free(keys)
        free(ids)
        raise MemoryError()
    try:
        with nogil:
            for k in range(sources.shape[0]):
                j = sources[k, 0] * w + sources[k, 1]
                if T[j] != 0.0:
                    T[j] = 0.0
                    state[j] = 1
                    _push(keys, ids, &size, 0.0, j)
            while size > 0:
                idx = _pop(keys, ids, &size)
                if state[idx] == 2:
                    continue
                state[idx] = 2
                r = idx // w
                c = idx - r * w
                for dr in range(-1, 2):
                    for dc in range(-1, 2):
                        if dr == 0 and dc == 0:
                            continue
                        rr = r + dr
                        cc = c + dc
                        if rr < 0 or rr >= h or cc < 0 or cc >= w:
                            continue
                        j = rr * w + cc
                        if trav[j] == 0 or state[j] == 2:
                            continue
                        a = _known(T, state, rr - 1, cc, h, w)
                        b = _known(T, state, rr + 1, cc, h, w)
                        if b < a:
                            a = b
                        b = _known(T, state, rr, cc - 1, h, w)
                        t = _known(T, state, rr, cc + 1, h, w)
                        if t < b:
                            b = t
                        t = _solve(a, b, 1.0)
                        a = _known_diag(T, state, trav, rr - 1, cc - 1, rr, cc, h, w)
                        b = _known_diag(T, state, trav, rr + 1, cc + 1, rr, cc, h, w)
                        if b < a:
                            a = b
                        b = _known_diag(T, state, trav, rr - 1, cc + 1, rr, cc, h, w)
                        t2 = _known_diag(T, state, trav, rr + 1, cc - 1, rr, cc, h, w)
                        if t2 < b:
                            b = t2
                        t2 = _solve(a, b, SQRT2)
                        if t2 < t:
                            t = t2
                        if t < T[j]:
                            T[j] = t
                            state[j] = 1
                            _push(keys, ids, &size, t, j)
    finally:
        free(keys)
        free(ids)
    return out


def label4(const unsigned char[:, ::1] mask):
    cdef Py_ssize_t h = mask.shape[0]
    cdef Py_ssize_t w = mask.shape[1]
    labels_arr = np.zeros((h, w), dtype=np.int32)
    cdef int[:, ::1] labels = labels_arr
    cdef Py_ssize_t* stack = <Py_ssize_t*> malloc((h * w + 1) * sizeof(Py_ssize_t))
    cdef Py_ssize_t top, idx, r, c, r0, c0
    cdef int count = 0
    if stack == NULL:
        raise MemoryError()
    try:
        with nogil:
            for r0 in range(h):
                for c0 in range(w):
                    if mask[r0, c0] == 0 or labels[r0, c0] != 0:
                        continue
                    count += 1
                    labels[r0, c0] = count
                    top = 0
                    stack[top] = r0 * w + c0
                    top += 1
                    while top > 0:
                        top -= 1
                        idx = stack[top]
                        r = idx // w
                        c = idx - r * w
                        if r > 0 and mask[r - 1, c] != 0 and labels[r - 1, c] == 0:
                            labels[r - 1, c] = count
                            stack[top] = idx - w
                            top += 1
                        if r < h - 1 and mask[r + 1, c] != 0 and labels[r + 1, c] == 0:
                            labels[r + 1, c] = count
                            stack[top] = idx + w
                            top += 1
                        if c > 0 and mask[r, c - 1] != 0 and labels[r, c - 1] == 0:
                            labels[r, c - 1] = count
                            stack[top] = idx - 1
                            top += 1
                        if c < w - 1 and mask[r, c + 1] != 0 and labels[r, c + 1] == 0:
                            labels[r, c + 1] = count
                            stack[top] = idx + 1
                            top += 1
    finally:
        free(stack)
    return labels_arr, count
