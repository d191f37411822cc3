# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled circle packing kernel.

Mirrors ``_packing_py`` operation for operation; both backends must return
bit-identical positions (compiled with -ffp-contract=off to keep C doubles
on the exact IEEE sequence the pure-Python fallback performs).
"""

from libc.math cimport cos, sin, sqrt
from libc.stdlib cimport free, malloc

cdef double PI = 3.141592653589793

BACKEND = "cython"


cdef bint _is_free(double x, double y, double rj, double* xs, double* ys,
                   double* cnorm, double* radii, Py_ssize_t j) nogil:
    cdef double rho = sqrt(x * x + y * y)
    cdef Py_ssize_t i
    cdef double ri, gap, dx, dy, s
    for i in range(j):
        ri = radii[i]
        gap = rho - cnorm[i]
        if gap < 0.0:
            gap = -gap
        if gap > ri + rj:
            continue
        dx = x - xs[i]
        dy = y - ys[i]
        s = ri + rj
        if dx * dx + dy * dy < s * s * (1.0 - 1e-9):
            return 0
    return 1


cdef double _contact_parameter(double x, double y, double rj, double* xs,
                               double* ys, double* cnorm, double* radii,
                               Py_ssize_t j) nogil:
    cdef double aa = x * x + y * y
    cdef double t, s, b, c, disc, sq, t1, t2
    cdef Py_ssize_t i, sweep
    cdef bint changed
    if aa == 0.0:
        return 1.0
    t = 0.0
    for sweep in range(j + 1):
        changed = 0
        for i in range(j):
            s = radii[i] + rj
            b = x * xs[i] + y * ys[i]
            c = cnorm[i] * cnorm[i] - s * s
            disc = b * b - aa * c
            if disc <= 0.0:
                continue
            sq = sqrt(disc)
            t1 = (b - sq) / aa
            t2 = (b + sq) / aa
            if t1 < t < t2:
                t = t2
                changed = 1
        if not changed:
            break
    if t > 1.0:
        t = 1.0
    return t


def pack_circles(radii):
    """Centers for circles of the given radii, packed around the origin."""
    cdef Py_ssize_t n = len(radii)
    if n == 0:
        return []
    cdef double* rad = <double*> malloc(n * sizeof(double))
    cdef double* xs = <double*> malloc(n * sizeof(double))
    cdef double* ys = <double*> malloc(n * sizeof(double))
    cdef double* cnorm = <double*> malloc(n * sizeof(double))
    if not rad or not xs or not ys or not cnorm:
        free(rad); free(xs); free(ys); free(cnorm)
        raise MemoryError()
    cdef Py_ssize_t j
    cdef double pitch, a, extent, r_max, rj, start_rho, arc, phi, rho, x, y
    cdef double denom, t, cn
    try:
        for j in range(n):
            rad[j] = radii[j]
            xs[j] = 0.0
            ys[j] = 0.0
            cnorm[j] = 0.0
        pitch = rad[0]
        if pitch <= 0.0:
            raise ValueError("radii must be positive")
        a = pitch / (2.0 * PI)
        extent = rad[0]
        r_max = rad[0]

        for j in range(1, n):
            rj = rad[j]
            if rj <= 0.0:
                raise ValueError("radii must be positive")
            start_rho = extent - 2.0 * rj - r_max
            if start_rho < 0.0:
                start_rho = 0.0
            arc = 0.5 * rj
            phi = 0.0
            while True:
                rho = start_rho + a * phi
                x = rho * cos(phi)
                y = rho * sin(phi)
                if rho - (rj + r_max) > extent or _is_free(x, y, rj, xs, ys, cnorm, rad, j):
                    break
                denom = rho if rho > arc else arc
                phi += arc / denom

            t = _contact_parameter(x, y, rj, xs, ys, cnorm, rad, j)
            x *= t
            y *= t

            xs[j] = x
            ys[j] = y
            cn = sqrt(x * x + y * y)
            cnorm[j] = cn
            if cn + rj > extent:
                extent = cn + rj
            if rj > r_max:
                r_max = rj
        return [(xs[j], ys[j]) for j in range(n)]
    finally:
        free(rad)
        free(xs)
        free(ys)
        free(cnorm)
