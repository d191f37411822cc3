"""Pure-Python circle packing kernel; fallback for the compiled extension.

Deterministic placement: circles arrive sorted by radius (largest first);
the first sits at the origin and each next circle walks an Archimedean
spiral outward until it finds a collision-free spot, then slides back along
its ray to the exact first-contact point. Two equal circles therefore end
up exactly one diameter apart.

The compiled twin in ``_packing.pyx`` performs the same floating-point
operations in the same order, so both backends produce identical results
(asserted by tests).
"""

from __future__ import annotations

from math import cos, sin, sqrt

PI = 3.141592653589793

BACKEND = "python"


def pack_circles(radii: list[float]) -> list[tuple[float, float]]:
    """Centers for circles of the given radii, packed around the origin.

    Radii must be positive and pre-sorted in the desired placement order.
    """
    n = len(radii)
    if n == 0:
        return []
    xs = [0.0] * n
    ys = [0.0] * n
    cnorm = [0.0] * n  # center distance from origin
    pitch = radii[0]
    if pitch <= 0.0:
        raise ValueError("radii must be positive")
    a = pitch / (2.0 * PI)
    extent = radii[0]  # max over placed of |c| + r
    r_max = radii[0]

    for j in range(1, n):
        rj = radii[j]
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
            if rho - (rj + r_max) > extent or _is_free(x, y, rj, xs, ys, cnorm, radii, j):
                break
            denom = rho if rho > arc else arc
            phi += arc / denom

        # Slide back toward the origin to the first feasible point on the ray.
        t = _contact_parameter(x, y, rj, xs, ys, cnorm, radii, j)
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
    return list(zip(xs, ys))


def _is_free(x, y, rj, xs, ys, cnorm, radii, j) -> bool:
    rho = sqrt(x * x + y * y)
    for i in range(j):
        ri = radii[i]
        gap = rho - cnorm[i]
        if gap < 0.0:
            gap = -gap
        if gap > ri + rj:  # annulus quick reject: cannot overlap
            continue
        dx = x - xs[i]
        dy = y - ys[i]
        s = ri + rj
        if dx * dx + dy * dy < s * s * (1.0 - 1e-9):
            return False
    return True


def _contact_parameter(x, y, rj, xs, ys, cnorm, radii, j) -> float:
    aa = x * x + y * y
    if aa == 0.0:
        return 1.0
    t = 0.0
    for _ in range(j + 1):
        changed = False
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
                changed = True
        if not changed:
            break
    if t > 1.0:
        t = 1.0
    return t
