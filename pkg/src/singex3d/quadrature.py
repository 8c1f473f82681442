"""Gauss-Legendre rules and an adaptive Duffy-transformed reference oracle.

The oracle exists to validate everything else: it splits the domain at the
singular point into corner-anchored pieces, collapses each corner with the
Duffy map (whose Jacobian absorbs a 1/r singularity), and then runs an
embedded tensor Gauss pair with quad-tree subdivision until the requested
tolerance is met.  It is a validator, not the production integrator.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ArgumentError, OracleError

_NEWTON_TOL = 1e-15


@dataclass(frozen=True)
class QuadRule1D:
    nodes: np.ndarray
    weights: np.ndarray


@lru_cache(maxsize=256)
def _gauss_legendre_cached(n):
    if n < 1:
        raise ArgumentError("rule order must be >= 1")
    if n == 1:
        return (np.zeros(1), np.full(1, 2.0))
    k = np.arange(n)
    x = np.cos(math.pi * (4 * k + 3) / (4 * n + 2))
    for _ in range(100):
        p0 = np.ones_like(x)
        p1 = x.copy()
        for m in range(2, n + 1):
            p0, p1 = p1, ((2 * m - 1) * x * p1 - (m - 1) * p0) / m
        dp = n * (x * p1 - p0) / (x * x - 1.0)
        dx = p1 / dp
        x = x - dx
        if np.max(np.abs(dx)) < _NEWTON_TOL:
            break
    p0 = np.ones_like(x)
    p1 = x.copy()
    for m in range(2, n + 1):
        p0, p1 = p1, ((2 * m - 1) * x * p1 - (m - 1) * p0) / m
    dp = n * (x * p1 - p0) / (x * x - 1.0)
    w = 2.0 / ((1.0 - x * x) * dp * dp)
    order = np.argsort(x)
    return (x[order], w[order])


def gauss_legendre(n):
    """n-point Gauss-Legendre rule on (-1, 1) from Newton iteration."""
    nodes, weights = _gauss_legendre_cached(int(n))
    return QuadRule1D(nodes.copy(), weights.copy())


def tensor_integrate(f, rect, n):
    """Tensor n x n Gauss-Legendre quadrature of f over the rectangle.

    ``f`` receives an array of points with shape (n, n, 2).
    """
    x0, x1, y0, y1 = (float(v) for v in rect)
    rule = _gauss_legendre_cached(int(n))
    gx = 0.5 * (x0 + x1) + 0.5 * (x1 - x0) * rule[0]
    gy = 0.5 * (y0 + y1) + 0.5 * (y1 - y0) * rule[0]
    pts = np.empty((n, n, 2))
    pts[..., 0] = gx[:, None]
    pts[..., 1] = gy[None, :]
    vals = np.asarray(f(pts), dtype=float)
    wx = rule[1] * 0.5 * (x1 - x0)
    wy = rule[1] * 0.5 * (y1 - y0)
    return float(np.einsum("i,j,ij->", wx, wy, vals))


@dataclass(frozen=True)
class OracleResult:
    value: float
    error_estimate: float
    evaluations: int


class _DuffyPiece:
    """One corner-anchored piece mapped from the (u, v) unit square."""

    __slots__ = ("anchor", "ex", "ey", "mode", "jac_sign")

    def __init__(self, anchor, ex, ey, mode, jac_sign=1.0):
        self.anchor = anchor  # singular corner in the original coordinates
        self.ex = ex          # edge vectors of the piece
        self.ey = ey
        self.mode = mode      # "duffy1", "duffy2" (two triangle halves)
        self.jac_sign = jac_sign

    def map_points(self, u, v):
        if self.mode == "duffy1":
            s, t = u, u * v
            jac = np.abs(u)
        else:
            s, t = u * v, u
            jac = np.abs(u)
        x = self.anchor[0] + s * self.ex[0] + t * self.ey[0]
        y = self.anchor[1] + s * self.ex[1] + t * self.ey[1]
        base = abs(self.ex[0] * self.ey[1] - self.ex[1] * self.ey[0])
        return x, y, self.jac_sign * base * jac


def _rect_pieces(rect, anchor):
    """Split a rectangle at the (clamped) anchor into Duffy pieces."""
    x0, x1, y0, y1 = rect
    ax = min(max(anchor[0], x0), x1)
    ay = min(max(anchor[1], y0), y1)
    pieces = []
    for cx in (x0, x1):
        for cy in (y0, y1):
            ex = (cx - ax, 0.0)
            ey = (0.0, cy - ay)
            if ex[0] == 0.0 or ey[1] == 0.0:
                continue
            for mode in ("duffy1", "duffy2"):
                pieces.append(_DuffyPiece((ax, ay), ex, ey, mode))
    return pieces


def _tri_pieces(tri, anchor):
    """Fan a triangle around the anchor; signed pieces telescope exactly."""
    v = [np.asarray(p, dtype=float) for p in tri]
    a = np.asarray(anchor, dtype=float)
    area2 = (v[1] - v[0])[0] * (v[2] - v[0])[1] - (v[1] - v[0])[1] * (v[2] - v[0])[0]
    if area2 == 0.0:
        raise ArgumentError("degenerate triangle")
    if area2 < 0.0:
        v = [v[0], v[2], v[1]]
    pieces = []
    scale = max(np.linalg.norm(p - a) for p in v)
    for i in range(3):
        p1 = v[i] - a
        p2 = v[(i + 1) % 3] - a
        det = p1[0] * p2[1] - p1[1] * p2[0]
        if abs(det) <= 1e-14 * scale * scale:
            continue
        sign = 1.0 if det > 0.0 else -1.0
        if sign < 0.0:
            p1, p2 = p2, p1
        # map (u, v): point = u * ((1-v) p1 + v p2), jacobian u * det
        pieces.append(_TriDuffyPiece(tuple(a), tuple(p1), tuple(p2), sign))
    return pieces


class _TriDuffyPiece:
    __slots__ = ("anchor", "p1", "p2", "sign")

    def __init__(self, anchor, p1, p2, sign):
        self.anchor = anchor
        self.p1 = p1
        self.p2 = p2
        self.sign = sign

    def map_points(self, u, v):
        ex = (1.0 - v) * self.p1[0] + v * self.p2[0]
        ey = (1.0 - v) * self.p1[1] + v * self.p2[1]
        x = self.anchor[0] + u * ex
        y = self.anchor[1] + u * ey
        det = self.p1[0] * self.p2[1] - self.p1[1] * self.p2[0]
        return x, y, self.sign * np.abs(det) * np.abs(u)


def _nearest_in_tri(tri, point):
    """Closest point of a (closed) triangle to the given point."""
    p = np.asarray(point, dtype=float)
    v = [np.asarray(q, dtype=float) for q in tri]
    best = None
    for i in range(3):
        a, b = v[i], v[(i + 1) % 3]
        ab = b - a
        t = np.clip(np.dot(p - a, ab) / np.dot(ab, ab), 0.0, 1.0)
        cand = a + t * ab
        d = np.linalg.norm(p - cand)
        if best is None or d < best[0]:
            best = (d, cand)
    # interior test by barycentric signs
    def cross2(u, w):
        return u[0] * w[1] - u[1] * w[0]

    d1 = cross2(v[1] - v[0], p - v[0])
    d2 = cross2(v[2] - v[1], p - v[1])
    d3 = cross2(v[0] - v[2], p - v[2])
    if (d1 >= 0 and d2 >= 0 and d3 >= 0) or (d1 <= 0 and d2 <= 0 and d3 <= 0):
        return p
    return best[1]


def duffy_oracle(f, domain, singular_point, rel_tol=1e-12, abs_tol=0.0,
                 n_low=7, max_depth=30, max_panels=20000):
    """High-accuracy reference value for a weakly singular integral.

    ``f`` is vectorized over points of shape (..., 2); ``domain`` is
    ("rect", x0, x1, y0, y1) or ("tri", v1, v2, v3).  The singular point is
    clamped to the domain and the domain is split so the singularity sits
    at Duffy-collapsed corners.  Panels are refined worst-first with an
    embedded (n, 2n) tensor pair until the summed error estimate passes
    the tolerance.
    """
    kind = domain[0]
    if kind == "rect":
        rect = tuple(float(v) for v in domain[1:])
        pieces = _rect_pieces(rect, singular_point)
    elif kind == "tri":
        anchor = _nearest_in_tri(domain[1:], singular_point)
        pieces = _tri_pieces(domain[1:], anchor)
    else:
        raise ArgumentError(f"unknown domain kind {kind!r}")
    if not pieces:
        return OracleResult(0.0, 0.0, 0)

    rule_lo = _gauss_legendre_cached(n_low)
    rule_hi = _gauss_legendre_cached(2 * n_low)
    evaluations = 0

    def panel_estimate(piece, u0, u1, v0, v1):
        nonlocal evaluations
        vals = []
        for nodes, weights in (rule_lo, rule_hi):
            gu = 0.5 * (u0 + u1) + 0.5 * (u1 - u0) * nodes
            gv = 0.5 * (v0 + v1) + 0.5 * (v1 - v0) * nodes
            uu, vv = np.meshgrid(gu, gv, indexing="ij")
            x, y, jac = piece.map_points(uu, vv)
            pts = np.stack([x, y], axis=-1)
            fv = np.asarray(f(pts), dtype=float) * jac
            evaluations += fv.size
            wu = weights * 0.5 * (u1 - u0)
            wv = weights * 0.5 * (v1 - v0)
            vals.append(float(np.einsum("i,j,ij->", wu, wv, fv)))
        return vals[1], abs(vals[1] - vals[0])

    heap = []
    frozen = []  # panels at max depth keep their value and error estimate
    seq = 0
    total = 0.0
    total_err = 0.0
    frozen_err = 0.0
    for piece in pieces:
        val, err = panel_estimate(piece, 0.0, 1.0, 0.0, 1.0)
        heapq.heappush(heap, (-err, seq, piece, (0.0, 1.0, 0.0, 1.0), val, err, 0))
        seq += 1
        total += val
        total_err += err

    while total_err > max(abs_tol, rel_tol * abs(total)):
        if not heap or total_err - frozen_err <= 0.0 or len(heap) + len(frozen) >= max_panels:
            raise OracleError(
                f"oracle did not converge with {len(heap) + len(frozen)} panels "
                f"(estimate {total:.17g} +- {total_err:.3g})",
                OracleResult(total, total_err, evaluations),
            )
        _, _, piece, (u0, u1, v0, v1), val, err, depth = heapq.heappop(heap)
        if depth >= max_depth:
            frozen.append((val, err))
            frozen_err += err
            continue
        total -= val
        total_err -= err
        um, vm = 0.5 * (u0 + u1), 0.5 * (v0 + v1)
        for su0, su1 in ((u0, um), (um, u1)):
            for sv0, sv1 in ((v0, vm), (vm, v1)):
                sval, serr = panel_estimate(piece, su0, su1, sv0, sv1)
                heapq.heappush(
                    heap, (-serr, seq, piece, (su0, su1, sv0, sv1), sval, serr, depth + 1)
                )
                seq += 1
                total += sval
                total_err += serr

    value = math.fsum([entry[4] for entry in heap] + [fv for fv, _ in frozen])
    err = math.fsum([entry[5] for entry in heap] + [fe for _, fe in frozen])
    return OracleResult(value, err, evaluations)
