"""Rational tensor-product spline patches with arbitrary-order derivatives.

A patch stores its control net in homogeneous (weighted) coordinates
(w*x, w*y, w*z, w).  Evaluation and differentiation run on the 4D
polynomial spline; the rational map and its partials are recovered with
the generalized quotient rule, so no finite differences enter anywhere.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ArgumentError, GeometryError, PatchParseError

MAX_DERIVATIVE_ORDER = 8
_DOMAIN_TOL = 1e-12
_MIN_JACOBIAN = 1e-14


def _find_span(knots, degree, u):
    """Index i with knots[i] <= u < knots[i+1], clamped to valid basis spans."""
    n = len(knots) - degree - 1
    span = np.searchsorted(knots, u, side="right") - 1
    return np.clip(span, degree, n - 1)


def _basis_ders(knots, degree, u, nders):
    """All nonzero B-spline basis functions and derivatives at points u.

    Returns (span, ders) where ders has shape u.shape + (nders+1, degree+1)
    and ders[..., k, r] is the k-th derivative of basis function
    N_{span-degree+r}.  Derivatives of order > degree are zero.  The dtype
    of ``u`` is preserved, so extended precision propagates if requested.
    """
    u = np.asarray(u)
    dt = u.dtype if np.issubdtype(u.dtype, np.floating) else np.float64
    knots = np.asarray(knots, dtype=dt)
    span = _find_span(knots, degree, u)
    p = degree
    shape = u.shape

    ndu = np.zeros(shape + (p + 1, p + 1), dtype=dt)
    ndu[..., 0, 0] = 1.0
    left = np.zeros(shape + (p + 1,), dtype=dt)
    right = np.zeros(shape + (p + 1,), dtype=dt)
    for j in range(1, p + 1):
        left[..., j] = u - knots[span + 1 - j]
        right[..., j] = knots[span + j] - u
        saved = np.zeros(shape)
        for r in range(j):
            ndu[..., j, r] = right[..., r + 1] + left[..., j - r]
            temp = ndu[..., r, j - 1] / ndu[..., j, r]
            ndu[..., r, j] = saved + right[..., r + 1] * temp
            saved = left[..., j - r] * temp
        ndu[..., j, j] = saved

    ders = np.zeros(shape + (nders + 1, p + 1), dtype=dt)
    ders[..., 0, :] = ndu[..., :, p]

    kmax = min(nders, p)
    a = np.zeros(shape + (2, p + 1), dtype=dt)
    for r in range(p + 1):
        s1, s2 = 0, 1
        a[..., 0, :] = 0.0
        a[..., 1, :] = 0.0
        a[..., 0, 0] = 1.0
        for k in range(1, kmax + 1):
            d = np.zeros(shape, dtype=dt)
            rk = r - k
            pk = p - k
            if r >= k:
                a[..., s2, 0] = a[..., s1, 0] / ndu[..., pk + 1, rk]
                d = a[..., s2, 0] * ndu[..., rk, pk]
            j1 = 1 if rk >= -1 else -rk
            j2 = k - 1 if r - 1 <= pk else p - r
            for j in range(j1, j2 + 1):
                a[..., s2, j] = (a[..., s1, j] - a[..., s1, j - 1]) / ndu[..., pk + 1, rk + j]
                d = d + a[..., s2, j] * ndu[..., rk + j, pk]
            if r <= pk:
                a[..., s2, k] = -a[..., s1, k - 1] / ndu[..., pk + 1, r]
                d = d + a[..., s2, k] * ndu[..., r, pk]
            ders[..., k, r] = d
            s1, s2 = s2, s1

    fac = float(p)
    for k in range(1, kmax + 1):
        ders[..., k, :] *= fac
        fac *= p - k
    return span, ders


def _validate_knots(knots, degree, label):
    knots = np.asarray(knots, dtype=float)
    if knots.ndim != 1 or len(knots) < 2 * (degree + 1):
        raise PatchParseError(f"{label}: need at least {2 * (degree + 1)} knots")
    if np.any(np.diff(knots) < 0):
        raise PatchParseError(f"{label}: knot sequence must be non-decreasing")
    _, counts = np.unique(knots, return_counts=True)
    if np.any(counts > degree + 1):
        raise PatchParseError(f"{label}: knot multiplicity exceeds degree + 1")
    return knots


@dataclass(frozen=True)
class SurfacePatch:
    """Rational tensor-product spline surface.

    ``control`` has shape (nu, nv, 4) holding (w*x, w*y, w*z, w).
    """

    degrees: tuple
    knots_u: np.ndarray
    knots_v: np.ndarray
    control: np.ndarray
    domain: tuple

    def __post_init__(self):
        p, q = self.degrees
        ku = _validate_knots(self.knots_u, p, "knots_u")
        kv = _validate_knots(self.knots_v, q, "knots_v")
        ctrl = np.asarray(self.control, dtype=float)
        if ctrl.ndim != 3 or ctrl.shape[2] != 4:
            raise PatchParseError("control net must have shape (nu, nv, 4)")
        nu, nv = ctrl.shape[:2]
        if len(ku) != nu + p + 1:
            raise PatchParseError(
                f"knots_u: expected {nu + p + 1} knots for {nu} rows of degree {p}"
            )
        if len(kv) != nv + q + 1:
            raise PatchParseError(
                f"knots_v: expected {nv + q + 1} knots for {nv} columns of degree {q}"
            )
        if np.any(ctrl[..., 3] <= 0.0):
            raise PatchParseError("non-positive weight")
        object.__setattr__(self, "knots_u", ku)
        object.__setattr__(self, "knots_v", kv)
        object.__setattr__(self, "control", ctrl)

    def contains(self, t, tol=_DOMAIN_TOL):
        (u0, u1), (v0, v1) = self.domain
        t = np.asarray(t, dtype=float)
        return (
            np.all(t[..., 0] >= u0 - tol)
            and np.all(t[..., 0] <= u1 + tol)
            and np.all(t[..., 1] >= v0 - tol)
            and np.all(t[..., 1] <= v1 + tol)
        )

    def _check_domain(self, t):
        if not self.contains(t):
            raise ArgumentError(f"parameter outside patch domain {self.domain}")

    def _homogeneous_ders(self, t, max_order):
        """Partials of the 4D spline: array t.shape[:-1] + (mo+1, mo+1, 4)."""
        t = np.asarray(t)
        if not np.issubdtype(t.dtype, np.floating):
            t = t.astype(np.float64)
        u = np.clip(t[..., 0], self.domain[0][0], self.domain[0][1])
        v = np.clip(t[..., 1], self.domain[1][0], self.domain[1][1])
        p, q = self.degrees
        span_u, du = _basis_ders(self.knots_u, p, u, max_order)
        span_v, dv = _basis_ders(self.knots_v, q, v, max_order)

        # Gather the local (p+1) x (q+1) control window per point.
        iu = span_u[..., None] - p + np.arange(p + 1)
        iv = span_v[..., None] - q + np.arange(q + 1)
        window = self.control[iu[..., :, None], iv[..., None, :], :]

        partial_u = np.einsum("...kr,...rsd->...ksd", du, window)
        return np.einsum("...ls,...ksd->...kld", dv, partial_u)

    def jacobian(self, t):
        return area_element(self, t)[0]


def eval_patch(patch, t):
    """Point(s) on the surface at parameter(s) t, shape t.shape[:-1] + (3,)."""
    patch._check_domain(t)
    h = patch._homogeneous_ders(t, 0)[..., 0, 0, :]
    return h[..., :3] / h[..., 3:4]


@dataclass(frozen=True)
class DerivativeBundle:
    """Partials D^alpha F(s) of the rational map for |alpha| <= max_order."""

    center: tuple
    max_order: int
    partials: dict = field(repr=False)

    def __getitem__(self, alpha):
        return self.partials[alpha]


def _rational_partials(h, max_order):
    """Generalized quotient rule on homogeneous partials.

    ``h`` has shape (..., mo+1, mo+1, 4); returns dict alpha -> vec3 arrays.
    """
    w = h[..., 0, 0, 3]
    out = {}
    for total in range(max_order + 1):
        for i in range(total + 1):
            j = total - i
            acc = np.array(h[..., i, j, :3], copy=True)
            for k in range(i + 1):
                for m in range(j + 1):
                    if (k, m) == (i, j):
                        continue
                    cf = math.comb(i, k) * math.comb(j, m)
                    acc = acc - cf * out[(k, m)] * h[..., i - k, j - m, 3][..., None]
            out[(i, j)] = acc / w[..., None]
    return out


def partial_derivatives(patch, s, max_order, limit=MAX_DERIVATIVE_ORDER):
    """Exact partials of the rational map at s, all |alpha| <= max_order."""
    if max_order < 1:
        raise ArgumentError("max_order must be >= 1")
    if max_order > limit:
        raise ArgumentError(f"max_order {max_order} exceeds configured limit {limit}")
    patch._check_domain(np.asarray(s, dtype=float))
    h = patch._homogeneous_ders(np.asarray(s, dtype=float), max_order)
    partials = _rational_partials(h, max_order)
    return DerivativeBundle(center=tuple(np.asarray(s, float)), max_order=max_order,
                            partials=partials)


def area_element(patch, t):
    """Surface measure J = |D1 F x D2 F| and the unit normal at t."""
    patch._check_domain(t)
    h = patch._homogeneous_ders(t, 1)
    parts = _rational_partials(h, 1)
    cross = np.cross(parts[(1, 0)], parts[(0, 1)])
    jac = np.linalg.norm(cross, axis=-1)
    if np.any(jac < _MIN_JACOBIAN):
        raise GeometryError("degenerate surface: vanishing area element")
    return jac, cross / jac[..., None]


def tangent_cross(patch, t):
    """Unnormalized normal D1 F x D2 F (J times the unit normal)."""
    h = patch._homogeneous_ders(t, 1)
    parts = _rational_partials(h, 1)
    return np.cross(parts[(1, 0)], parts[(0, 1)])


# ---------------------------------------------------------------------------
# Built-in patches


def _spheroid_matrices():
    """Control matrices of the quartic rational spheroid section."""
    s3 = math.sqrt(3.0)
    s2 = math.sqrt(2.0)
    s6 = math.sqrt(6.0)
    c1 = 4.0 * (s3 - 1.0)
    c2 = s2
    c3 = s2 * (4.0 - s3)
    c4 = 4.0 * (2.0 * s3 - 1.0) / 3.0
    c5 = (3.0 * s3 - 2.0) / 2.0
    c6 = s2 * (7.0 - 2.0 * s3) / 3.0
    c7 = (s3 + 6.0) / 2.0
    c8 = 5.0 * s6 / 3.0
    c9 = 4.0 * (5.0 - s3) / 3.0
    w1 = 4.0 * (3.0 - s3)
    w2 = s2 * (3.0 * s3 - 2.0)
    w3 = s2 * (s3 + 6.0) / 3.0
    w4 = 4.0 * (5.0 * s3 - 1.0) / 9.0

    cx = 1.5 * np.array(
        [
            [-c1, -c3, -c4, -c3, -c1],
            [-c2, -c5, -c6, -c5, -c2],
            [0.0, 0.0, 0.0, 0.0, 0.0],
            [c2, c5, c6, c5, c2],
            [c1, c3, c4, c3, c1],
        ]
    )
    cy = -2.0 * np.array(
        [
            [c1, c3, c4, c3, c1],
            [c3, c7, c8, c7, c3],
            [c4, c8, c9, c8, c4],
            [c3, c7, c8, c7, c3],
            [c1, c3, c4, c3, c1],
        ]
    )
    cz = np.array(
        [
            [-c1, -c2, 0.0, c2, c1],
            [-c3, -c5, 0.0, c5, c3],
            [-c4, -c6, 0.0, c6, c4],
            [-c3, -c5, 0.0, c5, c3],
            [-c1, -c2, 0.0, c2, c1],
        ]
    )
    cw = np.array(
        [
            [w1, w2, c9, w2, w1],
            [w2, c7, w3, c7, w2],
            [c9, w3, w4, w3, c9],
            [w2, c7, w3, c7, w2],
            [w1, w2, c9, w2, w1],
        ]
    )
    return cx, cy, cz, cw


def builtin_spheroid():
    """Quartic rational patch covering a section of a spheroid on [0,1]^2."""
    cx, cy, cz, cw = _spheroid_matrices()
    control = np.stack([cx, cy, cz, cw], axis=-1)
    knots = np.array([0.0] * 5 + [1.0] * 5)
    return SurfacePatch(
        degrees=(4, 4),
        knots_u=knots,
        knots_v=knots.copy(),
        control=control,
        domain=((0.0, 1.0), (0.0, 1.0)),
    )


def builtin_flat(domain=((0.0, 1.0), (0.0, 1.0))):
    """Planar patch F(t) = (t1, t2, 0) over the given rectangle."""
    (u0, u1), (v0, v1) = domain
    if not (u1 > u0 and v1 > v0):
        raise ArgumentError("flat patch domain must have positive extent")
    control = np.zeros((2, 2, 4))
    for i, uu in enumerate((u0, u1)):
        for j, vv in enumerate((v0, v1)):
            control[i, j] = (uu, vv, 0.0, 1.0)
    return SurfacePatch(
        degrees=(1, 1),
        knots_u=np.array([u0, u0, u1, u1], dtype=float),
        knots_v=np.array([v0, v0, v1, v1], dtype=float),
        control=control,
        domain=((float(u0), float(u1)), (float(v0), float(v1))),
    )


BUILTIN_PATCHES = {
    "spheroid": builtin_spheroid,
    "flat": builtin_flat,
}


# ---------------------------------------------------------------------------
# Patch files


def patch_to_dict(patch):
    nu, nv = patch.control.shape[:2]
    return {
        "degrees": list(patch.degrees),
        "knots_u": list(map(float, patch.knots_u)),
        "knots_v": list(map(float, patch.knots_v)),
        "points": [list(map(float, pt)) for pt in patch.control.reshape(nu * nv, 4)],
        "shape": [nu, nv],
        "domain": [list(map(float, patch.domain[0])), list(map(float, patch.domain[1]))],
    }


def save_patch(patch, path):
    with open(path, "w") as fh:
        json.dump(patch_to_dict(patch), fh, indent=1)


def patch_from_dict(data):
    for key in ("degrees", "knots_u", "knots_v", "points", "domain"):
        if key not in data:
            raise PatchParseError(f"missing field '{key}'")
    degrees = tuple(int(d) for d in data["degrees"])
    if len(degrees) != 2 or min(degrees) < 1:
        raise PatchParseError("field 'degrees' must be two integers >= 1")
    knots_u = np.asarray(data["knots_u"], dtype=float)
    knots_v = np.asarray(data["knots_v"], dtype=float)
    points = np.asarray(data["points"], dtype=float)
    if points.ndim != 2 or points.shape[1] != 4:
        raise PatchParseError("field 'points' must be rows of [x, y, z, w]")
    if "shape" in data:
        nu, nv = (int(x) for x in data["shape"])
    else:
        nu = len(knots_u) - degrees[0] - 1
        nv = len(knots_v) - degrees[1] - 1
    if nu * nv != len(points):
        raise PatchParseError(
            f"expected {nu}*{nv} control points, file has {len(points)}"
        )
    dom = data["domain"]
    try:
        domain = ((float(dom[0][0]), float(dom[0][1])),
                  (float(dom[1][0]), float(dom[1][1])))
    except (TypeError, IndexError) as exc:
        raise PatchParseError("field 'domain' must be [[u0,u1],[v0,v1]]") from exc
    return SurfacePatch(
        degrees=degrees,
        knots_u=knots_u,
        knots_v=knots_v,
        control=points.reshape(nu, nv, 4),
        domain=domain,
    )


def load_patch(path):
    """Read a patch from its JSON file, validating the schema."""
    try:
        with open(path) as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise PatchParseError(f"{path}: invalid JSON ({exc})") from exc
    try:
        return patch_from_dict(data)
    except PatchParseError as exc:
        raise PatchParseError(f"{path}: {exc}") from exc


def resolve_patch(spec):
    """Accept a builtin name, a file path, or an already-built patch."""
    if isinstance(spec, SurfacePatch):
        return spec
    if spec in BUILTIN_PATCHES:
        return BUILTIN_PATCHES[spec]()
    return load_patch(spec)
