"""Truncated series expansions of the layer-potential kernels.

For a source point s on the patch, the exact kernels in local parametric
offsets z = s - t are

    G_s(z)    = 1 / (4 pi |F(s) - F(t)|)
    Hbar_s(z) = (F(s) - F(t)) . (D1 F(t) x D2 F(t)) / (4 pi |F(s) - F(t)|^3)

Both admit graded expansions in sums of R^p * (homogeneous polynomial)
driven by the Taylor coefficients of the geometry map at s.  Truncating
after n graded terms yields an approximant whose difference (or ratio)
with the exact kernel gains one order of smoothness per extra term.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (
    ArgumentError,
    DivisionGuardError,
    GeometryError,
    SingularEvaluationError,
)
from .geometry import eval_patch, partial_derivatives, tangent_cross
from .series import (
    Poly2,
    QuadraticForm,
    RTermSum,
    binomial_sqrt_series_graded,
)

FOUR_PI = 4.0 * math.pi


@dataclass(frozen=True)
class SourceContext:
    """Geometry-derived expansion data at one source point.

    ``a_coeffs[alpha]`` are the signed Taylor vectors of the map,
    ``c_coeffs[alpha]`` expand |F(s) - F(t)|^2, and ``d_coeffs[alpha]``
    expand the numerator of the Jacobian-weighted double-layer kernel.
    d is kept for |alpha| = 1 as well; those entries vanish analytically
    and are exposed so the cancellation can be checked.
    """

    patch: object
    s: tuple
    order: int
    bundle: object = field(repr=False)
    a_coeffs: dict = field(repr=False)
    c_coeffs: dict = field(repr=False)
    d_coeffs: dict = field(repr=False)

    @property
    def form(self):
        return QuadraticForm(
            self.c_coeffs[(2, 0)], self.c_coeffs[(1, 1)], self.c_coeffs[(0, 2)]
        )

    def c_poly(self, degree):
        return Poly2.homogeneous(
            degree,
            {a: self.c_coeffs[a] for a in _indices(degree) if a in self.c_coeffs},
        )

    def d_poly(self, degree):
        return Poly2.homogeneous(
            degree,
            {a: self.d_coeffs[a] for a in _indices(degree) if a in self.d_coeffs},
        )


def _indices(total):
    return [(i, total - i) for i in range(total + 1)]


def _det3(u, v, w):
    return (
        u[0] * (v[1] * w[2] - v[2] * w[1])
        - u[1] * (v[0] * w[2] - v[2] * w[0])
        + u[2] * (v[0] * w[1] - v[1] * w[0])
    )


def build_context(patch, s, order):
    """Taylor data of the squared-distance and numerator expansions at s."""
    if order < 2:
        raise ArgumentError("expansion order must be >= 2")
    bundle = partial_derivatives(patch, s, order)

    a = {}
    for (i, j), der in bundle.partials.items():
        total = i + j
        if total < 1:
            continue
        a[(i, j)] = ((-1.0) ** total / (math.factorial(i) * math.factorial(j))) * der

    c = {}
    for total in range(2, order + 1):
        for alpha in _indices(total):
            acc = 0.0
            for b1 in range(alpha[0] + 1):
                for b2 in range(alpha[1] + 1):
                    beta = (b1, b2)
                    gamma = (alpha[0] - b1, alpha[1] - b2)
                    if b1 + b2 < 1 or gamma[0] + gamma[1] < 1:
                        continue
                    acc += float(np.dot(a[beta], a[gamma]))
            c[alpha] = acc

    d = {}
    for total in range(1, order + 1):
        for alpha in _indices(total):
            acc = 0.0
            for b1 in range(alpha[0] + 1):
                for b2 in range(alpha[1] + 1):
                    if b1 + b2 < 1:
                        continue
                    beta = (b1, b2)
                    rest = (alpha[0] - b1, alpha[1] - b2)
                    for g1 in range(rest[0] + 1):
                        for g2 in range(rest[1] + 1):
                            gamma = (g1, g2)
                            delta = (rest[0] - g1, rest[1] - g2)
                            du = (gamma[0] + 1, gamma[1])
                            dv = (delta[0], delta[1] + 1)
                            if du not in a or dv not in a:
                                continue
                            acc += _det3(
                                a[beta],
                                (gamma[0] + 1) * a[du],
                                (delta[1] + 1) * a[dv],
                            )
            d[alpha] = -acc

    if 4.0 * c[(2, 0)] * c[(0, 2)] - c[(1, 1)] ** 2 <= 0.0 or c[(2, 0)] <= 0.0:
        raise GeometryError("first fundamental form is not positive definite at s")
    return SourceContext(
        patch=patch,
        s=tuple(float(v) for v in s),
        order=order,
        bundle=bundle,
        a_coeffs=a,
        c_coeffs=c,
        d_coeffs=d,
    )


@dataclass(frozen=True)
class TruncatedKernel:
    """First n graded terms of a singular kernel about its source point.

    ``m1``/``m2`` fix the exponent pattern R^(-2(l+m1)+1) * P_(3l+m2); the
    overall smoothness index is m = -2*m1 + m2 + 2.  The 1/(4 pi) kernel
    prefactor is folded into the stored polynomials.
    """

    family: str
    source: tuple
    n: int
    m1: int
    m2: int
    sum: RTermSum
    graded: tuple = field(repr=False)
    correction_eta: float | None = None

    def __post_init__(self):
        m = self.m
        if not self.sum.is_zero() and self.sum.zeta() != m:
            raise ArgumentError(
                f"kernel sum has zeta {self.sum.zeta()}, expected m = {m}"
            )

    @property
    def m(self):
        return -2 * self.m1 + self.m2 + 2

    def with_eta(self, eta):
        return replace(self, correction_eta=eta)

    def eval(self, z):
        z = np.asarray(z, dtype=float)
        return self.sum.eval(z[..., 0], z[..., 1])


def expand_G(ctx, n):
    """Truncated single-layer kernel about ctx.s with n graded terms."""
    if n < 1:
        raise ArgumentError("need n >= 1 series terms")
    if ctx.order < n + 2:
        raise ArgumentError(
            f"context order {ctx.order} too low for n = {n} (need >= {n + 2})"
        )
    head = ctx.form
    tail = [ctx.c_poly(k + 3) for k in range(max(0, n - 1))]
    graded = binomial_sqrt_series_graded(head, tail, -0.5, n)
    graded = tuple(g.scaled(1.0 / FOUR_PI) for g in graded)
    total = RTermSum(head)
    for g in graded:
        total = total + g
    return TruncatedKernel(
        family="g", source=ctx.s, n=n, m1=0, m2=-3, sum=total, graded=graded
    )


def expand_H(ctx, n):
    """Truncated Jacobian-weighted double-layer kernel, n graded terms."""
    if n < 1:
        raise ArgumentError("need n >= 1 series terms")
    if ctx.order < n + 2:
        raise ArgumentError(
            f"context order {ctx.order} too low for n = {n} (need >= {n + 2})"
        )
    head = ctx.form
    tail = [ctx.c_poly(k + 3) for k in range(max(0, n - 1))]
    denom = binomial_sqrt_series_graded(head, tail, -1.5, n)
    # numerator grades: Q_(g+2) has polynomial degree g + 2, starting at g = 0
    numer = [ctx.d_poly(g + 2) for g in range(n)]
    graded = []
    for ell in range(1, n + 1):
        acc = RTermSum(head)
        for gn in range(0, ell):
            dpart = denom[ell - gn - 1]
            qpoly = numer[gn]
            if qpoly.is_zero():
                continue
            acc = acc + RTermSum(
                head, [(p, poly * qpoly) for p, poly in dpart.terms]
            )
        graded.append(acc.scaled(1.0 / FOUR_PI))
    total = RTermSum(head)
    for g in graded:
        total = total + g
    return TruncatedKernel(
        family="hbar", source=ctx.s, n=n, m1=1, m2=-1, sum=total, graded=tuple(graded)
    )


def make_generic_kernel(source, n, m1, m2, graded, eta=None):
    """Assemble a generic truncated kernel from explicit graded terms."""
    if n < 1 or len(graded) != n:
        raise ArgumentError("graded terms must supply exactly n entries")
    if m1 < 0 or m2 < -3:
        raise ArgumentError("need m1 >= 0 and m2 >= -3")
    total = RTermSum(graded[0].form)
    for g in graded:
        total = total + g
    return TruncatedKernel(
        family="generic", source=tuple(source), n=n, m1=m1, m2=m2,
        sum=total, graded=tuple(graded), correction_eta=eta,
    )


def truncated_kernel(patch, family, s, n, eta=None):
    """Build the truncated kernel for a family name ('g' or 'hbar')."""
    ctx = build_context(patch, s, n + 2)
    if family == "g":
        trunc = expand_G(ctx, n)
    elif family == "hbar":
        trunc = expand_H(ctx, n)
    else:
        raise ArgumentError(f"unknown kernel family {family!r}")
    return trunc.with_eta(eta) if eta is not None else trunc


def eval_exact_kernel(patch, family, s, t, dtype=np.float64):
    """Exact kernel value(s) between source s and field point(s) t.

    Passing ``dtype=np.longdouble`` evaluates the geometry in extended
    precision, which matters when t approaches s and the chord F(s)-F(t)
    loses digits to cancellation.
    """
    s = np.asarray(s, dtype=dtype)
    t = np.asarray(t, dtype=dtype)
    xs = eval_patch(patch, s)
    yt = eval_patch(patch, t)
    diff = xs - yt
    dist = np.linalg.norm(diff, axis=-1)
    if np.any(dist == 0.0):
        raise SingularEvaluationError("kernel evaluated at coincident points")
    if family == "g":
        return 1.0 / (FOUR_PI * dist)
    if family == "hbar":
        cross = tangent_cross(patch, t)
        return np.sum(diff * cross, axis=-1) / (FOUR_PI * dist**3)
    raise ArgumentError(f"unknown kernel family {family!r}")


def exact_kernel_evaluator(patch, family, s, dtype=np.float64):
    """Vectorized z -> K_s(z) with z the local offset s - t."""
    s = np.asarray(s, dtype=dtype)

    def evaluate(z):
        z = np.asarray(z, dtype=dtype)
        return eval_exact_kernel(patch, family, s, s - z, dtype=dtype)

    return evaluate


def regularized(kernel_exact, trunc, mode, z):
    """Pointwise regularized kernel: subtraction residual or division ratio.

    At z = 0 the removable-singularity values are used (0 for subtraction
    when m + n >= 1, 1 for division).  ``kernel_exact`` maps offsets z to
    exact kernel values.
    """
    z = np.asarray(z, dtype=float)
    scalar = z.ndim == 1
    zz = z[None, :] if scalar else z
    r2 = zz[..., 0] ** 2 + zz[..., 1] ** 2
    at_origin = r2 == 0.0
    out = np.empty(zz.shape[:-1])

    if mode == "subtract":
        if np.any(at_origin) and trunc.m + trunc.n < 1:
            raise ArgumentError(
                "subtraction residual has no finite origin value for m + n < 1"
            )
        fill = 0.0
    elif mode == "divide":
        check_division_guard(trunc)
        fill = 1.0
    else:
        raise ArgumentError(f"unknown regularization mode {mode!r}")

    regular_pts = zz[~at_origin]
    if regular_pts.size:
        exact = np.asarray(kernel_exact(regular_pts), dtype=float)
        approx = trunc.eval(regular_pts)
        if mode == "subtract":
            vals = exact - approx
        else:
            eta = trunc.correction_eta or 0.0
            den = approx + eta * np.sum(regular_pts**2, axis=-1)
            if np.any(den == 0.0):
                raise DivisionGuardError(
                    "truncated kernel vanished inside the domain; supply a "
                    "correction eta (same sign as the exact kernel)"
                )
            vals = exact / den
        out[~at_origin] = vals
    out[at_origin] = fill
    return float(out[0]) if scalar else out


def check_division_guard(trunc):
    """Sign-indefinite kernels may only be divided with an explicit eta."""
    if trunc.family == "hbar" and trunc.correction_eta is None:
        raise DivisionGuardError(
            "division regularization for the sign-indefinite double-layer "
            "kernel requires an explicit correction eta"
        )
