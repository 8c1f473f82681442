"""Algebra of bivariate polynomials and formal sums of R-power terms.

Everything downstream (kernel expansions, regularization residuals,
analytic integrals) is built from formal sums

    S(z) = sum_l  R(z)^{p_l} * P_l(z),

where ``R(z) = sqrt(a z1^2 + b z1 z2 + c z2^2)`` comes from a positive
definite quadratic form and the ``P_l`` are bivariate polynomials.  The
exponents ``p_l`` are integers (odd for everything that ever gets
integrated).  Coefficients are plain binary64 floats; there is no exact
rational arithmetic here, and no simplification beyond merging like terms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError, SingularEvaluationError

# A multi-index alpha = (a1, a2) is a plain tuple of non-negative ints.
MultiIndex = tuple

_ZERO_TOL = 0.0  # like-term merging drops exact zeros only


class Poly2:
    """Sparse bivariate polynomial ``sum c[(i, j)] x^i y^j``.

    Keys are multi-indices, values are floats.  Instances are treated as
    immutable; all operations return new polynomials.
    """

    __slots__ = ("coeffs",)

    def __init__(self, coeffs=None):
        cleaned = {}
        for key, val in (coeffs or {}).items():
            i, j = key
            if i < 0 or j < 0:
                raise ArgumentError(f"negative exponent in monomial {key}")
            val = float(val)
            if val != _ZERO_TOL:
                cleaned[(int(i), int(j))] = val
        self.coeffs = cleaned

    @classmethod
    def zero(cls):
        return cls()

    @classmethod
    def one(cls):
        return cls({(0, 0): 1.0})

    @classmethod
    def monomial(cls, i, j, coef=1.0):
        return cls({(i, j): coef})

    @classmethod
    def homogeneous(cls, degree, coeffs):
        """Build a homogeneous polynomial, validating every key degree."""
        for key in coeffs:
            if key[0] + key[1] != degree:
                raise ArgumentError(
                    f"monomial {key} has degree {key[0] + key[1]}, expected {degree}"
                )
        return cls(coeffs)

    def is_zero(self):
        return not self.coeffs

    def degree(self):
        """Total degree; -1 for the zero polynomial."""
        if not self.coeffs:
            return -1
        return max(i + j for i, j in self.coeffs)

    def min_degree(self):
        if not self.coeffs:
            return -1
        return min(i + j for i, j in self.coeffs)

    def is_homogeneous(self):
        return self.degree() == self.min_degree()

    def __add__(self, other):
        if isinstance(other, (int, float)):
            other = Poly2({(0, 0): other})
        out = dict(self.coeffs)
        for key, val in other.coeffs.items():
            s = out.get(key, 0.0) + val
            if s == 0.0:
                out.pop(key, None)
            else:
                out[key] = s
        return Poly2(out)

    __radd__ = __add__

    def __neg__(self):
        return Poly2({k: -v for k, v in self.coeffs.items()})

    def __sub__(self, other):
        if isinstance(other, (int, float)):
            other = Poly2({(0, 0): other})
        return self + (-other)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return self.scaled(other)
        out = {}
        for (i1, j1), v1 in self.coeffs.items():
            for (i2, j2), v2 in other.coeffs.items():
                key = (i1 + i2, j1 + j2)
                out[key] = out.get(key, 0.0) + v1 * v2
        return Poly2(out)

    __rmul__ = __mul__

    def scaled(self, s):
        s = float(s)
        if s == 0.0:
            return Poly2()
        return Poly2({k: v * s for k, v in self.coeffs.items()})

    def shifted(self, di, dj):
        """Multiply by the monomial x^di y^dj."""
        return Poly2({(i + di, j + dj): v for (i, j), v in self.coeffs.items()})

    def diff(self, axis):
        out = {}
        for (i, j), v in self.coeffs.items():
            if axis == 0 and i > 0:
                out[(i - 1, j)] = out.get((i - 1, j), 0.0) + i * v
            elif axis == 1 and j > 0:
                out[(i, j - 1)] = out.get((i, j - 1), 0.0) + j * v
        return Poly2(out)

    def subst_axis_affine(self, x0, sx, y0, sy):
        """Compose with the axis-aligned affine map (x, y) -> (x0 + sx*x, y0 + sy*y)."""
        out = Poly2()
        for (i, j), v in self.coeffs.items():
            px = _binomial_power(x0, sx, i)
            py = _binomial_power(y0, sy, j)
            term = {}
            for m, cm in px:
                for n, cn in py:
                    key = (m, n)
                    term[key] = term.get(key, 0.0) + v * cm * cn
            out = out + Poly2(term)
        return out

    def __call__(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        total = np.zeros(np.broadcast(x, y).shape)
        for (i, j), v in self.coeffs.items():
            total = total + v * x**i * y**j
        if total.ndim == 0:
            return float(total)
        return total

    def __eq__(self, other):
        if not isinstance(other, Poly2):
            return NotImplemented
        return self.coeffs == other.coeffs

    def __hash__(self):
        return hash(frozenset(self.coeffs.items()))

    def __repr__(self):
        if not self.coeffs:
            return "Poly2(0)"
        parts = [
            f"{v:+g} x^{i} y^{j}"
            for (i, j), v in sorted(self.coeffs.items())
        ]
        return "Poly2(" + " ".join(parts) + ")"


def _binomial_power(c0, c1, n):
    """Coefficients of (c0 + c1*t)^n as a list of (power-of-t, coefficient)."""
    out = []
    for k in range(n + 1):
        coef = math.comb(n, k) * c0 ** (n - k) * c1**k
        if coef != 0.0:
            out.append((k, coef))
    return out


def homopoly_mul(p, q):
    """Product of two homogeneous polynomials (degree adds)."""
    if not (p.is_zero() or p.is_homogeneous()) or not (q.is_zero() or q.is_homogeneous()):
        raise ArgumentError("homopoly_mul expects homogeneous factors")
    return p * q


@dataclass(frozen=True)
class QuadraticForm:
    """Positive definite form (a, b, c) defining R = sqrt(a x^2 + b x y + c y^2)."""

    a: float
    b: float
    c: float

    def __post_init__(self):
        if not (self.a > 0.0 and self.c > 0.0):
            raise ArgumentError("quadratic form needs a > 0 and c > 0")
        if self.discriminant <= 0.0:
            raise ArgumentError(
                f"form ({self.a}, {self.b}, {self.c}) is not positive definite"
            )

    @property
    def discriminant(self):
        return 4.0 * self.a * self.c - self.b * self.b

    def value(self, x, y):
        return self.a * x * x + self.b * x * y + self.c * y * y

    def radius(self, x, y):
        return np.sqrt(self.value(x, y))


class RTermSum:
    """Formal sum ``sum_l R^{p_l} P_l`` over a fixed quadratic form.

    Terms sharing an exponent are merged by polynomial addition, so a
    stored polynomial is in general inhomogeneous.  Terms whose polynomial
    vanishes are dropped.
    """

    __slots__ = ("form", "terms")

    def __init__(self, form, terms=()):
        merged = {}
        for p, poly in terms:
            p = int(p)
            if poly.is_zero():
                continue
            merged[p] = merged.get(p, Poly2()) + poly
        self.form = form
        self.terms = tuple(
            (p, poly) for p, poly in sorted(merged.items()) if not poly.is_zero()
        )

    def is_zero(self):
        return not self.terms

    def zeta(self):
        """min over stored monomials of p + i + j; +inf for the empty sum."""
        if not self.terms:
            return math.inf
        return min(
            p + i + j for p, poly in self.terms for (i, j) in poly.coeffs
        )

    def __add__(self, other):
        if other.form != self.form:
            raise ArgumentError("cannot add sums over different forms")
        return RTermSum(self.form, self.terms + other.terms)

    def scaled(self, s):
        return RTermSum(self.form, [(p, poly.scaled(s)) for p, poly in self.terms])

    def derivative(self, axis):
        """Partial derivative, term by term.

        d/dx (R^p P) = R^(p-2) * (p*(a x + b/2 y) P + R^2 dP/dx), and the
        symmetric rule in y.  Each output term has zeta exactly one lower.
        """
        a, b, c = self.form.a, self.form.b, self.form.c
        r2 = Poly2({(2, 0): a, (1, 1): b, (0, 2): c})
        if axis == 0:
            half_grad = Poly2({(1, 0): a, (0, 1): b / 2.0})
        else:
            half_grad = Poly2({(1, 0): b / 2.0, (0, 1): c})
        out = []
        for p, poly in self.terms:
            out.append((p - 2, half_grad * poly.scaled(p) + r2 * poly.diff(axis)))
        return RTermSum(self.form, out)

    def eval(self, z1, z2):
        z1 = np.asarray(z1, dtype=float)
        z2 = np.asarray(z2, dtype=float)
        r2 = self.form.value(z1, z2)
        if any(p < 0 for p, _ in self.terms) and np.any(r2 == 0.0):
            raise SingularEvaluationError(
                "sum with negative R powers evaluated at the singular point"
            )
        r = np.sqrt(r2)
        total = np.zeros(np.broadcast(z1, z2).shape)
        for p, poly in self.terms:
            total = total + r**p * poly(z1, z2)
        if total.ndim == 0:
            return float(total)
        return total

    def __repr__(self):
        body = " + ".join(f"R^{p}*({poly!r})" for p, poly in self.terms)
        return f"RTermSum[{body or '0'}]"


def zeta(obj):
    """Smoothness exponent of a term sum (or of a single (p, poly) pair)."""
    if isinstance(obj, RTermSum):
        return obj.zeta()
    p, poly = obj
    if poly.is_zero():
        return math.inf
    return min(p + i + j for (i, j) in poly.coeffs)


def eval_rterm_sum(sum_, z):
    """Evaluate an RTermSum at a point (or array of points) z = (z1, z2)."""
    z = np.asarray(z, dtype=float)
    return sum_.eval(z[..., 0], z[..., 1])


def generalized_binomial(exponent, j):
    """Binomial coefficient C(exponent, j) for real exponent."""
    out = 1.0
    for m in range(j):
        out *= (exponent - m) / (m + 1)
    return out


def binomial_sqrt_series_graded(head, tail, exponent, n):
    """Graded components of (R^2 + P_3 + P_4 + ...)^exponent.

    ``head`` supplies R^2, ``tail[k]`` is the homogeneous polynomial of
    degree k + 3, and the expansion runs through
    (R^2)^exponent * (1 + u)^exponent with u = (P_3 + P_4 + ...) / R^2.

    Returns a list of ``n`` RTermSum values; entry ``l`` (0-based) collects
    every product whose homogeneity grade is ``l``, so its zeta value is
    exactly ``2*exponent + l``.
    """
    if n < 1:
        raise ArgumentError("series needs n >= 1 terms")
    if exponent not in (-0.5, -1.5):
        raise ArgumentError("exponent must be -1/2 or -3/2")
    for k, poly in enumerate(tail):
        if not poly.is_zero():
            if not poly.is_homogeneous() or poly.degree() != k + 3:
                raise ArgumentError(
                    f"tail[{k}] must be homogeneous of degree {k + 3}"
                )
    two_e = int(round(2 * exponent))  # odd integer: R^{2e} has exponent two_e

    # u^j by grade: maps grade -> {rpow: Poly2}, with rpow relative to R^{2e}.
    u = {}
    for k, poly in enumerate(tail):
        if not poly.is_zero():
            u[k + 1] = {-2: poly}

    power = {0: {0: Poly2.one()}}  # u^0
    acc = [dict() for _ in range(n)]  # acc[grade][rpow] -> Poly2

    def _accumulate(power_j, coef):
        for grade, by_rpow in power_j.items():
            if grade >= n:
                continue
            slot = acc[grade]
            for rpow, poly in by_rpow.items():
                scaled = poly.scaled(coef)
                slot[rpow] = slot.get(rpow, Poly2()) + scaled

    _accumulate(power, generalized_binomial(exponent, 0))
    for j in range(1, n):
        nxt = {}
        for g1, by1 in power.items():
            for g2, by2 in u.items():
                g = g1 + g2
                if g >= n:
                    continue
                slot = nxt.setdefault(g, {})
                for r1, p1 in by1.items():
                    for r2, p2 in by2.items():
                        rp = r1 + r2
                        slot[rp] = slot.get(rp, Poly2()) + p1 * p2
        power = nxt
        if not power:
            break
        _accumulate(power, generalized_binomial(exponent, j))

    graded = []
    for grade in range(n):
        terms = [(rpow + two_e, poly) for rpow, poly in acc[grade].items()]
        graded.append(RTermSum(head, terms))
    return graded


def binomial_sqrt_series(head, tail, exponent, n):
    """Truncated expansion of (R^2 + P_3 + ...)^exponent, first n graded terms."""
    graded = binomial_sqrt_series_graded(head, tail, exponent, n)
    total = RTermSum(head)
    for g in graded:
        total = total + g
    return total
