"""Closed-form antiderivatives and definite integrals of R^p x^q y^r.

The integrand family is R(a,b,c,(x,y))^p x^q y^r with p a negative odd
integer and q, r non-negative integers.  Indefinite integrals are built
symbolically as sparse sums of four kinds of atoms,

    R^k x^i y^j
    x^i y^j * log(2 sqrt(a) R + 2 a x + b y)
    x^i y^j * log(2 sqrt(c) R + 2 c y + b x)
    x^i y^j * (quotient logs, only for non-integrable exponent combinations)

with recursions that lower q and raise p until the explicit border cases
are reached.  Definite integrals over an origin-cornered rectangle come
from the antiderivative at the four corners; integrals over the reference
triangle additionally use the one-variable antiderivative along the edge
x = 1 - y, which lives in a substituted ("hatted") quadratic form.

Coefficients may be numpy arrays, which lets a whole (b, c) grid of forms
be processed in one pass when lookup tables are precomputed.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError, DivergentIntegralError
from .series import Poly2, QuadraticForm, RTermSum

_CONDITION_WARN_RATIO = 1e12


def _is_number(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _add(dst, key, coef):
    if _is_number(coef) and coef == 0.0:
        return
    if key in dst:
        dst[key] = dst[key] + coef
        if _is_number(dst[key]) and dst[key] == 0.0:
            del dst[key]
    else:
        dst[key] = coef


def _merge(dst, src, scale=1.0):
    for key, coef in src.items():
        _add(dst, key, coef * scale if not (_is_number(scale) and scale == 1.0) else coef)


def _shift(terms, di, dj, scale=1.0):
    """Multiply every atom by scale * x^di y^dj."""
    out = {}
    for key, coef in terms.items():
        kind = key[0]
        if kind == "P":
            _, k, i, j = key
            nk = ("P", k, i + di, j + dj)
        else:
            _, i, j = key
            nk = (kind, i + di, j + dj)
        _add(out, nk, coef * scale)
    return out


def _swap_axes(terms):
    """Exchange the roles of x and y (used to derive y-antiderivatives)."""
    flip = {"LX": "LY", "LY": "LX", "LQX": "LQY", "LQY": "LQX"}
    out = {}
    for key, coef in terms.items():
        if key[0] == "P":
            _, k, i, j = key
            out[("P", k, j, i)] = coef
        else:
            kind, i, j = key
            out[(flip[kind], j, i)] = coef
    return out


class _FormContext:
    """Recursion workspace bound to one quadratic form (a, b, c).

    Coefficients are scalars or broadcastable numpy arrays.  Instances
    memoize the one-variable antiderivatives they build.
    """

    def __init__(self, a, b, c):
        self.a = a
        self.b = b
        self.c = c
        self.disc = 4.0 * a * c - b * b
        self.sqrt_a = np.sqrt(a) if not _is_number(a) else math.sqrt(a)
        self._anti_x = {}
        self._swapped = None
        self._edge_data = {}

    @property
    def swapped(self):
        if self._swapped is None:
            self._swapped = _FormContext(self.c, self.b, self.a)
        return self._swapped

    # -- one-variable antiderivative in x of R^p x^q (y is a parameter) ----

    def anti_x(self, p, q):
        key = (p, q)
        hit = self._anti_x.get(key)
        if hit is not None:
            return hit
        if p >= 0 or p % 2 == 0:
            raise ArgumentError("R exponent must be a negative odd integer")
        out = self._build_anti_x(p, q)
        self._anti_x[key] = out
        return out

    def _build_anti_x(self, p, q):
        a, b, c = self.a, self.b, self.c
        out = {}
        if q == 0 and p == -1:
            _add(out, ("LX", 0, 0), 1.0 / self.sqrt_a)
        elif q >= 1 and p == -1:
            poly, cq = self._edge_recursion(q - 1)
            for (i, j), coef in poly.items():
                _add(out, ("P", 1, i, j), coef)
            _add(out, ("LX", 0, q), cq / self.sqrt_a)
        elif q == 0:  # p <= -3
            scale = 2.0 / (self.disc * (p + 2))
            if 2 * p + 6 != 0:
                _merge(out, _shift(self.anti_x(p + 2, 0), 0, -2), a * (2 * p + 6) * scale)
            _add(out, ("P", p + 2, 1, -2), -2.0 * a * scale)
            _add(out, ("P", p + 2, 0, -1), -b * scale)
        elif q == 1:  # p <= -3
            _add(out, ("P", p + 2, 0, 0), 1.0 / (a * (p + 2)))
            _merge(out, _shift(self.anti_x(p, 0), 0, 1), -b / (2.0 * a))
        elif q >= 2:  # p <= -3
            _merge(out, self.anti_x(p + 2, q - 2), 1.0 / a)
            _merge(out, _shift(self.anti_x(p, q - 1), 0, 1), -b / a)
            _merge(out, _shift(self.anti_x(p, q - 2), 0, 2), -c / a)
        elif q == -1:
            if p == -1:
                _add(out, ("LQX", 0, 0), 1.0)
            else:
                upper = {}
                _merge(upper, self.anti_x(p + 2, -1))
                _merge(upper, self.anti_x(p, 1), -a)
                _merge(upper, _shift(self.anti_x(p, 0), 0, 1), -b)
                _merge(out, _shift(upper, 0, -2), 1.0 / c)
        else:  # q <= -2
            inv = 1.0 / (q + 1)
            _add(out, ("P", p, q + 1, 0), inv)
            _merge(out, self.anti_x(p - 2, q + 2), -p * a * inv)
            _merge(out, _shift(self.anti_x(p - 2, q + 1), 0, 1), -p * b * inv / 2.0)
        return out

    def _edge_recursion(self, q):
        """Polynomial/constant pair (P_q, C_q) of the p = -1 border case."""
        a, b, c = self.a, self.b, self.c
        polys = [{}, {(0, 0): 1.0 / a}]          # P_{-1}, P_0
        consts = [1.0, -b / (2.0 * a)]           # C_{-1}, C_0
        for m in range(1, q + 1):
            scale = 1.0 / (a * (m + 1))
            poly = {}
            _add(poly, (m, 0), scale)
            _merge(poly, _shift_poly(polys[m], 0, 1), -b * (2 * m + 1) / 2.0 * scale)
            _merge(poly, _shift_poly(polys[m - 1], 0, 2), -c * m * scale)
            polys.append(poly)
            consts.append(
                (-b * (2 * m + 1) / 2.0 * consts[m] - c * m * consts[m - 1]) * scale
            )
        return polys[q + 1], consts[q + 1]

    def anti_y(self, p, r):
        """One-variable antiderivative in y of R^p y^r (x is a parameter)."""
        return _swap_axes(self.swapped.anti_x(p, r))

    # -- outer integration in y ------------------------------------------

    def integrate_y(self, terms):
        out = {}
        work = []
        for key, coef in terms.items():
            if key[0] == "P":
                _, k, i, j = key
                work.extend(self._demoted(k, i, j, coef))
            elif key[0] == "LX":
                work.append((key, coef))
            else:
                raise ArgumentError(f"cannot integrate atom kind {key[0]} in y")
        for key, coef in work:
            if key[0] == "P":
                _, k, i, j = key
                _merge(out, _shift(self.anti_y(k, j), i, 0), coef)
            else:
                _, i, j = key
                if j < 0:
                    raise DivergentIntegralError(
                        "logarithmic atom with negative power: no closed form"
                    )
                inv = 1.0 / (j + 1)
                _add(out, ("LX", i, j + 1), coef * inv)
                _add(out, ("P", 0, i, j + 1), -coef * inv * inv)
                _merge(out, _shift(self.anti_y(-1, j), i + 1, 0),
                       coef * self.sqrt_a * inv)
        return out

    def _demoted(self, k, i, j, coef):
        """Rewrite R^k (k odd > 0) as R^{k-2} times the quadratic until k < 0."""
        if k == 0:
            raise ArgumentError("pure monomial atom not expected here")
        items = [((k, i, j), coef)]
        while any(kk > 0 for (kk, _, _), _ in items):
            nxt = []
            for (kk, ii, jj), cf in items:
                if kk > 0:
                    nxt.append(((kk - 2, ii + 2, jj), cf * self.a))
                    nxt.append(((kk - 2, ii + 1, jj + 1), cf * self.b))
                    nxt.append(((kk - 2, ii, jj + 2), cf * self.c))
                else:
                    nxt.append(((kk, ii, jj), cf))
            items = nxt
        return [(("P", kk, ii, jj), cf) for (kk, ii, jj), cf in items]


def _shift_poly(poly, di, dj):
    return {(i + di, j + dj): v for (i, j), v in poly.items()}


# ---------------------------------------------------------------------------
# Symbolic differentiation of atom sums


def differentiate_terms(terms, axis, a, b, c):
    """Exact partial derivative of an atom sum along axis 0 (x) or 1 (y).

    Output may contain the sign-carrying atoms SGX/SGY (sign(x) x^i y^j and
    sign(y) x^i y^j), which only ever appear in derivatives of quotient
    logs and cancel whenever the differentiated sum is itself smooth.
    """
    sqrt_a = np.sqrt(a)
    sqrt_c = np.sqrt(c)
    out = {}
    for key, coef in terms.items():
        kind = key[0]
        if kind == "P":
            _, k, i, j = key
            if k != 0:
                if axis == 0:
                    _add(out, ("P", k - 2, i + 1, j), coef * k * a)
                    _add(out, ("P", k - 2, i, j + 1), coef * k * b / 2.0)
                else:
                    _add(out, ("P", k - 2, i + 1, j), coef * k * b / 2.0)
                    _add(out, ("P", k - 2, i, j + 1), coef * k * c)
            if axis == 0 and i != 0:
                _add(out, ("P", k, i - 1, j), coef * i)
            elif axis == 1 and j != 0:
                _add(out, ("P", k, i, j - 1), coef * j)
            continue
        if kind in ("SGX", "SGY"):
            _, i, j = key
            if axis == 0 and i != 0:
                _add(out, (kind, i - 1, j), coef * i)
            elif axis == 1 and j != 0:
                _add(out, (kind, i, j - 1), coef * j)
            continue
        _, i, j = key
        if kind == "LX":
            if axis == 0:
                if i != 0:
                    _add(out, ("LX", i - 1, j), coef * i)
                _add(out, ("P", -1, i, j), coef * sqrt_a)
            else:
                if j != 0:
                    _add(out, ("LX", i, j - 1), coef * j)
                _add(out, ("P", 0, i, j - 1), coef)
                _add(out, ("P", -1, i + 1, j - 1), -coef * sqrt_a)
        elif kind == "LY":
            if axis == 1:
                if j != 0:
                    _add(out, ("LY", i, j - 1), coef * j)
                _add(out, ("P", -1, i, j), coef * sqrt_c)
            else:
                if i != 0:
                    _add(out, ("LY", i - 1, j), coef * i)
                _add(out, ("P", 0, i - 1, j), coef)
                _add(out, ("P", -1, i - 1, j + 1), -coef * sqrt_c)
        elif kind == "LQX":
            # Phi_X has d/dx Phi_X = 1/(R x); the y-derivative closes with a
            # sign(y) monomial
            if axis == 0:
                if i != 0:
                    _add(out, ("LQX", i - 1, j), coef * i)
                _add(out, ("P", -1, i - 1, j), coef)
            else:
                if j - 1 != 0:
                    _add(out, ("LQX", i, j - 1), coef * (j - 1))
                _add(out, ("SGY", i, j - 2), -coef / sqrt_c)
                _add(out, ("P", -1, i, j - 1), -coef)
        elif kind == "LQY":
            if axis == 1:
                if j != 0:
                    _add(out, ("LQY", i, j - 1), coef * j)
                _add(out, ("P", -1, i, j - 1), coef)
            else:
                if i - 1 != 0:
                    _add(out, ("LQY", i - 1, j), coef * (i - 1))
                _add(out, ("SGX", i - 2, j), -coef / sqrt_a)
                _add(out, ("P", -1, i - 1, j), -coef)
        else:
            raise ArgumentError(f"unknown atom kind {kind}")
    return out


# ---------------------------------------------------------------------------
# Atom evaluation


def _stable_log_arg(two_lin, sqrt_coef, r, disc, other_sq):
    """log argument 2*sqrt(coef)*R + (linear) without cancellation.

    When the linear part is negative the equivalent quotient form
    disc * other^2 / (2 sqrt(coef) R - linear) is used.
    """
    direct = 2.0 * sqrt_coef * r + two_lin
    alt_den = 2.0 * sqrt_coef * r - two_lin
    with np.errstate(divide="ignore", invalid="ignore"):
        alt = disc * other_sq / alt_den
    return np.where(two_lin >= 0.0, direct, alt)


def _eval_terms(terms, a, b, c, x, y):
    """Evaluate a sum of atoms; origin entries get their limit value.

    Atoms with zeta <= 0 have no finite origin limit; if such an atom is
    present and an evaluation point sits at the origin this raises.
    Quotient-log atoms are only defined off the axes.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    shape = np.broadcast(x, y, a, b, c).shape
    total = np.zeros(shape)
    with np.errstate(all="ignore"):
        r2 = a * x * x + b * x * y + c * y * y
        r = np.sqrt(r2)
        origin = (x == 0.0) & (y == 0.0)
        has_origin = bool(np.any(origin))
        if has_origin:
            for key in terms:
                zeta_atom = (key[1] + key[2] + key[3]) if key[0] == "P" else (key[1] + key[2])
                if key[0] in ("LQX", "LQY") or zeta_atom <= 0:
                    raise DivergentIntegralError(
                        "expression has no finite value at the origin"
                    )
        sqrt_a = np.sqrt(a)
        sqrt_c = np.sqrt(c)
        disc = 4.0 * a * c - b * b
        for key, coef in terms.items():
            if key[0] == "P":
                _, k, i, j = key
                val = coef * r**k * _ipow(x, i) * _ipow(y, j)
            elif key[0] in ("LX", "LY"):
                _, i, j = key
                mono = _ipow(x, i) * _ipow(y, j)
                if key[0] == "LX":
                    arg = _stable_log_arg(2.0 * a * x + b * y, sqrt_a, r, disc, y * y)
                else:
                    arg = _stable_log_arg(2.0 * c * y + b * x, sqrt_c, r, disc, x * x)
                val = coef * mono * np.log(np.where(arg > 0.0, arg, 1.0))
                val = np.where(mono == 0.0, 0.0, val)
            elif key[0] in ("SGX", "SGY"):
                _, i, j = key
                s = np.sign(x) if key[0] == "SGX" else np.sign(y)
                val = coef * s * _ipow(x, i) * _ipow(y, j)
            else:  # LQX / LQY: off-axis only
                _, i, j = key
                if key[0] == "LQX":
                    s = sqrt_c * np.abs(y)
                    num = 2.0 * c * y * y + b * x * y + 2.0 * s * r
                    phi = -np.log(num / np.abs(x)) / s
                else:
                    s = sqrt_a * np.abs(x)
                    num = 2.0 * a * x * x + b * x * y + 2.0 * s * r
                    phi = -np.log(num / np.abs(y)) / s
                val = coef * _ipow(x, i) * _ipow(y, j) * phi
            if has_origin:
                val = np.where(origin, 0.0, val)
            total = total + val
    if total.ndim == 0:
        return float(total)
    return total


def has_any_array(v):
    return isinstance(v, np.ndarray) and v.ndim > 0


def _ipow(base, expo):
    if expo == 0:
        return np.ones_like(base) if isinstance(base, np.ndarray) else 1.0
    return base**expo


# ---------------------------------------------------------------------------
# Public expression objects


@dataclass(frozen=True)
class IntegerTriple:
    """Exponent triple of the integrand R^p x^q y^r."""

    p: int
    q: int
    r: int

    def __post_init__(self):
        _validate_triple(self.p, self.q, self.r)


def _validate_triple(p, q, r):
    if p >= 0 or p % 2 == 0:
        raise ArgumentError(f"p must be a negative odd integer, got {p}")
    if q < 0 or r < 0:
        raise ArgumentError(f"q and r must be non-negative, got ({q}, {r})")


def _as_triple(t):
    if isinstance(t, IntegerTriple):
        return t.p, t.q, t.r
    p, q, r = (int(v) for v in t)
    _validate_triple(p, q, r)
    return p, q, r


class Antiderivative:
    """Evaluable antiderivative expression over a fixed quadratic form."""

    __slots__ = ("terms", "a", "b", "c", "kind")

    def __init__(self, terms, a, b, c, kind):
        self.terms = terms
        self.a = a
        self.b = b
        self.c = c
        self.kind = kind

    def eval(self, x, y):
        return _eval_terms(self.terms, self.a, self.b, self.c, x, y)

    __call__ = eval

    def mixed_partial(self):
        """Symbolic d^2/dx dy of this expression, as a new expression."""
        dy = differentiate_terms(self.terms, 1, self.a, self.b, self.c)
        dxdy = differentiate_terms(dy, 0, self.a, self.b, self.c)
        return Antiderivative(dxdy, self.a, self.b, self.c, "mixed")

    def mixed_partial_fd(self, x, y, step_scale=1e-3):
        """Mixed second partial via cell differences, Richardson extrapolated.

        The four-corner difference equals the exact integral of the mixed
        partial over the cell, so the error is governed by the integrand's
        smoothness near (x, y), not by the expression's own log terms.
        """
        scale = np.hypot(x, y)

        def cell_average(h):
            vals = self.eval(
                np.stack([x + h, x + h, x - h, x - h]),
                np.stack([y + h, y - h, y + h, y - h]),
            )
            return (vals[0] - vals[1] - vals[2] + vals[3]) / (4.0 * h * h)

        h = step_scale * scale
        coarse = cell_average(h)
        fine = cell_average(h / 2.0)
        return (4.0 * fine - coarse) / 3.0

    def __len__(self):
        return len(self.terms)


class EdgeAntiderivative:
    """One-variable antiderivative along the triangle edge x = 1 - y."""

    __slots__ = ("terms", "hatted_form", "kind")

    def __init__(self, terms, hatted_form):
        self.terms = terms
        self.hatted_form = hatted_form

    def eval(self, y):
        ah, bh, ch = self.hatted_form
        return _eval_terms(self.terms, ah, bh, ch, np.asarray(1.0), np.asarray(y, float))

    __call__ = eval


def _hatted_coeffs(a, b, c):
    # substitution x -> 1 - y turns R(a,b,c,(x,y)) into R(ah,bh,ch,(1,y))
    return a, b - 2.0 * a, a - b + c


def _build_inner(p, q, a, b, c):
    return _FormContext(a, b, c).anti_x(p, q)


def _build_rect(p, q, r, a, b, c):
    ctx = _FormContext(a, b, c)
    terms = ctx.integrate_y(_shift(ctx.anti_x(p, q), 0, r))
    # gauge choice: pure functions of x never contribute to any boundary
    # combination used here, so drop them eagerly
    return {
        key: coef
        for key, coef in terms.items()
        if not (key[0] == "P" and key[1] == 0 and key[3] == 0)
    }


def _build_edge(p, q, r, a, b, c):
    ctx = _FormContext(a, b, c)
    src = _shift(ctx.anti_x(p, q), 0, r)
    ah, bh, ch = _hatted_coeffs(a, b, c)
    hctx = _FormContext(ah, bh, ch)
    folded = {}
    for key, coef in src.items():
        kind = key[0]
        if kind == "P":
            _, k, i, j = key
        elif kind == "LX":
            _, i, j = key
            k = None
        else:
            raise ArgumentError(f"unexpected atom kind {kind} on the edge path")
        if i < 0:
            raise ArgumentError("edge substitution requires non-negative x powers")
        for m in range(i + 1):
            cf = coef * math.comb(i, m) * (-1.0) ** m
            if kind == "P":
                _add(folded, ("P", k, 0, j + m), cf)
            else:
                _add(folded, ("LX", 0, j + m), cf)
    return hctx.integrate_y(folded), (ah, bh, ch)


_rect_cache = {}
_edge_cache = {}
_inner_cache = {}


def _cache_key(p, q, r, form):
    return (p, q, r, float(form.a), float(form.b), float(form.c))


def inner_antiderivative(p, q, form):
    """Antiderivative in x of R^p x^q (y enters as a parameter)."""
    if q < 0:
        raise ArgumentError("q must be non-negative")
    if p >= 0 or p % 2 == 0:
        raise ArgumentError(f"p must be a negative odd integer, got {p}")
    key = _cache_key(p, q, 0, form)
    if key not in _inner_cache:
        _inner_cache[key] = _build_inner(p, q, form.a, form.b, form.c)
    return Antiderivative(_inner_cache[key], form.a, form.b, form.c, "inner")


def rect_antiderivative(triple, form):
    """Double antiderivative F with d2 F / dx dy = R^p x^q y^r off the origin."""
    p, q, r = _as_triple(triple)
    key = _cache_key(p, q, r, form)
    if key not in _rect_cache:
        _rect_cache[key] = _build_rect(p, q, r, form.a, form.b, form.c)
    return Antiderivative(_rect_cache[key], form.a, form.b, form.c, "rect")


def tri_antiderivative(triple, form):
    """Antiderivative in y of y^r * (inner antiderivative at x = 1 - y)."""
    p, q, r = _as_triple(triple)
    key = _cache_key(p, q, r, form)
    if key not in _edge_cache:
        _edge_cache[key] = _build_edge(p, q, r, form.a, form.b, form.c)
    terms, hatted = _edge_cache[key]
    return EdgeAntiderivative(terms, hatted)


def _condition_check(corner_values, result):
    peak = float(np.max(np.abs(corner_values)))
    if peak > _CONDITION_WARN_RATIO * max(abs(result), 1e-300):
        warnings.warn(
            f"boundary evaluation loses ~{math.log10(peak / max(abs(result), 1e-300)):.0f} "
            "digits to cancellation",
            RuntimeWarning,
            stacklevel=3,
        )


def definite_rect(triple, form, rect):
    """Integral of R^p x^q y^r over an origin-cornered rectangle.

    ``rect`` is (x0, x1, y0, y1); one x-limit and one y-limit must be 0.
    """
    p, q, r = _as_triple(triple)
    x0, x1, y0, y1 = (float(v) for v in rect)
    if x0 == x1 or y0 == y1:
        return 0.0
    if 0.0 not in (x0, x1) or 0.0 not in (y0, y1):
        raise ArgumentError("rectangle must have the origin as a corner")
    if p + q + r <= -2:
        raise DivergentIntegralError(
            f"integrand R^{p} x^{q} y^{r} is not integrable at the origin"
        )
    expr = rect_antiderivative((p, q, r), form)
    xs = np.array([x1, x0, x1, x0])
    ys = np.array([y1, y1, y0, y0])
    vals = expr.eval(xs, ys)
    result = float(vals[0] - vals[1] - vals[2] + vals[3])
    _condition_check(vals, result)
    return result


def definite_tri(triple, form):
    """Integral of R^p x^q y^r over the triangle (0,0), (1,0), (0,1)."""
    p, q, r = _as_triple(triple)
    if p + q + r <= -2:
        raise DivergentIntegralError(
            f"integrand R^{p} x^{q} y^{r} is not integrable at the origin"
        )
    F = rect_antiderivative((p, q, r), form)
    vals = F.eval(np.array([0.0, 0.0]), np.array([0.0, 1.0]))
    edge = tri_antiderivative((p, q, r), form)
    evals = edge.eval(np.array([1.0, 0.0]))
    result = float(vals[0] - vals[1] + evals[0] - evals[1])
    _condition_check(np.concatenate([vals, evals]), result)
    return result


# ---------------------------------------------------------------------------
# General origin-vertex triangles


def tri_affine_data(v1, v2, form):
    """Map data for the triangle (0, v1, v2): jacobian and hatted form.

    The linear map [v1 | v2] carries the reference triangle onto the
    target; R pulls back to the returned quadratic form.
    """
    (x1, y1), (x2, y2) = v1, v2
    a, b, c = form.a, form.b, form.c
    jac = x1 * y2 - x2 * y1
    abar = a * x1 * x1 + b * x1 * y1 + c * y1 * y1
    bbar = 2.0 * a * x1 * x2 + b * x2 * y1 + b * x1 * y2 + 2.0 * c * y1 * y2
    cbar = a * x2 * x2 + b * x2 * y2 + c * y2 * y2
    return jac, (abar, bbar, cbar)


def tri_monomial_mix(v1, v2, q, r):
    """Coefficients alpha_i of (x1 X + x2 Y)^q (y1 X + y2 Y)^r.

    Returns a length q+r+1 list; alpha_i multiplies X^(q+r-i) Y^i.
    """
    (x1, y1), (x2, y2) = v1, v2
    qa = [math.comb(q, m) * x1 ** (q - m) * x2**m for m in range(q + 1)]
    ra = [math.comb(r, m) * y1 ** (r - m) * y2**m for m in range(r + 1)]
    mix = [0.0] * (q + r + 1)
    for m1, ca in enumerate(qa):
        for m2, cb in enumerate(ra):
            mix[m1 + m2] += ca * cb
    return mix


def definite_origin_tri(triple, form, v1, v2):
    """Integral of R^p x^q y^r over the triangle with vertices 0, v1, v2."""
    p, q, r = _as_triple(triple)
    jac, (abar, bbar, cbar) = tri_affine_data(v1, v2, form)
    if jac == 0.0:
        raise ArgumentError("triangle vertices are collinear with the origin")
    if jac < 0.0:
        v1, v2 = v2, v1
        jac, (abar, bbar, cbar) = tri_affine_data(v1, v2, form)
    hatted = QuadraticForm(abar, bbar, cbar)
    mix = tri_monomial_mix(v1, v2, q, r)
    total = 0.0
    for i, alpha in enumerate(mix):
        if alpha == 0.0:
            continue
        total += alpha * definite_tri((p, q + r - i, i), hatted)
    return jac * total


# ---------------------------------------------------------------------------
# Truncated kernel times polynomial


def _group_products(rsum, poly):
    """Monomial-level grouping of (sum_l R^p P_l) * poly."""
    if isinstance(poly, (int, float)):
        poly = Poly2({(0, 0): float(poly)})
    grouped = {}
    for p, kpoly in rsum.terms:
        for (ik, jk), ck in kpoly.coeffs.items():
            for (ip, jp), cp in poly.coeffs.items():
                key = (p, ik + ip, jk + jp)
                grouped[key] = grouped.get(key, 0.0) + ck * cp
    return grouped


def integrate_kernel_poly(trunc, poly, domain, form=None):
    """Exact integral of (truncated kernel) * polynomial over a canonical domain.

    ``domain`` is an origin-cornered rectangle ("rect", x0, x1, y0, y1),
    an origin-vertex triangle ("tri", v1, v2), or the string
    "reference_triangle".  Every monomial product must stay weakly
    singular (p + q + r >= -1).
    """
    rsum = getattr(trunc, "sum", trunc)
    if form is None:
        form = rsum.form
    grouped = _group_products(rsum, poly)
    for (p, q, r) in grouped:
        if p + q + r <= -2:
            raise DivergentIntegralError(
                f"kernel-polynomial product contains non-integrable term "
                f"R^{p} x^{q} y^{r}"
            )
    if isinstance(domain, str):
        if domain != "reference_triangle":
            raise ArgumentError(f"unknown domain {domain!r}")
        domain = ("tri", (1.0, 0.0), (0.0, 1.0))

    kind = domain[0]
    if kind == "rect":
        x0, x1, y0, y1 = (float(v) for v in domain[1:])
        if x0 == x1 or y0 == y1:
            return 0.0
        if 0.0 not in (x0, x1) or 0.0 not in (y0, y1):
            raise ArgumentError("rectangle must have the origin as a corner")
        merged = {}
        for (p, q, r), coef in grouped.items():
            expr = rect_antiderivative((p, q, r), form)
            _merge(merged, expr.terms, coef)
        xs = np.array([x1, x0, x1, x0])
        ys = np.array([y1, y1, y0, y0])
        vals = _eval_terms(merged, form.a, form.b, form.c, xs, ys)
        result = float(vals[0] - vals[1] - vals[2] + vals[3])
        _condition_check(vals, result)
        return result
    if kind == "tri":
        v1 = tuple(float(v) for v in domain[1])
        v2 = tuple(float(v) for v in domain[2])
        total = 0.0
        for (p, q, r), coef in grouped.items():
            total += coef * definite_origin_tri((p, q, r), form, v1, v2)
        return total
    raise ArgumentError(f"unknown domain kind {kind!r}")


def clear_caches():
    _rect_cache.clear()
    _edge_cache.clear()
    _inner_cache.clear()
