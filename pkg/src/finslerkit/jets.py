"""Exact mixed partial derivatives via dense truncated Taylor arithmetic.

A field on the tangent bundle is any callable ``f(x_vars, y_vars) -> scalar``
that is generic over the scalar type.  Seeding the 2n coordinates with
first-order Taylor "variables" and propagating full truncated series through
the arithmetic yields every mixed partial up to the requested order in one
evaluation, exact to round-off (no finite-difference truncation error).

Storage is dense: a jet keeps one coefficient per multi-index of total degree
up to the space order.  Multiplication uses a precomputed (i, j, k) index
table folded with ``np.bincount``; division goes through a Newton iteration
for the reciprocal; analytic functions (sin, exp, sqrt, ...) compose their
univariate Taylor series with the nilpotent part via Horner's rule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations_with_replacement

import numpy as np

from .bundle import TangentBundlePoint
from .errors import NonFiniteField, OrderUnsupported

# Public derivative-extraction cap for eval_jet.  Internal consumers may build
# deeper spaces (the flow-Jacobian tensors need one extra order), but the
# user-facing jet record stops here.
MAX_EVAL_ORDER = 4


def _multi_indices(nvars: int, order: int):
    """All exponent tuples with total degree <= order, sorted by (degree, lex)."""
    out = [(0,) * nvars]
    for deg in range(1, order + 1):
        block = set()
        for combo in combinations_with_replacement(range(nvars), deg):
            alpha = [0] * nvars
            for v in combo:
                alpha[v] += 1
            block.add(tuple(alpha))
        out.extend(sorted(block))
    return out


class JetSpace:
    """Index layout and operation tables for jets in ``nvars`` variables.

    Instances are cached per (nvars, order); construction cost is paid once
    per process.
    """

    _cache: dict[tuple[int, int], "JetSpace"] = {}

    def __init__(self, nvars: int, order: int):
        if nvars < 1 or order < 0:
            raise ValueError("need nvars >= 1 and order >= 0")
        self.nvars = nvars
        self.order = order
        self.indices = _multi_indices(nvars, order)
        self.size = len(self.indices)
        self.index_of = {alpha: i for i, alpha in enumerate(self.indices)}
        self.degrees = np.array([sum(a) for a in self.indices], dtype=np.int64)

        # factorial(alpha) per slot, for converting Taylor coefficients into
        # true mixed partials
        self.factorials = np.array(
            [float(np.prod([math.factorial(k) for k in a])) for a in self.indices]
        )

        # masks[o] zeroes every coefficient of degree > o
        self.masks = [
            (self.degrees <= o).astype(float) for o in range(order + 1)
        ]

        # multiplication table: c[k] += a[i] * b[j] over all pairs with
        # deg(i) + deg(j) <= order
        by_degree: dict[int, list[int]] = {}
        for i, alpha in enumerate(self.indices):
            by_degree.setdefault(sum(alpha), []).append(i)
        ia, ib, ic = [], [], []
        for i, alpha in enumerate(self.indices):
            da = sum(alpha)
            for db in range(order - da + 1):
                for j in by_degree[db]:
                    beta = self.indices[j]
                    gamma = tuple(a + b for a, b in zip(alpha, beta))
                    ia.append(i)
                    ib.append(j)
                    ic.append(self.index_of[gamma])
        self._mul_ia = np.array(ia, dtype=np.intp)
        self._mul_ib = np.array(ib, dtype=np.intp)
        self._mul_ic = np.array(ic, dtype=np.intp)

        # derivative tables: one (src, dst, factor) triple set per variable
        self._deriv = []
        for v in range(nvars):
            src, dst, fac = [], [], []
            for j, beta in enumerate(self.indices):
                if sum(beta) > order - 1:
                    continue
                shifted = list(beta)
                shifted[v] += 1
                src.append(self.index_of[tuple(shifted)])
                dst.append(j)
                fac.append(beta[v] + 1.0)
            self._deriv.append(
                (
                    np.array(src, dtype=np.intp),
                    np.array(dst, dtype=np.intp),
                    np.array(fac),
                )
            )

    @classmethod
    def get(cls, nvars: int, order: int) -> "JetSpace":
        key = (nvars, order)
        space = cls._cache.get(key)
        if space is None:
            space = cls(nvars, order)
            cls._cache[key] = space
        return space

    # -- constructors -------------------------------------------------------

    def constant(self, value: float) -> "TaylorJet":
        c = np.zeros(self.size)
        c[0] = float(value)
        return TaylorJet(self, self.order, c)

    def variable(self, v: int, value: float) -> "TaylorJet":
        """The coordinate function of variable ``v`` expanded at ``value``."""
        c = np.zeros(self.size)
        c[0] = float(value)
        if self.order >= 1:
            unit = [0] * self.nvars
            unit[v] = 1
            c[self.index_of[tuple(unit)]] = 1.0
        return TaylorJet(self, self.order, c)


class TaylorJet:
    """One truncated multivariate Taylor series, valid up to ``self.order``.

    Coefficients above the jet's own validity order are kept zeroed so that
    arithmetic never propagates stale high-degree terms.
    """

    __slots__ = ("space", "order", "c")

    def __init__(self, space: JetSpace, order: int, c: np.ndarray):
        self.space = space
        self.order = order
        self.c = c

    # -- inspection ---------------------------------------------------------

    @property
    def value(self) -> float:
        return float(self.c[0])

    def taylor_coefficient(self, alpha) -> float:
        return float(self.c[self.space.index_of[tuple(alpha)]])

    def partial(self, alpha) -> float:
        """True mixed partial for exponent tuple ``alpha`` (Taylor coeff * alpha!)."""
        i = self.space.index_of[tuple(alpha)]
        return float(self.c[i] * self.space.factorials[i])

    def deriv(self, v: int) -> "TaylorJet":
        """Partial derivative with respect to variable ``v``; drops one order."""
        if self.order < 1:
            raise OrderUnsupported("cannot differentiate an order-0 jet")
        src, dst, fac = self.space._deriv[v]
        c = np.zeros(self.space.size)
        c[dst] = self.c[src] * fac
        out = TaylorJet(self.space, self.order - 1, c)
        out._mask()
        return out

    def _mask(self):
        if self.order < self.space.order:
            self.c *= self.space.masks[self.order]
        return self

    def copy(self) -> "TaylorJet":
        return TaylorJet(self.space, self.order, self.c.copy())

    # -- ring operations ----------------------------------------------------

    def __add__(self, other):
        if isinstance(other, TaylorJet):
            c = self.c + other.c
            out = TaylorJet(self.space, min(self.order, other.order), c)
            return out._mask()
        c = self.c.copy()
        c[0] += float(other)
        return TaylorJet(self.space, self.order, c)

    __radd__ = __add__

    def __neg__(self):
        return TaylorJet(self.space, self.order, -self.c)

    def __sub__(self, other):
        return self.__add__(-other if isinstance(other, TaylorJet) else -float(other))

    def __rsub__(self, other):
        return (-self).__add__(float(other))

    def __mul__(self, other):
        if not isinstance(other, TaylorJet):
            return TaylorJet(self.space, self.order, self.c * float(other))
        sp = self.space
        prod = self.c[sp._mul_ia] * other.c[sp._mul_ib]
        c = np.bincount(sp._mul_ic, weights=prod, minlength=sp.size)
        out = TaylorJet(sp, min(self.order, other.order), c)
        return out._mask()

    __rmul__ = __mul__

    def reciprocal(self) -> "TaylorJet":
        c0 = self.c[0]
        if c0 == 0.0:
            raise ZeroDivisionError("jet reciprocal with zero constant term")
        inv = self.space.constant(1.0 / c0)
        inv.order = self.order
        # Newton doubles the number of correct orders each sweep
        sweeps = max(1, math.ceil(math.log2(self.order + 1))) if self.order else 0
        for _ in range(sweeps):
            inv = inv * (2.0 - self * inv)
        return inv

    def __truediv__(self, other):
        if isinstance(other, TaylorJet):
            return self * other.reciprocal()
        return TaylorJet(self.space, self.order, self.c / float(other))

    def __rtruediv__(self, other):
        return self.reciprocal() * float(other)

    def __pow__(self, p):
        if isinstance(p, int) or (isinstance(p, float) and p.is_integer()):
            k = int(p)
            if k < 0:
                return self.reciprocal() ** (-k)
            result = self.space.constant(1.0)
            result.order = self.order
            base = self
            while k:
                if k & 1:
                    result = result * base
                k >>= 1
                if k:
                    base = base * base
            return result
        return self._pow_real(float(p))

    # -- analytic functions -------------------------------------------------

    def _compose(self, series: np.ndarray) -> "TaylorJet":
        """Horner evaluation of sum_k series[k] * (self - value)^k."""
        w = self.copy()
        w.c[0] = 0.0
        r = self.space.constant(series[-1])
        r.order = self.order
        for k in range(len(series) - 2, -1, -1):
            r = r * w
            r.c[0] += series[k]
        return r

    def sin(self):
        u0, m = self.c[0], self.order
        series = np.array(
            [math.sin(u0 + k * math.pi / 2.0) / math.factorial(k) for k in range(m + 1)]
        )
        return self._compose(series)

    def cos(self):
        u0, m = self.c[0], self.order
        series = np.array(
            [math.cos(u0 + k * math.pi / 2.0) / math.factorial(k) for k in range(m + 1)]
        )
        return self._compose(series)

    def exp(self):
        u0, m = self.c[0], self.order
        e = math.exp(u0)
        series = np.array([e / math.factorial(k) for k in range(m + 1)])
        return self._compose(series)

    def log(self):
        u0, m = self.c[0], self.order
        if u0 <= 0.0:
            raise NonFiniteField(f"log of jet with non-positive value {u0:.3e}")
        series = [math.log(u0)]
        for k in range(1, m + 1):
            series.append(((-1.0) ** (k + 1)) / (k * u0**k))
        return self._compose(np.array(series))

    def _pow_real(self, p: float):
        u0, m = self.c[0], self.order
        if u0 <= 0.0:
            raise NonFiniteField(
                f"non-integer power {p} of jet with non-positive value {u0:.3e}"
            )
        series, coeff = [], 1.0
        for k in range(m + 1):
            series.append(coeff * u0 ** (p - k))
            coeff *= (p - k) / (k + 1.0)
        return self._compose(np.array(series))

    def sqrt(self):
        return self._pow_real(0.5)

    def absolute(self):
        u0 = self.c[0]
        if u0 == 0.0:
            raise NonFiniteField("abs of a jet centered exactly on its kink")
        return self if u0 > 0.0 else -self

    def __repr__(self):
        return f"TaylorJet(order={self.order}, value={self.value:.6g})"


# -- generic scalar shims ----------------------------------------------------
#
# Fields are written once and evaluated over floats or jets; these helpers
# dispatch by type so model code never branches.


def _shim(jet_method, float_fn):
    def fn(v):
        if isinstance(v, TaylorJet):
            return jet_method(v)
        return float_fn(v)

    return fn


sin = _shim(TaylorJet.sin, math.sin)
cos = _shim(TaylorJet.cos, math.cos)
exp = _shim(TaylorJet.exp, math.exp)
log = _shim(TaylorJet.log, math.log)
sqrt = _shim(TaylorJet.sqrt, math.sqrt)
absolute = _shim(TaylorJet.absolute, abs)


def power(base, exponent):
    """Generic ``base ** exponent`` for float or jet base and numeric exponent."""
    if isinstance(base, TaylorJet):
        return base**exponent
    return float(base) ** float(exponent)


# -- public jet record -------------------------------------------------------


@dataclass
class Jet:
    """All mixed partials of a scalar bundle field at one point.

    ``coefficients`` maps exponent tuples over the 2n variables (first the n
    manifold slots, then the n fiber slots) to true mixed-partial values, so
    the empty multi-index entry is the plain field value and entries are
    invariant under permutation of differentiation order by construction.
    """

    center: TangentBundlePoint
    order: int
    coefficients: dict

    @property
    def value(self) -> float:
        n = self.center.dim
        return self.coefficients[(0,) * (2 * n)]

    def partial(self, x=(), y=()) -> float:
        """Mixed partial for manifold indices ``x`` and fiber indices ``y``.

        Arguments list coordinate slots with multiplicity, e.g.
        ``partial(x=(0,), y=(1, 1))`` is d/dx0 d/dy1 d/dy1 of the field.
        """
        n = self.center.dim
        alpha = [0] * (2 * n)
        for i in x:
            alpha[int(i)] += 1
        for i in y:
            alpha[n + int(i)] += 1
        return self.coefficients[tuple(alpha)]


def eval_jet(field, point: TangentBundlePoint, order: int) -> Jet:
    """Evaluate ``field(x_vars, y_vars)`` and all mixed partials up to ``order``.

    Exact for polynomial fields of degree <= order; raises
    :class:`OrderUnsupported` above the cap and :class:`NonFiniteField` if any
    extracted coefficient fails to be finite.
    """
    if not isinstance(order, int) or order < 0 or order > MAX_EVAL_ORDER:
        raise OrderUnsupported(
            f"jet order must be an integer in [0, {MAX_EVAL_ORDER}], got {order!r}"
        )
    raw = eval_taylor(field, point, order)
    coeffs = {
        alpha: float(raw.c[i] * raw.space.factorials[i])
        for i, alpha in enumerate(raw.space.indices)
        if raw.space.degrees[i] <= order
    }
    return Jet(center=point, order=order, coefficients=coeffs)


def eval_taylor(field, point: TangentBundlePoint, order: int) -> TaylorJet:
    """Internal variant of :func:`eval_jet` returning the raw jet (any order)."""
    n = point.dim
    space = JetSpace.get(2 * n, order)
    xs = [space.variable(i, point.x[i]) for i in range(n)]
    ys = [space.variable(n + i, point.y[i]) for i in range(n)]
    out = field(xs, ys)
    if not isinstance(out, TaylorJet):
        out = space.constant(float(out))
    if not np.isfinite(out.c).all():
        raise NonFiniteField("field evaluation produced non-finite derivatives")
    return out
