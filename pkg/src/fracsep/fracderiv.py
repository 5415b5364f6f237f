"""Caputo fractional differentiation of time-coefficient terms.

Exact rules where they exist (power rule, Mittag-Leffler eigenfunctions),
product-integration quadrature as the independent route for everything else,
plus the weakly singular convolution needed by the Laplace-transform closed
forms.

Quadrature mesh: the defining integral has two delicate regions, the
(t-y)^{k-alpha-1} kernel at y = t and possible power singularities of the
supplied derivative at y = 0.  Both halves of [0, t] get their own graded
mesh (refined toward their own endpoint) and the kernel is integrated by
exact per-cell moments against piecewise-linear interpolation, so the kernel
contributes no interpolation error at all.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Union

import numpy as np

from .errors import PrecisionError, StructuralError
from .specfun import MLParams, gamma, lgamma_pos, ml_eval, ml_eval_batch, reciprocal_gamma

DEFAULT_QUAD_N = 4096
# grading exponents: toward the y=0 singularity of the integrand and toward
# the y=t kernel singularity
GRADE_ZERO = 10.0
GRADE_KERNEL = 3.0
_SERIES_GUARD = 500


@dataclass(frozen=True)
class FractionalOrder:
    """Caputo order alpha in (0, 2]; k = ceil(alpha) with k(1) = 1."""

    alpha: float

    def __post_init__(self) -> None:
        if not (0.0 < self.alpha <= 2.0):
            raise ValueError(f"alpha must lie in (0, 2], got {self.alpha}")

    @property
    def k(self) -> int:
        return 1 if self.alpha <= 1.0 else 2

    @property
    def is_integer(self) -> bool:
        return self.alpha in (1.0, 2.0)


# ---------------------------------------------------------------------------
# time-coefficient terms


@dataclass(frozen=True)
class PowerTerm:
    """c * t**gamma_exp."""

    c: float
    gamma_exp: float


@dataclass(frozen=True)
class MLTerm:
    """c * t**gamma_exp * E_{ml.a, ml.b}(lam * t**ml.a)."""

    c: float
    gamma_exp: float
    lam: float
    ml: MLParams


@dataclass(frozen=True)
class ConvTerm:
    """Convolution (left * right)(t) = int_0^t left(y) right(t-y) dy.

    Nesting depth <= 1: the factors must be PowerTerm or MLTerm.  A factor
    with fractional exponent in (-1, 0) declares its own integrable
    singularity through that exponent.
    """

    left: Union[PowerTerm, MLTerm]
    right: Union[PowerTerm, MLTerm]

    def __post_init__(self) -> None:
        for f in (self.left, self.right):
            if isinstance(f, ConvTerm):
                raise ValueError("ConvTerm nesting depth must be <= 1")


Term = Union[PowerTerm, MLTerm, ConvTerm]


@dataclass(frozen=True)
class TimeCoefficient:
    """A finite sum of PowerTerm / MLTerm / ConvTerm."""

    terms: tuple[Term, ...]

    def __post_init__(self) -> None:
        for term in self.terms:
            if isinstance(term, (PowerTerm, MLTerm)) and term.gamma_exp < 0.0:
                raise ValueError(
                    "top-level term exponents must be >= 0 (continuity at t=0)"
                )

    def value(self, t: float, quad_n: int = DEFAULT_QUAD_N) -> float:
        return sum(term_value(term, t, quad_n=quad_n) for term in self.terms)

    def value_at0(self) -> float:
        return sum(_term_value_at0(term) for term in self.terms)

    def slope_at0(self) -> float:
        return sum(_term_slope_at0(term) for term in self.terms)

    def scaled(self, factor: float) -> "TimeCoefficient":
        return TimeCoefficient(tuple(_scale_term(term, factor) for term in self.terms))

    def __add__(self, other: "TimeCoefficient") -> "TimeCoefficient":
        return TimeCoefficient(self.terms + other.terms)


def _scale_term(term: Term, factor: float) -> Term:
    if isinstance(term, PowerTerm):
        return PowerTerm(term.c * factor, term.gamma_exp)
    if isinstance(term, MLTerm):
        return MLTerm(term.c * factor, term.gamma_exp, term.lam, term.ml)
    return ConvTerm(_scale_term(term.left, factor), term.right)


# ---------------------------------------------------------------------------
# term evaluation (value and classical derivatives), vectorised over t


def _ml_factor_series(term: MLTerm, ts: np.ndarray, order: int) -> np.ndarray:
    """Term-wise order-th derivative of c t^g E_{a,b}(lam t^a) for t > 0."""
    a, b = term.ml.a, term.ml.b
    g = term.gamma_exp
    out = np.zeros_like(ts)
    maxabs = np.zeros_like(ts)
    lam_pow = 1.0
    lnt = np.log(ts)
    small = 0
    for k in range(_SERIES_GUARD + 1):
        e = g + a * k
        coef = lam_pow * reciprocal_gamma(a * k + b)
        for j in range(order):
            coef *= e - j
        lam_pow *= term.lam
        if coef == 0.0:
            continue
        contrib = coef * np.exp((e - order) * lnt)
        out += contrib
        np.maximum(maxabs, np.abs(contrib), out=maxabs)
        if np.all(np.abs(contrib) <= 1e-18 * np.maximum(np.abs(out), 1e-300)) and k > 3:
            small += 1
            if small >= 2:
                break
        else:
            small = 0
    else:
        raise PrecisionError("ML term derivative series did not converge")
    ratio = float(np.max(maxabs / np.maximum(np.abs(out), 1e-12)))
    if ratio > 1e12:
        raise PrecisionError("ML term derivative series lost too many digits")
    return term.c * out


def _conv_expansions(factor: Union[PowerTerm, MLTerm], count: int):
    """(coef_i, exp_i) sequence of a convolution factor."""
    if isinstance(factor, PowerTerm):
        return [(factor.c, factor.gamma_exp)]
    a, b = factor.ml.a, factor.ml.b
    seq = []
    lam_pow = 1.0
    for k in range(count):
        seq.append((factor.c * lam_pow * reciprocal_gamma(a * k + b), factor.gamma_exp + a * k))
        lam_pow *= factor.lam
    return seq


# largest t the series tables must stay accurate for
_CONV_TMAX = 4.0
_CONV_KMAX = 220


@lru_cache(maxsize=256)
def _conv_series_table(term: ConvTerm):
    """Coefficients (W_m, E_m) with (left*right)(t) = sum W_m t^{E_m}.

    Each cross term integrates two powers exactly via the Beta function:
    int_0^t y^p (t-y)^q dy = B(p+1, q+1) t^{p+q+1}.  The table depends only
    on the factor terms, so it is built once and reused at every t.
    """
    left = _conv_expansions(term.left, _CONV_KMAX)
    right = _conv_expansions(term.right, _CONV_KMAX)
    ws: list[float] = []
    es: list[float] = []
    scale = 1e-300
    for ci, ei in left:
        row_max = 0.0
        for cj, ej in right:
            if ci == 0.0 or cj == 0.0:
                continue
            e_tot = ei + ej + 1.0
            w = ci * cj * math.exp(
                lgamma_pos(ei + 1.0) + lgamma_pos(ej + 1.0) - lgamma_pos(e_tot + 1.0)
            )
            weight = abs(w) * _CONV_TMAX**e_tot
            scale = max(scale, weight)
            row_max = max(row_max, weight)
            if weight < 1e-24 * scale:
                break
            ws.append(w)
            es.append(e_tot)
        if 0.0 < row_max < 1e-24 * scale:
            break
    else:
        if isinstance(term.left, MLTerm) and abs(term.left.lam) > 0:
            raise PrecisionError("convolution series table did not converge")
    return np.array(ws), np.array(es)


def conv_series(term: ConvTerm, t, order: int = 0):
    """Term-wise order-th derivative of the exact convolution series."""
    ws, es = _conv_series_table(term)
    scalar = np.isscalar(t)
    ts = np.atleast_1d(np.asarray(t, dtype=float))
    coef = ws.copy()
    for j in range(order):
        coef = coef * (es - j)
    out = np.zeros_like(ts)
    pos = ts > 0.0
    if pos.any():
        out[pos] = (coef[None, :] * ts[pos, None] ** (es - order)[None, :]).sum(axis=1)
    return float(out[0]) if scalar else out


def term_value(term: Term, t, order: int = 0, quad_n: int = DEFAULT_QUAD_N):
    """order-th classical derivative of a term at t (t scalar or array, > 0)."""
    scalar = np.isscalar(t)
    ts = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(ts <= 0.0):
        raise ValueError("term_value requires t > 0; use value_at0/slope_at0 at t=0")
    if isinstance(term, PowerTerm):
        coef = term.c
        e = term.gamma_exp
        for j in range(order):
            coef *= e - j
        out = coef * ts ** (e - order) if coef != 0.0 else np.zeros_like(ts)
    elif isinstance(term, MLTerm):
        if order == 0:
            out = term.c * ts**term.gamma_exp * ml_eval_batch(
                term.ml, term.lam * ts**term.ml.a
            )
        else:
            out = _ml_factor_series(term, ts, order)
    elif isinstance(term, ConvTerm):
        if order == 0:
            out = np.array([convolve(term.left, term.right, float(v), quad_n) for v in ts])
        else:
            out = np.array([conv_series(term, float(v), order) for v in ts])
    else:
        raise TypeError(f"unknown term type {type(term)!r}")
    return float(out[0]) if scalar else out


def _term_value_at0(term: Term) -> float:
    if isinstance(term, (PowerTerm, MLTerm)):
        if term.gamma_exp > 0.0:
            return 0.0
        base = term.c
        if isinstance(term, MLTerm):
            base *= reciprocal_gamma(term.ml.b)
        return base
    return 0.0  # convolutions vanish at t = 0


def _term_slope_at0(term: Term) -> float:
    """d/dt at t -> 0+; valid for the branch structures that carry B-data."""
    if isinstance(term, PowerTerm):
        if term.gamma_exp == 1.0:
            return term.c
        if term.gamma_exp == 0.0 or term.gamma_exp > 1.0:
            return 0.0
        raise StructuralError(
            f"t^{term.gamma_exp:g} has no finite slope at 0; wrong branch assembled"
        )
    if isinstance(term, MLTerm):
        if term.gamma_exp == 1.0:
            return term.c * reciprocal_gamma(term.ml.b)
        if term.gamma_exp == 0.0:
            if term.ml.a > 1.0 or term.lam == 0.0:
                return 0.0
            if term.ml.a == 1.0:
                return term.c * term.lam * reciprocal_gamma(term.ml.b + 1.0)
            raise StructuralError(
                "ML term with a <= 1 has unbounded slope at 0; wrong branch assembled"
            )
        if term.gamma_exp > 1.0:
            return 0.0
        raise StructuralError("fractional leading exponent below 1 at t=0")
    # ConvTerm: smallest exponent is >= a > 1 whenever a slope check applies
    return 0.0


# ---------------------------------------------------------------------------
# exact Caputo rules


def caputo_power(alpha: FractionalOrder, gamma_exp: float, t: float) -> float:
    """Caputo derivative of t**gamma_exp (coefficient 1) at t > 0.

    D^alpha t^g = Gamma(g+1)/Gamma(g+1-alpha) t^(g-alpha); zero when g is an
    integer 0..k-1.
    """
    if t <= 0.0:
        raise ValueError("caputo_power requires t > 0")
    g = gamma_exp
    if g == math.floor(g) and g <= alpha.k - 1:
        return 0.0
    return gamma(g + 1.0) / gamma(g + 1.0 - alpha.alpha) * t ** (g - alpha.alpha)


def _is_eigen_ml(term: MLTerm, alpha: FractionalOrder) -> bool:
    if abs(term.ml.a - alpha.alpha) > 1e-12:
        return False
    if term.gamma_exp == 0.0 and term.ml.b == 1.0:
        return True
    # t E_{alpha,2}(lam t^alpha) is an eigenfunction only once D^alpha kills t
    if term.gamma_exp == 1.0 and term.ml.b == 2.0 and alpha.alpha > 1.0:
        return True
    return False


# ---------------------------------------------------------------------------
# product-integration quadrature of the defining integral


def _pow_diff(big: np.ndarray, small: np.ndarray, q) -> np.ndarray:
    """big**q - small**q for 0 <= small <= big, stable when they are close."""
    big, small, q = np.broadcast_arrays(
        np.asarray(big, dtype=float), np.asarray(small, dtype=float), np.asarray(q, dtype=float)
    )
    out = np.zeros(big.shape)
    nz = big > 0.0
    ratio = np.ones_like(out)
    ratio[nz] = small[nz] / big[nz]
    out[nz] = big[nz] ** q[nz] * (-np.expm1(q[nz] * np.log(np.maximum(ratio[nz], 1e-320))))
    tiny = nz & (small <= 0.0)
    out[tiny] = big[tiny] ** q[tiny]
    return out


def caputo_mesh(t: float, n: int) -> np.ndarray:
    """Dual-graded quadrature mesh on [0, t]."""
    n1 = n // 2
    n2 = n - n1
    left = 0.5 * t * (np.arange(n1 + 1) / n1) ** GRADE_ZERO
    right = t - 0.5 * t * (np.arange(n2, -1, -1) / n2) ** GRADE_KERNEL
    return np.concatenate([left[:-1], right])


def _kernel_cell_moments(t: float, a: np.ndarray, b: np.ndarray, p: float):
    """(I0, I1, I2) of (t-y)^p (y-a)^m over cells [a, b], m = 0, 1, 2.

    The direct antiderivative differences cancel catastrophically when the
    cell is much narrower than its distance to the kernel singularity, so
    those cells use the binomial series of (1 - u/A)^p instead.
    """
    big = t - a
    small = t - b
    width = b - a
    i0 = np.empty_like(big)
    i1 = np.empty_like(big)
    i2 = np.empty_like(big)
    x = width / big
    near = x >= 0.01
    if near.any():
        A, B = big[near], small[near]
        d1 = _pow_diff(A, B, p + 1.0) / (p + 1.0)
        d2 = _pow_diff(A, B, p + 2.0) / (p + 2.0)
        d3 = _pow_diff(A, B, p + 3.0) / (p + 3.0)
        i0[near] = d1
        i1[near] = A * d1 - d2
        i2[near] = A * A * d1 - 2.0 * A * d2 + d3
    far = ~near
    if far.any():
        A = big[far]
        w = width[far]
        xf = x[far]
        # I_m = A^p w^{m+1} sum_i binom(p, i) (-x)^i / (m+i+1)
        binom = 1.0
        s0 = np.zeros_like(A)
        s1 = np.zeros_like(A)
        s2 = np.zeros_like(A)
        xpow = np.ones_like(A)
        for i in range(8):
            s0 += binom * xpow / (i + 1.0)
            s1 += binom * xpow / (i + 2.0)
            s2 += binom * xpow / (i + 3.0)
            binom *= (p - i) / (i + 1.0)
            xpow *= -xf
        Ap = A**p
        i0[far] = Ap * w * s0
        i1[far] = Ap * w * w * s1
        i2[far] = Ap * w * w * w * s2
    return i0, i1, i2


def _eval_on(f: Callable, ys: np.ndarray) -> np.ndarray:
    try:
        vals = np.asarray(f(ys), dtype=float)
        if vals.shape != ys.shape:
            raise ValueError
        return vals
    except Exception:
        return np.array([float(f(float(y))) for y in ys])


def caputo_quad(
    f_kth_derivative: Callable,
    alpha: FractionalOrder,
    t: float,
    n: int,
) -> float:
    """Caputo derivative by product integration of the defining integral.

    The callable is the k-th classical derivative of the target function and
    is never evaluated at y = 0 (the first cell uses its right endpoint), so
    integrable derivative singularities at 0 are tolerated.
    """
    if n < 8:
        raise ValueError(f"caputo_quad needs n >= 8, got {n}")
    if t <= 0.0:
        raise ValueError("caputo_quad requires t > 0")
    k = alpha.k
    if alpha.is_integer:
        return float(np.atleast_1d(_eval_on(f_kth_derivative, np.array([t])))[0])
    nodes = caputo_mesh(t, n)
    g = _eval_on(f_kth_derivative, nodes[1:])
    p = k - alpha.alpha - 1.0

    def fit_moment(af, bf, s):
        # integral of (t-y)^p (y/bf)^s over the cell, kernel frozen mid-cell
        kern_mid = (t - 0.5 * (af + bf)) ** p
        return kern_mid * _pow_diff(bf, af, s + 1.0) / ((s + 1.0) * bf**s)

    total = _product_quad(
        nodes, g, lambda A, B: _kernel_cell_moments(t, A, B, p), fit_moment, 0.25 * t
    )
    return total / gamma(k - alpha.alpha)


def _product_quad(nodes, g, moments, fit_moment, fit_limit) -> float:
    """Product integration of kernel * f against a graded mesh.

    nodes: mesh including y=0; g: f at nodes[1:] (y=0 never evaluated).
    moments(A, B): exact (I0, I1, I2) of the kernel times (y-A)^m per cell.
    Cells use sliding-quadratic interpolation of f; cells below fit_limit
    where f still changes by more than ~5 % per cell switch to a local power
    fit f ~ f_b (y/b)^s with cell integral fit_moment(a, b, s) (exact for
    pure powers, which is how integrable derivative singularities at 0
    enter).  The first cell uses its right endpoint value.
    """
    a = nodes[:-1]
    b = nodes[1:]
    i0, i1, i2 = moments(a, b)
    m = len(g)
    c0 = np.concatenate([[g[0]], g[:-1]])  # value at cell start
    contrib = c0 * i0
    if m >= 3:
        # quadratic stencil for cell j>=1 through nodes (j-1, j, j+1),
        # forward-shifted at j=1 and clipped at the last cell
        j = np.arange(1, m)
        lo = np.clip(j - 2, 0, m - 3)  # stencil base index into g
        y0 = nodes[lo + 1]
        y1 = nodes[lo + 2]
        y2 = nodes[lo + 3]
        g0 = g[lo]
        g1 = g[lo + 1]
        g2 = g[lo + 2]
        astart = a[j]
        dd01 = (g1 - g0) / (y1 - y0)
        dd12 = (g2 - g1) / (y2 - y1)
        c2 = (dd12 - dd01) / (y2 - y0)
        c1 = dd01 + c2 * (2.0 * astart - y0 - y1)
        contrib[j] = c0[j] * i0[j] + c1 * i1[j] + c2 * i2[j]
    gb = g
    ga = c0
    with np.errstate(divide="ignore", invalid="ignore"):
        fit = (
            (a > 0.0)
            & (b <= fit_limit)
            & (ga * gb > 0.0)
            & (np.abs(np.log(np.abs(np.where(ga != 0.0, gb / ga, 1.0)))) > 0.05)
        )
    if fit.any():
        af, bf = a[fit], b[fit]
        s = np.log(gb[fit] / ga[fit]) / np.log(bf / af)
        s = np.clip(s, -0.99, 60.0)
        contrib[fit] = gb[fit] * fit_moment(af, bf, s)
    return float(np.sum(contrib))


# ---------------------------------------------------------------------------
# weakly singular convolution


def _factor_split(factor: Union[PowerTerm, MLTerm]):
    """Split a factor into (power exponent sigma, smooth part g(y))."""
    if isinstance(factor, PowerTerm):
        return factor.gamma_exp, (lambda ys: np.full_like(ys, factor.c))
    sigma = factor.gamma_exp

    def smooth(ys: np.ndarray) -> np.ndarray:
        return factor.c * ml_eval_batch(factor.ml, factor.lam * ys**factor.ml.a)

    return sigma, smooth


def _factor_value(factor: Union[PowerTerm, MLTerm], ys: np.ndarray) -> np.ndarray:
    sigma, smooth = _factor_split(factor)
    return ys**sigma * smooth(ys)


def _power_cell_moments(a: np.ndarray, b: np.ndarray, sigma: float):
    """(M0, M1, M2) of y^sigma (y-a)^m over cells [a, b]."""
    d1 = _pow_diff(b, a, sigma + 1.0) / (sigma + 1.0)
    d2 = _pow_diff(b, a, sigma + 2.0) / (sigma + 2.0)
    d3 = _pow_diff(b, a, sigma + 3.0) / (sigma + 3.0)
    m0 = d1
    m1 = d2 - a * d1
    m2 = d3 - 2.0 * a * d2 + a * a * d1
    return m0, m1, m2


def _half_convolution(
    sing: Union[PowerTerm, MLTerm],
    other: Union[PowerTerm, MLTerm],
    t: float,
    m: int,
) -> float:
    """int_0^{t/2} y^sigma g_sing(y) other(t - y) dy by product integration."""
    sigma, smooth = _factor_split(sing)
    nodes = 0.5 * t * (np.arange(m + 1) / m) ** GRADE_ZERO
    h = smooth(nodes[1:]) * _factor_value(other, t - nodes[1:])

    def fit_moment(af, bf, s):
        return _pow_diff(bf, af, sigma + s + 1.0) / ((sigma + s + 1.0) * bf**s)

    return _product_quad(
        nodes,
        h,
        lambda A, B: _power_cell_moments(A, B, sigma),
        fit_moment,
        0.125 * t,
    )


@lru_cache(maxsize=8192)
def _convolve_cached(left: Term, right: Term, t: float, n: int) -> float:
    m = n // 2
    return _half_convolution(left, right, t, m) + _half_convolution(right, left, t, m)


def convolve(left: Term, right: Term, t: float, n: int) -> float:
    """(left * right)(t) = int_0^t left(y) right(t-y) dy.

    Product integration: each half of [0, t] pulls its own factor's power
    singularity into exact moments and interpolates the remaining smooth
    factor piecewise-linearly on a mesh graded toward the singular endpoint.
    Values are memoised per (terms, t, n).
    """
    if n < 8:
        raise ValueError(f"convolve needs n >= 8, got {n}")
    if t < 0.0:
        raise ValueError("convolve requires t >= 0")
    if t == 0.0:
        return 0.0
    for f in (left, right):
        if isinstance(f, ConvTerm):
            raise ValueError("convolve factors must be PowerTerm or MLTerm")
        if f.gamma_exp <= -1.0:
            raise ValueError("convolution factor exponent must exceed -1")
    return _convolve_cached(left, right, float(t), int(n))


# ---------------------------------------------------------------------------
# Caputo derivative of a full time coefficient


def _term_kth_derivative(term: Term, k: int, quad_n: int) -> Callable:
    def deriv(ys):
        return term_value(term, ys, order=k, quad_n=quad_n)

    return deriv


def caputo_term(term: Term, alpha: FractionalOrder, t: float, quad_n: int) -> float:
    if isinstance(term, PowerTerm):
        if term.c == 0.0:
            return 0.0
        return term.c * caputo_power(alpha, term.gamma_exp, t)
    if isinstance(term, MLTerm) and _is_eigen_ml(term, alpha):
        return term.lam * term_value(term, t)
    return caputo_quad(_term_kth_derivative(term, alpha.k, quad_n), alpha, t, quad_n)


@lru_cache(maxsize=65536)
def _ctc_cached(tc: TimeCoefficient, alpha: FractionalOrder, t: float, quad_n: int) -> float:
    return sum(caputo_term(term, alpha, t, quad_n) for term in tc.terms)


def caputo_time_coefficient(
    tc: TimeCoefficient,
    alpha: FractionalOrder,
    t: float,
    quad_n: int = DEFAULT_QUAD_N,
) -> float:
    """D^alpha of a time coefficient at t > 0.

    Power terms use the exact rule, eigen-structured ML terms the eigenvalue
    rules, everything else the product-integration quadrature with the k-th
    derivative supplied by term-wise series differentiation.  Results are
    memoised (the residual grids revisit the same times).
    """
    if t <= 0.0:
        raise ValueError("caputo_time_coefficient requires t > 0")
    return _ctc_cached(tc, alpha, float(t), int(quad_n))
