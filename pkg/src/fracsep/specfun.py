"""Gamma and two-parameter Mittag-Leffler evaluation.

Scalar bedrock for the rest of the package: everything fractional eventually
reduces to Gamma ratios and E_{a,b}(z) values.

The Mittag-Leffler series is summed in up to three tiers, all of them the
same direct series, differing only in working precision:

1. float64 with Neumaier compensated summation and a term recurrence built
   from cached Gamma ratios;
2. double-double (~32 significant digits) with Gamma ratios tabulated once
   per (a, b) via mpmath, for alternating arguments whose cancellation
   exceeds what float64 can pay for;
3. mpmath at a precision chosen from the observed cancellation ratio, for
   the rare extreme cases.

Arguments outside the declared domain, or series that have not converged by
the 500-term guard, raise PrecisionError rather than return a silently wrong
value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, PrecisionError

# Lanczos coefficients for g = 7, n = 9 (Godfrey's tabulation, widely
# reproduced, e.g. in Boost.Math and the GSL).  ~15 significant digits on the
# positive real axis.
_LANCZOS_G = 7.0
_LANCZOS_C = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)

# Mittag-Leffler working limits.  Outside these the direct series (with the
# 500-term guard) is not certifiably accurate, so we refuse rather than
# extrapolate.
ML_MAX_TERMS = 500
ML_MAX_ABS_Z = 100.0
ML_MIN_A = 0.4
_REL_CUTOFF = 1.0e-18
# max|term|/|sum| thresholds at which each tier hands over to the next
_F64_RATIO = 1.0e3
_DD_RATIO = 1.0e20


def _is_nonpositive_integer(x: float) -> bool:
    return x <= 0.0 and x == math.floor(x)


def _lanczos_series(z: float) -> float:
    s = _LANCZOS_C[0]
    for i, c in enumerate(_LANCZOS_C[1:], start=1):
        s += c / (z + i)
    return s


def lgamma_pos(x: float) -> float:
    """log Gamma(x) for x > 0 (Lanczos, no reflection)."""
    if x <= 0.0:
        raise DomainError(f"lgamma_pos requires x > 0, got {x}")
    if x < 0.5:
        # log Gamma(x) = log Gamma(x+1) - log x keeps the series argument sane
        return lgamma_pos(x + 1.0) - math.log(x)
    z = x - 1.0
    t = z + _LANCZOS_G + 0.5
    s = _lanczos_series(z)
    return 0.5 * math.log(2.0 * math.pi) + (z + 0.5) * math.log(t) - t + math.log(s)


def gamma(x: float) -> float:
    """Gamma(x) for real x not a nonpositive integer.

    Reflection is used for x < 0.5.  Relative error <= 1e-12 on [0.05, 170].
    """
    if not math.isfinite(x):
        raise DomainError(f"gamma requires finite x, got {x}")
    if _is_nonpositive_integer(x):
        raise DomainError(f"gamma pole at x = {x:g} (nonpositive integer)")
    if x < 0.5:
        # Gamma(x) Gamma(1-x) = pi / sin(pi x)
        s = math.sin(math.pi * x)
        return math.pi / (s * gamma(1.0 - x))
    if x > 171.62:
        return math.inf
    z = x - 1.0
    t = z + _LANCZOS_G + 0.5
    s = _lanczos_series(z)
    # assemble in log space so t**(z+0.5) cannot overflow prematurely
    return math.sqrt(2.0 * math.pi) * s * math.exp((z + 0.5) * math.log(t) - t)


def reciprocal_gamma(x: float) -> float:
    """1 / Gamma(x); zero at the poles instead of an error."""
    if _is_nonpositive_integer(x):
        return 0.0
    return 1.0 / gamma(x)


@dataclass(frozen=True)
class MLParams:
    """Parameters (a, b) of the two-parameter Mittag-Leffler function."""

    a: float
    b: float

    def __post_init__(self) -> None:
        if not (self.a > 0.0 and math.isfinite(self.a)):
            raise DomainError(f"ML parameter a must be positive, got {self.a}")
        if not math.isfinite(self.b):
            raise DomainError(f"ML parameter b must be finite, got {self.b}")


# ---------------------------------------------------------------------------
# double-double helpers (Dekker/Knuth, no fma required).  All operate on
# numpy arrays or scalars elementwise.

_SPLITTER = 134217729.0  # 2**27 + 1


def _two_sum(a, b):
    s = a + b
    v = s - a
    e = (a - (s - v)) + (b - v)
    return s, e


def _quick_two_sum(a, b):
    s = a + b
    e = b - (s - a)
    return s, e


def _two_prod(a, b):
    p = a * b
    aa = _SPLITTER * a
    ahi = aa - (aa - a)
    alo = a - ahi
    bb = _SPLITTER * b
    bhi = bb - (bb - b)
    blo = b - bhi
    e = ((ahi * bhi - p) + ahi * blo + alo * bhi) + alo * blo
    return p, e


def _dd_mul_fl(xh, xl, f):
    p, e = _two_prod(xh, f)
    e = e + xl * f
    return _quick_two_sum(p, e)


def _dd_mul_dd(xh, xl, yh, yl):
    p, e = _two_prod(xh, yh)
    e = e + (xh * yl + xl * yh)
    return _quick_two_sum(p, e)


def _dd_add_dd(xh, xl, yh, yl):
    s, e = _two_sum(xh, yh)
    e = e + (xl + yl)
    return _quick_two_sum(s, e)


# ---------------------------------------------------------------------------
# cached term-ratio tables: ratio[k] = Gamma(a k + b) / Gamma(a (k+1) + b),
# so that term_{k+1} = term_k * z * ratio[k].

class _MLTables:
    def __init__(self, a: float, b: float) -> None:
        self.a = a
        self.b = b
        lg = [lgamma_pos(a * k + b) for k in range(ML_MAX_TERMS + 2)]
        self.ratio64 = np.array(
            [math.exp(lg[k] - lg[k + 1]) for k in range(ML_MAX_TERMS + 1)]
        )
        self.ratio64_list = self.ratio64.tolist()
        self.term0 = 1.0 / gamma(b)
        self._dd = None

    def dd(self):
        if self._dd is None:
            import mpmath

            with mpmath.workdps(40):
                vals = [mpmath.gamma(self.a * k + self.b) for k in range(ML_MAX_TERMS + 2)]
                hi = np.empty(ML_MAX_TERMS + 1)
                lo = np.empty(ML_MAX_TERMS + 1)
                for k in range(ML_MAX_TERMS + 1):
                    r = vals[k] / vals[k + 1]
                    h = float(r)
                    hi[k] = h
                    lo[k] = float(r - mpmath.mpf(h))
                t0 = 1 / vals[0]
                t0h = float(t0)
                t0l = float(t0 - mpmath.mpf(t0h))
            self._dd = (hi, lo, t0h, t0l)
        return self._dd


_tables_cache: dict[tuple[float, float], _MLTables] = {}


def _tables(p: MLParams) -> _MLTables:
    key = (p.a, p.b)
    tab = _tables_cache.get(key)
    if tab is None:
        tab = _MLTables(p.a, p.b)
        _tables_cache[key] = tab
    return tab


def _ml_check_domain(p: MLParams, zmax: float) -> None:
    if zmax == 0.0:
        return
    if p.a < ML_MIN_A or zmax > ML_MAX_ABS_Z:
        raise PrecisionError(
            f"E_({p.a:g},{p.b:g}) at |z| = {zmax:g} is outside the supported "
            f"domain (|z| <= {ML_MAX_ABS_Z:g} with a >= {ML_MIN_A:g})"
        )


def _nonconvergence(p: MLParams, z) -> PrecisionError:
    return PrecisionError(
        f"E_({p.a:g},{p.b:g}) series did not converge within "
        f"{ML_MAX_TERMS} terms at z = {z}"
    )


def _ml_pass_f64(tab: _MLTables, z: np.ndarray):
    """Vectorised Neumaier pass. Returns (sum, max|term|, converged mask)."""
    term = np.full(z.shape, tab.term0)
    total = term.copy()
    comp = np.zeros_like(total)
    maxabs = np.abs(term)
    streak = np.zeros(z.shape, dtype=np.int8)
    active = np.ones(z.shape, dtype=bool)
    converged = np.zeros(z.shape, dtype=bool)
    ratio64 = tab.ratio64
    for k in range(ML_MAX_TERMS):
        term = term * (z * ratio64[k])
        t = total + term
        big = np.abs(total) >= np.abs(term)
        comp = comp + np.where(big, (total - t) + term, (term - t) + total)
        total = t
        np.maximum(maxabs, np.abs(term), out=maxabs)
        small = np.abs(term) <= _REL_CUTOFF * np.maximum(np.abs(total + comp), 1e-300)
        streak = np.where(small, streak + 1, 0)
        done = active & (streak >= 2) & (k >= 3)
        converged |= done
        active &= ~done
        if not active.any():
            break
    return total + comp, maxabs, converged


def _ml_pass_dd(tab: _MLTables, z: np.ndarray):
    """Double-double pass. Returns (sum, max|term|, converged mask)."""
    rhi, rlo, t0h, t0l = tab.dd()
    th = np.full(z.shape, t0h)
    tl = np.full(z.shape, t0l)
    sh, sl = th.copy(), tl.copy()
    maxabs = np.abs(th)
    streak = np.zeros(z.shape, dtype=np.int8)
    converged = np.zeros(z.shape, dtype=bool)
    active = np.ones(z.shape, dtype=bool)
    for k in range(ML_MAX_TERMS):
        th, tl = _dd_mul_fl(th, tl, z)
        th, tl = _dd_mul_dd(th, tl, rhi[k], rlo[k])
        sh, sl = _dd_add_dd(sh, sl, th, tl)
        np.maximum(maxabs, np.abs(th), out=maxabs)
        small = np.abs(th) <= 1e-36 * np.maximum(np.abs(sh), 1e-300)
        streak = np.where(small, streak + 1, 0)
        done = active & (streak >= 2) & (k >= 3)
        converged |= done
        active &= ~done
        if not active.any():
            break
    return sh + sl, maxabs, converged


def _ml_mp(p: MLParams, z: float, extra_digits: int) -> float:
    import mpmath

    with mpmath.workdps(30 + extra_digits):
        total = mpmath.mpf(0)
        zz = mpmath.mpf(z)
        for k in range(ML_MAX_TERMS + 1):
            arg = p.a * k + p.b
            if _is_nonpositive_integer(arg):
                continue
            term = zz**k / mpmath.gamma(arg)
            total += term
            if k >= 4 and abs(term) < abs(total) * mpmath.mpf(10) ** (-25 - extra_digits):
                return float(total)
    raise _nonconvergence(p, z)


def _ml_direct_scalar(p: MLParams, z: float) -> float:
    # fallback for b <= 0 (gamma poles/negative args on the recurrence path)
    total = reciprocal_gamma(p.b)
    maxabs = abs(total)
    for k in range(1, ML_MAX_TERMS + 1):
        arg = p.a * k + p.b
        if _is_nonpositive_integer(arg):
            continue
        term = z**k / gamma(arg)
        total += term
        maxabs = max(maxabs, abs(term))
        if k >= 4 and abs(term) <= _REL_CUTOFF * max(abs(total), 1e-300):
            if maxabs / max(abs(total), 1e-300) > _F64_RATIO:
                ratio = maxabs / max(abs(total), 1e-300)
                return _ml_mp(p, z, int(math.ceil(math.log10(ratio))))
            return total
    raise _nonconvergence(p, z)


def ml_eval(p: MLParams, z: float) -> float:
    """E_{a,b}(z) by the direct series with compensated summation."""
    try:
        z = float(z)
    except (TypeError, ValueError) as exc:
        raise DomainError(f"ml_eval requires finite real z, got {z!r}") from exc
    if not math.isfinite(z):
        raise DomainError(f"ml_eval requires finite real z, got {z!r}")
    if z == 0.0:
        return reciprocal_gamma(p.b)
    _ml_check_domain(p, abs(z))
    if p.b <= 0.0:
        return _ml_direct_scalar(p, z)

    # scalar Neumaier fast loop; hands over to the dd/mp tiers via the batch
    # entry when cancellation is too heavy
    tab = _tables(p)
    ratio64 = tab.ratio64_list
    term = tab.term0
    total = term
    comp = 0.0
    maxabs = abs(term)
    streak = 0
    for k in range(ML_MAX_TERMS):
        term *= z * ratio64[k]
        t = total + term
        if abs(total) >= abs(term):
            comp += (total - t) + term
        else:
            comp += (term - t) + total
        total = t
        at = abs(term)
        if at > maxabs:
            maxabs = at
        if at <= _REL_CUTOFF * max(abs(total + comp), 1e-300):
            streak += 1
            if streak >= 2 and k >= 3:
                result = total + comp
                if maxabs <= _F64_RATIO * max(abs(result), 1e-300):
                    return result
                return float(ml_eval_batch(p, np.array([z]))[0])
        else:
            streak = 0
    raise _nonconvergence(p, z)


def ml_eval_batch(p: MLParams, z: np.ndarray) -> np.ndarray:
    """Vectorised E_{a,b} over an array of arguments."""
    z = np.asarray(z, dtype=float)
    if z.size == 0:
        return np.zeros_like(z)
    if not np.all(np.isfinite(z)):
        raise DomainError("ml_eval_batch requires finite z")
    _ml_check_domain(p, float(np.max(np.abs(z))))
    if p.b <= 0.0:
        return np.array([_ml_direct_scalar(p, float(v)) for v in z.ravel()]).reshape(z.shape)

    tab = _tables(p)
    flat = z.ravel()
    out, maxabs, converged = _ml_pass_f64(tab, flat)
    if not converged.all():
        raise _nonconvergence(p, flat[~converged][0])
    ratio = maxabs / np.maximum(np.abs(out), 1e-300)
    need_dd = ratio > _F64_RATIO
    if need_dd.any():
        sub = flat[need_dd]
        dd_out, dd_max, dd_conv = _ml_pass_dd(tab, sub)
        if not dd_conv.all():
            raise _nonconvergence(p, sub[~dd_conv][0])
        dd_ratio = dd_max / np.maximum(np.abs(dd_out), 1e-300)
        need_mp = dd_ratio > _DD_RATIO
        if need_mp.any():
            for i in np.nonzero(need_mp)[0]:
                extra = int(math.ceil(math.log10(dd_ratio[i])))
                dd_out[i] = _ml_mp(p, float(sub[i]), extra)
        out = out.copy()
        out[need_dd] = dd_out
    return out.reshape(z.shape)
