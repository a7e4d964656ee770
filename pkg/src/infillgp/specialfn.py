"""Special functions and quadrature used by the covariance kernels.

``bessel_k`` evaluates the modified Bessel function of the second kind for a
scalar real order and an array of positive arguments.  The order is reduced to
``mu`` in [-1/2, 1/2]; ``K_mu`` and ``K_{mu+1}`` come from Temme's series for
``x < 2`` and Steed's continued fraction (CF2) for ``x >= 2``, and forward
recurrence lifts them to the requested order.
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import AccuracyError, DomainError, ValidationError

_EPS = 1.0e-16
_MAXIT = 10000
_XMIN = 2.0

# Taylor coefficients of 1/Gamma(z) = sum_k c_k z^k (k = 1..26).
_RGAMMA_COEF = (
    1.0,
    0.5772156649015329,
    -0.6558780715202538,
    -0.0420026350340952,
    0.1665386113822915,
    -0.0421977345555443,
    -0.0096219715278770,
    0.0072189432466630,
    -0.0011651675918591,
    -0.0002152416741149,
    0.0001280502823882,
    -0.0000201348547807,
    -0.0000012504934821,
    0.0000011330272320,
    -0.0000002056338417,
    0.0000000061160950,
    0.0000000050020075,
    -0.0000000011812746,
    0.0000000001043427,
    0.0000000000077823,
    -0.0000000000036968,
    0.0000000000005100,
    -0.0000000000000206,
    -0.0000000000000054,
    0.0000000000000014,
    0.0000000000000001,
)


@dataclass(frozen=True)
class QuadratureSpec:
    abs_tol: float = 1e-10
    rel_tol: float = 1e-8
    max_subdivisions: int = 500

    def __post_init__(self):
        if not (self.abs_tol > 0 and self.rel_tol > 0):
            raise ValidationError("quadrature tolerances must be strictly positive")
        if self.max_subdivisions < 1:
            raise ValidationError("max_subdivisions must be at least 1")


def log_gamma(x):
    """Natural log of the gamma function for positive ``x`` (scalar or array)."""
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
        raise DomainError("log_gamma requires finite x > 0")
    if arr.ndim == 0:
        return math.lgamma(float(arr))
    return np.vectorize(math.lgamma, otypes=[float])(arr)


def digamma(x: float) -> float:
    """Digamma function psi(x) for real x that is not a non-positive integer."""
    x = float(x)
    if not math.isfinite(x):
        raise DomainError("digamma requires finite x")
    if x <= 0 and x == math.floor(x):
        raise DomainError("digamma has poles at non-positive integers")
    if x < 0.5:
        return digamma(1.0 - x) - math.pi / math.tan(math.pi * x)
    acc = 0.0
    while x < 10.0:
        acc -= 1.0 / x
        x += 1.0
    inv2 = 1.0 / (x * x)
    tail = inv2 * (1.0 / 12 - inv2 * (1.0 / 120 - inv2 * (1.0 / 252 - inv2 * (
        1.0 / 240 - inv2 * (1.0 / 132 - inv2 * (691.0 / 32760 - inv2 / 12))))))
    return acc + math.log(x) - 0.5 / x - tail


def _temme_gammas(mu: float):
    """gam1, gam2, 1/Gamma(1+mu), 1/Gamma(1-mu) for |mu| <= 1/2."""
    gampl = sum(c * mu ** k for k, c in enumerate(_RGAMMA_COEF))
    gammi = sum(c * (-mu) ** k for k, c in enumerate(_RGAMMA_COEF))
    gam1 = -sum(c * mu ** (k - 1) for k, c in enumerate(_RGAMMA_COEF) if k % 2 == 1)
    gam2 = sum(c * mu ** k for k, c in enumerate(_RGAMMA_COEF) if k % 2 == 0)
    return gam1, gam2, gampl, gammi


def _k_small(mu: float, x: np.ndarray):
    """Temme series: (K_mu(x), K_{mu+1}(x)) for 0 < x < 2."""
    gam1, gam2, gampl, gammi = _temme_gammas(mu)
    x2 = 0.5 * x
    pimu = math.pi * mu
    fact = 1.0 if abs(pimu) < _EPS else pimu / math.sin(pimu)
    d = -np.log(x2)
    e = mu * d
    with np.errstate(invalid="ignore", divide="ignore"):
        fact2 = np.where(np.abs(e) < _EPS, 1.0, np.sinh(e) / e)
    ff = fact * (gam1 * np.cosh(e) + gam2 * fact2 * d)
    total = ff.copy()
    e = np.exp(e)
    p = 0.5 * e / gampl
    q = 0.5 / (e * gammi)
    c = np.ones_like(x)
    dd = x2 * x2
    total1 = p.copy()
    mu2 = mu * mu
    for i in range(1, _MAXIT + 1):
        ff = (i * ff + p + q) / (i * i - mu2)
        c = c * (dd / i)
        p = p / (i - mu)
        q = q / (i + mu)
        delta = c * ff
        total += delta
        total1 += c * (p - i * ff)
        if np.all(np.abs(delta) < np.abs(total) * _EPS):
            break
    else:
        raise AccuracyError("Temme series for K_nu did not converge")
    return total, total1 * (2.0 / x)


def _k_large(mu: float, x: np.ndarray):
    """Steed's CF2: (K_mu(x), K_{mu+1}(x)) for x >= 2."""
    mu2 = mu * mu
    n = x.size
    b = 2.0 * (1.0 + x)
    d = 1.0 / b
    h = d.copy()
    delh = d.copy()
    q1 = np.zeros(n)
    q2 = np.ones(n)
    a1 = 0.25 - mu2
    q = np.full(n, a1)
    c = np.full(n, a1)
    a = np.full(n, -a1)
    s = 1.0 + q * delh
    active = np.arange(n)
    for i in range(2, _MAXIT + 1):
        if active.size == 0:
            break
        j = active
        a[j] -= 2 * (i - 1)
        c[j] = -a[j] * c[j] / i
        qnew = (q1[j] - b[j] * q2[j]) / a[j]
        q1[j] = q2[j]
        q2[j] = qnew
        q[j] += c[j] * qnew
        b[j] += 2.0
        d[j] = 1.0 / (b[j] + a[j] * d[j])
        delh[j] = (b[j] * d[j] - 1.0) * delh[j]
        h[j] += delh[j]
        dels = q[j] * delh[j]
        s[j] += dels
        active = j[np.abs(dels / s[j]) >= _EPS]
    else:
        if active.size:
            raise AccuracyError("continued fraction for K_nu did not converge")
    h = a1 * h
    kmu = np.sqrt(math.pi / (2.0 * x)) * np.exp(-x) / s
    k1 = kmu * (mu + x + 0.5 - h) / x
    return kmu, k1


def bessel_k(order: float, x):
    """Modified Bessel function of the second kind ``K_order(x)``.

    Parameters
    ----------
    order : float
        Real order, ``order >= 0``.  ``K`` is even in the order so callers
        with negative orders should pass ``abs(order)``.
    x : float or ndarray
        Strictly positive arguments.

    Returns
    -------
    float or ndarray
        Same shape as ``x``.
    """
    nu = float(order)
    if not math.isfinite(nu) or nu < 0:
        raise DomainError("bessel_k requires a finite order >= 0")
    xa = np.asarray(x, dtype=float)
    scalar = xa.ndim == 0
    xa = np.atleast_1d(xa).ravel()
    if not np.all(np.isfinite(xa)) or np.any(xa <= 0):
        raise DomainError("bessel_k requires finite x > 0")
    nl = int(nu + 0.5)
    mu = nu - nl
    kmu = np.empty_like(xa)
    k1 = np.empty_like(xa)
    small = xa < _XMIN
    if np.any(small):
        kmu[small], k1[small] = _k_small(mu, xa[small])
    if np.any(~small):
        kmu[~small], k1[~small] = _k_large(mu, xa[~small])
    xi2 = 2.0 / xa
    with np.errstate(over="ignore"):
        for i in range(1, nl + 1):
            kmu, k1 = k1, (mu + i) * xi2 * k1 + kmu
    out = kmu.reshape(np.shape(x)) if not scalar else float(kmu[0])
    return out


# Gauss-Kronrod 15/7 nodes and weights on [-1, 1] (positive half, centre last).
_XGK = np.array([
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.0])
_WGK = np.array([
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714])
_WG = np.array([
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327])

_NODES = np.concatenate([-_XGK[:-1], _XGK[::-1]])
_KW = np.concatenate([_WGK[:-1], _WGK[::-1]])
_GW = np.zeros(15)
# Gauss nodes are the odd-indexed Kronrod nodes (1, 3, 5) and the centre.
for _k, _w in zip((1, 3, 5), _WG[:3]):
    _GW[_k] = _w
    _GW[14 - _k] = _w
_GW[7] = _WG[3]


def _gk15(f, a, b):
    c = 0.5 * (a + b)
    h = 0.5 * (b - a)
    fx = np.asarray(f(c + h * _NODES), dtype=float)
    if fx.shape != (15,):
        fx = np.broadcast_to(fx, (15,))
    if not np.all(np.isfinite(fx)):
        raise AccuracyError("integrand not finite on the integration interval")
    kron = h * float(_KW @ fx)
    gauss = h * float(_GW @ fx)
    return kron, abs(kron - gauss)


def _as_vector_fn(integrand):
    def f(t):
        try:
            out = integrand(t)
            out = np.asarray(out, dtype=float)
            if out.shape == np.shape(t):
                return out
        except (TypeError, ValueError):
            pass
        return np.array([float(integrand(float(v))) for v in t])
    return f


def _tail_map(f, a, sign):
    """Integrand on (0, 1] for ``t = a + sign*u/(1-u)`` written in ``v = 1 - u``.

    The infinite end sits at v -> 0, where floating point resolves the
    algebraic singularities that heavy tails produce after the mapping.
    """
    def g(v):
        v = np.asarray(v, dtype=float)
        ft = f(a + sign * (1.0 - v) / v)
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            out = ft / (v * v)
        return np.where(ft == 0, 0.0, out)
    return g


def integrate(integrand: Callable, lower: float, upper: float,
              spec: QuadratureSpec | None = None) -> float:
    """Adaptive Gauss-Kronrod (15-point) integral of ``integrand`` over [lower, upper].

    Infinite limits are mapped to finite intervals with ``t = u / (1 - u)``
    (and its mirror for ``-inf``), evaluated in ``v = 1 - u``.  The integrand
    may be vectorized; scalar callables are wrapped.
    """
    spec = spec or QuadratureSpec()
    f = _as_vector_fn(integrand)
    lower = float(lower)
    upper = float(upper)
    if lower == upper:
        return 0.0
    if lower > upper:
        return -integrate(integrand, upper, lower, spec)
    if math.isinf(lower) and math.isinf(upper):
        half = QuadratureSpec(spec.abs_tol / 2, spec.rel_tol, spec.max_subdivisions)
        return integrate(integrand, -math.inf, 0.0, half) + integrate(integrand, 0.0, math.inf, half)
    if math.isinf(upper):
        return _adaptive(_tail_map(f, lower, 1.0), 0.0, 1.0, spec)
    if math.isinf(lower):
        return _adaptive(_tail_map(f, upper, -1.0), 0.0, 1.0, spec)
    return _adaptive(f, lower, upper, spec)


def _adaptive(f, a, b, spec):
    val, err = _gk15(f, a, b)
    heap = [(-err, a, b, val)]
    total, total_err = val, err
    n_sub = 1
    while total_err > max(spec.abs_tol, spec.rel_tol * abs(total)):
        if n_sub >= spec.max_subdivisions:
            raise AccuracyError(
                f"quadrature did not converge in {spec.max_subdivisions} subdivisions",
                estimate=total, error=total_err)
        neg_err, lo, hi, v = heapq.heappop(heap)
        mid = 0.5 * (lo + hi)
        if not (lo < mid < hi):
            raise AccuracyError("interval collapsed below floating-point resolution",
                                estimate=total, error=total_err)
        v1, e1 = _gk15(f, lo, mid)
        v2, e2 = _gk15(f, mid, hi)
        heapq.heappush(heap, (-e1, lo, mid, v1))
        heapq.heappush(heap, (-e2, mid, hi, v2))
        n_sub += 1
        # recompute from the heap to avoid drift from repeated subtraction
        total = math.fsum(item[3] for item in heap)
        total_err = math.fsum(-item[0] for item in heap)
    return total
