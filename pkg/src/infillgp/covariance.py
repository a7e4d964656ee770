"""Stationary isotropic covariance families, their spectral densities, matrix
assembly, and the small-lag series of the Matérn kernel.

All kernels are written as ``theta * K_{alpha,nu}(h)`` where ``theta`` is the
microergodic parameter.  For Matérn, tapered Matérn and generalized Wendland
``sigma^2 = theta * alpha^(-2 nu)``; for the confluent hypergeometric family
``sigma^2 = theta * alpha^(-2 nu) * Gamma(mu) / Gamma(nu + mu)``.
"""
from __future__ import annotations

import dataclasses
import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist, pdist

from .errors import DomainError, UnsupportedOperationError, ValidationError
from .specialfn import QuadratureSpec, bessel_k, digamma, integrate, log_gamma

# Largest half-integer order evaluated by the polynomial-times-exponential form.
_HALF_INT_MAX = 20


class Family(str, enum.Enum):
    MATERN = "Matern"
    TAPERED_MATERN = "TaperedMatern"
    GENERALIZED_WENDLAND = "GeneralizedWendland"
    CONFLUENT_HYPERGEOMETRIC = "ConfluentHypergeometric"


@dataclass(frozen=True)
class TaperDescriptor:
    """Compactly supported taper multiplying a Matérn kernel.

    Only the spherical taper ``(1 - r/R)_+^2 (1 + r/(2R))`` is provided.  It is
    positive definite up to d = 3 but its spectral density decays like
    ``|w|^-2`` in d = 1, so the tail condition on the taper only holds there
    for nu < 1/2.
    """
    kind: str = "Spherical"
    range: float = 1.0

    def __post_init__(self):
        if self.kind != "Spherical":
            raise ValidationError(f"unknown taper kind {self.kind!r}")
        if not (self.range > 0 and math.isfinite(self.range)):
            raise ValidationError("taper range must be positive")

    def value(self, r):
        x = np.minimum(np.asarray(r, dtype=float) / self.range, 1.0)
        return (1.0 - x) ** 2 * (1.0 + 0.5 * x)

    def spectral_density_1d(self, w):
        """``(2 pi)^-1 * integral exp(-i w x) K_tap(x) dx`` on the real line."""
        w = np.abs(np.atleast_1d(np.asarray(w, dtype=float)))
        R = self.range
        out = np.empty_like(w)
        small = w * R < 1e-2
        ws = w[small]
        # cosine series: int_0^R g = 3R/8, int_0^R x^2 g = R^3/24, int_0^R x^4 g = R^5/80
        out[small] = (3 * R / 8 - ws ** 2 * R ** 3 / 48 + ws ** 4 * R ** 5 / 1920) / math.pi
        wl = w[~small]
        out[~small] = (1.5 / (R * wl ** 2) - 3 * np.sin(wl * R) / (R ** 2 * wl ** 3)
                       + 3 * (1 - np.cos(wl * R)) / (R ** 3 * wl ** 4)) / math.pi
        return out

    def to_dict(self):
        return {"kind": self.kind, "range": self.range}


@dataclass(frozen=True)
class CovarianceModel:
    family: Family
    theta: float
    alpha: float
    nu: float
    mu: float | None = None
    taper: TaperDescriptor | None = None

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        for name in ("theta", "alpha", "nu"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float, np.floating)) and math.isfinite(v) and v > 0):
                raise ValidationError(f"{name} must be a finite positive number, got {v!r}")
        fam = self.family
        if fam is Family.GENERALIZED_WENDLAND:
            if self.nu < 0.5:
                raise ValidationError("generalized Wendland requires nu >= 1/2")
            if self.mu is None or not self.mu > 0:
                raise ValidationError("generalized Wendland requires a positive mu")
        if fam is Family.CONFLUENT_HYPERGEOMETRIC and (self.mu is None or not self.mu > 0):
            raise ValidationError("confluent hypergeometric requires mu > 0")
        if fam is Family.TAPERED_MATERN and self.taper is None:
            raise ValidationError("tapered Matérn requires a taper descriptor")
        if not self.sigma2 > 0:
            raise ValidationError("derived variance sigma^2 must be strictly positive")

    def validate_for_dimension(self, d: int) -> None:
        if self.family is Family.GENERALIZED_WENDLAND and not self.mu > self.nu + d:
            raise ValidationError(f"generalized Wendland requires mu > nu + d = {self.nu + d}")

    @property
    def sigma2(self) -> float:
        s2 = self.theta * self.alpha ** (-2 * self.nu)
        if self.family is Family.CONFLUENT_HYPERGEOMETRIC:
            s2 *= math.exp(log_gamma(self.mu) - log_gamma(self.nu + self.mu))
        return s2

    def replace(self, **kw) -> "CovarianceModel":
        return dataclasses.replace(self, **kw)

    def to_dict(self) -> dict:
        out = {"family": self.family.value, "theta": self.theta, "alpha": self.alpha, "nu": self.nu}
        if self.mu is not None:
            out["mu"] = self.mu
        if self.taper is not None:
            out["taper"] = self.taper.to_dict()
        return out

    @classmethod
    def from_dict(cls, obj: dict) -> "CovarianceModel":
        taper = obj.get("taper")
        try:
            return cls(family=Family(obj["family"]), theta=float(obj["theta"]),
                       alpha=float(obj["alpha"]), nu=float(obj["nu"]),
                       mu=None if obj.get("mu") is None else float(obj["mu"]),
                       taper=None if taper is None else TaperDescriptor(**taper))
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"malformed covariance model: {exc}") from exc


def matern(theta: float, alpha: float, nu: float) -> CovarianceModel:
    return CovarianceModel(Family.MATERN, theta, alpha, nu)


def is_half_integer(nu: float) -> bool:
    return (2 * nu) % 2 == 1 and nu <= _HALF_INT_MAX + 0.5


def is_integer(nu: float) -> bool:
    return float(nu).is_integer()


def matern_correlation(nu: float, x, use_closed_form: bool = True):
    """Matérn correlation ``2^(1-nu)/Gamma(nu) x^nu K_nu(x)`` at scaled lags ``x = alpha r``.

    Half-integer orders use the finite polynomial-times-exponential form unless
    ``use_closed_form`` is False.
    """
    x = np.asarray(x, dtype=float)
    out = np.ones(x.shape)
    pos = x > 0
    xp = x[pos]
    if use_closed_form and is_half_integer(nu):
        n = int(nu - 0.5)
        poly = np.zeros_like(xp)
        scale = math.factorial(n) / math.factorial(2 * n)
        # Horner in (2x) over k = n..0, coefficient (n+k)!/(k!(n-k)!) on (2x)^(n-k)
        for k in range(n + 1):
            coef = math.factorial(n + k) / (math.factorial(k) * math.factorial(n - k))
            poly = poly * (2 * xp) + coef * scale if k else np.full_like(xp, coef * scale)
        out[pos] = poly * np.exp(-xp)
        return out
    if xp.size:
        with np.errstate(over="ignore", invalid="ignore"):
            logc = (1 - nu) * math.log(2) - log_gamma(nu)
            val = math.exp(logc) * xp ** nu * bessel_k(nu, xp)
        # x^nu K_nu(x) overflows only for tiny x where the limit is already 1;
        # rounding near that limit can also overshoot 1 by an ulp
        out[pos] = np.where(np.isfinite(val), np.minimum(val, 1.0), 1.0)
    return out


def _gw_correlation(nu: float, mu: float, a: float, spec: QuadratureSpec) -> float:
    if a >= 1:
        return 0.0
    if nu == 0.5:
        return (1 - a) ** mu
    p = nu + 0.5
    log_beta = log_gamma(2 * nu) + log_gamma(mu) - log_gamma(2 * nu + mu)

    def f(v):
        u = v ** (1 / p)
        return (2 * a + (1 - a) * u) ** (nu - 0.5) * (1 - u) ** (mu - 1)

    integral = integrate(f, 0.0, 1.0, spec)
    return math.exp((nu + mu - 0.5) * math.log1p(-a) - log_beta) * integral / p


def _ch_integral(nu: float, mu: float, alpha: float, r: float, spec: QuadratureSpec) -> float:
    """``integral_0^inf t^(nu-1) (alpha^2 t + 1)^-(nu+mu) exp(-nu r^2 / t) dt``."""
    a2 = alpha * alpha
    c = nu * r * r

    def head(v):  # t = v^(1/nu) on (0, 1)
        t = v ** (1 / nu)
        with np.errstate(divide="ignore"):
            e = np.exp(-c / t) if c > 0 else 1.0
        return (a2 * t + 1) ** (-(nu + mu)) * e

    def tail(w):  # t = 1/u, u = w^(1/mu) on (0, 1)
        u = w ** (1 / mu)
        return (a2 + u) ** (-(nu + mu)) * np.exp(-c * u)

    return integrate(head, 0.0, 1.0, spec) / nu + integrate(tail, 0.0, 1.0, spec) / mu


def kernel_radial(model: CovarianceModel, r, spec: QuadratureSpec | None = None,
                  use_closed_form: bool = True) -> np.ndarray:
    """``theta * K_{alpha,nu}`` as a function of the lag norm ``r`` (array)."""
    r = np.asarray(r, dtype=float)
    if np.any(r < 0) or not np.all(np.isfinite(r)):
        raise DomainError("lag norms must be finite and non-negative")
    fam = model.family
    if fam in (Family.MATERN, Family.TAPERED_MATERN):
        out = model.sigma2 * matern_correlation(model.nu, model.alpha * r, use_closed_form)
        if fam is Family.TAPERED_MATERN:
            out = out * model.taper.value(r)
        return out
    spec = spec or QuadratureSpec()
    flat = r.ravel()
    vals = np.empty_like(flat)
    if fam is Family.GENERALIZED_WENDLAND:
        for i, ri in enumerate(flat):
            vals[i] = _gw_correlation(model.nu, model.mu, model.alpha * ri, spec)
        return model.sigma2 * vals.reshape(r.shape)
    log_norm = math.log(model.theta) - log_gamma(model.nu)
    for i, ri in enumerate(flat):
        vals[i] = _ch_integral(model.nu, model.mu, model.alpha, float(ri), spec)
    return math.exp(log_norm) * vals.reshape(r.shape)


def kernel_value(model: CovarianceModel, h, spec: QuadratureSpec | None = None) -> float:
    h = np.atleast_1d(np.asarray(h, dtype=float))
    return float(kernel_radial(model, np.linalg.norm(h), spec))


def spectral_density(model: CovarianceModel, w, spec: QuadratureSpec | None = None):
    """Spectral density at frequency vector(s) ``w`` (shape ``(d,)`` or ``(k, d)``).

    A 1-d array is read as ``k`` scalar frequencies in d = 1 unless ``d`` is
    implied by a 2-d input.
    """
    w = np.asarray(w, dtype=float)
    if w.ndim <= 1:
        w = w.reshape(-1, 1)
    d = w.shape[1]
    wn2 = np.sum(w * w, axis=1)
    if model.family is Family.MATERN:
        return _matern_spectral(model.theta, model.alpha, model.nu, d, wn2)
    if model.family is Family.TAPERED_MATERN:
        if d != 1:
            raise UnsupportedOperationError("tapered Matérn spectral density is available for d = 1 only")
        return _tapered_spectral_1d(model, w[:, 0], spec or QuadratureSpec(1e-12, 1e-7, 2000))
    raise UnsupportedOperationError(f"no spectral density for family {model.family.value}")


def _matern_spectral(theta, alpha, nu, d, wn2):
    logc = log_gamma(nu + d / 2) - log_gamma(nu) - 0.5 * d * math.log(math.pi)
    return math.exp(logc) * theta / (alpha * alpha + wn2) ** (nu + d / 2)


def _tapered_spectral_1d(model, w, spec):
    # product of covariances <-> convolution of spectral densities
    out = np.empty_like(w)
    base = model.replace(family=Family.MATERN, taper=None)
    for i, wi in enumerate(w):
        def g(v, wi=wi):
            v = np.asarray(v, dtype=float)
            return (_matern_spectral(base.theta, base.alpha, base.nu, 1, (wi - v) ** 2)
                    * model.taper.spectral_density_1d(v))
        out[i] = integrate(g, -math.inf, wi, spec) + integrate(g, wi, math.inf, spec)
    return out


@dataclass(frozen=True, eq=False)
class LagStructure:
    """Pairwise distances of a point set, stored once per distinct value."""
    n: int
    radii: np.ndarray    # distinct distances, radii[0] == 0
    inverse: np.ndarray  # (n, n) indices into radii


def pairwise_lags(points) -> LagStructure:
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    n = pts.shape[0]
    r = pdist(pts)
    if r.size and r.min() == 0:
        raise ValidationError("design contains duplicate points")
    uniq, inv = np.unique(r, return_inverse=True)
    radii = np.concatenate([[0.0], uniq])
    idx = np.zeros((n, n), dtype=np.int32 if radii.size < 2 ** 31 else np.int64)
    iu = np.triu_indices(n, 1)
    idx[iu] = inv + 1
    idx.T[iu] = inv + 1
    return LagStructure(n=n, radii=radii, inverse=idx)


def _points_of(design_or_points) -> np.ndarray:
    pts = getattr(design_or_points, "points", design_or_points)
    pts = np.asarray(pts, dtype=float)
    return pts[:, None] if pts.ndim == 1 else pts


def covariance_matrix(model: CovarianceModel, design, nugget: float = 0.0,
                      lags: LagStructure | None = None,
                      spec: QuadratureSpec | None = None) -> np.ndarray:
    """``theta K(S_n) + nugget I``; ``lags`` can be precomputed with :func:`pairwise_lags`."""
    if nugget < 0 or not math.isfinite(nugget):
        raise ValidationError("nugget must be finite and >= 0")
    if lags is None:
        lags = pairwise_lags(_points_of(design))
    vals = kernel_radial(model, lags.radii, spec)
    out = vals[lags.inverse]
    if nugget:
        out[np.diag_indices_from(out)] += nugget
    return out


def cross_covariance(model: CovarianceModel, points_a, points_b,
                     spec: QuadratureSpec | None = None) -> np.ndarray:
    """``theta K(a_i - b_j)`` for all pairs; no nugget."""
    r = cdist(_points_of(points_a), _points_of(points_b))
    if model.family in (Family.MATERN, Family.TAPERED_MATERN):
        return kernel_radial(model, r, spec)
    uniq, inv = np.unique(r, return_inverse=True)
    return kernel_radial(model, uniq, spec)[inv].reshape(r.shape)


# ---------------------------------------------------------------------------
# Small-lag series of the Matérn kernel

@dataclass(frozen=True)
class TaylorCoefficients:
    """Series ``sum_j zeta_j r^(2j) + zeta_star_j G_{nu+j}(r)`` of ``theta K(r)``.

    ``G_s(r) = r^(2s)`` for non-integer ``s`` and ``r^(2s) log r`` otherwise.
    """
    zeta: np.ndarray
    zeta_star: np.ndarray
    nu_integer: bool
    nu: float

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        j = np.arange(self.zeta.size)
        out = (self.zeta[:, None] * r.ravel()[None, :] ** (2 * j[:, None])).sum(axis=0)
        out = out + sum(zs * G(self.nu + k, r.ravel()) for k, zs in enumerate(self.zeta_star))
        return out.reshape(r.shape)


def G(s: float, t):
    """``t^(2s)`` (non-integer s) or ``t^(2s) log t`` (integer s), with G(0) = 0."""
    t = np.asarray(t, dtype=float)
    if not is_integer(s):
        return t ** (2 * s)
    out = np.zeros_like(t)
    pos = t > 0
    out[pos] = t[pos] ** (2 * s) * np.log(t[pos])
    return out


def xi_star(nu: float, j: int = 0) -> float:
    """Coefficient of ``(alpha r)^(2nu+2j)`` (times log for integer nu) in ``K/sigma^2``."""
    if is_integer(nu):
        v = int(nu)
        return (-1) ** (v + 1) / (2.0 ** (2 * v + 2 * j - 1) * math.factorial(v - 1)
                                  * math.factorial(j) * math.factorial(v + j))
    log_mag = ((2 * j + 2 * nu) * math.log(2) + log_gamma(j + 1) + log_gamma(j + 1 + nu)
               + log_gamma(nu))
    return -math.pi / (math.exp(log_mag) * math.sin(nu * math.pi))


def taylor_coefficients(model: CovarianceModel, J: int) -> TaylorCoefficients:
    """Coefficients ``zeta_j`` and ``zeta_star_{nu+j}`` for ``j = 0..J``."""
    if model.family is not Family.MATERN:
        raise UnsupportedOperationError("series coefficients are defined for the Matérn family only")
    if J < 1:
        raise ValidationError("J must be at least 1")
    theta, alpha, nu = model.theta, model.alpha, model.nu
    zeta = np.empty(J + 1)
    zstar = np.empty(J + 1)
    if is_integer(nu):
        v = int(nu)
        fv1 = math.factorial(v - 1)
        for j in range(J + 1):
            scale = theta * alpha ** (2 * j - 2 * v)
            if j < v:
                zeta[j] = scale * (-1) ** j * math.factorial(v - j - 1) / (
                    4.0 ** j * fv1 * math.factorial(j))
            else:
                den = 4.0 ** j * math.factorial(j - v) * math.factorial(j) * fv1
                xi1 = (-1) ** v * (digamma(j - v + 1) + digamma(j + 1) + 2 * math.log(2)) / den
                xi2 = (-1) ** (v + 1) * 2.0 / den
                zeta[j] = scale * (xi1 + xi2 * math.log(alpha))
            zstar[j] = theta * alpha ** (2 * j) * xi_star(nu, j)
    else:
        for j in range(J + 1):
            prod = math.prod(i - nu for i in range(1, j + 1))
            xi = 1.0 / (4.0 ** j * math.factorial(j) * prod)
            zeta[j] = theta * alpha ** (2 * j - 2 * nu) * xi
            zstar[j] = theta * alpha ** (2 * j) * xi_star(nu, j)
    return TaylorCoefficients(zeta=zeta, zeta_star=zstar, nu_integer=is_integer(nu), nu=nu)
