"""Higher-order quadratic-variation estimators of the microergodic parameter
and the nugget.

For a base multi-index ``i`` the ``ell``-th order difference is
``D Y(i) = sum_k c_i^(k) Y(s(i + k omega))`` over ``k in {0..ell}^d``.  The
weights annihilate every monomial of total degree <= ell except the pure
power ``s_d^ell``, which they map to ``ell! (omega/m)^ell``.  Then

    V_u = sum_{i in Xi_u} D Y(i) * D Y(i + u e_1),
    tau_hat = V_0 / C_V0,   theta_hat = V_1 / g.
"""
from __future__ import annotations

import dataclasses
import itertools
import math
from dataclasses import dataclass

import numpy as np

from .covariance import G, CovarianceModel, kernel_radial, xi_star
from .design import Design, FeatureSpec, feature_rows, index_set_size
from .errors import InfeasibleEstimationError, SingularDesignError, ValidationError

__all__ = [
    "QvConfig", "QvEstimate", "SieveSpec", "DifferencingOperator", "default_ell",
    "default_qv_config", "even_omega", "solve_constants", "limit_constants",
    "moment_residual", "H_constant", "xi_star", "quadratic_variation", "estimate",
    "expected_V", "rate_exponents", "normalizers", "gamma_bounds",
]

_RANK_TOL = 1e-10


def default_ell(nu: float, d: int) -> int:
    return int(math.ceil(nu + d / 2 - 1e-12))


def gamma_bounds(nu: float, d: int) -> tuple[float, float]:
    return max(1 - d / (4 * nu), 0.0), 1.0


def even_omega(m: int, gamma: float) -> int:
    """``floor(m^gamma)`` rounded down to an even integer, at least 2."""
    w = int(math.floor(m ** gamma + 1e-9))
    w -= w % 2
    return max(w, 2)


@dataclass(frozen=True)
class QvConfig:
    """Differencing order and cell exponents; explicit omegas override the exponents."""
    nu: float
    d: int
    ell: int | None = None
    gamma_theta: float | None = None
    gamma_tau: float | None = None
    omega_theta: int | None = None
    omega_tau: int | None = None

    def __post_init__(self):
        if not self.nu > 0 or self.d < 1:
            raise ValidationError("QV config needs nu > 0 and d >= 1")
        if self.ell is None:
            object.__setattr__(self, "ell", default_ell(self.nu, self.d))
        if self.ell < 1:
            raise ValidationError("differencing order must be >= 1")
        lo, hi = gamma_bounds(self.nu, self.d)
        if self.gamma_theta is None:
            object.__setattr__(self, "gamma_theta", 4 * self.nu / (4 * self.nu + self.d))
        if self.gamma_tau is None:
            object.__setattr__(self, "gamma_tau", lo + 0.02)
        for name in ("gamma_theta", "gamma_tau"):
            g = getattr(self, name)
            if not lo < g < hi:
                raise ValidationError(f"{name}={g} outside the admissible interval ({lo:.4g}, 1)")
        for name in ("omega_theta", "omega_tau"):
            w = getattr(self, name)
            if w is not None and (w < 2 or w % 2):
                raise ValidationError(f"{name} must be an even integer >= 2")

    def resolve(self, m: int) -> "QvConfig":
        """Fill in omegas for grid size ``m``, shrinking them until the index sets are nonempty."""
        def fit(w, u):
            while w >= 2 and index_set_size(u, m, self.d, self.ell, w) == 0:
                w -= 2
            if w < 2:
                raise InfeasibleEstimationError(
                    f"m={m} too small for ell={self.ell}: need m > 2*ell*omega{' + 1' if u else ''} with omega >= 2")
            return w
        wt = self.omega_theta if self.omega_theta is not None else fit(even_omega(m, self.gamma_theta), 1)
        wtau = self.omega_tau if self.omega_tau is not None else fit(even_omega(m, self.gamma_tau), 0)
        for w, u in ((wt, 1), (wtau, 0)):
            if index_set_size(u, m, self.d, self.ell, w) == 0:
                raise InfeasibleEstimationError(
                    f"empty index set: m={m} <= 2*ell*omega{' + 1' if u else ''} with ell={self.ell}, omega={w}")
        return dataclasses.replace(self, omega_theta=wt, omega_tau=wtau)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def default_qv_config(nu: float, d: int) -> QvConfig:
    return QvConfig(nu=nu, d=d)


# ---------------------------------------------------------------------------
# differencing constants

def _block_offsets(d: int, ell: int) -> np.ndarray:
    """All k in {0..ell}^d in row-major order, shape (K, d)."""
    return np.array(list(itertools.product(range(ell + 1), repeat=d)), dtype=int).reshape(-1, d)


def _moment_exponents(d: int, ell: int) -> np.ndarray:
    """Exponents with total degree <= ell; the last row is ell * e_d."""
    exps = [e for e in itertools.product(range(ell + 1), repeat=d) if sum(e) <= ell]
    top = tuple([0] * (d - 1) + [ell])
    exps.remove(top)
    exps.append(top)
    return np.array(exps, dtype=int)


def _condition_matrix(local: np.ndarray, exps: np.ndarray) -> np.ndarray:
    """``A[..., r, k] = prod_j local[..., k, j] ** exps[r, j]``."""
    return np.prod(local[..., None, :, :] ** exps[:, None, :], axis=-1)


def _min_norm(A: np.ndarray, ell: int) -> np.ndarray:
    rows = A.shape[-2]
    sv = np.linalg.svd(A, compute_uv=False)
    if np.any(sv[..., -1] <= _RANK_TOL * sv[..., 0]) or sv.shape[-1] < rows:
        raise SingularDesignError("differencing condition system is rank deficient")
    b = np.zeros(rows)
    b[-1] = math.factorial(ell)
    return np.linalg.pinv(A) @ b


def limit_constants(d: int, ell: int) -> np.ndarray:
    """Minimum-norm weights on the integer block ``k in {0..ell}^d`` (row-major)."""
    if d < 1 or ell < 1:
        raise ValidationError("limit constants need d >= 1 and ell >= 1")
    k = _block_offsets(d, ell).astype(float)
    c = _min_norm(_condition_matrix(k, _moment_exponents(d, ell)), ell)
    c[np.abs(c) < 1e-14] = 0.0
    return c


def solve_constants(points: np.ndarray, ell: int, m: int, omega: int) -> np.ndarray:
    """Weights for one block of design points ``s(i + k omega)``, ``k`` row-major.

    The system is solved in the local coordinates ``(s - s(i)) m / omega``, which
    leaves the solution set unchanged and keeps the matrix well scaled.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    d = pts.shape[1]
    if pts.shape[0] != (ell + 1) ** d:
        raise ValidationError(f"expected {(ell + 1) ** d} block points, got {pts.shape[0]}")
    local = (pts - pts[0]) * (m / omega)
    c = _min_norm(_condition_matrix(local, _moment_exponents(d, ell)), ell)
    res = moment_residual(pts, c, ell, m, omega)
    if res > 1e-9 * math.factorial(ell) * (omega / m) ** ell:
        raise SingularDesignError(f"moment residual {res:.3g} exceeds tolerance")
    return c


def moment_residual(points: np.ndarray, c: np.ndarray, ell: int, m: int, omega: int) -> float:
    """Largest violation of the moment conditions in the original coordinates."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    exps = _moment_exponents(pts.shape[1], ell)
    A = _condition_matrix(pts, exps)
    target = np.zeros(len(exps))
    target[-1] = math.factorial(ell) * (omega / m) ** ell
    return float(np.max(np.abs(A @ c - target)))


@dataclass(frozen=True, eq=False)
class DifferencingOperator:
    """``D Y(i)`` for every ``i`` with ``1 <= i_j <= m - 2 ell omega``.

    ``index`` and ``weights`` have shape (N, K): row n lists the flat design
    indices of the block at the n-th base index and their weights.
    """
    design: Design
    ell: int
    omega: int
    index: np.ndarray
    weights: np.ndarray
    top: int

    @classmethod
    def build(cls, design: Design, ell: int, omega: int) -> "DifferencingOperator":
        d, m = design.d, design.m
        top = m - 2 * ell * omega
        if top < 1:
            raise InfeasibleEstimationError(f"m={m} <= 2*ell*omega={2 * ell * omega}")
        base = np.stack(np.meshgrid(*[np.arange(1, top + 1)] * d, indexing="ij"), -1).reshape(-1, d)
        offs = _block_offsets(d, ell) * omega
        blocks = base[:, None, :] + offs[None, :, :]
        index = design.flat_index(blocks)
        if design.is_equispaced:
            c = limit_constants(d, ell)
            weights = np.broadcast_to(c, index.shape).copy()
        else:
            pts = design.points[index]
            local = (pts - pts[:, :1, :]) * (m / omega)
            weights = _min_norm(_condition_matrix(local, _moment_exponents(d, ell)), ell)
            exps = _moment_exponents(d, ell)
            A = _condition_matrix(pts, exps)
            target = np.zeros(len(exps))
            target[-1] = math.factorial(ell) * (omega / m) ** ell
            res = np.max(np.abs(np.einsum("nrk,nk->nr", A, weights) - target))
            if res > 1e-9 * target[-1]:
                raise SingularDesignError(f"moment residual {res:.3g} exceeds tolerance")
        return cls(design=design, ell=ell, omega=omega, index=index, weights=weights, top=top)

    def apply(self, Y: np.ndarray) -> np.ndarray:
        """Differences on the base grid, shape ``Y.shape[:-1] + (top,)*d``."""
        Y = np.asarray(Y, dtype=float)
        D = np.einsum("...nk,nk->...n", Y[..., self.index], self.weights)
        return D.reshape(Y.shape[:-1] + (self.top,) * self.design.d)

    def sum_sq_weights(self) -> float:
        return float(np.sum(self.weights ** 2))


def _v_from_diffs(D: np.ndarray, u: int, d: int) -> np.ndarray:
    axis = D.ndim - d
    if u == 0:
        return np.sum(D * D, axis=tuple(range(axis, D.ndim)))
    lo = np.take(D, np.arange(D.shape[axis] - 1), axis=axis)
    hi = np.take(D, np.arange(1, D.shape[axis]), axis=axis)
    return np.sum(lo * hi, axis=tuple(range(axis, D.ndim)))


def _design_and_y(dataset):
    design = getattr(dataset, "design", None)
    Y = getattr(dataset, "Y", None)
    if design is None or Y is None:
        raise ValidationError("dataset must carry a design and observations Y")
    return design, np.asarray(Y, dtype=float)


def quadratic_variation(dataset, u: int, config: QvConfig, Y=None) -> float | np.ndarray:
    """``V_u``; ``Y`` may override the dataset's observations (shape (n,) or (R, n))."""
    design, Yd = _design_and_y(dataset)
    Y = Yd if Y is None else np.asarray(Y, dtype=float)
    if u not in (0, 1):
        raise ValidationError("u must be 0 or 1")
    cfg = config.resolve(design.m)
    omega = cfg.omega_tau if u == 0 else cfg.omega_theta
    if index_set_size(u, design.m, design.d, cfg.ell, omega) == 0:
        raise InfeasibleEstimationError("empty index set")
    op = DifferencingOperator.build(design, cfg.ell, omega)
    V = _v_from_diffs(op.apply(Y), u, design.d)
    return float(V) if np.ndim(V) == 0 else V


def H_constant(d: int, ell: int, nu: float) -> float:
    c = limit_constants(d, ell)
    k = _block_offsets(d, ell).astype(float)
    dist = np.linalg.norm(k[:, None, :] - k[None, :, :], axis=-1)
    return float(c @ G(nu, dist) @ c)


@dataclass(frozen=True)
class QvEstimate:
    theta_hat: float
    tau_hat: float
    V0: float
    V1: float
    C_V0: float
    g: float
    H: float
    xi_star: float
    size_xi0: int
    size_xi1: int
    config: QvConfig
    theta_negative: bool = False
    tau_negative: bool = False

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["config"] = self.config.to_dict()
        return out


@dataclass(frozen=True)
class _Normalizers:
    C_V0: float
    g: float
    H: float
    xi_star: float
    size_xi0: int
    size_xi1: int


def _normalizers(op0: DifferencingOperator, cfg: QvConfig, m: int) -> _Normalizers:
    d, ell = cfg.d, cfg.ell
    n0 = index_set_size(0, m, d, ell, cfg.omega_tau)
    n1 = index_set_size(1, m, d, ell, cfg.omega_theta)
    H = H_constant(d, ell, cfg.nu)
    xs = xi_star(cfg.nu)
    g = (cfg.omega_theta / m) ** (2 * cfg.nu) * n1 * xs * H
    return _Normalizers(op0.sum_sq_weights(), g, H, xs, n0, n1)


def estimate(dataset, nu: float, config: QvConfig | None = None, Y=None):
    """``(theta_hat, tau_hat)`` with every normalizing constant recorded.

    With a stacked ``Y`` of shape (R, n) a list of R estimates is returned.
    """
    design, Yd = _design_and_y(dataset)
    Y = Yd if Y is None else np.asarray(Y, dtype=float)
    cfg = (config or QvConfig(nu=nu, d=design.d))
    if cfg.nu != nu or cfg.d != design.d:
        raise ValidationError("QV config does not match nu or the design dimension")
    cfg = cfg.resolve(design.m)
    op0 = DifferencingOperator.build(design, cfg.ell, cfg.omega_tau)
    op1 = (op0 if cfg.omega_theta == cfg.omega_tau
           else DifferencingOperator.build(design, cfg.ell, cfg.omega_theta))
    V0 = np.atleast_1d(_v_from_diffs(op0.apply(Y), 0, design.d))
    V1 = np.atleast_1d(_v_from_diffs(op1.apply(Y), 1, design.d))
    nz = _normalizers(op0, cfg, design.m)
    out = []
    for v0, v1 in zip(V0, V1):
        th = v1 / nz.g
        ta = v0 / nz.C_V0
        out.append(QvEstimate(theta_hat=float(th), tau_hat=float(ta), V0=float(v0), V1=float(v1),
                              C_V0=nz.C_V0, g=nz.g, H=nz.H, xi_star=nz.xi_star,
                              size_xi0=nz.size_xi0, size_xi1=nz.size_xi1, config=cfg,
                              theta_negative=bool(th < 0), tau_negative=bool(ta < 0)))
    return out[0] if Y.ndim == 1 else out


def normalizers(design: Design, config: QvConfig) -> dict:
    cfg = config.resolve(design.m)
    op0 = DifferencingOperator.build(design, cfg.ell, cfg.omega_tau)
    return dataclasses.asdict(_normalizers(op0, cfg, design.m))


def expected_V(model: CovarianceModel, tau: float, beta, featurespec: FeatureSpec | None,
               design: Design, u: int, config: QvConfig) -> float:
    """Exact ``E[V_u]`` under ``Y = F beta + X + eps`` with ``X ~ GP(0, theta K)``.

    Sums ``c c [mean mean + tau 1{a=b} + theta K(s_a - s_b)]`` over the same
    index ranges as :func:`quadratic_variation`; no sampling.
    """
    if u not in (0, 1):
        raise ValidationError("u must be 0 or 1")
    cfg = config.resolve(design.m)
    omega = cfg.omega_tau if u == 0 else cfg.omega_theta
    if index_set_size(u, design.m, design.d, cfg.ell, omega) == 0:
        raise InfeasibleEstimationError("empty index set")
    op = DifferencingOperator.build(design, cfg.ell, omega)
    d, top = design.d, op.top
    grid_shape = (top,) * d
    idx = op.index.reshape(grid_shape + op.index.shape[-1:])
    w = op.weights.reshape(grid_shape + op.weights.shape[-1:])
    if u == 1:
        sl_a = (slice(0, top - 1),) + (slice(None),) * (d - 1)
        sl_b = (slice(1, top),) + (slice(None),) * (d - 1)
    else:
        sl_a = sl_b = (slice(None),) * d
    ia = idx[sl_a].reshape(-1, idx.shape[-1])
    ib = idx[sl_b].reshape(-1, idx.shape[-1])
    wa = w[sl_a].reshape(-1, w.shape[-1])
    wb = w[sl_b].reshape(-1, w.shape[-1])

    total = 0.0
    if beta is not None and featurespec is not None and np.any(np.asarray(beta) != 0):
        mean = feature_rows(featurespec, design.points) @ np.asarray(beta, dtype=float)
        total += float(np.sum(np.einsum("nk,nk->n", wa, mean[ia]) * np.einsum("nk,nk->n", wb, mean[ib])))
    if tau:
        same = ia[:, :, None] == ib[:, None, :]
        total += tau * float(np.einsum("nk,nj,nkj->", wa, wb, same))
    pts = design.points
    # covariance term, chunked over base indices to bound memory
    chunk = max(1, 200000 // (ia.shape[1] ** 2))
    acc = []
    for s in range(0, ia.shape[0], chunk):
        pa = pts[ia[s:s + chunk]]
        pb = pts[ib[s:s + chunk]]
        r = np.linalg.norm(pa[:, :, None, :] - pb[:, None, :, :], axis=-1)
        uniq, inv = np.unique(r, return_inverse=True)
        Kv = kernel_radial(model, uniq)[inv].reshape(r.shape)
        acc.append(np.einsum("nk,nj,nkj->n", wa[s:s + chunk], wb[s:s + chunk], Kv))
    total += math.fsum(np.concatenate(acc))
    return total


# ---------------------------------------------------------------------------
# sieve exponents and rate diagnostics

@dataclass(frozen=True)
class SieveSpec:
    rho1: float
    rho21: float
    rho22: float
    rho31: float
    rho32: float

    def __post_init__(self):
        if min(self.rho1, self.rho21, self.rho22, self.rho31, self.rho32) <= 0:
            raise ValidationError("sieve exponents must be positive")

    @classmethod
    def default(cls, nu: float, d: int) -> "SieveSpec":
        """Half of each upper bound admissible for the rate-optimal exponents.

        ``rho31`` has no upper bound and is set to 1.
        """
        q = 4 * nu + d
        return cls(rho1=d / (2 * q), rho21=0.5 * min(2 * nu / q, d / (8 * nu)),
                   rho22=d / (4 * q), rho31=1.0, rho32=1 / (2 * q))

    def relations_hold(self, gamma: float, nu: float, d: int) -> bool:
        """Inequality system tying the sieve to the cell exponent ``gamma``."""
        a = 1 - gamma
        return (0 < self.rho1 < a and 0 < self.rho21 < 2 * nu * a / d
                and 0 < self.rho22 < 0.5 - 2 * a * nu / d and self.rho31 > 0
                and 0 < self.rho32 < a / d)

    def contains(self, theta: float, alpha: float, tau: float, beta, n: int) -> bool:
        b2 = float(np.sum(np.square(beta))) if beta is not None else 0.0
        r = tau / theta
        return (b2 / theta <= n ** self.rho1 and n ** -self.rho21 <= r <= n ** self.rho22
                and n ** -self.rho31 <= alpha <= n ** self.rho32)


def rate_exponents(nu: float, d: int, gamma: float, sieve: SieveSpec,
                   varsigma: float = 1e-3, ell: int | None = None) -> tuple[float, float]:
    """Exponents ``(b1, b2)`` of the theta and tau rates for cell exponent ``gamma``."""
    ell = default_ell(nu, d) if ell is None else ell
    a = 1 - gamma
    s = sieve
    b1 = min(0.5 - 2 * a * nu / d - s.rho22,
             a / 2 - varsigma,
             0.25 + a * (ell - 2 * nu) / d - (s.rho1 + s.rho22) / 2,
             a / 4 + a * (ell - nu) / d - s.rho1 / 2 - varsigma)
    b2 = min(0.5,
             a * (4 * nu + d) / (2 * d) - s.rho21 - varsigma,
             0.25 + a * ell / d - (s.rho1 + s.rho21) / 2,
             a * (4 * nu + d + 4 * ell) / (4 * d) - (s.rho1 + 2 * s.rho21) / 2 - varsigma)
    return b1, b2
