"""Stratified sampling designs on the unit cube, regression features, and
the quadratic-variation index sets.

Multi-indices are 1-based ``(i_1, ..., i_d)`` with ``1 <= i_k <= m``; points
are stored in row-major order of the 0-based index (``i_1`` varies slowest).
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import InfeasibleEstimationError, ValidationError
from .rng import generator


@dataclass(frozen=True, eq=False)
class Design:
    d: int
    m: int
    delta: np.ndarray  # (n, d) offsets in [0, 1)

    def __post_init__(self):
        if self.d < 1 or self.m < 2:
            raise ValidationError("design requires d >= 1 and m >= 2")
        delta = np.asarray(self.delta, dtype=float)
        if delta.shape != (self.m ** self.d, self.d):
            raise ValidationError(f"delta must have shape ({self.m ** self.d}, {self.d})")
        if np.any(delta < 0) or np.any(delta >= 1) or not np.all(np.isfinite(delta)):
            raise ValidationError("perturbations must lie in [0, 1)")
        delta.setflags(write=False)
        object.__setattr__(self, "delta", delta)
        pts = (self.multi_indices() - 1 + delta) / self.m
        pts.setflags(write=False)
        object.__setattr__(self, "_points", pts)

    @property
    def n(self) -> int:
        return self.m ** self.d

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.m,) * self.d

    @property
    def points(self) -> np.ndarray:
        return self._points

    @property
    def is_equispaced(self) -> bool:
        """True when every offset equals one shared constant."""
        return bool(np.all(self.delta == self.delta.flat[0]))

    def multi_indices(self) -> np.ndarray:
        grids = np.indices(self.shape).reshape(self.d, -1).T
        return grids + 1

    def flat_index(self, multi: np.ndarray) -> np.ndarray:
        """1-based multi-indices of shape (..., d) to flat row numbers."""
        multi = np.asarray(multi)
        return np.ravel_multi_index(tuple(np.moveaxis(multi - 1, -1, 0)), self.shape)

    def multi_index(self, flat) -> np.ndarray:
        return np.stack(np.unravel_index(flat, self.shape), axis=-1) + 1

    def __eq__(self, other):
        return (isinstance(other, Design) and self.d == other.d and self.m == other.m
                and np.array_equal(self.delta, other.delta))

    __hash__ = None


def grid_design(m: int, d: int, offset: float = 0.5) -> Design:
    if not 0 <= offset < 1:
        raise ValidationError("offset must lie in [0, 1)")
    return Design(d=d, m=m, delta=np.full((m ** d, d), float(offset)))


def stratified_design(m: int, d: int, rng_seed: int) -> Design:
    rng = generator(rng_seed, stream="design")
    return Design(d=d, m=m, delta=rng.random((m ** d, d)))


def check_distinct(points: np.ndarray) -> None:
    pts = np.ascontiguousarray(points)
    if np.unique(pts, axis=0).shape[0] != pts.shape[0]:
        raise ValidationError("design contains duplicate points")


def _graded_lex_exponents(d: int, q: int) -> list[tuple[int, ...]]:
    out = []
    for deg in range(q + 1):
        block = [e for e in itertools.product(range(deg, -1, -1), repeat=d) if sum(e) == deg]
        out.extend(sorted(block, reverse=True))
    return out


@dataclass(frozen=True)
class FeatureSpec:
    """Regression features: total-degree polynomials or named custom callables.

    Custom callables take an ``(n, d)`` array and return an ``(n,)`` array.
    """
    kind: str = "polynomial"
    degree: int = 0
    functions: tuple[Callable, ...] = field(default=(), compare=False)
    names: tuple[str, ...] = ()

    def __post_init__(self):
        if self.kind == "polynomial":
            if self.degree < 0:
                raise ValidationError("polynomial degree must be >= 0")
        elif self.kind == "custom":
            if not self.functions or len(self.functions) != len(self.names):
                raise ValidationError("custom features need one name per callable")
        else:
            raise ValidationError(f"unknown feature kind {self.kind!r}")

    def exponents(self, d: int) -> list[tuple[int, ...]]:
        if self.kind != "polynomial":
            raise ValidationError("exponents are defined for polynomial features only")
        return _graded_lex_exponents(d, self.degree)

    def p(self, d: int) -> int:
        return len(self.exponents(d)) if self.kind == "polynomial" else len(self.functions)

    def to_dict(self) -> dict:
        if self.kind != "polynomial":
            raise ValidationError("custom features are not serializable")
        return {"kind": "polynomial", "degree": self.degree}

    @classmethod
    def from_dict(cls, obj: dict) -> "FeatureSpec":
        if obj.get("kind", "polynomial") != "polynomial":
            raise ValidationError("only polynomial features can be loaded from config")
        return cls(kind="polynomial", degree=int(obj["degree"]))


def feature_rows(spec: FeatureSpec, points: np.ndarray) -> np.ndarray:
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if spec.kind == "custom":
        return np.column_stack([np.asarray(f(pts), dtype=float) for f in spec.functions])
    cols = [np.prod(pts ** np.array(e), axis=1) for e in spec.exponents(pts.shape[1])]
    return np.column_stack(cols)


def features(spec: FeatureSpec, design: Design) -> np.ndarray:
    return feature_rows(spec, design.points)


@dataclass(frozen=True, eq=False)
class IndexSet:
    u: int
    m: int
    d: int
    ell: int
    omega: int
    members: np.ndarray  # (N, d), 1-based

    def __len__(self):
        return self.members.shape[0]


def index_set_size(u: int, m: int, d: int, ell: int, omega: int) -> int:
    top = m - 2 * ell * omega
    return max(top - u, 0) * max(top, 0) ** (d - 1)


def index_set(u: int, m: int, d: int, ell: int, omega: int) -> IndexSet:
    if u not in (0, 1):
        raise ValidationError("u must be 0 or 1")
    if ell < 1 or omega < 2 or omega % 2:
        raise ValidationError("index sets need ell >= 1 and an even omega >= 2")
    top = m - 2 * ell * omega
    if index_set_size(u, m, d, ell, omega) == 0:
        raise InfeasibleEstimationError(
            f"empty index set: m={m} <= 2*ell*omega{'+1' if u else ''} = {2 * ell * omega + u}")
    ranges = [np.arange(1, top - u + 1)] + [np.arange(1, top + 1)] * (d - 1)
    mesh = np.meshgrid(*ranges, indexing="ij")
    members = np.stack([g.ravel() for g in mesh], axis=1)
    return IndexSet(u=u, m=m, d=d, ell=ell, omega=omega, members=members)

