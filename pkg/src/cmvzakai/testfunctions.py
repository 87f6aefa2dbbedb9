"""Smooth test functions on R^d with analytic gradients and Hessians.

All evaluators are vectorised over a batch of points ``x`` of shape ``(n, d)``
and return arrays of shape ``(n,)``, ``(n, d)`` and ``(n, d, d)``.
"""
from __future__ import annotations

import itertools
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, ParameterError


def as_points(x, d: int | None = None) -> np.ndarray:
    """Coerce ``x`` into an ``(n, d)`` float array."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(-1, 1) if d in (None, 1) else arr.reshape(1, -1)
    if arr.ndim != 2:
        raise DimensionError(f"points must be 2-D (n, d), got shape {arr.shape}")
    if d is not None and arr.shape[1] != d:
        raise DimensionError(f"expected points of dimension {d}, got {arr.shape[1]}")
    return arr


class BasisFunction:
    """Base class; ``dim`` is None for functions defined in every dimension."""

    __test__ = False
    dim: int | None = None
    name: str = "phi"

    def _check(self, x) -> np.ndarray:
        return as_points(x, self.dim)

    def value(self, x) -> np.ndarray:
        raise NotImplementedError

    def grad(self, x) -> np.ndarray:
        raise NotImplementedError

    def hess(self, x) -> np.ndarray:
        raise NotImplementedError

    def derivs(self, x) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """``(value, grad, hess)`` in one call; subclasses may share work."""
        return self.value(x), self.grad(x), self.hess(x)

    def __call__(self, x) -> np.ndarray:
        return self.value(x)


@dataclass(frozen=True)
class Bump(BasisFunction):
    """Compactly supported bump ``exp(1 / (|u|^2 - 1))`` with ``u = (x - center) / radius``."""

    center: tuple[float, ...]
    radius: float
    name: str = "bump"

    def __post_init__(self):
        if self.radius <= 0:
            raise ParameterError("bump radius must be positive")
        object.__setattr__(self, "center", tuple(float(c) for c in np.atleast_1d(self.center)))

    @property
    def dim(self) -> int:  # type: ignore[override]
        return len(self.center)

    def _parts(self, x):
        x = self._check(x)
        u = (x - np.asarray(self.center)) / self.radius
        s = np.einsum("ij,ij->i", u, u)
        inside = s < 1.0
        g = np.zeros_like(s)
        # 1/(s-1) -> -inf at the boundary; mask before dividing
        inv = np.zeros_like(s)
        inv[inside] = 1.0 / (s[inside] - 1.0)
        g[inside] = np.exp(inv[inside])
        return u, s, inside, g, inv

    def value(self, x):
        return self._parts(x)[3]

    def grad(self, x):
        u, s, inside, g, inv = self._parts(x)
        # dG/ds = -G/(s-1)^2, ds/dx = 2u/r
        dg = -g * inv**2
        return (dg * 2.0 / self.radius)[:, None] * u

    def hess(self, x):
        u, s, inside, g, inv = self._parts(x)
        r = self.radius
        dg = -g * inv**2
        d2g = g * inv**4 + 2.0 * g * inv**3
        d = u.shape[1]
        outer = np.einsum("i,ij,ik->ijk", d2g * 4.0 / r**2, u, u)
        return outer + (dg * 2.0 / r**2)[:, None, None] * np.eye(d)[None]

    def derivs(self, x):
        x = self._check(x)
        n, d = x.shape
        val = np.zeros(n)
        grad = np.zeros((n, d))
        hess = np.zeros((n, d, d))
        u = (x - np.asarray(self.center)) / self.radius
        s = np.einsum("ij,ij->i", u, u)
        idx = np.flatnonzero(s < 1.0)
        if idx.size:
            ui = u[idx]
            inv = 1.0 / (s[idx] - 1.0)
            g = np.exp(inv)
            dg = -g * inv**2
            d2g = g * inv**4 + 2.0 * g * inv**3
            r = self.radius
            val[idx] = g
            grad[idx] = (dg * 2.0 / r)[:, None] * ui
            if d == 1:
                hess[idx, 0, 0] = d2g * 4.0 / r**2 * ui[:, 0] ** 2 + dg * 2.0 / r**2
            else:
                hess[idx] = np.einsum("i,ij,ik->ijk", d2g * 4.0 / r**2, ui, ui) + (dg * 2.0 / r**2)[:, None, None] * np.eye(d)[None]
        return val, grad, hess


@dataclass(frozen=True)
class Constant(BasisFunction):
    """Constant function; stands in for ``1`` in mass checks (only its vanishing derivatives matter)."""

    c: float = 1.0
    name: str = "const"

    def value(self, x):
        x = self._check(x)
        return np.full(x.shape[0], float(self.c))

    def grad(self, x):
        return np.zeros_like(self._check(x))

    def hess(self, x):
        x = self._check(x)
        return np.zeros((x.shape[0], x.shape[1], x.shape[1]))


@dataclass(frozen=True)
class Coordinate(BasisFunction):
    """``x -> x_j``; the identity in d=1."""

    j: int = 0
    name: str = "coord"

    def value(self, x):
        return self._check(x)[:, self.j].copy()

    def grad(self, x):
        x = self._check(x)
        g = np.zeros_like(x)
        g[:, self.j] = 1.0
        return g

    def hess(self, x):
        x = self._check(x)
        return np.zeros((x.shape[0], x.shape[1], x.shape[1]))


@dataclass(frozen=True)
class Square(BasisFunction):
    """``x -> x_j^2``."""

    j: int = 0
    name: str = "square"

    def value(self, x):
        return self._check(x)[:, self.j] ** 2

    def grad(self, x):
        x = self._check(x)
        g = np.zeros_like(x)
        g[:, self.j] = 2.0 * x[:, self.j]
        return g

    def hess(self, x):
        x = self._check(x)
        h = np.zeros((x.shape[0], x.shape[1], x.shape[1]))
        h[:, self.j, self.j] = 2.0
        return h


@dataclass(frozen=True)
class GaussianBump(BasisFunction):
    """``exp(-|x - center|^2 / (2 s^2))``; smooth and bounded but not compactly supported."""

    center: tuple[float, ...]
    scale: float = 1.0
    name: str = "gauss"

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in np.atleast_1d(self.center)))

    @property
    def dim(self) -> int:  # type: ignore[override]
        return len(self.center)

    def value(self, x):
        u = (self._check(x) - np.asarray(self.center)) / self.scale
        return np.exp(-0.5 * np.einsum("ij,ij->i", u, u))

    def grad(self, x):
        u = (self._check(x) - np.asarray(self.center)) / self.scale
        g = np.exp(-0.5 * np.einsum("ij,ij->i", u, u))
        return -(g / self.scale)[:, None] * u

    def hess(self, x):
        u = (self._check(x) - np.asarray(self.center)) / self.scale
        g = np.exp(-0.5 * np.einsum("ij,ij->i", u, u))
        d = u.shape[1]
        return (g / self.scale**2)[:, None, None] * (np.einsum("ij,ik->ijk", u, u) - np.eye(d)[None])


@dataclass(frozen=True)
class LinearCombination(BasisFunction):
    functions: tuple[BasisFunction, ...]
    coefs: tuple[float, ...]
    name: str = "lincomb"

    def value(self, x):
        return sum(c * f.value(x) for f, c in zip(self.functions, self.coefs))

    def grad(self, x):
        return sum(c * f.grad(x) for f, c in zip(self.functions, self.coefs))

    def hess(self, x):
        return sum(c * f.hess(x) for f, c in zip(self.functions, self.coefs))


@dataclass
class TestFunctionBasis:
    """Ordered family of test functions; the order defines the projection map."""

    __test__ = False
    functions: list[BasisFunction] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.functions)

    def __getitem__(self, k):
        if isinstance(k, slice):
            return TestFunctionBasis(self.functions[k])
        return self.functions[k]

    def __iter__(self):
        return iter(self.functions)

    def values(self, x) -> np.ndarray:
        """Stacked values, shape ``(n, K)``."""
        return np.stack([f.value(x) for f in self.functions], axis=1)


def stacked_derivs(functions: Sequence[BasisFunction], x) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Values ``(n, K)``, gradients ``(n, K, d)`` and Hessians ``(n, K, d, d)`` of
    several functions at once. One-dimensional bump families are evaluated in
    a single vectorised pass."""
    funcs = list(functions)
    x = as_points(x)
    n, d = x.shape
    if d == 1 and funcs and all(isinstance(f, Bump) and f.dim == 1 for f in funcs):
        c = np.array([f.center[0] for f in funcs])
        r = np.array([f.radius for f in funcs])
        u = (x[:, :1] - c) / r
        s = u * u
        inside = s < 1.0
        inv = np.divide(1.0, s - 1.0, out=np.zeros_like(s), where=inside)
        g = np.exp(inv, out=np.zeros_like(s), where=inside)
        inv2 = inv * inv
        dg = -g * inv2
        d2g = g * inv2 * (inv2 + 2.0 * inv)
        grad = dg * 2.0 * u / r
        hess = d2g * 4.0 * s / r**2 + dg * 2.0 / r**2
        return g, grad[:, :, None], hess[:, :, None, None]
    parts = [f.derivs(x) for f in funcs]
    return (
        np.stack([p[0] for p in parts], axis=1),
        np.stack([p[1] for p in parts], axis=1),
        np.stack([p[2] for p in parts], axis=1),
    )


def dyadic_bump_basis(
    d: int = 1,
    size: int = 16,
    box: tuple[float, float] = (-3.0, 3.0),
    base_radius: float = 2.0,
) -> TestFunctionBasis:
    """Bumps on successively refined grids: level ``j`` has radius ``base_radius / 2**j``
    and centres spaced by that radius over ``box``. Coarse levels come first."""
    if size < 1:
        raise ParameterError("basis size must be >= 1")
    lo, hi = box
    funcs: list[BasisFunction] = []
    level = 0
    while len(funcs) < size:
        r = base_radius / 2**level
        n = int(np.floor((hi - lo) / r + 1e-9)) + 1
        grid = lo + r * np.arange(n)
        for c in itertools.product(grid, repeat=d):
            funcs.append(Bump(center=tuple(c), radius=r, name=f"bump[l={level},c={tuple(np.round(c, 6))}]"))
            if len(funcs) == size:
                break
        level += 1
        if level > 30:
            raise ParameterError("could not build requested basis size")
    return TestFunctionBasis(funcs)


def basis_from(functions: Sequence[BasisFunction]) -> TestFunctionBasis:
    return TestFunctionBasis(list(functions))
