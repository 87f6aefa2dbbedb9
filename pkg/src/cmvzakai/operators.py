"""Differential operators on test functions and on cylinder functions of measures.

Conventions:

* ``L phi = 1/2 tr[(sigma sigma^T + rho rho^T) Hess phi] + b . grad phi``
* ``H phi = rho . grad phi + h phi``
* ``D psi = (grad psi, psi)`` stacked in ``R^{d+1}``; for a cylinder function
  ``F(n) = f(<n, psi_1>, ..., <n, psi_k>)`` the L-derivatives are
  ``d_mu F(n, x) = sum_i f_i D psi_i(x)``, ``d_x d_mu F = sum_i f_i D^2 psi_i`` (a
  ``(d+1) x d`` matrix) and ``d^2_mu F(n, x, x') = sum_ij f_ij D psi_i(x) D psi_j(x')^T``.

The law seen by the coefficients is always ``m = normalize(n)``; the moment
vector ``z`` is bookkeeping only and is never inverted.
"""
from __future__ import annotations

from collections.abc import Callable, Sequence
from dataclasses import dataclass

import numpy as np

from .coefficients import CoefficientSet, CoefficientValues
from .errors import DimensionError, ParameterError
from .measures import WeightedAtomMeasure, normalize
from .testfunctions import BasisFunction, TestFunctionBasis, as_points, stacked_derivs


def diffusion_matrix(v: CoefficientValues) -> np.ndarray:
    """``sigma sigma^T + rho rho^T`` per point, shape ``(n, d, d)``."""
    return np.einsum("nij,nkj->nik", v.sigma, v.sigma) + np.einsum("ni,nj->nij", v.rho, v.rho)


def L_from_values(phi: BasisFunction, x: np.ndarray, v: CoefficientValues) -> np.ndarray:
    a = diffusion_matrix(v)
    return 0.5 * np.einsum("nij,nij->n", a, phi.hess(x)) + np.einsum("ni,ni->n", v.b, phi.grad(x))


def H_from_values(phi: BasisFunction, x: np.ndarray, v: CoefficientValues) -> np.ndarray:
    return np.einsum("ni,ni->n", v.rho, phi.grad(x)) + v.h * phi.value(x)


def operator_terms(phi: BasisFunction, x: np.ndarray, v: CoefficientValues, a: np.ndarray | None = None):
    """``(phi, L phi, H phi, Q phi)`` from a single derivative evaluation, where
    ``Q phi = 1/2 rho^T Hess phi rho + h rho . grad phi + 1/2 h^2 phi`` is the
    second-order observation term. ``a`` is the precomputed diffusion matrix."""
    val, grad, hess = phi.derivs(x)
    if x.shape[1] == 1:
        # scalar state: plain products instead of contractions
        g, hs, r, b = grad[:, 0], hess[:, 0, 0], v.rho[:, 0], v.b[:, 0]
        a1 = (v.sigma[:, 0, 0] ** 2 + r**2) if a is None else a[:, 0, 0]
        rg = r * g
        Lphi = 0.5 * a1 * hs + b * g
        Hphi = rg + v.h * val
        Qphi = 0.5 * r * r * hs + v.h * rg + 0.5 * v.h**2 * val
        return val, Lphi, Hphi, Qphi
    a = diffusion_matrix(v) if a is None else a
    rg = np.einsum("ni,ni->n", v.rho, grad)
    Lphi = 0.5 * np.einsum("nij,nij->n", a, hess) + np.einsum("ni,ni->n", v.b, grad)
    Hphi = rg + v.h * val
    Qphi = 0.5 * np.einsum("ni,nij,nj->n", v.rho, hess, v.rho) + v.h * rg + 0.5 * v.h**2 * val
    return val, Lphi, Hphi, Qphi


def apply_L(phi: BasisFunction, t: float, x, y, mu, coeffs: CoefficientSet) -> np.ndarray:
    """Second-order generator applied to ``phi`` at each row of ``x``."""
    x = as_points(x, coeffs.d)
    return L_from_values(phi, x, coeffs.eval(t, x, y, mu))


def apply_H(phi: BasisFunction, t: float, x, y, mu, coeffs: CoefficientSet) -> np.ndarray:
    """Observation operator ``rho . grad phi + h phi`` at each row of ``x``."""
    x = as_points(x, coeffs.d)
    return H_from_values(phi, x, coeffs.eval(t, x, y, mu))


def operator_terms_stacked(functions, x: np.ndarray, v: CoefficientValues):
    """:func:`operator_terms` for several functions; each output is ``(n, K)``."""
    val, grad, hess = stacked_derivs(functions, x)
    if x.shape[1] == 1:
        g, hs = grad[:, :, 0], hess[:, :, 0, 0]
        r, b, h = v.rho[:, :1], v.b[:, :1], v.h[:, None]
        a1 = v.sigma[:, 0, :1] ** 2 + r**2
        rg = r * g
        return val, 0.5 * a1 * hs + b * g, rg + h * val, 0.5 * r * r * hs + h * rg + 0.5 * h * h * val
    a = diffusion_matrix(v)
    rg = np.einsum("ni,nki->nk", v.rho, grad)
    Lphi = 0.5 * np.einsum("nij,nkij->nk", a, hess) + np.einsum("ni,nki->nk", v.b, grad)
    h = v.h[:, None]
    Qphi = 0.5 * np.einsum("ni,nkij,nj->nk", v.rho, hess, v.rho) + h * rg + 0.5 * h * h * val
    return val, Lphi, rg + h * val, Qphi


@dataclass(frozen=True)
class OuterFunction:
    """A ``C^2`` map ``R^k -> R`` given by value, gradient and Hessian callables."""

    f: Callable[[np.ndarray], float]
    grad: Callable[[np.ndarray], np.ndarray]
    hess: Callable[[np.ndarray], np.ndarray]
    name: str = "f"

    @classmethod
    def linear(cls, coefs: Sequence[float], const: float = 0.0) -> "OuterFunction":
        c = np.asarray(coefs, dtype=float)
        k = len(c)
        return cls(lambda u: const + float(c @ u), lambda u: c.copy(), lambda u: np.zeros((k, k)), "linear")

    @classmethod
    def constant(cls, k: int, value: float = 1.0) -> "OuterFunction":
        return cls(lambda u: float(value), lambda u: np.zeros(k), lambda u: np.zeros((k, k)), "constant")

    @classmethod
    def quadratic(cls, Q, c=None) -> "OuterFunction":
        """``u^T Q u / 2 + c . u`` with symmetric ``Q``."""
        Q = np.asarray(Q, dtype=float)
        Q = 0.5 * (Q + Q.T)
        c = np.zeros(Q.shape[0]) if c is None else np.asarray(c, dtype=float)
        return cls(lambda u: 0.5 * float(u @ Q @ u) + float(c @ u), lambda u: Q @ u + c, lambda u: Q.copy(), "quadratic")

    @classmethod
    def square(cls) -> "OuterFunction":
        """``f(u) = u^2`` on ``R^1``."""
        return cls(lambda u: float(u[0] ** 2), lambda u: np.array([2 * u[0]]), lambda u: np.array([[2.0]]), "square")

    @classmethod
    def sin_sum(cls, coefs: Sequence[float]) -> "OuterFunction":
        """``sin(c . u)``; a genuinely nonlinear outer function for tests."""
        c = np.asarray(coefs, dtype=float)
        return cls(
            lambda u: float(np.sin(c @ u)),
            lambda u: np.cos(c @ u) * c,
            lambda u: -np.sin(c @ u) * np.outer(c, c),
            "sin",
        )


@dataclass(frozen=True)
class CylindricalFunction:
    """``F(n) = f(<n, psi_1>, ..., <n, psi_k>)``."""

    outer: OuterFunction
    psis: tuple[BasisFunction, ...]

    def __post_init__(self):
        if len(self.psis) < 1:
            raise ParameterError("a cylinder function needs k >= 1 inner functions")
        object.__setattr__(self, "psis", tuple(self.psis))

    @classmethod
    def of(cls, outer: OuterFunction, psis: TestFunctionBasis | Sequence[BasisFunction]) -> "CylindricalFunction":
        return cls(outer, tuple(psis))

    @property
    def k(self) -> int:
        return len(self.psis)

    def moments(self, nu: WeightedAtomMeasure) -> np.ndarray:
        return np.array([nu.weights @ p.value(nu.positions) for p in self.psis])

    def __call__(self, nu: WeightedAtomMeasure) -> float:
        return float(self.outer.f(self.moments(nu)))


def _stacked_D(psi: BasisFunction, x: np.ndarray) -> np.ndarray:
    """``D psi(x) = (grad psi, psi)``, shape ``(n, d+1)``."""
    return np.concatenate([psi.grad(x), psi.value(x)[:, None]], axis=1)


def _stacked_D2(psi: BasisFunction, x: np.ndarray) -> np.ndarray:
    """``d_x D psi(x)``: Hessian stacked over the gradient row, shape ``(n, d+1, d)``."""
    return np.concatenate([psi.hess(x), psi.grad(x)[:, None, :]], axis=1)


def l_derivative_cylinder(F: CylindricalFunction, nu: WeightedAtomMeasure, x, x_prime=None):
    """First L-derivative, its spatial derivative, and the second L-derivative.

    Args:
        F: Cylinder function.
        nu: Measure at which the derivatives are taken.
        x: Points, shape ``(n, d)``.
        x_prime: Second points for ``d^2_mu F(nu, x, x')``; defaults to ``x``.
            Paired row-wise with ``x``.

    Returns:
        ``(d_mu F (n, d+1), d_x d_mu F (n, d+1, d), d^2_mu F (n, d+1, d+1))``.
    """
    x = as_points(x, nu.d)
    xp = x if x_prime is None else as_points(x_prime, nu.d)
    if xp.shape[0] != x.shape[0]:
        raise DimensionError("x and x' must have the same number of rows")
    u = F.moments(nu)
    g = np.asarray(F.outer.grad(u), dtype=float)
    Hf = np.asarray(F.outer.hess(u), dtype=float)
    D = np.stack([_stacked_D(p, x) for p in F.psis])  # (k, n, d+1)
    Dp = D if x_prime is None else np.stack([_stacked_D(p, xp) for p in F.psis])
    D2 = np.stack([_stacked_D2(p, x) for p in F.psis])  # (k, n, d+1, d)
    first = np.einsum("i,ina->na", g, D)
    mixed = np.einsum("i,inab->nab", g, D2)
    second = np.einsum("ij,ina,jnb->nab", Hf, D, Dp)
    return first, mixed, second


def generator_measure(
    F: CylindricalFunction,
    n: WeightedAtomMeasure,
    t: float,
    y,
    coeffs: CoefficientSet,
    values: CoefficientValues | None = None,
) -> float:
    """Measure-space generator applied to ``F`` at ``n``, via L-derivatives.

    Evaluates ``int [d_n F . bbar + 1/2 (d_x d_n F)_top : a] dn`` plus the
    double integral ``1/2 int int d^2_n F : Hcal(x) Hcal(x')^T dn dn`` with
    ``bbar = (b, 0)``, ``a = sigma sigma^T + rho rho^T`` and ``Hcal = (rho, h)``.
    The double integrand is rank one in ``(x, x')`` so it factors into a
    product of single sums.

    Args:
        values: Coefficients already evaluated at ``(t, atoms, y, normalize(n))``;
            recomputed when omitted.
    """
    m = normalize(n)
    x, w = n.positions, n.weights
    v = coeffs.eval(t, x, y, m) if values is None else values
    d = n.d
    val, grad, hess = stacked_derivs(F.psis, x)
    u = w @ val
    g = np.asarray(F.outer.grad(u), dtype=float)
    Hf = np.asarray(F.outer.hess(u), dtype=float)

    D = np.concatenate([grad, val[:, :, None]], axis=2)  # (n, k, d+1)
    D2 = np.concatenate([hess, grad[:, :, None, :]], axis=2)  # (n, k, d+1, d)
    first = np.einsum("k,nka->na", g, D)
    mixed = np.einsum("k,nkab->nab", g, D2)
    bbar = np.concatenate([v.b, np.zeros((x.shape[0], 1))], axis=1)
    drift = np.einsum("na,na->n", first, bbar)
    diff = 0.5 * np.einsum("nab,nab->n", mixed[:, :d, :], diffusion_matrix(v))
    single = float(w @ (drift + diff))

    # double integral: sum_ij f_ij <n, D psi_i . Hcal> <n, D psi_j . Hcal>
    Hcal = np.concatenate([v.rho, v.h[:, None]], axis=1)
    proj = w @ np.einsum("nka,na->nk", D, Hcal)
    double = 0.5 * float(proj @ Hf @ proj)
    return single + double


def lifted_coefficients(t: float, y, n: WeightedAtomMeasure, coeffs: CoefficientSet, basis, K: int | None = None):
    """``(alpha (K, K), beta (K,), gamma (K,))`` at the measure ``n``.

    ``gamma_i = <n, H phi_i>``, ``beta_i = <n, L phi_i>``, ``alpha = gamma gamma^T``;
    coefficients evaluated at ``normalize(n)``.
    """
    funcs = list(basis)[: (len(basis) if K is None else K)]
    if K is not None and K > len(basis):
        raise ParameterError(f"K={K} exceeds basis length {len(basis)}")
    m = normalize(n)
    x, w = n.positions, n.weights
    v = coeffs.eval(t, x, y, m)
    beta = np.array([w @ L_from_values(p, x, v) for p in funcs])
    gamma = np.array([w @ H_from_values(p, x, v) for p in funcs])
    return np.outer(gamma, gamma), beta, gamma


def alpha_beta_gamma(t: float, y, z, n: WeightedAtomMeasure, coeffs: CoefficientSet, basis, i: int, j: int):
    """Single entries ``(alpha_ij, beta_i, gamma_i)`` (0-based ``i``, ``j``).

    ``z`` is the moment vector of ``n``; it is checked for consistency but
    the computation always uses ``n`` itself.
    """
    K = max(i, j) + 1
    if z is not None:
        z = np.asarray(z, dtype=float)
        zz = np.array([n.weights @ basis[k].value(n.positions) for k in range(min(len(z), len(basis)))])
        if not np.allclose(z[: len(zz)], zz, rtol=1e-10, atol=1e-12):
            raise ParameterError("z is not the projection of the supplied measure")
    alpha, beta, gamma = lifted_coefficients(t, y, n, coeffs, basis, K)
    return float(alpha[i, j]), float(beta[i]), float(gamma[i])


def generator_measure_expanded(F: CylindricalFunction, n: WeightedAtomMeasure, t: float, y, coeffs: CoefficientSet) -> float:
    """Same generator through the cylinder expansion
    ``sum_i f_i <n, L psi_i> + 1/2 sum_ij f_ij <n, H psi_i><n, H psi_j>``.
    Independent of :func:`generator_measure`'s L-derivative path."""
    _, beta, gamma = lifted_coefficients(t, y, n, coeffs, F.psis)
    u = F.moments(n)
    g = np.asarray(F.outer.grad(u), dtype=float)
    Hf = np.asarray(F.outer.hess(u), dtype=float)
    return float(g @ beta + 0.5 * gamma @ Hf @ gamma)


def generator_A(
    f: OuterFunction,
    t: float,
    ybar: float,
    z,
    n: WeightedAtomMeasure,
    coeffs: CoefficientSet,
    basis,
    cross_term: bool = False,
) -> float:
    """Filtered-martingale generator on ``f(ybar, z_1..z_k)`` (index 0 is ``ybar``).

    ``A f = 1/2 sum_ij f_ij alpha_ij + sum_i f_i beta_i + 1/2 f_00``. The
    observation enters the coefficients through ``ybar``. With ``cross_term``
    the mixed Ito term ``sum_i f_0i gamma_i`` of the coupled ``(Z, Y)``
    diffusion is added; it vanishes when ``f`` separates in ``ybar``.
    """
    z = np.asarray(z, dtype=float)
    k = len(z)
    alpha, beta, gamma = lifted_coefficients(t, ybar, n, coeffs, basis, k)
    arg = np.concatenate([[ybar], z])
    g = np.asarray(f.grad(arg), dtype=float)
    Hf = np.asarray(f.hess(arg), dtype=float)
    if g.shape != (k + 1,) or Hf.shape != (k + 1, k + 1):
        raise DimensionError(f"outer function must act on R^{k + 1}")
    out = 0.5 * float(np.sum(Hf[1:, 1:] * alpha)) + float(g[1:] @ beta) + 0.5 * float(Hf[0, 0])
    if cross_term:
        out += float(Hf[0, 1:] @ gamma)
    return out
