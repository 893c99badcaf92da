"""Conserved quantities, action, Weinstein functional and ground-state identities."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .params import ModelParams, classify, criticality, m_star, pohozaev_denominator  # noqa: F401
from .spectral import Field, exact_integral_of_power, homogeneous_norm, integral, l2_norm


@dataclass(frozen=True)
class ConservedTriple:
    mass: float
    energy: float
    l1: float


def mass(u: Field) -> float:
    """Half the squared L^2 norm."""
    return 0.5 * float(np.sum(u.values**2) * u.grid.cell)


def dispersive_energy(u: Field, alpha: float) -> float:
    """||D^(alpha/2) u||^2."""
    return homogeneous_norm(u, alpha / 2.0) ** 2


def potential_integral(u: Field, m: int) -> float:
    """Alias-free integral of u^(m+1)."""
    return exact_integral_of_power(u, m + 1)


def energy(u: Field, p: ModelParams) -> float:
    return 0.5 * dispersive_energy(u, p.alpha) - potential_integral(u, p.m) / (p.m * (p.m + 1))


def l1_invariant(u: Field) -> float:
    return integral(u)


def action(u: Field, p: ModelParams, speed: float | None = None) -> float:
    """E[u] + c M[u]; the default speed 1 gives the plain sum E + M."""
    c = 1.0 if speed is None else speed
    return energy(u, p) + c * mass(u)


def conserved(u: Field, p: ModelParams) -> ConservedTriple:
    return ConservedTriple(mass(u), energy(u, p), l1_invariant(u))


def weinstein(u: Field, p: ModelParams) -> float:
    """Gagliardo-Nirenberg quotient, minimised by the ground state."""
    d, alpha, m = p.d, p.alpha, p.m
    denom = potential_integral(u, m)
    scale = l2_norm(u) ** (m + 1)
    if scale == 0 or not denom > 1e-14 * scale:
        raise DomainError("Weinstein quotient needs a positive integral of u^(m+1)")
    a = d * (m - 1) / alpha
    grad = math.sqrt(dispersive_energy(u, alpha))
    return grad**a * l2_norm(u) ** ((m + 1) - a) / denom


def sharp_gn_constant_from(params: ModelParams, q_l2: float) -> float:
    """Closed-form sharp constant in terms of ||Q_c||_{L^2} and (d, alpha, m, c)."""
    d, alpha, m, c = params.d, params.alpha, params.m, params.c
    denom = pohozaev_denominator(d, alpha, m)
    if denom <= 0:
        raise DomainError("sharp constant formula needs m below the energy-critical power")
    b = (2 * alpha - d * (m - 1)) / (2 * alpha)
    e = d * (m - 1) / (2 * alpha)
    num = m * alpha * (m + 1) * c**b
    den = d**e * (m - 1) ** e * denom**b
    return num / den / q_l2 ** (m - 1)


def sharp_gn_constant(gs) -> float:
    return sharp_gn_constant_from(gs.params, l2_norm(gs.Q))


@dataclass(frozen=True)
class PohozaevResiduals:
    r1: float
    r2: float
    r3: float
    flagged: bool = False

    def max(self) -> float:
        return max(self.r1, self.r2, self.r3)


def pohozaev_residuals(gs) -> PohozaevResiduals:
    """Relative residuals of the three integral identities for Q_c.

    The energy identity vanishes at the L^2-critical power; there the
    residual is measured against the size of the two energy components.
    """
    p = gs.params
    Q = gs.Q
    d, alpha, m, c = p.d, p.alpha, p.m, p.c
    denom = pohozaev_denominator(d, alpha, m)
    if abs(denom) < 1e-12:
        return PohozaevResiduals(math.nan, math.nan, math.nan, flagged=True)
    q2 = l2_norm(Q) ** 2
    grad = dispersive_energy(Q, alpha)
    pot = potential_integral(Q, m)
    e = 0.5 * grad - pot / (m * (m + 1))
    s_c = classify(d, alpha, m).s_c

    def rel(lhs, rhs, scale=None):
        scale = scale if scale is not None else max(abs(lhs), abs(rhs))
        return abs(lhs - rhs) / scale if scale > 0 else 0.0

    r1 = rel(grad, d * c * (m - 1) / denom * q2)
    r2 = rel(pot, alpha * c * m * (m + 1) / denom * q2)
    e_formula = s_c * c * (m - 1) / denom * q2
    e_scale = None
    if abs(s_c) < 1e-12:
        e_scale = 0.5 * grad + abs(pot) / (m * (m + 1))
    r3 = rel(e, e_formula, e_scale)
    return PohozaevResiduals(r1, r2, r3)


def energy_gap_factor(lam: float, p: ModelParams) -> float:
    """(d(m-1)/(2 alpha))(lam^(2 alpha/d) - 1) - (lam^(m-1) - 1)."""
    d, alpha, m = p.d, p.alpha, p.m
    return d * (m - 1) / (2 * alpha) * (lam ** (2 * alpha / d) - 1) - (lam ** (m - 1) - 1)
