"""Model parameters and the criticality classification."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ConfigurationError

SUBCRITICAL = "subcritical"
CRITICAL = "critical"
SUPERCRITICAL = "supercritical"
ENERGY_CRITICAL = "energy-critical"
ENERGY_SUPERCRITICAL = "energy-supercritical"


def m_star(d: int, alpha: float) -> float:
    """Energy-critical power (d+alpha)/(d-alpha), infinite when alpha >= d."""
    if alpha >= d:
        return math.inf
    return (d + alpha) / (d - alpha)


def critical_index(d: int, alpha: float, m: float) -> float:
    return d / 2.0 - alpha / (m - 1.0)


def pohozaev_denominator(d: int, alpha: float, m: float) -> float:
    """2d - (d - alpha)(m + 1); vanishes exactly at the energy-critical power."""
    return 2.0 * d - (d - alpha) * (m + 1.0)


@dataclass(frozen=True)
class CriticalityReport:
    s_c: float
    m_star: float
    label: str

    @property
    def subcritical(self) -> bool:
        return self.label == SUBCRITICAL

    @property
    def supercritical(self) -> bool:
        return self.label == SUPERCRITICAL


def classify(d: int, alpha: float, m: float, tol: float = 1e-12) -> CriticalityReport:
    """Classify by the sign of s_c and the position of m relative to m_*."""
    s_c = critical_index(d, alpha, m)
    ms = m_star(d, alpha)
    if abs(s_c) <= tol:
        label = CRITICAL
    elif s_c < 0:
        label = SUBCRITICAL
    elif math.isfinite(ms) and abs(m - ms) <= tol * max(1.0, ms):
        label = ENERGY_CRITICAL
    elif m > ms:
        label = ENERGY_SUPERCRITICAL
    else:
        label = SUPERCRITICAL
    return CriticalityReport(s_c, ms, label)


@dataclass(frozen=True)
class ModelParams:
    """Dimension, dispersion order, nonlinearity power and wave speed.

    alpha = 2 (the local KdV-type case) is accepted so that closed-form
    sech^2 profiles can serve as reference solutions.
    """

    d: int
    alpha: float
    m: int
    c: float = 1.0

    def __post_init__(self):
        problems = validate_params(self.d, self.alpha, self.m, self.c)
        if problems:
            raise ConfigurationError("; ".join(problems))

    @property
    def criticality(self) -> CriticalityReport:
        return classify(self.d, self.alpha, self.m)

    def with_speed(self, c: float) -> "ModelParams":
        return ModelParams(self.d, self.alpha, self.m, c)


def validate_params(d, alpha, m, c) -> list[str]:
    """Return every violated parameter constraint (empty when valid)."""
    problems = []
    if d not in (1, 2):
        problems.append(f"d must be 1 or 2, got {d}")
    if not (isinstance(alpha, (int, float)) and 0 < alpha <= 2):
        problems.append(f"alpha must satisfy 0 < alpha <= 2, got {alpha}")
    if isinstance(m, float) and m.is_integer():
        m = int(m)
    if not isinstance(m, int) or isinstance(m, bool) or m < 2:
        problems.append(f"m must be an integer >= 2, got {m}")
    if not (isinstance(c, (int, float)) and c > 0 and math.isfinite(c)):
        problems.append(f"c must be positive, got {c}")
    if not problems:
        ms = m_star(d, alpha)
        if m >= ms:
            problems.append(f"m = {m} must be below m_* = {ms:g} for d = {d}, alpha = {alpha}")
    return problems


def criticality(p: ModelParams) -> CriticalityReport:
    return p.criticality
