"""Periodic grids, Fourier multipliers, Sobolev norms and translations.

Fields live on the periodic box ``[-L/2, L/2)^d`` sampled at ``N`` points per
axis, with the origin at index ``N//2``. Spectra use the real-FFT layout
(``scipy.fft.rfftn``): every axis is full except the last, which is halved.
The Nyquist mode is excluded from the Galerkin space: odd multipliers and all
dealiased products return it as zero.

The box is a periodic surrogate for R^d. For algebraically decaying profiles
(|Q| ~ |x|^-(d+alpha)) the truncation error of integrals over the box scales
like L^-(d+alpha) * L^(d-1), so the half-length must be large compared to the
range over which the tail is resolved.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np
import scipy.fft as sfft

from .errors import ConfigurationError, DomainError, GridMismatchError

def _is_pow2(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid on ``[-L/2, L/2)^d``."""

    d: int
    L: tuple[float, ...]
    N: tuple[int, ...]

    def __post_init__(self):
        if self.d not in (1, 2):
            raise ConfigurationError(f"dimension must be 1 or 2, got {self.d}")
        if len(self.L) != self.d or len(self.N) != self.d:
            raise ConfigurationError("L and N must have one entry per axis")
        for n in self.N:
            if not _is_pow2(int(n)) or n < 32:
                raise ConfigurationError(f"N must be a power of two >= 32, got {n}")
        for length in self.L:
            if not (length > 0 and math.isfinite(length)):
                raise ConfigurationError(f"L must be positive, got {length}")

    # -- geometry -----------------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.N)

    @property
    def size(self) -> int:
        return int(np.prod(self.N))

    @property
    def h(self) -> tuple[float, ...]:
        return tuple(length / n for length, n in zip(self.L, self.N))

    @property
    def cell(self) -> float:
        """Volume of one grid cell, h^d."""
        return float(np.prod(self.h))

    @property
    def volume(self) -> float:
        return float(np.prod(self.L))

    @property
    def spec_shape(self) -> tuple[int, ...]:
        return tuple(self.N[:-1]) + (self.N[-1] // 2 + 1,)

    @cached_property
    def axes(self) -> tuple[np.ndarray, ...]:
        """1-D coordinate vectors, origin at index N//2."""
        return tuple((np.arange(n) - n // 2) * (length / n) for length, n in zip(self.L, self.N))

    @cached_property
    def coords(self) -> tuple[np.ndarray, ...]:
        """Coordinates broadcastable to ``shape``."""
        out = []
        for j, ax in enumerate(self.axes):
            s = [1] * self.d
            s[j] = -1
            out.append(ax.reshape(s))
        return tuple(out)

    @cached_property
    def radius(self) -> np.ndarray:
        r2 = sum(c**2 for c in self.coords)
        return np.sqrt(np.broadcast_to(r2, self.shape))

    # -- spectral -----------------------------------------------------------
    @cached_property
    def wavenumbers(self) -> tuple[np.ndarray, ...]:
        """Per-axis wavenumbers 2*pi*k/L broadcastable to ``spec_shape``."""
        out = []
        for j, (length, n) in enumerate(zip(self.L, self.N)):
            if j == self.d - 1:
                k = sfft.rfftfreq(n, d=1.0 / n)
            else:
                k = sfft.fftfreq(n, d=1.0 / n)
            s = [1] * self.d
            s[j] = -1
            out.append((2.0 * np.pi / length * k).reshape(s))
        return tuple(out)

    @cached_property
    def xi_abs(self) -> np.ndarray:
        return np.sqrt(np.broadcast_to(sum(x**2 for x in self.wavenumbers), self.spec_shape))

    @cached_property
    def nyquist_mask(self) -> np.ndarray:
        """True on modes kept in the Galerkin space (Nyquist excluded)."""
        mask = np.ones(self.spec_shape, dtype=bool)
        for j, n in enumerate(self.N):
            idx = [slice(None)] * self.d
            idx[j] = n // 2
            mask[tuple(idx)] = False
        return mask

    @cached_property
    def half_weights(self) -> np.ndarray:
        """Multiplicity of each stored mode in the full spectrum."""
        w = np.full(self.spec_shape, 2.0)
        idx = [slice(None)] * self.d
        idx[-1] = 0
        w[tuple(idx)] = 1.0
        idx[-1] = self.N[-1] // 2
        w[tuple(idx)] = 1.0
        return w

    @property
    def max_wavenumber(self) -> float:
        return float(max(np.pi * n / length for length, n in zip(self.L, self.N)))

    # -- transforms ---------------------------------------------------------
    def fft(self, values: np.ndarray) -> np.ndarray:
        return sfft.rfftn(values, s=self.shape)

    def ifft(self, hat: np.ndarray) -> np.ndarray:
        return sfft.irfftn(hat, s=self.shape)

    def __repr__(self):
        return f"Grid(d={self.d}, L={self.L}, N={self.N})"


def make_grid(d: int, L, N) -> Grid:
    """Build a periodic grid; scalars are broadcast to every axis."""
    Ls = tuple(float(v) for v in np.broadcast_to(np.asarray(L, dtype=float), (d,)))
    Ns = np.broadcast_to(np.asarray(N), (d,))
    if np.any(Ns != np.round(Ns)):
        raise ConfigurationError(f"N must be integral, got {N}")
    return Grid(int(d), Ls, tuple(int(v) for v in Ns))


class Field:
    """Real samples on a grid with a lazily cached spectrum.

    Fields are treated as immutable: the sample array is made read-only.
    """

    __slots__ = ("grid", "values", "_hat")

    def __init__(self, grid: Grid, values, hat: np.ndarray | None = None):
        values = np.asarray(values, dtype=float)
        if values.shape != grid.shape:
            values = np.broadcast_to(values, grid.shape).copy()
        if not np.all(np.isfinite(values)):
            raise DomainError("field samples must be finite")
        values.flags.writeable = False
        self.grid = grid
        self.values = values
        self._hat = None
        if hat is not None:
            hat = np.asarray(hat, dtype=complex)
            hat.flags.writeable = False
            self._hat = hat

    @classmethod
    def from_hat(cls, grid: Grid, hat: np.ndarray) -> "Field":
        hat = np.array(hat, dtype=complex)
        return cls(grid, grid.ifft(hat), hat)

    @classmethod
    def from_function(cls, grid: Grid, func: Callable[..., np.ndarray]) -> "Field":
        return cls(grid, func(*grid.coords))

    @classmethod
    def zeros(cls, grid: Grid) -> "Field":
        return cls(grid, np.zeros(grid.shape))

    @property
    def hat(self) -> np.ndarray:
        if self._hat is None:
            hat = self.grid.fft(self.values)
            hat.flags.writeable = False
            self._hat = hat
        return self._hat

    @property
    def has_spectrum(self) -> bool:
        return self._hat is not None

    # -- arithmetic (pointwise, no dealiasing) -----------------------------
    def _check(self, other: "Field"):
        if other.grid != self.grid:
            raise GridMismatchError(f"{self.grid} vs {other.grid}")

    def __add__(self, other):
        if isinstance(other, Field):
            self._check(other)
            return Field(self.grid, self.values + other.values)
        return Field(self.grid, self.values + other)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Field):
            self._check(other)
            return Field(self.grid, self.values - other.values)
        return Field(self.grid, self.values - other)

    def __rsub__(self, other):
        return Field(self.grid, other - self.values)

    def __mul__(self, other):
        if isinstance(other, Field):
            self._check(other)
            return Field(self.grid, self.values * other.values)
        hat = None if self._hat is None or not np.isscalar(other) else self._hat * other
        return Field(self.grid, self.values * other, hat)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Field):
            self._check(other)
            return Field(self.grid, self.values / other.values)
        return self * (1.0 / other)

    def __neg__(self):
        return self * -1.0

    def __pow__(self, k):
        return Field(self.grid, self.values**k)

    def sup(self) -> float:
        return float(np.max(np.abs(self.values)))

    def __repr__(self):
        return f"Field({self.grid!r}, sup={self.sup():.6g})"


# -- multipliers ---------------------------------------------------------------

def apply_symbol(f: Field, symbol: np.ndarray, odd: bool = False) -> Field:
    """Multiply the spectrum by ``symbol`` (shape ``grid.spec_shape``)."""
    hat = f.hat * symbol
    if odd:
        hat = hat * f.grid.nyquist_mask
    return Field.from_hat(f.grid, hat)


def riesz_symbol(grid: Grid, s: float) -> np.ndarray:
    """|xi|^s with the zero mode mapped to 0 (s > 0) or 1 (s == 0)."""
    if s < 0:
        raise DomainError("negative Riesz order needs a fused symbol finite at xi = 0")
    if s == 0:
        return np.ones(grid.spec_shape)
    return grid.xi_abs**s


def fractional_derivative(f: Field, s: float) -> Field:
    """D^s f, the Fourier multiplier |xi|^s."""
    return apply_symbol(f, riesz_symbol(f.grid, s))


def derivative(f: Field, axis: int = 0, order: int = 1) -> Field:
    """Spectral partial derivative along ``axis``."""
    ik = 1j * f.grid.wavenumbers[axis]
    return apply_symbol(f, ik**order, odd=order % 2 == 1)


def gradient(f: Field) -> list[Field]:
    return [derivative(f, j) for j in range(f.grid.d)]


# -- norms and quadrature ------------------------------------------------------

def integral(f: Field | np.ndarray, grid: Grid | None = None) -> float:
    """Periodic Riemann sum of the samples, h^d * sum."""
    if isinstance(f, Field):
        return float(np.sum(f.values) * f.grid.cell)
    return float(np.sum(f) * grid.cell)


def inner(f: Field, g: Field) -> float:
    f._check(g)
    return float(np.sum(f.values * g.values) * f.grid.cell)


def _spectral_weight(grid: Grid, s: float) -> np.ndarray:
    if s == 0:
        return np.ones(grid.spec_shape)
    return (1.0 + grid.xi_abs**2) ** s


def sobolev_inner(f: Field, g: Field, s: float) -> float:
    """H^s inner product with Bessel weights (1+|xi|^2)^s."""
    f._check(g)
    grid = f.grid
    w = grid.half_weights * _spectral_weight(grid, s)
    total = np.sum(w * (f.hat * np.conj(g.hat)).real)
    return float(total * grid.cell / grid.size)


def sobolev_norm(f: Field, s: float) -> float:
    """H^s norm, (sum (1+|xi|^2)^s |f^|^2)^(1/2), normalised so s=0 is L^2."""
    if s < 0:
        raise DomainError("use negative_sobolev_norm for s < 0")
    return _sobolev_norm(f, s)


def _sobolev_norm(f: Field, s: float) -> float:
    grid = f.grid
    w = grid.half_weights * _spectral_weight(grid, s)
    total = np.sum(w * np.abs(f.hat) ** 2)
    return float(np.sqrt(total * grid.cell / grid.size))


def negative_sobolev_norm(f: Field, s: float) -> float:
    """H^s norm for any real s (negative orders allowed)."""
    return _sobolev_norm(f, s)


def l2_norm(f: Field) -> float:
    return float(np.sqrt(np.sum(f.values**2) * f.grid.cell))


def homogeneous_norm(f: Field, s: float) -> float:
    """||D^s f||_{L^2} computed in Fourier space."""
    grid = f.grid
    total = np.sum(grid.half_weights * grid.xi_abs ** (2 * s) * np.abs(f.hat) ** 2)
    return float(np.sqrt(total * grid.cell / grid.size))


# -- translations --------------------------------------------------------------

def shift_symbol(grid: Grid, z: Sequence[float]) -> np.ndarray:
    phase = sum(k * float(zj) for k, zj in zip(grid.wavenumbers, z))
    sym = np.exp(1j * phase)
    return sym


def translate(f: Field, z) -> Field:
    """Return f(. + z), exact for band-limited fields.

    The Nyquist coefficient is rotated by its real part only, so a real field
    stays real; this makes non-grid shifts of fields carrying Nyquist energy
    inexact at that single mode.
    """
    z = np.atleast_1d(np.asarray(z, dtype=float))
    if z.size == 1 and f.grid.d > 1:
        z = np.concatenate([z, np.zeros(f.grid.d - 1)])
    sym = shift_symbol(f.grid, z)
    # keep the Nyquist planes real
    sym = np.where(f.grid.nyquist_mask, sym, sym.real)
    return apply_symbol(f, sym)


# -- dealiasing ----------------------------------------------------------------

def padding_factor(degree: int) -> int:
    """Integer zero-padding factor making degree-``degree`` products alias-free."""
    return max(1, math.ceil((degree + 1) / 2))


def _pad(grid: Grid, hat: np.ndarray, p: int) -> np.ndarray:
    if p == 1:
        return hat * grid.nyquist_mask
    d = grid.d
    pshape = tuple(n * p for n in grid.N[:-1]) + (grid.N[-1] * p // 2 + 1,)
    out = np.zeros(pshape, dtype=complex)
    # index ranges of kept modes along each axis
    src, dst = [], []
    for j, n in enumerate(grid.N):
        h = n // 2
        if j == d - 1:
            src.append([slice(0, h)])
            dst.append([slice(0, h)])
        else:
            src.append([slice(0, h), slice(n - h + 1, n)])
            dst.append([slice(0, h), slice(n * p - h + 1, n * p)])
    for combo in itertools.product(*[range(len(s)) for s in src]):
        s_idx = tuple(src[j][c] for j, c in enumerate(combo))
        d_idx = tuple(dst[j][c] for j, c in enumerate(combo))
        out[d_idx] = hat[s_idx]
    return out


def _truncate(grid: Grid, phat: np.ndarray, p: int) -> np.ndarray:
    if p == 1:
        return phat * grid.nyquist_mask
    d = grid.d
    out = np.zeros(grid.spec_shape, dtype=complex)
    src, dst = [], []
    for j, n in enumerate(grid.N):
        h = n // 2
        if j == d - 1:
            src.append([slice(0, h)])
            dst.append([slice(0, h)])
        else:
            src.append([slice(0, h), slice(n * p - h + 1, n * p)])
            dst.append([slice(0, h), slice(n - h + 1, n)])
    for combo in itertools.product(*[range(len(s)) for s in src]):
        s_idx = tuple(src[j][c] for j, c in enumerate(combo))
        d_idx = tuple(dst[j][c] for j, c in enumerate(combo))
        out[d_idx] = phat[s_idx]
    return out


@dataclass
class Dealiaser:
    """Zero-padded transforms for alias-free polynomial products."""

    grid: Grid
    p: int
    pshape: tuple[int, ...] = field(init=False)
    ratio: float = field(init=False)

    def __post_init__(self):
        self.pshape = tuple(n * self.p for n in self.grid.N)
        self.ratio = float(self.p**self.grid.d)

    def to_physical(self, hat: np.ndarray) -> np.ndarray:
        """Samples on the padded grid of the band-limited interpolant."""
        return sfft.irfftn(_pad(self.grid, hat, self.p), s=self.pshape) * self.ratio

    def to_spectral(self, values: np.ndarray) -> np.ndarray:
        """Galerkin projection of padded samples back onto the base modes."""
        return _truncate(self.grid, sfft.rfftn(values), self.p) / self.ratio

    def mean(self, values: np.ndarray) -> float:
        """Exact integral of a padded-grid product (zero mode)."""
        return float(np.mean(values)) * self.grid.volume


_DEALIASERS: dict[tuple[Grid, int], Dealiaser] = {}


def dealiaser(grid: Grid, degree: int) -> Dealiaser:
    key = (grid, padding_factor(degree))
    if key not in _DEALIASERS:
        _DEALIASERS[key] = Dealiaser(grid, key[1])
    return _DEALIASERS[key]


def dealiased_product(*factors: Field, degree: int | None = None) -> Field:
    """Galerkin projection of the pointwise product of ``factors``."""
    grid = factors[0].grid
    for f in factors[1:]:
        factors[0]._check(f)
    da = dealiaser(grid, degree or len(factors))
    prod = None
    for f in factors:
        v = da.to_physical(f.hat)
        prod = v if prod is None else prod * v
    return Field.from_hat(grid, da.to_spectral(prod))


def dealiased_power(f: Field, k: int) -> Field:
    da = dealiaser(f.grid, k)
    v = da.to_physical(f.hat)
    return Field.from_hat(f.grid, da.to_spectral(v**k))


def exact_integral_of_product(*factors: Field) -> float:
    """Exact integral of a product of band-limited fields."""
    grid = factors[0].grid
    da = dealiaser(grid, len(factors))
    prod = None
    for f in factors:
        v = da.to_physical(f.hat)
        prod = v if prod is None else prod * v
    return da.mean(prod)


def exact_integral_of_power(f: Field, k: int) -> float:
    da = dealiaser(f.grid, k)
    return da.mean(da.to_physical(f.hat) ** k)


def band_limit(f: Field) -> Field:
    """Drop the Nyquist mode."""
    return Field.from_hat(f.grid, f.hat * f.grid.nyquist_mask)


# -- commutator identity -------------------------------------------------------

@dataclass
class CommutatorCheck:
    residual: float
    edge_mass: float
    edge_warning: bool


def edge_mass(f: Field, fraction: float = 0.05) -> float:
    """Relative L^2 mass of ``f`` within ``fraction`` of the box edge."""
    grid = f.grid
    near = np.zeros(grid.shape, dtype=bool)
    for c, length in zip(grid.coords, grid.L):
        near = near | (np.abs(c) >= (0.5 - fraction) * length)
    total = l2_norm(f)
    if total == 0:
        return 0.0
    return float(np.sqrt(np.sum(f.values[near] ** 2) * grid.cell) / total)


def moment_test_field(grid: Grid, width: float, n: int = 4) -> Field:
    """Centred radial field with spectrum |w xi|^(2n) exp(-|w xi|^2 / 2).

    Its first 2n - 1 moments vanish, so fractional derivatives of it decay
    fast enough that the periodic coordinate x never feels the box edge.
    """
    k = grid.xi_abs * width
    hat = (k ** (2 * n) * np.exp(-(k**2) / 2)).astype(complex) * grid.nyquist_mask
    return Field(grid, np.fft.fftshift(grid.ifft(hat)))


def commutator_check(f: Field, order: float, axis: int = 0) -> CommutatorCheck:
    """Relative residual of [D^s, x_j] d_j f = -s D^(s-2) d_j^2 f.

    ``order`` is s in (0, 2]; the right-hand side uses the fused symbol
    s |xi|^(s-2) xi_j^2, which vanishes at xi = 0.
    """
    if not 0 < order <= 2:
        raise DomainError(f"order must lie in (0, 2], got {order}")
    grid = f.grid
    x = np.broadcast_to(grid.coords[axis], grid.shape)
    g = derivative(f, axis)
    Ds = riesz_symbol(grid, order)
    lhs = apply_symbol(Field(grid, x * g.values), Ds) - Field(grid, x * apply_symbol(g, Ds).values)
    xi_abs = grid.xi_abs
    with np.errstate(divide="ignore", invalid="ignore"):
        fused = np.where(xi_abs > 0, xi_abs ** (order - 2.0) * grid.wavenumbers[axis] ** 2, 0.0)
    rhs = apply_symbol(f, order * fused)
    scale = max(l2_norm(rhs), l2_norm(lhs))
    em = edge_mass(Field(grid, x * g.values)) + edge_mass(f)
    if scale == 0.0:
        return CommutatorCheck(0.0, em, em > 1e-10)
    return CommutatorCheck(l2_norm(lhs - rhs) / scale, em, em > 1e-10)
