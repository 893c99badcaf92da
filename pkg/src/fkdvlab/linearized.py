"""Linearisation about a ground state: L = D^alpha + c - Q^(m-1).

Two routes compute the low spectrum. In one dimension with N <= 4096 the
operator is assembled densely in the Fourier basis, where the potential acts as
a Toeplitz matrix of its exact Fourier coefficients. Otherwise a shift-invert
Lanczos run on the matrix-free operator is used, with preconditioned conjugate
gradients for the inner solves.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse.linalg as spla

from . import functionals as fn
from .errors import DomainError, GridMismatchError, SpectralAnomalyError
from .ground_state import DecayFit, GroundState, band_filter, decay_fit
from .params import ModelParams
from .spectral import (
    Field,
    dealiaser,
    derivative,
    edge_mass,
    exact_integral_of_product,
    homogeneous_norm,
    l2_norm,
    riesz_symbol,
    sobolev_norm,
)

log = logging.getLogger(__name__)

DENSE_LIMIT = 4096
AUTO_DENSE = 2048


class LinearizedOperator:
    """Matrix-free L acting on spectra, with the potential cached on the padded grid."""

    def __init__(self, gs: GroundState):
        self.gs = gs
        self.grid = gs.grid
        p = gs.params
        self.params = p
        self.da = dealiaser(self.grid, p.m)
        self.potential = self.da.to_physical(gs.Q.hat) ** (p.m - 1)
        self.symbol = (riesz_symbol(self.grid, p.alpha) + p.c) * self.grid.nyquist_mask

    def apply_hat(self, hat: np.ndarray) -> np.ndarray:
        vv = self.da.to_physical(hat)
        return self.symbol * hat - self.da.to_spectral(self.potential * vv)

    def __call__(self, v: Field) -> Field:
        if v.grid != self.grid:
            raise GridMismatchError("field and ground state live on different grids")
        return Field.from_hat(self.grid, self.apply_hat(v.hat))

    def apply_values(self, x: np.ndarray) -> np.ndarray:
        """Action on a flat vector of physical samples (band-limited part)."""
        hat = self.grid.fft(x.reshape(self.grid.shape))
        return self.grid.ifft(self.apply_hat(hat)).ravel()

    def apply_collocation(self, x: np.ndarray) -> np.ndarray:
        """Pseudo-spectral action on flat samples: the potential multiplies pointwise.

        Cheaper than the Galerkin product (no padded transforms) and equal to it
        up to the aliasing error of the potential times the vector.
        """
        g = self.grid
        x = x.reshape(g.shape)
        hat = self.symbol * g.fft(x) - g.fft(self.collocation_potential * x) * g.nyquist_mask
        return g.ifft(hat).ravel()

    @property
    def collocation_potential(self) -> np.ndarray:
        if not hasattr(self, "_vcol"):
            self._vcol = self.gs.Q.values ** (self.params.m - 1)
        return self._vcol

    def quadratic_form(self, v: Field) -> float:
        return inner_hat(self.grid, self.apply_hat(v.hat), v.hat)

    @property
    def lower_bound(self) -> float:
        return self.params.c - float(np.max(self.potential))


def inner_hat(grid, a: np.ndarray, b: np.ndarray) -> float:
    """L^2 inner product from two spectra."""
    return float(np.sum(grid.half_weights * (a * np.conj(b)).real) * grid.cell / grid.size)


def apply_L(gs: GroundState, v: Field) -> Field:
    return LinearizedOperator(gs)(v)


# -- dense route ---------------------------------------------------------------

def _fourier_modes(n: int) -> np.ndarray:
    k = np.fft.fftfreq(n, d=1.0 / n).astype(int)
    return k[k != -(n // 2)]


def dense_matrix(gs: GroundState) -> tuple[np.ndarray, np.ndarray]:
    """Hermitian Galerkin matrix of L on the Fourier modes |k| < N/2 (d = 1).

    Returns the matrix and the integer mode numbers labelling its rows.
    """
    grid = gs.grid
    if grid.d != 1:
        raise DomainError("dense assembly is one-dimensional")
    if grid.N[0] > DENSE_LIMIT:
        raise DomainError(f"dense assembly is limited to N <= {DENSE_LIMIT}, got {grid.N[0]}")
    n = grid.N[0]
    p = gs.params
    # the potential Q^(m-1) is band-limited to (m-1)N/2; sample it finely enough
    M = 2 * p.m * n
    q_hat = np.zeros(M, dtype=complex)
    h = n // 2
    full = np.fft.fft(gs.Q.values)
    full[h] = 0.0
    q_hat[:h] = full[:h]
    q_hat[M - h + 1 :] = full[h + 1 :]
    q_fine = np.fft.ifft(q_hat).real * (M / n)
    coef = np.fft.fft(q_fine ** (p.m - 1)) / M
    modes = _fourier_modes(n)
    diff = (modes[:, None] - modes[None, :]) % M
    T = coef[diff]
    xi = 2 * np.pi / grid.L[0] * modes
    H = np.diag(np.abs(xi) ** p.alpha + p.c) - T
    return 0.5 * (H + H.conj().T), modes


def _modes_to_field(grid, modes: np.ndarray, vec: np.ndarray) -> Field:
    n = grid.N[0]
    full = np.zeros(n, dtype=complex)
    full[modes % n] = vec
    vals = np.fft.ifft(full)
    # eigenvectors of a real operator can be rotated to be real
    phase = np.angle(np.sum(vals**2)) / 2
    vals = (vals * np.exp(-1j * phase)).real
    return Field(grid, vals)


def dense_low_spectrum(gs: GroundState, k: int) -> tuple[np.ndarray, list[Field]]:
    H, modes = dense_matrix(gs)
    w, V = sla.eigh(H, subset_by_index=[0, k - 1])
    fields = [_unit(_modes_to_field(gs.grid, modes, V[:, j])) for j in range(k)]
    return w, fields


# -- matrix-free route ---------------------------------------------------------

def _band(grid, x: np.ndarray) -> np.ndarray:
    """Remove the Nyquist plane, which lies outside the Galerkin space."""
    return grid.ifft(grid.fft(x.reshape(grid.shape)) * grid.nyquist_mask).ravel()


def _shift_invert_solver(op: LinearizedOperator, sigma: float, tol: float, deflate=None, action=None):
    """(L - sigma)^-1 by preconditioned CG, optionally on the complement of ``deflate``.

    ``deflate`` holds orthonormal columns; with them the solve is restricted to
    their orthogonal complement, where L - sigma must be positive definite.
    """
    grid = op.grid
    n = grid.size
    precond_sym = 1.0 / (op.symbol - sigma + (~grid.nyquist_mask))

    def project(x):
        if deflate is None:
            return x
        return x - deflate @ (deflate.T @ x)

    def shifted(x):
        x = project(x)
        return project(action(x) - sigma * x)

    def precond(x):
        hat = grid.fft(project(x).reshape(grid.shape))
        return project(grid.ifft(hat * precond_sym * grid.nyquist_mask).ravel())

    A = spla.LinearOperator((n, n), matvec=shifted, dtype=float)
    P = spla.LinearOperator((n, n), matvec=precond, dtype=float)

    def solve(b):
        b = project(_band(grid, b))
        x, info = spla.cg(A, b, rtol=tol, atol=0.0, M=P, maxiter=5000)
        if info != 0:
            raise SpectralAnomalyError(f"inner solve did not converge (info={info})")
        return project(x)

    return spla.LinearOperator((n, n), matvec=solve, dtype=float)


def krylov_low_spectrum(gs: GroundState, k: int, tol: float = 1e-13, action: str = "galerkin") -> tuple[np.ndarray, list[Field]]:
    """Lowest k eigenpairs by shift-invert Lanczos in two stages.

    The negative mode is isolated first with a shift below the spectrum. On
    its orthogonal complement L is positive semi-definite, so the remaining
    pairs use a small negative shift, which keeps the inner solves well
    conditioned and separates the kernel from the continuum edge. The
    'collocation' action is cheaper but aliases on marginal grids; either way
    the pairs are refined by Rayleigh-Ritz with the Galerkin action.
    """
    op = LinearizedOperator(gs)
    grid = op.grid
    c = gs.params.c
    n = grid.size
    if action not in ("galerkin", "collocation"):
        raise ValueError(f"unknown action {action!r}")
    act = op.apply_values if action == "galerkin" else op.apply_collocation
    A = spla.LinearOperator((n, n), matvec=act, dtype=float)
    sigma = op.lower_bound - 0.1 * c
    v0 = _band(grid, (np.maximum(gs.Q.values, 0.0) ** ((gs.params.m + 1) / 2.0)).ravel())
    w0, V0 = spla.eigsh(A, k=1, sigma=sigma, which="LM", OPinv=_shift_invert_solver(op, sigma, tol, action=act), v0=v0, tol=1e-12, ncv=6)
    chi = V0[:, 0] / np.linalg.norm(V0[:, 0])
    if k == 1:
        return _galerkin_ritz(op, [chi])
    defl = chi[:, None]

    def restricted(x):
        x = x - defl @ (defl.T @ x)
        y = act(x)
        return y - defl @ (defl.T @ y)

    A2 = spla.LinearOperator((n, n), matvec=restricted, dtype=float)
    sigma2 = -0.5 * c
    v1 = sum(derivative(gs.Q, j).values.ravel() for j in range(grid.d))
    v1 = v1 + _band(grid, gs.Q.values.ravel()) * 1e-3
    v1 = v1 - defl @ (defl.T @ v1)
    OPinv = _shift_invert_solver(op, sigma2, 1e-10, deflate=defl, action=act)
    w, V = spla.eigsh(A2, k=k - 1, sigma=sigma2, which="LM", OPinv=OPinv, v0=v1, tol=1e-6)
    order = np.argsort(w)
    basis = [chi] + [V[:, j] for j in order]
    return _galerkin_ritz(op, basis)


def _galerkin_ritz(op: LinearizedOperator, basis: list) -> tuple[np.ndarray, list[Field]]:
    """Rayleigh-Ritz with the Galerkin action on a small set of flat vectors."""
    grid = op.grid
    X = np.stack([_band(grid, b) for b in basis], axis=1)
    X, _ = np.linalg.qr(X)
    AX = np.stack([op.apply_values(X[:, j]) for j in range(X.shape[1])], axis=1)
    H = X.T @ AX
    w, R = np.linalg.eigh(0.5 * (H + H.T))
    Y = X @ R
    return w, [_unit(Field(grid, Y[:, j].reshape(grid.shape))) for j in range(Y.shape[1])]


def _unit(f: Field) -> Field:
    return f * (1.0 / l2_norm(f))


def low_spectrum(gs: GroundState, k: int | None = None, method: str = "auto"):
    """Lowest eigenpairs of L; ``method`` is 'dense', 'krylov' or 'auto'."""
    k = k or gs.grid.d + 2
    if method == "auto":
        method = "dense" if gs.grid.d == 1 and gs.grid.N[0] <= AUTO_DENSE else "krylov"
    if method == "dense":
        return dense_low_spectrum(gs, k)
    if method == "krylov":
        return krylov_low_spectrum(gs, k)
    raise ValueError(f"unknown eigen method {method!r}")


# -- reports -------------------------------------------------------------------

@dataclass
class EigenPair:
    eigenvalue: float
    eigenfield: Field
    residual: float


@dataclass
class SpectralReport:
    gs: GroundState
    lambda0: float
    chi0: Field
    eigenvalues: np.ndarray
    n_negative: int
    n_kernel: int
    kernel_residuals: list
    kernel_angle: float
    gap: float
    chi_residual: float
    method: str
    c0: float = math.nan
    extras: dict = field(default_factory=dict)

    @property
    def params(self) -> ModelParams:
        return self.gs.params


def eigen_residual(op: LinearizedOperator, lam: float, v: Field) -> float:
    r = Field.from_hat(op.grid, op.apply_hat(v.hat) - lam * v.hat * op.grid.nyquist_mask)
    return l2_norm(r) / l2_norm(v)


def _sign_positive(f: Field) -> Field:
    return f if float(np.sum(f.values)) >= 0 else -f


def negative_eigenpair(gs: GroundState, method: str = "auto") -> EigenPair:
    sr = spectrum(gs, method=method)
    op = LinearizedOperator(gs)
    return EigenPair(-sr.lambda0, sr.chi0, eigen_residual(op, -sr.lambda0, sr.chi0))


def spectrum(gs: GroundState, method: str = "auto", kernel_tol: float = 1e-6) -> SpectralReport:
    """Negative eigenpair, kernel count and gap of L; raises on a second negative value."""
    d = gs.grid.d
    if method == "auto":
        method = "dense" if d == 1 and gs.grid.N[0] <= AUTO_DENSE else "krylov"
    w, vecs = low_spectrum(gs, d + 2, method)
    c = gs.params.c
    neg = w < -kernel_tol * c
    ker = np.abs(w) <= kernel_tol * c
    n_neg, n_ker = int(neg.sum()), int(ker.sum())
    if n_neg != 1:
        raise SpectralAnomalyError(f"{n_neg} negative eigenvalues found: {w[neg]}")
    chi0 = _sign_positive(vecs[0])
    op = LinearizedOperator(gs)
    dq = [derivative(gs.Q, j) for j in range(d)]
    kres = [l2_norm(op(f)) / l2_norm(f) for f in dq]
    kernel_vecs = [v for v, flag in zip(vecs, ker) if flag]
    angle = math.inf
    if kernel_vecs:
        A = np.stack([v.values.ravel() for v in kernel_vecs], axis=1)
        B = np.stack([f.values.ravel() for f in dq], axis=1)
        angle = float(np.max(sla.subspace_angles(A, B)))
    pos = w[w > kernel_tol * c]
    gap = float(pos[0]) if pos.size else math.nan
    return SpectralReport(
        gs=gs,
        lambda0=float(-w[0]),
        chi0=chi0,
        eigenvalues=w,
        n_negative=n_neg,
        n_kernel=n_ker,
        kernel_residuals=kres,
        kernel_angle=angle,
        gap=gap,
        chi_residual=eigen_residual(op, float(w[0]), chi0),
        method=method,
    )


def chi_decay_fit(sr: SpectralReport, window=None) -> DecayFit:
    alpha = sr.params.alpha
    if alpha >= 2:
        raise DomainError("alpha = 2 gives exponential decay; power-law fit rejected")
    return decay_fit(sr.chi0, 0, alpha, window)


# -- scaling generator ---------------------------------------------------------

def scaling_generator(v: Field, p: ModelParams, filtered: bool = True) -> Field:
    """v/(m-1) + (x . grad v)/alpha.

    Multiplying by the unbounded coordinate x turns the small band-edge content
    of v into a top-of-band artifact that D^alpha then amplifies; with
    ``filtered`` the product is passed through the smooth band filter.
    """
    grid = v.grid
    acc = np.zeros(grid.shape)
    for j in range(grid.d):
        acc = acc + grid.coords[j] * derivative(v, j).values
    xg = Field(grid, acc)
    if filtered:
        xg = Field.from_hat(grid, xg.hat * band_filter(grid, 64) * grid.nyquist_mask)
    return Field(grid, v.values / (p.m - 1) + xg.values / p.alpha)


def scaling_generator_edge_mass(v: Field) -> float:
    """Edge mass of x . grad v; large values mean the sawtooth x is felt."""
    grid = v.grid
    acc = sum(grid.coords[j] * derivative(v, j).values for j in range(grid.d))
    return edge_mass(Field(grid, acc))


def lambda_identity_residual(gs: GroundState) -> float:
    """||L(Lambda Q) + c Q|| / ||c Q||."""
    p = gs.params
    lq = apply_L(gs, scaling_generator(gs.Q, p))
    return l2_norm(lq + p.c * gs.Q) / (p.c * l2_norm(gs.Q))


@dataclass
class QLambdaQ:
    value: float
    formula: float
    residual: float
    sign: int


def q_lambda_q(gs: GroundState) -> QLambdaQ:
    """<Q, Lambda Q> against (2 alpha - d(m-1))/(2 alpha (m-1)) ||Q||^2.

    When the formula vanishes (L^2-critical power) the deviation is reported
    relative to ||Q||^2.
    """
    p = gs.params
    q2 = l2_norm(gs.Q) ** 2
    val = float(np.sum(gs.Q.values * scaling_generator(gs.Q, p).values) * gs.grid.cell)
    coef = (2 * p.alpha - p.d * (p.m - 1)) / (2 * p.alpha * (p.m - 1))
    formula = coef * q2
    scale = abs(formula) if abs(coef) > 1e-12 else q2
    sign = 0 if abs(val) <= 1e-6 * q2 else int(np.sign(val))
    return QLambdaQ(val, formula, abs(val - formula) / scale, sign)


# -- coercivity ----------------------------------------------------------------

@dataclass
class Coercivity:
    c0: float
    k1: float
    k2: float
    empirical_min: float
    empirical_k1: float
    samples: int


def _hs_weight(grid, alpha: float) -> np.ndarray:
    return (1.0 + grid.xi_abs**2) ** (alpha / 2.0)


def _constraint_fields(sr: SpectralReport) -> list[Field]:
    return [sr.chi0] + [derivative(sr.gs.Q, j) for j in range(sr.gs.grid.d)]


def coercivity_c0(sr: SpectralReport, method: str = "krylov") -> float:
    """min (Lf, f)/||f||^2_{H^(alpha/2)} over f orthogonal to chi0 and grad Q.

    Solved as the lowest eigenvalue of B^(-1/2) L B^(-1/2) on the complement
    of B^(-1/2) Y, with Y the constraint directions and B the Bessel weight.
    Excluded directions are pushed to a large eigenvalue.
    """
    gs = sr.gs
    grid = gs.grid
    op = LinearizedOperator(gs)
    wt = _hs_weight(grid, gs.params.alpha)
    isq = 1.0 / np.sqrt(wt)
    Y = [grid.ifft(f.hat * isq).ravel() for f in _constraint_fields(sr)]
    basis = []
    for y in Y:  # Gram-Schmidt, twice for stability
        for _ in range(2):
            for b in basis:
                y = y - np.dot(b, y) * b
        basis.append(y / np.linalg.norm(y))
    Ymat = np.stack(basis, axis=1)
    big = 10.0 * (gs.params.c + 1.0)

    def project(x):
        for _ in range(2):
            x = x - Ymat @ (Ymat.T @ x)
        return x

    def band(x):
        return grid.ifft(grid.fft(x.reshape(grid.shape)) * grid.nyquist_mask).ravel()

    def matvec(x):
        x = np.asarray(x).ravel()
        px = project(band(x))
        hat = grid.fft(px.reshape(grid.shape)) * isq
        out = grid.ifft(op.apply_hat(hat) * isq).ravel()
        # constraint directions and the Nyquist plane are pushed out of the way
        return project(out) + big * (x - px)

    if method == "dense" and grid.d == 1 and grid.N[0] <= DENSE_LIMIT:
        return _coercivity_dense(sr, wt)
    n = grid.size
    A = spla.LinearOperator((n, n), matvec=matvec, dtype=float)
    v0 = project(np.exp(-grid.radius.ravel() ** 2 / 8.0))
    w = spla.eigsh(A, k=1, which="SA", v0=v0, tol=1e-10, return_eigenvectors=False)
    return float(w[0])


def _coercivity_dense(sr: SpectralReport, wt: np.ndarray) -> float:
    gs = sr.gs
    grid = gs.grid
    H, modes = dense_matrix(gs)
    n = grid.N[0]
    xi = 2 * np.pi / grid.L[0] * modes
    bw = (1.0 + xi**2) ** (gs.params.alpha / 2.0)
    # constraint vectors in mode coordinates
    C = []
    for f in _constraint_fields(sr):
        full = np.fft.fft(f.values)
        C.append(full[modes % n])
    C = np.stack(C, axis=1)
    Qc, _ = np.linalg.qr(C, mode="complete")
    Z = Qc[:, C.shape[1] :]
    Hz = Z.conj().T @ H @ Z
    Bz = Z.conj().T @ (bw[:, None] * Z)
    w = sla.eigh(Hz, Bz, eigvals_only=True, subset_by_index=[0, 0])
    return float(w[0])


def random_band_limited(grid, rng: np.random.Generator, scale: float = 1.0) -> Field:
    """Smooth random field with Gaussian-damped random Fourier coefficients."""
    shape = grid.spec_shape
    hat = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    hat *= np.exp(-(grid.xi_abs * scale) ** 2 / 2.0)
    return Field.from_hat(grid, hat * grid.nyquist_mask)


def _project_out(f: Field, ys: list[Field]) -> Field:
    vals = f.values.copy()
    basis = []
    for y in ys:
        b = y.values.copy()
        for q in basis:
            b -= np.sum(q * b) * q
        basis.append(b / np.linalg.norm(b))
    for _ in range(2):
        for b in basis:
            vals -= np.sum(b * vals) * b
    return Field(f.grid, vals)


def coercivity_constants(
    sr: SpectralReport, samples: int = 1000, seed: int = 0, method: str = "krylov"
) -> Coercivity:
    """c0 on the constrained complement and one constructive (k1, k2) pair.

    With ||chi0|| = 1 and a = (eps, chi0), splitting eps = eps1 + a chi0 and
    applying Young's inequality to the cross term gives
    (L eps, eps) >= (c0/2) ||eps||^2_H - (c0 ||chi0||^2_H + lambda0) a^2,
    so k1 = c0/2 and k2 = c0 ||chi0||_H^2 + lambda0.
    """
    gs = sr.gs
    c0 = coercivity_c0(sr, method)
    if not c0 > 0:
        raise SpectralAnomalyError(f"coercivity constant not positive: {c0}")
    alpha = gs.params.alpha
    chi = sr.chi0 * (1.0 / l2_norm(sr.chi0))
    k1 = 0.5 * c0
    k2 = c0 * sobolev_norm(chi, alpha / 2) ** 2 + sr.lambda0
    op = LinearizedOperator(gs)
    rng = np.random.default_rng(seed)
    ys = _constraint_fields(sr)
    dq = ys[1:]
    worst = math.inf
    worst_k1 = math.inf
    for j in range(samples):
        width = 10.0 ** rng.uniform(-1.0, 0.5)
        f = random_band_limited(gs.grid, rng, width)
        f1 = _project_out(f, ys)
        hs = sobolev_norm(f1, alpha / 2) ** 2
        worst = min(worst, op.quadratic_form(f1) / hs)
        e = _project_out(f, dq)
        a = float(np.sum(e.values * chi.values) * gs.grid.cell)
        he = sobolev_norm(e, alpha / 2) ** 2
        worst_k1 = min(worst_k1, (op.quadratic_form(e) + k2 * a * a) / he)
    return Coercivity(c0, k1, k2, worst, worst_k1, samples)


# -- action expansion ----------------------------------------------------------

@dataclass
class Expansion:
    direct: float
    binomial: float
    bound_ratio: float
    agreement: float


def binomial_remainder(Q: Field, eps: Field, m: int) -> float:
    """-(1/(m(m+1))) sum_{k=3}^{m+1} C(m+1, k) int Q^(m+1-k) eps^k."""
    total = 0.0
    for k in range(3, m + 2):
        factors = [Q] * (m + 1 - k) + [eps] * k
        total += math.comb(m + 1, k) * exact_integral_of_product(*factors)
    return -total / (m * (m + 1))


def expansion_remainder(gs: GroundState, eps: Field) -> Expansion:
    """Cubic-and-higher remainder of the speed-c action about Q.

    The direct route subtracts the first variation <cQ + D^alpha Q - Q^m/m, eps>,
    which vanishes for an exact profile and otherwise carries the solver residual.
    """
    p = gs.params
    Q = gs.Q
    c = p.c
    W = lambda u: fn.action(u, p, speed=c)  # noqa: E731
    lin = Field.from_hat(Q.grid, (c + riesz_symbol(Q.grid, p.alpha)) * Q.hat * Q.grid.nyquist_mask)
    first = float(np.sum(lin.values * eps.values) * Q.grid.cell) - exact_integral_of_product(
        *([Q] * p.m + [eps])
    ) / p.m
    quad = 0.5 * LinearizedOperator(gs).quadratic_form(eps)
    direct = W(Q + eps) - W(Q) - first - quad
    binom = binomial_remainder(Q, eps, p.m)
    d, alpha = p.d, p.alpha
    grad = homogeneous_norm(eps, alpha / 2)
    l2 = l2_norm(eps)
    bound = sum(grad ** (d * (k - 2) / alpha) * l2 ** (k - d * (k - 2) / alpha) for k in range(3, p.m + 2))
    scale = max(abs(direct), abs(binom))
    agree = abs(direct - binom) / scale if scale > 0 else 0.0
    return Expansion(direct, binom, abs(binom) / bound if bound > 0 else 0.0, agree)
