"""Closed-form integration of complex multivariate Gaussians.

The integrand is ``exp(-1/2 x^T A x + b^T x + c)`` over R^d with ``A`` complex
symmetric and ``Re A`` positive definite. The square root of ``det A`` is
taken branch-continuously from the pivots of an unpivoted ``L D L^T``
factorization: every pivot of an accretive matrix has positive real part, so
summing principal logarithms never crosses the branch cut.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import (
    GaussianWavepacket,
    PhysicalParams,
    SmearWidths,
    as_points,
    classical_coefficients,
    ho_prefactor,
)
from .errors import NotIntegrableError, ValidationError


@dataclass(frozen=True)
class ComplexQuadraticForm:
    """Exponent ``-1/2 x^T A x + b^T x + c``; ``A`` is symmetrized on construction."""

    A: np.ndarray
    b: np.ndarray = None
    c: complex = 0.0

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=complex))
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValidationError(f"A must be square, got shape {A.shape}")
        d = A.shape[0]
        b = np.zeros(d, complex) if self.b is None else np.asarray(self.b, dtype=complex).reshape(-1)
        if b.shape != (d,):
            raise ValidationError(f"b must have length {d}, got {b.shape}")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b)) and np.isfinite(self.c)):
            raise ValidationError("quadratic form has non-finite entries")
        A = 0.5 * (A + A.T)
        try:
            np.linalg.cholesky(A.real)
        except np.linalg.LinAlgError:
            raise NotIntegrableError("real part of A is not positive definite") from None
        A.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", complex(self.c))

    @property
    def dim(self) -> int:
        return self.A.shape[0]

    def exponent(self, x) -> np.ndarray:
        """Evaluate the exponent at points ``x`` of shape ``(..., d)`` (complex allowed)."""
        x = np.asarray(x, dtype=complex)
        quad = np.einsum("...i,ij,...j->...", x, self.A, x)
        return -0.5 * quad + x @ self.b + self.c


def ldl_pivots(A: np.ndarray) -> np.ndarray:
    """Diagonal of the unpivoted symmetric factorization ``A = L D L^T``.

    Uses the transpose (no conjugation), so it applies to complex symmetric
    matrices.
    """
    M = np.array(A, dtype=complex)
    d = M.shape[0]
    pivots = np.empty(d, complex)
    for j in range(d):
        p = M[j, j]
        if p == 0:
            raise np.linalg.LinAlgError(f"zero pivot at index {j}")
        pivots[j] = p
        col = M[j + 1 :, j] / p
        M[j + 1 :, j + 1 :] -= np.outer(col, M[j, j + 1 :])
    return pivots


def complete_square(form: ComplexQuadraticForm):
    """Split off the linear term.

    Returns ``(shifted, shift, gain)`` with ``shifted`` the form ``(A, 0, 0)``,
    ``shift = A^{-1} b`` and ``gain = b^T A^{-1} b / 2``, so that
    ``exp(-x^T A x/2 + b^T x) = exp(gain) exp(-(x-shift)^T A (x-shift)/2)``.
    """
    try:
        shift = np.linalg.solve(form.A, form.b)
    except np.linalg.LinAlgError as exc:
        raise NotIntegrableError(f"singular quadratic form: {exc}") from None
    gain = 0.5 * complex(form.b @ shift)
    return ComplexQuadraticForm(form.A, None, 0.0), shift, gain


def log_integrate(form: ComplexQuadraticForm) -> complex:
    """Principal logarithm of :func:`integrate` (continuous in ``A``)."""
    _, _, gain = complete_square(form)
    log_det = np.sum(np.log(ldl_pivots(form.A)))
    return 0.5 * form.dim * math.log(2 * math.pi) - 0.5 * log_det + gain + form.c


def integrate(form: ComplexQuadraticForm) -> complex:
    """``(2 pi)^(d/2) det(A)^(-1/2) exp(b^T A^{-1} b / 2 + c)``."""
    return complex(np.exp(log_integrate(form)))


def _vec(x, n: int) -> np.ndarray:
    return as_points(x, n).reshape(n)


def _heat_block(center, width, params):
    """(A diagonal, b, c) contributions of ``eval_F(center, ., width)`` in one block."""
    m, hbar, n = params.mass, params.hbar, params.dim
    center = _vec(center, n)
    a = m / (hbar * width)
    c = 0.5 * n * math.log(m / (2 * math.pi * hbar * width)) - 0.5 * a * float(center @ center)
    return a, a * center, c


def smeared_endpoint_integral(q, q0, widths: SmearWidths, diag, off, params) -> complex:
    """``integral F(q0, x0, gamma) G(q, y, eta) exp(diag (x0^2+y^2) + 2 off x0.y)``.

    Shared by the closed-form and finite-slice kernels; ``diag`` may be a pair
    ``(diag_x0, diag_y)`` when the two endpoints carry different coefficients.
    """
    n = params.dim
    d0, d1 = (diag, diag) if np.ndim(diag) == 0 else diag
    a0, b0, c0 = _heat_block(q0, widths.gamma, params)
    a1, b1, c1 = _heat_block(q, widths.eta, params)
    A2 = np.array([[a0 - 2 * d0, -2 * off], [-2 * off, a1 - 2 * d1]])
    form = ComplexQuadraticForm(np.kron(A2, np.eye(n)), np.concatenate([b0, b1]), c0 + c1)
    return integrate(form)


def smeared_ho_kernel_closed(
    q, q0, widths: SmearWidths, t: float, lam: float, params: PhysicalParams = PhysicalParams()
) -> complex:
    """Smeared harmonic-oscillator kernel K(q, q0, eta, gamma, t) in closed form.

    ``lam == 0`` reduces to the free smeared kernel.
    """
    diag, off = classical_coefficients(t, lam, params)
    return ho_prefactor(t, lam, params) * smeared_endpoint_integral(q, q0, widths, diag, off, params)


def kernel_free_closed(
    x, x0, widths: SmearWidths, t: float, params: PhysicalParams = PhysicalParams()
) -> complex:
    """Free smeared kernel: one heat kernel of complex time ``eta + gamma + i t``."""
    if t < 0:
        raise ValidationError(f"t must be nonnegative, got {t}")
    m, hbar, n = params.mass, params.hbar, params.dim
    tau = widths.eta + widths.gamma + 1j * t
    r2 = float(np.sum((_vec(x, n) - _vec(x0, n)) ** 2))
    log = 0.5 * n * np.log(m / (2 * math.pi * hbar * tau)) - m * r2 / (2 * hbar * tau)
    return complex(np.exp(log))


def _packet_block(packet: GaussianWavepacket, params):
    n = packet.dim
    s2 = packet.width**2
    center = np.asarray(packet.center)
    a = 1.0 / s2
    b = center / s2 + 1j * np.asarray(packet.momentum) / params.hbar
    c = -0.25 * n * math.log(math.pi * s2) - 0.5 * float(center @ center) / s2
    return a, b, c


def gaussian_pair_integral(phi: GaussianWavepacket, psi: GaussianWavepacket, diag, off, params):
    """``integral phi(q0) psi(q) exp(diag (q0^2+q^2) + 2 off q0.q) dq0 dq``."""
    n = params.dim
    if phi.dim != n or psi.dim != n:
        raise ValidationError("wavepacket dimension differs from params.dim")
    a0, b0, c0 = _packet_block(phi, params)
    a1, b1, c1 = _packet_block(psi, params)
    A2 = np.array([[a0 - 2 * diag, -2 * off], [-2 * off, a1 - 2 * diag]])
    form = ComplexQuadraticForm(np.kron(A2, np.eye(n)), np.concatenate([b0, b1]), c0 + c1)
    return integrate(form)


def ho_amplitude_closed(
    phi: GaussianWavepacket,
    psi: GaussianWavepacket,
    t: float,
    lam: float,
    params: PhysicalParams = PhysicalParams(),
) -> complex:
    """Transition amplitude ``integral phi (exp(-i t H / hbar) psi)`` for Gaussian packets.

    No complex conjugation of ``phi``. ``lam == 0`` gives the free amplitude.
    """
    diag, off = classical_coefficients(t, lam, params)
    return ho_prefactor(t, lam, params) * gaussian_pair_integral(phi, psi, diag, off, params)


def gaussian_overlap(phi: GaussianWavepacket, psi: GaussianWavepacket, params=PhysicalParams()):
    """``integral phi(x) psi(x) dx`` (bilinear), the t = 0 amplitude."""
    n = params.dim
    a0, b0, c0 = _packet_block(phi, params)
    a1, b1, c1 = _packet_block(psi, params)
    form = ComplexQuadraticForm(np.eye(n) * (a0 + a1), b0 + b1, c0 + c1)
    return integrate(form)


def smeared_ho_amplitude_closed(
    phi: GaussianWavepacket,
    psi: GaussianWavepacket,
    widths: SmearWidths,
    t: float,
    lam: float,
    params: PhysicalParams = PhysicalParams(),
) -> complex:
    """Smeared amplitude ``integral phi(q) K(q, q0, eta, gamma, t) psi(q0) dq dq0``.

    One 4n-dimensional Gaussian over ``(q0, x0, y, q)``: the packets, both
    heat kernels and the classical exponent are all quadratic.
    """
    n = params.dim
    if phi.dim != n or psi.dim != n:
        raise ValidationError("wavepacket dimension differs from params.dim")
    diag, off = classical_coefficients(t, lam, params)
    m, hbar = params.mass, params.hbar
    ap, bp, cp = _packet_block(psi, params)
    af, bf, cf = _packet_block(phi, params)
    g0 = m / (hbar * widths.gamma)
    g1 = m / (hbar * widths.eta)
    A4 = np.array([
        [ap + g0, -g0, 0, 0],
        [-g0, g0 - 2 * diag, -2 * off, 0],
        [0, -2 * off, g1 - 2 * diag, -g1],
        [0, 0, -g1, af + g1],
    ])
    b = np.concatenate([bp, np.zeros(2 * n), bf])
    c = cp + cf + 0.5 * n * (math.log(g0 / (2 * math.pi)) + math.log(g1 / (2 * math.pi)))
    form = ComplexQuadraticForm(np.kron(A4, np.eye(n)), b, c)
    return ho_prefactor(t, lam, params) * integrate(form)
