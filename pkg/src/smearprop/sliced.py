"""Time-sliced quadratic action of the harmonic oscillator.

With ``k`` interior points and step ``eps = t/(k+1)`` the sliced action of one
Cartesian component is ``(i m / 2 hbar eps) x^T T x`` where ``T`` is the
``(k+2) x (k+2)`` tridiagonal matrix built by :func:`build_T`. Its interior
block ``S = A - eps^2 lam^2 I`` governs the fluctuation integral; the
endpoint-only part ``w^T T w - rho^T S^{-1} rho`` does not depend on the
interior path ``w`` chosen to split the variables.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .core import (
    PhysicalParams,
    SmearWidths,
    as_points,
    check_caustic_window,
    classical_coefficients,
    ho_prefactor,
)
from .errors import CausticError, IndefiniteMatrixError, ValidationError
from .gaussian import smeared_endpoint_integral

#: Above this many slices :func:`det_S` returns a :class:`SignedLogDet`.
LOGDET_THRESHOLD = 10_000


@dataclass(frozen=True)
class SlicedQuadraticAction:
    """``k`` interior slices of ``[0, t]`` for frequency ``lam``."""

    k: int
    t: float
    lam: float = 0.0

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 1:
            raise ValidationError(f"k must be a positive integer, got {self.k}")
        object.__setattr__(self, "k", int(self.k))
        if not (self.t > 0 and math.isfinite(self.t)):
            raise ValidationError(f"t must be positive, got {self.t}")
        if not (self.lam >= 0 and math.isfinite(self.lam)):
            raise ValidationError(f"lam must be nonnegative, got {self.lam}")

    @property
    def eps(self) -> float:
        return self.t / (self.k + 1)

    @property
    def diagonal(self) -> float:
        """Common diagonal entry ``2 - eps^2 lam^2`` of S."""
        return 2.0 - (self.eps * self.lam) ** 2


@dataclass(frozen=True)
class EndpointPath:
    """Endpoints and an arbitrary finite interior path ``w_1 .. w_k``."""

    start: float
    end: float
    interior: np.ndarray

    def __post_init__(self):
        interior = np.asarray(self.interior, dtype=float).reshape(-1)
        if not (np.all(np.isfinite(interior)) and math.isfinite(self.start) and math.isfinite(self.end)):
            raise ValidationError("path entries must be finite")
        interior.setflags(write=False)
        object.__setattr__(self, "interior", interior)
        object.__setattr__(self, "start", float(self.start))
        object.__setattr__(self, "end", float(self.end))

    @classmethod
    def straight(cls, start: float, end: float, k: int) -> "EndpointPath":
        return cls(start, end, np.linspace(start, end, k + 2)[1:-1])

    @property
    def full(self) -> np.ndarray:
        return np.concatenate([[self.start], self.interior, [self.end]])


class SignedLogDet(NamedTuple):
    sign: float
    logabs: float

    @property
    def value(self) -> float:
        return self.sign * math.exp(self.logabs)


def build_S(action: SlicedQuadraticAction) -> np.ndarray:
    k = action.k
    return (
        np.diag(np.full(k, action.diagonal))
        - np.diag(np.ones(k - 1), 1)
        - np.diag(np.ones(k - 1), -1)
    )


def build_T(action: SlicedQuadraticAction) -> np.ndarray:
    k = action.k
    T = np.zeros((k + 2, k + 2))
    T[1:-1, 1:-1] = build_S(action)
    T[0, 0] = 1.0
    T[-1, -1] = 1.0 - (action.eps * action.lam) ** 2
    T[0, 1] = T[1, 0] = -1.0
    T[-1, -2] = T[-2, -1] = -1.0
    return T


def partial_determinants(action: SlicedQuadraticAction) -> np.ndarray:
    """Leading principal minors ``d_0 = 1, d_1, ..., d_k`` of S."""
    a = action.diagonal
    d = np.empty(action.k + 1)
    d[0] = 1.0
    d[1] = a
    for j in range(2, action.k + 1):
        d[j] = a * d[j - 1] - d[j - 2]
    return d


def slogdet_S(action: SlicedQuadraticAction) -> SignedLogDet:
    """Sign and log-magnitude of ``det S`` from the rescaled recurrence."""
    a = action.diagonal
    prev, cur, log_scale = 1.0, a, 0.0
    for _ in range(2, action.k + 1):
        prev, cur = cur, a * cur - prev
        big = abs(cur)
        if big > 1e150:
            prev, cur = prev / big, cur / big
            log_scale += math.log(big)
    if cur == 0:
        return SignedLogDet(0.0, -math.inf)
    return SignedLogDet(math.copysign(1.0, cur), math.log(abs(cur)) + log_scale)


def det_S(action: SlicedQuadraticAction):
    """``det S`` by the three-term recurrence.

    Returns a float, or a :class:`SignedLogDet` when ``k`` exceeds
    :data:`LOGDET_THRESHOLD`.
    """
    if action.k > LOGDET_THRESHOLD:
        return slogdet_S(action)
    return float(partial_determinants(action)[-1])


def solve_S(action: SlicedQuadraticAction, rhs) -> np.ndarray:
    """Solve ``S x = rhs`` by unpivoted symmetric elimination.

    ``rhs`` may be a vector of length k or a ``(k, m)`` block. A nonpositive
    pivot raises :class:`IndefiniteMatrixError` naming the leading minor.
    """
    rhs = np.asarray(rhs, dtype=float)
    k = action.k
    if rhs.shape[0] != k:
        raise ValidationError(f"rhs must have leading length {k}, got {rhs.shape}")
    a = action.diagonal
    pivots = np.empty(k)
    z = np.empty_like(rhs)
    p = a
    z[0] = rhs[0]
    for j in range(k):
        if j:
            p = a - 1.0 / pivots[j - 1]
            z[j] = rhs[j] + z[j - 1] / pivots[j - 1]
        if not p > 0:
            raise IndefiniteMatrixError(
                f"S is not positive definite: leading minor {j + 1} is nonpositive", j + 1
            )
        pivots[j] = p
    x = np.empty_like(rhs)
    x[-1] = z[-1] / pivots[-1]
    for j in range(k - 2, -1, -1):
        x[j] = (z[j] + x[j + 1]) / pivots[j]
    return x


def rho(action: SlicedQuadraticAction, path: EndpointPath) -> np.ndarray:
    if path.interior.size != action.k:
        raise ValidationError(f"path has {path.interior.size} interior points, need {action.k}")
    r = _apply_S(action, path.interior)
    r[0] -= path.start
    r[-1] -= path.end
    return r


def _apply_S(action, v):
    out = action.diagonal * v
    out[1:] -= v[:-1]
    out[:-1] -= v[1:]
    return out


def decoupled_exponent(action: SlicedQuadraticAction, path: EndpointPath) -> float:
    """Endpoint-only part ``w^T T w - rho^T S^{-1} rho`` of the sliced action.

    Evaluated as ``x^T T x`` at the stationary interior point
    ``w - S^{-1} rho`` (the same number), written as a sum of squared
    increments so that large interior paths do not cancel catastrophically.
    """
    r = rho(action, path)
    interior = path.interior - solve_S(action, r)
    x = np.concatenate([[path.start], interior, [path.end]])
    steps = np.diff(x)
    return float(steps @ steps - (action.eps * action.lam) ** 2 * (x[1:] @ x[1:]))


def endpoint_quadratic(action: SlicedQuadraticAction) -> tuple:
    """Coefficients ``(P, Q, R)`` with ``decoupled_exponent = P x0^2 + Q y^2 + 2 R x0 y``.

    Reconstructed from three stencil evaluations along straight interior paths.
    """
    k = action.k
    P = decoupled_exponent(action, EndpointPath.straight(1.0, 0.0, k))
    Q = decoupled_exponent(action, EndpointPath.straight(0.0, 1.0, k))
    PQR = decoupled_exponent(action, EndpointPath.straight(1.0, 1.0, k))
    return P, Q, 0.5 * (PQR - P - Q)


def quantum_prefactor(action: SlicedQuadraticAction, params: PhysicalParams = PhysicalParams()) -> complex:
    """``((m/(2 pi i hbar eps))^(1/2) det(S)^(-1/2))^n`` at finite k."""
    sign, logdet = slogdet_S(action)
    if sign <= 0:
        raise CausticError(
            f"det S_k <= 0 for t={action.t}, lam={action.lam}: "
            "outside the caustic-free window"
        )
    n = params.dim
    log_mod = 0.5 * n * (math.log(params.mass / (2 * math.pi * params.hbar * action.eps)) - logdet)
    return complex(np.exp(log_mod - 0.25j * math.pi * n))


def quantum_prefactor_limit(t: float, lam: float, params: PhysicalParams = PhysicalParams()) -> complex:
    """``(m/(2 pi i hbar))^(n/2) (lam/sin(lam t))^(n/2)``."""
    return ho_prefactor(t, lam, params)


def classical_exponent_limit(x0, y, t: float, lam: float, params: PhysicalParams = PhysicalParams()) -> complex:
    """``(i m lam / 2 hbar sin(lam t)) [(x0^2 + y^2) cos(lam t) - 2 y.x0]``."""
    diag, off = classical_coefficients(t, lam, params)
    n = params.dim
    px0, py = as_points(x0, n), as_points(y, n)
    value = diag * (np.sum(px0**2, -1) + np.sum(py**2, -1)) + 2 * off * np.sum(px0 * py, -1)
    return complex(value) if np.ndim(value) == 0 else value


def sliced_exponent(action: SlicedQuadraticAction, path: EndpointPath, params=PhysicalParams()) -> complex:
    """``(i m / 2 hbar eps) * decoupled_exponent`` for one Cartesian component."""
    return 1j * params.mass / (2 * params.hbar * action.eps) * decoupled_exponent(action, path)


def finite_k_kernel_ho(
    q,
    q0,
    widths: SmearWidths,
    t: float,
    lam: float,
    k: int,
    params: PhysicalParams = PhysicalParams(),
) -> complex:
    """Smeared harmonic kernel with k interior slices, integrated exactly.

    The fluctuation integral gives :func:`quantum_prefactor`; the endpoint
    integral against F and G is a 2n-dimensional complex Gaussian.
    """
    check_caustic_window(t, lam)
    action = SlicedQuadraticAction(k, t, lam)
    P, Q, R = endpoint_quadratic(action)
    scale = 1j * params.mass / (2 * params.hbar * action.eps)
    integral = smeared_endpoint_integral(q, q0, widths, (scale * P, scale * Q), scale * R, params)
    return quantum_prefactor(action, params) * integral
