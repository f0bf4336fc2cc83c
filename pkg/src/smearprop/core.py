"""Physical parameters, grids, wavepackets and the reference kernels.

Points follow one convention throughout: an array whose trailing axis has
length ``n`` (the spatial dimension). For ``n == 1`` a plain scalar or an
array without that trailing axis is accepted and treated as a batch of
1-D points.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from .errors import CausticError, ValidationError

#: Coefficient in front of ``(i m lambda / hbar sin(lambda t)) [...]`` in the
#: harmonic-oscillator classical exponent. The standard propagator carries 1/2;
#: only mutation tests should touch this.
ACTION_FACTOR = 0.5

#: Fraction of each axis, at both ends, that counts as the boundary layer for
#: leakage estimates.
BOUNDARY_FRACTION = 0.05

#: Boundary mass (relative to total) above which a state is flagged as leaking.
LEAKAGE_THRESHOLD = 1e-8


@dataclass(frozen=True)
class PhysicalParams:
    """Mass, reduced Planck constant and spatial dimension."""

    mass: float = 1.0
    hbar: float = 1.0
    dim: int = 1

    def __post_init__(self):
        if not (self.mass > 0 and math.isfinite(self.mass)):
            raise ValidationError(f"mass must be positive, got {self.mass}")
        if not (self.hbar > 0 and math.isfinite(self.hbar)):
            raise ValidationError(f"hbar must be positive, got {self.hbar}")
        if int(self.dim) != self.dim or self.dim < 1:
            raise ValidationError(f"dim must be a positive integer, got {self.dim}")


@dataclass(frozen=True)
class SmearWidths:
    """Euclidean smearing times: ``eta`` for the final-point kernel G,
    ``gamma`` for the initial-point kernel F."""

    eta: float
    gamma: float

    def __post_init__(self):
        for name in ("eta", "gamma"):
            value = getattr(self, name)
            if not (value > 0 and math.isfinite(value)):
                raise ValidationError(f"{name} must be positive, got {value}")

    def swapped(self) -> "SmearWidths":
        return SmearWidths(eta=self.gamma, gamma=self.eta)


@dataclass(frozen=True)
class Grid:
    """Uniform periodic tensor grid on ``[lower, upper)`` per axis.

    Points are ``lower + j * dx`` for ``j = 0 .. N-1``; the upper endpoint is
    the periodic image of the lower one.
    """

    lower: tuple
    upper: tuple
    n_points: int

    def __post_init__(self):
        lower = tuple(float(v) for v in np.atleast_1d(self.lower))
        upper = tuple(float(v) for v in np.atleast_1d(self.upper))
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        if len(lower) != len(upper):
            raise ValidationError("lower and upper bounds differ in dimension")
        if len(lower) not in (1, 2):
            raise ValidationError("grids support dimension 1 or 2 only")
        if int(self.n_points) != self.n_points or self.n_points < 2:
            raise ValidationError(f"need at least 2 points per axis, got {self.n_points}")
        object.__setattr__(self, "n_points", int(self.n_points))
        for lo, hi in zip(lower, upper):
            if not (hi > lo) or not (math.isfinite(lo) and math.isfinite(hi)):
                raise ValidationError(f"axis span must be positive, got [{lo}, {hi}]")

    @classmethod
    def uniform(cls, lower: float, upper: float, n_points: int, dim: int = 1) -> "Grid":
        return cls((lower,) * dim, (upper,) * dim, n_points)

    @property
    def dim(self) -> int:
        return len(self.lower)

    @property
    def shape(self) -> tuple:
        return (self.n_points,) * self.dim

    @property
    def size(self) -> int:
        return self.n_points**self.dim

    @property
    def dx(self) -> tuple:
        return tuple((hi - lo) / self.n_points for lo, hi in zip(self.lower, self.upper))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.dx))

    @cached_property
    def axes(self) -> tuple:
        return tuple(lo + d * np.arange(self.n_points) for lo, d in zip(self.lower, self.dx))

    @cached_property
    def points(self) -> np.ndarray:
        """Coordinates with shape ``(*shape, dim)``."""
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack(mesh, axis=-1)

    @cached_property
    def wavenumbers_squared(self) -> np.ndarray:
        """``|k|^2`` on the FFT layout, shape ``shape``."""
        ks = [2 * np.pi * np.fft.fftfreq(self.n_points, d) for d in self.dx]
        mesh = np.meshgrid(*ks, indexing="ij")
        return sum(k**2 for k in mesh)

    @cached_property
    def boundary_mask(self) -> np.ndarray:
        width = max(1, int(round(BOUNDARY_FRACTION * self.n_points)))
        edge = np.zeros(self.n_points, dtype=bool)
        edge[:width] = True
        edge[-width:] = True
        masks = np.meshgrid(*([edge] * self.dim), indexing="ij")
        return np.logical_or.reduce(masks)


def boundary_leakage(samples: np.ndarray, grid: Grid) -> float:
    """Fraction of ``|psi|^2`` sitting in the boundary layer of ``grid``."""
    density = np.abs(samples) ** 2
    total = density.sum()
    if total == 0:
        return 0.0
    return float(density[grid.boundary_mask].sum() / total)


@dataclass(frozen=True)
class GridWavefunction:
    """Complex samples of a state on a :class:`Grid`."""

    grid: Grid
    samples: np.ndarray = field(repr=False)

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=complex)
        if samples.shape != self.grid.shape:
            if samples.size == self.grid.size:
                samples = samples.reshape(self.grid.shape)
            else:
                raise ValidationError(
                    f"{samples.size} samples do not match grid of size {self.grid.size}"
                )
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)

    @property
    def norm(self) -> float:
        """Grid L2 norm (trapezoid rule, periodic)."""
        return float(np.sqrt(np.sum(np.abs(self.samples) ** 2) * self.grid.cell_volume))

    @property
    def leakage(self) -> float:
        return boundary_leakage(self.samples, self.grid)

    @property
    def metadata(self) -> dict:
        leak = self.leakage
        return {"norm": self.norm, "leakage": leak, "leaking": leak > LEAKAGE_THRESHOLD}

    def with_samples(self, samples) -> "GridWavefunction":
        return GridWavefunction(self.grid, samples)


def as_points(x, dim: int) -> np.ndarray:
    """Coerce ``x`` to a float array of points with trailing axis ``dim``."""
    arr = np.asarray(x, dtype=float)
    if dim == 1 and (arr.ndim == 0 or arr.shape[-1] != 1):
        arr = arr[..., None]
    if arr.shape[-1] != dim:
        raise ValidationError(f"expected points of dimension {dim}, got shape {arr.shape}")
    return arr


def _squared_distance(x, y, dim: int):
    diff = as_points(x, dim) - as_points(y, dim)
    return np.sum(diff**2, axis=-1)


def _scalar(value):
    return value[()] if isinstance(value, np.ndarray) and value.ndim == 0 else value


@dataclass(frozen=True)
class GaussianWavepacket:
    """Normalized Gaussian ``(pi s^2)^(-n/4) exp(-(x-a)^2/(2 s^2) + i p.x/hbar)``."""

    center: Sequence[float]
    width: float
    momentum: Sequence[float] = 0.0

    def __post_init__(self):
        center = tuple(float(v) for v in np.atleast_1d(self.center))
        momentum = np.atleast_1d(np.asarray(self.momentum, dtype=float))
        if momentum.size == 1 and len(center) > 1:
            momentum = np.repeat(momentum, len(center))
        if momentum.size != len(center):
            raise ValidationError("center and momentum differ in dimension")
        if not (self.width > 0 and math.isfinite(self.width)):
            raise ValidationError(f"wavepacket width must be positive, got {self.width}")
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "momentum", tuple(float(v) for v in momentum))

    @property
    def dim(self) -> int:
        return len(self.center)

    def __call__(self, x, params: PhysicalParams = PhysicalParams()):
        n = self.dim
        pts = as_points(x, n)
        a = np.asarray(self.center)
        p = np.asarray(self.momentum)
        s2 = self.width**2
        log = (
            -0.25 * n * math.log(math.pi * s2)
            - np.sum((pts - a) ** 2, axis=-1) / (2 * s2)
            + 1j * (pts @ p) / params.hbar
        )
        return _scalar(np.exp(log))

    def on_grid(self, grid: Grid, params: PhysicalParams = PhysicalParams()) -> GridWavefunction:
        if grid.dim != self.dim:
            raise ValidationError("wavepacket and grid differ in dimension")
        return GridWavefunction(grid, self(grid.points, params))


def eval_F(x0, y, width: float, params: PhysicalParams = PhysicalParams()):
    """Normalized heat kernel of Euclidean time ``width``.

    ``(m/(2 pi hbar w))^(n/2) exp(-m (x0-y)^2 / (2 hbar w))``; this is F for
    ``width=gamma`` and G for ``width=eta``. Broadcasts over point batches.
    """
    if not (width > 0):
        raise ValidationError(f"smearing width must be positive, got {width}")
    m, hbar, n = params.mass, params.hbar, params.dim
    r2 = _squared_distance(x0, y, n)
    value = (m / (2 * math.pi * hbar * width)) ** (n / 2) * np.exp(-m * r2 / (2 * hbar * width))
    return _scalar(value)


eval_G = eval_F


def heat_kernel_norm(width: float, params: PhysicalParams = PhysicalParams()) -> float:
    """L2 norm of ``eval_F(x0, ., width)``: ``(m/(4 pi hbar w))^(n/4)``."""
    if not (width > 0):
        raise ValidationError(f"smearing width must be positive, got {width}")
    return (params.mass / (4 * math.pi * params.hbar * width)) ** (params.dim / 4)


def smear_bound(eta: float, gamma: float, params: PhysicalParams = PhysicalParams()) -> float:
    """Uniform bound ``||G||_2 ||F||_2`` on the smeared kernel, independent of t."""
    return heat_kernel_norm(eta, params) * heat_kernel_norm(gamma, params)


def _principal_power(z: complex, power: float) -> complex:
    return complex(np.exp(power * np.log(complex(z))))


def free_propagator(x, x0, t: float, params: PhysicalParams = PhysicalParams()):
    """Free-particle kernel ``(m/(2 pi i hbar t))^(n/2) exp(i m (x-x0)^2/(2 hbar t))``."""
    if not (t > 0):
        raise ValidationError(f"free propagator needs t > 0, got {t}")
    m, hbar, n = params.mass, params.hbar, params.dim
    pref = (m / (2 * math.pi * hbar * t)) ** (n / 2) * np.exp(-0.25j * math.pi * n)
    r2 = _squared_distance(x, x0, n)
    return _scalar(pref * np.exp(1j * m * r2 / (2 * hbar * t)))


def check_caustic_window(t: float, lam: float) -> None:
    if lam < 0:
        raise ValidationError(f"frequency must be nonnegative, got {lam}")
    if lam > 0 and not (0 < t and lam * t < math.pi):
        raise CausticError(
            f"t={t} outside caustic-free window (0, pi/lambda={math.pi / lam:.12g})"
        )
    if not (t > 0):
        raise CausticError(f"t={t} outside caustic-free window: need t > 0")


def ho_trig(t: float, lam: float) -> tuple:
    """Return ``(lambda/sin(lambda t), cos(lambda t))`` with the free limit at
    ``lambda == 0``. Raises :class:`CausticError` outside the window."""
    check_caustic_window(t, lam)
    if lam == 0:
        return 1.0 / t, 1.0
    return lam / math.sin(lam * t), math.cos(lam * t)


def classical_coefficients(t: float, lam: float, params: PhysicalParams = PhysicalParams()):
    """Coefficients ``(diag, off)`` of the classical exponent.

    The exponent is ``diag * (x0^2 + y^2) + 2 * off * x0.y`` (complex).
    """
    a, co = ho_trig(t, lam)
    scale = 1j * ACTION_FACTOR * params.mass * a / params.hbar
    return scale * co, -scale


def ho_prefactor(t: float, lam: float, params: PhysicalParams = PhysicalParams()) -> complex:
    """``(m/(2 pi i hbar))^(n/2) (lambda/sin(lambda t))^(n/2)`` on the principal branch."""
    a, _ = ho_trig(t, lam)
    n = params.dim
    return (params.mass * a / (2 * math.pi * params.hbar)) ** (n / 2) * complex(
        np.exp(-0.25j * math.pi * n)
    )


def ho_exact_propagator(x, x0, t: float, lam: float, params: PhysicalParams = PhysicalParams()):
    """Harmonic-oscillator propagator for ``H = -hbar^2/(2m) Laplacian + m lam^2 x^2 / 2``.

    Valid for ``0 < t < pi/lam``; ``lam == 0`` gives the free propagator.
    """
    if lam <= 0:
        if lam == 0:
            return free_propagator(x, x0, t, params)
        raise ValidationError(f"frequency must be nonnegative, got {lam}")
    diag, off = classical_coefficients(t, lam, params)
    n = params.dim
    px, px0 = as_points(x, n), as_points(x0, n)
    expo = diag * (np.sum(px**2, -1) + np.sum(px0**2, -1)) + 2 * off * np.sum(px * px0, -1)
    return _scalar(ho_prefactor(t, lam, params) * np.exp(expo))


def bilinear_pair(f: GridWavefunction, g: GridWavefunction) -> complex:
    """``integral f(x) g(x) dx`` on the shared grid, without complex conjugation."""
    if f.grid != g.grid:
        raise ValidationError("bilinear_pair needs both states on the same grid")
    return complex(np.sum(f.samples * g.samples) * f.grid.cell_volume)
