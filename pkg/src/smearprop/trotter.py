"""Split-step grid evolution and the numeric smeared kernel.

Each slice applies the free propagator in Fourier space and then the
potential phase, ``{exp(-i eps V/hbar) exp(-i eps H0/hbar)}^k``. The heat
steps ``exp(-eta H0/hbar)`` that realize the smearing kernels share the same
Fourier multiplier with a real time argument.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.fft
from scipy.special import ndtr

from .core import (
    LEAKAGE_THRESHOLD,
    Grid,
    GridWavefunction,
    PhysicalParams,
    SmearWidths,
    as_points,
    bilinear_pair,
    boundary_leakage,
    eval_F,
)
from .errors import GridFitError, ValidationError

#: Mass of a smearing Gaussian allowed outside the grid.
GRID_FIT_TOLERANCE = 1e-10

SPLITTINGS = ("lie", "strang")


class LeakageWarning(UserWarning):
    """An evolved state put noticeable mass into the periodic boundary layer."""


@dataclass(frozen=True)
class Potential:
    """Real potential with a finite set of singular points.

    ``evaluator`` maps points of shape ``(..., n)`` to energies. Values within
    one grid spacing of a singular point (and any non-finite value) are
    clamped to ``[-clamp_value, clamp_value]``.
    """

    evaluator: Callable[[np.ndarray], np.ndarray]
    singular_points: tuple = ()
    clamp_value: float = 1e3
    label: str = "custom"

    def __post_init__(self):
        pts = tuple(tuple(float(c) for c in np.atleast_1d(p)) for p in self.singular_points)
        object.__setattr__(self, "singular_points", pts)
        if not (self.clamp_value > 0):
            raise ValidationError(f"clamp_value must be positive, got {self.clamp_value}")

    def __call__(self, x, dim: int = 1):
        with np.errstate(divide="ignore", invalid="ignore"):
            return self.evaluator(as_points(x, dim))

    def on_grid(self, grid: Grid) -> np.ndarray:
        pts = grid.points
        with np.errstate(divide="ignore", invalid="ignore"):
            values = np.asarray(self.evaluator(pts), dtype=float)
        values = np.broadcast_to(values, grid.shape).copy()
        cap = self.clamp_value
        bad = ~np.isfinite(values)
        values[bad] = np.where(np.isnan(values[bad]), cap, np.sign(values[bad]) * cap)
        reach = max(grid.dx)
        for sp in self.singular_points:
            if len(sp) != grid.dim:
                raise ValidationError(f"singular point {sp} does not match grid dimension")
            near = np.linalg.norm(pts - np.asarray(sp), axis=-1) <= reach
            values[near] = np.clip(values[near], -cap, cap)
        return values


def free_potential() -> Potential:
    return Potential(lambda x: np.zeros(x.shape[:-1]), label="free")


def harmonic_potential(lam: float, params: PhysicalParams = PhysicalParams()) -> Potential:
    """``m lam^2 |x|^2 / 2``."""
    if lam < 0:
        raise ValidationError(f"frequency must be nonnegative, got {lam}")
    coef = 0.5 * params.mass * lam**2
    return Potential(lambda x: coef * np.sum(x**2, axis=-1), label=f"harmonic(lambda={lam})")


def step_potential(height: float, position: float = 0.0, axis: int = 0, dim: int = 1) -> Potential:
    """``height`` for ``x[axis] > position``, zero otherwise; one discontinuity."""
    point = [0.0] * dim
    point[axis] = position
    return Potential(
        lambda x: np.where(x[..., axis] > position, height, 0.0),
        singular_points=(tuple(point),),
        clamp_value=max(abs(height), 1e-300),
        label=f"step(height={height}, position={position})",
    )


def inverse_distance_potential(
    coupling: float, center=0.0, clamp_value: float = 50.0, dim: int = 1
) -> Potential:
    """``coupling / |x - center|`` clamped near ``center``."""
    c = np.atleast_1d(np.asarray(center, dtype=float))
    if c.size == 1 and dim > 1:
        c = np.repeat(c, dim)
    return Potential(
        lambda x: coupling / np.linalg.norm(x - c, axis=-1),
        singular_points=(tuple(c),),
        clamp_value=clamp_value,
        label=f"inverse-distance(coupling={coupling})",
    )


@dataclass(frozen=True)
class TruncationWindow:
    """Retained integration region with boxes excised around singular points.

    Boxes are given as ``(lower, upper)`` corner pairs and must lie inside the
    window.
    """

    lower: tuple
    upper: tuple
    excised: tuple = ()

    def __post_init__(self):
        lower = tuple(float(v) for v in np.atleast_1d(self.lower))
        upper = tuple(float(v) for v in np.atleast_1d(self.upper))
        boxes = tuple(
            (tuple(float(v) for v in np.atleast_1d(lo)), tuple(float(v) for v in np.atleast_1d(hi)))
            for lo, hi in self.excised
        )
        for lo, hi in boxes:
            if not all(L <= a <= b <= U for L, a, b, U in zip(lower, lo, hi, upper)):
                raise ValidationError(f"excised box {lo}-{hi} leaves the window")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        object.__setattr__(self, "excised", boxes)

    @classmethod
    def from_grid(cls, grid: Grid, potential: Potential, refinement: int = 1) -> "TruncationWindow":
        """Window equal to the grid span; boxes of half-width ``dx / refinement``."""
        boxes = []
        for sp in potential.singular_points:
            half = [d / refinement for d in grid.dx]
            lo = [max(c - h, L) for c, h, L in zip(sp, half, grid.lower)]
            hi = [min(c + h, U) for c, h, U in zip(sp, half, grid.upper)]
            if all(a < b for a, b in zip(lo, hi)):
                boxes.append((lo, hi))
        return cls(grid.lower, grid.upper, tuple(boxes))

    @property
    def excised_volume(self) -> float:
        return float(sum(np.prod(np.subtract(hi, lo)) for lo, hi in self.excised))

    def retained_mask(self, grid: Grid) -> np.ndarray:
        pts = grid.points
        inside = np.all((pts >= self.lower) & (pts <= self.upper), axis=-1)
        for lo, hi in self.excised:
            inside &= ~np.all((pts >= lo) & (pts <= hi), axis=-1)
        return inside


@dataclass(frozen=True)
class EvolutionReport:
    final: GridWavefunction
    norm_drift: float
    leakage: float
    k: int
    window: TruncationWindow = field(default=None, repr=False)

    @property
    def state(self) -> GridWavefunction:
        return self.final


def _axes(grid: Grid) -> tuple:
    return tuple(range(-grid.dim, 0))


def _free_multiplier(grid: Grid, tau: complex, params: PhysicalParams) -> np.ndarray:
    return np.exp(-tau * params.hbar * grid.wavenumbers_squared / (2 * params.mass))


def _free_step_array(samples, grid, tau, params):
    if tau == 0:
        return np.array(samples, dtype=complex)
    axes = _axes(grid)
    spec = scipy.fft.fftn(samples, axes=axes)
    spec *= _free_multiplier(grid, tau, params)
    return scipy.fft.ifftn(spec, axes=axes)


def _evolve_array(samples, grid, v_grid, t, k, params, splitting="lie"):
    """Apply ``k`` Trotter slices of total time ``t`` to ``samples`` (batched)."""
    if splitting not in SPLITTINGS:
        raise ValidationError(f"splitting must be one of {SPLITTINGS}, got {splitting!r}")
    eps = t / k
    psi = np.array(samples, dtype=complex)
    if eps == 0:
        return psi
    axes = _axes(grid)
    kinetic = _free_multiplier(grid, 1j * eps, params)
    full = np.exp(-1j * eps * v_grid / params.hbar)
    if splitting == "lie":
        for _ in range(k):
            psi = scipy.fft.ifftn(scipy.fft.fftn(psi, axes=axes) * kinetic, axes=axes)
            psi *= full
        return psi
    half = np.exp(-0.5j * eps * v_grid / params.hbar)
    psi *= half
    for step in range(k):
        psi = scipy.fft.ifftn(scipy.fft.fftn(psi, axes=axes) * kinetic, axes=axes)
        psi *= half if step == k - 1 else full
    return psi


def apply_potential_phase(
    psi: GridWavefunction, potential: Potential, eps: float, params: PhysicalParams = PhysicalParams()
) -> GridWavefunction:
    """Multiply by ``exp(-i eps V / hbar)`` with V clamped near singular points."""
    phase = np.exp(-1j * eps * potential.on_grid(psi.grid) / params.hbar)
    return psi.with_samples(psi.samples * phase)


def apply_free_step(
    psi: GridWavefunction, tau: complex, params: PhysicalParams = PhysicalParams()
) -> GridWavefunction:
    """Apply ``exp(-tau H0 / hbar)`` spectrally; ``tau = i t`` is free evolution,
    real ``tau`` a heat step. Requires ``Re tau >= 0``."""
    tau = complex(tau)
    if tau.real < 0:
        raise ValidationError(f"free step needs Re(tau) >= 0, got {tau}")
    return psi.with_samples(_free_step_array(psi.samples, psi.grid, tau, params))


def evolve(
    psi0: GridWavefunction,
    potential: Potential,
    t: float,
    k: int,
    params: PhysicalParams = PhysicalParams(),
    splitting: str = "lie",
) -> EvolutionReport:
    """Trotter evolution over time ``t`` with ``k`` slices of ``t/k``.

    ``splitting="strang"`` uses the symmetric half-phase variant.
    """
    if int(k) != k or k < 1:
        raise ValidationError(f"k must be a positive integer, got {k}")
    grid = psi0.grid
    out = _evolve_array(psi0.samples, grid, potential.on_grid(grid), t, int(k), params, splitting)
    final = psi0.with_samples(out)
    return EvolutionReport(
        final=final,
        norm_drift=abs(final.norm - psi0.norm),
        leakage=final.leakage,
        k=int(k),
        window=TruncationWindow.from_grid(grid, potential),
    )


def gaussian_tail_mass(center, width: float, grid: Grid, params: PhysicalParams) -> float:
    """Mass of ``eval_F(center, ., width)`` outside the grid box (union bound)."""
    s = math.sqrt(params.hbar * width / params.mass)
    c = np.atleast_1d(np.asarray(center, dtype=float))
    lo, hi = np.asarray(grid.lower), np.asarray(grid.upper)
    return float(np.sum(ndtr((lo - c) / s) + ndtr((c - hi) / s)))


def _check_fit(points, width, grid, params, label):
    for p in points:
        mass = gaussian_tail_mass(p, width, grid, params)
        if mass > GRID_FIT_TOLERANCE:
            raise GridFitError(
                f"{label} at {tuple(np.atleast_1d(p))} leaves mass {mass:.3g} outside the grid"
            )
    s = math.sqrt(params.hbar * width / params.mass)
    if max(grid.dx) > s:
        raise GridFitError(f"{label} width {s:.3g} is not resolved by spacing {max(grid.dx):.3g}")


def kernel_K_grid(
    xs,
    x0s,
    potential: Potential,
    widths: SmearWidths,
    t: float,
    k: int,
    grid: Grid,
    params: PhysicalParams = PhysicalParams(),
    splitting: str = "lie",
    check_fit: bool = True,
) -> np.ndarray:
    """Numeric smeared kernel ``K[i, j] = K(xs[i], x0s[j])``.

    All initial points are evolved together as one batch.
    """
    n = grid.dim
    if params.dim != n:
        raise ValidationError("params.dim and grid dimension differ")
    xs = as_points(xs, n).reshape(-1, n)
    x0s = as_points(x0s, n).reshape(-1, n)
    if check_fit:
        _check_fit(x0s, widths.gamma, grid, params, "F")
        _check_fit(xs, widths.eta, grid, params, "G")
    pts = grid.points
    initial = np.stack([eval_F(x0, pts, widths.gamma, params) for x0 in x0s]).astype(complex)
    evolved = _evolve_array(initial, grid, potential.on_grid(grid), t, int(k), params, splitting)
    leak = max(boundary_leakage(state, grid) for state in evolved)
    if leak > LEAKAGE_THRESHOLD:
        warnings.warn(f"evolved state leaks {leak:.3g} into the boundary layer", LeakageWarning)
    final = np.stack([eval_F(x, pts, widths.eta, params) for x in xs])
    flat_final = final.reshape(len(xs), -1)
    flat_evolved = evolved.reshape(len(x0s), -1)
    return (flat_final @ flat_evolved.T) * grid.cell_volume


def kernel_K_numeric(
    x,
    x0,
    potential: Potential,
    widths: SmearWidths,
    t: float,
    k: int,
    grid: Grid,
    params: PhysicalParams = PhysicalParams(),
    splitting: str = "lie",
    check_fit: bool = True,
) -> complex:
    """Smeared kernel: evolve ``F(x0, ., gamma)`` and pair it with ``G(x, ., eta)``."""
    return complex(
        kernel_K_grid([x], [x0], potential, widths, t, k, grid, params, splitting, check_fit)[0, 0]
    )


def propagate_wavefunction(
    psi: GridWavefunction,
    potential: Potential,
    widths: SmearWidths,
    t: float,
    k: int,
    params: PhysicalParams = PhysicalParams(),
    splitting: str = "lie",
) -> GridWavefunction:
    """``integral psi(x0) K(x, x0, eta, gamma, t) dx0`` as heat(gamma), evolve, heat(eta)."""
    smoothed = apply_free_step(psi, widths.gamma, params)
    evolved = evolve(smoothed, potential, t, k, params, splitting).final
    return apply_free_step(evolved, widths.eta, params)


def amplitude(
    phi: GridWavefunction,
    psi: GridWavefunction,
    potential: Potential,
    widths: SmearWidths,
    t: float,
    k: int,
    params: PhysicalParams = PhysicalParams(),
    splitting: str = "lie",
) -> complex:
    """Smeared transition amplitude ``<phi, K psi>`` (bilinear)."""
    return bilinear_pair(phi, propagate_wavefunction(psi, potential, widths, t, k, params, splitting))


def amplitude_direct(
    phi: GridWavefunction,
    psi: GridWavefunction,
    potential: Potential,
    t: float,
    k: int,
    params: PhysicalParams = PhysicalParams(),
    splitting: str = "lie",
) -> complex:
    """Unsmeared amplitude ``<phi, U psi>`` (bilinear)."""
    return bilinear_pair(phi, evolve(psi, potential, t, k, params, splitting).final)
