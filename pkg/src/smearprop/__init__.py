"""Gaussian-smeared real-time propagators by grid time slicing and exact
complex-Gaussian algebra."""

__version__ = "0.1.0"

from .core import (
    GaussianWavepacket,
    Grid,
    GridWavefunction,
    PhysicalParams,
    SmearWidths,
    bilinear_pair,
    eval_F,
    free_propagator,
    ho_exact_propagator,
    smear_bound,
)
from .gaussian import (
    ComplexQuadraticForm,
    complete_square,
    ho_amplitude_closed,
    integrate,
    kernel_free_closed,
    smeared_ho_amplitude_closed,
    smeared_ho_kernel_closed,
)
from .sliced import (
    EndpointPath,
    SlicedQuadraticAction,
    build_S,
    build_T,
    classical_exponent_limit,
    decoupled_exponent,
    det_S,
    finite_k_kernel_ho,
    quantum_prefactor,
    quantum_prefactor_limit,
    rho,
    solve_S,
)
from .trotter import (
    Potential,
    amplitude,
    amplitude_direct,
    apply_free_step,
    apply_potential_phase,
    evolve,
    harmonic_potential,
    kernel_K_numeric,
    propagate_wavefunction,
)
