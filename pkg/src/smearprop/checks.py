"""Bundled acceptance checks behind ``smearprop verify``.

Each check returns a :class:`CheckResult`; failures are enumerated, never
folded into a single flag.
"""

from __future__ import annotations

import contextlib
import math
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import core
from .core import GaussianWavepacket, Grid, PhysicalParams, SmearWidths, bilinear_pair, smear_bound
from .gaussian import kernel_free_closed, smeared_ho_kernel_closed
from .lab import richardson_extrapolate
from .sliced import (
    EndpointPath,
    SlicedQuadraticAction,
    classical_exponent_limit,
    decoupled_exponent,
    det_S,
    partial_determinants,
    sliced_exponent,
)
from .trotter import (
    LeakageWarning,
    amplitude,
    amplitude_direct,
    free_potential,
    harmonic_potential,
    kernel_K_grid,
    step_potential,
)

SEED = 20261015
DEFAULT_GRID = Grid.uniform(-40.0, 40.0, 4096)
HARMONIC_PAIRS = ((0.0, 0.0), (1.0, 0.0), (0.0, 1.0))
PHI = GaussianWavepacket(0.5, 1.0, 0.3)
PSI = GaussianWavepacket(-0.3, 0.8, 0.0)
LADDER = (0.2, 0.1, 0.05, 0.025)


@dataclass
class CheckResult:
    criterion: int
    name: str
    passed: bool
    measured: float
    threshold: float
    detail: str = ""
    seconds: float = 0.0

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return (
            f"[{tag}] criterion {self.criterion:>2} {self.name}: "
            f"measured={self.measured:.3e} threshold={self.threshold:.3e} ({self.seconds:.2f}s)"
            + (f" {self.detail}" if self.detail else "")
        )


@dataclass
class SuiteResult:
    level: str
    checks: list = field(default_factory=list)
    seconds: float = 0.0

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def summary(self) -> str:
        lines = [c.line() for c in self.checks]
        n_ok = sum(c.passed for c in self.checks)
        lines.append(
            f"{self.level}: {n_ok}/{len(self.checks)} checks passed in {self.seconds:.1f}s"
        )
        return "\n".join(lines)


@contextlib.contextmanager
def mutated_action_factor(value: float):
    """Temporarily replace the classical-exponent factor (mutation testing)."""
    saved = core.ACTION_FACTOR
    core.ACTION_FACTOR = value
    try:
        yield
    finally:
        core.ACTION_FACTOR = saved


def _rel(a, b) -> float:
    return abs(a - b) / abs(b)


def check_free_exactness() -> CheckResult:
    widths = SmearWidths(0.05, 0.05)
    pairs = ((0.0, 0.0), (1.0, 0.0), (2.0, -1.0))
    worst = 0.0
    for k in (1, 7):
        K = kernel_K_grid([p[0] for p in pairs], [p[1] for p in pairs], free_potential(), widths, 1.0, k, DEFAULT_GRID)
        for i, (x, x0) in enumerate(pairs):
            worst = max(worst, _rel(K[i, i], kernel_free_closed(x, x0, widths, 1.0)))
    return CheckResult(1, "free-particle exactness", worst <= 1e-6, worst, 1e-6)


def _harmonic_numeric(k=512):
    widths = SmearWidths(0.05, 0.05)
    xs = [p[0] for p in HARMONIC_PAIRS]
    x0s = [p[1] for p in HARMONIC_PAIRS]
    K = kernel_K_grid(xs, x0s, harmonic_potential(1.0), widths, 1.0, k, DEFAULT_GRID)
    return [K[i, i] for i in range(len(HARMONIC_PAIRS))], widths


def _harmonic_errors(numeric, widths):
    return [
        _rel(v, smeared_ho_kernel_closed(x, x0, widths, 1.0, 1.0))
        for v, (x, x0) in zip(numeric, HARMONIC_PAIRS)
    ]


def check_harmonic_two_route(numeric=None) -> CheckResult:
    numeric, widths = numeric or _harmonic_numeric()
    worst = max(_harmonic_errors(numeric, widths))
    return CheckResult(2, "harmonic two-route agreement", worst <= 1e-3, worst, 1e-3,
                       f"pairs={list(HARMONIC_PAIRS)}")


def check_determinant_limit() -> CheckResult:
    target = math.sin(1.0)
    err = abs(SlicedQuadraticAction(1000, 1.0, 1.0).eps * det_S(SlicedQuadraticAction(1000, 1.0, 1.0)) - target)
    ks = np.array([16, 32, 64, 128, 256, 512, 1024, 2048, 4096])
    errs = [abs(SlicedQuadraticAction(k, 1.0, 1.0).eps * det_S(SlicedQuadraticAction(k, 1.0, 1.0)) - target) for k in ks]
    order = -np.polyfit(np.log(ks), np.log(errs), 1)[0]
    ok = err <= 5e-6 and 1.8 <= order <= 2.2
    return CheckResult(3, "determinant limit", ok, err, 5e-6, f"fitted order={order:.3f}")


def check_path_gauge(k: int = 64) -> CheckResult:
    rng = np.random.default_rng(SEED)
    action = SlicedQuadraticAction(k, 1.0, 1.0)
    worst = 0.0
    for _ in range(20):
        a, b = rng.uniform(-3, 3, size=2)
        vals = [decoupled_exponent(action, EndpointPath(a, b, rng.normal(0, 2, size=k))) for _ in range(10)]
        spread = (max(vals) - min(vals)) / max(abs(np.mean(vals)), 1e-300)
        worst = max(worst, spread)
    return CheckResult(4, "path-gauge invariance", worst <= 1e-10, worst, 1e-10)


def check_classical_limit() -> CheckResult:
    action = SlicedQuadraticAction(512, 1.0, 1.0)
    finite = sliced_exponent(action, EndpointPath.straight(0.0, 1.0, 512))
    limit = classical_exponent_limit(0.0, 1.0, 1.0, 1.0)
    err_k = _rel(finite, limit)
    free_limit = classical_exponent_limit(0.0, 1.0, 1.0, 1e-4)
    err_free = _rel(free_limit, 0.5j)
    ok = err_k <= 1e-3 and err_free <= 1e-6
    return CheckResult(5, "classical-exponent limit", ok, err_k, 1e-3, f"free-limit rel err={err_free:.2e}")


def check_uniform_bound(n_points: int = 100, k: int = 256) -> CheckResult:
    rng = np.random.default_rng(SEED + 1)
    widths = SmearWidths(0.05, 0.05)
    bound = smear_bound(widths.eta, widths.gamma)
    worst = 0.0
    for pot in (harmonic_potential(1.0), step_potential(2.0, 0.5)):
        xs = rng.uniform(-4, 4, n_points)
        x0s = rng.uniform(-4, 4, n_points)
        with warnings.catch_warnings():
            # the step scatters into high modes that wrap around; unitarity is unaffected
            warnings.simplefilter("ignore", LeakageWarning)
            K = kernel_K_grid(xs, x0s, pot, widths, 1.0, k, DEFAULT_GRID)
        worst = max(worst, float(np.max(np.abs(np.diag(K)))) / bound)
    return CheckResult(6, "uniform bound", worst <= 1 + 1e-6, worst, 1 + 1e-6, "measured=max|K|/bound")


def check_transpose_symmetry() -> CheckResult:
    widths = SmearWidths(0.05, 0.05)
    phi, psi = PHI.on_grid(DEFAULT_GRID), PSI.on_grid(DEFAULT_GRID)
    pot = harmonic_potential(1.0)
    a = amplitude(phi, psi, pot, widths, 1.0, 512, splitting="strang")
    b = amplitude(psi, phi, pot, widths, 1.0, 512, splitting="strang")
    err = abs(a - b) / max(abs(a), abs(b))
    return CheckResult(7, "transpose symmetry", err <= 1e-8, err, 1e-8, "symmetric splitting")


def check_delta_limit() -> CheckResult:
    phi, psi = PHI.on_grid(DEFAULT_GRID), PSI.on_grid(DEFAULT_GRID)
    overlap = bilinear_pair(phi, psi)
    pot = harmonic_potential(1.0)
    errs = [abs(amplitude(phi, psi, pot, SmearWidths(h, h), 0.0, 1) - overlap) for h in LADDER]
    slope = np.polyfit(np.log([2 * h for h in LADDER]), np.log(errs), 1)[0]
    return CheckResult(8, "delta limit at t=0", slope >= 0.9, slope, 0.9, "measured=fitted slope")


def check_smearing_limit() -> CheckResult:
    phi, psi = PHI.on_grid(DEFAULT_GRID), PSI.on_grid(DEFAULT_GRID)
    pot = harmonic_potential(1.0)
    direct = amplitude_direct(phi, psi, pot, 1.0, 512)
    values = [(h, amplitude(phi, psi, pot, SmearWidths(h, h), 1.0, 512)) for h in LADDER]
    errs = [abs(v - direct) for _, v in values]
    decreasing = all(b < a for a, b in zip(errs, errs[1:]))
    extrap = richardson_extrapolate(values)
    gap = abs(extrap.value - direct)
    return CheckResult(9, "smearing limit", decreasing and gap <= 2e-4, gap, 2e-4,
                       f"strictly decreasing={decreasing}, order={extrap.order:.3f}")


def check_caustic_detection(k: int = 1000) -> CheckResult:
    inside = partial_determinants(SlicedQuadraticAction(k, 0.9 * math.pi, 1.0))
    outside = partial_determinants(SlicedQuadraticAction(k, 1.05 * math.pi, 1.0))
    ok = bool(np.all(inside[1:] > 0) and np.any(outside[1:] <= 0))
    return CheckResult(10, "caustic detection", ok, float(inside[1:].min()), 0.0,
                       f"min minor outside={outside[1:].min():.3e}")


def check_mutation(numeric=None) -> CheckResult:
    numeric, widths = numeric or _harmonic_numeric()
    with mutated_action_factor(1.0):
        worst = max(_harmonic_errors(numeric, widths))
    return CheckResult(11, "mutation sensitivity", worst > 0.1, worst, 0.1,
                       "measured=criterion-2 error without the 1/2")


QUICK = (1, 3, 4, 6, 7)
FULL = tuple(range(1, 12))


def verify_suite(level: str = "quick") -> SuiteResult:
    """Run the quick (criteria 1, 3, 4, 6, 7) or full (1-11) suite."""
    if level not in ("quick", "full"):
        raise ValueError(f"level must be 'quick' or 'full', got {level!r}")
    wanted = QUICK if level == "quick" else FULL
    start = time.perf_counter()
    result = SuiteResult(level)
    shared = {}

    def harmonic():
        if "numeric" not in shared:
            shared["numeric"] = _harmonic_numeric()
        return shared["numeric"]

    runners = {
        1: check_free_exactness,
        2: lambda: check_harmonic_two_route(harmonic()),
        3: check_determinant_limit,
        4: check_path_gauge,
        5: check_classical_limit,
        6: check_uniform_bound,
        7: check_transpose_symmetry,
        8: check_delta_limit,
        9: check_smearing_limit,
        10: check_caustic_detection,
        11: lambda: check_mutation(harmonic()),
    }
    for criterion in wanted:
        t0 = time.perf_counter()
        try:
            check = runners[criterion]()
        except Exception as exc:  # enumerate, never abort the suite
            check = CheckResult(criterion, "error", False, math.nan, math.nan, repr(exc))
        check.seconds = time.perf_counter() - t0
        result.checks.append(check)
    result.seconds = time.perf_counter() - start
    return result
