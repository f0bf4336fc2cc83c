"""Parameter sweeps toward the smearing and slicing limits.

A :class:`SweepSpec` names a system, a quantity and ladders of ``eta``,
``gamma``, ``k`` and grid sizes. :func:`run_sweep` evaluates the quantity at
every ladder point and compares it with a reference: a closed form where one
exists (free and harmonic systems) or the finest ladder point otherwise.
"""

from __future__ import annotations

import csv
import itertools
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import NamedTuple, Optional

import numpy as np
from scipy.optimize import brentq

from . import __version__
from .core import GaussianWavepacket, Grid, PhysicalParams, SmearWidths
from .errors import NumericPreconditionError, ValidationError
from .gaussian import ho_amplitude_closed, kernel_free_closed, smeared_ho_kernel_closed
from .sliced import (
    EndpointPath,
    SlicedQuadraticAction,
    classical_exponent_limit,
    det_S,
    sliced_exponent,
)
from .trotter import (
    amplitude,
    evolve,
    free_potential,
    harmonic_potential,
    inverse_distance_potential,
    kernel_K_numeric,
    propagate_wavefunction,
    step_potential,
)

SYSTEMS = ("free", "harmonic", "step", "clamped-singular")
QUANTITIES = ("kernel", "amplitude", "wavefunction-error", "prefactor", "exponent")
REFERENCES = ("closed-form", "finest-ladder-point")
CSV_COLUMNS = (
    "eta", "gamma", "k", "grid_n", "re_value", "im_value",
    "re_ref", "im_ref", "abs_err", "rel_err", "runtime_ms",
)
SCHEMA_VERSION = 1


def _strictly_monotone(values) -> bool:
    diffs = np.diff(np.asarray(values, dtype=float))
    return bool(np.all(diffs > 0) or np.all(diffs < 0))


@dataclass(frozen=True)
class SweepSpec:
    """What to sweep. ``gamma=None`` ties the gamma ladder to ``eta``."""

    system: str = "harmonic"
    quantity: str = "kernel"
    eta: tuple = (0.05,)
    gamma: Optional[tuple] = None
    k: tuple = (512,)
    grid_n: tuple = (4096,)
    x: tuple = (1.0,)
    x0: tuple = (0.0,)
    t: float = 1.0
    lam: float = 1.0
    phi: GaussianWavepacket = GaussianWavepacket(0.5, 1.0, 0.3)
    psi: GaussianWavepacket = GaussianWavepacket(-0.3, 0.8, 0.0)
    reference: str = "closed-form"
    grid_lower: float = -40.0
    grid_upper: float = 40.0
    step_height: float = 1.0
    step_position: float = 0.5
    coupling: float = 1.0
    clamp_value: float = 50.0
    singular_point: tuple = (0.0,)
    splitting: str = "lie"
    params: PhysicalParams = PhysicalParams()
    budget_ms: Optional[float] = None
    seed: int = 0

    def __post_init__(self):
        for name in ("eta", "k", "grid_n") + (("gamma",) if self.gamma is not None else ()):
            ladder = tuple(getattr(self, name))
            if not ladder:
                raise ValidationError(f"ladder {name!r} is empty")
            if len(ladder) > 1 and not _strictly_monotone(ladder):
                raise ValidationError(f"ladder {name!r} must be strictly monotone")
            object.__setattr__(self, name, ladder)
        object.__setattr__(self, "x", tuple(np.atleast_1d(np.asarray(self.x, float)).tolist()))
        object.__setattr__(self, "x0", tuple(np.atleast_1d(np.asarray(self.x0, float)).tolist()))
        object.__setattr__(
            self, "singular_point", tuple(np.atleast_1d(np.asarray(self.singular_point, float)).tolist())
        )
        if self.system not in SYSTEMS:
            raise ValidationError(f"system must be one of {SYSTEMS}, got {self.system!r}")
        if self.quantity not in QUANTITIES:
            raise ValidationError(f"quantity must be one of {QUANTITIES}, got {self.quantity!r}")
        if self.reference not in REFERENCES:
            raise ValidationError(f"reference must be one of {REFERENCES}, got {self.reference!r}")
        if self.reference == "closed-form" and self.system not in ("free", "harmonic"):
            raise ValidationError(f"no closed-form reference for system {self.system!r}")
        if self.quantity in ("prefactor", "exponent") and self.system not in ("free", "harmonic"):
            raise ValidationError(f"quantity {self.quantity!r} needs a quadratic system")
        if any(v <= 0 for v in self.eta + (self.gamma or ())):
            raise ValidationError("smearing widths must be positive")
        if any(int(v) != v or v < 1 for v in self.k):
            raise ValidationError("k ladder must hold positive integers")
        if any(int(v) != v or v < 2 for v in self.grid_n):
            raise ValidationError("grid_n ladder must hold integers >= 2")
        if self.lam < 0:
            raise ValidationError("lam must be nonnegative")

    @property
    def effective_lam(self) -> float:
        return self.lam if self.system == "harmonic" else 0.0

    def ladders(self) -> dict:
        out = {"eta": self.eta, "k": self.k, "grid_n": self.grid_n}
        if self.gamma is not None:
            out["gamma"] = self.gamma
        return out

    def to_dict(self) -> dict:
        d = asdict(self)
        d["phi"] = _packet_dict(self.phi)
        d["psi"] = _packet_dict(self.psi)
        d["params"] = asdict(self.params)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "SweepSpec":
        data = dict(data)
        for key in ("phi", "psi"):
            if isinstance(data.get(key), dict):
                data[key] = GaussianWavepacket(**data[key])
        if isinstance(data.get("params"), dict):
            data["params"] = PhysicalParams(**data["params"])
        for key in ("eta", "gamma", "k", "grid_n", "x", "x0", "singular_point"):
            if isinstance(data.get(key), list):
                data[key] = tuple(data[key])
        return cls(**data)


def _packet_dict(p: GaussianWavepacket) -> dict:
    return {"center": list(p.center), "width": p.width, "momentum": list(p.momentum)}


@dataclass(frozen=True)
class SweepRow:
    eta: float
    gamma: float
    k: int
    grid_n: int
    value: Optional[complex]
    reference: Optional[complex]
    runtime_ms: float
    status: str = "ok"
    reference_mode: str = "closed-form"

    @property
    def abs_err(self) -> float:
        if self.value is None or self.reference is None:
            return math.nan
        return abs(self.value - self.reference)

    @property
    def rel_err(self) -> float:
        if self.value is None or self.reference is None:
            return math.nan
        scale = abs(self.reference)
        return self.abs_err / scale if scale > 0 else math.inf if self.abs_err else 0.0

    def csv_record(self) -> dict:
        def part(z, attr):
            return math.nan if z is None else getattr(complex(z), attr)

        return {
            "eta": self.eta, "gamma": self.gamma, "k": self.k, "grid_n": self.grid_n,
            "re_value": part(self.value, "real"), "im_value": part(self.value, "imag"),
            "re_ref": part(self.reference, "real"), "im_ref": part(self.reference, "imag"),
            "abs_err": self.abs_err, "rel_err": self.rel_err, "runtime_ms": self.runtime_ms,
        }


@dataclass
class SweepReport:
    spec: SweepSpec
    rows: list
    verdicts: dict
    provenance: dict = field(default_factory=dict)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
            writer.writeheader()
            for row in self.rows:
                writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.csv_record().items()})

    def to_json_dict(self) -> dict:
        def cplx(z):
            return None if z is None else [complex(z).real, complex(z).imag]

        return {
            "schema_version": SCHEMA_VERSION,
            "provenance": self.provenance,
            "rows": [
                {
                    "eta": r.eta, "gamma": r.gamma, "k": r.k, "grid_n": r.grid_n,
                    "value": cplx(r.value), "reference": cplx(r.reference),
                    "abs_err": _finite_or_none(r.abs_err), "rel_err": _finite_or_none(r.rel_err),
                    "runtime_ms": r.runtime_ms, "status": r.status,
                    "reference_mode": r.reference_mode,
                }
                for r in self.rows
            ],
            "verdicts": self.verdicts,
        }

    def write_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json_dict(), fh, indent=2)


def _finite_or_none(v):
    return v if math.isfinite(v) else None


def read_csv_report(path) -> list:
    """Load a CSV report, recomputing ``abs_err`` from the value and reference
    columns. Raises :class:`ValidationError` if a stored error disagrees."""
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
            raise ValidationError(f"unexpected CSV columns {reader.fieldnames}")
        for rec in reader:
            vals = {k: float(v) for k, v in rec.items()}
            value = complex(vals["re_value"], vals["im_value"])
            ref = complex(vals["re_ref"], vals["im_ref"])
            recomputed = abs(value - ref)
            stored = vals["abs_err"]
            if not (math.isnan(recomputed) and math.isnan(stored)):
                if not math.isclose(recomputed, stored, rel_tol=1e-12, abs_tol=1e-300):
                    raise ValidationError(f"abs_err {stored} disagrees with recomputed {recomputed}")
            vals["abs_err"] = recomputed
            rows.append(vals)
    return rows


# ---------------------------------------------------------------- evaluation


def _potential(spec: SweepSpec):
    dim = spec.params.dim
    if spec.system == "free":
        return free_potential()
    if spec.system == "harmonic":
        return harmonic_potential(spec.lam, spec.params)
    if spec.system == "step":
        return step_potential(spec.step_height, spec.step_position, dim=dim)
    return inverse_distance_potential(spec.coupling, spec.singular_point, spec.clamp_value, dim=dim)


def _point(values, dim):
    arr = np.asarray(values, float)
    return arr[0] if dim == 1 else arr


def _evaluate(spec: SweepSpec, eta, gamma, k, grid_n) -> complex:
    params = spec.params
    dim = params.dim
    q = spec.quantity
    if q == "prefactor":
        action = SlicedQuadraticAction(k, spec.t, spec.effective_lam)
        d = det_S(action)
        d = d if isinstance(d, float) else d.value
        return complex(action.eps * d)
    if q == "exponent":
        action = SlicedQuadraticAction(k, spec.t, spec.effective_lam)
        return sum(
            sliced_exponent(action, EndpointPath.straight(a, b, k), params)
            for a, b in zip(spec.x0, spec.x)
        )
    grid = Grid.uniform(spec.grid_lower, spec.grid_upper, grid_n, dim)
    widths = SmearWidths(eta, gamma)
    pot = _potential(spec)
    if q == "kernel":
        return kernel_K_numeric(
            _point(spec.x, dim), _point(spec.x0, dim), pot, widths, spec.t, k, grid, params, spec.splitting
        )
    phi = spec.phi.on_grid(grid, params)
    psi = spec.psi.on_grid(grid, params)
    if q == "amplitude":
        return amplitude(phi, psi, pot, widths, spec.t, k, params, spec.splitting)
    smeared = propagate_wavefunction(psi, pot, widths, spec.t, k, params, spec.splitting)
    bare = evolve(psi, pot, spec.t, k, params, spec.splitting).final
    return complex(np.sqrt(np.sum(np.abs(smeared.samples - bare.samples) ** 2) * grid.cell_volume))


def _closed_reference(spec: SweepSpec, eta, gamma) -> complex:
    params = spec.params
    dim = params.dim
    lam = spec.effective_lam
    q = spec.quantity
    if q == "prefactor":
        return complex(math.sin(lam * spec.t) / lam if lam > 0 else spec.t)
    if q == "exponent":
        return complex(classical_exponent_limit(
            _point(spec.x0, dim), _point(spec.x, dim), spec.t, lam, params
        ))
    if q == "kernel":
        widths = SmearWidths(eta, gamma)
        x, x0 = _point(spec.x, dim), _point(spec.x0, dim)
        if spec.system == "free":
            return kernel_free_closed(x, x0, widths, spec.t, params)
        return smeared_ho_kernel_closed(x, x0, widths, spec.t, lam, params)
    if q == "amplitude":
        return ho_amplitude_closed(spec.phi, spec.psi, spec.t, lam, params)
    return 0j


def _refinement_order(name, ladder):
    """Indices of ``ladder`` from coarsest to finest."""
    idx = list(range(len(ladder)))
    increasing = len(ladder) < 2 or ladder[1] > ladder[0]
    finer_is_larger = name in ("k", "grid_n")
    return idx if increasing == finer_is_larger else idx[::-1]


def _fitted_order(hs, errs) -> Optional[float]:
    hs, errs = np.asarray(hs, float), np.asarray(errs, float)
    ok = (errs > 0) & np.isfinite(errs)
    if ok.sum() < 2:
        return None
    return float(np.polyfit(np.log(hs[ok]), np.log(errs[ok]), 1)[0])


def _verdicts(spec: SweepSpec, rows, combos) -> dict:
    ladders = spec.ladders()
    names = list(ladders)
    out = {}
    for name in names:
        ladder = ladders[name]
        if len(ladder) < 2:
            continue
        order = _refinement_order(name, ladder)
        groups = {}
        for row, combo in zip(rows, combos):
            key = tuple(combo[n] for n in names if n != name)
            groups.setdefault(key, {})[combo[name]] = row
        group_results = []
        for key, members in groups.items():
            seq = [members[i] for i in order if i in members]
            errs = [r.abs_err for r in seq]
            finite = [e for e in errs if math.isfinite(e)]
            diffs = np.diff(finite)
            hs = [ladder[i] if name in ("eta", "gamma") else 1.0 / ladder[i] for i in order if i in members]
            group_results.append({
                "strictly_decreasing": bool(len(finite) == len(errs) and np.all(diffs < 0)),
                "nonincreasing_after_first": bool(np.all(diffs[1:] <= 0)),
                "fitted_order": _fitted_order(hs, errs),
            })
        out[name] = {
            "strictly_decreasing": all(g["strictly_decreasing"] for g in group_results),
            "nonincreasing_after_first": all(g["nonincreasing_after_first"] for g in group_results),
            "fitted_order": group_results[0]["fitted_order"] if len(group_results) == 1 else
            [g["fitted_order"] for g in group_results],
            "flagged": not all(g["strictly_decreasing"] for g in group_results),
        }
    return out


def run_sweep(spec: SweepSpec, threads: int = 1, extra_provenance: Optional[dict] = None) -> SweepReport:
    """Evaluate ``spec`` at every ladder point.

    Rows are merged in ladder order, so output values do not depend on
    ``threads``. With ``budget_ms`` set, the cheapest row is timed first and
    rows predicted to exceed the budget are skipped with status
    ``"skipped-budget"``.
    """
    ladders = spec.ladders()
    names = list(ladders)
    combos = [dict(zip(names, idx)) for idx in itertools.product(*(range(len(ladders[n])) for n in names))]

    def point(combo):
        eta = spec.eta[combo["eta"]]
        gamma = spec.gamma[combo["gamma"]] if spec.gamma is not None else eta
        return eta, gamma, int(spec.k[combo["k"]]), int(spec.grid_n[combo["grid_n"]])

    def cost(pt):
        numeric = spec.quantity not in ("prefactor", "exponent")
        return pt[2] * (pt[3] ** spec.params.dim if numeric else 1)

    points = [point(c) for c in combos]
    rate = None
    if spec.budget_ms is not None:
        cheapest = min(range(len(points)), key=lambda i: cost(points[i]))
        start = time.perf_counter()
        _safe_evaluate(spec, *points[cheapest])
        rate = (time.perf_counter() - start) * 1e3 / cost(points[cheapest])

    def run(pt):
        if rate is not None and rate * cost(pt) > spec.budget_ms:
            return None, "skipped-budget", 0.0
        start = time.perf_counter()
        value, status = _safe_evaluate(spec, *pt)
        return value, status, (time.perf_counter() - start) * 1e3

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, points))
    else:
        results = [run(pt) for pt in points]

    mode = spec.reference
    if mode == "finest-ladder-point":
        finest = {n: _refinement_order(n, ladders[n])[-1] for n in names}
        fi = next(i for i, c in enumerate(combos) if c == finest)
        finest_ref = results[fi][0]
    rows = []
    for pt, (value, status, ms) in zip(points, results):
        if mode == "closed-form":
            ref = _closed_reference(spec, pt[0], pt[1])
        else:
            ref = finest_ref
        rows.append(SweepRow(pt[0], pt[1], pt[2], pt[3], value, ref, ms, status, mode))

    provenance = {
        "spec": spec.to_dict(),
        "package_version": __version__,
        "seed": spec.seed,
        "threads": threads,
    }
    if extra_provenance:
        provenance.update(extra_provenance)
    return SweepReport(spec, rows, _verdicts(spec, rows, combos), provenance)


def _safe_evaluate(spec, eta, gamma, k, grid_n):
    try:
        return _evaluate(spec, eta, gamma, k, grid_n), "ok"
    except NumericPreconditionError as exc:
        return None, f"error: {exc}"


# ------------------------------------------------------------ extrapolation


class Extrapolation(NamedTuple):
    value: complex
    order: Optional[float]


def _solve_order(h, d1, d2) -> Optional[float]:
    ratio = abs(d1 / d2)
    h0, h1, h2 = h
    if math.isclose(h0 / h1, h1 / h2, rel_tol=1e-12):
        r = h0 / h1
        return math.log(ratio) / math.log(r) if ratio > 0 else None

    def f(p):
        return (h0**p - h1**p) / (h1**p - h2**p) - ratio

    try:
        return brentq(f, 1e-6, 30.0)
    except ValueError:
        return None


def richardson_extrapolate(values) -> Extrapolation:
    """Fit ``value ~ v_inf + C h^p`` on successive triples of ``(h, value)``.

    The order ``p`` comes from the ratio of successive differences; ``v_inf``
    and ``C`` from a least-squares fit over the triple. The finest valid triple
    is returned. Identical values give ``order=None`` (indeterminate).
    """
    pts = [(float(h), complex(v)) for h, v in values]
    if len(pts) < 3:
        raise ValidationError("Richardson extrapolation needs at least 3 points")
    hs = np.array([h for h, _ in pts])
    vs = np.array([v for _, v in pts])
    if np.any(hs <= 0) or np.any(np.diff(hs) >= 0):
        raise ValidationError("step sizes must be positive and strictly decreasing")
    if np.all(vs == vs[0]):
        return Extrapolation(_real_if_real(vs[0]), None)
    best = None
    for i in range(len(pts) - 2):
        h = hs[i : i + 3]
        v = vs[i : i + 3]
        d1, d2 = v[0] - v[1], v[1] - v[2]
        if d2 == 0 or d1 == 0:
            continue
        p = _solve_order(h, d1, d2)
        if p is None or not math.isfinite(p) or p <= 0:
            continue
        design = np.column_stack([np.ones(3), h**p])
        coef, *_ = np.linalg.lstsq(design, v, rcond=None)
        best = Extrapolation(_real_if_real(coef[0]), p)
    if best is None:
        return Extrapolation(_real_if_real(vs[-1]), None)
    return best


def _real_if_real(z):
    z = complex(z)
    return z.real if z.imag == 0 else z
