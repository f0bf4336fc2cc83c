"""Run configuration: YAML or JSON documents validated against a JSON schema.

Precedence is flags > config document > :data:`DEFAULTS`. A JSON report
written by ``smearprop converge`` is also accepted as a config; its
``provenance.effective_config`` block is used.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass
from importlib import resources

import jsonschema
import yaml

from .core import GaussianWavepacket, Grid, PhysicalParams, SmearWidths
from .errors import ValidationError
from .lab import SweepSpec
from .trotter import free_potential, harmonic_potential, inverse_distance_potential, step_potential

DEFAULTS = {
    "physics": {"m": 1.0, "hbar": 1.0, "n": 1, "lambda": 1.0},
    "system": {
        "potential": "harmonic",
        "step_height": 1.0,
        "step_position": 0.5,
        "coupling": 1.0,
        "clamp_value": 50.0,
        "singular_point": 0.0,
    },
    "smear": {"eta": 0.05, "gamma": 0.05},
    "slicing": {"k": 512, "t": 1.0, "splitting": "lie"},
    "grid": {"N": 4096, "lower": -40.0, "upper": 40.0},
    "points": {"x": 1.0, "x0": 0.0},
    "wavepackets": {
        "phi": {"center": 0.5, "width": 1.0, "momentum": 0.3},
        "psi": {"center": -0.3, "width": 0.8, "momentum": 0.0},
    },
    "sweep": {
        "quantity": "amplitude",
        "eta": [0.2, 0.1, 0.05, 0.025],
        "gamma": None,
        "k": [512],
        "grid_n": [4096],
        "reference": "closed-form",
        "budget_ms": None,
        "threads": 1,
        "seed": 0,
    },
    "output": {"csv": None, "json": None},
}


def load_schema() -> dict:
    text = resources.files("smearprop").joinpath("schema/run_config.schema.json").read_text()
    return json.loads(text)


def _field_path(error) -> str:
    return ".".join(str(p) for p in error.absolute_path) or "<root>"


def validate_document(doc) -> None:
    """Raise :class:`ValidationError` listing every schema violation by field path."""
    validator = jsonschema.Draft202012Validator(load_schema())
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        lines = [f"{_field_path(e)}: {e.message}" for e in errors]
        raise ValidationError("invalid config:\n  " + "\n  ".join(lines))


def load_document(path) -> dict:
    """Read a YAML/JSON config (or a JSON report) from ``path``.

    ``OSError`` propagates unchanged; parse errors become :class:`ValidationError`.
    """
    with open(path) as fh:
        text = fh.read()
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ValidationError(f"{path}: not valid YAML/JSON: {exc}") from None
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise ValidationError(f"{path}: top level must be a mapping")
    if "schema_version" in doc and "provenance" in doc:
        prov = doc["provenance"]
        if not isinstance(prov, dict) or "effective_config" not in prov:
            raise ValidationError(f"{path}: report has no provenance.effective_config block")
        doc = prov["effective_config"]
    return doc


def deep_merge(base: dict, update: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in update.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = deep_merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def _point(value, dim: int, name: str) -> tuple:
    values = tuple(float(v) for v in (value if isinstance(value, (list, tuple)) else [value]))
    if len(values) == 1 and dim > 1:
        values = values * dim
    if len(values) != dim:
        raise ValidationError(f"{name}: expected {dim} components, got {len(values)}")
    if not all(math.isfinite(v) for v in values):
        raise ValidationError(f"{name}: components must be finite")
    return values


@dataclass(frozen=True)
class RunConfig:
    """Validated, fully merged configuration.

    ``source`` is the document as supplied; ``effective`` adds defaults and
    flag overrides.
    """

    source: dict
    effective: dict

    @classmethod
    def build(cls, doc=None, overrides=None) -> "RunConfig":
        doc = {} if doc is None else doc
        validate_document(doc)
        effective = deep_merge(deep_merge(DEFAULTS, doc), overrides or {})
        validate_document(effective)
        config = cls(copy.deepcopy(doc), effective)
        config._revalidate()
        return config

    def _revalidate(self) -> None:
        # positivity and shape checks live in the domain constructors
        try:
            self.params, self.widths, self.grid, self.phi, self.psi, self.x, self.x0
            if self.effective["system"]["potential"] == "clamped-singular":
                _point(self.effective["system"]["singular_point"], self.dim, "system.singular_point")
        except ValidationError:
            raise
        except (TypeError, ValueError) as exc:
            raise ValidationError(f"invalid config: {exc}") from None
        lo, hi = self.effective["grid"]["lower"], self.effective["grid"]["upper"]
        if not lo < hi:
            raise ValidationError(f"grid: lower={lo} must be below upper={hi}")

    def section(self, name: str) -> dict:
        return self.effective[name]

    @property
    def dim(self) -> int:
        return int(self.effective["physics"]["n"])

    @property
    def params(self) -> PhysicalParams:
        p = self.effective["physics"]
        return PhysicalParams(mass=float(p["m"]), hbar=float(p["hbar"]), dim=self.dim)

    @property
    def lam(self) -> float:
        return float(self.effective["physics"]["lambda"])

    @property
    def system(self) -> str:
        return self.effective["system"]["potential"]

    @property
    def widths(self) -> SmearWidths:
        s = self.effective["smear"]
        return SmearWidths(float(s["eta"]), float(s["gamma"]))

    @property
    def t(self) -> float:
        return float(self.effective["slicing"]["t"])

    @property
    def k(self) -> int:
        return int(self.effective["slicing"]["k"])

    @property
    def splitting(self) -> str:
        return self.effective["slicing"]["splitting"]

    @property
    def grid(self) -> Grid:
        g = self.effective["grid"]
        return Grid.uniform(float(g["lower"]), float(g["upper"]), int(g["N"]), self.dim)

    @property
    def x(self) -> tuple:
        return _point(self.effective["points"]["x"], self.dim, "points.x")

    @property
    def x0(self) -> tuple:
        return _point(self.effective["points"]["x0"], self.dim, "points.x0")

    def _packet(self, name: str) -> GaussianWavepacket:
        p = self.effective["wavepackets"][name]
        return GaussianWavepacket(
            _point(p["center"], self.dim, f"wavepackets.{name}.center"),
            float(p["width"]),
            _point(p["momentum"], self.dim, f"wavepackets.{name}.momentum"),
        )

    @property
    def phi(self) -> GaussianWavepacket:
        return self._packet("phi")

    @property
    def psi(self) -> GaussianWavepacket:
        return self._packet("psi")

    def potential(self):
        s = self.effective["system"]
        if self.system == "free":
            return free_potential()
        if self.system == "harmonic":
            return harmonic_potential(self.lam, self.params)
        if self.system == "step":
            return step_potential(float(s["step_height"]), float(s["step_position"]), dim=self.dim)
        return inverse_distance_potential(
            float(s["coupling"]),
            _point(s["singular_point"], self.dim, "system.singular_point"),
            float(s["clamp_value"]),
            dim=self.dim,
        )

    @property
    def threads(self) -> int:
        return int(self.effective["sweep"]["threads"])

    def sweep_spec(self) -> SweepSpec:
        sw = self.effective["sweep"]
        s = self.effective["system"]
        g = self.effective["grid"]
        return SweepSpec(
            system=self.system,
            quantity=sw["quantity"],
            eta=tuple(sw["eta"]),
            gamma=None if sw["gamma"] is None else tuple(sw["gamma"]),
            k=tuple(sw["k"]),
            grid_n=tuple(sw["grid_n"]),
            x=self.x,
            x0=self.x0,
            t=self.t,
            lam=self.lam,
            phi=self.phi,
            psi=self.psi,
            reference=sw["reference"],
            grid_lower=float(g["lower"]),
            grid_upper=float(g["upper"]),
            step_height=float(s["step_height"]),
            step_position=float(s["step_position"]),
            coupling=float(s["coupling"]),
            clamp_value=float(s["clamp_value"]),
            singular_point=_point(s["singular_point"], self.dim, "system.singular_point"),
            splitting=self.splitting,
            params=self.params,
            budget_ms=sw["budget_ms"],
            seed=int(sw["seed"]),
        )

    def provenance(self) -> dict:
        return {"config": copy.deepcopy(self.source), "effective_config": copy.deepcopy(self.effective)}
