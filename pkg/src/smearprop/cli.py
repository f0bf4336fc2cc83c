"""``smearprop`` command line: refprop, kernel, amplitude, converge, verify.

Exit status: 0 success, 1 verification failure, 2 validation error,
3 numeric-precondition error, 4 I/O error.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import math
import os
import sys
import tempfile
import warnings

from . import __version__
from .checks import verify_suite
from .config import RunConfig, load_document
from .core import PhysicalParams, free_propagator, ho_exact_propagator
from .errors import NumericPreconditionError, ValidationError
from .gaussian import (
    gaussian_overlap,
    ho_amplitude_closed,
    kernel_free_closed,
    smeared_ho_amplitude_closed,
    smeared_ho_kernel_closed,
)
from .lab import SCHEMA_VERSION, run_sweep
from .trotter import amplitude, amplitude_direct, kernel_K_numeric

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_VALIDATION = 2
EXIT_NUMERIC = 3
EXIT_IO = 4


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_VALIDATION, f"{self.prog}: error: {message}\n")


def _vector(text: str) -> list:
    try:
        values = [float(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    if not all(math.isfinite(v) for v in values):
        raise argparse.ArgumentTypeError(f"components must be finite, got {text!r}")
    return values


def _fmt(z: complex) -> str:
    return f"{z.real:.12g} {z.imag:.12g}"


def _scalar_or_list(values: list):
    return values[0] if len(values) == 1 else values


# ------------------------------------------------------------------ outputs


@contextlib.contextmanager
def _atomic_outputs(paths):
    """Yield temp paths for ``paths``; move them into place only if the body succeeds."""
    temps = {}
    try:
        for path in paths:
            directory = os.path.dirname(os.path.abspath(path))
            try:
                fd, tmp = tempfile.mkstemp(prefix=".smearprop-", dir=directory)
            except OSError as exc:
                raise OSError(exc.errno, exc.strerror, path) from None
            os.close(fd)
            temps[path] = tmp
        yield temps
        for path, tmp in temps.items():
            os.replace(tmp, path)
        temps.clear()
    finally:
        for tmp in temps.values():
            with contextlib.suppress(OSError):
                os.remove(tmp)


def _write_json(path, payload) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, allow_nan=False)
        fh.write("\n")


def _cplx(z):
    return None if z is None else [complex(z).real, complex(z).imag]


# ----------------------------------------------------------------- commands


def cmd_refprop(args) -> int:
    if len(args.x) != len(args.x0):
        raise ValidationError(f"--x has {len(args.x)} components but --x0 has {len(args.x0)}")
    params = PhysicalParams(mass=args.m, hbar=args.hbar, dim=len(args.x))
    x, x0 = _scalar_or_list(args.x), _scalar_or_list(args.x0)
    if args.system == "free":
        value = free_propagator(x, x0, args.t, params)
    else:
        if args.lam is None:
            raise ValidationError("--system ho needs --lambda")
        value = ho_exact_propagator(x, x0, args.t, args.lam, params)
    print(_fmt(complex(value)))
    return EXIT_OK


def _overrides(args) -> dict:
    """Map explicit flags onto config sections (flags win over the document)."""
    table = {
        "m": ("physics", "m"),
        "hbar": ("physics", "hbar"),
        "lam": ("physics", "lambda"),
        "system": ("system", "potential"),
        "eta": ("smear", "eta"),
        "gamma": ("smear", "gamma"),
        "k": ("slicing", "k"),
        "t": ("slicing", "t"),
        "splitting": ("slicing", "splitting"),
        "grid_n": ("grid", "N"),
        "x": ("points", "x"),
        "x0": ("points", "x0"),
        "threads": ("sweep", "threads"),
        "csv": ("output", "csv"),
        "json": ("output", "json"),
    }
    out = {}
    for attr, (section, key) in table.items():
        value = getattr(args, attr, None)
        if value is None:
            continue
        if isinstance(value, list):
            value = _scalar_or_list(value)
        out.setdefault(section, {})[key] = value
    if isinstance(getattr(args, "x", None), list) and len(args.x) > 1:
        out.setdefault("physics", {})["n"] = len(args.x)
    return out


def _load_config(args) -> RunConfig:
    doc = load_document(args.config) if args.config else {}
    return RunConfig.build(doc, _overrides(args))


def _closed_kernel(cfg: RunConfig):
    x, x0 = _scalar_or_list(list(cfg.x)), _scalar_or_list(list(cfg.x0))
    if cfg.system == "free":
        return kernel_free_closed(x, x0, cfg.widths, cfg.t, cfg.params)
    if cfg.system == "harmonic":
        return smeared_ho_kernel_closed(x, x0, cfg.widths, cfg.t, cfg.lam, cfg.params)
    return None


def _discrepancy(value, reference):
    if value is None or reference is None:
        return None
    return abs(value - reference) / abs(reference) if reference != 0 else abs(value - reference)


def _report_lines(values: dict) -> None:
    for name, z in values.items():
        print(f"{name}: " + ("absent" if z is None else _fmt(z)))


def _emit_json(cfg: RunConfig, command: str, payload: dict) -> None:
    path = cfg.section("output")["json"]
    if not path:
        return
    doc = {
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "provenance": {"package_version": __version__, **cfg.provenance()},
        **payload,
    }
    with _atomic_outputs([path]) as tmp:
        _write_json(tmp[path], doc)


def cmd_kernel(args) -> int:
    cfg = _load_config(args)
    numeric = closed = None
    if args.route in ("numeric", "both"):
        x, x0 = _scalar_or_list(list(cfg.x)), _scalar_or_list(list(cfg.x0))
        numeric = kernel_K_numeric(
            x, x0, cfg.potential(), cfg.widths, cfg.t, cfg.k, cfg.grid, cfg.params, cfg.splitting
        )
    if args.route in ("closed", "both"):
        closed = _closed_kernel(cfg)
    disc = _discrepancy(numeric, closed)
    _report_lines({"numeric": numeric, "closed": closed})
    print("discrepancy: " + ("absent" if disc is None else f"{disc:.12g}"))
    _emit_json(cfg, "kernel", {"numeric": _cplx(numeric), "closed": _cplx(closed), "discrepancy": disc})
    return EXIT_OK


def cmd_amplitude(args) -> int:
    cfg = _load_config(args)
    grid, params = cfg.grid, cfg.params
    phi, psi = cfg.phi.on_grid(grid, params), cfg.psi.on_grid(grid, params)
    pot = cfg.potential()
    smeared = amplitude(phi, psi, pot, cfg.widths, cfg.t, cfg.k, params, cfg.splitting)
    direct = amplitude_direct(phi, psi, pot, cfg.t, cfg.k, params, cfg.splitting)
    smeared_closed = closed = None
    if cfg.t == 0:
        closed = gaussian_overlap(cfg.phi, cfg.psi, params)
    elif cfg.system in ("free", "harmonic"):
        lam = cfg.lam if cfg.system == "harmonic" else 0.0
        smeared_closed = smeared_ho_amplitude_closed(cfg.phi, cfg.psi, cfg.widths, cfg.t, lam, params)
        closed = ho_amplitude_closed(cfg.phi, cfg.psi, cfg.t, lam, params)
    for label, reference in (("smeared_closed", smeared_closed), ("closed", closed), ("unsmeared", direct)):
        if reference is not None:
            break
    disc = _discrepancy(smeared, reference)
    _report_lines({
        "smeared": smeared, "smeared_closed": smeared_closed, "unsmeared": direct, "closed": closed,
    })
    print(f"discrepancy: {disc:.12g} (smeared against {label})")
    _emit_json(cfg, "amplitude", {
        "smeared": _cplx(smeared), "smeared_closed": _cplx(smeared_closed),
        "unsmeared": _cplx(direct), "closed": _cplx(closed),
        "discrepancy": disc, "discrepancy_against": label,
    })
    return EXIT_OK


def cmd_converge(args) -> int:
    cfg = _load_config(args)
    spec = cfg.sweep_spec()
    out = cfg.section("output")
    paths = [p for p in (out["csv"], out["json"]) if p]
    # claim the output paths before the (possibly long) sweep
    with _atomic_outputs(paths) as tmp:
        report = run_sweep(spec, threads=cfg.threads, extra_provenance=cfg.provenance())
        if out["csv"]:
            report.write_csv(tmp[out["csv"]])
        if out["json"]:
            _write_json(tmp[out["json"]], report.to_json_dict())
    print("eta gamma k grid_n abs_err rel_err status")
    for row in report.rows:
        print(f"{row.eta:.12g} {row.gamma:.12g} {row.k} {row.grid_n} "
              f"{row.abs_err:.12g} {row.rel_err:.12g} {row.status}")
    for name, verdict in report.verdicts.items():
        tag = "FLAGGED" if verdict["flagged"] else "ok"
        print(f"ladder {name}: {tag} strictly_decreasing={verdict['strictly_decreasing']} "
              f"fitted_order={verdict['fitted_order']}")
    return EXIT_OK


def cmd_verify(args) -> int:
    result = verify_suite("full" if args.full else "quick")
    print(result.summary())
    return EXIT_OK if result.passed else EXIT_FAILED


# ------------------------------------------------------------------- parser


def _add_config_flags(p: argparse.ArgumentParser, system_choices) -> None:
    p.add_argument("--config", help="YAML/JSON run config, or a JSON report to re-run")
    p.add_argument("--system", choices=system_choices)
    p.add_argument("--x", type=_vector, help="final point, comma-separated for n=2")
    p.add_argument("--x0", type=_vector, help="initial point, comma-separated for n=2")
    p.add_argument("--t", type=float)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--m", type=float)
    p.add_argument("--hbar", type=float)
    p.add_argument("--eta", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--k", type=int)
    p.add_argument("--N", dest="grid_n", type=int, help="grid points per axis")
    p.add_argument("--splitting", choices=("lie", "strang"))
    p.add_argument("--json", help="write a JSON report here")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="smearprop", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("refprop", help="unsmeared free or harmonic propagator")
    p.add_argument("--system", choices=("free", "ho"), required=True)
    p.add_argument("--x", type=_vector, default=[0.0])
    p.add_argument("--x0", type=_vector, default=[0.0])
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--m", type=float, default=1.0)
    p.add_argument("--hbar", type=float, default=1.0)
    p.set_defaults(func=cmd_refprop)

    systems = ("free", "harmonic", "step", "clamped-singular")
    p = sub.add_parser("kernel", help="smeared kernel by the grid and/or closed-form route")
    _add_config_flags(p, systems)
    p.add_argument("--route", choices=("numeric", "closed", "both"), default="both")
    p.set_defaults(func=cmd_kernel)

    p = sub.add_parser("amplitude", help="smeared transition amplitude between wavepackets")
    _add_config_flags(p, systems)
    p.set_defaults(func=cmd_amplitude)

    p = sub.add_parser("converge", help="run a convergence sweep")
    _add_config_flags(p, systems)
    p.add_argument("--csv", help="write the CSV report here")
    p.add_argument("--threads", type=int)
    p.set_defaults(func=cmd_converge)

    p = sub.add_parser("verify", help="run the bundled acceptance checks")
    level = p.add_mutually_exclusive_group()
    level.add_argument("--quick", action="store_true", help="criteria 1, 3, 4, 6, 7 (default)")
    level.add_argument("--full", action="store_true", help="all criteria")
    p.set_defaults(func=cmd_verify)
    return parser


def _show_warning(message, category, *_args, **_kwargs):
    print(f"warning: {message}", file=sys.stderr)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        with warnings.catch_warnings():
            warnings.showwarning = _show_warning
            return args.func(args)
    except ValidationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericPreconditionError as exc:
        print(f"numeric precondition failed: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        where = f" ({exc.filename})" if getattr(exc, "filename", None) else ""
        print(f"I/O error{where}: {exc.strerror or exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
