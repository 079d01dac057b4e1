"""Command-line driver for slip-penalty Stokes convergence studies.

`crstokes solve` runs a refinement study for one of the built-in
manufactured cases, reports per-level errors with observed orders as CSV
or a markdown table, and can additionally print discrete-stability
diagnostics and export the finest mesh.

Options come from flags, from a `key=value` config file (one pair per
line, `#` comments), or both; flags override the file.  Exit codes:
0 success, 2 bad configuration, 3 numerical failure.
"""

import argparse
import dataclasses
import sys
from dataclasses import dataclass

from . import analysis, halfnorm
from .analysis import ErrorRecord
from .cases import OracleMismatch, get_case, oracle_check
from .forms import assemble_system
from .mesh import (NonManifold, RegularityViolation, build_facets,
                   coarse_ball, coarse_disk, export_mesh, mesh_quality,
                   refine)
from .solver import NumericalFailure, solve
from .spaces import SolveFailure, boundary_mean

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

#: extra uniform refinements applied to the coarse template before level 0
BASE_REFINE = {"disk2d": 3, "ball3d": 2}

#: skip the quadratic-cost boundary diagnostics beyond this many facets
HALF_NORM_CAP = 1500


class ConfigError(Exception):
    """Invalid run configuration."""


@dataclass
class RunConfig:
    case: str = "disk2d"
    levels: int = 4
    base_refine: int = -1          # -1: per-case default
    gamma: float = 2.0
    eps_coef: float = 0.1          # penalty eps = eps_coef * h**eps_exp
    eps_exp: float = 2.0
    nu: float = 1.0
    data_degree: int = 4
    pressure_variant: str = "printed"
    format: str = "csv"
    out: str = ""                  # output file ("" = stdout)
    mesh_out: str = ""             # optional mesh export path
    diagnostics: bool = False

    def validate(self):
        if self.case not in BASE_REFINE:
            raise ConfigError("unknown case %r (choose from %s)"
                              % (self.case, ", ".join(sorted(BASE_REFINE))))
        if self.levels < 1:
            raise ConfigError("levels must be >= 1")
        if self.base_refine < -1:
            raise ConfigError("base_refine must be >= 0 (or -1 for default)")
        if self.gamma <= 0 or self.nu <= 0 or self.eps_coef <= 0:
            raise ConfigError("gamma, nu and eps_coef must be positive")
        if self.data_degree < 1:
            raise ConfigError("data_degree must be >= 1")
        if self.pressure_variant not in ("printed", "symmetric"):
            raise ConfigError("pressure_variant must be printed or symmetric")
        if self.format not in ("csv", "markdown"):
            raise ConfigError("format must be csv or markdown")

    @property
    def effective_base_refine(self):
        return BASE_REFINE[self.case] if self.base_refine < 0 else \
            self.base_refine


def _coerce(name, raw, typ):
    raw = raw.strip()
    if typ is bool:
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError("bad boolean for %s: %r" % (name, raw))
    try:
        return typ(raw)
    except ValueError as exc:
        raise ConfigError("bad value for %s: %r" % (name, raw)) from exc


def read_config_file(path):
    """Parse a key=value config file into a dict of typed values."""
    types = {f.name: f.type for f in dataclasses.fields(RunConfig)}
    pytypes = {"str": str, "int": int, "float": float, "bool": bool}
    out = {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise ConfigError("cannot read config file: %s" % exc) from exc
    for lineno, line in enumerate(lines, start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError("line %d: expected key=value" % lineno)
        key, _, raw = body.partition("=")
        key = key.strip()
        if key not in types:
            raise ConfigError("line %d: unknown option %r" % (lineno, key))
        typ = types[key]
        if isinstance(typ, str):
            typ = pytypes[typ]
        out[key] = _coerce(key, raw, typ)
    return out


# -- study ---------------------------------------------------------------

def run_study(config):
    """Run the refinement study; returns (records, diagnostics, mesh)."""
    kwargs = {}
    if config.case == "ball3d":
        kwargs["pressure_variant"] = config.pressure_variant
    case = get_case(config.case, nu=config.nu, **kwargs)
    oracle_check(case)

    mesh = coarse_disk() if config.case == "disk2d" else coarse_ball()
    for _ in range(config.effective_base_refine):
        mesh = refine(mesh, case.domain)

    records = []
    diagnostics = []
    for level in range(config.levels):
        facets = build_facets(mesh)
        g = boundary_mean(case.g, mesh, facets, degree=config.data_degree)
        eps = config.eps_coef * mesh.h ** config.eps_exp
        system = assemble_system(mesh, facets, eps=eps, gamma=config.gamma,
                                 nu=config.nu, f=case.f, tau=case.tau,
                                 g_means=g, degree=config.data_degree)
        sol = solve(system, mesh, facets)
        flux, flux_w = analysis.flux_defect(case.u, case.g, mesh, facets)
        records.append(ErrorRecord(
            level=level,
            h=mesh.h,
            num_cells=mesh.num_cells,
            l2_u=analysis.error_l2_u(case, sol.u),
            h1_u=analysis.error_triple_u(case, sol.u),
            h1_semi_u=analysis.error_broken_h1(case, sol.u),
            l2_p=analysis.error_l2_p(case, sol.p_ring),
            l2_p_raw=analysis.error_l2_p(case, sol.p),
            flux=flux,
            flux_weighted=flux_w,
            residual=sol.residual,
            k_h=sol.k_h,
        ))
        if config.diagnostics:
            diagnostics.append(_level_diagnostics(
                mesh, facets, case, sol, config))
        if level + 1 < config.levels:
            mesh = refine(mesh, case.domain)
    return records, diagnostics, mesh


def _level_diagnostics(mesh, facets, case, sol, config):
    quality = mesh_quality(mesh, facets, case.domain)
    diag = {
        "min_shape_ratio": quality.min_shape_ratio,
        "max_skin_ratio": quality.max_skin_ratio,
        "volume": quality.volume,
        "korn_min": analysis.korn_ratio_min(mesh, facets, nu=config.nu,
                                            gamma=config.gamma),
        "jump_equiv_max": analysis.jump_equivalence_max(mesh, facets),
        "k_h": sol.k_h,
    }
    if facets.num_boundary_facets <= HALF_NORM_CAP:
        diag["infsup_min"] = analysis.infsup_min(mesh, facets)
        hn = halfnorm.BoundaryHalfNorm(mesh, facets)
        lam = sol.multiplier.values
        diag["multiplier_half_norm"] = hn.norm(lam)
        diag["multiplier_dual_norm"] = hn.dual_norm(lam)
    return diag


# -- output formatting ----------------------------------------------------

_COLUMNS = ("h", "l2_u", "eoc_l2_u", "h1_u", "eoc_h1_u", "l2_p", "eoc_l2_p")


def _table_rows(records):
    hs = [r.h for r in records]
    rows = []
    for i, r in enumerate(records):
        row = {"h": "%.6f" % r.h,
               "l2_u": "%.6e" % r.l2_u,
               "h1_u": "%.6e" % r.h1_u,
               "l2_p": "%.6e" % r.l2_p,
               "eoc_l2_u": "", "eoc_h1_u": "", "eoc_l2_p": ""}
        if i > 0:
            for key, field in (("eoc_l2_u", "l2_u"), ("eoc_h1_u", "h1_u"),
                               ("eoc_l2_p", "l2_p")):
                pair = [getattr(records[i - 1], field), getattr(r, field)]
                try:
                    row[key] = "%.3f" % analysis.eoc(pair, hs[i - 1:i + 1])[0]
                except analysis.ZeroError:
                    row[key] = "nan"
        rows.append(row)
    return rows


def _config_echo(config):
    parts = ["%s=%s" % (f.name, getattr(config, f.name))
             for f in dataclasses.fields(RunConfig)]
    return " ".join(parts)


def format_csv(config, records, diagnostics):
    lines = ["# crstokes convergence study", "# %s" % _config_echo(config)]
    lines.append(",".join(_COLUMNS))
    for row in _table_rows(records):
        lines.append(",".join(row[c] for c in _COLUMNS))
    for level, diag in enumerate(diagnostics):
        body = " ".join("%s=%.6e" % (k, v) for k, v in sorted(diag.items()))
        lines.append("# diag level=%d %s" % (level, body))
    return "\n".join(lines) + "\n"


def format_markdown(config, records, diagnostics):
    lines = ["Convergence study: %s" % _config_echo(config), ""]
    lines.append("| " + " | ".join(_COLUMNS) + " |")
    lines.append("|" + "|".join(["---"] * len(_COLUMNS)) + "|")
    for row in _table_rows(records):
        lines.append("| " + " | ".join(row[c] or "-" for c in _COLUMNS)
                     + " |")
    for level, diag in enumerate(diagnostics):
        body = ", ".join("%s=%.6e" % (k, v) for k, v in sorted(diag.items()))
        lines.append("")
        lines.append("Diagnostics level %d: %s" % (level, body))
    return "\n".join(lines) + "\n"


# -- entry point ----------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(
        prog="crstokes",
        description="Penalized nonconforming FEM for Stokes slip problems.")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("solve", help="run a refinement study")
    run.add_argument("--config", default=None,
                     help="key=value config file (flags override it)")
    run.add_argument("--case", choices=sorted(BASE_REFINE))
    run.add_argument("--levels", type=int)
    run.add_argument("--base-refine", dest="base_refine", type=int)
    run.add_argument("--gamma", type=float)
    run.add_argument("--eps-coef", dest="eps_coef", type=float)
    run.add_argument("--eps-exp", dest="eps_exp", type=float)
    run.add_argument("--nu", type=float)
    run.add_argument("--data-degree", dest="data_degree", type=int)
    run.add_argument("--pressure-variant", dest="pressure_variant",
                     choices=("printed", "symmetric"))
    run.add_argument("--format", choices=("csv", "markdown"))
    run.add_argument("--out", help="write the table to this file")
    run.add_argument("--mesh-out", dest="mesh_out",
                     help="export the finest mesh to this file")
    run.add_argument("--diagnostics", action="store_const", const=True,
                     default=None, help="include stability diagnostics")
    return parser


def config_from_args(args):
    values = {}
    if args.config is not None:
        values.update(read_config_file(args.config))
    for f in dataclasses.fields(RunConfig):
        flag = getattr(args, f.name, None)
        if flag is not None:
            values[f.name] = flag
    config = RunConfig(**values)
    config.validate()
    return config


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = config_from_args(args)
    except ConfigError as exc:
        print("configuration error: %s" % exc, file=sys.stderr)
        return EXIT_CONFIG
    try:
        records, diagnostics, mesh = run_study(config)
    except (NumericalFailure, OracleMismatch, RegularityViolation,
            NonManifold, SolveFailure, halfnorm.SingularGram,
            analysis.ZeroError) as exc:
        print("numerical failure: %s" % exc, file=sys.stderr)
        return EXIT_NUMERICAL

    fmt = format_csv if config.format == "csv" else format_markdown
    text = fmt(config, records, diagnostics)
    if config.out:
        with open(config.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    if config.mesh_out:
        export_mesh(mesh, config.mesh_out)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
