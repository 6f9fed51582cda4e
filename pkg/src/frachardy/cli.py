"""Command-line batch interface.

Usage::

    frachardy <command> --config <file> [--out <dir>] [--seed <u64>]

The config file holds ``key = value`` lines; ``#`` starts a comment.  Every
command writes its CSV files into ``--out`` (default ``.``) together with
``summary.csv`` and prints one line per check with its tolerance.

Exit status: 0 when every check passes, 2 when a check fails, 1 on an error,
64 for an unknown command.
"""

import argparse
import math
import os
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

COMMANDS = ("constants", "selfsim", "evolve", "extinction", "blowup", "spaces",
            "inequalities", "picone", "gronwall", "noextinction")
EXIT_PASS, EXIT_ERROR, EXIT_FAIL, EXIT_USAGE = 0, 1, 2, 64
THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")


class ParseError(ValueError):
    def __init__(self, message, line=None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class ValidationError(ValueError):
    pass


class SchemaError(ValueError):
    pass


def _floats(text):
    return tuple(float(x) for x in text.replace(",", " ").split())


def _bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _opt_float(text):
    return None if text.strip().lower() in ("none", "") else float(text)


@dataclass
class RunConfig:
    """Parsed configuration; defaults give the standard extinction scenario."""

    N: int = 3
    s: float = 0.5
    p: float = 1.6
    # either an absolute lambda or a multiple of the sharp constant
    lam: Optional[float] = None
    lambda_factor: Optional[float] = None
    R: float = 1.0
    M: int = 200
    g: float = 3.0
    scheme: str = "semi_implicit"
    tau: float = 1e-4
    t_end: float = 50.0
    potential: str = "exact"
    n: float = math.inf
    source_q: Optional[float] = None
    safety: float = 0.05
    eps_reg: float = 1e-12
    inner_tol: float = 1e-10
    inner_max_iters: int = 50
    initial: str = "bump"
    amplitude: float = 1.0
    norm: str = "l2"
    n_levels: Tuple[float, ...] = (4, 8, 16, 32, 64)
    probe_r: Optional[float] = None
    probe_t: float = 0.5
    betas: Tuple[float, ...] = (-0.3, 0.0, 0.2)
    L_values: Tuple[float, ...] = (10.0, 100.0, 1000.0)
    alpha: float = 2.0
    grid_size: int = 2001
    samples: int = 100_000
    t0: float = 0.02
    seed: int = 0

    @property
    def lambda_value(self):
        return self.lam


# config key -> (field, parser)
KEYS = {
    "N": ("N", int), "s": ("s", float), "p": ("p", float),
    "lambda": ("lam", float), "lambda_factor": ("lambda_factor", float),
    "R": ("R", float), "M": ("M", int), "g": ("g", float),
    "scheme": ("scheme", str), "tau": ("tau", float), "t_end": ("t_end", float),
    "potential": ("potential", str), "n": ("n", float), "source_q": ("source_q", _opt_float),
    "safety": ("safety", float), "eps_reg": ("eps_reg", float),
    "inner_tol": ("inner_tol", float), "inner_max_iters": ("inner_max_iters", int),
    "initial": ("initial", str), "amplitude": ("amplitude", float), "norm": ("norm", str),
    "n_levels": ("n_levels", _floats), "probe_r": ("probe_r", _opt_float),
    "probe_t": ("probe_t", float), "betas": ("betas", _floats), "L_values": ("L_values", _floats),
    "alpha": ("alpha", float), "grid_size": ("grid_size", int), "samples": ("samples", int),
    "t0": ("t0", float), "seed": ("seed", int),
}


def parse_config(text: str) -> RunConfig:
    """Parse ``key = value`` lines into a validated :class:`RunConfig`."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"expected 'key = value', got {raw.strip()!r}", lineno)
        key, val = (x.strip() for x in line.split("=", 1))
        if key not in KEYS:
            raise ParseError(f"unknown key {key!r}", lineno)
        name, conv = KEYS[key]
        if name in values:
            raise ParseError(f"duplicate key {key!r}", lineno)
        try:
            values[name] = conv(val)
        except ValueError as exc:
            raise ParseError(f"bad value for {key!r}: {exc}", lineno) from None
    cfg = RunConfig(**values)
    validate(cfg)
    return cfg


def validate(cfg: RunConfig):
    from .kernel import Params
    try:
        Params(cfg.N, cfg.s, cfg.p, 0.0 if cfg.lam is None else cfg.lam)
    except ValueError as exc:
        raise ValidationError(str(exc)) from None
    if cfg.lam is not None and cfg.lambda_factor is not None:
        raise ValidationError("give either lambda or lambda_factor, not both")
    if cfg.lambda_factor is not None and cfg.lambda_factor < 0:
        raise ValidationError("lambda_factor must be >= 0")
    checks = [
        (cfg.R > 0, "R must be positive"),
        (cfg.M >= 8, "M must be >= 8"),
        (cfg.g >= 1, "grading exponent g must be >= 1"),
        (cfg.scheme in ("explicit", "semi_implicit"), "scheme must be explicit or semi_implicit"),
        (cfg.tau > 0, "tau must be positive"),
        (cfg.t_end >= 0, "t_end must be >= 0"),
        (cfg.potential in ("exact", "regularized", "minimum"),
         "potential must be exact, regularized or minimum"),
        (cfg.potential == "exact" or cfg.n > 0, "truncation level n must be positive"),
        (0 < cfg.safety < 1, "safety must lie in (0, 1)"),
        (cfg.initial in ("bump", "zero"), "initial must be bump or zero"),
        (cfg.amplitude >= 0, "amplitude must be >= 0 (data are nonnegative)"),
        (cfg.norm in ("l2", "lnu"), "norm must be l2 or lnu"),
        (list(cfg.n_levels) == sorted(cfg.n_levels), "n_levels must be increasing"),
        (cfg.samples >= 0, "samples must be >= 0"),
        (0 <= cfg.seed < 2 ** 64, "seed must be an unsigned 64-bit integer"),
    ]
    for ok, msg in checks:
        if not ok:
            raise ValidationError(msg)


# ---------------------------------------------------------------------------
# CSV output

def format_cell(x) -> str:
    if isinstance(x, bool):
        return "1" if x else "0"
    if isinstance(x, int):
        return str(x)
    if isinstance(x, float) or hasattr(x, "dtype"):
        return format(float(x), ".17g")
    return str(x)


def write_csv(rows: Sequence[dict], schema: Sequence[str], path) -> None:
    """Write rows with exactly the given header; the schema is checked first."""
    schema = list(schema)
    for i, row in enumerate(rows):
        if set(row) != set(schema):
            raise SchemaError(f"row {i} has keys {sorted(row)}, expected {schema}")
    lines = [",".join(schema)]
    lines += [",".join(format_cell(row[k]) for k in schema) for row in rows]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


def read_csv(path) -> List[Dict[str, str]]:
    with open(path, encoding="utf-8", newline="") as fh:
        lines = fh.read().split("\n")
    header = lines[0].split(",")
    return [dict(zip(header, ln.split(","))) for ln in lines[1:] if ln]


# ---------------------------------------------------------------------------
# commands

@dataclass
class Outcome:
    summaries: List[dict] = field(default_factory=list)
    files: List[Path] = field(default_factory=list)

    def check(self, name, ok, metric, value, tol):
        self.summaries.append({"experiment": name, "status": "pass" if ok else "fail",
                               "key_metric": metric, "value": value, "tolerance": tol})

    def info(self, name, metric, value, tol=math.nan):
        self.summaries.append({"experiment": name, "status": "info", "key_metric": metric,
                               "value": value, "tolerance": tol})

    @property
    def failed(self):
        return any(s["status"] == "fail" for s in self.summaries)


def _params(cfg):
    from .kernel import Params, hardy_constant
    base = Params(cfg.N, cfg.s, cfg.p)
    if cfg.lambda_factor is not None:
        return base.with_lambda(cfg.lambda_factor * hardy_constant(base))
    return base.with_lambda(cfg.lam or 0.0)


def _grid(cfg):
    from .radial import build_grid
    return build_grid(cfg.R, cfg.M, cfg.g)


def _initial(cfg, grid):
    import numpy as np
    from .radial import RadialFunction
    if cfg.initial == "zero":
        return RadialFunction.zeros(grid)
    return RadialFunction.from_callable(
        grid, lambda r: cfg.amplitude * np.cos(0.5 * np.pi * np.minimum(r / cfg.R, 1.0)) ** 2)


def _evolution_config(cfg, params):
    from .evolution import EvolutionConfig, PotentialSpec
    pot = PotentialSpec(cfg.potential, cfg.n if cfg.potential != "exact" else math.inf)
    return EvolutionConfig(scheme=cfg.scheme, tau=cfg.tau, t_end=cfg.t_end, potential=pot,
                           source_q=cfg.source_q, lam=params.lam, safety=cfg.safety,
                           eps_reg=cfg.eps_reg, inner_tol=cfg.inner_tol,
                           inner_max_iters=cfg.inner_max_iters)


def _write(out: Outcome, rows, schema, path):
    write_csv(rows, schema, path)
    out.files.append(Path(path))


def cmd_constants(cfg, outdir, out):
    from .kernel import (CONSTANT_TOL, NoBracket, NotSelfSimilarRegime, hardy_constant,
                         selfsim_build, theta, theta_roots)
    params = _params(cfg)
    Lam = hardy_constant(params)
    th = theta(params, params.eta_max)
    try:
        eta1, eta2 = theta_roots(params)
    except (NoBracket, ValueError):
        eta1 = eta2 = math.nan
    try:
        B = selfsim_build(params).B
    except NotSelfSimilarRegime:
        B = math.nan
    rows = [{"quantity": "Lambda", "value": Lam, "tol": CONSTANT_TOL},
            {"quantity": "Theta_at_etamax", "value": th, "tol": 1e-6},
            {"quantity": "eta1", "value": eta1, "tol": 1e-8},
            {"quantity": "eta2", "value": eta2, "tol": 1e-8},
            {"quantity": "B", "value": B, "tol": CONSTANT_TOL}]
    _write(out, rows, ("quantity", "value", "tol"), outdir / "constants.csv")
    rel = abs(th - Lam) / Lam
    out.check("lambda_cross_identity", rel <= 1e-6, "relative_difference", rel, 1e-6)


def cmd_selfsim(cfg, outdir, out):
    from .kernel import selfsim_build, selfsim_residual, selfsim_value
    params = _params(cfg)
    ss = selfsim_build(params)
    rows = []
    worst = 0.0
    for r in (0.1, 1.0, 10.0):
        res = abs(float(selfsim_residual(ss, r)))
        worst = max(worst, res)
        rows.append({"r": r, "V_at_t1": float(selfsim_value(ss, r, 1.0)), "residual": res})
    _write(out, rows, ("r", "V_at_t1", "residual"), outdir / "selfsim.csv")
    out.check("selfsim_residual", worst <= 1e-6, "max_relative_residual", worst, 1e-6)
    out.check("selfsim_B_positive", ss.B > 0, "B", ss.B, 0.0)


def cmd_evolve(cfg, outdir, out):
    from .evolution import DIAGNOSTIC_COLUMNS, evolve
    params = _params(cfg)
    grid = _grid(cfg)
    res = evolve(params, _initial(cfg, grid), _evolution_config(cfg, params))
    _write(out, [{k: r[k] for k in DIAGNOSTIC_COLUMNS} for r in res.rows], DIAGNOSTIC_COLUMNS,
           outdir / "diagnostics.csv")
    _write(out, [{"r": r, "value": v} for r, v in zip(grid.nodes, res.final.values)],
           ("r", "value"), outdir / "profile.csv")
    out.info("evolve", "final_l2", res.final.diagnostics["l2"])


def cmd_extinction(cfg, outdir, out):
    from .experiments import run_extinction
    params = _params(cfg)
    grid = _grid(cfg)
    rep = run_extinction(params, _initial(cfg, grid), _evolution_config(cfg, params), cfg.norm)
    _write(out, rep.rows(), ("t", cfg.norm), outdir / "extinction.csv")
    out.check("extinction_detected", rep.detected, "final_over_initial",
              rep.final_norm / rep.initial_norm if rep.initial_norm else 0.0, 1e-8)
    out.check("extinction_monotone", rep.monotone_decay, "monotone_decay", rep.monotone_decay, 0.0)
    if rep.T_ext == 0.0:
        out.info("extinction_time", "T_ext", 0.0)
        return
    k = math.nan if rep.fitted_exponent is None else rep.fitted_exponent
    out.check("extinction_exponent", rep.exponent_ok, "fitted_exponent", k,
              0.2 * rep.target_exponent)
    out.info("extinction_exponent_ci_low", "ci_low", rep.exponent_ci[0])
    out.info("extinction_exponent_ci_high", "ci_high", rep.exponent_ci[1])
    out.info("extinction_time", "T_ext", math.nan if rep.T_ext is None else rep.T_ext)


def cmd_blowup(cfg, outdir, out):
    from .experiments import run_blowup
    from .kernel import hardy_constant
    params = _params(cfg)
    grid = _grid(cfg)
    cfg_ev = _evolution_config(cfg, params)
    rep = run_blowup(params, _initial(cfg, grid), cfg.n_levels, (cfg.probe_r, cfg.probe_t), cfg_ev)
    _write(out, rep.rows(), ("n", "r0", "t0", "value", "ratio", "far_value"),
           outdir / "blowup.csv")
    supercritical = params.lam > hardy_constant(params)
    if supercritical:
        out.check("blowup_monotone", rep.monotone, "monotone", rep.monotone, 0.0)
        out.check("blowup_growth", rep.total_growth >= 1e3, "last_over_first", rep.total_growth,
                  1e3)
    else:
        out.check("blowup_control_flag", not rep.blowup_flag, "blowup_flag", rep.blowup_flag, 0.0)
        out.info("blowup_control_probe_ratio", "last_ratio", rep.growth_ratios[-1], 1.01)
        far = rep.far_values
        out.info("blowup_control_far_ratio", "last_ratio_at_far_radius", far[-1] / far[-2], 1.01)


def cmd_spaces(cfg, outdir, out):
    from .experiments import run_degenerate_divergence, run_norm_equivalence
    params = _params(cfg)
    grid = _grid(cfg)
    reps = run_norm_equivalence(params, cfg.betas, grid)
    rows = [r for rep in reps for r in rep.rows()]
    _write(out, rows, ("beta", "alpha", "profile", "weighted", "e_alpha", "ratio"),
           outdir / "spaces.csv")
    for rep in reps:
        out.summaries.append(rep.summary())
    div = run_degenerate_divergence(params, -params.ps, L_values=cfg.L_values)
    # the beta = 0 tail decays like L^-ps, so the control needs one more decade
    ctrl = run_degenerate_divergence(params, 0.0, L_values=tuple(cfg.L_values) +
                                     (10.0 * cfg.L_values[-1],))
    _write(out, div.rows() + ctrl.rows(), ("beta", "L", "value"), outdir / "degenerate.csv")
    out.summaries.append(div.summary())
    out.check("degenerate_log_signature", abs(div.log_signature - 1.0) <= 0.3,
              "increment_ratio", div.log_signature, 0.3)
    change = abs(ctrl.values[-1] / ctrl.values[-2] - 1.0)
    out.check("degenerate_control_beta0", change <= 0.01, "last_decade_change", change, 0.01)


def cmd_inequalities(cfg, outdir, out):
    from .inequalities import (REPORT_COLUMNS, check_algg, check_alge4, search_constants_algg,
                               search_constants_alge4)
    p = cfg.p
    rows = []
    c = search_constants_algg(p, cfg.alpha, cfg.grid_size)
    rep = check_algg(p, cfg.alpha, c, grid_size=10 * cfg.grid_size, samples=cfg.samples,
                     seed=cfg.seed)
    rows.append(rep.row())
    out.check("algg_dense_recheck", rep.passed, "violations", rep.violations, 0)
    if 1.0 < p < 2.0:
        C1, C2 = search_constants_alge4(p, samples=cfg.samples, seed=cfg.seed)
        rep = check_alge4(p, cfg.samples, C1, C2, seed=cfg.seed)
        rows.append(rep.row())
        out.check("alge4", rep.passed, "violations", rep.violations, 0)
    else:
        out.info("alge4", "skipped_p_outside_(1,2)", p)
    _write(out, rows, REPORT_COLUMNS, outdir / "inequalities.csv")


def picone_test_functions(grid, seed, count=10):
    import numpy as np
    from .radial import RadialFunction
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        c = rng.uniform(0.05, 0.6) * grid.R
        w = rng.uniform(0.05, 0.3) * grid.R
        out.append(RadialFunction.from_callable(
            grid, lambda r, c=c, w=w: np.maximum(0.0, 1.0 - ((r - c) / w) ** 2) ** 2
            * (r < 0.8 * grid.R)))
    return out


def cmd_picone(cfg, outdir, out):
    import numpy as np
    from .inequalities import REPORT_COLUMNS, check_picone
    from .radial import RadialFunction
    params = _params(cfg)
    grid = _grid(cfg)
    src = RadialFunction.from_callable(grid, lambda r: (r < 0.5 * cfg.R).astype(float))
    rep = check_picone(params, src, picone_test_functions(grid, cfg.seed))
    rep.seed = cfg.seed
    _write(out, [rep.row()], REPORT_COLUMNS, outdir / "picone.csv")
    out.check("picone", rep.passed, "worst_margin", rep.worst_margin, 0.05)


def cmd_gronwall(cfg, outdir, out):
    from .experiments import run_global_gronwall
    params = _params(cfg)
    grid = _grid(cfg)
    rep = run_global_gronwall(params, _initial(cfg, grid), _evolution_config(cfg, params))
    _write(out, rep.rows(), ("t", "l2_sq", "literal_bound", "standard_bound"),
           outdir / "gronwall.csv")
    out.summaries.append(rep.summary())
    out.info("gronwall_literal_form", "min_relative_margin", rep.literal_margin, 0.0)


def cmd_noextinction(cfg, outdir, out):
    from .experiments import run_no_extinction
    params = _params(cfg)
    grid = _grid(cfg)
    rep = run_no_extinction(params, _evolution_config(cfg, params), grid)
    _write(out, rep.rows(), ("t", "l2"), outdir / "noextinction.csv")
    out.check("noextinction_converged", rep.converged, "converged", rep.converged, 0.0)
    out.check("noextinction_positive", rep.positive_after, "positive_after_t1",
              rep.positive_after, 0.0)
    out.check("noextinction_monotone", rep.monotone, "l2_nondecreasing", rep.monotone, 0.0)
    out.check("noextinction_residual", rep.residual <= 0.02, "steady_residual", rep.residual, 0.02)


HANDLERS = {name: globals()[f"cmd_{name}"] for name in COMMANDS}


def run_command(name: str, config: RunConfig, outdir=".", stream=None) -> int:
    """Run one command; returns the exit status and prints one line per check."""
    from .experiments import SUMMARY_COLUMNS
    stream = stream or sys.stdout
    if name not in HANDLERS:
        print(usage(), file=sys.stderr)
        return EXIT_USAGE
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    out = Outcome()
    HANDLERS[name](config, outdir, out)
    write_csv(out.summaries, SUMMARY_COLUMNS, outdir / "summary.csv")
    for s in out.summaries:
        print(f"{s['status'].upper():4s} {s['experiment']}: {s['key_metric']} = "
              f"{format_cell(s['value'])} (tolerance {format_cell(s['tolerance'])})", file=stream)
    return EXIT_FAIL if out.failed else EXIT_PASS


def usage():
    return ("usage: frachardy <command> --config <file> [--out <dir>] [--seed <u64>]\n"
            f"commands: {', '.join(COMMANDS)}")


def _defaults_help():
    lines = ["config keys (key = value) and defaults:"]
    defaults = {f.name: f.default for f in fields(RunConfig)}
    for key, (name, _) in KEYS.items():
        lines.append(f"  {key} = {defaults[name]}")
    return "\n".join(lines)


def _limit_threads():
    n = os.environ.get("FRACHARDY_THREADS", "0").strip() or "0"
    if int(n) > 0:
        for var in THREAD_VARS:
            os.environ[var] = n


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = argparse.ArgumentParser(
        prog="frachardy", description="Numerical laboratory for the fractional p-Laplacian "
        "with a Hardy potential.", epilog=_defaults_help(),
        formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("command", help=", ".join(COMMANDS))
    parser.add_argument("--config", required=True, help="key = value configuration file")
    parser.add_argument("--out", default=".", help="output directory (default: .)")
    parser.add_argument("--seed", type=int, default=None, help="unsigned 64-bit seed")
    if argv and argv[0] not in COMMANDS and not argv[0].startswith("-"):
        print(f"unknown command {argv[0]!r}\n{usage()}", file=sys.stderr)
        return EXIT_USAGE
    args = parser.parse_args(argv)
    _limit_threads()
    try:
        text = Path(args.config).read_text(encoding="utf-8")
        cfg = parse_config(text)
        if args.seed is not None:
            if not 0 <= args.seed < 2 ** 64:
                raise ValidationError("seed must be an unsigned 64-bit integer")
            cfg.seed = args.seed
        return run_command(args.command, cfg, args.out)
    except (ParseError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except Exception as exc:  # surfaced verbatim, mapped to the error status
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
