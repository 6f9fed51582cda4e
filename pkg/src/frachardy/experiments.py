"""Desk-scale experiments: extinction, blow-up, supersolution bounds and spaces.

Each driver returns a small report dataclass.  Reports expose ``rows()`` for
the per-experiment CSV and ``summary()`` for the one-line summary
``experiment,status,key_metric,value,tolerance``.
"""

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import curve_fit

from .evolution import (EvolutionConfig, NonConvergence, PotentialSpec, Problem,
                        blowup_observer, evolve, steady_state, weak_residual)
from .kernel import Params, hardy_constant, selfsim_build, selfsim_value
from .radial import (RadialFunction, RadialGrid, build_grid, e_alpha_seminorm, eval_at,
                     gagliardo, hardy_term, lumped_mass, pair_rule, seminorm_general,
                     weighted_l2)

SUMMARY_COLUMNS = ("experiment", "status", "key_metric", "value", "tolerance")
EXTINCTION_REL = 1e-8
FIT_WINDOW = 1e-2
MIN_FIT_SAMPLES = 8


class ReportInconclusive(RuntimeWarning):
    """Issued when a run ends before the event it watches for; the report stays valid."""


def _summary(name, ok, metric, value, tol):
    return {"experiment": name, "status": "pass" if ok else "fail", "key_metric": metric,
            "value": value, "tolerance": tol}


# ---------------------------------------------------------------------------
# test profiles

def smooth_step(x):
    """C-infinity transition from 1 (x <= 0) to 0 (x >= 1)."""
    x = np.asarray(x, dtype=float)

    def f(y):
        out = np.zeros_like(y)
        pos = y > 0
        out[pos] = np.exp(-1.0 / y[pos])
        return out

    return f(1.0 - x) / (f(1.0 - x) + f(x))


def profile_family(grid: RadialGrid, params: Params) -> Dict[str, RadialFunction]:
    """Ten profiles vanishing at R: bumps, hats, plateaus and power-like shapes."""
    R = grid.R
    eta = params.eta_max

    def make(fn):
        return RadialFunction.from_callable(grid, lambda r: fn(np.minimum(r / R, 1.0)))

    shapes = {
        "bump": lambda x: np.cos(0.5 * np.pi * x) ** 2,
        "hat_mid": lambda x: np.maximum(0.0, 1.0 - np.abs(x - 0.5) / 0.3),
        "near_origin": lambda x: np.maximum(0.0, 1.0 - x / 0.1),
        "power_extremal": lambda x: np.maximum(x ** -eta - 1.0, 0.0),
        "power_one": lambda x: np.maximum(x ** -1.0 - 1.0, 0.0),
        "plateau": lambda x: smooth_step((x - 0.3) / 0.6),
        "shell": lambda x: np.maximum(0.0, 1.0 - ((x - 0.7) / 0.2) ** 2) ** 2,
        "linear": lambda x: 1.0 - x,
        "quadratic": lambda x: 1.0 - x * x,
        "two_bumps": lambda x: np.maximum(0.0, 1.0 - ((x - 0.25) / 0.2) ** 2) ** 2
        + 0.5 * np.maximum(0.0, 1.0 - ((x - 0.75) / 0.2) ** 2) ** 2,
    }
    return {k: make(f) for k, f in shapes.items()}


def bump(grid: RadialGrid) -> RadialFunction:
    """Profile equal to 1 on B_1, smooth, supported in B_4."""
    return RadialFunction.from_callable(grid, lambda r: smooth_step((r - 1.0) / 3.0))


# ---------------------------------------------------------------------------
# extinction

@dataclass
class ExtinctionReport:
    params: Params
    detected: bool
    T_ext: Optional[float]
    fitted_exponent: Optional[float]
    exponent_ci: Tuple[float, float]
    monotone_decay: bool
    norm: str
    fit_samples: int
    final_norm: float
    initial_norm: float
    times: np.ndarray = field(repr=False, default=None)
    norms: np.ndarray = field(repr=False, default=None)

    @property
    def target_exponent(self):
        return 1.0 / (2.0 - self.params.p)

    @property
    def exponent_ok(self):
        if self.fitted_exponent is None:
            return False
        return abs(self.fitted_exponent - self.target_exponent) <= 0.2 * self.target_exponent

    @property
    def passed(self):
        fit_ok = self.exponent_ok or (self.detected and self.T_ext == 0.0)
        return self.detected and self.monotone_decay and fit_ok

    def rows(self):
        return [{"t": t, self.norm: n} for t, n in zip(self.times, self.norms)]

    def summary(self):
        val = math.nan if self.fitted_exponent is None else self.fitted_exponent
        return _summary("extinction", self.passed, "fitted_exponent", val,
                        0.2 * self.target_exponent)


def fit_extinction_exponent(t, y, T_guess):
    """Fit log y = c + k log(T - t) with T free; returns (k, T, (lo, hi))."""
    t = np.asarray(t, dtype=float)
    ly = np.log(np.asarray(y, dtype=float))

    def model(t, c, T, k):
        return c + k * np.log(np.maximum(T - t, 1e-300))

    # start T just beyond the last sample so the model is finite at every point
    T0 = max(T_guess, t[-1] + 1e-6 * max(t[-1], 1.0))
    k0 = (ly[0] - ly[-1]) / max(math.log((T0 - t[0]) / (T0 - t[-1])), 1e-12)
    popt, pcov = curve_fit(model, t, ly, p0=[ly[-1] - k0 * math.log(T0 - t[-1]), T0, k0],
                           maxfev=20000)
    k = float(popt[2])
    sd = float(np.sqrt(max(pcov[2, 2], 0.0))) if np.all(np.isfinite(pcov)) else math.inf
    return k, float(popt[1]), (k - 1.96 * sd, k + 1.96 * sd)


def run_extinction(params: Params, u0: RadialFunction, config: EvolutionConfig,
                   norm: str = "l2", threshold: float = EXTINCTION_REL) -> ExtinctionReport:
    """Evolve until the chosen norm drops below ``threshold`` times its initial value.

    ``norm="lnu"`` monitors the L^(nu+1) norm of the low-p case.  The exponent
    fit uses the samples whose norm is below 1e-2 of the initial value.
    """
    if norm not in ("l2", "lnu"):
        raise ValueError(f"norm must be 'l2' or 'lnu', got {norm!r}")
    cfg = replace(config, lam=params.lam)
    if not np.any(u0.values):
        return ExtinctionReport(params, True, 0.0, None, (math.nan, math.nan), True, norm, 0,
                                0.0, 0.0, np.array([0.0]), np.array([0.0]))
    problem = Problem(params, u0.grid, cfg)
    n0 = problem.diagnostics(0.0, u0.values, cfg.tau)[norm]

    def observer(state, row):
        return "extinct" if row[norm] <= threshold * n0 else None

    res = evolve(params, u0, cfg, observers=[observer])
    t = res.column("t")
    y = res.column(norm)
    detected = res.stopped_by == "extinct"
    monotone = bool(np.all(np.diff(y) <= 0.0))
    k, T, ci, nfit = None, None, (math.nan, math.nan), 0
    if not detected:
        warnings.warn(f"no extinction by t = {t[-1]:.6g}", ReportInconclusive, stacklevel=2)
    else:
        sel = (y > 0) & (y <= FIT_WINDOW * n0)
        nfit = int(sel.sum())
        if nfit >= MIN_FIT_SAMPLES:
            k, T, ci = fit_extinction_exponent(t[sel], y[sel], t[-1])
        else:
            T = float(t[-1])
    return ExtinctionReport(params, detected, T if detected else None, k, ci, monotone, norm,
                            nfit, float(y[-1]), float(n0), t, y)


@dataclass
class AmplitudeSweep:
    amplitudes: List[float]
    detected: List[bool]
    T_ext: List[Optional[float]]

    def rows(self):
        return [{"amplitude": a, "detected": int(d), "T_ext": math.nan if T is None else T}
                for a, d, T in zip(self.amplitudes, self.detected, self.T_ext)]


def concave_amplitude_sweep(params: Params, u0: RadialFunction, config: EvolutionConfig,
                            amplitudes=(0.1, 1.0, 10.0)) -> AmplitudeSweep:
    """Extinction with a source u^q, p - 1 < q <= 1, for a few initial amplitudes.

    Only records which amplitudes go extinct; no threshold is asserted.
    """
    q = config.source_q
    if q is None or not params.p - 1.0 < q <= 1.0:
        raise ValueError("the sweep needs a source exponent p - 1 < q <= 1")
    det, Ts = [], []
    for a in amplitudes:
        rep = run_extinction(params, u0.scaled(a), config)
        det.append(rep.detected)
        Ts.append(rep.T_ext)
    return AmplitudeSweep(list(amplitudes), det, Ts)


# ---------------------------------------------------------------------------
# blow-up of the truncated problems

@dataclass
class BlowupReport:
    params: Params
    n_levels: List[float]
    r0: float
    t0: float
    values: List[float]
    growth_ratios: List[float]
    log_envelope_ok: bool
    far_radius: float = math.nan
    far_values: List[float] = field(default_factory=list)

    @property
    def monotone(self):
        v = np.array(self.values)
        return bool(np.all(np.diff(v) >= 0.0))

    @property
    def total_growth(self):
        return self.values[-1] / self.values[0]

    @property
    def blowup_flag(self):
        return self.monotone and self.total_growth >= 1e3

    @property
    def converged(self):
        return bool(np.isfinite(self.values[-1]) and self.growth_ratios[-1] <= 1.01)

    @property
    def far_converged(self):
        f = self.far_values
        return len(f) > 1 and bool(np.isfinite(f[-1]) and f[-1] / f[-2] <= 1.01)

    def rows(self):
        out = []
        for i, (n, v) in enumerate(zip(self.n_levels, self.values)):
            out.append({"n": n, "r0": self.r0, "t0": self.t0, "value": v,
                        "ratio": math.nan if i == 0 else self.growth_ratios[i - 1],
                        "far_value": self.far_values[i] if self.far_values else math.nan})
        return out

    def summary(self, expect_blowup=True):
        ok = self.blowup_flag if expect_blowup else (not self.blowup_flag and self.converged)
        if expect_blowup:
            return _summary("blowup", ok, "growth_last_over_first", self.total_growth, 1e3)
        return _summary("blowup_control", ok, "last_ratio", self.growth_ratios[-1], 1.01)


def run_blowup(params: Params, u0: RadialFunction, n_levels: Sequence[float],
               probe: Tuple[Optional[float], float] = (None, 0.5),
               config: Optional[EvolutionConfig] = None, far_radius: float = 0.3,
               envelope_c: float = 1e-3, level: float = 1e12) -> BlowupReport:
    """Solve the problems with potential min{n, r^-ps} up to t0 for every level n.

    A level that exceeds ``level`` before t0 records +inf.  The envelope check
    asks u_n(r, t0) >= c t0 log(R / r) at the nodes with r <= R/10 for the
    largest finite level.
    """
    if list(n_levels) != sorted(n_levels):
        raise ValueError("n_levels must be increasing")
    grid = u0.grid
    r0, t0 = probe
    r0 = grid.nodes[0] if r0 is None else r0
    config = config or EvolutionConfig()
    values, far, profiles = [], [], []
    for n in n_levels:
        cfg = replace(config, lam=params.lam, t_end=t0, potential=PotentialSpec("minimum", n))
        res = evolve(params, u0, cfg, observers=[blowup_observer(level)])
        if res.stopped_by:
            values.append(math.inf)
            far.append(math.inf)
        else:
            values.append(eval_at(res.final.u, r0))
            far.append(eval_at(res.final.u, far_radius))
            profiles.append(res.final.u)
    v = np.array(values)
    with np.errstate(invalid="ignore", divide="ignore"):
        ratios = list(v[1:] / v[:-1])
    env_ok = False
    if profiles:
        u = profiles[-1]
        r = grid.nodes[grid.nodes <= 0.1 * grid.R]
        env_ok = bool(np.all(eval_at(u, r) >= envelope_c * t0 * np.log(grid.R / r)))
    return BlowupReport(params, list(n_levels), float(r0), float(t0), values, ratios, env_ok,
                        far_radius, far)


# ---------------------------------------------------------------------------
# self-similar supersolution

@dataclass
class SupersolutionReport:
    params: Params
    t0: float
    times: List[float]
    worst_ratio: float
    q_values: List[float]
    q_seminorms: List[List[float]]

    @property
    def dominated(self):
        return self.worst_ratio <= 1.02

    @property
    def q_growth(self):
        return max(max(s) / s[0] for s in self.q_seminorms)

    @property
    def passed(self):
        return self.dominated and self.q_growth <= 10.0

    def rows(self):
        out = []
        for i, t in enumerate(self.times):
            row = {"t": t}
            for q, s in zip(self.q_values, self.q_seminorms):
                row[f"seminorm_q{q:.6g}"] = s[i]
            out.append(row)
        return out

    def summary(self):
        return _summary("selfsim_supersolution", self.passed, "max_u_over_V", self.worst_ratio,
                        1.02)


def run_selfsim_supersolution(params: Params, config: EvolutionConfig, grid: RadialGrid,
                              t0: float = 0.02, cap: float = 10.0, samples: int = 5
                              ) -> SupersolutionReport:
    """Evolve from u0 = min(V(., t0), cap) cut off smoothly near R; compare with V.

    The comparison ``u(r, t) <= 1.02 V(r, t0 + t)`` is checked at every node at
    ``samples`` equally spaced times.  The q-seminorms use q in
    {(p2 + 1)/2, 0.9 p2} with kernel exponent N + qs.
    """
    ss = selfsim_build(params)
    r = grid.nodes
    cut = smooth_step((r / grid.R - 0.7) / 0.3)
    u0 = RadialFunction(grid, np.minimum(selfsim_value(ss, r, t0), cap) * cut)
    qs = [0.5 * (params.p2 + 1.0), 0.9 * params.p2]
    stamps = np.linspace(0.0, config.t_end, samples + 1)
    cfg = replace(config, lam=params.lam, potential=PotentialSpec("exact"))
    u = u0
    worst = 0.0
    semis = [[seminorm_general(params, u0, q, params.N + q * params.s)] for q in qs]
    for a, b in zip(stamps[:-1], stamps[1:]):
        res = evolve(params, u, replace(cfg, t_end=b - a))
        u = res.final.u
        V = selfsim_value(ss, r, t0 + b)
        inner = slice(0, grid.M - 1)
        worst = max(worst, float(np.max(u.values[inner] / V[inner])))
        for q, s in zip(qs, semis):
            s.append(seminorm_general(params, u, q, params.N + q * params.s))
    return SupersolutionReport(params, t0, list(stamps), worst, qs, semis)


# ---------------------------------------------------------------------------
# weighted spaces

@dataclass
class EquivalenceReport:
    beta: float
    alpha: float
    pairs: Dict[str, Tuple[float, float]]
    ratio_min: float
    ratio_max: float
    refined_ratio_min: float = math.nan
    refined_ratio_max: float = math.nan

    @property
    def spread(self):
        return self.ratio_max / self.ratio_min

    @property
    def refined_spread(self):
        return self.refined_ratio_max / self.refined_ratio_min

    @property
    def refinement_change(self):
        return abs(self.refined_spread / self.spread - 1.0)

    @property
    def passed(self):
        finite = np.isfinite(self.spread) and self.ratio_min > 0
        if self.beta == 0.0:
            return finite and self.ratio_min == 1.0 and self.ratio_max == 1.0
        return finite and self.refinement_change <= 0.10

    def rows(self):
        return [{"beta": self.beta, "alpha": self.alpha, "profile": k, "weighted": a,
                 "e_alpha": b, "ratio": a / b} for k, (a, b) in self.pairs.items()]

    def summary(self):
        return _summary(f"norm_equivalence_beta{self.beta:g}", self.passed, "refinement_change",
                        self.refinement_change, 0.10)


def _equivalence_pairs(params, beta, profiles):
    alpha = -2.0 * beta / params.p
    out = {}
    for name, u in profiles.items():
        a = seminorm_general(params, u, params.p, params.mu, beta)
        b = e_alpha_seminorm(params, u, alpha)
        out[name] = (a, b)
    return out


def run_norm_equivalence(params: Params, beta_list: Sequence[float], grid: RadialGrid,
                         profiles: Optional[Callable] = None) -> List[EquivalenceReport]:
    """Compare the weighted seminorm with the E_alpha seminorm, alpha = -2 beta / p.

    ``profiles`` maps a grid to a name -> profile dict (default
    :func:`profile_family`); the comparison is repeated on the refined grid.
    """
    profiles = profiles or (lambda g: profile_family(g, params))
    lo, hi = -params.ps, 0.5 * (params.N - params.ps)
    reports = []
    for beta in beta_list:
        if not lo < beta < hi:
            raise ValueError(f"beta must lie in ({lo:g}, {hi:g}), got {beta}")
        pairs = _equivalence_pairs(params, beta, profiles(grid))
        fine = _equivalence_pairs(params, beta, profiles(grid.refine()))
        r = [a / b for a, b in pairs.values()]
        rf = [a / b for a, b in fine.values()]
        reports.append(EquivalenceReport(beta, -2.0 * beta / params.p, pairs, min(r), max(r),
                                         min(rf), max(rf)))
    return reports


@dataclass
class DivergenceReport:
    beta: float
    L_values: List[float]
    values: List[float]

    @property
    def ratios(self):
        v = self.values
        return [b / a for a, b in zip(v[:-1], v[1:])]

    @property
    def diverging(self):
        return all(r >= 1.5 for r in self.ratios)

    @property
    def log_signature(self):
        """(v(L2) - v(L1)) / (v(L3) - v(L2)) for three consecutive decades."""
        v = self.values
        return (v[1] - v[0]) / (v[2] - v[1])

    def rows(self):
        return [{"beta": self.beta, "L": L, "value": v} for L, v in zip(self.L_values, self.values)]

    def summary(self):
        return _summary(f"degenerate_beta{self.beta:g}", self.diverging, "min_growth_ratio",
                        min(self.ratios), 1.5)


def run_degenerate_divergence(params: Params, beta: float, M: int = 120,
                              L_values=(10.0, 100.0, 1000.0), g: float = 2.0) -> DivergenceReport:
    """Weighted seminorm of the B_1/B_4 bump with the exterior truncated at L."""
    grid = build_grid(4.0, M, g)
    u = bump(grid)
    vals = [seminorm_general(params, u, params.p, params.mu, beta, L=L) for L in L_values]
    return DivergenceReport(beta, list(L_values), vals)


# ---------------------------------------------------------------------------
# improved Hardy inequality

@dataclass
class ImprovedHardyReport:
    q_values: List[float]
    rows_: List[dict]

    @property
    def worst_relative_remainder(self):
        return min(r["remainder"] / r["half_seminorm"] for r in self.rows_)

    @property
    def min_ratio(self):
        return min(r["ratio"] for r in self.rows_)

    @property
    def passed(self):
        return self.worst_relative_remainder >= -0.02

    def rows(self):
        return self.rows_

    def summary(self):
        return _summary("improved_hardy", self.passed, "min_remainder_over_half_seminorm",
                        self.worst_relative_remainder, -0.02)


def omega_seminorm(params: Params, u: RadialFunction, q_order: float) -> float:
    """Seminorm with power p and kernel exponent N + q s over the ball only."""
    rule = pair_rule(u.grid, params.N, params.p, params.N + q_order * params.s)
    return float(np.dot(rule.w, np.abs(rule.D @ u.values) ** params.p))


def run_improved_hardy(params: Params, q_list: Sequence[float], grid: RadialGrid,
                       profiles: Optional[Dict[str, RadialFunction]] = None
                       ) -> ImprovedHardyReport:
    """Remainder of the Hardy inequality against a lower-order seminorm on the ball."""
    Lam = hardy_constant(params)
    profiles = profiles or profile_family(grid, params)
    rows = []
    for name, u in profiles.items():
        half = 0.5 * gagliardo(params, u)
        rem = half - Lam * hardy_term(params, u, params.p)
        for q in q_list:
            if not 1.0 < q < params.p:
                raise ValueError(f"q must lie in (1, p), got {q}")
            sq = omega_seminorm(params, u, q)
            rows.append({"profile": name, "q": q, "half_seminorm": half, "remainder": rem,
                         "omega_seminorm": sq, "ratio": rem / sq})
    return ImprovedHardyReport(list(q_list), rows)


# ---------------------------------------------------------------------------
# global bound for low p

@dataclass
class GronwallReport:
    """Squared L2 norm against two envelopes built from the same beta(t).

    ``literal_bound`` is beta(t) + int_0^t beta(s) e^(a s) ds;
    ``standard_bound`` is the form Gronwall's lemma yields,
    beta(t) + int_0^t a beta(s) e^(a (t - s)) ds.  Only the latter is asserted.
    """

    times: np.ndarray
    l2_sq: np.ndarray
    literal_bound: np.ndarray
    standard_bound: np.ndarray

    @staticmethod
    def _margin(bound, y, t):
        later = t > 0
        if not np.any(later):
            return 0.0
        return float(np.min((bound[later] - y[later]) / bound[later]))

    @property
    def margin(self):
        return self._margin(self.standard_bound, self.l2_sq, self.times)

    @property
    def literal_margin(self):
        return self._margin(self.literal_bound, self.l2_sq, self.times)

    @property
    def passed(self):
        return self.margin >= 0.0

    def rows(self):
        return [{"t": t, "l2_sq": y, "literal_bound": b, "standard_bound": s}
                for t, y, b, s in zip(self.times, self.l2_sq, self.literal_bound,
                                      self.standard_bound)]

    def summary(self):
        return _summary("global_gronwall", self.passed, "min_relative_margin", self.margin, 0.0)


def gronwall_bound(params: Params, l2_0_sq: float, R: float, t):
    """Right side beta(t) + int_0^t beta(s) e^(a s) ds with a = lambda p / 2.

    Also returns the textbook form beta(t) + int_0^t a beta(s) e^(a (t - s)) ds
    for the same beta, which is the bound Gronwall's lemma actually gives.
    """
    p, lam = params.p, params.lam
    e = params.N - 1.0 - 2.0 * params.ps / (2.0 - p)
    if not e > -1.0:
        raise ValueError("the weight integral diverges at the origin")
    c = lam * (2.0 - p) / 2.0 * params.omega_N * R ** (e + 1.0) / (e + 1.0)
    a = lam * p / 2.0
    t = np.asarray(t, dtype=float)
    beta = l2_0_sq + c * t
    if a == 0.0:
        return beta + l2_0_sq * t + 0.5 * c * t * t, beta
    # int_0^t (b0 + c s) e^(a s) ds in closed form
    spec = beta + (l2_0_sq / a) * np.expm1(a * t) + c * (
        (t * np.exp(a * t)) / a - np.expm1(a * t) / a ** 2)
    # int_0^t a (b0 + c s) e^(a (t - s)) ds = b0 (e^(at) - 1) + c ((e^(at) - 1)/a - t)
    std = beta + l2_0_sq * np.expm1(a * t) + c * (np.expm1(a * t) / a - t)
    return spec, std


def run_global_gronwall(params: Params, u0: RadialFunction, config: EvolutionConfig
                        ) -> GronwallReport:
    cfg = replace(config, lam=params.lam, potential=PotentialSpec("exact"))
    res = evolve(params, u0, cfg)
    t = res.column("t")
    y = res.column("l2") ** 2
    spec, std = gronwall_bound(params, float(y[0]), u0.grid.R, t)
    return GronwallReport(t, y, spec, std)


# ---------------------------------------------------------------------------
# no extinction with a strong concave source

@dataclass
class NoExtinctionReport:
    times: np.ndarray
    l2: np.ndarray
    positive_after: bool
    monotone: bool
    residual: float
    converged: bool
    steady: Optional[RadialFunction] = field(repr=False, default=None)

    @property
    def passed(self):
        return self.converged and self.positive_after and self.monotone and self.residual <= 0.02

    def rows(self):
        return [{"t": t, "l2": y} for t, y in zip(self.times, self.l2)]

    def summary(self):
        return _summary("no_extinction", self.passed, "steady_residual", self.residual, 0.02)


def run_no_extinction(params: Params, config: EvolutionConfig, grid: RadialGrid,
                      t_check: float = 1.0, rate_tol: float = 1e-8) -> NoExtinctionReport:
    """Grow from zero data under a source u^q with q < p - 1 and check positivity."""
    cfg = replace(config, lam=params.lam)
    trace = []
    steady, converged = None, True
    try:
        steady = steady_state(params, grid, cfg, rate_tol=rate_tol, trace=trace)
    except NonConvergence:
        converged = False
    t = np.array([r["t"] for r in trace])
    y = np.array([r["l2"] for r in trace])
    pos = all(r["min_inner"] > 0 for r in trace if r["t"] >= t_check)
    reached = bool(t.size and t[-1] >= t_check)
    mono = bool(np.all(np.diff(y) >= -1e-12 * np.max(y))) if y.size else False
    res = weak_residual(params, steady, cfg) if steady is not None else math.inf
    return NoExtinctionReport(t, y, pos and reached, mono, res, converged, steady)


# ---------------------------------------------------------------------------
# weighted-solution regime

@dataclass
class WeightedRegimeReport:
    alpha: float
    times: List[float]
    weighted_l2: List[float]
    e_alpha: List[float]

    @property
    def bounded(self):
        return (max(self.weighted_l2) <= 10.0 * max(self.weighted_l2[0], 1e-300)
                and all(np.isfinite(self.e_alpha)))

    def rows(self):
        return [{"t": t, "weighted_l2": a, "e_alpha": b}
                for t, a, b in zip(self.times, self.weighted_l2, self.e_alpha)]

    def summary(self):
        return _summary("weighted_regime", self.bounded, "weighted_l2_growth",
                        max(self.weighted_l2) / self.weighted_l2[0], 10.0)


def weighted_alpha_threshold(params: Params) -> float:
    return 2.0 * params.s / (2.0 - params.p) - params.N / params.p


def run_weighted_regime(params: Params, u0: RadialFunction, config: EvolutionConfig,
                        n: float = 1e3, alpha_offset: float = 0.1, samples: int = 4
                        ) -> WeightedRegimeReport:
    """Evolve with the regularized potential at fixed n and track the weighted norms."""
    alpha = weighted_alpha_threshold(params) + alpha_offset
    cfg = replace(config, lam=params.lam, potential=PotentialSpec("regularized", n))
    stamps = np.linspace(0.0, config.t_end, samples + 1)
    u = u0
    wl, ea = [weighted_l2(params, u0, alpha)], [e_alpha_seminorm(params, u0, alpha)]
    for a, b in zip(stamps[:-1], stamps[1:]):
        u = evolve(params, u, replace(cfg, t_end=b - a)).final.u
        wl.append(weighted_l2(params, u, alpha))
        ea.append(e_alpha_seminorm(params, u, alpha))
    return WeightedRegimeReport(alpha, list(stamps), wl, ea)
