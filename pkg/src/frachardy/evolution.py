"""Time integration of u_t + (-Delta)_p^s u = lambda a(r) u^(p-1) (+ u^q) on a ball.

Space is discretised by the mass-lumped Galerkin form of the operator,

    m_j dv_j/dt = -G_j(v) + lambda H_j(v) + m_j v_j^q,

where ``G`` is the gradient of ``(1/2p)[u]_{s,p}^p`` on the profile space and
``m`` the lumped radial mass.  The potential term ``H_j(v)`` integrates
``a(r) v^(p-1)`` against the j-th hat function with the same line quadrature
used for the Hardy term, so the discrete energy inherits the discrete Hardy
inequality.  The outermost node stays at zero.  Zero data under a sublinear
source start with the exact solution of v' = v^q.

Two steppers are provided.  ``explicit`` is forward Euler.  ``semi_implicit``
freezes the weights ``(|Dv|^2 + eps^2)^((p-2)/2)`` of the operator at the
current step and solves one symmetric positive definite system per step.  The
reaction terms are explicit in both.  Step sizes are controlled by the nodal
relative change.
"""

import math
from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional, Sequence

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .kernel import Params
from .radial import GalerkinOperator, RadialFunction, RadialGrid, hardy_term, line_rule

MAX_HALVINGS = 20


class StepFailure(RuntimeError):
    pass


class InnerDivergence(RuntimeError):
    pass


class NonConvergence(RuntimeError):
    pass


@dataclass(frozen=True)
class PotentialSpec:
    kind: str = "exact"
    n: float = math.inf

    def __post_init__(self):
        if self.kind not in ("regularized", "minimum", "exact"):
            raise ValueError(f"unknown potential kind {self.kind!r}")
        if self.kind != "exact" and not self.n > 0:
            raise ValueError(f"truncation level must be positive, got {self.n}")

    def coefficient(self, params: Params, r):
        r = np.asarray(r, dtype=float)
        w = r ** (-params.ps)
        if self.kind == "regularized":
            return 1.0 / (r ** params.ps + 1.0 / self.n)
        if self.kind == "minimum":
            return np.minimum(self.n, w)
        return w


@dataclass(frozen=True)
class EvolutionConfig:
    scheme: str = "semi_implicit"
    tau: float = 1e-4
    t_end: float = 1.0
    potential: PotentialSpec = field(default_factory=PotentialSpec)
    source_q: Optional[float] = None
    lam: float = 0.0
    safety: float = 0.05
    eps_reg: float = 1e-12
    inner_tol: float = 1e-10
    inner_max_iters: int = 50
    tau_max: float = math.inf
    tau_min: float = 1e-14
    grow: float = 1.25
    floor: float = 1e-3
    source_floor: float = 1e-30
    fixed_tau: bool = False
    max_steps: int = 1_000_000
    # below this fraction of the initial maximum the solution is taken as extinct
    zero_level: float = 1e-12

    def __post_init__(self):
        if self.scheme not in ("explicit", "semi_implicit"):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if not self.tau > 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if not 0.0 < self.safety < 1.0:
            raise ValueError(f"safety must lie in (0, 1), got {self.safety}")
        if self.lam < 0:
            raise ValueError(f"lambda must be >= 0, got {self.lam}")
        if self.t_end < 0:
            raise ValueError(f"t_end must be >= 0, got {self.t_end}")


DIAGNOSTIC_COLUMNS = ("t", "l2", "lnu", "seminorm_p", "hardy_term", "max_u", "tau")


@dataclass
class EvolutionState:
    t: float
    u: RadialFunction
    steps: int = 0
    tau: float = 0.0
    diagnostics: dict = field(default_factory=dict)

    @property
    def values(self):
        return self.u.values


class Problem:
    """Discrete right-hand side for one (params, grid, config) triple."""

    def __init__(self, params: Params, grid: RadialGrid, config: EvolutionConfig,
                 forcing: Optional[Callable[[float], np.ndarray]] = None):
        self.params = params
        self.grid = grid
        self.config = config
        self.op = GalerkinOperator.build(params, grid)
        self.mass = self.op.mass
        # the potential is integrated with the rule of the Hardy term, so the
        # discrete energy inherits the discrete Hardy inequality
        rule = line_rule(grid, params.N - 1.0 - params.ps)
        self.P = rule.P
        self.wa = params.omega_N * rule.w * rule.x ** params.ps * \
            config.potential.coefficient(params, rule.x)
        self.forcing = forcing
        self.free = np.arange(grid.M - 1)

    def potential(self, v):
        """Weak potential term int a(r) u^(p-1) phi_j dx for u >= 0."""
        return self.P.T @ (self.wa * np.maximum(self.P @ v, 0.0) ** (self.params.p - 1.0))

    def reaction(self, v, t):
        """Reaction lambda a v^(p-1) + v^q per unit lumped mass."""
        cfg = self.config
        vp = np.maximum(v, 0.0)
        if self.forcing is None:
            out = cfg.lam * self.potential(vp) / self.mass
        else:
            out = cfg.lam * self.forcing(t) / self.mass
        if cfg.source_q is not None:
            # the floor selects the positive branch when starting from zero
            out = out + np.maximum(vp, cfg.source_floor) ** cfg.source_q
        return out

    def rhs(self, v, t):
        return -self.op.apply(v) / self.mass + self.reaction(v, t)

    def diagnostics(self, t, v, tau):
        p = self.params
        m = self.mass
        nu1 = p.nu_plus_1
        u = RadialFunction(self.grid, v)
        return {
            "t": t,
            "l2": math.sqrt(float(np.dot(m, v * v))),
            "lnu": float(np.dot(m, np.abs(v) ** nu1)) ** (1.0 / nu1),
            "seminorm_p": self.op.seminorm(v),
            "hardy_term": hardy_term(p, u, p.p) if np.any(v) else 0.0,
            "max_u": float(np.max(v)),
            "tau": tau,
        }

    # -- single steps ---------------------------------------------------

    def _explicit(self, v, t, tau):
        w = v + tau * self.rhs(v, t)
        w[-1] = 0.0
        return w

    def _semi_implicit(self, v, t, tau):
        cfg = self.config
        f = self.free
        scale = float(np.max(np.abs(v))) or 1.0
        A = self.op.frozen(v, cfg.eps_reg * scale)
        K = A[np.ix_(f, f)] + np.diag(self.mass[f] / tau)
        b = self.mass[f] * (v[f] / tau + self.reaction(v, t)[f])
        try:
            c = cho_factor(K, lower=True, check_finite=True)
        except (LinAlgError, ValueError) as exc:
            raise InnerDivergence(f"frozen system not positive definite: {exc}") from exc
        w = np.zeros_like(v)
        w[f] = cho_solve(c, b)
        # one round of iterative refinement against the assembled system
        res = b - K @ w[f]
        w[f] += cho_solve(c, res)
        return w

    def advance(self, v, t, tau):
        if self.config.scheme == "explicit":
            return self._explicit(v, t, tau)
        return self._semi_implicit(v, t, tau)

    def change(self, v, w):
        ref = np.maximum(np.abs(v), self.config.floor * max(float(np.max(np.abs(v))), 1e-300))
        return float(np.max(np.abs(w - v) / ref))


def initial_state(problem: Problem, u0: RadialFunction, config: EvolutionConfig) -> EvolutionState:
    v = np.array(u0.values, dtype=float)
    if np.any(v < 0):
        raise ValueError("initial data must be nonnegative")
    v[-1] = 0.0
    return EvolutionState(0.0, RadialFunction(problem.grid, v), 0, config.tau,
                          problem.diagnostics(0.0, v, config.tau))


def step(params: Params, state: EvolutionState, config: EvolutionConfig,
         problem: Optional[Problem] = None) -> EvolutionState:
    """Advance one accepted step, halving tau until the step is acceptable."""
    problem = problem or _problem(params, state.u.grid, config)
    v = state.values
    t = state.t
    tau = min(state.tau or config.tau, config.tau_max)
    if config.t_end > t:
        tau = min(tau, config.t_end - t)
    if not np.any(v) and problem.forcing is None:
        if config.source_q is None:
            # zero data without a source is a fixed point of both schemes
            tau = max(tau, config.t_end - t)
            return EvolutionState(t + tau, state.u, state.steps + 1, tau,
                                  problem.diagnostics(t + tau, v, tau))
        q = config.source_q
        if q < 1.0:
            # leave zero along the exact flow of u' = u^q; an Euler step from the
            # floor value would start many orders of magnitude too low
            w = np.full_like(v, ((1.0 - q) * tau) ** (1.0 / (1.0 - q)))
            w[-1] = 0.0
            return EvolutionState(t + tau, RadialFunction(problem.grid, w), state.steps + 1,
                                  tau, problem.diagnostics(t + tau, w, tau))
    for _ in range(MAX_HALVINGS + 1):
        try:
            w = problem.advance(v, t, tau)
            ok = np.all(np.isfinite(w))
        except InnerDivergence:
            ok = False
        if ok:
            w = np.maximum(w, 0.0)
            change = problem.change(v, w) if np.any(v) else 0.0
            if config.fixed_tau or change <= config.safety:
                nxt = tau
                if not config.fixed_tau and change < 0.5 * config.safety:
                    nxt = min(tau * config.grow, config.tau_max)
                tn = t + tau
                return EvolutionState(tn, RadialFunction(problem.grid, w), state.steps + 1, nxt,
                                      problem.diagnostics(tn, w, tau))
        if config.fixed_tau and ok:
            break
        tau *= 0.5
        if tau < config.tau_min:
            break
    raise StepFailure(f"no acceptable step at t={t:.6g} after {MAX_HALVINGS} halvings")


_PROBLEMS = {}


def _problem(params, grid, config, forcing=None):
    key = (params, grid, config)
    if forcing is not None:
        return Problem(params, grid, config, forcing)
    if key not in _PROBLEMS:
        _PROBLEMS[key] = Problem(params, grid, config)
    return _PROBLEMS[key]


@dataclass
class EvolutionResult:
    rows: List[dict]
    final: EvolutionState
    stopped_by: Optional[str] = None
    history: Optional[List[np.ndarray]] = None
    times: Optional[List[float]] = None

    def column(self, name):
        return np.array([r[name] for r in self.rows])


def evolve(params: Params, u0: RadialFunction, config: EvolutionConfig,
           observers: Sequence[Callable] = (), record_every: float = 0.0,
           keep_history: bool = False, forcing=None) -> EvolutionResult:
    """Integrate to ``config.t_end`` or until an observer returns a truthy reason.

    Observers are called as ``obs(state, row)`` after every accepted step.
    A diagnostics row is recorded whenever at least ``record_every`` time has
    passed since the previous row, and always for the first and final states.
    Without forcing or source, a state whose maximum falls below
    ``config.zero_level`` times the initial maximum is replaced by zero.
    """
    problem = _problem(params, u0.grid, config, forcing)
    state = initial_state(problem, u0, config)
    zero_level = config.zero_level * float(np.max(state.values))
    rows = [state.diagnostics]
    history = [state.values.copy()] if keep_history else None
    times = [0.0] if keep_history else None
    stopped = None
    last = 0.0
    eps_t = 1e-12 * max(config.t_end, 1.0)
    while state.t < config.t_end - eps_t and state.steps < config.max_steps:
        state = step(params, state, config, problem)
        if 0.0 < state.diagnostics["max_u"] <= zero_level and forcing is None \
                and config.source_q is None:
            # finite-time extinction: the step controller cannot resolve the
            # last stretch, so the tail is set to the exact zero solution
            zero = np.zeros_like(state.values)
            state = EvolutionState(state.t, RadialFunction(problem.grid, zero), state.steps,
                                   state.tau, problem.diagnostics(state.t, zero, state.tau))
        if keep_history:
            history.append(state.values.copy())
            times.append(state.t)
        for obs in observers:
            reason = obs(state, state.diagnostics)
            if reason:
                stopped = reason if isinstance(reason, str) else getattr(obs, "__name__", "observer")
                break
        if stopped or state.t - last >= record_every or state.t >= config.t_end - eps_t:
            rows.append(state.diagnostics)
            last = state.t
        if stopped:
            break
    if rows[-1] is not state.diagnostics:
        rows.append(state.diagnostics)
    return EvolutionResult(rows, state, stopped, history, times)


# ---------------------------------------------------------------------------
# observers

def extinction_observer(l2_0: float, rel: float = 1e-8):
    def observer(state, row):
        return "extinct" if row["l2"] <= rel * l2_0 else None
    return observer


def blowup_observer(level: float = 1e12):
    def observer(state, row):
        return "blowup" if not np.isfinite(row["max_u"]) or row["max_u"] >= level else None
    return observer


# ---------------------------------------------------------------------------
# outer iteration in the truncation level

class _Trajectory:
    """Piecewise-linear-in-time record of a previous level."""

    def __init__(self, times, values):
        self.times = np.asarray(times)
        self.values = np.asarray(values)

    def __call__(self, t):
        i = int(np.searchsorted(self.times, t, side="right")) - 1
        if i < 0:
            return self.values[0]
        if i >= len(self.times) - 1:
            return self.values[-1]
        t0, t1 = self.times[i], self.times[i + 1]
        th = (t - t0) / (t1 - t0)
        return (1.0 - th) * self.values[i] + th * self.values[i + 1]


def picard_outer(params: Params, u0: RadialFunction, config: EvolutionConfig,
                 n_levels: Sequence[float]) -> List[EvolutionState]:
    """Lagged iteration: level k is driven by lambda u_{k-1}^(p-1)/(r^ps + 1/n_k).

    The recursion starts from the identically zero trajectory.  Time steps
    are fixed so every level is sampled at the same stamps.
    """
    if list(n_levels) != sorted(n_levels):
        raise ValueError("n_levels must be increasing")
    p = params.p
    M = u0.grid.M
    steps = int(round(config.t_end / config.tau))
    times = np.arange(steps + 1) * config.tau
    prev = _Trajectory(times, np.zeros((steps + 1, M)))
    finals = []
    for n in n_levels:
        cfg = replace(config, potential=PotentialSpec("regularized", n), fixed_tau=True)
        lagged = prev

        problem = Problem(params, u0.grid, cfg)

        def forcing(t, lagged=lagged, problem=problem):
            return problem.potential(lagged(t))

        res = evolve(params, u0, cfg, keep_history=True, forcing=forcing)
        prev = _Trajectory(res.times, res.history)
        finals.append(res.final)
    return finals


def steady_state(params: Params, grid: RadialGrid, config: EvolutionConfig,
                 rate_tol: float = 1e-8, trace: Optional[list] = None) -> RadialFunction:
    """Evolve from zero until the relative L2 change per unit time drops below ``rate_tol``."""
    if config.source_q is None or not config.source_q < params.p - 1.0:
        raise ValueError("steady_state needs a source exponent q < p - 1")
    problem = _problem(params, grid, config)
    state = initial_state(problem, RadialFunction.zeros(grid), config)
    prev_l2 = 0.0
    while state.t < config.t_end and state.steps < config.max_steps:
        old = state
        state = step(params, state, config, problem)
        l2 = state.diagnostics["l2"]
        if trace is not None:
            trace.append(dict(state.diagnostics, min_inner=float(np.min(state.values[:-1]))))
        dt = state.t - old.t
        if l2 > 0 and prev_l2 > 0 and abs(l2 - prev_l2) / (l2 * dt) <= rate_tol:
            return state.u
        prev_l2 = l2
    raise NonConvergence(f"not stationary by t = {state.t:.6g}")


def weak_residual(params: Params, w: RadialFunction, config: EvolutionConfig) -> float:
    """Relative mismatch between the operator and the reaction at a profile."""
    problem = _problem(params, w.grid, config)
    v = w.values
    f = problem.free
    lhs = problem.op.apply(v)[f]
    rhs = (problem.mass * problem.reaction(v, 0.0))[f]
    m = problem.mass[f]
    num = math.sqrt(float(np.sum((lhs - rhs) ** 2 / m)))
    den = math.sqrt(float(np.sum(rhs ** 2 / m)))
    return num / den
