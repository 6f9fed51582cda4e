"""Angular kernel, sharp Hardy constant and self-similar profile data.

The radial reduction of the Gagliardo kernel ``|x - y|**-mu`` gives

    K(sigma) = int_{|y'|=1} |e - sigma y'|**-mu dH(y')
             = |S^{N-2}| int_0^pi sin(xi)**(N-2) (1 - 2 sigma cos(xi) + sigma**2)**(-mu/2) dxi,

with the symmetry ``K(1/x) = x**mu K(x)``.  ``kernel_K`` evaluates the angular
integral by quadrature.  ``KernelTable`` serves bulk evaluations through the
equivalent hypergeometric form ``|S^{N-1}| 2F1(mu/2, mu/2 - N/2 + 1; N/2; sigma**2)``
and memoises them; the two routes are cross-checked in the test-suite.
"""

import math
import threading
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gamma as gamma_fn, gammaln, hyp2f1, rgamma

from .quad import (BASE_ORDER, NonConvergence, SingularIntegrand, composite_rule,
                   integrate_graded, integrate_tail)

KERNEL_TOL = 1e-10
CONSTANT_TOL = 1e-8
FOLD_FLOOR = 1e-12


class SingularArgument(ValueError):
    pass


class NoBracket(ValueError):
    pass


class NotSelfSimilarRegime(ValueError):
    pass


def sphere_area(n: int) -> float:
    """Surface measure of the unit sphere in R^n (n = 1 gives |S^0| = 2)."""
    return 2.0 * math.exp(0.5 * n * math.log(math.pi) - gammaln(0.5 * n))


@dataclass(frozen=True)
class Params:
    N: int
    s: float
    p: float
    lam: float = 0.0

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 2:
            raise ValueError(f"N must be an integer >= 2, got {self.N}")
        if not 0.0 < self.s < 1.0:
            raise ValueError(f"s must lie in (0, 1), got {self.s}")
        if not self.p > 1.0:
            raise ValueError(f"p must be > 1, got {self.p}")
        if not self.p * self.s < self.N:
            raise ValueError(
                f"ps must be < N (p < N/s = {self.N / self.s:g} required), "
                f"got ps = {self.p * self.s:g}")
        if self.lam < 0:
            raise ValueError(f"lambda must be >= 0, got {self.lam}")

    @property
    def ps(self):
        return self.p * self.s

    @property
    def mu(self):
        return self.N + self.ps

    @property
    def p_star(self):
        return self.p * self.N / (self.N - self.ps)

    @property
    def gamma_ss(self):
        if self.p == 2.0:
            return None
        return -self.ps / (2.0 - self.p)

    @property
    def gamma_bar(self):
        if self.p >= 2.0:
            return None
        return self.ps / (2.0 - self.p)

    @property
    def eta_max(self):
        return (self.N - self.ps) / self.p

    @property
    def eta_limit(self):
        """Right end of the admissible range for Theta, (N - ps)/(p - 1)."""
        return (self.N - self.ps) / (self.p - 1.0)

    @property
    def p_crit_low(self):
        return 2.0 * self.N / (self.N + 2.0 * self.s)

    @property
    def p_crit_mid(self):
        return 2.0 * self.N / (self.N + self.s)

    @property
    def p2(self):
        return (self.N * (self.p - 1.0) + self.ps) / (self.N + self.s)

    @property
    def omega_N(self):
        return sphere_area(self.N)

    @property
    def nu_plus_1(self):
        if self.p >= 2.0:
            return 2.0
        return self.N * (2.0 - self.p) / self.ps

    def with_lambda(self, lam):
        return Params(self.N, self.s, self.p, lam)


def _kernel_prefactor(N):
    return sphere_area(N - 1)


def kernel_K(params: Params, mu: float, sigma: float, tol: float = KERNEL_TOL) -> float:
    """Angular kernel by direct quadrature of the xi-integral.

    The peak of the integrand at ``xi = 0`` has width ``|1 - sigma|``; the
    interval is cut at dyadic multiples of that width and every cell is
    bisected until the composite sum settles.
    """
    N = params.N
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    if sigma == 1.0:
        raise SingularArgument("K diverges at sigma = 1 like |1 - sigma|**-(mu - N + 1)")
    if not mu > N - 1:
        raise ValueError(f"mu must exceed N - 1 = {N - 1}, got {mu}")
    d = abs(1.0 - sigma)
    breaks = [0.0]
    w = d
    while w < math.pi:
        breaks.append(w)
        w *= 2.0
    breaks.append(math.pi)
    breaks = np.array(breaks)

    def f(xi):
        den = d * d + 4.0 * sigma * np.sin(0.5 * xi) ** 2
        return np.sin(xi) ** (N - 2) * den ** (-0.5 * mu)

    prev = None
    for _ in range(30):
        x, wts = composite_rule(breaks, BASE_ORDER)
        cur = float(np.dot(f(x), wts))
        if prev is not None and abs(cur - prev) <= tol * abs(cur):
            return _kernel_prefactor(N) * cur
        prev = cur
        breaks = np.sort(np.concatenate([breaks, 0.5 * (breaks[1:] + breaks[:-1])]))
    raise NonConvergence(f"kernel quadrature did not settle at sigma={sigma}")


def kernel_hyp(N: int, mu: float, sigma):
    """Vectorised kernel through the Gauss hypergeometric function."""
    sigma = np.asarray(sigma, dtype=float)
    out = np.empty_like(sigma)
    inner = sigma < 1.0
    outer = ~inner
    area = sphere_area(N)
    a, b, c = 0.5 * mu, 0.5 * mu - 0.5 * N + 1.0, 0.5 * N
    si = sigma[inner]
    out[inner] = area * hyp2f1(a, b, c, si * si)
    so = 1.0 / sigma[outer]
    out[outer] = area * hyp2f1(a, b, c, so * so) * so ** mu
    if np.any(sigma == 1.0):
        raise SingularArgument("K diverges at sigma = 1")
    return out


def kernel_near_one(N: int, mu: float, delta):
    """``K(1 - delta)`` for small ``0 < delta < 1`` given the offset exactly.

    Uses the connection formula of 2F1 at ``z = 1`` in the variable
    ``w = 1 - sigma**2 = delta (2 - delta)``, so no accuracy is lost forming
    ``1 - sigma``.  Falls back to :func:`kernel_hyp` when ``mu - N`` is an
    integer and the formula degenerates.
    """
    delta = np.asarray(delta, dtype=float)
    a, b, c = 0.5 * mu, 0.5 * mu - 0.5 * N + 1.0, 0.5 * N
    e = c - a - b
    if abs(e - round(e)) < 1e-6:
        return kernel_hyp(N, mu, 1.0 - delta)
    w = delta * (2.0 - delta)
    regular = gamma_fn(c) * gamma_fn(e) * rgamma(c - a) * rgamma(c - b) * hyp2f1(a, b, 1.0 - e, w)
    singular = gamma_fn(c) * gamma_fn(-e) * rgamma(a) * rgamma(b) * hyp2f1(c - a, c - b, 1.0 + e, w)
    return sphere_area(N) * (regular + w ** e * singular)


@dataclass
class KernelTable:
    """Memoised ``K(sigma)`` for one ``(N, mu)`` pair; safe for concurrent use."""

    N: int
    mu: float
    _cache: dict = field(default_factory=dict, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    @classmethod
    def for_params(cls, params: Params, mu=None):
        return cls(params.N, params.mu if mu is None else mu)

    def __call__(self, sigma):
        sigma = np.asarray(sigma, dtype=float)
        flat = sigma.ravel()
        if flat.size > 4096:
            # bulk requests come from rule assembly and are not repeated
            return kernel_hyp(self.N, self.mu, sigma)
        with self._lock:
            missing = [x for x in set(flat.tolist()) if x not in self._cache]
        if missing:
            vals = kernel_hyp(self.N, self.mu, np.array(missing))
            with self._lock:
                self._cache.update(zip(missing, vals.tolist()))
        with self._lock:
            return np.array([self._cache[x] for x in flat.tolist()]).reshape(sigma.shape)

    def __len__(self):
        return len(self._cache)

    def pairs(self):
        with self._lock:
            return sorted(self._cache.items())


_TABLES = {}
_TABLES_LOCK = threading.Lock()


def kernel_table(N, mu) -> KernelTable:
    key = (int(N), float(mu))
    with _TABLES_LOCK:
        if key not in _TABLES:
            _TABLES[key] = KernelTable(*key)
        return _TABLES[key]


def _kernel(params, mu=None):
    mu = params.mu if mu is None else mu
    return lambda x: kernel_hyp(params.N, mu, x)


def _pow_minus_one(x, e):
    """``x**e - 1`` without cancellation for ``x`` near 1."""
    return np.expm1(e * np.log(x))


def hardy_constant(params: Params, tol: float = CONSTANT_TOL) -> float:
    """Sharp constant as the (0, 1) integral of the radial Hardy functional."""
    K = _kernel(params)
    ps, p, eta = params.ps, params.p, params.eta_max

    def f(sig):
        return sig ** (ps - 1.0) * np.abs(_pow_minus_one(sig, eta)) ** p * K(sig)

    g = SingularIntegrand(f, left_exponent=ps - 1.0, right_exponent=p - 1.0 - ps)
    return integrate_graded(g, 0.0, 1.0, tol)


def _tail_form(params, eta, beta, tol):
    """int_1^inf K (s^eta - 1)^(p-1) (s^(N-1-beta-eta(p-1)) - s^(beta+ps-1)) ds."""
    N, p, ps = params.N, params.p, params.ps
    K = _kernel(params)
    e_hi = N - 1.0 - beta - eta * (p - 1.0)
    e_lo = beta + ps - 1.0
    decay = max(-1.0 - ps - beta, eta * (p - 1.0) + beta - N - 1.0)
    if not decay < -1.0:
        raise ValueError(f"tail integral diverges for eta={eta}, beta={beta}")

    def f(sig):
        ls = np.log(sig)
        growth = np.expm1(eta * ls) ** (p - 1.0)
        # s^a - s^b = s^b (s^(a-b) - 1)
        diff = np.exp(e_lo * ls) * np.expm1((e_hi - e_lo) * ls)
        return K(sig) * growth * diff

    g = SingularIntegrand(f, left_exponent=p - 1.0 - ps, right_exponent=decay)
    return integrate_tail(g, 1.0, tol, atol=1e-300)


def theta(params: Params, eta: float, tol: float = CONSTANT_TOL) -> float:
    """Tail functional whose maximum over eta >= 0 is the Hardy constant."""
    if eta < 0:
        raise ValueError(f"eta must be >= 0, got {eta}")
    if eta == 0.0:
        return 0.0
    return _tail_form(params, eta, 0.0, tol)


def theta_roots(params: Params, tol: float = 1e-8):
    """The two solutions of Theta(eta) = lambda on either side of eta_max."""
    lam = params.lam
    Lam = hardy_constant(params, tol=1e-12)
    if not 0.0 < lam < Lam:
        raise NoBracket(f"need 0 < lambda < Lambda = {Lam:.10g}, got {lam}")
    em = params.eta_max

    def F(e):
        return theta(params, e, tol=1e-13) - lam

    def bisect(a, b):
        fa = F(a)
        for _ in range(200):
            m = 0.5 * (a + b)
            fm = F(m)
            if abs(fm) <= 0.01 * tol * lam or b - a < 1e-15 * max(1.0, abs(b)):
                return m
            if (fm > 0) == (fa > 0):
                a, fa = m, fm
            else:
                b = m
        return 0.5 * (a + b)

    eta1 = bisect(0.0, em)
    lim = params.eta_limit
    k, H = 1, em + 0.5 * (lim - em)
    while F(H) >= 0:
        k += 1
        H = em + (lim - em) * (1.0 - 0.5 ** k)
        if k > 60:
            raise NoBracket("could not bracket the upper root")
    eta2 = bisect(em, H)
    return eta1, eta2


def psi1(params: Params, tol: float = CONSTANT_TOL) -> float:
    if params.p >= 2.0:
        raise NotSelfSimilarRegime("psi1 needs p < 2")
    return -theta(params, params.gamma_bar, tol)


def upsilon(params: Params, beta: float, gamma: float, tol: float = CONSTANT_TOL) -> float:
    """Weighted Hardy functional Upsilon(gamma) for the weight |x|^-beta |y|^-beta."""
    lo, hi = -params.ps, 0.5 * (params.N - params.ps)
    if not lo < beta < hi:
        raise ValueError(f"beta must lie in ({lo:g}, {hi:g}), got {beta}")
    if not gamma > 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    return _tail_form(params, gamma, beta, tol)


@dataclass(frozen=True)
class SelfSimilar:
    params: Params
    gamma: float
    alpha_t: float
    B: float
    A: float

    def value(self, r, t):
        return selfsim_value(self, r, t)


def selfsim_build(params: Params, tol: float = CONSTANT_TOL) -> SelfSimilar:
    p = params.p
    if p >= 2.0:
        raise NotSelfSimilarRegime("self-similar profiles need p < 2")
    gam = -params.ps / (2.0 - p)
    alpha_t = 1.0 / (2.0 - p)
    denom = psi1(params, tol) + params.lam
    if not denom > 0:
        raise NotSelfSimilarRegime(f"Psi1 + lambda = {denom:.6g} <= 0: no positive amplitude")
    B = 1.0 / ((2.0 - p) * denom)
    return SelfSimilar(params, gam, alpha_t, B, B ** (1.0 / (p - 2.0)))


def selfsim_value(ss: SelfSimilar, r, t):
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0) or np.any(np.asarray(t) <= 0):
        raise ValueError("r and t must be positive")
    p = ss.params.p
    return ss.A * (t / r ** ss.params.ps) ** (1.0 / (2.0 - p))


def phi_p(t, p):
    """|t|^(p-2) t, with phi_p(0) = 0 for every p > 1."""
    t = np.asarray(t, dtype=float)
    return np.sign(t) * np.abs(t) ** (p - 1.0)


def _signed_pow(t, e):
    return np.sign(t) * np.abs(t) ** e


def power_operator_integral(params: Params, gamma: float, tol: float = 1e-11) -> float:
    """P.V. int_0^inf Phi_p(1 - sigma^gamma) sigma^(N-1) K(sigma) d sigma.

    The principal value pairs ``sigma = 1 - h`` with ``1 + h``; this is a
    different route from the ``sigma -> 1/sigma`` folding behind Theta.
    """
    N, p, ps = params.N, params.p, params.ps
    K = _kernel(params)

    def f(sig):
        return _signed_pow(-np.expm1(gamma * np.log(sig)), p - 1.0) * sig ** (N - 1.0) * K(sig)

    if gamma < 0:
        # 1 - s^g = -s^g (1 - s^-g): keep the large power out of the subtraction
        lead = gamma * (p - 1.0) + N - 1.0

        def head_f(sig):
            return -sig ** lead * (-np.expm1(-gamma * np.log(sig))) ** (p - 1.0) * K(sig)
    else:
        lead, head_f = N - 1.0, f
    head = integrate_graded(SingularIntegrand(head_f, left_exponent=lead), 0.0, 0.5, tol)

    def near(h, sign):
        # sigma = 1 + sign*h with every factor built from h itself
        ls = np.log1p(sign * h)
        k = kernel_near_one(N, params.mu, h if sign < 0 else h / (1.0 + h))
        if sign > 0:
            k = k * np.exp(-params.mu * ls)
        return _signed_pow(-np.expm1(gamma * ls), p - 1.0) * np.exp((N - 1.0) * ls) * k

    def folded(h):
        # the two sides cancel to O(h**(p - 1 - ps)); below FOLD_FLOOR the
        # remaining mass is O(FOLD_FLOOR**(p - ps)) and is dropped
        out = np.zeros_like(h)
        ok = h > FOLD_FLOOR
        hk = h[ok]
        out[ok] = near(hk, 1.0) + near(hk, -1.0)
        return out

    mid = integrate_graded(SingularIntegrand(folded, left_exponent=p - 1.0 - ps), 0.0, 0.5, tol,
                           atol=1e-300)
    decay = -1.0 - ps if gamma < 0 else gamma * (p - 1.0) - 1.0 - ps

    def g(x):
        return f(1.5 * x)

    tail = 1.5 * integrate_tail(SingularIntegrand(g, 0.0, decay), 1.0, tol)
    return head + mid + tail


def selfsim_residual(ss: SelfSimilar, r: float, A=None, tol: float = 1e-11) -> float:
    """Relative residual of the profile equation for F(r) = A r^gamma."""
    params = ss.params
    A = ss.A if A is None else A
    p = params.p
    F = A * r ** ss.gamma
    L = A ** (p - 1.0) * r ** (ss.gamma * (p - 1.0) - params.ps) * \
        power_operator_integral(params, ss.gamma, tol)
    R = ss.alpha_t * F + L - params.lam * F ** (p - 1.0) / r ** params.ps
    return R / (ss.alpha_t * F)
