"""Radial profiles on a ball and the nonlocal quantities built from them.

A profile is stored by its values at the nodes ``r_1 < ... < r_M = R`` of a
graded grid.  It is constant on ``(0, r_1]``, piecewise linear on
``[r_1, R]`` and zero outside the ball.  Profiles are expected to vanish at
``R`` (the exterior condition); seminorms refuse profiles that do not.

After integrating out the angles, the weighted Gagliardo seminorm reduces to

    S = omega_N  int int |u(r) - u(rho)|^q (r rho)^(N-1-beta) r^-mu K(rho/r) dr drho

over the quarter plane.  The integral splits into pairs of grid cells inside
the ball and a one-dimensional exterior part.  ``PairRule`` stores it as a
point rule ``S(v) = sum w_a |(D v)_a|^q + sum wt_b |(P v)_b|^q``.  The point
rule also supplies the gradient and the frozen-weight matrices used by the time
stepping.
"""

import csv
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .kernel import Params, kernel_hyp, kernel_near_one, sphere_area
from .quad import (DivergentIntegrand, SingularIntegrand, composite_rule, gauss_legendre,
                   geometric_rule, integrate_graded, jacobi01)

FAR_RATIO = 1.0
NEAR_ORDER = 10
EXTERIOR_ORDER = 8
CSV_DIGITS = 17
FOLD_LEVELS = 24


class ZeroDenominator(ZeroDivisionError):
    pass


# ---------------------------------------------------------------------------
# grids and profiles

@dataclass(frozen=True)
class RadialGrid:
    R: float
    M: int
    g: float = 3.0

    def __post_init__(self):
        if not self.R > 0:
            raise ValueError(f"R must be positive, got {self.R}")
        if int(self.M) != self.M or self.M < 2:
            raise ValueError(f"M must be an integer >= 2, got {self.M}")
        if not self.g >= 1.0:
            raise ValueError(f"grading must be >= 1, got {self.g}")

    @property
    def nodes(self) -> np.ndarray:
        return _nodes(self.R, self.M, self.g)

    @property
    def edges(self) -> np.ndarray:
        """Cell boundaries ``0, r_1, ..., r_M``; cell 0 is the constant cell."""
        return np.concatenate([[0.0], self.nodes])

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.edges)

    def refine(self, factor=2):
        return RadialGrid(self.R, self.M * factor, self.g)

    def cell_of(self, r):
        """Cell index for each radius (radii beyond R map to M, the exterior)."""
        r = np.asarray(r, dtype=float)
        return np.searchsorted(self.nodes, r, side="left")


@lru_cache(maxsize=64)
def _nodes(R, M, g):
    j = np.arange(1, M + 1, dtype=float)
    x = R * (j / M) ** g
    x[-1] = R
    return x


def build_grid(R: float, M: int, g: float = 3.0) -> RadialGrid:
    if M < 8:
        raise ValueError(f"M must be >= 8, got {M}")
    return RadialGrid(float(R), int(M), float(g))


@dataclass
class RadialFunction:
    grid: RadialGrid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.M,):
            raise ValueError(f"expected {self.grid.M} values, got shape {self.values.shape}")

    @classmethod
    def from_callable(cls, grid, fn):
        vals = np.array(fn(grid.nodes), dtype=float)
        return cls(grid, vals)

    @classmethod
    def zeros(cls, grid):
        return cls(grid, np.zeros(grid.M))

    def __call__(self, r):
        return eval_at(self, r)

    def scaled(self, c):
        return RadialFunction(self.grid, c * self.values)

    def with_values(self, values):
        return RadialFunction(self.grid, values)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["r", "value"])
            for r, v in zip(self.grid.nodes, self.values):
                w.writerow([format_number(r), format_number(v)])

    @classmethod
    def from_csv(cls, path, grid):
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        r = np.array([float(x["r"]) for x in rows])
        if r.shape != grid.nodes.shape or not np.array_equal(r, grid.nodes):
            raise ValueError("CSV radii do not match the grid")
        return cls(grid, np.array([float(x["value"]) for x in rows]))


def format_number(x) -> str:
    return format(float(x), f".{CSV_DIGITS}g")


def eval_at(u: RadialFunction, r):
    """Value of the profile at radius ``r`` (scalar or array)."""
    scalar = np.ndim(r) == 0
    r = np.atleast_1d(np.asarray(r, dtype=float))
    if np.any(r <= 0):
        raise ValueError("radii must be positive")
    nodes, v = u.grid.nodes, u.values
    out = np.interp(r, nodes, v)
    out[r <= nodes[0]] = v[0]
    out[r > u.grid.R] = 0.0
    return float(out[0]) if scalar else out


def interpolation_matrix(grid: RadialGrid, x, cell=None) -> sp.csr_matrix:
    """Sparse map from nodal values to values at the points ``x``."""
    x = np.asarray(x, dtype=float)
    if cell is None:
        cell = grid.cell_of(x)
    cell = np.asarray(cell)
    e = grid.edges
    M = grid.M
    n = x.size
    rows, cols, vals = [], [], []
    inside = cell < M
    c0 = inside & (cell == 0)
    idx = np.flatnonzero(c0)
    rows.append(idx)
    cols.append(np.zeros_like(idx))
    vals.append(np.ones(idx.size))
    lin = np.flatnonzero(inside & (cell > 0))
    k = cell[lin]
    t = (x[lin] - e[k]) / (e[k + 1] - e[k])
    rows += [lin, lin]
    cols += [k - 1, k]
    vals += [1.0 - t, t]
    return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(n, M))


def lumped_mass(grid: RadialGrid, N: int) -> np.ndarray:
    """Row sums of the radial mass matrix, omega_N int phi_j r^(N-1) dr."""
    e = grid.edges
    M = grid.M
    m = np.zeros(M)
    # constant piece of the first basis function
    m[0] += e[1] ** N / N
    a, b = e[1:-1], e[2:]
    h = b - a
    # int_a^b (b - r)/h r^(N-1) dr and int_a^b (r - a)/h r^(N-1) dr
    ib = (b ** (N + 1) - a ** (N + 1)) / (N + 1)
    i0 = (b ** N - a ** N) / N
    left = (b * i0 - ib) / h
    right = (ib - a * i0) / h
    m[:-1] += left
    m[1:] += right
    return sphere_area(N) * m


# ---------------------------------------------------------------------------
# one-dimensional weighted rules

@dataclass(frozen=True)
class LineRule:
    """Point rule for ``int_0^R f(u(r)) r^e dr``: sum w_b f((P v)_b)."""
    x: np.ndarray
    w: np.ndarray
    P: sp.csr_matrix

    def integrate(self, values, power=1.0, absolute=True):
        uv = self.P @ values
        if absolute:
            uv = np.abs(uv)
        return float(np.dot(self.w, uv ** power))


@lru_cache(maxsize=64)
def line_rule(grid: RadialGrid, exponent: float, order: int = 8) -> LineRule:
    if not exponent > -1:
        raise DivergentIntegrand(f"weight r^{exponent} is not integrable at 0")
    e = grid.edges
    xs, ws, cs = [], [], []
    t, w = jacobi01(order, exponent)
    # constant cell carries the weight exactly
    xs.append(e[1] * t)
    ws.append(w * e[1] ** (exponent + 1.0))
    cs.append(np.zeros(order, dtype=int))
    tg, wg = gauss_legendre(order)
    a, h = e[1:-1, None], np.diff(e)[1:, None]
    x = (a + h * tg).ravel()
    xs.append(x)
    ws.append((h * wg).ravel() * x ** exponent)
    cs.append(np.repeat(np.arange(1, grid.M), order))
    x, w, c = np.concatenate(xs), np.concatenate(ws), np.concatenate(cs)
    return LineRule(x, w, interpolation_matrix(grid, x, c))


def _check_profile(u: RadialFunction):
    if abs(u.values[-1]) > 1e-12 * np.max(np.abs(u.values)):
        raise ValueError("profiles must vanish at R (exterior condition u = 0 outside the ball)")


def hardy_term(params: Params, u: RadialFunction, power: float = None) -> float:
    """omega_N int_0^R |u|^power r^(N-1-ps) dr."""
    power = params.p if power is None else power
    if power < 1:
        raise ValueError(f"power must be >= 1, got {power}")
    rule = line_rule(u.grid, params.N - 1.0 - params.ps)
    return params.omega_N * rule.integrate(u.values, power)


def lp_norm(params: Params, u: RadialFunction, power: float = 2.0) -> float:
    rule = line_rule(u.grid, params.N - 1.0)
    return (params.omega_N * rule.integrate(u.values, power)) ** (1.0 / power)


def l2(params: Params, u: RadialFunction) -> float:
    return lp_norm(params, u, 2.0)


def weighted_l2(params: Params, u: RadialFunction, alpha: float) -> float:
    """L^2 norm with weight |x|^(p alpha)."""
    rule = line_rule(u.grid, params.N - 1.0 + params.p * alpha)
    return math.sqrt(params.omega_N * rule.integrate(u.values, 2.0))


# ---------------------------------------------------------------------------
# pair rule for the seminorm

def _pair_kernel(N, mu, beta, r, rho, d):
    """(r rho)^(N-1-beta) r^-mu K(rho/r) for rho < r, with d = r - rho exact."""
    delta = d / r
    k = np.empty_like(r)
    near = delta < 0.5
    if np.any(near):
        k[near] = kernel_near_one(N, mu, delta[near])
    if np.any(~near):
        k[~near] = kernel_hyp(N, mu, rho[~near] / r[~near])
    return (r * rho) ** (N - 1.0 - beta) * r ** (-mu) * k


class _Points:
    def __init__(self):
        self.r, self.rho, self.d, self.cr, self.crho, self.w = [], [], [], [], [], []

    def add(self, r, rho, d, cr, crho, w):
        arrs = np.broadcast_arrays(*(np.asarray(a) for a in (r, rho, d, cr, crho, w)))
        for store, a in zip((self.r, self.rho, self.d, self.cr, self.crho, self.w), arrs):
            store.append(a.ravel())

    def arrays(self):
        return tuple(np.concatenate(a) if a else np.zeros(0) for a in
                     (self.r, self.rho, self.d, self.cr, self.crho, self.w))


def _far_order(ratio):
    return np.select([ratio < 0.5, ratio < 1.0, ratio < 2.0, ratio < 4.0, ratio < 8.0, ratio < 16.0],
                     [12, 10, 8, 6, 4, 3], 2)


def _tensor(pts, I, J, ci, cj, order, nu):
    """Tensor rule on I x J (J left of I); Jacobi weight rho^nu if J starts at 0."""
    ta, wa = gauss_legendre(order)
    if J[0] == 0.0:
        tb, wb = jacobi01(order, nu)
        hb = J[1]
        rho = hb * tb
        wb = wb * hb ** (nu + 1.0) / np.maximum(rho, 1e-300) ** nu
    else:
        tb, wb = gauss_legendre(order)
        hb = J[1] - J[0]
        rho = J[0] + hb * tb
        wb = wb * hb
    ha = I[1] - I[0]
    r = I[0] + ha * ta
    R_, P_ = np.meshgrid(r, rho, indexing="ij")
    W = np.outer(wa * ha, wb)
    pts.add(R_, P_, R_ - P_, ci, cj, W)


def _corner(pts, c, H1, H0, ci, cj, ex):
    """Touching rectangles [c, c+H1] x [c-H0, c] with the singular corner at (c, c)."""
    tx, wx = jacobi01(NEAR_ORDER, ex)
    ty, wy = gauss_legendre(NEAR_ORDER)
    X, Y = np.meshgrid(tx, ty, indexing="ij")
    Wx = np.outer(wx / tx ** ex, wy)
    # region b/H0 <= a/H1
    a, b = H1 * X, H0 * X * Y
    pts.add(c + a, c - b, X * (H1 + H0 * Y), ci, cj, Wx * H1 * H0 * X)
    # region a/H1 <= b/H0
    b, a = H0 * X, H1 * X * Y
    pts.add(c + a, c - b, X * (H0 + H1 * Y), ci, cj, Wx * H1 * H0 * X)


def _near(pts, I, J, ci, cj, ex, nu, depth=0):
    la, lb = I[1] - I[0], J[1] - J[0]
    gap = I[0] - J[1]
    if gap <= 0.0:
        if la > 2.0 * lb:
            cut = I[0] + lb
            _near(pts, (I[0], cut), J, ci, cj, ex, nu, depth + 1)
            _near(pts, (cut, I[1]), J, ci, cj, ex, nu, depth + 1)
        elif lb > 2.0 * la:
            cut = J[1] - la
            _near(pts, I, (cut, J[1]), ci, cj, ex, nu, depth + 1)
            _near(pts, I, (J[0], cut), ci, cj, ex, nu, depth + 1)
        else:
            _corner(pts, I[0], la, lb, ci, cj, ex)
        return
    ratio = gap / max(la, lb)
    if ratio >= FAR_RATIO or depth > 40:
        _tensor(pts, I, J, ci, cj, int(_far_order(np.array([ratio]))[0]), nu)
        return
    if la >= lb:
        m = 0.5 * (I[0] + I[1])
        _near(pts, (I[0], m), J, ci, cj, ex, nu, depth + 1)
        _near(pts, (m, I[1]), J, ci, cj, ex, nu, depth + 1)
    else:
        m = 0.5 * (J[0] + J[1])
        _near(pts, I, (J[0], m), ci, cj, ex, nu, depth + 1)
        _near(pts, I, (m, J[1]), ci, cj, ex, nu, depth + 1)


def _same_cell(pts, a, h, ci, ex):
    """Triangle rho < r inside one cell, Duffy-collapsed at the diagonal."""
    tx, wx = jacobi01(NEAR_ORDER, ex)
    ty, wy = jacobi01(NEAR_ORDER, ex - 1.0)
    X, Y = np.meshgrid(tx, ty, indexing="ij")
    W = np.outer(wx / tx ** ex, wy / ty ** (ex - 1.0))
    r = a + h * X
    d = h * X * Y
    pts.add(r, r - d, d, ci, ci, W * h * h * X)


def exterior_integral(N, mu, beta, rho, R, L=math.inf):
    """int_{R/rho}^{L/rho} t^(N-1-beta) K(t) dt for each rho in (0, R)."""
    rho = np.asarray(rho, dtype=float)
    if L < 2.0 * R:
        raise ValueError(f"outer radius L = {L} must be at least 2R = {2.0 * R}")
    out = np.zeros_like(rho)
    w0 = (R - rho) / rho  # R/rho - 1 without cancellation
    e_in = N - 1.0 - beta
    # part 1: t in (1 + w0, 2) on a logarithmic scale in w = t - 1
    close = w0 < 1.0
    if np.any(close):
        lw0 = np.log(w0[close])
        tg, wg = composite_rule(np.linspace(0.0, 1.0, 49), 6)
        z = lw0[:, None] * (1.0 - tg[None, :])
        w = np.exp(z)
        t = 1.0 + w
        k = kernel_near_one(N, mu, w / t) * t ** (-mu)
        f = t ** e_in * k * w * (-lw0[:, None])
        out[close] = (f * wg[None, :]).sum(axis=1)
    # part 2: t in (max(R/rho, 2), L/rho) via x = 1/t, integrand x^(mu+beta-N-1) K(x)
    lo_t = np.maximum(1.0 + w0, 2.0)
    e_out = mu + beta - N - 1.0
    if math.isinf(L):
        if not e_out > -1.0:
            raise DivergentIntegrand(
                f"exterior integral diverges for beta = {beta} <= N - mu; pass a finite L")
        tj, wj = jacobi01(16, e_out)
        xmax = 1.0 / lo_t
        x = xmax[:, None] * tj[None, :]
        out += (kernel_hyp(N, mu, x) * wj[None, :]).sum(axis=1) * xmax ** (e_out + 1.0)
    else:
        ylo = np.log(rho / L)
        yhi = -np.log(lo_t)
        tg, wg = composite_rule(np.linspace(0.0, 1.0, 25), 6)
        y = ylo[:, None] + (yhi - ylo)[:, None] * tg[None, :]
        x = np.exp(y)
        f = x ** (e_out + 1.0) * kernel_hyp(N, mu, x)
        out += (f * wg[None, :]).sum(axis=1) * np.maximum(yhi - ylo, 0.0)
    return out


@dataclass(frozen=True)
class PairRule:
    """Point rule for the full weighted seminorm of profiles on one grid."""

    grid: RadialGrid
    q: float
    mu: float
    beta: float
    L: float
    D: sp.csr_matrix = field(repr=False)
    w: np.ndarray = field(repr=False)
    Pt: sp.csr_matrix = field(repr=False)
    wt: np.ndarray = field(repr=False)
    n_outside: int = 0

    @property
    def size(self):
        return self.w.size + self.wt.size

    def value(self, v) -> float:
        d = self.D @ v
        t = self.Pt @ v
        return float(np.dot(self.w, np.abs(d) ** self.q) + np.dot(self.wt, np.abs(t) ** self.q))

    def gradient(self, v) -> np.ndarray:
        q = self.q
        d = self.D @ v
        t = self.Pt @ v
        gd = self.w * q * np.abs(d) ** (q - 1.0) * np.sign(d)
        gt = self.wt * q * np.abs(t) ** (q - 1.0) * np.sign(t)
        return self.D.T @ gd + self.Pt.T @ gt

    def frozen_matrix(self, v, eps=0.0) -> np.ndarray:
        """Matrix A with A v = sum w |Dv|^(q-2) Dv (D^T ...), weights frozen at v."""
        q = self.q
        d = self.D @ v
        t = self.Pt @ v
        Wd = self.w * (d * d + eps * eps) ** (0.5 * (q - 2.0))
        Wt = self.wt * (t * t + eps * eps) ** (0.5 * (q - 2.0))
        A = self.D.T @ sp.diags(Wd) @ self.D + self.Pt.T @ sp.diags(Wt) @ self.Pt
        return A.toarray()


_RULES = {}


def pair_rule(grid: RadialGrid, N: int, q: float, mu: float, beta: float = 0.0,
              L: float = math.inf, include_outside: bool = False) -> PairRule:
    key = (grid, int(N), float(q), float(mu), float(beta), float(L), bool(include_outside))
    if key not in _RULES:
        _RULES[key] = _build_pair_rule(grid, N, q, mu, beta, L, include_outside)
    return _RULES[key]


def _build_pair_rule(grid, N, q, mu, beta, L, include_outside):
    kappa = mu - N + 1.0
    ex = 1.0 + q - kappa
    if not q > mu - N:
        raise DivergentIntegrand(f"need q > mu - N for a finite seminorm (q={q}, mu-N={mu - N})")
    if not mu > N - 1:
        raise ValueError(f"mu must exceed N - 1, got {mu}")
    nu = N - 1.0 - beta
    e = grid.edges
    h = np.diff(e)
    M = grid.M
    pts = _Points()

    # same-cell triangles (the constant cell contributes nothing)
    for k in range(1, M):
        _same_cell(pts, e[k], h[k], k, ex)
    # neighbours and pairs too close for a tensor rule
    for i in range(1, M):
        for j in range(i - 1, -1, -1):
            gap = e[i] - e[j + 1]
            if gap >= FAR_RATIO * max(h[i], h[j]):
                break
            _near(pts, (e[i], e[i + 1]), (e[j], e[j + 1]), i, j, ex, nu)
    # well separated pairs, grouped by order
    I, J = np.tril_indices(M, -1)
    gap = e[I] - e[J + 1]
    ratio = gap / np.maximum(h[I], h[J])
    far = ratio >= FAR_RATIO
    I, J, ratio = I[far], J[far], ratio[far]
    orders = _far_order(ratio)
    for n in np.unique(orders):
        sel = orders == n
        ii, jj = I[sel], J[sel]
        ta, wa = gauss_legendre(int(n))
        for start0 in (False, True):
            s2 = (jj == 0) if start0 else (jj > 0)
            if not np.any(s2):
                continue
            i2, j2 = ii[s2], jj[s2]
            if start0:
                tb, wb0 = jacobi01(int(n), nu)
            else:
                tb, wb0 = ta, wa
            r = e[i2, None, None] + h[i2, None, None] * ta[None, :, None]
            rho = e[j2, None, None] + h[j2, None, None] * tb[None, None, :]
            wr = (h[i2, None] * wa[None, :])[:, :, None]
            if start0:
                wb = wb0[None, None, :] * h[j2, None, None] ** (nu + 1.0) / rho ** nu
            else:
                wb = h[j2, None, None] * wb0[None, None, :]
            shape = (i2.size, ta.size, tb.size)
            rr = np.broadcast_to(r, shape)
            pp = np.broadcast_to(rho, shape)
            pts.add(rr, pp, rr - pp, np.broadcast_to(i2[:, None, None], shape),
                    np.broadcast_to(j2[:, None, None], shape), np.broadcast_to(wr * wb, shape))

    r, rho, d, cr, crho, w = pts.arrays()
    cr, crho = cr.astype(int), crho.astype(int)
    omega = sphere_area(N)
    w = 2.0 * omega * w * _pair_kernel(N, mu, beta, r, rho, d)
    D = interpolation_matrix(grid, r, cr) - interpolation_matrix(grid, rho, crho)

    # exterior: rho inside, r outside the ball
    xt, wt, ct = _exterior_points(grid, nu)
    T = exterior_integral(N, mu, beta, xt, grid.R, L)
    wt = 2.0 * omega * wt * xt ** (2.0 * N - 1.0 - 2.0 * beta - mu) * T
    Pt = interpolation_matrix(grid, xt, ct)

    n_out = 0
    if include_outside:
        # pairs with both points outside the ball: the integrand vanishes there,
        # kept only so the untruncated domain can be integrated literally
        Lout = L if np.isfinite(L) else 4.0 * grid.R
        to, wo = gauss_legendre(6)
        ro = grid.R + (Lout - grid.R) * to
        RO, PO = np.meshgrid(ro, ro, indexing="ij")
        keep = RO > PO
        ro_r, ro_p = RO[keep], PO[keep]
        wo2 = np.outer(wo, wo)[keep] * (Lout - grid.R) ** 2
        wo2 = 2.0 * omega * wo2 * _pair_kernel(N, mu, beta, ro_r, ro_p, ro_r - ro_p)
        Do = interpolation_matrix(grid, ro_r, np.full(ro_r.size, M)) - \
            interpolation_matrix(grid, ro_p, np.full(ro_p.size, M))
        D = sp.vstack([D, Do]).tocsr()
        w = np.concatenate([w, wo2])
        n_out = wo2.size
    return PairRule(grid, float(q), float(mu), float(beta), float(L), D.tocsr(), w, Pt, wt, n_out)


def _exterior_points(grid, nu):
    """Points/weights on (0, R) for the exterior term, graded toward R."""
    e = grid.edges
    M = grid.M
    xs, ws, cs = [], [], []
    tj, wj = jacobi01(EXTERIOR_ORDER, nu)
    xs.append(e[1] * tj)
    ws.append(wj * e[1] ** (nu + 1.0) / (e[1] * tj) ** nu)
    cs.append(np.zeros(tj.size, dtype=int))
    tg, wg = gauss_legendre(EXTERIOR_ORDER)
    a, hh = e[1:-2, None], np.diff(e)[1:-1, None]
    xs.append((a + hh * tg).ravel())
    ws.append((hh * wg).ravel())
    cs.append(np.repeat(np.arange(1, M - 1), EXTERIOR_ORDER))
    # last cell: geometric refinement toward R where the exterior weight is singular
    a, b = e[M - 1], e[M]
    br = b - (b - a) * np.concatenate([[1.0], 0.25 ** np.arange(1, 14)[::1]])
    br = np.concatenate([br, [b]])
    x, w = composite_rule(np.sort(br), EXTERIOR_ORDER)
    keep = x < b
    xs.append(x[keep])
    ws.append(w[keep])
    cs.append(np.full(int(keep.sum()), M - 1))
    return np.concatenate(xs), np.concatenate(ws), np.concatenate(cs)


def seminorm_general(params: Params, u: RadialFunction, q: float, mu: float, beta: float = 0.0,
                     L: float = math.inf, domain: str = "D_Omega") -> float:
    """Weighted Gagliardo seminorm int int |u(x)-u(y)|^q |x|^-b |y|^-b |x-y|^-mu.

    ``domain="full"`` also integrates over pairs with both points outside
    the ball; the integrand is zero there, so the two paths agree exactly.
    ``L`` truncates the exterior at radius ``L`` (needed when ``beta <= N - mu``).
    """
    if domain not in ("D_Omega", "full"):
        raise ValueError(f"unknown domain {domain!r}")
    _check_profile(u)
    if not np.any(u.values):
        return 0.0
    if beta <= params.N - mu and math.isinf(L):
        raise DivergentIntegrand(
            f"beta = {beta} <= {params.N - mu:g}: the seminorm is infinite without truncation")
    rule = pair_rule(u.grid, params.N, q, mu, beta, L, include_outside=(domain == "full"))
    if domain == "full":
        vals = np.abs(rule.D @ u.values) ** q
        inner = float(np.dot(rule.w[:rule.w.size - rule.n_outside],
                             vals[:rule.w.size - rule.n_outside]))
        outer = float(np.dot(rule.w[rule.w.size - rule.n_outside:],
                             vals[rule.w.size - rule.n_outside:]))
        tail = float(np.dot(rule.wt, np.abs(rule.Pt @ u.values) ** q))
        return inner + tail + outer
    return rule.value(u.values)


def gagliardo(params: Params, u: RadialFunction) -> float:
    """[u]_{s,p}^p with the operator's kernel exponent N + ps."""
    return seminorm_general(params, u, params.p, params.mu, 0.0)


def e_alpha_seminorm(params: Params, u: RadialFunction, alpha: float) -> float:
    w = RadialFunction(u.grid, u.grid.nodes ** alpha * u.values)
    return seminorm_general(params, w, params.p, params.mu, 0.0)


def rayleigh_quotient(params: Params, u: RadialFunction) -> float:
    h = hardy_term(params, u, params.p)
    if h == 0.0:
        raise ZeroDenominator("Hardy term vanishes: profile is identically zero")
    return 0.5 * gagliardo(params, u) / h


# ---------------------------------------------------------------------------
# Rayleigh minimisation

def minimize_rayleigh(params: Params, grid: RadialGrid, iterations: int = 200, seed: int = 0):
    """Seeded descent on the Hardy quotient over profiles vanishing at R.

    Starts from a randomly perturbed near-extremal power profile, alternates
    quasi-Newton sweeps with random perturbations, and keeps the best value
    seen, so the recorded sequence is non-increasing.
    """
    from scipy.optimize import minimize

    rng = np.random.default_rng(seed)
    rule = pair_rule(grid, params.N, params.p, params.mu, 0.0)
    lrule = line_rule(grid, params.N - 1.0 - params.ps)
    wH = params.omega_N * lrule.w
    P = lrule.P
    p = params.p
    x = grid.nodes
    free = slice(0, grid.M - 1)

    def full(z):
        v = np.zeros(grid.M)
        v[free] = np.exp(z)
        return v

    def objective(z):
        v = full(z)
        S = rule.value(v)
        pv = P @ v
        H = float(np.dot(wH, pv ** p))
        gS = rule.gradient(v)
        gH = P.T @ (wH * p * pv ** (p - 1.0))
        f = 0.5 * S / H
        g = (0.5 * gS / H - 0.5 * S * gH / H ** 2)[free] * v[free]
        return f, g

    start = np.maximum(x ** (-params.eta_max) - 1.0, 0.0) + 1e-12
    z = np.log(start[free]) + 0.05 * rng.standard_normal(grid.M - 1)
    best, _ = objective(z)
    history = [best]
    best_z = z.copy()
    sweeps = max(1, iterations // 50)
    per = max(1, iterations // sweeps)
    for k in range(sweeps):
        res = minimize(objective, best_z if k == 0 else best_z + 0.02 * rng.standard_normal(z.size),
                       jac=True, method="L-BFGS-B", options={"maxiter": per})
        if res.fun < best:
            best, best_z = float(res.fun), res.x.copy()
        history.append(best)
    u = RadialFunction(grid, full(best_z))
    return best, u, history


# ---------------------------------------------------------------------------
# strong form of the operator

def _sigma_cells(lo, hi, order=10):
    """Composite rule on (lo, hi), a side interval of s = 1, with cells that
    double in distance from 1 so the kernel peak is resolved."""
    if hi <= 1.0:
        br, x = [hi], hi
        while x > lo:
            x = max(lo, 1.0 - 2.0 * (1.0 - x))
            br.append(x)
        br = br[::-1]
    else:
        br, x = [lo], lo
        while x < hi:
            x = min(hi, 1.0 + 2.0 * (x - 1.0))
            br.append(x)
    return composite_rule(np.array(br), order)


def _tail_sigma(N, mu, a):
    """int_a^inf sigma^(N-1) K(sigma) d sigma for a > 1."""
    rho = np.array([1.0 / a])
    return float(exterior_integral(N, mu, 0.0, rho, 1.0)[0])


def nonlocal_op(params: Params, u: RadialFunction, j: int) -> float:
    """Pointwise fractional p-Laplacian of the profile at node ``j`` (0-based).

    r_j^-ps int_0^inf Phi_p(u(r_j) - u(r_j s)) s^(N-1) K(s) ds.  The principal
    value at s = 1 pairs s = 1 - h with s = 1 + h using the exact one-sided
    slopes.  When the slopes differ the folded integrand behaves like
    h^(p-2-ps), which is integrable only for ps < p - 1.
    """
    _check_profile(u)
    N, p, ps, mu = params.N, params.p, params.ps, params.mu
    x, v = u.grid.nodes, u.values
    M = u.grid.M
    rj, vj = x[j], v[j]
    sL = 0.0 if j == 0 else (v[j] - v[j - 1]) / (x[j] - x[j - 1])
    sR = (v[j + 1] - v[j]) / (x[j + 1] - x[j]) if j < M - 1 else 0.0
    left_kink = 0.0 if j == 0 else x[j - 1] / rj
    right_kink = x[j + 1] / rj if j < M - 1 else math.inf
    hf = min(1.0 - left_kink, right_kink - 1.0, 0.5)

    def phi(t):
        return np.abs(t) ** (p - 1.0) * np.sign(t)

    jump = abs(phi(sL) - phi(sR))
    smooth = jump <= 1e-12 * max(abs(phi(sL)), abs(phi(sR)), 1e-300)
    ex = p - 1.0 - ps if smooth else p - 2.0 - ps
    if not ex > -1.0:
        raise DivergentIntegrand(
            f"strong operator diverges at a kink when ps >= p - 1 (ps={ps}, p={p})")

    def folded(h):
        kp = kernel_near_one(N, mu, h / (1.0 + h)) * (1.0 + h) ** (-mu)
        km = kernel_near_one(N, mu, h)
        return (phi(-sR * rj * h) * (1.0 + h) ** (N - 1.0) * kp
                + phi(sL * rj * h) * (1.0 - h) ** (N - 1.0) * km)

    total = 0.0
    if sL or sR:
        hx, hw = geometric_rule(0.0, hf, FOLD_LEVELS, 12, 0.25, ex)
        total = float(np.dot(folded(hx), hw))

    def body(sig):
        return phi(vj - eval_at(u, rj * sig)) * sig ** (N - 1.0) * kernel_hyp(N, mu, sig)

    # away from the fold: split at the nodes and gather every cell into one rule
    lo_edges = np.unique(np.concatenate([[0.0], x[x < rj * (1.0 - hf)] / rj, [1.0 - hf]]))
    pieces = [_sigma_cells(a, b) for a, b in zip(lo_edges[:-1], lo_edges[1:])]
    top = u.grid.R / rj
    if top > 1.0 + hf:
        hi_edges = np.unique(np.concatenate([[1.0 + hf], x[x > rj * (1.0 + hf)] / rj]))
        pieces += [_sigma_cells(a, b) for a, b in zip(hi_edges[:-1], hi_edges[1:])]
    sx = np.concatenate([c[0] for c in pieces])
    sw = np.concatenate([c[1] for c in pieces])
    total += float(np.dot(body(sx), sw))
    if vj != 0.0 and top > 1.0:
        total += float(phi(vj)) * _tail_sigma(N, mu, top)
    return rj ** (-ps) * total


def nonlocal_op_all(params: Params, u: RadialFunction) -> np.ndarray:
    return np.array([nonlocal_op(params, u, j) for j in range(u.grid.M)])


# ---------------------------------------------------------------------------
# Galerkin form used by the time stepping

@dataclass(frozen=True)
class GalerkinOperator:
    """Gradient of (1/2p)[u]^p and the lumped mass on one grid."""
    params: Params
    grid: RadialGrid
    rule: PairRule
    mass: np.ndarray

    @classmethod
    def build(cls, params: Params, grid: RadialGrid):
        rule = pair_rule(grid, params.N, params.p, params.mu, 0.0)
        return cls(params, grid, rule, lumped_mass(grid, params.N))

    def apply(self, v) -> np.ndarray:
        """Weak operator: component j is <(-Delta)_p^s u, phi_j>."""
        return 0.5 / self.params.p * self.rule.gradient(v)

    def frozen(self, v, eps) -> np.ndarray:
        return 0.5 * self.rule.frozen_matrix(v, eps)

    def seminorm(self, v) -> float:
        return self.rule.value(v)


# ---------------------------------------------------------------------------
# nested reference quadrature (slow; used as an oracle)

def seminorm_nested(params: Params, u: RadialFunction, q: float, mu: float, beta: float = 0.0,
                    order: int = 10) -> float:
    """omega_N int r^(2N-1-mu-2beta) int |u(r)-u(r s)|^q s^(N-1-beta) K(s) ds dr.

    Outer integral over r by composite Gauss on the nodes (graded at R and
    with a 1/r tail map); inner integral over s split at the kinks of the
    profile and folded about s = 1.
    """
    _check_profile(u)
    N = params.N
    x = u.grid.nodes
    R = u.grid.R
    kap = mu - N + 1.0

    def inner(r):
        ur = eval_at(u, r)
        kinks = np.concatenate([[0.0], x / r])
        kinks = np.unique(kinks[kinks >= 0])

        def f(sig):
            return np.abs(ur - eval_at(u, r * sig)) ** q * sig ** (N - 1.0 - beta) * \
                kernel_hyp(N, mu, sig)

        # fold about 1
        below = kinks[kinks < 1.0]
        above = kinks[kinks > 1.0]
        hf = min(1.0 - below.max(), (above.min() - 1.0) if above.size else 0.5, 0.5)
        if r > R:
            hf = min(hf, 0.5)

        def fold(h):
            out = np.zeros_like(h)
            ok = h > 1e-14
            hk = h[ok]
            up = np.abs(ur - eval_at(u, r * (1.0 + hk))) ** q * (1.0 + hk) ** (N - 1.0 - beta) * \
                kernel_near_one(N, mu, hk / (1.0 + hk)) * (1.0 + hk) ** (-mu)
            dn = np.abs(ur - eval_at(u, r * (1.0 - hk))) ** q * (1.0 - hk) ** (N - 1.0 - beta) * \
                kernel_near_one(N, mu, hk)
            out[ok] = up + dn
            return out

        total = integrate_graded(SingularIntegrand(fold, left_exponent=q - kap), 0.0, hf, 1e-9,
                                 atol=1e-300)
        edges = np.unique(np.concatenate([below, [1.0 - hf]]))
        for a, b in zip(edges[:-1], edges[1:]):
            sx, sw = _sigma_cells(a, b, order)
            total += float(np.dot(f(sx), sw))
        top = R / r
        if top > 1.0 + hf:
            edges = np.unique(np.concatenate([[1.0 + hf], above[above > 1.0 + hf]]))
            for a, b in zip(edges[:-1], edges[1:]):
                sx, sw = _sigma_cells(a, b, order)
                total += float(np.dot(f(sx), sw))
            top_edge = edges[-1]
        else:
            top_edge = 1.0 + hf
        if ur != 0.0:
            # beyond R/r the profile is zero
            rho = np.array([1.0 / max(top_edge, top)])
            total += abs(ur) ** q * float(exterior_integral(N, mu, beta, rho, 1.0)[0])
        return total

    wexp = 2.0 * N - 1.0 - mu - 2.0 * beta
    e = u.grid.edges
    t, w = gauss_legendre(order)
    total = 0.0
    # interior radii
    for a, b in zip(e[:-1], e[1:]):
        br = np.array([a, b]) if a > 0 else b * np.array([0.0, 1e-6, 1e-4, 1e-2, 1.0])
        if b == R:
            br = np.unique(np.concatenate([[a], R - (R - a) * 0.25 ** np.arange(1, 9), [R]]))
        for c, dd in zip(br[:-1], br[1:]):
            rr = c + (dd - c) * t
            total += sum(wi * (dd - c) * ri ** wexp * inner(ri) for ri, wi in zip(rr, w))
    # exterior radii r > R: only u(r s) with r s < R contributes
    xs = R * (1.0 + 0.25 ** np.arange(10, -1, -1))
    xs = np.concatenate([[R], xs, [4.0 * R, 16.0 * R, 64.0 * R]])
    for c, dd in zip(xs[:-1], xs[1:]):
        rr = c + (dd - c) * t
        total += sum(wi * (dd - c) * ri ** wexp * inner(ri) for ri, wi in zip(rr, w))
    # r > 64R through r = 64R/t: the integrand decays like r^(N-1-mu-beta)
    top = xs[-1]
    c = mu + beta - N - 1.0
    tj, wj = jacobi01(order, c)
    for ti, wi in zip(tj, wj):
        ri = top / ti
        total += wi * top * ri ** wexp * inner(ri) / ti ** (c + 2.0)
    return sphere_area(N) * total
