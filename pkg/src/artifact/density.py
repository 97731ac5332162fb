"""Siegel-disk masks, area densities and the density experiments."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from . import cfrac
from .cfrac import QuotientSequence, make_setup
from .dynamics import ExplodedMapContext, QuadraticMap, linearizer
from .errors import InputError, RequiredBudget, UndefinedDensity
from .geometry import (Annulus, Hn_strip, RegionId, RegionParams, Yn, contains_array,
                       lift_to_H_array, make_params, region_sampler, yn_density_exact)
from .io import csv_text

DENSITY_SLACK = 0.05  # analytic slack for liminf statements at desk-scale n


@dataclass(frozen=True)
class GridMask:
    center: complex
    half: tuple  # half-widths (hx, hy)
    bits: np.ndarray  # shape (ny, nx), row 0 at the top
    meta: dict = field(default_factory=dict)

    @property
    def resolution(self):
        ny, nx = self.bits.shape
        return nx, ny

    @property
    def pixel_area(self) -> float:
        nx, ny = self.resolution
        return 4 * self.half[0] * self.half[1] / (nx * ny)

    @property
    def area(self) -> float:
        return float(self.bits.sum()) * self.pixel_area

    def centers(self):
        nx, ny = self.resolution
        xs = self.center.real + self.half[0] * ((np.arange(nx) + 0.5) / nx * 2 - 1)
        ys = self.center.imag + self.half[1] * (1 - (np.arange(ny) + 0.5) / ny * 2)
        X, Y = np.meshgrid(xs, ys)
        return X + 1j * Y

    def index(self, z):
        """(row, col, inside-window) for points z."""
        z = np.asarray(z, complex)
        nx, ny = self.resolution
        col = np.floor((z.real - self.center.real + self.half[0]) / (2 * self.half[0]) * nx)
        row = np.floor((self.center.imag + self.half[1] - z.imag) / (2 * self.half[1]) * ny)
        ok = (col >= 0) & (col < nx) & (row >= 0) & (row < ny)
        return np.where(ok, row, 0).astype(np.int64), np.where(ok, col, 0).astype(np.int64), ok

    def lookup(self, z):
        r, c, ok = self.index(z)
        return ok & self.bits[r, c]

    def dilated(self, pixels: int = 1) -> "GridMask":
        b = ndimage.binary_dilation(self.bits, iterations=pixels)
        return GridMask(self.center, self.half, b, dict(self.meta, dilated=pixels))

    def meta_json(self) -> dict:
        nx, ny = self.resolution
        return dict(self.meta, center=[self.center.real, self.center.imag], half=list(self.half), nx=nx, ny=ny)


def siegel_mask(qmap: QuadraticMap, trap: Union[RegionId, GridMask], center: complex, half: tuple,
                resolution: tuple, T: int, component_of_zero: bool = False,
                recurrence_tol: Optional[float] = None) -> GridMask:
    """Pixels whose center orbit stays in the trap for T steps.

    recurrence_tol additionally requires the orbit to come back within that
    distance of its start; Siegel-disk points are recurrent while points of
    its preimage components are not.  component_of_zero keeps only the
    connected component containing 0.
    """
    if T < 1:
        raise InputError("T must be >= 1")
    nx, ny = resolution
    if isinstance(trap, RegionId):
        if trap.tag != "Disk" or isinstance(trap.args[0], str):
            raise InputError("region traps must be numeric disks")
        R = float(trap.args[0])

        def stays(w):
            return np.abs(w) < R
    else:
        stays = trap.lookup
    proto = GridMask(complex(center), tuple(half), np.zeros((ny, nx), bool))
    Z = proto.centers().ravel()
    lam = qmap.lam
    inside = stays(Z)
    idx = np.flatnonzero(inside)
    w = Z[idx]
    z0 = w.copy()
    back = np.zeros(w.size, bool)
    with np.errstate(all="ignore"):
        for t in range(T):
            w = lam * w + w * w
            if recurrence_tol is not None:
                back |= np.abs(w - z0) < recurrence_tol
            if t % 8 == 7 or t == T - 1:
                keep = stays(w)
                if not keep.all():
                    w, idx, z0, back = w[keep], idx[keep], z0[keep], back[keep]
                if idx.size == 0:
                    break
    bits = np.zeros(nx * ny, bool)
    bits[idx[back] if recurrence_tol is not None else idx] = True
    bits = bits.reshape(ny, nx)
    if component_of_zero:
        lab, _ = ndimage.label(bits)
        r, c, ok = proto.index(np.array([0j]))
        k = lab[r[0], c[0]] if ok[0] else 0
        bits = (lab == k) & (k > 0)
    meta = {"T": int(T), "rotation": str(qmap.rotation), "trap": str(trap) if isinstance(trap, RegionId) else "mask",
            "component_of_zero": component_of_zero, "recurrence_tol": recurrence_tol, "rule": "inside iff the orbit stays in the trap for T steps"
            + (" and returns within recurrence_tol of its start" if recurrence_tol is not None else "")}
    return GridMask(complex(center), tuple(half), bits, meta)


@dataclass(frozen=True)
class DensityEstimate:
    value: float
    count: int
    stderr: float
    method: str


def _estimate(inside, weights=None, method="monte-carlo") -> DensityEstimate:
    inside = np.asarray(inside, float)
    n = inside.size
    if n == 0:
        raise UndefinedDensity("U has no samples")
    if weights is None:
        v = float(inside.mean())
        se = math.sqrt(v * (1 - v) / n)
    else:
        w = np.asarray(weights, float)
        sw = w.sum()
        if not sw > 0:
            raise UndefinedDensity("U has zero total weight")
        v = float((w * inside).sum() / sw)
        neff = sw ** 2 / (w ** 2).sum()
        se = math.sqrt(v * (1 - v) / neff)
    return DensityEstimate(v, n, se, method)


def dens(U, X, params: Optional[RegionParams] = None, samples: int = 100000, seed: int = 0,
         weights: Optional[Callable] = None) -> DensityEstimate:
    """area(U & X)/area(U).

    U: GridMask (grid method when X is a GridMask on the same grid) or a
    finite-area RegionId (monte-carlo).  X: GridMask, RegionId or predicate.
    """
    if isinstance(U, GridMask) and isinstance(X, GridMask) and U.bits.shape == X.bits.shape \
            and U.center == X.center and U.half == X.half:
        if not U.bits.any():
            raise UndefinedDensity("U is empty")
        return _estimate(X.bits[U.bits], method="grid")
    if isinstance(U, GridMask):
        pts = U.centers()[U.bits]
    else:
        pts = region_sampler(params, U, samples, seed).points
    if pts.size == 0:
        raise UndefinedDensity("U is empty")
    if isinstance(X, GridMask):
        inside = X.lookup(pts)
    elif isinstance(X, RegionId):
        inside = contains_array(params, X, pts)
    else:
        inside = np.asarray(X(pts), bool)
    return _estimate(inside, None if weights is None else weights(pts),
                     "grid" if isinstance(U, GridMask) else "monte-carlo")


# experiments

@dataclass(frozen=True)
class ExperimentConfig:
    alpha: QuotientSequence = cfrac.PRESETS["golden"]
    theta: QuotientSequence = cfrac.PRESETS["golden"]
    n_values: tuple = (4, 5, 6)
    A_rule: str = "power"  # fixed | power
    A: float = 2.0
    A_fixed: int = 10
    ladder: Optional[dict] = None
    a_floor: Optional[float] = None
    top: float = 0.97
    margin: float = 0.02
    samples: int = 100000
    seed: int = 12345
    orbit: bool = False
    budget: Optional[int] = None
    orbit_samples: int = 2000
    orbit_U_frac: float = 0.5  # U = disk of radius frac*r_hat in linearized coordinates
    trap_resolution: int = 512
    trap_T: int = 10000
    trap_half: float = 0.8
    precision_bits: int = 128

    def __post_init__(self):
        if self.A_rule not in ("fixed", "power"):
            raise InputError("A_rule must be fixed or power")
        if self.A_rule == "power" and not self.A > 1:
            raise InputError("A must exceed 1")
        if self.A_fixed < 1 or self.samples < 1:
            raise InputError("A_fixed and samples must be positive")
        if any(n < 2 for n in self.n_values):
            raise InputError("n must be >= 2")

    def A_n(self, q_n: int) -> int:
        return cfrac.alpha_n_rule(self.A_rule, q_n, self.A, self.A_fixed)

    def floor(self) -> float:
        if self.a_floor is not None:
            return self.a_floor
        return 1.0 / self.A if self.A_rule == "power" else 1.0 / self.A_fixed

    def as_dict(self) -> dict:
        return {"alpha": self.alpha.dumps(), "theta": self.theta.dumps(), "n_values": list(self.n_values),
                "A_rule": self.A_rule, "A": self.A, "A_fixed": self.A_fixed, "ladder": self.ladder,
                "a_floor": self.floor(), "top": self.top, "margin": self.margin, "samples": self.samples,
                "seed": self.seed, "orbit": self.orbit, "budget": self.budget, "orbit_samples": self.orbit_samples,
                "orbit_U_frac": self.orbit_U_frac, "trap_resolution": self.trap_resolution, "trap_T": self.trap_T,
                "trap_half": self.trap_half, "precision_bits": self.precision_bits}


CSV_HEADER = ("n", "q_n", "A_n", "epsilon_n", "r7", "r8", "dens_Yn", "stderr_Yn", "dens_Dn", "stderr_Dn",
              "budget_T", "samples", "seed")


def alpha_trap(cfg: ExperimentConfig) -> GridMask:
    """Siegel disk of P_alpha on the trap grid, dilated by one pixel."""
    alpha = cfrac.eval_to_precision(cfg.alpha, cfg.precision_bits).value
    res = cfg.trap_resolution
    m = siegel_mask(QuadraticMap(alpha, cfg.precision_bits), RegionId("Disk", (2.0,)), 0j,
                    (cfg.trap_half, cfg.trap_half), (res, res), cfg.trap_T, component_of_zero=True,
                    recurrence_tol=4 * cfg.trap_half / res)
    return m.dilated(1)


def perturbed_disk_density(cfg: ExperimentConfig, setup, trap: GridMask, budget: int, seed: int) -> DensityEstimate:
    """dens of Delta'_n in phi_alpha(U), U = disk of radius frac*r_hat, area-weighted by |phi'|^2."""
    lam = complex(QuadraticMap(setup.alpha_value, setup.precision_bits).lam_mp)
    lin = linearizer(lam, 1000, precision_bits=None)
    rng = np.random.default_rng(seed)
    n = cfg.orbit_samples
    rad = cfg.orbit_U_frac * lin.radius_estimate
    u = rad * np.sqrt(rng.random(n)) * np.exp(2j * np.pi * rng.random(n))
    y = lin(u)
    wts = np.abs(lin.derivative(u)) ** 2
    lam_n = complex(QuadraticMap(setup.alpha_n, setup.precision_bits).lam_mp)
    alive = trap.lookup(y)
    w = y[alive]
    idx = np.flatnonzero(alive)
    with np.errstate(all="ignore"):
        for t in range(budget):
            w = lam_n * w + w * w
            if t % 8 == 7 or t == budget - 1:
                keep = trap.lookup(w)
                if not keep.all():
                    w, idx = w[keep], idx[keep]
                if idx.size == 0:
                    break
    inside = np.zeros(n, bool)
    inside[idx] = True
    return _estimate(inside, wts)


def _experiment_row(cfg: ExperimentConfig, n: int, ss, trap) -> dict:
    q_n = cfrac.pq(cfg.alpha, n)[1]
    A_n = cfg.A_n(q_n)
    need = q_n * q_n * (A_n + 1)
    budget = cfg.budget if cfg.budget is not None else 10 * need
    setup = make_setup(cfg.alpha, cfg.theta, n, A_n,
                       max(cfg.precision_bits, (q_n * q_n * (A_n + 2)).bit_length() + 64))
    if cfg.ladder is None:
        params = make_params(setup, None, cfg.floor(), cfg.top, cfg.margin)
    else:
        params = RegionParams(setup, dict(cfg.ladder), cfg.floor())
    s_mc = int(ss.generate_state(1)[0])
    est = dens(Annulus(params.r7, params.r8), Yn(), params, cfg.samples, s_mc)
    row = {"n": n, "q_n": q_n, "A_n": A_n, "epsilon_n": setup.eps, "r7": params.r7, "r8": params.r8,
           "dens_Yn": est.value, "stderr_Yn": est.stderr, "dens_Dn": "", "stderr_Dn": "",
           "budget_T": budget if cfg.orbit else "", "samples": cfg.samples, "seed": s_mc,
           "dens_Yn_quadrature": yn_density_exact(params)}
    if cfg.orbit:
        d = perturbed_disk_density(cfg, setup, trap, budget, s_mc + 1)
        row["dens_Dn"], row["stderr_Dn"] = d.value, d.stderr
    return row


def density_experiment(cfg: ExperimentConfig, workers: int = 1):
    """One row per n; returns (rows as dicts, CSV text).

    Each n gets its own seed split from the master seed, so the table does not
    depend on the number of workers.
    """
    if cfg.orbit:
        for n in cfg.n_values:
            q_n = cfrac.pq(cfg.alpha, n)[1]
            need = q_n * q_n * (cfg.A_n(q_n) + 1)
            if cfg.budget is not None and cfg.budget < need:
                raise RequiredBudget(f"orbit budget {cfg.budget} below q_n^2 (A_n+1) = {need} at n={n}",
                                     required=need)
    seeds = np.random.SeedSequence(cfg.seed).spawn(len(cfg.n_values))
    trap = alpha_trap(cfg) if cfg.orbit else None
    jobs = list(zip(cfg.n_values, seeds))
    if workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(workers) as ex:
            rows = list(ex.map(lambda j: _experiment_row(cfg, j[0], j[1], trap), jobs))
    else:
        rows = [_experiment_row(cfg, n, ss, trap) for n, ss in jobs]
    text = csv_text(CSV_HEADER, [[r[k] for k in CSV_HEADER] for r in rows])
    return rows, text


# inclusion chain

def _polygon_fill(poly: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Even-odd scanline fill of a closed polygon at pixel centers."""
    x0, y0 = poly.real, poly.imag
    x1, y1 = np.roll(x0, -1), np.roll(y0, -1)
    out = np.zeros((ys.size, xs.size), bool)
    for r, yc in enumerate(ys):
        cross = (y0 <= yc) != (y1 <= yc)
        if not cross.any():
            continue
        xc = x0[cross] + (yc - y0[cross]) * (x1[cross] - x0[cross]) / (y1[cross] - y0[cross])
        xc.sort()
        cnt = np.searchsorted(xc, xs)
        out[r] = cnt % 2 == 1
    return out


class ImageDomain:
    """Raster of chi(D_R) with an exact chi^{-1} fallback near its boundary."""

    def __init__(self, ctx: ExplodedMapContext, R: float, res: int = 2048, nb: int = 16384):
        th = 2 * np.pi * np.arange(nb) / nb
        self.ctx, self.R = ctx, R
        self.th = th
        poly = ctx.chi(R * np.exp(1j * th))
        pad = 0.02 * np.ptp(np.abs(poly))
        lo = complex(poly.real.min() - pad, poly.imag.min() - pad)
        hi = complex(poly.real.max() + pad, poly.imag.max() + pad)
        self.lo, self.hi, self.res = lo, hi, res
        self.dx = (hi.real - lo.real) / res
        self.dy = (hi.imag - lo.imag) / res
        xs = lo.real + (np.arange(res) + 0.5) * self.dx
        ys = lo.imag + (np.arange(res) + 0.5) * self.dy
        self.fill = _polygon_fill(poly, xs, ys)
        amb = np.zeros_like(self.fill)
        r, c = self._rc(poly)
        amb[r, c] = True
        self.ambiguous = ndimage.binary_dilation(amb, iterations=2)
        self.poly = poly
        self.fallbacks = 0
        # dense table of chi on an outer annulus seeds the exact fallback;
        # chi compresses strongly near the cycle so boundary-angle seeds are not enough
        rr = R * np.linspace(0.25, 1.0, 256)
        tz = (rr[:, None] * np.exp(1j * 2 * np.pi * np.arange(4096) / 4096)[None, :]).ravel()
        ty = ctx.chi(tz)
        self.table_z = tz
        self.tree = cKDTree(np.column_stack([ty.real, ty.imag]))

    def _rc(self, y):
        c = np.floor((y.real - self.lo.real) / self.dx).astype(np.int64)
        r = np.floor((y.imag - self.lo.imag) / self.dy).astype(np.int64)
        return np.clip(r, 0, self.res - 1), np.clip(c, 0, self.res - 1)

    def contains(self, y):
        y = np.asarray(y, complex)
        inwin = (y.real > self.lo.real) & (y.real < self.hi.real) & (y.imag > self.lo.imag) & (y.imag < self.hi.imag)
        r, c = self._rc(y)
        ans = inwin & self.fill[r, c]
        amb = inwin & self.ambiguous[r, c]
        if amb.any():
            ya = y[amb]
            res = np.zeros(ya.size, bool)
            todo = np.ones(ya.size, bool)
            _, nb = self.tree.query(np.column_stack([ya.real, ya.imag]), k=3)
            for col in range(nb.shape[1]):
                if not todo.any():
                    break
                sub = np.flatnonzero(todo)
                z, ok = self.ctx.chi_inv(ya[sub], self.table_z[nb[sub, col]])
                good = ok & (np.abs(z) < self.R)
                res[sub[good]] = True
                todo[sub[good]] = False
            ans[amb] = res
            self.fallbacks += int(amb.sum())
        return ans


@dataclass(frozen=True)
class InclusionReport:
    samples: int
    lift_violations: int
    max_root_residual: float
    min_lift_height: float
    orbit_violations: int
    budget: int
    slowest_return: int
    median_return: float
    fallback_checks: int
    violations: tuple

    def as_dict(self):
        d = dict(self.__dict__)
        d["violations"] = [[v.real, v.imag] for v in self.violations[:20]]
        return d


def sample_Yn(params: RegionParams, count: int, seed: int, r_lo: Optional[float] = None) -> np.ndarray:
    rng = np.random.default_rng(seed)
    lo = params.r7 if r_lo is None else r_lo
    out, have = [], 0
    for _ in range(1000):
        pts = region_sampler(params, Annulus(lo, params.r8), 4 * count, int(rng.integers(2 ** 63))).points
        pts = pts[contains_array(params, Yn(), pts)]
        out.append(pts)
        have += pts.size
        if have >= count:
            break
    return np.concatenate(out)[:count]


def inclusion_spot_check(params: RegionParams, ctx: ExplodedMapContext, count: int = 1000,
                         budget: Optional[int] = None, seed: int = 0, points: Optional[np.ndarray] = None,
                         root_tol: float = 1e-9) -> InclusionReport:
    """Y_n -> H_n(r6, r5) lift, then f_n orbits must stay in D_{r'_0}.

    Orbits run as P_{alpha_n}-orbits of chi_n(z); since chi_n is univalent on
    D_{r'_0}, staying in chi_n(D_{r'_0}) is the same statement.
    """
    s = params.setup
    if budget is None:
        budget = 10 * s.q_n ** 2 * (s.A_n + 1)
    z = sample_Yn(params, count, seed) if points is None else np.asarray(points, complex)
    W, res, _ = lift_to_H_array(params, z)
    in_strip = contains_array(params, Hn_strip(), W)
    lift_bad = ~in_strip | ~(res < root_tol)
    dom = ImageDomain(ctx, params.r0p)
    y = ctx.chi(z)
    y0 = y.copy()
    alive = dom.contains(y)
    first_return = np.full(z.size, -1)
    near = 1e-2 * np.abs(y0)
    lam = ctx.lam_n
    with np.errstate(all="ignore"):
        for t in range(1, budget + 1):
            y = lam * y + y * y
            if t % 4 == 0 or t == budget:
                alive &= dom.contains(np.where(alive, y, 0))
            hit = (first_return < 0) & (np.abs(y - y0) < near) & (t > 1)
            first_return[hit] = t
    orbit_bad = ~alive
    ret = first_return[first_return > 0]
    bad = lift_bad | orbit_bad
    return InclusionReport(int(z.size), int(lift_bad.sum()), float(res.max()) if res.size else 0.0,
                           float(W.imag.min()) if W.size else float("nan"), int(orbit_bad.sum()), int(budget),
                           int(ret.max()) if ret.size else -1, float(np.median(ret)) if ret.size else float("nan"),
                           dom.fallbacks, tuple(complex(v) for v in z[bad]))
