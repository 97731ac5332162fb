"""Quadratic maps, Siegel linearizers and parabolic-explosion cycles.

Two evaluators for the renormalized coordinate chi_n are provided:

* ``exact``: the power series of chi_n solved from chi(zeta*d) = P_eta(chi(d)),
  eta = p/q + d^q.  Cross-checked against Newton continuation cycles.
* ``proxy``: chi_n(d) ~ phi_alpha(r_hat*d) from the Siegel linearizer.
"""
from __future__ import annotations

import threading
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from math import lgamma, log, pi
from typing import Optional

import mpmath
import numpy as np
from numpy.polynomial import polynomial as npoly

from .cfrac import PerturbationSetup
from .errors import (ContinuationFailed, DegenerateCycle, InputError, NearCycleDegeneracy,
                     OutsideUnivalentDomain)

TWO_PI_I = 2j * np.pi


@dataclass(frozen=True)
class QuadraticMap:
    """P(z) = lam*z + z^2 with lam = exp(2 pi i rotation)."""

    rotation: object
    precision_bits: int = 128

    @property
    def lam_mp(self):
        with mpmath.workprec(self.precision_bits):
            return mpmath.expjpi(2 * mpmath.mpmathify(self.rotation))

    @property
    def lam(self) -> complex:
        return complex(self.lam_mp)

    def __call__(self, z):
        lam = self.lam
        return lam * z + z * z


def iterate(m: QuadraticMap, z: complex, k: int, escape_radius: float = 2.0):
    """Orbit endpoint after k steps, or (value, index) of the first escape."""
    if k < 0:
        raise InputError("k must be >= 0")
    lam = m.lam
    z = complex(z)
    with np.errstate(all="ignore"):
        for i in range(k):
            z = lam * z + z * z
            if not abs(z) <= escape_radius:  # also catches overflow to inf/nan
                return z, i + 1
    return z, None


def iterate_array(lam: complex, z, k: int, escape_radius: float = 2.0):
    """Vectorized orbit engine; escape index -1 means the orbit stayed bounded."""
    z = np.array(z, dtype=complex)
    esc = np.full(z.shape, -1, dtype=np.int64)
    alive = np.ones(z.shape, bool)
    for i in range(k):
        w = z[alive]
        w = lam * w + w * w
        z[alive] = w
        out = ~(np.abs(w) <= escape_radius)
        if out.any():
            idx = np.flatnonzero(alive)[out]
            esc.flat[idx] = i + 1
            alive.flat[idx] = False
            if not alive.any():
                break
    return z, esc


# Siegel linearizer

@dataclass(frozen=True)
class LinearizerSeries:
    lam: complex
    coeffs: tuple  # c_1..c_M
    M: int
    radius_estimate: float
    tail_fit_window: tuple
    precision_bits: Optional[int] = None
    breakdown_at: Optional[int] = None
    scale: float = 1.0
    _poly: np.ndarray = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "_poly", np.array([0j] + [complex(c) for c in self.coeffs]))

    @property
    def poly(self) -> np.ndarray:
        return self._poly

    def __call__(self, z):
        return npoly.polyval(np.asarray(z) / self.scale, self._poly)

    def derivative(self, z):
        return npoly.polyval(np.asarray(z) / self.scale, npoly.polyder(self._poly)) / self.scale

    def eval_mp(self, z):
        z = z / self.scale
        acc = mpmath.mpc(0)
        for c in reversed(self.coeffs):
            acc = (acc + c) * z
        return acc

    def residual(self, radius: Optional[float] = None, npts: int = 100) -> float:
        """max |P(phi(z)) - phi(lam z)| on |z| = radius (default r_hat/2)."""
        r = self.radius_estimate / 2 if radius is None else radius
        bits = self.precision_bits or 53
        with mpmath.workprec(bits):
            lam = mpmath.mpc(self.lam) if self.precision_bits is None else self._lam_mp
            worst = mpmath.mpf(0)
            for j in range(npts):
                z = r * mpmath.expjpi(mpmath.mpf(2 * j) / npts)
                a = self.eval_mp(z)
                worst = max(worst, abs(lam * a + a * a - self.eval_mp(lam * z)))
        return float(worst)


def _fit_radius(logabs: np.ndarray, ms: np.ndarray):
    b, a = np.polyfit(ms, logabs, 1)
    return float(np.exp(-b))


def linearizer(lam, M: int, precision_bits: Optional[int] = 128, spike_tol: float = 1e-6,
               scale: float = 0.3) -> LinearizerSeries:
    """Coefficients of phi with phi(lam z) = P(phi(z)), phi(z) = z + ...

    precision_bits=None runs the recurrence in double precision (fast path
    for large M).
    """
    if M < 2:
        raise InputError("M must be >= 2")
    bits = precision_bits or 53
    thresh = 2.0 ** (-bits / 2)
    breakdown = None
    if precision_bits is None:
        lam = complex(lam)
        c = np.zeros(M + 1, complex)
        c[1] = scale  # coefficients of phi(scale*u), keeps magnitudes in range
        lp = lam ** np.arange(M + 1)
        den = lp - lam
        for m in range(2, M + 1):
            if abs(den[m]) < thresh:
                breakdown = m
                break
            c[m] = np.dot(c[1:m], c[m - 1:0:-1]) / den[m]
        top = (breakdown - 1) if breakdown else M
        coeffs = tuple(c[1:top + 1])
        dens = np.abs(den[:top + 1])
        lam_store = lam
        lam_mp = None
    else:
        with mpmath.workprec(precision_bits):
            lam_mp = mpmath.mpmathify(lam)
            if abs(abs(lam_mp) - 1) > mpmath.mpf(2) ** (-precision_bits + 8):
                raise InputError("|lambda| must be 1")
            c = [mpmath.mpc(0), mpmath.mpc(1)]
            lp = mpmath.mpc(lam_mp)
            dens = [0.0, 0.0]
            for m in range(2, M + 1):
                lp = lp * lam_mp
                den = lp - lam_mp
                if abs(den) < thresh:
                    breakdown = m
                    break
                dens.append(float(abs(den)))
                s = mpmath.fsum(c[i] * c[m - i] for i in range(1, m))
                c.append(s / den)
        coeffs = tuple(c[1:])
        dens = np.array(dens)
        top = len(coeffs)
        lam_store = complex(lam_mp)
        scale = 1.0
    lo = max(2, int(0.75 * top))
    ms = np.arange(lo, top + 1)
    mags = np.array([abs(complex(coeffs[m - 1])) for m in ms])
    keep = (dens[ms] >= spike_tol) & (mags > 0)
    r_hat = scale * _fit_radius(np.log(mags[keep]), ms[keep]) if keep.sum() >= 2 else float("nan")
    out = LinearizerSeries(lam_store, coeffs, top, r_hat, (lo, top), precision_bits, breakdown, scale)
    if lam_mp is not None:
        object.__setattr__(out, "_lam_mp", lam_mp)
    return out


# power series of chi_n

@dataclass(frozen=True)
class ChiSeries:
    """chi(d) = sum_m b_m (d/scale)^m, fixed by chi(zeta d) = P_{p/q+d^q}(chi(d))."""

    p: int
    q: int
    M: int
    scale: float
    b: np.ndarray
    c1: complex
    radius_estimate: float

    def __call__(self, z):
        return npoly.polyval(np.asarray(z) / self.scale, self.b)

    def derivative(self, z):
        return npoly.polyval(np.asarray(z) / self.scale, self._db) / self.scale

    @property
    def _db(self):
        return npoly.polyder(self.b)


def _chi_head(p, q, zeta):
    """c_1..c_q of chi with c_1 = 1, plus the resonance constant K."""
    ct = np.zeros(q + 1, complex)
    ct[1] = 1
    for m in range(2, q + 1):
        ct[m] = np.dot(ct[1:m], ct[m - 1:0:-1]) / (zeta ** m - zeta)
    K = np.dot(ct[1:q + 1], ct[q:0:-1])
    return ct, K


@lru_cache(maxsize=32)
def chi_series(p: int, q: int, M: int = 700, scale: float = 0.5) -> ChiSeries:
    """Solve the explosion functional equation order by order.

    Order m: c_m (zeta^m - zeta) = zeta sum_j e_j c_{m-qj} + sum_i c_i c_{m-i},
    e_j = (2 pi i)^j / j!.  At m = kq+1 the left side vanishes; the
    resulting linear condition fixes c_{(k-1)q+1}, which enters the block
    between the two resonances affinely.
    """
    zeta = np.exp(TWO_PI_I * p / q)
    zm = zeta ** np.arange(M + 1)
    ct, K = _chi_head(p, q, zeta)
    c1 = (-TWO_PI_I * zeta / K) ** (1.0 / q)
    s = scale
    c = np.zeros(M + 1, complex)
    c[1:q + 1] = ct[1:q + 1] * (c1 * s) ** np.arange(1, q + 1)
    ek = [(1j ** j) * np.exp(j * log(2 * pi) + q * j * log(s) - lgamma(j + 1)) for j in range(M // q + 2)]

    def rhs(cc, m):
        t = np.dot(cc[1:m], cc[m - 1:0:-1])
        j = 1
        while m - q * j >= 1:
            t += zeta * ek[j] * cc[m - q * j]
            j += 1
        return t

    k = 1
    while k * q + 1 <= M:
        base, top = k * q + 1, (k + 1) * q + 1
        hi = min(top, M + 1)
        blocks = []
        for x in (0.0, 1.0):
            cc = c.copy()
            cc[base] = x
            for m in range(base + 1, hi):
                cc[m] = rhs(cc, m) / (zm[m] - zeta)
            blocks.append((cc, rhs(cc, top) if top <= M else 0.0))
        (a, r0), (b, r1) = blocks
        x = -r0 / (r1 - r0) if top <= M else 0.0
        c[base:hi] = a[base:hi] + x * (b[base:hi] - a[base:hi])
        k += 1
    ms = np.arange(max(q + 2, int(0.75 * M)), M + 1)
    mags = np.abs(c[ms])
    ok = mags > 0
    rho = s * _fit_radius(np.log(mags[ok]), ms[ok])
    c.setflags(write=False)
    return ChiSeries(p, q, M, s, c, complex(c1), rho)


# continuation cycles

@dataclass(frozen=True)
class ExplosionCycle:
    p: int
    q: int
    delta: complex
    eta: complex
    points: tuple
    residuals: tuple
    continuation_trace: tuple
    precision_bits: int

    @property
    def max_residual(self) -> float:
        return max(self.residuals)

    def csv_rows(self):
        return [(j, float(z.real), float(z.imag), r) for j, (z, r) in enumerate(zip(self.points, self.residuals))]


def _newton_cycle(z, lam, q, tol, maxit=80):
    # near the parabolic point d - 1 is tiny, so steps stall at a noise floor
    # well above tol; stalling below sqrt(tol) counts as convergence
    prev = None
    for it in range(1, maxit + 1):
        w, d = z, mpmath.mpc(1)
        for _ in range(q):
            d *= lam + 2 * w
            w = lam * w + w * w
        step = (w - z) / (d - 1)
        z = z - step
        a = abs(step)
        scale = max(1, abs(z)) if abs(z) > 1 else abs(z)
        if a <= tol * scale:
            return z, it
        if prev is not None and a <= mpmath.sqrt(tol) * scale and a > prev / 4:
            return z, it
        prev = a
    return None, maxit


def explosion_cycle(p: int, q: int, delta: complex, seed_radius: float = 1e-2,
                    precision_bits: int = 128, growth: float = 1.5) -> ExplosionCycle:
    """The q-cycle chi(delta), ..., chi(zeta^{q-1} delta) of P_eta by continuation in |delta|."""
    from math import gcd
    if q < 1 or gcd(p, q) != 1:
        raise InputError("need gcd(p, q) = 1")
    delta = complex(delta)
    R = abs(delta)
    if R == 0:
        return ExplosionCycle(p, q, 0j, complex(p / q), tuple([mpmath.mpc(0)] * q), (0.0,) * q, (), precision_bits)
    # near d = 0 the Newton derivative is ~d^q, so guard bits absorb the loss
    guard = int(q * max(0.0, -np.log2(min(seed_radius, R)))) + 20
    with mpmath.workprec(precision_bits + guard):
        zeta = mpmath.expjpi(mpmath.mpf(2 * p) / q)
        ct, K = _chi_head(p, q, complex(zeta))
        c1 = (-TWO_PI_I * complex(zeta) / K) ** (1.0 / q)
        u = mpmath.mpc(delta) / R
        tol = mpmath.mpf(2) ** (-(precision_bits - 12))
        floor = R * 2.0 ** -30

        def lam_of(r):
            d = u * r
            return mpmath.expjpi(2 * (mpmath.mpf(p) / q + d ** q))

        r = min(seed_radius, R)
        x = complex(c1 * complex(u) * r)
        z0 = mpmath.mpc(sum(ct[m] * x ** m for m in range(1, q + 1)))
        z, its = _newton_cycle(z0, lam_of(r), q, tol)
        if z is None:
            raise ContinuationFailed("seed Newton failed", last_good=0.0)
        trace = [(float(r), its)]
        g = growth
        while r < R:
            r_new = min(R, r * g)
            zn, its = _newton_cycle(z * (r_new / r), lam_of(r_new), q, tol)
            if zn is None or abs(zn) < r_new / 10:
                g = 1 + (g - 1) / 2
                if (g - 1) * r < floor:
                    raise ContinuationFailed(f"Newton stagnated at |delta|={r:.6g}", last_good=float(r))
                continue
            z, r = zn, r_new
            trace.append((float(r), its))
            g = min(growth, 1 + 2 * (g - 1))
        lam = lam_of(R)
        pts = [z]
        for _ in range(q - 1):
            pts.append(lam * pts[-1] + pts[-1] ** 2)
        res = []
        for j in range(q):
            w = lam * pts[j] + pts[j] ** 2
            res.append(float(abs(w - pts[(j + 1) % q])))
        sep = min(abs(a - b) for i, a in enumerate(pts) for b in pts[i + 1:]) if q > 1 else 1
        fixed = [mpmath.mpc(0), 1 - lam]
        if sep < tol * 1e3 or min(abs(a - f) for a in pts for f in fixed) < R / 10 * abs(c1) * 1e-3:
            raise DegenerateCycle("cycle collapsed onto a fixed point or onto itself")
        eta = complex(mpmath.mpf(p) / q + (u * R) ** q)
    return ExplosionCycle(p, q, delta, eta, tuple(pts), tuple(res), tuple(trace), precision_bits)


# exploded map f_n = chi^{-1} o P_{alpha_n} o chi

@dataclass(frozen=True)
class FnValue:
    value: complex
    residual: float


class ExplodedMapContext:
    """Evaluates f_n and its iterates for one perturbation setup.

    All array methods are vectorized and pure; the only mutable state is the
    cycle cache used by ``cycle``, guarded by a lock.
    """

    def __init__(self, setup: PerturbationSetup, mode: str = "proxy", M: int = 700, scale: float = 0.5,
                 linearizer_order: int = 1000, eval_radius: float = 0.75):
        if mode not in ("proxy", "exact"):
            raise InputError(f"unknown mode {mode!r}")
        self.setup, self.mode = setup, mode
        self.p, self.q, self.qm = setup.p_n, setup.q_n, setup.q_prev
        self.eps = setup.eps
        self.e = abs(self.eps)
        self.sign = 1 if self.eps > 0 else -1
        self.omega = np.exp(1j * np.pi / self.q)
        with mpmath.workprec(setup.precision_bits):
            self.lam_n = complex(mpmath.expjpi(2 * setup.alpha_n))
            self.lam = complex(mpmath.expjpi(2 * setup.alpha_value))
        self.linearizer = linearizer(self.lam, linearizer_order, precision_bits=None)
        if mode == "proxy":
            rh = self.linearizer.radius_estimate
            c = self.linearizer.poly * (rh / self.linearizer.scale) ** np.arange(self.linearizer.M + 1)
            # drop terms that cannot matter on |z| <= eval_radius
            tail = np.abs(c) * eval_radius ** np.arange(c.size)
            keep = np.flatnonzero(tail > 1e-18 * tail.max())
            self._b = c[:keep[-1] + 1]
            self._scale = 1.0
            self.domain_radius = 1.0
            self.chi_series = None
        else:
            self.chi_series = chi_series(self.p, self.q, M, scale)
            self._b = self.chi_series.b
            self._scale = scale
            self.domain_radius = 0.95 * self.chi_series.radius_estimate
        self._db = npoly.polyder(self._b)
        self._lock = threading.Lock()
        self._cycles = {}

    # chi and its inverse
    def chi(self, z):
        return npoly.polyval(np.asarray(z) / self._scale, self._b)

    def dchi(self, z):
        return npoly.polyval(np.asarray(z) / self._scale, self._db) / self._scale

    def chi_inv(self, y, seed, maxit: int = 80, tol: float = 1e-15):
        """Newton for chi(z) = y; returns (z, converged mask)."""
        y = np.asarray(y, complex)
        z = np.array(np.broadcast_to(seed, y.shape), complex)
        with np.errstate(all="ignore"):
            for _ in range(maxit):
                d = (self.chi(z) - y) / self.dchi(z)
                z = z - d
                if not np.any(np.abs(d) > tol * np.maximum(1, np.abs(z))):
                    break
            res = np.abs(self.chi(z) - y)
        ok = (res <= 1e-11 * np.maximum(np.abs(y), 1e-3)) & (np.abs(z) < self.domain_radius)
        return z, ok

    def critical_count(self, R: float, npts: int = 8192) -> int:
        """Zeros of chi' in |z| < R by the argument principle."""
        d = self.dchi(R * np.exp(TWO_PI_I * np.arange(npts) / npts))
        return int(round(np.angle(np.roll(d, -1) / d).sum() / (2 * np.pi)))

    @cached_property
    def univalence_radius(self) -> float:
        """Radius of the first critical point of chi (chi' vanishes where chi hits the
        critical point of P_eta), capped at the working radius."""
        lo, hi = 0.0, self.domain_radius
        if self.critical_count(hi) == 0:
            return hi
        for _ in range(25):
            mid = 0.5 * (lo + hi)
            if self.critical_count(mid) == 0:
                lo = mid
            else:
                hi = mid
        return lo

    # iterates in the original frame
    @np.errstate(all="ignore")
    def f_iter(self, z, k: int, strict: bool = False):
        """(f_n^k(z), derivative, residual); residual = |chi(f^k z) - P^k(chi z)|."""
        z = np.asarray(z, complex)
        y = self.chi(z)
        dy = self.dchi(z)
        for _ in range(k):
            dy = dy * (self.lam_n + 2 * y)
            y = self.lam_n * y + y * y
        w, ok = self.chi_inv(y, z * np.exp(TWO_PI_I * k * self.setup.alpha_n_float))
        if strict and not np.all(ok):
            raise OutsideUnivalentDomain("inverse Newton for chi did not converge", points=z[~ok])
        res = np.abs(self.chi(w) - y)
        return w, dy / self.dchi(w), np.where(ok, res, np.inf)

    # iterates in the sign-normalized frame (epsilon > 0)
    def to_normalized(self, z):
        return z if self.sign > 0 else self.omega * np.conj(z)

    from_normalized = to_normalized  # the frame change is an involution

    def g_iter(self, v, k: int):
        if self.sign > 0:
            w, d, r = self.f_iter(v, k)
            return w, d, r
        w, d, r = self.f_iter(self.omega * np.conj(v), k)
        return self.omega * np.conj(w), np.conj(d), r

    def cycle(self, delta: complex, precision_bits: Optional[int] = None) -> ExplosionCycle:
        key = (round(float(np.angle(delta)), 12), round(abs(delta), 12))
        with self._lock:
            if key in self._cycles:
                return self._cycles[key]
        cyc = explosion_cycle(self.p, self.q, delta, precision_bits=precision_bits or self.setup.precision_bits)
        with self._lock:
            self._cycles.setdefault(key, cyc)
        return cyc


def f_n_eval(ctx: ExplodedMapContext, z: complex) -> FnValue:
    if abs(z) >= ctx.domain_radius:
        raise OutsideUnivalentDomain(f"|z|={abs(z):.4g} beyond the working radius {ctx.domain_radius:.4g}")
    w, _, r = ctx.f_iter(np.array([complex(z)]), 1, strict=True)
    return FnValue(complex(w[0]), float(r[0]))


def qn_expansion_residual(ctx: ExplodedMapContext, z: complex) -> float:
    """Relative deviation of f^q(z) - z from 2 pi i q z (eps - z^q)."""
    z = complex(z)
    if z == 0:
        raise InputError("z must be nonzero")
    q, eps = ctx.q, ctx.eps
    gap = eps - z ** q
    if abs(gap) < 1e-12 * abs(eps):
        raise NearCycleDegeneracy("eps - z^q vanishes; residual undefined")
    w, _, r = ctx.f_iter(np.array([z]), q, strict=True)
    lead = TWO_PI_I * q * z * gap
    return float(abs(w[0] - z - lead) / (2 * np.pi * q * abs(z) * abs(gap)))


def chi_prime0(ctx: ExplodedMapContext, h: float = 1e-4) -> complex:
    """chi_n'(0) by a central difference."""
    return complex((ctx.chi(h) - ctx.chi(-h)) / (2 * h))


def compare_explosion_to_linearizer(ctx: ExplodedMapContext, lin: LinearizerSeries, samples) -> dict:
    """sup |chi_n(d/chi_n'(0)) - phi_alpha(d)| over the sample set."""
    if ctx.mode != "exact":
        raise InputError("comparison needs an exact-mode context")
    d = np.asarray(samples, complex)
    c0 = chi_prime0(ctx)
    u = d / c0
    inside = np.abs(u) < ctx.domain_radius
    diff = np.abs(ctx.chi(u[inside]) - lin(d[inside]))
    return {"sup": float(diff.max()) if diff.size else float("nan"), "chi_prime0": c0,
            "coverage": float(inside.mean()), "count": int(inside.sum())}
