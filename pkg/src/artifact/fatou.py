"""Lifts F_n, G_n, the perturbed Fatou coordinate and cylinder renormalization.

Everything here lives in the sign-normalized coordinate plane (see geometry).

Fatou coordinate scheme.  Let l(t) = B + it and d(t) = F(l(t)) - l(t).  The
strip S between l and F(l) is straightened by

    sigma(s, t) = (1 - b(s)) (l + s d) + b(s) F(l + (s - 1) d),

b a smooth step on [0.2, 0.8], so sigma(s + 1, t) = F(sigma(s, t)) near s = 0.
The Beltrami coefficient mu of sigma is periodic in s; the cylinder equation
G_sbar = mu G_s, G = s + it + g(s, t) is solved in Fourier modes of s.
Then Phi = G o sigma^{-1} + c0 satisfies Phi o F = Phi + 1 by construction,
and c0 enforces Phi(B) = B.  Holomorphy is only as good as the discretization
and is reported as a Cauchy-Riemann defect.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline

from .dynamics import ExplodedMapContext
from .errors import (CoordinateUnreachable, InputError, LiftAmbiguity, OutsideCylinder)
from .geometry import QBpn, RegionParams, contains_array, dpi, pi_inverse_candidates, pi_principal

quiet = np.errstate(all="ignore")


class LiftContext:
    """Lifts of f_n^q and f_n^{q_{n-1}} through pi_n (principal branch)."""

    def __init__(self, params: RegionParams, dyn: ExplodedMapContext, newton_tol: float = 1e-14,
                 polish_steps: int = 3):
        if dyn.setup is not params.setup and dyn.setup != params.setup:
            raise InputError("params and dynamics context disagree on the setup")
        self.params, self.dyn = params, dyn
        self.newton_tol, self.polish_steps = newton_tol, polish_steps
        self.q, self.qm = params.q, params.setup.q_prev
        self.shift_G = -(params.setup.A_n + params.setup.theta)

    def pi(self, Z):
        return pi_principal(self.params, Z)

    def dpi(self, Z):
        return dpi(self.params, Z)

    @quiet
    def _lift(self, Z, k, shift):
        Z = np.asarray(Z, complex)
        v = self.pi(Z)
        w, dw, fres = self.dyn.g_iter(v, k)
        W, second = pi_inverse_candidates(self.params, w, Z + shift)
        for _ in range(self.polish_steps):
            W = W - (self.pi(W) - w) / self.dpi(W)
        res = np.abs(self.pi(W) - w)
        return W, dw * self.dpi(Z) / self.dpi(W), res, second

    def F(self, Z):
        """(F_n(Z), F_n'(Z)) vectorized."""
        W, d, _, _ = self._lift(Z, self.q, 1.0)
        return W, d

    def G(self, Z):
        W, d, _, _ = self._lift(Z, self.qm, self.shift_G)
        return W, d

    def F_full(self, Z):
        return self._lift(Z, self.q, 1.0)

    def G_full(self, Z):
        return self._lift(Z, self.qm, self.shift_G)

    @quiet
    def F_inv(self, Z, maxit: int = 40):
        """Solve F(W) = Z by Newton seeded at Z - 1."""
        Z = np.asarray(Z, complex)
        W = Z - 1
        for _ in range(maxit):
            FW, dF = self.F(W)
            step = (FW - Z) / dF
            W = W - step
            if not np.any(np.abs(step) > 1e-14 * np.maximum(1, np.abs(W))):
                break
        return W


def _lift_scalar(ctx: LiftContext, Z, full, shift, strict):
    Z = complex(Z)
    W, _, res, second = full(np.array([Z]))
    W, res, second = complex(W[0]), float(res[0]), float(second[0])
    if not np.isfinite(W):
        raise LiftAmbiguity(f"no preimage on the branch of pi_n near {Z + shift}", Z=Z)
    if second < ctx.params.L:
        raise LiftAmbiguity("two lift candidates closer than 1/(q^2 eps)", Z=Z)
    if strict and not abs(W - Z - shift) < 0.25:
        raise LiftAmbiguity(f"|lift - seed| = {abs(W - Z - shift):.3g} >= 1/4", Z=Z, W=W, residual=res)
    return W


def lift_Fn(ctx: LiftContext, Z: complex, strict: bool = False) -> complex:
    """F_n(Z); strict=True asserts |F_n(Z) - Z - 1| < 1/4."""
    return _lift_scalar(ctx, Z, ctx.F_full, 1.0, strict)


def lift_Gn(ctx: LiftContext, Z: complex, strict: bool = False) -> complex:
    return _lift_scalar(ctx, Z, ctx.G_full, ctx.shift_G, strict)


def conjugacy_residual(ctx: LiftContext, Z, which: str = "F"):
    """|pi(F(Z)) - f^q(pi(Z))| (or the G analogue)."""
    _, _, res, _ = (ctx.F_full if which == "F" else ctx.G_full)(Z)
    return res


def validation_samples(ctx: LiftContext, count: int, seed: int = 0, ylo: float = -3.0, yhi: float = 8.0,
                       steps: int = 1, region=None):
    """Points Z of QB'_n (or ``region``) with F^j(Z) in QB'_n for j <= steps."""
    p = ctx.params
    region = QBpn() if region is None else region
    rng = np.random.default_rng(seed)
    out, total = [], 0
    for _ in range(1000):
        Z = rng.uniform(p.a_n - p.L, p.height(p.r3), 4 * count) + 1j * rng.uniform(ylo, yhi, 4 * count)
        Z = Z[contains_array(p, region, Z)]
        ok = np.ones(Z.shape, bool)
        W = Z
        for _ in range(steps):
            W = ctx.F(W)[0]
            ok &= np.isfinite(W) & contains_array(p, QBpn(), W)
        out.append(Z[ok])
        total += ok.sum()
        if total >= count:
            break
    return np.concatenate(out)[:count]


def commutation_residual(ctx: LiftContext, Z):
    Z = np.asarray(Z, complex)
    return np.abs(ctx.F(ctx.G(Z)[0])[0] - ctx.G(ctx.F(Z)[0])[0])


# Beltrami solver on the cylinder

@quiet
def _smooth_step(s):
    def h(x):
        return np.where(x > 0, np.exp(-1 / np.maximum(x, 1e-300)), 0.0)

    def dh(x):
        xs = np.maximum(x, 1e-300)
        return np.where(x > 0, np.exp(-1 / xs) / xs ** 2, 0.0)

    a = (s - 0.2) / 0.6
    num, den = h(a), h(a) + h(1 - a)
    b = num / den
    db = (dh(a) * den - num * (dh(a) - dh(1 - a))) / den ** 2 / 0.6
    return b, db


def solve_beltrami(mu: np.ndarray, tg: np.ndarray, iters: int = 100, tol: float = 1e-13):
    """Periodic-in-s solution g of g_sbar - mu g_s = mu on the t grid.

    Mode k of g obeys g_k' = 2 pi k g_k - 2i R_k, R = mu (1 + g_s).  Growing
    modes are integrated from the side where they decay, with an exponential
    integrator exact for piecewise-linear forcing.  Returns (g_k, g, g_s, iterations).
    """
    nt, Ns = mu.shape
    k = np.fft.fftfreq(Ns, 1.0 / Ns)
    h = np.diff(tg)
    a = 2 * np.pi * np.abs(k)
    pos, neg, zero = k > 0, k < 0, k == 0
    gs = np.zeros_like(mu)
    gk = None
    for it in range(1, iters + 1):
        Rk = np.fft.fft(mu * (1 + gs), axis=1) / Ns
        f = -2j * Rk
        gk = np.zeros_like(Rk)
        ap, fp = a[pos], f[:, pos]
        cur = fp[0] / ap
        gk[0, pos] = cur
        for i in range(nt - 1):
            x = ap * h[i]
            em = np.exp(-x)
            w0 = -np.expm1(-x) / ap
            w1 = (x - 1 + em) / (ap * ap * h[i])
            cur = em * cur + fp[i] * w0 + (fp[i + 1] - fp[i]) * w1
            gk[i + 1, pos] = cur
        an, fn = a[neg], f[:, neg]
        cur = -fn[-1] / an
        gk[-1, neg] = cur
        for i in range(nt - 2, -1, -1):
            x = an * h[i]
            em = np.exp(-x)
            w0 = -np.expm1(-x) / an
            w1 = (1 - em - x * em) / (an * an * h[i])
            cur = em * cur - (fn[i] * w0 + (fn[i + 1] - fn[i]) * w1)
            gk[i, neg] = cur
        f0 = f[:, zero][:, 0]
        gk[:, zero] = np.concatenate([[0], np.cumsum(0.5 * (f0[1:] + f0[:-1]) * h)])[:, None]
        dgk = 2j * np.pi * k * gk - Rk
        new = np.fft.ifft(dgk * Ns, axis=1)
        change = np.max(np.abs(new - gs))
        gs = new
        if change < tol:
            break
    g = np.fft.ifft(gk * Ns, axis=1)
    return gk, g, gs, it


def default_t_grid(hin: float = 0.02, tmin: float = -15.0, tmax: float = 400.0, core: float = 6.0):
    """Uniform near the real axis, geometric above and below.

    The small offset keeps nodes off t = 0 exactly.
    """
    tin = np.arange(-core, core, hin) + 0.0073
    tup = core + np.cumsum(np.geomspace(hin, 8, 300))
    tup = tup[tup < tmax]
    tdn = -core - np.cumsum(np.geomspace(hin, 2, 200))
    tdn = tdn[tdn > tmin][::-1]
    return np.concatenate([tdn, tin, tup])


@dataclass(frozen=True)
class PhiValue:
    value: complex
    abel_residual: float
    steps: int


class FatouCoordinate:
    """Phi_n with Phi_n(F_n(Z)) = Phi_n(Z) + 1 and Phi_n(B) = B."""

    scheme = "quasiconformal straightening of S plus Fourier-mode Beltrami solve on the cylinder"

    def __init__(self, ctx: LiftContext, Ns: int = 64, hin: float = 0.02, tmin: float = -15.0,
                 tmax: float = 400.0, max_transport: int = 200):
        self.ctx = ctx
        self.B = ctx.params.B
        self.Ns, self.max_transport = Ns, max_transport
        self.tg = default_t_grid(hin, tmin, tmax)
        self.tmin, self.tmax = float(self.tg[0]), float(self.tg[-1])
        # cached anchor data: the boundary line and its image
        line = self.B + 1j * self.tg
        self.anchor_line = line
        self.anchor_image = ctx.F(line)[0]
        S, T = np.meshgrid(np.arange(Ns) / Ns, self.tg)
        _, ss, st = self.sigma(S, T)
        mu = ((ss + 1j * st) / 2) / ((ss - 1j * st) / 2)
        self.mu_max = float(np.abs(mu).max())
        gk, _, _, self.iterations = solve_beltrami(mu, self.tg)
        self.kk = np.fft.fftfreq(Ns, 1.0 / Ns)
        self._spl = CubicSpline(self.tg, gk, axis=0)
        self._gB = None
        self._gB = complex(self._phi_strip(np.array([self.B + 0j]))[0])
        self.c0 = self.B - self._gB

    # straightening of S
    @quiet
    def sigma(self, S, T):
        F = self.ctx.F
        line = self.B + 1j * np.asarray(T)
        Fl, dFl = F(line)
        d = Fl - line
        dd = 1j * (dFl - 1)
        Zl = line + S * d
        Fz, dF = F(line + (S - 1) * d)
        b, db = _smooth_step(np.asarray(S, float))
        sig = (1 - b) * Zl + b * Fz
        ss = -db * Zl + (1 - b) * d + db * Fz + b * dF * d
        st = (1 - b) * (1j + S * dd) + b * dF * (1j + (S - 1) * dd)
        return sig, ss, st

    @quiet
    def sigma_inv(self, Z, maxit: int = 50):
        Z = np.asarray(Z, complex)
        s = np.clip(np.real(Z - self.B) / 0.7, 0, 1)
        t = np.imag(Z).copy()
        for _ in range(maxit):
            sg, ss, st = self.sigma(s, t)
            r = sg - Z
            det = ss.real * st.imag - st.real * ss.imag
            ds = (-r.real * st.imag + r.imag * st.real) / det
            dt = (-ss.real * r.imag + ss.imag * r.real) / det
            s, t = s + ds, t + dt
            if not np.any(np.abs(ds) + np.abs(dt) > 1e-14):
                break
        return s, t

    def Gcyl(self, s, t):
        s, t = np.asarray(s, float), np.asarray(t, float)
        gk = self._spl(np.clip(t, self.tmin, self.tmax))
        g = np.sum(gk * np.exp(2j * np.pi * self.kk * s[..., None]), axis=-1)
        return s + 1j * t + g

    def _phi_strip(self, Z):
        s, t = self.sigma_inv(Z)
        g = self.Gcyl(s, t)
        # B + (G - G(B)) rather than G + c0, so that Phi(B) = B holds exactly
        return g if self._gB is None else self.B + (g - self._gB)

    def in_strip(self, Z):
        Z = np.asarray(Z, complex)
        return (Z.real >= self.B) & (self.ctx.F_inv(Z).real < self.B)

    @quiet
    def transport(self, Z):
        """Move Z into S with F or F^{-1}; returns (Z', m) with Z' = F^m(Z)."""
        Z = np.array(Z, complex, copy=True)
        m = np.zeros(Z.shape, int)
        for _ in range(self.max_transport):
            left = Z.real < self.B
            if not left.any():
                break
            Z[left] = self.ctx.F(Z[left])[0]
            m[left] += 1
        for _ in range(self.max_transport):
            back = self.ctx.F_inv(Z)
            right = back.real >= self.B
            if not right.any():
                break
            Z[right] = back[right]
            m[right] -= 1
        bad = ~np.isfinite(Z) | (Z.real < self.B) | (Z.imag < self.tmin) | (Z.imag > self.tmax)
        Z[bad] = np.nan
        return Z, m

    def phi_array(self, Z):
        Zs, m = self.transport(Z)
        return self._phi_strip(Zs) - m

    def __call__(self, Z):
        return self.phi_array(Z)

    def abel_residual(self, Z):
        Z = np.asarray(Z, complex)
        return np.abs(self.phi_array(self.ctx.F(Z)[0]) - self.phi_array(Z) - 1)

    @quiet
    def phi_inv(self, W, maxit: int = 60):
        """(Z, m) with Z in S and Phi(Z) = W - m."""
        W = np.asarray(W, complex) - self.c0
        m = np.floor(W.real)
        V = W - m
        s, t = V.real.copy(), V.imag.copy()
        d = 1e-6
        for _ in range(maxit):
            g = self.Gcyl(s, t) - V
            gs = (self.Gcyl(s + d, t) - self.Gcyl(s - d, t)) / (2 * d)
            gt = (self.Gcyl(s, t + d) - self.Gcyl(s, t - d)) / (2 * d)
            det = gs.real * gt.imag - gt.real * gs.imag
            ds = (-g.real * gt.imag + g.imag * gt.real) / det
            dt = (-gs.real * g.imag + gs.imag * g.real) / det
            s, t = s + ds, t + dt
            if not np.any(np.abs(ds) + np.abs(dt) > 1e-14):
                break
        k = np.floor(s)
        Z = self.sigma(s - k, t)[0]
        return Z, (m + k).astype(int)

    def derivative(self, Z, h: float = 1e-3):
        """Phi' by central differences with one Richardson step."""
        Z = np.asarray(Z, complex)

        def cd(hh):
            return (self.phi_array(Z + hh) - self.phi_array(Z - hh)) / (2 * hh)

        return (4 * cd(h / 2) - cd(h)) / 3

    def cr_defect(self, Z, h: float = 1e-3):
        """|Phi_zbar| / |Phi_z| from finite differences; zero for a holomorphic map."""
        Z = np.asarray(Z, complex)
        px = (self.phi_array(Z + h) - self.phi_array(Z - h)) / (2 * h)
        py = (self.phi_array(Z + 1j * h) - self.phi_array(Z - 1j * h)) / (2 * h)
        return np.abs(px + 1j * py) / np.abs(px - 1j * py)

    def describe(self) -> dict:
        return {"scheme": self.scheme, "B": self.B, "Ns": self.Ns, "t_nodes": int(self.tg.size),
                "t_range": [self.tmin, self.tmax], "mu_max": self.mu_max, "beltrami_iterations": self.iterations,
                "c0": self.c0}


def fatou_phi(coord: FatouCoordinate, Z: complex) -> PhiValue:
    Z = complex(Z)
    Zs, m = coord.transport(np.array([Z]))
    if not np.isfinite(Zs[0]):
        raise CoordinateUnreachable(f"orbit of {Z} does not reach the fundamental strip", Z=Z)
    val = complex(coord._phi_strip(Zs)[0] - m[0])
    res = float(coord.abel_residual(np.array([Z]))[0])
    return PhiValue(val, res, int(m[0]))


def phi_inv(coord: FatouCoordinate, W: complex) -> complex:
    """Z with Phi(Z) = W, taken in the F-orbit of the strip point."""
    Z, m = coord.phi_inv(np.array([complex(W)]))
    Z, m = complex(Z[0]), int(m[0])
    ctx = coord.ctx
    for _ in range(abs(m)):
        Z = complex((ctx.F(np.array([Z]))[0] if m > 0 else ctx.F_inv(np.array([Z])))[0])
    return Z


# renormalization

@dataclass(frozen=True)
class RenormValue:
    value: complex
    residual: float


@dataclass(frozen=True)
class RotationEstimate:
    estimate: complex
    spread: float
    per_ray: tuple
    h: float
    unstable: bool


class RenormContext:
    def __init__(self, phi: FatouCoordinate, X_n: float = 0.0, probe_angles: int = 256, safety: float = 0.9):
        p = phi.ctx.params
        if not abs(X_n) < p.height(p.r5):
            raise InputError("X_n must satisfy |X_n| < 1/(2 pi q^2 r5^q)")
        self.phi, self.ctx, self.params = phi, phi.ctx, p
        self.theta_value = p.setup.theta
        self.Z_n = complex(X_n, p.height(p.r4))
        # exp(Phi(H_n)) is bounded by the image of the segment [Z_n, F(Z_n)]
        FZ = complex(self.ctx.F(np.array([self.Z_n]))[0][0])
        u = np.linspace(0, 1, probe_angles)
        seg = (1 - u) * self.Z_n + u * FZ
        mods = np.abs(np.exp(2j * np.pi * phi.phi_array(seg)))
        self.rho_n = float(safety * np.min(mods))
        self.FZ_n = FZ

    def _in_H(self, Z):
        X = self.Z_n.real
        return (Z.real >= X) & (self.ctx.F_inv(Z).real < X) & (Z.imag >= self.Z_n.imag - 1)

    def _to_H(self, Z, m, maxit: int = 60):
        Z = Z.copy()
        m = m.copy()
        X = self.Z_n.real
        for _ in range(maxit):
            left = Z.real < X
            if not left.any():
                break
            Z[left] = self.ctx.F(Z[left])[0]
            m[left] += 1
        for _ in range(maxit):
            back = self.ctx.F_inv(Z)
            right = back.real >= X
            if not right.any():
                break
            Z[right] = back[right]
            m[right] -= 1
        return Z, m

    @quiet
    def evaluate(self, z):
        """R(f_n)(z) and an Abel-residual estimate, vectorized."""
        z = np.asarray(z, complex)
        W = np.log(z) / (2j * np.pi)
        Zs, m = self.phi.phi_inv(W)
        Zh, mh = self._to_H(Zs, m)  # Phi(Zh) = W - m + (mh - m) ... tracked via mh
        Zg = self.ctx.G(Zh)[0]
        val = np.exp(2j * np.pi * (self.phi.phi_array(Zg) + mh))
        res = self.phi.abel_residual(Zh)
        return val, res


def renormalize(rc: RenormContext, z: complex) -> RenormValue:
    z = complex(z)
    if z == 0:
        return RenormValue(0j, 0.0)
    if not abs(z) < rc.rho_n:
        raise OutsideCylinder(f"|z|={abs(z):.3g} is not below rho_n={rc.rho_n:.3g}")
    val, res = rc.evaluate(np.array([z]))
    if not np.isfinite(val[0]):
        raise OutsideCylinder(f"no preimage of {z} in the strip")
    return RenormValue(complex(val[0]), float(res[0]))


def rotation_check(rc: RenormContext, h: float, tol: float = 1e-2, rays: int = 4,
                   phase: float = 0.3) -> RotationEstimate:
    """R'(0) from R(w)/w averaged over rays, with a Richardson step h -> h/2."""
    if not 0 < h < rc.rho_n / 10:
        raise InputError(f"need 0 < h < rho_n/10 = {rc.rho_n / 10:.3g}")
    om = np.exp(2j * np.pi * np.arange(rays) / rays + 1j * phase)

    def avg(hh):
        w = hh * om
        r = rc.evaluate(w)[0] / w
        return r.mean(), r

    d1, r1 = avg(h)
    d2, r2 = avg(h / 2)
    # averaging over the rays kills the w, ..., w^{rays-1} terms
    est = (2 ** rays * d2 - d1) / (2 ** rays - 1)
    spread = float(max(abs(d2 - d1), np.max(np.abs(r2 - d2)) / 2 ** 0))
    return RotationEstimate(complex(est), spread, tuple(complex(x) for x in r2), h, spread > 10 * tol)
