"""Regions, the covering pi_n and the lift of Y_n into the strip H_n(r6, r5).

Coordinate-plane objects (Q_n, K_n, the strips) live in the sign-normalized
frame where epsilon_n > 0.  For odd n the z-plane is mapped to that frame by
the antiholomorphic involution v = omega*conj(z), omega = exp(i pi/q_n), which
conjugates P_{alpha_n} to a map with perturbation |epsilon_n|.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from scipy import integrate

from .cfrac import PerturbationSetup
from .errors import InclusionViolation, InputError, OutsideDomain, UnsupportedRegion

LADDER_KEYS = ("r3", "r5", "r7", "r8", "r6", "r4", "r2p", "r2", "r1", "r", "rp", "r0", "r0p")


# Hand-tuned ladder for golden alpha, n=5, A_n=10 in exact mode.  r'_0 sits below
# the first critical point of chi_5 (about 0.502) and r6/r8 is wide enough for
# the Y_n lift into H_n(r6, r5).
DESK_LADDER = dict(r3=0.28, r5=0.30, r7=0.32, r8=0.36, r6=0.42, r4=0.43, r2p=0.44, r2=0.45,
                   r1=0.46, r=0.47, rp=0.48, r0=0.49, r0p=0.495)
DESK_FLOOR = 0.25


def default_ladder(a_floor: float, top: float = 0.97, margin: float = 0.02) -> dict:
    """Geometric interpolation from a_floor + margin up to top."""
    vals = np.geomspace(a_floor + margin, top, len(LADDER_KEYS))
    return dict(zip(LADDER_KEYS, (float(v) for v in vals)))


def validate_ladder(ladder: dict, a_floor: float) -> None:
    missing = [k for k in LADDER_KEYS if k not in ladder]
    if missing:
        raise InputError(f"ladder misses {missing}")
    chain = [a_floor] + [ladder[k] for k in LADDER_KEYS] + [1.0]
    names = ["1/A"] + list(LADDER_KEYS) + ["1"]
    for (na, a), (nb, b) in zip(zip(names, chain), zip(names[1:], chain[1:])):
        if not a < b:
            raise InputError(f"ladder violates {na} < {nb} ({a} >= {b})")


@dataclass(frozen=True)
class RegionParams:
    setup: PerturbationSetup
    ladder: dict
    a_floor: float

    def __post_init__(self):
        validate_ladder(self.ladder, self.a_floor)

    def __getattr__(self, name):
        lad = self.__dict__.get("ladder")
        if lad is not None and name in lad:
            return lad[name]
        raise AttributeError(name)

    @property
    def q(self) -> int:
        return self.setup.q_n

    @property
    def eps(self) -> float:
        return self.setup.eps

    @property
    def e(self) -> float:
        return abs(self.setup.eps)

    @property
    def sign(self) -> int:
        return 1 if self.setup.eps > 0 else -1

    @property
    def L(self) -> float:
        """Period 1/(q^2 |eps|) of the covering."""
        return 1.0 / (self.q ** 2 * self.e)

    def height(self, r: float) -> float:
        """1/(2 pi q^2 r^q)."""
        return 1.0 / (2 * math.pi * self.q ** 2 * r ** self.q)

    def tau(self, r: float) -> float:
        return math.log1p(self.e / r ** self.q) / (2 * math.pi * self.q ** 2 * self.e)

    @property
    def a_n(self) -> float:
        return self.height(self.r1)

    @property
    def B(self) -> float:
        """Base point -1/(pi q^2 r1^q) of the Fatou normalization."""
        return -2 * self.a_n

    @property
    def s_n(self) -> float:
        t = self.r8 ** self.q
        return t / (t + self.e)

    @property
    def omega(self) -> complex:
        return complex(np.exp(1j * np.pi / self.q))

    def to_normalized(self, z):
        return z if self.sign > 0 else self.omega * np.conj(z)

    from_normalized = to_normalized

    def as_dict(self) -> dict:
        return {"ladder": dict(self.ladder), "a_floor": self.a_floor, "q_n": self.q, "eps_n": self.eps,
                "a_n": self.a_n, "B": self.B, "s_n": self.s_n, "L": self.L}


def make_params(setup: PerturbationSetup, ladder: Optional[dict] = None, a_floor: Optional[float] = None,
                top: float = 0.97, margin: float = 0.02) -> RegionParams:
    if a_floor is None:
        a_floor = 1.0 / setup.A_n if ladder is not None else None
    if ladder is None:
        if a_floor is None:
            raise InputError("need a ladder or an A-floor")
        ladder = default_ladder(a_floor, top, margin)
    return RegionParams(setup, dict(ladder), float(a_floor))


@dataclass(frozen=True)
class RegionId:
    tag: str
    args: tuple = ()

    PLANE = {"Qn": "Z", "Qn_a": "Z", "Kn": "Z", "QBn": "Z", "QBpn": "Z", "Hn_strip": "Z", "Hn_half": "Z",
             "Xn": "z", "Yn": "z", "Annulus": "z", "Disk": "z"}

    def __post_init__(self):
        if self.tag not in self.PLANE:
            raise InputError(f"unknown region {self.tag!r}")

    @property
    def plane(self) -> str:
        return self.PLANE[self.tag]

    def __str__(self):
        return f"{self.tag}({','.join(str(a) for a in self.args)})" if self.args else self.tag


def Qn():
    return RegionId("Qn")


def Qn_a(a: Union[float, str] = "a_n"):
    return RegionId("Qn_a", (a,))


def Kn(r2="r2", r3="r3"):
    return RegionId("Kn", (r2, r3))


def QBn():
    return RegionId("QBn")


def QBpn():
    return RegionId("QBpn")


def Hn_strip(r6="r6", r5="r5"):
    return RegionId("Hn_strip", (r6, r5))


def Hn_half(r1="r1"):
    return RegionId("Hn_half", (r1,))


def Xn(r8="r8"):
    return RegionId("Xn", (r8,))


def Yn(r8="r8", r7="r7"):
    return RegionId("Yn", (r8, r7))


def Annulus(r_in, r_out):
    return RegionId("Annulus", (r_in, r_out))


def Disk(r):
    return RegionId("Disk", (r,))


def _val(params: RegionParams, x) -> float:
    if isinstance(x, str):
        if x == "a_n":
            return params.a_n
        if x in params.ladder:
            return params.ladder[x]
        raise InputError(f"unknown ladder key {x!r}")
    return float(x)


def _in_Qn(p, Z):
    X, Y = Z.real, Z.imag
    return (Y != 0) | ((X > -p.L) & (X < 0))


def _in_Qn_a(p, Z, a):
    W = Z - a + p.L
    V = Z + a
    return (W.real > -np.abs(W.imag)) & (V.real < np.abs(V.imag))


def _in_Kn(p, Z, r2, r3):
    X, Y = Z.real, Z.imag
    h3 = p.height(r3)
    return (X >= -p.L - h3) & (X <= h3) & (Y >= p.height(r2))


def _xn_ratio(p, z):
    # signed eps in the original frame; equals the normalized ratio up to conjugation
    u = z ** p.q
    with np.errstate(all="ignore"):
        return u / (u - p.eps), u == p.eps


def contains_array(params: RegionParams, region: RegionId, pts) -> np.ndarray:
    """Vectorized membership.  Z-plane regions take normalized coordinates."""
    P = np.asarray(pts, complex)
    t, a = region.tag, region.args
    if t == "Qn":
        return _in_Qn(params, P)
    if t == "Qn_a":
        return _in_Qn_a(params, P, _val(params, a[0]))
    if t == "Kn":
        return _in_Kn(params, P, _val(params, a[0]), _val(params, a[1]))
    if t == "QBn":
        return _in_Qn_a(params, P, params.a_n) | _in_Kn(params, P, params.r2, params.r3)
    if t == "QBpn":
        return _in_Qn_a(params, P, params.a_n) | _in_Kn(params, P, params.r2p, params.r3)
    if t == "Hn_strip":
        return (np.abs(P.real) < params.height(_val(params, a[1]))) & (P.imag > params.height(_val(params, a[0])))
    if t == "Hn_half":
        return P.imag > params.tau(_val(params, a[0]))
    if t in ("Xn", "Yn"):
        r8 = _val(params, a[0])
        s = r8 ** params.q / (r8 ** params.q + params.e)
        w, degen = _xn_ratio(params, P)
        inside = (np.abs(w) < s) & ~degen
        if t == "Yn":
            inside &= np.abs(P) > _val(params, a[1])
        return inside
    if t == "Annulus":
        m = np.abs(P)
        return (m > _val(params, a[0])) & (m < _val(params, a[1]))
    if t == "Disk":
        return np.abs(P) < _val(params, a[0])
    raise UnsupportedRegion(str(region))


def contains(params: RegionParams, region: RegionId, point: complex) -> bool:
    return bool(contains_array(params, region, np.array([complex(point)]))[0])


def membership(params: RegionParams, region: RegionId, point: complex):
    """(inside, boundary_degenerate); degenerate only for z^q = eps in X_n / Y_n."""
    z = complex(point)
    degen = region.tag in ("Xn", "Yn") and z ** params.q == params.eps
    return contains(params, region, z), bool(degen)


def region_area(params: RegionParams, region: RegionId) -> float:
    a = region.args
    if region.tag == "Annulus":
        return math.pi * (_val(params, a[1]) ** 2 - _val(params, a[0]) ** 2)
    if region.tag == "Disk":
        return math.pi * _val(params, a[0]) ** 2
    raise UnsupportedRegion(f"no finite sampling window for {region}")


# covering

def log1mE(params: RegionParams, Z):
    """Log(1 - exp(-2 pi i Z/L)), continuous on Q_n."""
    Z = np.asarray(Z, complex)
    L = params.L
    up = Z.imag > 0
    with np.errstate(all="ignore"):
        eu = np.exp(np.where(up, 2j * np.pi * Z / L, 0))
        ed = np.exp(np.where(up, 0, -2j * np.pi * Z / L))
        return np.where(up, -2j * np.pi * Z / L - 1j * np.pi + np.log(1 - eu), np.log(1 - ed))


def pi_principal(params: RegionParams, Z):
    """Branch q of pi_n in the normalized frame: (e/(1 - e^{-2 pi i q^2 e Z}))^{1/q}."""
    return params.e ** (1.0 / params.q) * np.exp(-log1mE(params, Z) / params.q)


def dpi(params: RegionParams, Z, v=None):
    """d pi/dZ = 2 pi i q v (e - v^q) on every branch."""
    v = pi_principal(params, Z) if v is None else v
    return 2j * np.pi * params.q * v * (params.e - v ** params.q)


@dataclass(frozen=True)
class BranchedPoint:
    Z: complex
    branch: int
    z: complex  # original frame
    v: complex  # normalized frame

    def invariant_residual(self, params: RegionParams) -> float:
        E = np.exp(-2j * np.pi * params.q ** 2 * params.e * self.Z)
        return float(abs(self.v ** params.q * (1 - E) - params.e) / params.e)


def pi_n(params: RegionParams, Z: complex, j: int) -> BranchedPoint:
    """Branch j root: principal root times exp(2 pi i j/q)."""
    Z = complex(Z)
    if not 1 <= j <= params.q:
        raise InputError(f"branch index must be in 1..{params.q}")
    if not contains(params, Qn(), Z):
        raise OutsideDomain(f"{Z} is not in Q_n")
    v = complex(pi_principal(params, Z)) * np.exp(2j * np.pi * j / params.q)
    return BranchedPoint(Z, j, complex(params.from_normalized(v)), complex(v))


def pi_inverse_candidates(params: RegionParams, v, Zref, span: int = 1):
    """Preimages of v under the principal branch nearest Zref.

    Every preimage of v^q is W0 + kL; those with pi(W) = v are spaced qL
    apart, so there is at most one within distance qL/2 of any point.
    Returns (nearest, distance to the second nearest candidate).
    """
    v = np.asarray(v, complex)
    Zref = np.asarray(Zref, complex)
    q, L = params.q, params.L
    u = v ** q
    with np.errstate(all="ignore"):
        W0 = (1j * L / (2 * np.pi)) * np.log(1 - params.e / u)
    kc = np.round(np.real(Zref - W0) / L)
    best = np.full(v.shape, np.nan + 0j)
    bd = np.full(v.shape, np.inf)
    second = np.full(v.shape, np.inf)
    for dk in range(-span * q, span * q + 1):
        W = W0 + (kc + dk) * L
        ok = np.abs(pi_principal(params, W) - v) < 1e-7 * np.maximum(np.abs(v), 1e-300)
        d = np.where(ok, np.abs(W - Zref), np.inf)
        closer = d < bd
        second = np.where(closer, bd, np.minimum(second, d))
        best = np.where(closer, W, best)
        bd = np.where(closer, d, bd)
    return best, second


def lift_to_H_array(params: RegionParams, z):
    """(W, root-power residual, w) for points of Y_n; W in the normalized frame."""
    v = params.to_normalized(np.asarray(z, complex))
    q, e = params.q, params.e
    u = v ** q
    w = u / (u - e)
    W = np.log(w) / (2j * np.pi * q * q * e)
    with np.errstate(all="ignore"):
        back = pi_principal(params, W) ** q
    res = np.abs(back - u) / np.abs(u)
    return W, res, w


def lift_to_H(params: RegionParams, z: complex, tol: float = 1e-9) -> complex:
    W, res, w = lift_to_H_array(params, np.array([complex(z)]))
    W, res = complex(W[0]), float(res[0])
    if not contains(params, Hn_strip(), W) or not res < tol:
        raise InclusionViolation(f"lift of z={z} gives W={W}, residual {res:.3g}", z=z, W=W, residual=res,
                                 w=complex(w[0]))
    return W


# arcs and densities

@dataclass(frozen=True)
class ArcCoverage:
    length: float
    stderr: float
    fraction: float
    samples: int


def arc_coverage(params: RegionParams, t: float, theta1: float, theta2: float, samples: int = 10000) -> ArcCoverage:
    if theta2 < theta1 or theta2 > theta1 + 2 * np.pi + 1e-15:
        raise InputError("need theta1 <= theta2 <= theta1 + 2 pi")
    if theta1 == theta2:
        return ArcCoverage(0.0, 0.0, 0.0, samples)
    span = theta2 - theta1
    ang = theta1 + (np.arange(samples) + 0.5) / samples * span
    inside = contains_array(params, Yn(), t * np.exp(1j * ang))
    f = float(inside.mean())
    se = math.sqrt(max(f * (1 - f), 1.0 / samples) / samples) * span * t
    return ArcCoverage(f * span * t, se, f, samples)


def arc_fraction_exact(params: RegionParams, t: float, r8: Optional[float] = None) -> float:
    """Fraction of the circle |z| = t inside X_n, from the disk T_2^{-1}(D_{s_n})."""
    q, e = params.q, params.e
    R = (params.r8 if r8 is None else r8) ** q
    T = t ** q
    c = R * R / (2 * R + e)  # center at -c
    rho = R * (R + e) / (2 * R + e)
    kappa = (rho * rho - T * T - c * c) / (2 * T * c)
    return 1.0 - math.acos(min(1.0, max(-1.0, kappa))) / math.pi


def yn_density_exact(params: RegionParams, r_in: Optional[float] = None, r_out: Optional[float] = None) -> float:
    """dens of Y_n in the annulus (r_in, r_out) with r7 <= r_in by radial quadrature."""
    a = params.r7 if r_in is None else r_in
    b = params.r8 if r_out is None else r_out
    val, _ = integrate.quad(lambda t: 2 * t * arc_fraction_exact(params, t) * (t > params.r7), a, b, limit=200)
    return val / (b * b - a * a)


@dataclass(frozen=True)
class SampleSet:
    points: np.ndarray
    area_weight: float
    region: RegionId
    seed: int


def region_sampler(params: RegionParams, region: RegionId, count: int, seed: int) -> SampleSet:
    area = region_area(params, region)
    rng = np.random.default_rng(seed)
    if region.tag == "Annulus":
        r_in, r_out = _val(params, region.args[0]), _val(params, region.args[1])
    else:
        r_in, r_out = 0.0, _val(params, region.args[0])
    u, th = rng.random(count), rng.random(count)
    r = np.sqrt(r_in ** 2 + u * (r_out ** 2 - r_in ** 2))
    pts = r * np.exp(2j * np.pi * th)
    # the open boundary r = r_in has probability zero; nudge exact hits inward
    pts = np.where(np.abs(pts) <= r_in, pts * (1 + 1e-15), pts)
    return SampleSet(pts, area / count, region, seed)


def observed_M(params: RegionParams, r: float, count: int = 2000, seed: int = 0, ymax: float = 20.0) -> float:
    """max |pi(Z)|^q / r^q over samples of Q_n(1/(2 pi q^2 r^q)); logged, never asserted."""
    rng = np.random.default_rng(seed)
    a = params.height(r)
    X = rng.uniform(a - params.L, -a, count)
    Y = rng.uniform(-ymax, ymax, count)
    Z = X + 1j * Y
    Z = Z[_in_Qn_a(params, Z, a)]
    return float(np.max(np.abs(pi_principal(params, Z)) ** params.q) / r ** params.q)


def raster(params: RegionParams, region: RegionId, center: complex, half: tuple, res: tuple) -> np.ndarray:
    """Membership of pixel centers; row 0 is the top of the window."""
    nx, ny = res
    xs = center.real + half[0] * ((np.arange(nx) + 0.5) / nx * 2 - 1)
    ys = center.imag + half[1] * (1 - (np.arange(ny) + 0.5) / ny * 2)
    Xg, Yg = np.meshgrid(xs, ys)
    return contains_array(params, region, Xg + 1j * Yg)
