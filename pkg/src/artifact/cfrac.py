"""Continued fractions, perturbed rotation numbers and Brjuno sums.

Convergents are exact Python integers; real values are mpmath floats at an
explicit precision that is passed around, never set globally.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import mpmath

from .errors import InputError, InsufficientQuotients, PrecisionExhausted, QuotientTooLarge

DEFAULT_BITS = 128
# 3**(2**q) is materialized only while it stays below this many bits
MAX_QUOTIENT_BITS = 1 << 26


@dataclass(frozen=True)
class QuotientSequence:
    """a_1, a_2, ... given by a finite prefix and a tail.

    tail is "finite", "periodic" (repeat ``period``) or "expr" (the
    self-referential alpha_0 rule, see build_alpha0).
    """

    prefix: tuple = ()
    tail: str = "finite"
    period: tuple = ()
    N: int = 1
    indices: tuple = ()
    _cache: list = field(default_factory=list, compare=False, repr=False)

    def __post_init__(self):
        if self.tail not in ("finite", "periodic", "expr"):
            raise InputError(f"unknown tail kind {self.tail!r}")
        for a in tuple(self.prefix) + tuple(self.period):
            if int(a) < 1:
                raise InputError(f"quotient {a} is not positive")
        if self.tail == "periodic" and not self.period:
            raise InputError("periodic tail needs a nonempty period")
        if self.tail == "finite" and not self.prefix:
            raise InputError("empty prefix with finite tail")
        if self.tail == "expr":
            if self.N < 1:
                raise InputError("N must be >= 1")
            if any(b <= a for a, b in zip(self.indices, self.indices[1:])) or any(i < 1 for i in self.indices):
                raise InputError("indices must be positive and strictly increasing")

    @property
    def is_finite(self) -> bool:
        return self.tail == "finite"

    def __len__(self):
        if self.is_finite:
            return len(self.prefix)
        raise TypeError("infinite quotient sequence")

    def has(self, k: int) -> bool:
        return not self.is_finite or k <= len(self.prefix)

    def quotient(self, k: int) -> int:
        """a_k, 1-indexed."""
        if k < 1:
            raise InputError("quotients are 1-indexed")
        if k <= len(self.prefix):
            return int(self.prefix[k - 1])
        if self.tail == "finite":
            raise InsufficientQuotients(f"sequence has only {len(self.prefix)} quotients, asked for a_{k}", k=k)
        if self.tail == "periodic":
            return int(self.period[(k - len(self.prefix) - 1) % len(self.period)])
        return self._expr_quotient(k)

    def take(self, k: int) -> list:
        return [self.quotient(i) for i in range(1, k + 1)]

    def _expr_quotient(self, k):
        # walk left to right; the cache stores (a_m, q_m)
        c = self._cache
        special = {i + 1 for i in self.indices}
        while len(c) < k:
            m = len(c) + 1
            if m <= len(self.prefix):
                a = int(self.prefix[m - 1])
            elif m in special:
                qprev = c[m - 2][1]
                nbits = math.ceil(2 ** qprev * math.log2(3)) if qprev < 64 else MAX_QUOTIENT_BITS + 1
                if nbits > MAX_QUOTIENT_BITS:
                    raise QuotientTooLarge(
                        f"a_{m} = 3^(2^{qprev}) needs about 2^{qprev}*log2(3) bits", m=m, q=qprev)
                a = 3 ** (2 ** qprev)
            else:
                a = self.N
            q1 = c[-1][1] if c else 1
            q2 = c[-2][1] if len(c) > 1 else (1 if c else 0)
            c.append((a, a * q1 + q2))
        return c[k - 1][0]

    # text format
    def dumps(self) -> str:
        lines = ["prefix: " + " ".join(str(a) for a in self.prefix)]
        if self.tail == "finite":
            lines.append("tail: finite")
        elif self.tail == "periodic":
            lines.append("tail: periodic " + " ".join(str(a) for a in self.period))
        else:
            lines.append(f"tail: expr N={self.N} idx=" + ",".join(str(i) for i in self.indices))
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str) -> "QuotientSequence":
        prefix, tail = (), None
        for raw in text.splitlines():
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, val = line.partition(":")
            if not sep:
                raise InputError(f"malformed line {raw!r}")
            key, val = key.strip(), val.split()
            try:
                if key == "prefix":
                    prefix = tuple(int(v) for v in val)
                elif key == "tail":
                    tail = val
                else:
                    raise InputError(f"unknown key {key!r}")
            except ValueError as exc:
                raise InputError(f"bad integer in {raw!r}") from exc
        if not tail:
            raise InputError("missing tail line")
        kind = tail[0]
        if kind == "finite":
            return cls(prefix=prefix)
        if kind == "periodic":
            return cls(prefix=prefix, tail="periodic", period=tuple(int(v) for v in tail[1:]))
        if kind == "expr":
            opts = dict(t.split("=", 1) for t in tail[1:])
            if set(opts) - {"N", "idx"}:
                raise InputError(f"unknown expr options {sorted(set(opts) - {'N', 'idx'})}")
            idx = tuple(int(v) for v in opts.get("idx", "").split(",") if v)
            return cls(prefix=prefix, tail="expr", N=int(opts.get("N", 1)), indices=idx)
        raise InputError(f"unknown tail kind {kind!r}")


PRESETS = {
    "golden": QuotientSequence(tail="periodic", period=(1,)),
    "silver": QuotientSequence(tail="periodic", period=(2,)),
    "bronze": QuotientSequence(tail="periodic", period=(3,)),
}


def preset(name: str) -> QuotientSequence:
    try:
        return PRESETS[name]
    except KeyError:
        raise InputError(f"unknown preset {name!r}; known: {', '.join(sorted(PRESETS))}") from None


@dataclass(frozen=True)
class Convergent:
    p: int
    q: int
    k: int


def _pq(seq: QuotientSequence, k: int):
    """Lists p_{-1..k}, q_{-1..k} shifted so index i holds p_{i-1}."""
    p, q = [1, 0], [0, 1]
    for i in range(1, k + 1):
        a = seq.quotient(i)
        p.append(a * p[-1] + p[-2])
        q.append(a * q[-1] + q[-2])
    return p, q


def convergents(seq: QuotientSequence, k: int) -> list:
    if k < 1:
        raise InputError("k must be >= 1")
    p, q = _pq(seq, k)
    return [Convergent(p[i + 1], q[i + 1], i) for i in range(1, k + 1)]


def pq(seq: QuotientSequence, k: int):
    """(p_k, q_k, p_{k-1}, q_{k-1}) with p_0/q_0 = 0/1."""
    p, q = _pq(seq, k)
    return p[k + 1], q[k + 1], p[k], q[k]


@dataclass(frozen=True)
class RealValue:
    value: mpmath.mpf
    error_bound: mpmath.mpf
    depth: int
    bits: int


def eval_real(seq: QuotientSequence, depth: int, precision_bits: int = DEFAULT_BITS) -> RealValue:
    """[0; a_1, ..., a_depth] with the convergent-interval error bound."""
    if depth < 1:
        raise InputError("depth must be >= 1")
    p, q, _, _ = pq(seq, depth)
    with mpmath.workprec(precision_bits):
        v = mpmath.mpf(p) / q
        if seq.has(depth + 1):
            qn = pq(seq, depth + 1)[1]
            err = mpmath.mpf(1) / (mpmath.mpf(q) * qn)
        else:
            err = mpmath.mpf(0)
    return RealValue(v, err, depth, precision_bits)


def eval_to_precision(seq: QuotientSequence, precision_bits: int, max_depth: int = 100000) -> RealValue:
    """Evaluate deep enough that the tail error is below 2^-(bits-10)."""
    target = mpmath.mpf(2) ** (-(precision_bits - 10))
    q1, q0, p1, p0 = 1, 0, 0, 1  # q_k, q_{k-1}, p_k, p_{k-1}
    k = 0
    while k < max_depth:
        if not seq.has(k + 1):
            break
        a = seq.quotient(k + 1)
        q1, q0 = a * q1 + q0, q1
        p1, p0 = a * p1 + p0, p1
        k += 1
        if seq.has(k + 1) and (q1 * (seq.quotient(k + 1) * q1 + q0)).bit_length() > precision_bits - 8:
            break
    with mpmath.workprec(precision_bits):
        v = mpmath.mpf(p1) / q1
        if seq.has(k + 1):
            err = mpmath.mpf(1) / (mpmath.mpf(q1) * (seq.quotient(k + 1) * q1 + q0))
        else:
            err = mpmath.mpf(0)
    if err > target:
        raise InsufficientQuotients("could not reach the requested precision", depth=k)
    return RealValue(v, err, k, precision_bits)


@dataclass(frozen=True)
class PerturbationSetup:
    alpha_quotients: QuotientSequence
    theta_quotients: QuotientSequence
    n: int
    A_n: int
    p_n: int
    q_n: int
    p_prev: int
    q_prev: int
    alpha_n: mpmath.mpf
    epsilon_n: mpmath.mpf
    epsilon_direct: mpmath.mpf
    theta_value: mpmath.mpf
    alpha_value: mpmath.mpf
    precision_bits: int

    @property
    def eps(self) -> float:
        return float(self.epsilon_n)

    @property
    def theta(self) -> float:
        return float(self.theta_value)

    @property
    def alpha(self) -> float:
        return float(self.alpha_value)

    @property
    def alpha_n_float(self) -> float:
        return float(self.alpha_n)

    @property
    def dual_relative_error(self) -> mpmath.mpf:
        with mpmath.workprec(self.precision_bits + 64):
            return abs(self.epsilon_direct - self.epsilon_n) / abs(self.epsilon_n)

    def as_dict(self) -> dict:
        d = 40
        return {
            "n": self.n, "A_n": str(self.A_n), "p_n": str(self.p_n), "q_n": str(self.q_n),
            "q_prev": str(self.q_prev), "alpha_n": mpmath.nstr(self.alpha_n, d),
            "epsilon_n": mpmath.nstr(self.epsilon_n, d), "epsilon_direct": mpmath.nstr(self.epsilon_direct, d),
            "theta": mpmath.nstr(self.theta_value, d), "precision_bits": self.precision_bits,
            "dual_relative_error": mpmath.nstr(self.dual_relative_error, 5),
        }


def _fold(quotients: Sequence[int], x):
    """[0; a_1, ..., a_n + 1/x]-style fold: returns 1/(a_1 + 1/(... + 1/x))."""
    v = x
    for a in reversed(quotients):
        v = a + 1 / v
    return 1 / v


def make_setup(alpha: QuotientSequence, theta: QuotientSequence, n: int, A_n: int,
               precision_bits: int = DEFAULT_BITS) -> PerturbationSetup:
    if n < 1:
        raise InputError("n must be >= 1")
    A_n = int(A_n)
    if A_n < 1:
        raise InputError("A_n must be >= 1")
    if not alpha.has(n):
        raise InsufficientQuotients(f"alpha needs at least {n} quotients")
    p, q, pm, qm = pq(alpha, n)
    # bits needed to see eps against alpha_n ~ 1: log2(q^2 (A+2)) plus headroom
    need = (q * q * (A_n + 2) + q * qm).bit_length() + 30
    if precision_bits < need:
        raise PrecisionExhausted(f"{precision_bits} bits cannot resolve eps_{n}; use at least {need}",
                                 advisory_bits=need)
    # the direct difference cancels about log2(1/eps) bits, so it runs with guard bits
    work = precision_bits + need + 16
    th = eval_to_precision(theta, work)
    al = eval_to_precision(alpha, precision_bits) if not alpha.is_finite or len(alpha) > n else None
    with mpmath.workprec(work):
        x = A_n + th.value
        an = _fold(alpha.take(n), x)
        direct = an - mpmath.mpf(p) / q
        closed = mpmath.mpf((-1) ** n) / (q * q * x + q * qm)
    with mpmath.workprec(precision_bits):
        an, closed, direct = +an, +closed, +direct
        tol = mpmath.mpf(2) ** (-(precision_bits - 20))
        rel = abs(direct - closed) / abs(closed)
    if rel >= tol:
        raise PrecisionExhausted(f"dual evaluation of eps_{n} disagrees (rel {mpmath.nstr(rel, 3)})",
                                 advisory_bits=2 * precision_bits)
    return PerturbationSetup(alpha, theta, n, A_n, p, q, pm, qm, an, closed, direct, +th.value,
                             al.value if al is not None else mpmath.mpf(p) / q, precision_bits)


@dataclass(frozen=True)
class BrjunoPartialSum:
    K: int
    value: mpmath.mpf
    terms: tuple


def biglog(n: int) -> float:
    """Natural log of a positive big integer via its bit length."""
    b = n.bit_length()
    if b <= 1000:
        return math.log(n)
    shift = b - 64
    return math.log(n >> shift) + shift * math.log(2)


def brjuno_sum(seq: QuotientSequence, K: int, precision_bits: int = DEFAULT_BITS) -> BrjunoPartialSum:
    """Sum_{k=1}^K log(q_{k+1})/q_k."""
    if K < 1:
        raise InputError("K must be >= 1")
    _, q = _pq(seq, K + 1)
    qs = q[1:]  # qs[k] = q_k
    with mpmath.workprec(precision_bits):
        terms = tuple(mpmath.mpf(biglog(qs[k + 1])) / qs[k] for k in range(1, K + 1))
        value = mpmath.fsum(terms)
    return BrjunoPartialSum(K, value, terms)


def build_alpha0(N: int, indices: Sequence[int]) -> QuotientSequence:
    """a_m = N except a_{n_j+1} = 3^(2^q_{n_j}), evaluated lazily left to right."""
    return QuotientSequence(tail="expr", N=int(N), indices=tuple(int(i) for i in indices))


def alpha_n_rule(rule: str, q_n: int, A: float = 2.0, fixed: int = 10) -> int:
    """A_n from a config rule: 'fixed' or 'power' (ceil(A^q_n))."""
    if rule == "fixed":
        return int(fixed)
    if rule == "power":
        with mpmath.workprec(64 + 2 * q_n):
            return int(mpmath.ceil(mpmath.mpf(A) ** q_n))
    raise InputError(f"unknown A_n rule {rule!r}")
