from fractions import Fraction
import math

import mpmath
import pytest
from hypothesis import given, settings, strategies as st

from artifact import cfrac
from artifact.cfrac import QuotientSequence, build_alpha0, convergents, eval_real, make_setup, preset
from artifact.errors import InputError, InsufficientQuotients, PrecisionExhausted, QuotientTooLarge

GOLDEN = preset("golden")


def fold(qs):
    x = Fraction(0)
    for a in reversed(qs):
        x = 1 / (a + x)
    return x


def test_golden_convergents_match_exact_fold():
    cs = convergents(QuotientSequence(prefix=(1, 1, 1, 1, 1)), 5)
    assert [(c.p, c.q) for c in cs] == [(1, 1), (1, 2), (2, 3), (3, 5), (5, 8)]
    for k, c in enumerate(cs, 1):
        assert Fraction(c.p, c.q) == fold([1] * k)


def test_single_level():
    c = convergents(QuotientSequence(prefix=(2,)), 1)[0]
    assert (c.p, c.q) == (1, 2)


@given(st.lists(st.integers(1, 10 ** 6), min_size=1, max_size=40))
def test_determinant_identity_and_fold(qs):
    cs = convergents(QuotientSequence(prefix=tuple(qs)), len(qs))
    p, q = [0] + [c.p for c in cs], [1] + [c.q for c in cs]
    for k in range(1, len(qs) + 1):
        assert p[k - 1] * q[k] - p[k] * q[k - 1] == (-1) ** k
    assert Fraction(p[-1], q[-1]) == fold(qs)


def test_insufficient_quotients():
    with pytest.raises(InsufficientQuotients):
        convergents(QuotientSequence(prefix=(2, 3)), 3)


def test_eval_real_finite_and_golden():
    v = eval_real(QuotientSequence(prefix=(2, 2)), 2)
    with mpmath.workprec(128):
        assert v.value == mpmath.mpf(2) / 5
    g = eval_real(GOLDEN, 40, 128)
    assert abs(g.value - (mpmath.sqrt(5) - 1) / 2) < 1e-15


@settings(max_examples=30)
@given(st.lists(st.integers(1, 50), min_size=3, max_size=20))
def test_value_between_last_two_convergents(qs):
    seq = QuotientSequence(prefix=tuple(qs), tail="periodic", period=(1,))
    d = len(qs)
    cs = convergents(seq, d + 1)
    lo, hi = sorted([Fraction(cs[-2].p, cs[-2].q), Fraction(cs[-1].p, cs[-1].q)])
    v = eval_real(seq, d, 200).value
    with mpmath.workprec(200):
        assert mpmath.mpf(lo.numerator) / lo.denominator <= v <= mpmath.mpf(hi.numerator) / hi.denominator


def test_sequence_text_round_trip():
    for seq in (GOLDEN, QuotientSequence(prefix=(3, 1, 4), tail="finite"),
                QuotientSequence(prefix=(2,), tail="periodic", period=(1, 2)), build_alpha0(1, (2, 4))):
        assert QuotientSequence.loads(seq.dumps()) == seq
    with pytest.raises(InputError):
        QuotientSequence.loads("prefix: 1\ntail: nonsense")
    with pytest.raises(InputError):
        preset("platinum")


def test_epsilon_n4_dual_evaluation():
    s = make_setup(GOLDEN, GOLDEN, 4, 10, 200)
    assert (s.p_n, s.q_n) == (3, 5)
    assert s.eps > 0
    with mpmath.workprec(400):
        th = (mpmath.sqrt(5) - 1) / 2
        closed = 1 / (25 * (10 + th) + 15)
        assert abs(s.epsilon_n - closed) < mpmath.mpf(2) ** -180 * closed
        assert s.dual_relative_error < mpmath.mpf(2) ** -180


def test_epsilon_n1_hand_value():
    s = make_setup(GOLDEN, GOLDEN, 1, 1, 128)
    assert (s.q_n, s.q_prev) == (1, 1)
    th = (math.sqrt(5) - 1) / 2
    assert s.eps == pytest.approx(-1 / ((1 + th) + 1), rel=1e-15)


@pytest.mark.parametrize("n", [2, 4, 6, 8])
def test_even_n_positive(n):
    assert make_setup(GOLDEN, GOLDEN, n, 10).eps > 0


def test_precision_guard():
    with pytest.raises(PrecisionExhausted):
        make_setup(GOLDEN, GOLDEN, 8, 10 ** 30, 64)


def test_brjuno_golden_converges():
    b = cfrac.brjuno_sum(GOLDEN, 20)
    t = [float(x) for x in b.terms]
    ratios = [t[k + 1] / t[k] for k in range(10, 18)]
    assert max(ratios) < 0.7  # geometric decay of the terms
    assert float(b.value) == pytest.approx(sum(t))
    with pytest.raises(InsufficientQuotients):
        cfrac.brjuno_sum(QuotientSequence(prefix=(3,)), 2)


def test_alpha0_quotients():
    seq = build_alpha0(1, (2, 4))
    assert [seq.quotient(k) for k in (1, 2)] == [1, 1]
    assert seq.quotient(3) == 81
    assert seq.quotient(4) == 1
    q = [c.q for c in convergents(seq, 4)]
    assert q == [1, 2, 163, 165]
    with pytest.raises(QuotientTooLarge):
        seq.quotient(5)
    # bit length of a_{n_j+1} is ceil(2^{q_{n_j}} log2 3) for a materializable case
    small = build_alpha0(1, (1,))
    a2 = small.quotient(2)
    assert a2 == 9 and a2.bit_length() == math.ceil(2 ** 1 * math.log2(3))


def test_alpha0_brjuno_term_uses_big_log():
    seq = build_alpha0(1, (2,))
    b = cfrac.brjuno_sum(seq, 3)
    q = [1] + [c.q for c in convergents(seq, 4)]
    assert float(b.terms[2]) == pytest.approx(cfrac.biglog(q[4]) / q[3], rel=1e-12)
    assert cfrac.biglog(3 ** 5000) == pytest.approx(5000 * math.log(3), rel=1e-12)


def test_alpha_n_rule():
    assert cfrac.alpha_n_rule("power", 13, 2.0) == 2 ** 13
    assert cfrac.alpha_n_rule("fixed", 13, fixed=7) == 7
    with pytest.raises(InputError):
        cfrac.alpha_n_rule("cubic", 3)
