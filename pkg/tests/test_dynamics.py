import numpy as np
import mpmath
import pytest

from artifact.cfrac import eval_to_precision, make_setup, preset
from artifact.dynamics import (ExplodedMapContext, QuadraticMap, chi_prime0, chi_series, compare_explosion_to_linearizer,
                               explosion_cycle, f_n_eval, iterate, iterate_array, linearizer, qn_expansion_residual)
from artifact.errors import InputError, OutsideUnivalentDomain

GOLDEN = preset("golden")
ALPHA = eval_to_precision(GOLDEN, 128).value


@pytest.fixture(scope="module")
def golden_map():
    return QuadraticMap(ALPHA, 128)


@pytest.fixture(scope="module")
def exact_ctx():
    return {n: ExplodedMapContext(make_setup(GOLDEN, GOLDEN, n, 10), "exact") for n in (4, 5, 6)}


def test_iterate_trivial(golden_map):
    assert iterate(golden_map, 0, 1000) == (0, None)
    assert iterate(golden_map, 0.3 + 0.1j, 0)[0] == 0.3 + 0.1j
    z, esc = iterate(golden_map, 3.0, 5)
    assert esc == 1
    with pytest.raises(InputError):
        iterate(golden_map, 0.1, -1)


def test_point_inside_siegel_disk_never_escapes(golden_map):
    assert iterate(golden_map, 0.1, 10 ** 4)[1] is None
    z, esc = iterate_array(golden_map.lam, np.array([0.1, 0.0, 2.5]), 10 ** 4)
    assert list(esc) == [-1, -1, 1]


def test_linearizer_coefficients_and_residual(golden_map):
    lin = linearizer(golden_map.lam_mp, 200, precision_bits=128)
    with mpmath.workprec(128):
        lam = golden_map.lam_mp
        assert abs(lin.coeffs[0] - 1) == 0
        assert abs(lin.coeffs[1] - 1 / (lam ** 2 - lam)) < 1e-20
    assert lin.residual(lin.radius_estimate / 2, 100) < 1e-12
    assert 0.25 < lin.radius_estimate < 0.45


def test_linearizer_double_path_agrees(golden_map):
    mp = linearizer(golden_map.lam_mp, 200, precision_bits=128)
    dp = linearizer(golden_map.lam, 200, precision_bits=None)
    z = 0.1 * np.exp(2j * np.pi * np.arange(16) / 16)
    assert np.max(np.abs(mp(z) - dp(z))) < 1e-12


def test_two_cycle_closed_form():
    for delta in (0.05, 0.2, 0.3j):
        cyc = explosion_cycle(1, 2, delta)
        lam = complex(mpmath.expjpi(2 * cyc.eta))
        roots = np.roots([1, lam + 1, lam + 1])
        pts = np.array([complex(z) for z in cyc.points])
        for z in pts:
            assert np.min(np.abs(roots - z)) < 1e-12
        assert cyc.max_residual < 1e-10


def test_cycle_collapses_and_rotates():
    small = explosion_cycle(3, 8, 1e-3)
    big = explosion_cycle(3, 8, 0.3)
    assert max(abs(complex(z)) for z in small.points) < max(abs(complex(z)) for z in big.points)
    assert max(abs(complex(z)) for z in small.points) < 1e-2
    # chi(zeta delta) = P_eta(chi(delta)): the point set at zeta*delta is the same cycle, shifted
    zeta = np.exp(2j * np.pi * 3 / 8)
    rot = explosion_cycle(3, 8, 0.3 * zeta)
    a = np.array([complex(z) for z in big.points])
    b = np.array([complex(z) for z in rot.points])
    assert np.max(np.min(np.abs(a[:, None] - b[None, :]), axis=1)) < 1e-12


def test_chi_series_matches_cycles():
    ser = chi_series(5, 8)  # golden p_5/q_5 = 5/8
    ctx = ExplodedMapContext(make_setup(GOLDEN, GOLDEN, 5, 10), "exact")
    zeta = np.exp(2j * np.pi * 5 / 8)
    for d in (0.2, 0.35j, -0.3 + 0.1j):
        cyc = explosion_cycle(5, 8, d)
        lam = complex(mpmath.expjpi(2 * cyc.eta))
        chi = complex(ctx.chi(d))
        assert min(abs(chi - complex(z)) for z in cyc.points) < 1e-10
        assert abs(lam * chi + chi * chi - complex(ser(zeta * d))) < 1e-10
    assert ser.radius_estimate > 0.5


def test_f_n_proxy_residual():
    ctx = ExplodedMapContext(make_setup(GOLDEN, GOLDEN, 5, 10), "proxy")
    rng = np.random.default_rng(3)
    z = 0.3 * np.sqrt(rng.random(100)) * np.exp(2j * np.pi * rng.random(100))
    _, _, res = ctx.f_iter(z, 1)
    assert np.max(res) < 1e-10
    assert f_n_eval(ctx, 0).value == 0
    with pytest.raises(OutsideUnivalentDomain):
        f_n_eval(ctx, 1.5)


def test_f_n_approaches_rotation(exact_ctx):
    z = 0.3 * np.exp(2j * np.pi * np.arange(64) / 64)
    lam = np.exp(2j * np.pi * float(ALPHA))
    sups = [np.max(np.abs(exact_ctx[n].f_iter(z, 1)[0] - lam * z)) for n in (4, 5, 6)]
    assert sups[0] > sups[1] > sups[2]


def test_qn_expansion_residual(exact_ctx):
    r = [qn_expansion_residual(exact_ctx[n], 0.2 * np.exp(0.3j)) for n in (4, 5, 6)]
    assert r[1] < 0.5
    assert r[0] > r[1] > r[2]
    assert r[1] == pytest.approx(0.0345, abs=0.005)


def test_chi_prime0_trend(exact_ctx):
    rhat = linearizer(QuadraticMap(ALPHA, 128).lam, 1000, precision_bits=None).radius_estimate
    d = [abs(chi_prime0(exact_ctx[n])) for n in (4, 5, 6)]
    assert d[0] > d[1] > d[2] > rhat
    assert abs(chi_prime0(exact_ctx[5], 1e-5)) == pytest.approx(d[1], rel=1e-6)


def test_compare_explosion_trend(exact_ctx):
    lin = linearizer(QuadraticMap(ALPHA, 128).lam, 1000, precision_bits=None)
    rng = np.random.default_rng(0)
    d = 0.5 * lin.radius_estimate * np.sqrt(rng.random(400)) * np.exp(2j * np.pi * rng.random(400))
    sups = [compare_explosion_to_linearizer(exact_ctx[n], lin, d)["sup"] for n in (4, 5, 6)]
    assert sups[0] > sups[1] > sups[2]
    assert compare_explosion_to_linearizer(exact_ctx[5], lin, [0j])["sup"] == 0


def test_univalence_radius(exact_ctx):
    # chi' vanishes where chi meets the critical point of P_eta
    u = [exact_ctx[n].univalence_radius for n in (4, 5, 6)]
    assert u[0] < u[1] < u[2]
    assert u[1] == pytest.approx(0.502, abs=0.002)
    assert exact_ctx[5].critical_count(0.99 * u[1]) == 0
    assert exact_ctx[5].critical_count(1.02 * u[1]) >= 1
