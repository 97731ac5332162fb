import numpy as np
import pytest

from artifact.cfrac import make_setup, preset
from artifact.dynamics import ExplodedMapContext
from artifact.errors import LiftAmbiguity, OutsideCylinder
from artifact.fatou import (FatouCoordinate, LiftContext, RenormContext, commutation_residual, conjugacy_residual,
                            fatou_phi, lift_Fn, lift_Gn, phi_inv, renormalize, rotation_check, validation_samples)
from artifact.geometry import DESK_FLOOR, DESK_LADDER, Hn_half, Qn_a, contains_array, make_params

GOLDEN = preset("golden")


@pytest.fixture(scope="module")
def setup5():
    return make_setup(GOLDEN, GOLDEN, 5, 10)


@pytest.fixture(scope="module")
def proxy_ctx(setup5):
    return LiftContext(make_params(setup5, DESK_LADDER, DESK_FLOOR), ExplodedMapContext(setup5, "proxy"))


@pytest.fixture(scope="module")
def exact_ctx(setup5):
    return LiftContext(make_params(setup5, DESK_LADDER, DESK_FLOOR), ExplodedMapContext(setup5, "exact"))


@pytest.fixture(scope="module")
def phi(exact_ctx):
    return FatouCoordinate(exact_ctx)


def test_proxy_lifts_high_in_the_strip(proxy_ctx):
    Z = validation_samples(proxy_ctx, 60, seed=1, ylo=4.0, yhi=12.0, region=Qn_a())
    assert Z.size == 60
    assert np.max(conjugacy_residual(proxy_ctx, Z)) < 1e-9
    assert np.max(conjugacy_residual(proxy_ctx, Z, "G")) < 1e-9
    assert np.max(np.abs(proxy_ctx.F(Z)[0] - Z - 1)) < 0.25
    assert np.max(np.abs(proxy_ctx.G(Z)[0] - Z - proxy_ctx.shift_G)) < 0.25
    assert np.max(commutation_residual(proxy_ctx, Z)) < 1e-8


def test_F_deviation_decreases_with_height(exact_ctx):
    X = -3.0
    dev = [abs(lift_Fn(exact_ctx, complex(X, y)) - complex(X, y) - 1) for y in (2, 5, 10, 30)]
    assert dev == sorted(dev, reverse=True)
    assert dev[-1] < 1e-2


def test_strict_lift_rejects_large_deviation(proxy_ctx):
    Z = complex(-3.0, -3.0)
    W = lift_Fn(proxy_ctx, Z)
    assert abs(W - Z - 1) > 0.25
    with pytest.raises(LiftAmbiguity):
        lift_Fn(proxy_ctx, Z, strict=True)
    G = lift_Gn(proxy_ctx, complex(-3.0, 6.0), strict=True)
    assert abs(G - complex(-3.0, 6.0) - proxy_ctx.shift_G) < 0.25


def test_commutation_on_upper_half(exact_ctx):
    p = exact_ctx.params
    Z = validation_samples(exact_ctx, 40, seed=2, ylo=p.height(p.r2), yhi=10.0, region=Hn_half("r2"))
    assert np.all(contains_array(p, Hn_half("r2"), Z))
    assert np.max(commutation_residual(exact_ctx, Z)) < 1e-8


def test_phi_normalization_and_abel(phi, exact_ctx):
    B = phi.B
    assert fatou_phi(phi, B).value == B
    Z = validation_samples(exact_ctx, 20, seed=3, steps=3)
    assert np.max(phi.abel_residual(Z)) < 1e-6
    F3 = Z
    for _ in range(3):
        F3 = exact_ctx.F(F3)[0]
    assert np.max(np.abs(phi(F3) - phi(Z) - 3)) < 3e-6
    # holomorphy of the numerical coordinate
    assert np.max(phi.cr_defect(Z[:5])) < 1e-4


def test_phi_imaginary_part_tracks_height(phi):
    ys = np.array([2.0, 5.0, 10.0, 30.0])
    vals = phi(-3.0 + 1j * ys)
    assert np.all(np.diff(vals.imag) > 0)
    d = np.abs(phi.derivative(-3.0 + 1j * ys) - 1)
    assert d[-1] < d[0] and d[-1] < 1e-3


def test_phi_inverse_round_trip(phi):
    for W in (phi.B + 2j, phi.B + 0.4 + 5j, phi.B - 1.3 + 1j):
        Z = phi_inv(phi, W)
        assert abs(fatou_phi(phi, Z).value - W) < 1e-8


@pytest.fixture(scope="module")
def renorm(phi):
    return RenormContext(phi)


def test_renormalization(renorm, exact_ctx, setup5):
    rho = renorm.rho_n
    assert renormalize(renorm, 0).value == 0
    mods = [abs(renormalize(renorm, rho * s * np.exp(0.7j)).value) for s in (0.5, 0.05, 0.005)]
    assert mods[0] > mods[1] > mods[2]
    with pytest.raises(OutsideCylinder):
        renormalize(renorm, 2 * rho)
    est = rotation_check(renorm, rho / 20)
    target = np.exp(-2j * np.pi * setup5.theta)
    assert abs(abs(est.estimate) - 1) < 1e-2
    assert abs(np.angle(est.estimate / target)) < 1e-2
    assert not est.unstable


def test_deck_identification(renorm, phi, exact_ctx):
    # Z and F(Z) give the same point of the quotient cylinder
    Z = np.array([renorm.Z_n + 0.3 + 1j, renorm.Z_n + 0.6 + 2j])
    a = np.exp(2j * np.pi * phi(exact_ctx.G(Z)[0]))
    b = np.exp(2j * np.pi * phi(exact_ctx.G(exact_ctx.F(Z)[0])[0]))
    assert np.max(np.abs(a - b) / np.abs(a)) < 1e-6
