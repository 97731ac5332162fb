import numpy as np
import pytest

from artifact.cfrac import eval_to_precision, make_setup, preset
from artifact.density import (CSV_HEADER, DENSITY_SLACK, ExperimentConfig, GridMask, dens, density_experiment,
                              inclusion_spot_check, sample_Yn, siegel_mask)
from artifact.dynamics import ExplodedMapContext, QuadraticMap
from artifact.errors import InputError, RequiredBudget, UndefinedDensity
from artifact.geometry import (DESK_FLOOR, DESK_LADDER, Annulus, Disk, RegionId, Xn, Yn, contains_array,
                               make_params, yn_density_exact)

GOLDEN = preset("golden")
D2 = RegionId("Disk", (2.0,))


@pytest.fixture(scope="module")
def golden_map():
    return QuadraticMap(eval_to_precision(GOLDEN, 128).value, 128)


@pytest.fixture(scope="module")
def setup5():
    return make_setup(GOLDEN, GOLDEN, 5, 10)


@pytest.fixture(scope="module")
def desk(setup5):
    return make_params(setup5, DESK_LADDER, DESK_FLOOR)


@pytest.fixture(scope="module")
def small_mask(golden_map):
    return siegel_mask(golden_map, D2, 0j, (0.8, 0.8), (128, 128), 2000, recurrence_tol=4 * 0.8 / 128)


def test_mask_trivial_pixels(golden_map):
    # odd resolution puts a pixel center exactly at 0
    m = siegel_mask(golden_map, D2, 0j, (2.5, 2.5), (101, 101), 1)
    assert m.lookup(np.array([0j]))[0]
    C = m.centers()
    assert not m.bits[np.abs(C) > 2].any()
    assert m.meta["T"] == 1 and "trap" in m.meta["rule"]
    with pytest.raises(InputError):
        siegel_mask(golden_map, D2, 0j, (1, 1), (8, 8), 0)


def test_mask_monotone_in_budget(golden_map):
    a = siegel_mask(golden_map, D2, 0j, (1.2, 1.2), (96, 96), 200)
    b = siegel_mask(golden_map, D2, 0j, (1.2, 1.2), (96, 96), 400)
    assert not (b.bits & ~a.bits).any()
    assert b.area <= a.area


def test_mask_is_deterministic(golden_map, small_mask):
    again = siegel_mask(golden_map, D2, 0j, (0.8, 0.8), (128, 128), 2000, recurrence_tol=4 * 0.8 / 128)
    assert again.bits.tobytes() == small_mask.bits.tobytes()


def test_recurrence_isolates_siegel_disk(golden_map, small_mask):
    # plain non-escape gives the filled Julia set, which is larger
    filled = siegel_mask(golden_map, D2, 0j, (0.8, 0.8), (128, 128), 2000)
    assert small_mask.area < 0.5 * filled.area
    # coarse pixels overcount the boundary; the 512^2 run pins the area
    assert 0.37 < small_mask.area < 0.46


@pytest.mark.slow
def test_mask_area_stabilizes(golden_map):
    tol = 4 * 0.8 / 512
    m4 = siegel_mask(golden_map, D2, 0j, (0.8, 0.8), (512, 512), 10 ** 4, recurrence_tol=tol)
    m5 = siegel_mask(golden_map, D2, 0j, (0.8, 0.8), (512, 512), 10 ** 5, recurrence_tol=tol)
    assert abs(m5.area - m4.area) <= 0.02 * m4.area
    assert m4.area == pytest.approx(0.393, abs=0.01)


def test_dens_trivial(desk):
    U = Annulus(desk.r7, desk.r8)
    assert dens(U, U, desk, 2000, 0).value == 1.0
    assert dens(U, Disk(0.5 * desk.r7), desk, 2000, 0).value == 0.0
    assert dens(U, lambda z: np.abs(z) < np.inf, desk, 100, 0).value == 1.0
    empty = GridMask(0j, (1.0, 1.0), np.zeros((4, 4), bool))
    with pytest.raises(UndefinedDensity):
        dens(empty, empty)
    with pytest.raises(UndefinedDensity):
        dens(empty, Disk(0.5), desk)


def test_dens_Yn_golden_n5(desk):
    est = dens(Annulus(desk.r7, desk.r8), Yn(), desk, 10 ** 5, 0)
    assert est.method == "monte-carlo" and est.count == 10 ** 5
    assert est.value >= 0.5 - DENSITY_SLACK - 3 * est.stderr
    # semi-analytic value from integrated arc coverage
    assert abs(est.value - yn_density_exact(desk)) < 3 * est.stderr


def test_grid_and_monte_carlo_agree(golden_map, small_mask):
    C = small_mask.centers()
    U = GridMask(small_mask.center, small_mask.half, np.abs(C) < 0.3)
    g = dens(U, small_mask)
    assert g.method == "grid"
    mc = dens(RegionId("Disk", (0.3,)), small_mask, None, 20000, 1)
    assert abs(g.value - mc.value) < 2 * mc.stderr + 0.01
    # disk of radius 0.3 sits inside the golden Siegel disk
    assert g.value > 0.97


def test_weighted_estimate(desk):
    U = Annulus(desk.r7, desk.r8)
    est = dens(U, Yn(), desk, 5000, 3, weights=lambda z: np.ones(z.size))
    plain = dens(U, Yn(), desk, 5000, 3)
    assert est.value == pytest.approx(plain.value)


@pytest.fixture(scope="module")
def small_cfg():
    return ExperimentConfig(n_values=(3, 4), samples=4000, seed=7)


def test_experiment_is_deterministic(small_cfg):
    rows, text = density_experiment(small_cfg)
    _, again = density_experiment(small_cfg)
    _, threaded = density_experiment(small_cfg, workers=2)
    assert text == again == threaded
    assert text.splitlines()[0] == ",".join(CSV_HEADER)
    assert [r["A_n"] for r in rows] == [2 ** 3, 2 ** 5]
    assert all(r["dens_Dn"] == "" for r in rows)


def test_experiment_refuses_small_budget():
    cfg = ExperimentConfig(n_values=(4,), orbit=True, budget=10)
    with pytest.raises(RequiredBudget) as exc:
        density_experiment(cfg)
    assert "q_n^2" in str(exc.value)


def test_config_validation():
    with pytest.raises(InputError):
        ExperimentConfig(A_rule="cubic")
    with pytest.raises(InputError):
        ExperimentConfig(A=1.0)
    with pytest.raises(InputError):
        ExperimentConfig(n_values=(1, 2))
    assert ExperimentConfig(A_rule="fixed", A_fixed=10).floor() == 0.1


@pytest.fixture(scope="module")
def exact5(setup5):
    return ExplodedMapContext(setup5, "exact")


def test_inclusion_small(desk, exact5):
    rep = inclusion_spot_check(desk, exact5, count=100, seed=4)
    assert rep.samples == 100
    assert rep.lift_violations == 0 and rep.orbit_violations == 0
    assert rep.max_root_residual < 1e-9
    assert rep.min_lift_height > desk.height(desk.r6)
    assert rep.budget == 10 * 8 ** 2 * 11


def test_inclusion_boundary_stressed(desk, exact5):
    z = sample_Yn(desk, 50, 9, r_lo=desk.r7 * (1 + 1e-6))
    z = z * (desk.r7 * (1 + 1e-6) / np.abs(z))  # push every sample onto |z| just above r7
    z = z[contains_array(desk, Yn(), z)]
    assert z.size > 0
    rep = inclusion_spot_check(desk, exact5, points=z, budget=2000)
    assert rep.orbit_violations == 0 and rep.lift_violations == 0


def test_outside_Xn_is_not_asserted(desk, exact5):
    # one-sided statement: points just outside X_n are reported, never required to escape
    z = np.array([desk.r8 * 1.02 * np.exp(0.1j)])
    assert not contains_array(desk, Xn(), z)[0]
    rep = inclusion_spot_check(desk, exact5, points=z, budget=200)
    assert rep.samples == 1
