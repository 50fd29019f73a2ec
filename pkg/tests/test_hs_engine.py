import math

import numpy as np
import pytest

from cspi_lab.errors import ContourDeformationRequired, QuadratureNotConverged, UnsupportedDegree
from cspi_lab.hamiltonian_core import NormalHamiltonian, TimeGrid, exact_partition
from cspi_lab.hs_engine import (
    NoiseModel,
    SliceFactorScheme,
    SmoothField,
    generalized_determinant_check,
    hs_decouple,
    hs_partition_mc,
    hs_partition_series,
    hs_quadrature_small_n,
    scheme_system,
    slice_factor,
)

from conftest import Z_NAIVE, Z_STAR

ITO = SliceFactorScheme.ITO_CORRECTED
NAIVE = SliceFactorScheme.NAIVE_EXPONENTIAL
EXACT = SliceFactorScheme.EXACT_PRODUCT


def test_decoupled_symbol_matches_s_symbol(bose_hubbard):
    from cspi_lab.hamiltonian_core import s_symbol

    for s in (-1.0, -0.3, 0.0, 0.5, 1.0):
        dec = hs_decouple(bose_hubbard, s)
        sym = s_symbol(bose_hubbard, s)
        for x in (0.0, 0.7, 2.5):
            assert dec(x) == pytest.approx(sym(x), abs=1e-14)


def test_decouple_rejects_higher_degree():
    with pytest.raises(UnsupportedDegree):
        hs_decouple(NormalHamiltonian({1: 0.5, 2: 0.5, 3: 0.1}))


def test_noise_variance_scales_as_inverse_step():
    noise = NoiseModel(u=2.0, epsilon=0.01)
    assert noise.variance == pytest.approx(200.0)
    assert noise.std == pytest.approx(math.sqrt(200.0))


@pytest.mark.parametrize("n", [0, 1, 3, 8, 15])
def test_exact_product_moments_match_quadrature(n):
    noise = NoiseModel(1.0, 1 / 64)
    closed = slice_factor(n, EXACT, noise, -0.5, 1 / 64, method="closed")
    quad = slice_factor(n, EXACT, noise, -0.5, 1 / 64, method="quadrature")
    assert abs(closed - quad) <= 1e-10 * abs(closed)


@pytest.mark.parametrize("scheme", [NAIVE, ITO])
@pytest.mark.parametrize("s", [1.0, 0.0])
def test_exponential_schemes_closed_vs_quadrature(scheme, s):
    eps = 1 / 64
    dec = hs_decouple(NormalHamiltonian.bose_hubbard(-0.5, 1.0), s)
    noise = NoiseModel(1.0, eps)
    for n in (0, 2, 5):
        closed = slice_factor(n, scheme, noise, dec.mu_eff, eps, s, method="closed")
        quad = slice_factor(n, scheme, noise, dec.mu_eff, eps, s, method="quadrature")
        assert abs(closed - quad) <= 1e-10 * max(1.0, abs(closed))


def test_gauss_hermite_flags_unresolved_integrand():
    # at one slice the naive factor oscillates too fast for the rule at large n
    noise = NoiseModel(1.0, 1.0)
    with pytest.raises(QuadratureNotConverged):
        slice_factor(30, NAIVE, noise, -0.5, 1.0, nodes=16, method="quadrature")


@pytest.mark.parametrize("n", [1, 4, 16, 64, 256])
def test_ito_series_is_exact(bose_hubbard, n):
    est = hs_partition_series(bose_hubbard, TimeGrid(1.0, n), scheme=ITO)
    assert est.method == "hs-series"
    assert est.value == pytest.approx(Z_STAR, rel=1e-8)
    assert est.imag_residue < 1e-12


@pytest.mark.parametrize("s", [-1.0, -0.5, 0.0, 0.5])
def test_ito_series_exact_for_general_ordering(bose_hubbard, s):
    est = hs_partition_series(bose_hubbard, TimeGrid(1.0, 8), s=s, scheme=ITO)
    assert est.value == pytest.approx(Z_STAR, rel=1e-8)


@pytest.mark.parametrize("n", [1, 16, 256])
def test_naive_series_gives_wrong_limit(bose_hubbard, n):
    est = hs_partition_series(bose_hubbard, TimeGrid(1.0, n), scheme=NAIVE)
    assert est.value == pytest.approx(Z_NAIVE, rel=1e-8)


def test_exact_product_between_and_converging(bose_hubbard):
    vals = [hs_partition_series(bose_hubbard, TimeGrid(1.0, n), scheme=EXACT).value for n in (64, 128, 256)]
    assert all(Z_NAIVE < v < Z_STAR for v in vals)
    errs = [Z_STAR - v for v in vals]
    assert errs[0] / errs[1] == pytest.approx(2.0, rel=0.05)


def test_positive_mu_needs_deformation():
    H = NormalHamiltonian.bose_hubbard(0.3, 1.0)
    with pytest.raises(ContourDeformationRequired):
        hs_partition_series(H, TimeGrid(1.0, 8), scheme=ITO)


def test_scheme_system_single_sample(bose_hubbard):
    grid = TimeGrid(1.0, 4)
    rho = np.zeros(4)
    system = scheme_system(rho, bose_hubbard, grid, 1.0, EXACT)
    eps = grid.epsilon
    # rho = 0: P = 1, Q = 1 + eps mu
    assert np.allclose(system.diag, 1.0)
    assert np.allclose(system.sub, -(1 - 0.5 * eps))


def test_mc_thread_count_does_not_change_result(bose_hubbard):
    grid = TimeGrid(1.0, 16)
    one = hs_partition_mc(bose_hubbard, grid, scheme=ITO, samples=20_000, seed=7, threads=1)
    four = hs_partition_mc(bose_hubbard, grid, scheme=ITO, samples=20_000, seed=7, threads=4)
    assert one == four


def test_mc_seed_changes_result(bose_hubbard):
    grid = TimeGrid(1.0, 16)
    a = hs_partition_mc(bose_hubbard, grid, scheme=ITO, samples=8192, seed=1)
    b = hs_partition_mc(bose_hubbard, grid, scheme=ITO, samples=8192, seed=2)
    assert a.value != b.value


@pytest.mark.parametrize("scheme", [EXACT, ITO])
def test_mc_agrees_where_expansion_converges(scheme):
    # mu + U/2 < 0: |prod Q/P| < 1 for practically every noise sample
    H = NormalHamiltonian.bose_hubbard(-1.5, 1.0)
    grid = TimeGrid(1.0, 64)
    series = hs_partition_series(H, grid, scheme=scheme).value
    mc = hs_partition_mc(H, grid, scheme=scheme, samples=100_000, seed=0)
    assert abs(mc.value - series) < 3 * mc.stat_error


def test_shifted_contour_recovers_series(bose_hubbard):
    grid = TimeGrid(1.0, 64)
    series = hs_partition_series(bose_hubbard, grid, scheme=ITO).value
    mc = hs_partition_mc(bose_hubbard, grid, scheme=ITO, samples=100_000, seed=1, contour_shift=1.0)
    assert abs(mc.value - series) < 3 * mc.stat_error
    plain = hs_partition_mc(bose_hubbard, grid, scheme=ITO, samples=100_000, seed=1)
    assert abs(plain.value - series) > 10 * plain.stat_error


@pytest.mark.parametrize("n", [1, 2, 3])
def test_tensor_quadrature_matches_series(bose_hubbard, n):
    grid = TimeGrid(1.0, n)
    quad = hs_quadrature_small_n(bose_hubbard, grid, scheme=NAIVE)
    series = hs_partition_series(bose_hubbard, grid, scheme=NAIVE).value
    assert quad.real == pytest.approx(series, rel=1e-6)


def test_tensor_quadrature_ito_valid_point():
    H = NormalHamiltonian.bose_hubbard(-1.5, 1.0)
    grid = TimeGrid(1.0, 2)
    quad = hs_quadrature_small_n(H, grid, scheme=ITO)
    assert quad.real == pytest.approx(exact_partition(H, 1.0).value, rel=1e-6)


@pytest.mark.parametrize("s", [-1.0, 0.0, 0.5, 1.0])
def test_generalized_determinant_first_order(s):
    res = [generalized_determinant_check(s, SmoothField(0.3), TimeGrid(1.0, n), -0.5)[2] for n in (100, 200, 400)]
    assert res[0] / res[1] == pytest.approx(2.0, rel=0.1)
    assert res[1] / res[2] == pytest.approx(2.0, rel=0.1)
