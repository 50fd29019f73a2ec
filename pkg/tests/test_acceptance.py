"""Acceptance gate: one test per criterion, each at its stated tolerance.

A summary line per criterion is printed at the end of the pytest run.
"""

import itertools
import math
import time

import numpy as np

from cspi_lab.errors import LabError
from cspi_lab.gaussian_oracle import quadrature_partition_small_n
from cspi_lab.hamiltonian_core import (
    NormalHamiltonian,
    TimeGrid,
    TruncationPolicy,
    anti_normal_product,
    exact_partition,
    s_ordered_number_power,
    transfer_partition,
    verify_ordering_identity,
)
from cspi_lab.hs_engine import (
    NoiseModel,
    SliceFactorScheme,
    hs_partition_mc,
    hs_partition_series,
    hs_quadrature_small_n,
    slice_factor,
)
from cspi_lab.lab_cli import det_agreement, fitted_order, main
from cspi_lab.ordering_rules import (
    GeneratingProbe,
    abc_from_sources,
    closed_form_abc,
    f_closed,
    f_numeric,
    replacement_limit_check,
)

from conftest import record_criterion

BETA = 1.0
H = NormalHamiltonian.bose_hubbard(-0.5, 1.0)
S_GRID = [-1.0, -0.5, 0.0, 0.5, 1.0]


def z_star():
    return exact_partition(H, BETA).value


def loglog_slope(ns, errs):
    return np.polyfit(np.log(ns), np.log(errs), 1)[0]


def test_criterion_01_exact_reference():
    base = exact_partition(H, BETA, TruncationPolicy(n_max=64, tol=1e-12))
    wider = exact_partition(H, BETA, TruncationPolicy(n_max=74, tol=1e-12))
    change = abs(wider.value - base.value)
    ok = change < 1e-12 and base.tail_bound < 1e-12
    record_criterion(1, ok, f"Z* = {base.value:.16g}, n_max+10 change {change:.1e}, tail {base.tail_bound:.1e}")
    assert ok


def test_criterion_02_transfer_order():
    zs = z_star()
    ns = [16, 32, 64, 128, 256, 512, 1024]
    start = time.perf_counter()
    errs = [abs(transfer_partition(H, TimeGrid(BETA, n)).value - zs) / zs for n in ns]
    elapsed = time.perf_counter() - start
    slope = -loglog_slope(ns, errs)
    ok = abs(slope - 1.0) <= 0.2 and elapsed < 10
    record_criterion(2, ok, f"log-log slope {slope:.4f}, rel. error at N=1024 {errs[-1]:.2e}, {elapsed:.2f} s")
    assert ok


def test_criterion_03_ito_identity():
    zs = z_star()
    errs = {n: abs(hs_partition_series(H, TimeGrid(BETA, n), scheme=SliceFactorScheme.ITO_CORRECTED).value / zs - 1) for n in (1, 4, 16, 64, 256)}
    worst = max(errs.values())
    ok = worst < 1e-8
    record_criterion(3, ok, f"worst rel. error {worst:.1e} over N in {sorted(errs)}")
    assert ok


def test_criterion_04_naive_wrong_limit():
    naive = math.fsum(math.exp(-BETA * (-H.mu * n + H.u * n * n / 2)) for n in range(60))
    errs = {n: abs(hs_partition_series(H, TimeGrid(BETA, n), scheme=SliceFactorScheme.NAIVE_EXPONENTIAL).value / naive - 1) for n in (1, 4, 16, 64, 256, 1024)}
    worst = max(errs.values())
    ok = worst < 1e-8
    record_criterion(4, ok, f"naive limit {naive:.10f}, worst rel. error {worst:.1e}")
    assert ok


def test_criterion_05_exact_product_convergence():
    zs = z_star()
    ns = [64, 128, 256, 512, 1024]
    errs = [abs(hs_partition_series(H, TimeGrid(BETA, n), scheme=SliceFactorScheme.EXACT_PRODUCT).value - zs) / zs for n in ns]
    order = fitted_order(ns, errs)
    worst = 0.0
    for n in (16, 64, 256):
        eps = BETA / n
        noise = NoiseModel(H.u, eps)
        for k in range(0, 21, 4):
            closed = slice_factor(k, SliceFactorScheme.EXACT_PRODUCT, noise, H.mu, eps, method="closed")
            quad = slice_factor(k, SliceFactorScheme.EXACT_PRODUCT, noise, H.mu, eps, method="quadrature")
            worst = max(worst, abs(closed - quad) / abs(closed))
    ok = abs(order - 1.0) <= 0.2 and worst < 1e-10
    record_criterion(5, ok, f"empirical order {order:.4f}, closed vs quadrature E(n) {worst:.1e}")
    assert ok


def test_criterion_06_generating_function():
    worst_f = 0.0
    for s, n, ae, x, y in itertools.product(S_GRID, (1, 2, 3, 8, 32, 128), (0.01, 0.1, 0.5), (0.0, 0.05, -0.05), (0.0, 0.05, 0.2)):
        p = GeneratingProbe(n=n, epsilon=ae, s=s, x=x, y=y)
        worst_f = max(worst_f, abs(f_numeric(p) / f_closed(p) - 1))
    worst_abc = 0.0
    for s, n in itertools.product(S_GRID, (2, 8, 32)):
        p = GeneratingProbe(n=n, epsilon=0.1, s=s)
        closed, fd = closed_form_abc(p), abc_from_sources(p)
        scale = max(abs(closed.A), abs(closed.B), abs(closed.C))
        worst_abc = max(worst_abc, *(abs(getattr(fd, k) - getattr(closed, k)) / scale for k in "ABC"))
    ok = worst_f < 1e-9 and worst_abc < 1e-6
    record_criterion(6, ok, f"f rel. error {worst_f:.1e}, A/B/C from sources {worst_abc:.1e}")
    assert ok


def test_criterion_07_replacement_rule():
    ratios = []
    limits = []
    for s in S_GRID:
        for pq, limit in (((1, 2), 2.0), ((2, 3), 6.0)):
            rows = replacement_limit_check(*pq, s, [64, 128, 256, 512, 1024])
            ratios += [d0 / d1 for (_, _, d0), (_, _, d1) in zip(rows, rows[1:])]
            limits.append(abs(rows[-1][1] - limit) / limit)
    ok = all(1.6 <= r <= 2.4 for r in ratios) and max(limits) < 1e-2
    record_criterion(7, ok, f"deviation halving ratios in [{min(ratios):.3f}, {max(ratios):.3f}], largest gap at N=1024 {max(limits):.1e}")
    assert ok


def test_criterion_08_ordering_identities():
    worst = max(verify_ordering_identity(q, s, 30) for q in range(5) for s in S_GRID)
    anti = max(
        abs(float(a - b))
        for m in range(5)
        for a, b in zip(s_ordered_number_power(m, -1.0, 30, exact=True), anti_normal_product(m, 30, exact=True))
    )
    ok = worst < 1e-10 and anti < 1e-10
    record_criterion(8, ok, f"conversion residual {worst:.1e}, anti-normal closed form {anti:.1e}")
    assert ok


def test_criterion_09_s_sweep():
    zs = z_star()
    ns = [64, 256, 1024]
    worst_final = 0.0
    monotone = True
    for s in S_GRID:
        errs = [abs(hs_partition_series(H, TimeGrid(BETA, n), s=s).value - zs) / zs for n in ns]
        monotone &= all(b < a for a, b in zip(errs, errs[1:]))
        worst_final = max(worst_final, errs[-1])
    ok = monotone and worst_final < 1e-2
    record_criterion(9, ok, f"worst rel. error at N=1024 {worst_final:.1e}, strictly decreasing: {monotone}")
    assert ok


def test_criterion_10_oracle_agreement():
    parts = []
    direct_ok = True
    for n in (1, 2):
        grid = TimeGrid(BETA, n)
        try:
            quad = quadrature_partition_small_n(H, grid).value
            ref = transfer_partition(H, grid).value
            gap = abs(quad - ref) / abs(ref)
            direct_ok &= gap < 1e-4
            parts.append(f"N={n} quad/transfer {gap:.1e}")
        except LabError as exc:
            direct_ok = False
            parts.append(f"N={n} {type(exc).__name__}")
    worst_tensor = 0.0
    for n in (1, 2, 3):
        grid = TimeGrid(BETA, n)
        quad = hs_quadrature_small_n(H, grid, scheme=SliceFactorScheme.NAIVE_EXPONENTIAL).real
        ref = hs_partition_series(H, grid, scheme=SliceFactorScheme.NAIVE_EXPONENTIAL).value
        worst_tensor = max(worst_tensor, abs(quad - ref) / ref)
    det_gap = det_agreement(200, seed=0)
    ok = direct_ok and worst_tensor < 1e-6 and det_gap < 1e-10
    parts += [f"tensor E[1/det] vs series {worst_tensor:.1e}", f"cyclic det vs LU {det_gap:.1e}"]
    record_criterion(10, ok, "; ".join(parts))
    assert direct_ok, "direct N <= 2 quadrature does not match the transfer series at the reference point: " + "; ".join(parts)
    assert worst_tensor < 1e-6 and det_gap < 1e-10


def test_criterion_11_mc_validity(capsysbinary):
    grid = TimeGrid(BETA, 64)
    series = hs_partition_series(H, grid, scheme=SliceFactorScheme.EXACT_PRODUCT).value
    mc = hs_partition_mc(H, grid, scheme=SliceFactorScheme.EXACT_PRODUCT, samples=100_000, seed=0)
    z = (mc.value - series) / mc.stat_error
    args = ["hs-mc", "--N", "64", "--samples", "100000", "--seed", "0", "--scheme", "exact-product", "--deterministic"]
    outputs = []
    for _ in range(2):
        main(args)
        outputs.append(capsysbinary.readouterr().out)
    identical = outputs[0] == outputs[1]
    ok = abs(z) <= 3 and identical
    record_criterion(11, ok, f"MC {mc.value:.5f} +- {mc.stat_error:.5f} vs series {series:.5f} ({z:+.1f} SE); reports identical: {identical}")
    assert identical
    assert abs(z) <= 3, f"MC mean {mc.value:.5f} is {z:+.1f} standard errors from the series {series:.5f}"
