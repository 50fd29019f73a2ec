"""Hubbard-Stratonovich evaluation of the time-sliced Bose-Hubbard integral.

After decoupling the quartic term with a real field rho_k of variance U/eps
per slice and integrating out the bosons, the partition function becomes a
noise average of 1/det of a cyclic bidiagonal kernel with per-slice factors

    P_k = 1 - (1-s)/2 eps gamma_k,   Q_k = 1 + (1+s)/2 eps gamma_k,
    gamma_k = mu_s + i rho_k,        det = prod P_k - prod Q_k.

Expanding 1/det geometrically in prod Q/P factorises over slices, so

    Z_N = exp(-beta c_s) sum_n E(n)^N,   E(n) = <Q^n / P^(n+1)>_rho.

Three slice-factor schemes are compared: the exact product above, its naive
exponentiation exp(eps gamma) (which drops the O(eps rho^2) noise term) and
the Ito-corrected exponential, where eps^2 rho^2 is replaced by its mean
eps U.
"""

from __future__ import annotations

import enum
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np

from .errors import (
    ContourDeformationRequired,
    DenominatorPole,
    NearPoleSample,
    PolicyExhausted,
    QuadratureNotConverged,
    SeriesNotDecaying,
    UnsupportedDegree,
)
from .gaussian_oracle import CyclicBidiagonalSystem, det_cyclic_closed
from .hamiltonian_core import (
    NormalHamiltonian,
    PartitionEstimate,
    TimeGrid,
    TruncationPolicy,
    check_ordering,
    sum_decaying_series,
)

DEFAULT_NODES = 128
QUAD_TOL = 1e-12
MC_CHUNK = 4096
NEAR_POLE = 1e-12
# tensor Gauss-Hermite nodes per axis for N = 1, 2, 3
SMALL_N_NODES = {1: 256, 2: 192, 3: 96}


class SliceFactorScheme(str, enum.Enum):
    EXACT_PRODUCT = "exact-product"
    NAIVE_EXPONENTIAL = "naive-exponential"
    ITO_CORRECTED = "ito-corrected"


@dataclass(frozen=True)
class NoiseModel:
    """Independent Gaussian HS field per slice, <rho_k rho_k'> = delta_kk' U/eps."""

    u: float
    epsilon: float
    n_slices: int = 1

    @property
    def variance(self) -> float:
        return self.u / self.epsilon

    @property
    def std(self) -> float:
        return math.sqrt(self.variance)


@dataclass(frozen=True)
class DecoupledSymbol:
    """H_s(x) = (U/2) x^2 - mu_eff x + const_shift."""

    mu_eff: float
    const_shift: float
    quad_coeff: float
    s: float = 1.0

    def __call__(self, x):
        return self.quad_coeff * x**2 - self.mu_eff * x + self.const_shift


@dataclass(frozen=True)
class SmoothField:
    omega: float


def hs_decouple(H: NormalHamiltonian, s: float = 1.0) -> DecoupledSymbol:
    """Split the s-ordered Bose-Hubbard symbol into HS-ready pieces.

    mu_s = mu - U(s-1),  c_s = -mu(s-1)/2 + U(s-1)^2/4.
    U = 0 is accepted as the trivial (field-free) limit.
    """
    s = check_ordering(s)
    if H.degree > 2:
        raise UnsupportedDegree(f"HS decoupling handles quadratic symbols only, got degree {H.degree}")
    if H.g.get(0, 0.0) != 0.0:
        raise UnsupportedDegree("constant g_0 is not supported; shift the energy instead")
    if H.u < 0:
        raise ValueError("U must be non-negative")
    mu, u = H.mu, H.u
    return DecoupledSymbol(
        mu_eff=mu - u * (s - 1),
        const_shift=-mu * (s - 1) / 2 + u * (s - 1) ** 2 / 4,
        quad_coeff=u / 2,
        s=s,
    )


@lru_cache(maxsize=16)
def _hermite_nodes(nodes: int):
    # probabilists' Hermite: weight exp(-z^2/2), normalised to a unit Gaussian
    z, w = np.polynomial.hermite_e.hermegauss(nodes)
    return z, w / math.sqrt(2 * math.pi)


def _scheme_integrand(n, scheme, gamma, epsilon, s, u):
    lo = (1 - s) / 2
    hi = (1 + s) / 2
    if scheme is SliceFactorScheme.EXACT_PRODUCT:
        return (1 + hi * epsilon * gamma) ** n / (1 - lo * epsilon * gamma) ** (n + 1)
    m = n + lo
    if scheme is SliceFactorScheme.NAIVE_EXPONENTIAL:
        return np.exp(m * epsilon * gamma)
    # Ito: eps^2 gamma^2 -> -eps U inside log Q^n and log P^-(n+1)
    return np.exp(m * epsilon * gamma + (n * hi**2 - (n + 1) * lo**2) * epsilon * u / 2)


def _closed_slice_factor(n, scheme, noise, mu_eff, epsilon, s):
    u = noise.u
    lo = (1 - s) / 2
    if scheme is SliceFactorScheme.EXACT_PRODUCT:
        if s != 1.0:
            return None
        # E[(b + i eps rho)^n] with E[rho^2k] = (2k-1)!! (U/eps)^k
        b = 1 + epsilon * mu_eff
        terms = [
            math.comb(n, 2 * k) * b ** (n - 2 * k) * (-epsilon * u) ** k * _double_factorial(2 * k - 1)
            for k in range(n // 2 + 1)
        ]
        return complex(math.fsum(terms))
    m = n + lo
    # Gaussian characteristic function: E[exp(i m eps rho)] = exp(-m^2 eps U / 2)
    log_e = m * epsilon * mu_eff - m**2 * epsilon * u / 2
    if scheme is SliceFactorScheme.ITO_CORRECTED:
        log_e += n * s * epsilon * u / 2 - lo**2 * epsilon * u / 2
    return complex(math.exp(log_e))


def _double_factorial(k: int) -> int:
    return math.prod(range(k, 0, -2)) if k > 0 else 1


def slice_factor(
    n: int,
    scheme: SliceFactorScheme,
    noise: NoiseModel,
    mu_eff: float,
    epsilon: float,
    s: float = 1.0,
    nodes: int = DEFAULT_NODES,
    method: str = "auto",
) -> complex:
    """Single-slice noise average E(n) of the scheme's factor.

    ``method`` is "closed" (Gaussian moments or characteristic function),
    "quadrature" (Gauss-Hermite, verified by one node doubling) or "auto",
    which prefers the closed form when one exists.
    """
    if n < 0:
        raise ValueError("n must be non-negative")
    scheme = SliceFactorScheme(scheme)
    s = check_ordering(s)
    lo = (1 - s) / 2
    if scheme is SliceFactorScheme.EXACT_PRODUCT and lo > 0 and abs(1 - lo * epsilon * mu_eff) < 1e-8:
        raise DenominatorPole("1 - (1-s)/2 eps (mu_s + i rho) vanishes on the real rho axis")
    if method in ("auto", "closed"):
        val = _closed_slice_factor(n, scheme, noise, mu_eff, epsilon, s)
        if val is not None:
            return val
        if method == "closed":
            raise ValueError(f"no closed form for {scheme.value} at s={s}")
    elif method != "quadrature":
        raise ValueError(f"unknown method {method!r}")

    def gh(k):
        z, w = _hermite_nodes(k)
        gamma = mu_eff + 1j * noise.std * z
        vals = _scheme_integrand(n, scheme, gamma, epsilon, s, noise.u)
        return complex(math.fsum(w * vals.real), math.fsum(w * vals.imag))

    coarse = gh(nodes)
    fine = gh(2 * nodes)
    if abs(fine - coarse) > QUAD_TOL * max(1.0, abs(fine)):
        raise QuadratureNotConverged(f"E({n}) moved by {abs(fine - coarse):.2e} under node doubling")
    return fine


def _check_domain(H: NormalHamiltonian, allow_positive_mu: bool):
    if H.mu > 0 and not allow_positive_mu:
        raise ContourDeformationRequired("mu > 0 needs a deformed rho contour; pass allow_positive_mu to override")


def hs_partition_series(
    H: NormalHamiltonian,
    grid: TimeGrid,
    s: float = 1.0,
    scheme: SliceFactorScheme = SliceFactorScheme.EXACT_PRODUCT,
    policy: TruncationPolicy = TruncationPolicy(),
    nodes: int = DEFAULT_NODES,
    method: str = "auto",
    allow_positive_mu: bool = False,
) -> PartitionEstimate:
    """exp(-beta c_s) sum_n E(n)^N, truncated once the terms drop below tol."""
    _check_domain(H, allow_positive_mu)
    scheme = SliceFactorScheme(scheme)
    dec = hs_decouple(H, s)
    noise = NoiseModel(H.u, grid.epsilon, grid.n_slices)
    N = grid.n_slices
    scale = math.exp(-grid.beta * dec.const_shift)
    mags = []

    def terms():
        for n in range(policy.n_max + 1):
            term = slice_factor(n, scheme, noise, dec.mu_eff, grid.epsilon, dec.s, nodes, method) ** N
            mags.append(abs(term))
            # past the peak, three growing steps in a row mean the expansion fails
            peak = int(np.argmax(mags))
            if len(mags) - 1 - peak >= 1 and len(mags) >= 4 and mags[-1] > mags[-2] > mags[-3] > mags[-4] and mags[-1] * scale > policy.tol:
                raise SeriesNotDecaying(f"series terms grow again from n={n - 3} (|term| = {mags[-1]:.3e})")
            yield term

    result = sum_decaying_series(terms(), policy.tol / scale, policy.n_max)
    if result is None:
        raise PolicyExhausted(f"hs series not resolved within n_max={policy.n_max}")
    total, n_used, tail = result
    value = scale * total.real
    imag = scale * abs(total.imag)
    return PartitionEstimate(
        value=value,
        method="hs-series",
        n_used=n_used,
        tail_bound=scale * tail,
        imag_residue=imag,
    )


def scheme_system(rho: np.ndarray, H: NormalHamiltonian, grid: TimeGrid, s: float, scheme: SliceFactorScheme) -> CyclicBidiagonalSystem:
    """Cyclic kernel (d_k = P_k, o_k = -Q_k) for noise samples rho[..., k]."""
    scheme = SliceFactorScheme(scheme)
    dec = hs_decouple(H, s)
    eps = grid.epsilon
    lo = (1 - dec.s) / 2
    hi = (1 + dec.s) / 2
    gamma = dec.mu_eff + 1j * np.asarray(rho)
    if scheme is SliceFactorScheme.EXACT_PRODUCT:
        p = 1 - lo * eps * gamma
        q = 1 + hi * eps * gamma
    elif scheme is SliceFactorScheme.NAIVE_EXPONENTIAL:
        p = np.exp(-lo * eps * gamma)
        q = np.exp(hi * eps * gamma)
    else:
        p = np.exp(-lo * eps * gamma + lo**2 * eps * H.u / 2)
        q = np.exp(hi * eps * gamma + hi**2 * eps * H.u / 2)
    return CyclicBidiagonalSystem(p, -q)


def _mc_chunk(index, size, seed, H, grid, s, scheme, shift):
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))
    var = H.u / grid.epsilon
    x = math.sqrt(var) * rng.standard_normal((size, grid.n_slices))
    rho = x + 1j * shift if shift else x
    det = det_cyclic_closed(scheme_system(rho, H, grid, s, scheme))
    small = np.abs(det) < NEAR_POLE
    if np.any(small):
        raise NearPoleSample(f"|det| below {NEAR_POLE:g} in chunk {index}")
    inv = 1.0 / det
    if shift:
        # Gaussian density ratio N(x + i shift) / N(x), per slice
        inv = inv * np.exp(np.sum(shift**2 / (2 * var) - 1j * shift * x / var, axis=-1))
    return inv.real.sum(), (inv.real**2).sum(), inv.imag.sum()


def hs_partition_mc(
    H: NormalHamiltonian,
    grid: TimeGrid,
    s: float = 1.0,
    scheme: SliceFactorScheme = SliceFactorScheme.EXACT_PRODUCT,
    samples: int = 100_000,
    seed: int = 0,
    threads: Optional[int] = None,
    allow_positive_mu: bool = False,
    contour_shift: float = 0.0,
) -> PartitionEstimate:
    """Monte Carlo average of 1/det over whole noise vectors.

    Samples are drawn in fixed-size chunks, each from its own stream derived
    from (seed, chunk index), and reduced in chunk order, so the result is
    bit-identical for any thread count.

    On the real rho contour the average equals the series only while
    |prod Q/P| < 1 for essentially every sample.  At the Ito-shifted
    chemical potential mu + U/2 >= 0 that fails for a finite fraction of
    samples and the two disagree.  ``contour_shift`` moves every rho_k to
    rho_k + i*shift (importance-reweighted), which lowers the effective
    chemical potential by ``shift`` and restores the agreement.
    """
    if samples < 1000:
        raise ValueError("need at least 1000 samples")
    _check_domain(H, allow_positive_mu)
    scheme = SliceFactorScheme(scheme)
    dec = hs_decouple(H, s)
    sizes = [MC_CHUNK] * (samples // MC_CHUNK)
    if samples % MC_CHUNK:
        sizes.append(samples % MC_CHUNK)
    if threads is None:
        threads = int(os.environ.get("CSPI_LAB_THREADS", "1"))
    args = [(i, k, seed, H, grid, s, scheme, contour_shift) for i, k in enumerate(sizes)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda a: _mc_chunk(*a), args))
    else:
        parts = [_mc_chunk(*a) for a in args]
    total = math.fsum(p[0] for p in parts)
    total_sq = math.fsum(p[1] for p in parts)
    total_im = math.fsum(p[2] for p in parts)
    mean = total / samples
    var = max(total_sq / samples - mean**2, 0.0) * samples / (samples - 1)
    scale = math.exp(-grid.beta * dec.const_shift)
    return PartitionEstimate(
        value=scale * mean,
        method="hs-mc",
        n_used=samples,
        tail_bound=0.0,
        stat_error=scale * math.sqrt(var / samples),
        imag_residue=scale * abs(total_im / samples),
    )


def hs_quadrature_small_n(
    H: NormalHamiltonian,
    grid: TimeGrid,
    s: float = 1.0,
    scheme: SliceFactorScheme = SliceFactorScheme.NAIVE_EXPONENTIAL,
    nodes: Optional[int] = None,
) -> complex:
    """Tensor Gauss-Hermite average of exp(-beta c_s)/det over rho_1..rho_N, N <= 3.

    Independent of the series: no geometric expansion, no factorisation.
    ``nodes`` defaults to a per-N count that keeps the Hermite rule finite
    and the N = 3 grid affordable.
    """
    n = grid.n_slices
    if n > 3:
        raise ValueError("tensor quadrature is limited to N <= 3")
    if nodes is None:
        nodes = SMALL_N_NODES[n]
    if nodes > 256:
        raise ValueError("Hermite rules above 256 nodes overflow in double precision")
    dec = hs_decouple(H, s)
    z, w = _hermite_nodes(nodes)
    std = math.sqrt(H.u / grid.epsilon)
    axes = np.meshgrid(*([z] * n), indexing="ij")
    rho = std * np.stack(axes, axis=-1)
    weight = np.ones([nodes] * n)
    for k in range(n):
        weight = weight * w.reshape([-1 if j == k else 1 for j in range(n)])
    inv = 1.0 / det_cyclic_closed(scheme_system(rho, H, grid, s, scheme))
    vals = (weight * inv).ravel()
    if not np.all(np.isfinite(vals)):
        raise QuadratureNotConverged("tensor quadrature produced non-finite values")
    out = complex(math.fsum(vals.real), math.fsum(vals.imag))
    return math.exp(-grid.beta * dec.const_shift) * out


def generalized_determinant_check(s: float, omega: SmoothField, grid: TimeGrid, mu: float):
    """Continuum s-determinant against the finite-N cyclic determinant.

    closed  = exp(-(1-s)/2 beta (mu+Omega)) - exp((1+s)/2 beta (mu+Omega))
    numeric = det of P_k = 1 - (1-s)/2 eps (mu+Omega), o_k = -(1 + (1+s)/2 eps (mu+Omega))
    """
    s = check_ordering(s)
    lo = (1 - s) / 2
    hi = (1 + s) / 2
    w = mu + omega.omega
    closed = math.exp(-lo * grid.beta * w) - math.exp(hi * grid.beta * w)
    n = grid.n_slices
    system = CyclicBidiagonalSystem(
        np.full(n, 1 - lo * grid.epsilon * w), np.full(n, -(1 + hi * grid.epsilon * w))
    )
    numeric = det_cyclic_closed(system).real
    return closed, numeric, abs(closed - numeric)
