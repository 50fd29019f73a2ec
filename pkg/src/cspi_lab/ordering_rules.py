"""Generating function of the s-discretised Gaussian action and the
replacement rule it implies.

    S_f(x, y) = sum_k (1 + delta_kl x) psi*_k (psi_k - psi_{k-1})
                      + (eps a + delta_kl y) psi*_k psi_{k_s},
    psi_{k_s} = (1-s)/2 psi_k + (1+s)/2 psi_{k-1},

integrates to f_s(x, y) = 1 / (A + B x + C y).  Source derivatives give the
slice-l correlators <(psi* dpsi)^p (psi* psi_s)^(q-p)> = q! B^p C^(q-p) / A^q.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .errors import PoleHit, SingularMatrix
from .gaussian_oracle import CyclicBidiagonalSystem, det_lu
from .hamiltonian_core import check_ordering

FD_STEP = 1e-5


@dataclass(frozen=True)
class GeneratingProbe:
    n: int
    epsilon: float
    s: float = 1.0
    a: float = 1.0
    x: complex = 0.0
    y: complex = 0.0
    # probed slice, 1-based; defaults to N // 2
    l: Optional[int] = None

    def __post_init__(self):
        check_ordering(self.s)
        if self.n < 1:
            raise ValueError("need at least one slice")
        if not self.a > 0:
            raise ValueError("convergence parameter a must be positive")
        if not self.a * self.epsilon < 1:
            raise ValueError("a * epsilon must stay below 1")
        if self.l is None:
            object.__setattr__(self, "l", max(1, self.n // 2))
        if not 1 <= self.l <= self.n:
            raise ValueError(f"probe slice l={self.l} outside 1..{self.n}")

    @property
    def beta(self) -> float:
        return self.n * self.epsilon


@dataclass(frozen=True)
class ClosedFormABC:
    A: float
    B: float
    C: float


def closed_form_abc(p: GeneratingProbe) -> ClosedFormABC:
    u = (1 - p.s) / 2
    v = (1 + p.s) / 2
    grow = 1 + u * p.a * p.epsilon
    decay = 1 - v * p.a * p.epsilon
    n = p.n
    return ClosedFormABC(
        A=grow**n - decay**n,
        B=grow ** (n - 1) - decay ** (n - 1),
        C=u * grow ** (n - 1) + v * decay ** (n - 1),
    )


def f_closed(p: GeneratingProbe):
    abc = closed_form_abc(p)
    den = abc.A + abc.B * p.x + abc.C * p.y
    if den == 0:
        raise PoleHit(f"A + Bx + Cy vanishes at x={p.x}, y={p.y}")
    return 1 / den


def source_system(p: GeneratingProbe) -> CyclicBidiagonalSystem:
    """Kernel of S_f(x, y) with the sources inserted on row l."""
    u = (1 - p.s) / 2
    v = (1 + p.s) / 2
    kin = np.ones(p.n, dtype=complex)
    mass = np.full(p.n, p.a * p.epsilon, dtype=complex)
    kin[p.l - 1] += p.x
    mass[p.l - 1] += p.y
    return CyclicBidiagonalSystem(kin + u * mass, -kin + v * mass)


def f_numeric(p: GeneratingProbe):
    """1/det of the densified source kernel, via LU."""
    det = det_lu(source_system(p).dense())
    if det == 0:
        raise SingularMatrix("source kernel is singular")
    return 1 / det if np.iscomplexobj(p.x) or np.iscomplexobj(p.y) else (1 / det).real


def abc_from_sources(p: GeneratingProbe, h: float = FD_STEP) -> ClosedFormABC:
    """A, B and C recovered from f_numeric alone.

    A = 1/f(0,0); B = -f_x / f^2 and C = -f_y / f^2 by central differences.
    """
    base = replace(p, x=0.0, y=0.0)
    f0 = f_numeric(base)
    fx = (f_numeric(replace(base, x=h)) - f_numeric(replace(base, x=-h))) / (2 * h)
    fy = (f_numeric(replace(base, y=h)) - f_numeric(replace(base, y=-h))) / (2 * h)
    return ClosedFormABC(A=1 / f0, B=-fx / f0**2, C=-fy / f0**2)


def correlator_closed(p: GeneratingProbe, pow_delta: int, pow_total: int) -> float:
    """<(psi*_l dpsi_l)^p (psi*_l psi_{l_s})^(q-p)> = q! B^p C^(q-p) / A^q."""
    if not 0 <= pow_delta <= pow_total <= 6:
        raise ValueError("need 0 <= p <= q <= 6")
    abc = closed_form_abc(p)
    return math.factorial(pow_total) * abc.B**pow_delta * abc.C ** (pow_total - pow_delta) / abc.A**pow_total


def correlator_from_sources(p: GeneratingProbe, pow_delta: int, pow_total: int, points: int = 32) -> float:
    """Same correlator from mixed source derivatives of f_numeric.

    (-1)^q / f(0,0) * d^q f / dx^p dy^(q-p), with the derivatives taken by
    the Cauchy integral on a small torus of complex sources (f is analytic
    there), which stays accurate for q up to 6 where finite differences
    would not.
    """
    if not 0 <= pow_delta <= pow_total <= 6:
        raise ValueError("need 0 <= p <= q <= 6")
    base = replace(p, x=0.0, y=0.0)
    # stay well inside the pole of f, located from f_numeric alone
    est = abc_from_sources(base)
    radius = 0.25 * abs(est.A) / (abs(est.B) + abs(est.C))
    theta = 2 * np.pi * np.arange(points) / points
    zs = radius * np.exp(1j * theta)
    vals = np.array([[f_numeric(replace(base, x=complex(zx), y=complex(zy))) for zy in zs] for zx in zs])
    # coefficient of x^p y^(q-p) in the Taylor expansion of f
    kx, ky = pow_delta, pow_total - pow_delta
    coef = np.fft.fft2(vals)[kx, ky] / points**2 / radius ** (kx + ky)
    deriv = coef * math.factorial(kx) * math.factorial(ky)
    return float(((-1) ** pow_total * deriv / f_numeric(base)).real)


def replacement_limit_check(pow_delta: int, pow_total: int, s: float, n_values, beta: float = 1.0, a: float = 1.0):
    """Rows (N, ratio, deviation) at fixed beta = N eps.

    ratio = <(psi* dpsi)^p (psi* psi_s)^(q-p)> / <(psi* psi_s)^(q-p)>, whose
    continuum value is q!/(q-p)!.
    """
    if not 0 <= pow_delta <= pow_total <= 4:
        raise ValueError("need 0 <= p <= q <= 4")
    limit = math.factorial(pow_total) / math.factorial(pow_total - pow_delta)
    rows = []
    for n in sorted(n_values):
        probe = GeneratingProbe(n=n, epsilon=beta / n, s=s, a=a)
        ratio = correlator_closed(probe, pow_delta, pow_total) / correlator_closed(probe, 0, pow_total - pow_delta)
        rows.append((n, ratio, abs(ratio - limit)))
    return rows
