"""Brute-force backends: dense determinants, Wick sums and direct quadrature.

These are deliberately the slow, obvious routes.  Closed forms elsewhere in
the package are checked against them.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import scipy.linalg

from .errors import (
    CutoffTooSmall,
    DivergentSum,
    NonConvergent,
    SingularMatrix,
    SingularToWorkingPrecision,
)
from .hamiltonian_core import NormalHamiltonian, PartitionEstimate, TimeGrid

MAX_LU_DIM = 2048


@dataclass(frozen=True)
class CyclicBidiagonalSystem:
    """N x N kernel with diagonal d_k and periodic subdiagonal o_k.

    Row k couples psi_k (coefficient d_k) to psi_{k-1} (coefficient o_k);
    row 0 wraps to column N-1.  Arrays may carry leading batch axes, the
    last axis runs over slices.
    """

    diag: np.ndarray
    sub: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.diag, dtype=complex)
        o = np.asarray(self.sub, dtype=complex)
        if d.shape != o.shape or d.ndim == 0:
            raise ValueError("diag and sub must have the same non-scalar shape")
        object.__setattr__(self, "diag", d)
        object.__setattr__(self, "sub", o)

    @property
    def n(self) -> int:
        return self.diag.shape[-1]

    def dense(self) -> np.ndarray:
        if self.diag.ndim != 1:
            raise ValueError("densify one system at a time")
        n = self.n
        m = np.diag(self.diag).astype(complex)
        rows = np.arange(n)
        # for N = 1 the corner lands on the diagonal and adds to it
        np.add.at(m, (rows, (rows - 1) % n), self.sub)
        return m


def det_lu(m: np.ndarray) -> complex:
    """Determinant through partial-pivoting LU.

    A tiny determinant is a legitimate value; only when the smallest pivot
    sits at roundoff level relative to the largest is a
    SingularToWorkingPrecision warning issued.
    """
    m = np.asarray(m, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError("det_lu needs a square matrix")
    if m.shape[0] > MAX_LU_DIM:
        raise ValueError(f"dimension {m.shape[0]} above {MAX_LU_DIM}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix has non-finite entries")
    with warnings.catch_warnings():
        # singularity is judged below from the pivots
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(m, check_finite=False)
    pivots = np.diag(lu)
    swaps = np.count_nonzero(piv != np.arange(len(piv)))
    det = (-1) ** swaps * np.prod(pivots)
    big = np.max(np.abs(pivots))
    if big == 0 or np.min(np.abs(pivots)) <= big * m.shape[0] * np.finfo(float).eps:
        warnings.warn("LU pivots lost all significant digits", SingularToWorkingPrecision, stacklevel=2)
    return complex(det)


def det_cyclic_closed(system: CyclicBidiagonalSystem):
    """prod_k d_k - prod_k (-o_k); vectorised over batch axes."""
    out = np.prod(system.diag, axis=-1) - np.prod(-system.sub, axis=-1)
    return complex(out) if np.ndim(out) == 0 else out


def _permanent(a: np.ndarray) -> complex:
    """Ryser's formula."""
    n = a.shape[0]
    if n == 0:
        return 1.0 + 0.0j
    total = 0.0j
    for r in range(1, n + 1):
        for cols in itertools.combinations(range(n), r):
            total += (-1) ** r * np.prod(a[:, cols].sum(axis=1))
    return (-1) ** n * total


def wick_correlator(m: np.ndarray, pairs: Sequence[tuple]) -> complex:
    """<prod_a psi_{i_a} psi*_{j_a}> under exp(-psi^dag M psi) / det(M)^{-1}.

    Bosonic Wick sum: the permanent of G[i_a, j_b] with G = M^{-1}.
    """
    m = np.asarray(m, dtype=complex)
    try:
        g = scipy.linalg.inv(m)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise SingularMatrix(str(exc)) from exc
    rows = [i for i, _ in pairs]
    cols = [j for _, j in pairs]
    return complex(_permanent(g[np.ix_(rows, cols)]))


@dataclass(frozen=True)
class QuadratureSpec:
    """Cutoff ``radius`` bounds |psi|^2; None picks 8/sqrt(eps U)."""

    radius: Optional[float] = None
    nodes: int = 48
    scheme: str = "auto"
    tol: float = 1e-10
    # global phase applied to the integration grid (invariance check)
    phase: float = 0.0
    panels: int = 16


def _gauss_legendre(a: float, b: float, nodes: int, panels: int):
    x, w = np.polynomial.legendre.leggauss(nodes)
    edges = np.linspace(a, b, panels + 1)
    half = np.diff(edges) / 2
    mid = (edges[:-1] + edges[1:]) / 2
    return (mid[:, None] + half[:, None] * x).ravel(), (half[:, None] * w).ravel()


def _radial_single_slice(H: NormalHamiltonian, eps: float, radius: float, nodes: int, panels: int) -> float:
    # N = 1: psi_0 = psi_1 kills the kinetic term; d^2psi/pi -> dr with r = |psi|^2
    r, w = _gauss_legendre(0.0, radius, nodes, panels)
    return math.fsum(w * np.exp(-eps * H.symbol(r)))


def two_slice_integral(H: NormalHamiltonian, eps: float, radius: float, nodes: int, phase: float = 0.0) -> complex:
    """4D tensor Gauss-Legendre integral of exp(-S) for N = 2 slices.

    Each real component of psi_1, psi_2 runs over [-sqrt(R), sqrt(R)].  The
    integrand depends on the fields only through psi*_k psi_{k-1}, so a
    global phase rotation of the grid must leave the result unchanged up to
    boundary effects.
    """
    half = math.sqrt(radius)
    x, w = np.polynomial.legendre.leggauss(nodes)
    x = half * x
    w = half * w
    rot = np.exp(1j * phase)
    # psi_1 on an outer 2D grid, psi_2 on an inner one; reduce in fixed order
    p2 = (x[:, None] + 1j * x[None, :]).ravel() * rot
    w2 = (w[:, None] * w[None, :]).ravel()
    partial = []
    for i in range(nodes):
        p1 = (x[i] + 1j * x) * rot
        z12 = np.conj(p1)[:, None] * p2[None, :]
        z21 = np.conj(p2)[None, :] * p1[:, None]
        # S = sum_k psi*_k(psi_k - psi_{k-1}) + eps H(psi*_k psi_{k-1}), psi_0 = psi_2
        action = (np.abs(p1) ** 2)[:, None] + (np.abs(p2) ** 2)[None, :] - z12 - z21
        action = action + eps * (H.symbol(z12) + H.symbol(z21))
        # a divergent integrand overflows here; the cutoff check reports it
        with np.errstate(over="ignore", invalid="ignore"):
            vals = np.exp(-action) * w[:, None] * w2[None, :] * w[i]
        partial.append(vals.sum())
    return complex(math.fsum(v.real for v in partial), math.fsum(v.imag for v in partial)) / math.pi**2


def quadrature_partition_small_n(H: NormalHamiltonian, grid: TimeGrid, spec: QuadratureSpec = QuadratureSpec()) -> PartitionEstimate:
    """Direct numerical integration of the time-sliced path integral, N <= 2.

    The cutoff is validated by doubling it once and the node count by
    doubling it once; a change beyond ``spec.tol`` (relative) raises.
    """
    n = grid.n_slices
    if n not in (1, 2):
        raise ValueError("direct quadrature supports N = 1 or 2 only")
    if H.u <= 0:
        raise DivergentSum("U > 0 is required for a bounded integrand")
    eps = grid.epsilon
    radius = spec.radius if spec.radius is not None else 8.0 / math.sqrt(eps * H.u)

    if n == 1:
        def run(r, k):
            return complex(_radial_single_slice(H, eps, r, k, spec.panels))
    else:
        def run(r, k):
            return two_slice_integral(H, eps, r, k, spec.phase)

    base = run(radius, spec.nodes)
    wide = run(2 * radius, spec.nodes)
    scale = max(abs(base), 1e-300)
    if not np.isfinite(wide) or abs(wide - base) > spec.tol * scale:
        raise CutoffTooSmall(f"doubling the cutoff moved the integral from {base:.6g} to {wide:.6g}")
    fine = run(radius, 2 * spec.nodes)
    if abs(fine - base) > spec.tol * scale:
        raise NonConvergent(f"doubling the nodes moved the integral from {base:.6g} to {fine:.6g}")
    return PartitionEstimate(
        value=float(fine.real),
        method="quadrature",
        n_used=2 * spec.nodes,
        tail_bound=float(abs(wide - base)),
        imag_residue=float(abs(fine.imag)),
    )
