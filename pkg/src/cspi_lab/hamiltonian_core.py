"""Operator-side oracles for a single bosonic mode.

A number-conserving Hamiltonian written in normal order,

    H = sum_q g_q a^dag^q a^q,

is diagonal in the Fock basis with energies E_n = sum_q g_q n!/(n-q)!.
This module evaluates its exact partition function, converts its symbol to
an arbitrary s-ordering, checks the conversion in a truncated Fock space and
evaluates the time-sliced (normal-ordered) coherent-state path integral
through its transfer operator, which is diagonal in the same basis.
"""

from __future__ import annotations

import math
from fractions import Fraction
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import mpmath
import numpy as np

from .errors import DivergentSum, PolicyExhausted, PrecisionLoss, TruncationTooSmall

# consecutive small terms required before a series is declared converged
_STOP_RUN = 3
_UNIT_ROUNDOFF = 2.0**-53


def check_ordering(s: float) -> float:
    s = float(s)
    if not -1.0 <= s <= 1.0:
        raise ValueError(f"ordering index s={s} outside [-1, 1]")
    return s


@dataclass(frozen=True)
class NormalHamiltonian:
    """Coefficients g_q of a normal-ordered, number-conserving Hamiltonian."""

    g: Mapping[int, float]

    def __post_init__(self):
        clean = {}
        for q, val in dict(self.g).items():
            q = int(q)
            if q < 0:
                raise ValueError("powers q must be non-negative")
            if val != 0.0:
                clean[q] = float(val)
        object.__setattr__(self, "g", dict(sorted(clean.items())))

    @classmethod
    def bose_hubbard(cls, mu: float, u: float) -> "NormalHamiltonian":
        """-mu n + (U/2) n(n-1), i.e. g_1 = -mu, g_2 = U/2."""
        return cls({1: -mu, 2: u / 2.0})

    @property
    def mu(self) -> float:
        return -self.g.get(1, 0.0)

    @property
    def u(self) -> float:
        return 2.0 * self.g.get(2, 0.0)

    @property
    def degree(self) -> int:
        return max(self.g, default=0)

    def coefficients(self) -> np.ndarray:
        """Dense array of g_q for q = 0..degree."""
        out = np.zeros(self.degree + 1)
        for q, val in self.g.items():
            out[q] = val
        return out

    def energy(self, n: int) -> float:
        return math.fsum(val * math.perm(n, q) for q, val in self.g.items())

    def symbol(self, x):
        """Normal symbol H_1(x) with x standing for psi* psi."""
        return sum(val * x**q for q, val in self.g.items())


@dataclass(frozen=True)
class TimeGrid:
    beta: float
    n_slices: int

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        if int(self.n_slices) != self.n_slices or self.n_slices < 1:
            raise ValueError("n_slices must be a positive integer")

    @property
    def epsilon(self) -> float:
        return self.beta / self.n_slices


@dataclass(frozen=True)
class TruncationPolicy:
    n_max: int = 64
    tol: float = 1e-12
    # relative error budget before transfer_partition reports PrecisionLoss
    precision_threshold: float = 1e-10
    high_precision: bool = False

    def __post_init__(self):
        if self.n_max < 1:
            raise ValueError("n_max must be >= 1")
        if not self.tol > 0:
            raise ValueError("tol must be positive")


@dataclass(frozen=True)
class PartitionEstimate:
    value: float
    method: str
    n_used: int
    tail_bound: float
    stat_error: Optional[float] = None
    imag_residue: float = 0.0


@dataclass(frozen=True)
class PolynomialSymbol:
    """H_s(x) = sum_m coeffs[m] x^m, tagged with its ordering index."""

    coeffs: tuple
    s: float

    @property
    def degree(self) -> int:
        nz = [m for m, c in enumerate(self.coeffs) if c != 0.0]
        return max(nz, default=0)

    def __call__(self, x):
        return sum(c * x**m for m, c in enumerate(self.coeffs))


@dataclass(frozen=True)
class TransferSpectrum:
    t: np.ndarray
    c: np.ndarray
    policy: TruncationPolicy
    # estimated relative rounding error of each t_n
    rel_error: np.ndarray = field(repr=False, default=None)


def _check_convergent(H: NormalHamiltonian):
    if not H.g:
        raise DivergentSum("zero Hamiltonian: every Fock state has weight 1")
    lead = H.g[H.degree]
    if H.degree == 0 or lead < 0:
        raise DivergentSum(f"leading coefficient g_{H.degree}={lead} gives an unbounded spectrum")


def exact_partition(H: NormalHamiltonian, beta: float, policy: TruncationPolicy = TruncationPolicy()) -> PartitionEstimate:
    """Spectral sum Z = sum_n exp(-beta E_n) with a rigorous tail bound.

    Once the level spacing E_{n+1} - E_n is positive and non-decreasing the
    Boltzmann ratios r_n shrink monotonically, so the remaining tail after
    term n is bounded by w_n r_n / (1 - r_n).  For degree > 2 the spacing is
    only checked locally.
    """
    _check_convergent(H)
    if not beta > 0:
        raise ValueError("beta must be positive")
    e0 = H.energy(0)
    weights = []
    tail = math.inf
    for n in range(policy.n_max + 1):
        weights.append(math.exp(-beta * (H.energy(n) - e0)))
        gap = H.energy(n + 1) - H.energy(n)
        convex = H.energy(n + 2) - 2 * H.energy(n + 1) + H.energy(n) >= 0.0
        if gap > 0 and convex and beta * gap > 1e-300:
            r = math.exp(-beta * gap)
            tail = weights[-1] * r / -math.expm1(-beta * gap)
            if tail < policy.tol:
                scale = math.exp(-beta * e0)
                return PartitionEstimate(
                    value=math.fsum(weights) * scale,
                    method="spectral",
                    n_used=n,
                    tail_bound=tail * scale,
                )
    raise PolicyExhausted(f"spectral tail bound {tail:.3e} still above tol={policy.tol:.1e} at n_max={policy.n_max}")


def _symbol_coefficients(g, s):
    half = (s - 1) / 2
    out = [0 * half] * (max(g, default=0) + 1)
    for q, gq in g.items():
        for p in range(q + 1):
            out[q - p] += gq * math.factorial(p) * math.comb(q, p) ** 2 * half**p
    return out


def s_symbol(H: NormalHamiltonian, s: float) -> PolynomialSymbol:
    """Symbol of H in the s-ordered scheme.

    H_s(x) = sum_q g_q sum_p p! C(q,p)^2 ((s-1)/2)^p x^(q-p)
    """
    s = check_ordering(s)
    return PolynomialSymbol(tuple(float(c) for c in _symbol_coefficients(H.g, s)), s)


# Fock-space checks of the s-ordering conversion.  Everything involved is
# diagonal in the Fock basis, and the checks run in exact rational arithmetic:
# entries reach n!/(n-q)! ~ 1e6 at n=30, q=4, which leaves no room for
# rounding under an absolute 1e-10 residual.


def ladder_matrices(dim: int, exact: bool = False):
    """Truncated annihilation and creation matrices of size dim x dim.

    With ``exact=True`` the matrices are written in the rescaled basis
    |n) = sqrt(n!)|n>, where a|n) = n|n-1) and a^dag|n) = |n+1) have integer
    entries.  The rescaling is a similarity transform, so products keep
    their Fock diagonal.
    """
    if exact:
        a = np.zeros((dim, dim), dtype=object)
        ad = np.zeros((dim, dim), dtype=object)
        for n in range(1, dim):
            a[n - 1, n] = n
            ad[n, n - 1] = 1
        return a, ad
    a = np.diag(np.sqrt(np.arange(1, dim, dtype=float)), k=1)
    return a, a.T.copy()


def _mat_power(m, k):
    out = np.identity(m.shape[0], dtype=m.dtype)
    if m.dtype == object:
        out = out.astype(int).astype(object)
    for _ in range(k):
        out = out @ m
    return out


def normal_product(q: int, n_max: int, exact: bool = False) -> np.ndarray:
    """Fock diagonal of a^dag^q a^q from ladder-matrix products."""
    a, ad = ladder_matrices(n_max + 1 + q, exact)
    return np.diag(_mat_power(ad, q) @ _mat_power(a, q))[: n_max + 1].copy()


def anti_normal_product(m: int, n_max: int, exact: bool = False) -> np.ndarray:
    """Fock diagonal of a^m a^dag^m, padded so truncation cannot leak in."""
    a, ad = ladder_matrices(n_max + 1 + m, exact)
    return np.diag(_mat_power(a, m) @ _mat_power(ad, m))[: n_max + 1].copy()


def s_ordered_number_power(m: int, s: float, n_max: int, exact: bool = False) -> np.ndarray:
    """Fock diagonal of the s-ordered product {a^dag^m a^m}_s, n = 0..n_max.

    Independent of the conversion rule: taken from the s-ordered
    displacement operator, whose Fock diagonal is exp(-(1-s) t/2) L_n(t)
    with t = |xi|^2, so that
    <n|{a^dag^m a^m}_s|n> = (m!)^2 (-1)^m [t^m] exp(-(1-s)t/2) L_n(t).
    """
    s = check_ordering(s)
    k = (1 - Fraction(s)) / 2
    out = []
    for n in range(n_max + 1):
        # [t^j] L_n(t) = C(n,j) (-1)^j / j!;  [t^i] exp(-k t) = (-k)^i / i!
        coef = sum(
            Fraction(math.comb(n, j) * (-1) ** j, math.factorial(j)) * (-k) ** (m - j) / math.factorial(m - j)
            for j in range(min(m, n) + 1)
        )
        out.append(math.factorial(m) ** 2 * (-1) ** m * coef)
    return np.array(out, dtype=object) if exact else np.array([float(v) for v in out])


def s_ordered_powers_by_inversion(q_max: int, s: float, n_max: int, exact: bool = False) -> list:
    """Fock diagonals of {(a^dag a)^m}_s, m = 0..q_max, by triangular inversion.

    Solves a^dag^m a^m = sum_p p! C(m,p)^2 ((s-1)/2)^p {(a^dag a)^(m-p)}_s
    for its p = 0 term, one power at a time.
    """
    if n_max < q_max:
        raise TruncationTooSmall(f"n_max={n_max} < q={q_max}")
    s = check_ordering(s)
    half = (Fraction(s) - 1) / 2
    powers = []
    for m in range(q_max + 1):
        op = normal_product(m, n_max, exact=True)
        for p in range(1, m + 1):
            op = op - math.factorial(p) * math.comb(m, p) ** 2 * half**p * powers[m - p]
        powers.append(op)
    if exact:
        return powers
    return [np.array([float(v) for v in op]) for op in powers]


def verify_ordering_identity(q: int, s: float, n_max: int) -> float:
    """Max residual of the normal-to-s-ordered conversion of a^dag^q a^q.

    The s-ordered powers come from the displacement-operator oracle rather
    than from the conversion rule itself, so zero residual is a real check.
    """
    if n_max < q:
        raise TruncationTooSmall(f"n_max={n_max} < q={q}")
    s = check_ordering(s)
    half = (Fraction(s) - 1) / 2
    lhs = normal_product(q, n_max, exact=True)
    rhs = sum(
        math.factorial(p) * math.comb(q, p) ** 2 * half**p * s_ordered_number_power(q - p, s, n_max, exact=True)
        for p in range(q + 1)
    )
    return float(max(abs(v) for v in lhs - rhs))


def symbol_spectrum(symbol: PolynomialSymbol, n_max: int) -> np.ndarray:
    """Fock diagonal of sum_m h_m {(a^dag a)^m}_s rebuilt from an s-symbol."""
    powers = s_ordered_powers_by_inversion(len(symbol.coeffs) - 1, symbol.s, n_max)
    out = np.zeros(n_max + 1)
    for h, op in zip(symbol.coeffs, powers):
        out += h * op
    return out


def round_trip_residual(H: NormalHamiltonian, s: float, n_max: int) -> float:
    """Exact check that H_s, read back through the inverted conversion, has H's spectrum."""
    s = check_ordering(s)
    g = {q: Fraction(v) for q, v in H.g.items()}
    coeffs = _symbol_coefficients(g, Fraction(s))
    powers = s_ordered_powers_by_inversion(len(coeffs) - 1, s, n_max, exact=True)
    spectrum = sum(h * op for h, op in zip(coeffs, powers))
    target = [sum(gq * math.perm(n, q) for q, gq in g.items()) for n in range(n_max + 1)]
    return float(max(abs(x - y) for x, y in zip(spectrum, target)))


# Transfer operator of the normal-ordered time-sliced path integral.


def exp_series_coefficients(poly: Sequence[float], order: int) -> list:
    """Taylor coefficients c_0..c_order of exp(P(x)) for a polynomial P.

    Uses (q+1) c_{q+1} = sum_j (j+1) p_{j+1} c_{q-j}.  Works with floats or
    mpmath numbers, whichever ``poly`` holds.
    """
    p = list(poly)
    c = [mpmath.exp(p[0]) if isinstance(p[0], mpmath.mpf) else math.exp(p[0])]
    dp = [(j + 1) * p[j + 1] for j in range(len(p) - 1)]
    for q in range(order):
        acc = [dp[j] * c[q - j] for j in range(min(len(dp), q + 1))]
        total = mpmath.fsum(acc) if isinstance(c[0], mpmath.mpf) else math.fsum(acc)
        c.append(total / (q + 1))
    return c


def _factorial_scaled_coefficients(poly: Sequence[float], order: int) -> list:
    """d_q = q! c_q for exp(P(x)), without forming q! itself.

    Multiplying the recursion for c_q by q! gives
    d_{q+1} = sum_j (j+1) p_{j+1} q!/(q-j)! d_{q-j}.
    """
    p = list(poly)
    d = [math.exp(p[0])]
    dp = [(j + 1) * p[j + 1] for j in range(len(p) - 1)]
    for q in range(order):
        d.append(math.fsum(dp[j] * math.perm(q, j) * d[q - j] for j in range(min(len(dp), q + 1))))
    return d


def transfer_spectrum(H: NormalHamiltonian, epsilon: float, policy: TruncationPolicy = TruncationPolicy()) -> TransferSpectrum:
    """Fock diagonal t_n of the normal-ordered slice operator :exp(-eps H):.

    t_n = sum_{q<=n} c_q n!/(n-q)!.  The sum alternates in sign; it is
    accumulated with a correctly rounded sum and its rounding error is
    estimated from the condition number sum|terms| / |t_n|.
    """
    n_max = policy.n_max
    if policy.high_precision:
        with mpmath.workdps(max(50, n_max)):
            poly = [mpmath.mpf(-epsilon) * mpmath.mpf(g) for g in H.coefficients()]
            c = exp_series_coefficients(poly, n_max)
            t, rel = [], []
            for n in range(n_max + 1):
                t.append(float(mpmath.fsum(c[q] * mpmath.ff(n, q) for q in range(n + 1))))
                rel.append(0.0)
            c = [float(v) for v in c]
    else:
        poly = [-epsilon * g for g in H.coefficients()]
        d = _factorial_scaled_coefficients(poly, n_max)
        c = [dq * math.exp(-math.lgamma(q + 1)) for q, dq in enumerate(d)]
        t, rel = [], []
        for n in range(n_max + 1):
            # c_q n!/(n-q)! = (q! c_q) C(n,q) keeps intermediates small
            terms = [d[q] * math.comb(n, q) for q in range(n + 1)]
            tn = math.fsum(terms)
            t.append(tn)
            mag = math.fsum(abs(x) for x in terms)
            rel.append(4 * _UNIT_ROUNDOFF * mag / abs(tn) if tn != 0.0 else math.inf)
    return TransferSpectrum(np.array(t), np.array(c), policy, np.array(rel))


def sum_decaying_series(terms, tol: float, n_max: int):
    """Sum an (asymptotically) decaying series term by term.

    Stops once _STOP_RUN consecutive terms are below ``tol`` in magnitude.  Returns (partial_sum, n_used, tail_estimate) or None if
    the cutoff is reached first.  ``terms`` is an iterator of complex or
    real numbers.
    """
    re, im = [], []
    run = 0
    for n, term in enumerate(terms):
        if n > n_max:
            break
        term = complex(term)
        re.append(term.real)
        im.append(term.imag)
        run = run + 1 if abs(term) < tol else 0
        if run >= _STOP_RUN:
            tail = math.fsum(math.hypot(r, i) for r, i in zip(re[-_STOP_RUN:], im[-_STOP_RUN:]))
            return complex(math.fsum(re), math.fsum(im)), n, tail
    return None


def transfer_partition(H: NormalHamiltonian, grid: TimeGrid, policy: TruncationPolicy = TruncationPolicy()) -> PartitionEstimate:
    """Time-sliced normal-ordered path integral, Z_N = sum_n t_n^N.

    For an interacting mode (U > 0) the t_n eventually grow like scaled
    Hermite polynomials, so the sum is asymptotic: it is truncated after the
    terms have dropped below ``policy.tol``, which for moderate N happens
    many orders of magnitude before they turn around.  Coarse grids where
    that never happens raise PolicyExhausted.
    """
    _check_convergent(H)
    if H.degree == 1 and H.mu >= 0:
        raise DivergentSum("free boson needs mu < 0")
    spec = transfer_spectrum(H, grid.epsilon, policy)
    N = grid.n_slices
    powers = spec.t**N
    result = sum_decaying_series(iter(powers), policy.tol, policy.n_max)
    if result is None:
        smallest = float(np.min(np.abs(powers)))
        raise PolicyExhausted(
            f"transfer series not resolved within n_max={policy.n_max} "
            f"(smallest term {smallest:.3e}, tol {policy.tol:.1e})"
        )
    total, n_used, tail = result
    value = total.real
    err = math.fsum(N * spec.rel_error[n] * abs(powers[n]) for n in range(n_used + 1))
    if err > policy.precision_threshold * abs(value):
        raise PrecisionLoss(
            f"estimated rounding error {err:.2e} exceeds {policy.precision_threshold:.1e} relative; "
            "retry with high_precision=True"
        )
    return PartitionEstimate(value=value, method="transfer", n_used=n_used, tail_bound=tail)
