"""Numerical laboratory for discretised coherent-state path integrals of a
single bosonic mode, checked against the exactly solvable single-site
Bose-Hubbard partition function."""

from .errors import LabError
from .gaussian_oracle import CyclicBidiagonalSystem, QuadratureSpec, det_cyclic_closed, det_lu
from .hamiltonian_core import (
    NormalHamiltonian,
    PartitionEstimate,
    PolynomialSymbol,
    TimeGrid,
    TransferSpectrum,
    TruncationPolicy,
    exact_partition,
    s_symbol,
    transfer_partition,
)
from .hs_engine import (
    NoiseModel,
    SliceFactorScheme,
    hs_decouple,
    hs_partition_mc,
    hs_partition_series,
    slice_factor,
)
from .ordering_rules import GeneratingProbe, closed_form_abc, f_closed, f_numeric

__version__ = "0.1.0"
