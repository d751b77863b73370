"""Discrete nonlocal operators.

Three operators act on a feature field Z:

* the linear diffusion operator, (L Z)_i = sum_j K_ij (Z_j - Z_i), with K
  a fixed stochastic kernel.  Rows of K sum to 1, so this is K Z - Z.
* the original block's nonlinear operator, which re-evaluates the kernel
  on Z itself and returns minus the row-normalized weighted sum, so that
  the block update reads Z + (operator output) in the damping regime.
* the Markov operator Z -> K Z for nonnegative row-stochastic K.

Application is matrix-free O(M^2 d); dense matrices are materialized only
on demand for spectral analysis.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from .errors import NonFiniteError
from .fields import FeatureField, _frozen_array
from .kernels import AffinityKernelSpec, KernelMatrix, build_kernel_matrix, normalize_rows


@dataclass(frozen=True, eq=False)
class OperatorMatrix:
    """Dense M x M matrix form of an operator, for inspection and spectra."""

    entries: np.ndarray = dc_field(repr=False)

    def __post_init__(self):
        A = np.asarray(self.entries, dtype=np.float64)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValueError(f"operator matrix must be square, got shape {A.shape}")
        if not np.all(np.isfinite(A)):
            raise NonFiniteError("operator matrix has non-finite entries")
        object.__setattr__(self, "entries", _frozen_array(A))

    @property
    def size(self) -> int:
        return self.entries.shape[0]


def _require_stochastic(K: KernelMatrix, what: str) -> None:
    if not (K.row_stochastic or K.doubly_stochastic):
        raise ValueError(f"{what} needs a row- or doubly-stochastic kernel (normalize first)")


def apply_diffusion(K: KernelMatrix, Z: FeatureField) -> FeatureField:
    """(L Z)_i = sum_j K_ij (Z_j - Z_i), channel-wise.

    The stochastic precondition means sum_j K_ij = 1, so the result is
    computed as K Z - Z; that makes the Markov / stage equivalence an
    identity rather than an approximation.
    """
    if K.size != Z.num_positions:
        raise ValueError(
            f"kernel is {K.size}x{K.size} but the field has {Z.num_positions} positions"
        )
    _require_stochastic(K, "diffusion")
    return FeatureField(K.entries @ Z.values - Z.values)


def diffusion_matrix(K: KernelMatrix) -> OperatorMatrix:
    """Dense matrix K - I of the diffusion operator; rows sum to 0."""
    _require_stochastic(K, "diffusion")
    return OperatorMatrix(K.entries - np.eye(K.size))


def apply_original(spec: AffinityKernelSpec, Z: FeatureField) -> FeatureField:
    """The original block's nonlocal operator, kernel re-evaluated on Z.

    output_i = -(1 / C_i(Z)) * sum_j omega(Z_i, Z_j) Z_j, where C_i is the
    row sum of the kernel built on the *current* field.  The sign makes
    the one-block update Z + output, and the kernel's dependence on Z is
    what makes this operator nonlinear.
    """
    P = normalize_rows(build_kernel_matrix(Z, spec))
    return FeatureField(-(P.entries @ Z.values))


def markov_matrix(K: KernelMatrix) -> OperatorMatrix:
    """K itself as the one-step Markov evolution Z^{n+1} = K Z^n."""
    if not K.nonnegative:
        raise ValueError("a Markov matrix must be entrywise nonnegative")
    if not (K.row_stochastic or K.doubly_stochastic):
        raise ValueError("a Markov matrix must be row stochastic")
    return OperatorMatrix(K.entries)
