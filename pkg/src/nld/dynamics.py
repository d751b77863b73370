"""Time evolution of the nonlocal formulations and the decay theory checks.

Three steppers share one evolve loop:

* proposed: Z <- Z + W * (K Z - Z) with the kernel K fixed for the whole
  run (it was computed from the stage input once).
* original: Z <- Z + W * rownorm(omega(Z)) Z, kernel rebuilt on the
  current state every step.  Nonlinear, and the source of the instability
  this package exists to demonstrate.
* markov:   Z <- K Z, the plain jump-process evolution.

On top of the trajectories sit the verification routines: mean
preservation, variance decay (with the one-step energy identity), the
exponential decay-rate fit against the spectral gap, the discrete
Poincare constant, and the original block's damping-to-zero check.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Optional, Union

import numpy as np

from .errors import BlowUpError, InsufficientDataError, NonFiniteError
from .fields import FeatureField
from .kernels import AffinityKernelSpec, KernelMatrix
from .operators import apply_diffusion, apply_original, markov_matrix
from .spectrum import eig_symmetric

# Evolution aborts once any entry magnitude passes this.
BLOWUP_LIMIT = 1e12

# Distances below this are floating-point noise; the decay fit skips them.
FIT_FLOOR = 1e-12

WeightLike = Union[float, int, np.ndarray]


@dataclass(frozen=True, eq=False)
class StageWeights:
    """Per-sub-step weights: scalars (theory runs) or d x d matrices (nets).

    A single entry broadcasts to any number of steps; otherwise the list
    must cover every step taken.
    """

    per_step: tuple

    def __post_init__(self):
        if len(self.per_step) < 1:
            raise ValueError("weights need at least one entry")
        norm = []
        for w in self.per_step:
            if isinstance(w, (int, float)):
                norm.append(float(w))
            else:
                W = np.asarray(w, dtype=np.float64)
                if W.ndim != 2 or W.shape[0] != W.shape[1]:
                    raise ValueError(f"matrix weight must be square, got shape {W.shape}")
                if not np.all(np.isfinite(W)):
                    raise ValueError("matrix weight must be finite")
                norm.append(W)
        object.__setattr__(self, "per_step", tuple(norm))

    @classmethod
    def scalar(cls, w: float) -> "StageWeights":
        return cls((float(w),))

    @classmethod
    def coerce(cls, weights) -> "StageWeights":
        if isinstance(weights, StageWeights):
            return weights
        if isinstance(weights, (list, tuple)):
            return cls(tuple(weights))
        return cls((weights,))

    def at(self, n: int, total: int):
        if len(self.per_step) == 1:
            return self.per_step[0]
        if len(self.per_step) < total:
            raise ValueError(f"{len(self.per_step)} weights cannot cover {total} steps")
        return self.per_step[n]

    def all_matrices(self) -> bool:
        return all(isinstance(w, np.ndarray) for w in self.per_step)


def _apply_weight(update: np.ndarray, w, num_channels: int) -> np.ndarray:
    if isinstance(w, np.ndarray):
        if w.shape != (num_channels, num_channels):
            raise ValueError(
                f"weight shape {w.shape} does not match {num_channels} channels"
            )
        # W acts on each position's channel vector from the left.
        return update @ w.T
    return w * update


def step_proposed(Z: FeatureField, K: KernelMatrix, W: WeightLike) -> FeatureField:
    """One proposed sub-step: Z + W * (diffusion of Z under the fixed K)."""
    D = apply_diffusion(K, Z)
    return FeatureField(Z.values + _apply_weight(D.values, _coerce_weight(W), Z.num_channels))


def step_original(Z: FeatureField, spec: AffinityKernelSpec, W: WeightLike) -> FeatureField:
    """One original block: Z + W * (row-normalized weighted sum over Z itself)."""
    Y = -apply_original(spec, Z).values  # the positive-sign normalized sum
    return FeatureField(Z.values + _apply_weight(Y, _coerce_weight(W), Z.num_channels))


def _coerce_weight(w):
    if isinstance(w, (int, float)):
        return float(w)
    W = np.asarray(w, dtype=np.float64)
    if W.ndim != 2 or W.shape[0] != W.shape[1]:
        raise ValueError(f"weight must be a scalar or square matrix, got shape {W.shape}")
    return W


@dataclass(frozen=True)
class StepStats:
    mean: tuple
    variance: float
    l2_norm: float
    dist_to_mean: float


def _stats(values: np.ndarray) -> StepStats:
    mean = values.mean(axis=0)
    centered = values - mean
    dist = float(np.linalg.norm(centered))
    return StepStats(
        mean=tuple(float(m) for m in mean),
        variance=dist * dist / values.shape[0],
        l2_norm=float(np.linalg.norm(values)),
        dist_to_mean=dist,
    )


@dataclass(frozen=True, eq=False)
class TrajectoryRecord:
    """Stats (and optionally states) of an evolution; immutable."""

    steps: int
    per_step_stats: tuple
    states: Optional[tuple]
    stepper: str
    kernel_flags: Optional[dict] = dc_field(default=None)

    def __post_init__(self):
        if len(self.per_step_stats) != self.steps + 1:
            raise ValueError("stats must cover the initial state plus every step")

    def growth_factors(self) -> tuple:
        """l2 ratio per step; nan where the previous norm is zero."""
        out = []
        for prev, cur in zip(self.per_step_stats, self.per_step_stats[1:]):
            out.append(cur.l2_norm / prev.l2_norm if prev.l2_norm > 0.0 else float("nan"))
        return tuple(out)

    def to_csv(self) -> str:
        d = len(self.per_step_stats[0].mean)
        header = ["step"] + [f"mean_{c}" for c in range(d)] + ["variance", "l2", "dist_to_mean"]
        lines = [",".join(header)]
        for n, s in enumerate(self.per_step_stats):
            cells = [str(n)] + [repr(m) for m in s.mean]
            cells += [repr(s.variance), repr(s.l2_norm), repr(s.dist_to_mean)]
            lines.append(",".join(cells))
        return "\n".join(lines) + "\n"


class ProposedStepper:
    """Fixed-kernel linear stage; weights may vary per sub-step."""

    name = "proposed"

    def __init__(self, kernel: KernelMatrix, weights):
        self.kernel = kernel
        self.weights = StageWeights.coerce(weights)

    def advance(self, Z: FeatureField, n: int, total: int) -> FeatureField:
        return step_proposed(Z, self.kernel, self.weights.at(n, total))


class OriginalStepper:
    """Kernel re-evaluated on the current state every step."""

    name = "original"

    def __init__(self, spec: AffinityKernelSpec, weights):
        self.spec = spec
        self.weights = StageWeights.coerce(weights)

    def advance(self, Z: FeatureField, n: int, total: int) -> FeatureField:
        return step_original(Z, self.spec, self.weights.at(n, total))


class MarkovStepper:
    """Plain jump-process evolution Z <- K Z."""

    name = "markov"

    def __init__(self, kernel: KernelMatrix):
        markov_matrix(kernel)  # validates nonnegativity and stochasticity
        self.kernel = kernel

    def advance(self, Z: FeatureField, n: int, total: int) -> FeatureField:
        return FeatureField(self.kernel.entries @ Z.values)


def evolve(
    Z0: FeatureField,
    stepper,
    num_steps: int,
    record_states: bool = False,
) -> TrajectoryRecord:
    """Run ``num_steps`` of the stepper, recording stats at every state.

    A non-finite entry or one beyond BLOWUP_LIMIT aborts with
    :class:`BlowUpError`; the partial record (up to the last healthy
    state) rides along on the exception.
    """
    if num_steps < 0:
        raise ValueError("num_steps must be nonnegative")
    kernel = getattr(stepper, "kernel", None)
    flags = kernel.flags() if kernel is not None else None
    stats = [_stats(Z0.values)]
    states = [Z0] if record_states else None
    Z = Z0
    for n in range(num_steps):
        try:
            Znew = stepper.advance(Z, n, num_steps)
            max_abs = float(np.max(np.abs(Znew.values)))
        except NonFiniteError:
            # The state (or an affinity computed from it) overflowed.
            max_abs = float("inf")
            Znew = None
        if Znew is None or max_abs > BLOWUP_LIMIT:
            partial = TrajectoryRecord(
                steps=n,
                per_step_stats=tuple(stats),
                states=tuple(states) if states is not None else None,
                stepper=stepper.name,
                kernel_flags=flags,
            )
            raise BlowUpError(n + 1, max_abs, partial)
        Z = Znew
        stats.append(_stats(Z.values))
        if states is not None:
            states.append(Z)
    return TrajectoryRecord(
        steps=num_steps,
        per_step_stats=tuple(stats),
        states=tuple(states) if states is not None else None,
        stepper=stepper.name,
        kernel_flags=flags,
    )


@dataclass(frozen=True)
class StabilityVerdict:
    spectral_radius: float
    stable: bool
    critical_weight: float


def cfl_verdict(K: KernelMatrix, w: float) -> StabilityVerdict:
    """Spectral stability of Z <- Z + w (K Z - Z).

    The update multiplies the eigenmode at kernel eigenvalue mu by
    1 + w (mu - 1), so the scheme is stable exactly when the largest such
    magnitude stays at or below 1.  critical_weight is the largest
    nonnegative scalar weight for which that holds.
    """
    if not K.symmetric:
        raise ValueError("the spectral stability criterion needs a symmetric kernel")
    if not K.doubly_stochastic:
        raise ValueError("the spectral stability criterion needs a doubly stochastic kernel")
    vals, _ = eig_symmetric(K.entries)
    amps = np.abs(1.0 + float(w) * (vals - 1.0))
    radius = float(np.max(amps))
    mu_min = float(np.min(vals))
    critical = float("inf") if mu_min >= 1.0 else 2.0 / (1.0 - mu_min)
    return StabilityVerdict(
        spectral_radius=radius,
        stable=bool(radius <= 1.0 + 1e-12),
        critical_weight=critical,
    )


def reverse_evolve(
    Z0: FeatureField,
    K: KernelMatrix,
    w: float,
    num_steps: int,
    record_states: bool = False,
) -> TrajectoryRecord:
    """Run the proposed stepper with weight -w (the time-reversed chain).

    Growth is bounded per step (factor at most 1 + 2w for symmetric
    doubly stochastic K) but compounds, so blow-up detection stays armed.
    """
    if not (isinstance(w, (int, float)) and w >= 0):
        raise ValueError("reverse evolution takes a nonnegative scalar weight")
    return evolve(Z0, ProposedStepper(K, -float(w)), num_steps, record_states)


def _assumes_symmetric_doubly(traj: TrajectoryRecord) -> bool:
    if traj.stepper not in ("proposed", "markov"):
        return False
    f = traj.kernel_flags
    return bool(f and f.get("symmetric") and f.get("doubly_stochastic"))


@dataclass(frozen=True)
class MeanPreservationReport:
    max_deviation: float
    passed: Optional[bool]
    assumption_violated: bool
    tolerance: float = 1e-10


def verify_mean_preservation(traj: TrajectoryRecord) -> MeanPreservationReport:
    """Max per-channel drift of the mean from its initial value.

    Only meaningful under a symmetric doubly stochastic kernel; with the
    assumption unmet the report says so and takes no pass/fail stance.
    """
    stats = traj.per_step_stats
    m0 = np.asarray(stats[0].mean)
    dev = max(float(np.max(np.abs(np.asarray(s.mean) - m0))) for s in stats)
    if not _assumes_symmetric_doubly(traj):
        return MeanPreservationReport(dev, None, True)
    return MeanPreservationReport(dev, dev <= 1e-10, False)


@dataclass(frozen=True)
class VarianceDecayReport:
    max_increase: float
    passed: Optional[bool]
    assumption_violated: bool
    first_violation_step: Optional[int]
    tolerance: float = 1e-12


def verify_variance_decay(traj: TrajectoryRecord) -> VarianceDecayReport:
    """Checks var(Z^{n+1}) <= var(Z^n) + 1e-12 at every step."""
    stats = traj.per_step_stats
    max_inc = 0.0
    first = None
    for n in range(len(stats) - 1):
        inc = stats[n + 1].variance - stats[n].variance
        if inc > max_inc:
            max_inc = inc
        if first is None and inc > 1e-12:
            first = n
    if not _assumes_symmetric_doubly(traj):
        return VarianceDecayReport(max_inc, None, True, first)
    return VarianceDecayReport(max_inc, first is None, False, first)


def variance_dissipation(K: KernelMatrix, Z: FeatureField) -> float:
    """One-step variance drop of the Markov map, from the energy identity.

    For symmetric doubly stochastic K, with v the centered field:
    var(K Z) - var(Z) = -(1/2M) sum_ij (K^2)_ij ||v_i - v_j||^2.
    This returns the right-hand side's magnitude (the predicted drop); it
    is the discrete mechanism behind monotone variance decay.
    """
    if not (K.symmetric and K.doubly_stochastic):
        raise ValueError("the energy identity needs a symmetric doubly stochastic kernel")
    v = Z.values - Z.values.mean(axis=0)
    K2 = K.entries @ K.entries
    sq = np.sum(v * v, axis=1)
    pair = sq[:, None] + sq[None, :] - 2.0 * (v @ v.T)
    return float(np.sum(K2 * pair) / (2.0 * Z.num_positions))


@dataclass(frozen=True)
class DecayRateFit:
    lambda_hat: float
    r_squared: float
    num_points: int


def estimate_decay_rate(traj: TrajectoryRecord) -> DecayRateFit:
    """Least-squares slope of log dist_to_mean vs step.

    Points at or below FIT_FLOOR are floating-point noise and are
    excluded; fewer than 3 usable points cannot support a line fit.
    """
    dists = np.array([s.dist_to_mean for s in traj.per_step_stats])
    mask = dists > FIT_FLOOR
    if int(mask.sum()) < 3:
        raise InsufficientDataError(
            f"decay fit needs at least 3 points above {FIT_FLOOR}, found {int(mask.sum())}"
        )
    x = np.arange(len(dists), dtype=np.float64)[mask]
    y = np.log(dists[mask])
    xm = x.mean()
    ym = y.mean()
    sxx = float(np.sum((x - xm) ** 2))
    slope = float(np.sum((x - xm) * (y - ym)) / sxx)
    resid = y - (ym + slope * (x - xm))
    ss_res = float(np.sum(resid**2))
    ss_tot = float(np.sum((y - ym) ** 2))
    r2 = 1.0 if ss_tot <= 1e-30 else 1.0 - ss_res / ss_tot
    return DecayRateFit(lambda_hat=-slope, r_squared=r2, num_points=int(mask.sum()))


def poincare_constant(K: KernelMatrix) -> float:
    """m = 1 - lambda_2(K): the decay floor on mean-zero fields.

    For any mean-zero Z, sum_ij K_ij (Z_j - Z_i)^2 >= 2 m ||Z||^2.  A
    return of exactly 0.0 flags a degenerate (disconnected or frozen)
    chain with no spectral gap.
    """
    if not (K.symmetric and K.doubly_stochastic):
        raise ValueError("the Poincare constant needs a symmetric doubly stochastic kernel")
    if K.size < 2:
        return 0.0
    vals, _ = eig_symmetric(K.entries)
    m = 1.0 - float(vals[1])
    if m <= 1e-10:
        return 0.0
    return m


@dataclass(frozen=True)
class SteadyStateReport:
    status: str  # passed | not_converged | blow_up
    final_inf_norm: float
    steps_run: int
    decay_curve: tuple
    tolerance: float


def steady_state_check_original(
    spec: AffinityKernelSpec,
    W: float,
    Z0: FeatureField,
    num_steps: int,
    tol: float,
) -> SteadyStateReport:
    """Drive the original block and test whether it damps to Z = 0.

    Blow-up (typically a wrong-sign weight) is reported as its own status
    rather than lumped in with slow convergence.
    """
    if not isinstance(W, (int, float)):
        raise ValueError("the steady-state check takes a scalar weight")
    stepper = OriginalStepper(spec, float(W))
    try:
        traj = evolve(Z0, stepper, num_steps, record_states=True)
    except BlowUpError as err:
        partial = err.record
        curve = tuple(float(np.max(np.abs(s.values))) for s in partial.states)
        return SteadyStateReport(
            status="blow_up",
            final_inf_norm=float("inf"),
            steps_run=err.step,
            decay_curve=curve,
            tolerance=float(tol),
        )
    curve = tuple(float(np.max(np.abs(s.values))) for s in traj.states)
    final = curve[-1]
    status = "passed" if final <= tol else "not_converged"
    return SteadyStateReport(
        status=status,
        final_inf_norm=final,
        steps_run=traj.steps,
        decay_curve=curve,
        tolerance=float(tol),
    )
