"""Security bounds and contradiction chains over measured or analytic statistics.

The calculators here turn measured inference statistics into limits on an
eavesdropper's accuracy:

* per-cell uncertainty products over joint (Bob bin, Eve bin) conditionals;
* the perfect-correlation verdict (zero conditional variances force an
  unbounded eavesdropper error);
* the narrowness bound: conditionals vanishing beyond a half-width delta < 1
  force every eavesdropper conditional standard deviation above 1/delta;
* the average-inference bound: the eavesdropper's inference standard
  deviation for one quadrature is at least the reciprocal of the parties'
  inference standard deviation for the conjugate one;
* the averaging/Cauchy-Schwarz chain showing that an eavesdropper whose
  inferred statistics matched Bob's would force the inference product to 1
  or above;
* Gaussian decoding error rates for the binned encryption scheme.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np

from .criteria import CriterionResult, EprStatistics
from .gaussian import GaussianState, conditional_stats

PERFECT_TOL = 1e-9
ANALYTIC_TOL = 1e-9
NARROW_SIGMA_LIMIT = 1.0 / 3.0
# Exact threshold of the weak-correlation strategy: 1/sigma > 3*sigma.
WEAK_SIGMA_LIMIT = 1.0 / math.sqrt(3.0)

VERDICT_PERFECT = "perfect_secure"
VERDICT_BOUNDED = "bounded_secure"
VERDICT_INSECURE = "insecure_indeterminate"

HYPOTHESIS_PERFECT = "perfect_correlation"
HYPOTHESIS_NARROW = "per_outcome_narrowness"
HYPOTHESIS_AVERAGE = "average_inference"


class Unbounded:
    """Marker for an unbounded (infinite-variance) eavesdropper error.

    Kept out of arithmetic paths on purpose; serialize with
    :func:`bound_to_json`.
    """

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "unbounded"


UNBOUNDED = Unbounded()

Bound = Union[float, Unbounded]


def bound_to_json(bound: Optional[Bound]):
    if bound is None:
        return None
    return "unbounded" if isinstance(bound, Unbounded) else float(bound)


def normal_upper_tail(z: float) -> float:
    """P(N(0,1) > z), via the complementary error function (abs err < 1e-12)."""
    return 0.5 * math.erfc(z / math.sqrt(2.0))


class ErrorRates(NamedTuple):
    bob_rate: float
    eve_rate: float


def gaussian_error_rates(sigma: float, eve_std: float) -> ErrorRates:
    """Symbol error rates on a grid spaced 6*A*sigma (threshold 3*A*sigma).

    Bob's Gaussian key error has standard deviation sigma, so his rate is
    2 Q(3) ~= 0.0027 regardless of sigma.  An eavesdropper with Gaussian
    conditional standard deviation ``eve_std`` errs at 2 Q(3 sigma/eve_std),
    which grows with eve_std: a fuzzier estimate crosses the +-3 sigma
    decision threshold more often.
    """
    if sigma <= 0.0 or eve_std <= 0.0:
        raise ValueError("sigma and eve_std must be positive")
    return ErrorRates(
        bob_rate=2.0 * normal_upper_tail(3.0),
        eve_rate=2.0 * normal_upper_tail(3.0 * sigma / eve_std),
    )


def sigma_regime_classifier(sigma: float) -> str:
    """Which bound strategy a measured conditional deviation supports.

    ``narrow`` (sigma < 1/3): the per-outcome half-width bound applies.
    ``weak`` (sigma < 1/sqrt(3), i.e. 1/sigma > 3*sigma): the average
    inference bound still forces decoding errors.  Anything larger is
    ``indeterminate``: bounds exist but do not force errors without
    assumptions on the eavesdropper's conditional shape.
    """
    if sigma <= 0.0:
        raise ValueError("sigma must be positive")
    if sigma < NARROW_SIGMA_LIMIT:
        return "narrow"
    if sigma < WEAK_SIGMA_LIMIT:
        return "weak"
    return "indeterminate"


class NarrownessBound(NamedTuple):
    eve_min_std: float
    demonstrative: bool


def narrowness_bound(delta: float) -> NarrownessBound:
    """Per-outcome lower bound 1/delta on every eavesdropper conditional std.

    Valid when every conditional distribution vanishes beyond half-width
    ``delta``; only demonstrative for delta < 1 (otherwise the bound does not
    exceed the vacuum unit and is flagged).
    """
    if delta <= 0.0 or not math.isfinite(delta):
        raise ValueError("delta must be positive and finite")
    return NarrownessBound(1.0 / delta, delta < 1.0)


def average_inference_bound(delta_inf: float) -> float:
    """Average-inference reciprocal bound: eavesdropper std >= 1/delta_inf."""
    if not math.isfinite(delta_inf) or delta_inf < 0.0:
        raise ValueError("delta_inf must be finite and non-negative")
    if delta_inf == 0.0:
        raise ValueError(
            "zero inference deviation is the perfect-correlation limit; "
            "use perfect_correlation_verdict"
        )
    return 1.0 / delta_inf


def floor_two_significant(value: float) -> float:
    """Round a positive value down to two significant figures.

    Weakening a lower bound this way keeps any error floor computed from it
    valid, so reports quote the floored bound as the conservative headline.
    """
    if value <= 0.0 or not math.isfinite(value):
        raise ValueError("value must be positive and finite")
    exponent = math.floor(math.log10(value))
    mantissa = math.floor(value / 10.0 ** (exponent - 1) + 1e-12)
    return float(f"{mantissa}e{exponent - 1}")


def perfect_correlation_verdict(stats: EprStatistics, tol: float = PERFECT_TOL) -> str:
    """``perfect_secure`` iff every per-bin conditional variance vanishes.

    Meant for analytic inputs: all per-bin variances (both settings) must be
    below ``tol``; any nonzero bin falls through to the bounded analysis.
    """
    bins = list(stats.per_bin_variances.get("x", {}).values()) + list(
        stats.per_bin_variances.get("p", {}).values()
    )
    if bins and all(v <= tol for v in bins):
        return VERDICT_PERFECT
    return VERDICT_BOUNDED


# ---------------------------------------------------------------------------
# Joint conditional tables
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class JointConditionalTable:
    """Binned joint conditionals of Alice's outcomes given Bob and Eve bins.

    ``prob[i, q]`` is the empirical probability of (Bob bin i, Eve bin q),
    pooled over both of Alice's settings and summing to 1.  ``var_x`` is the
    per-cell variance of Alice's primary-quadrature outcomes and ``var_p`` of
    the conjugate ones; cells (or marginal bins) with fewer than ``min_count``
    samples in a context carry NaN and are skipped by the checks, which
    report the skipped probability mass.  The marginal arrays hold the
    per-Bob-bin variance of the primary outcomes and the per-Eve-bin variance
    of the conjugate outcomes.
    """

    bob_bins: np.ndarray
    eve_bins: np.ndarray
    prob: np.ndarray
    var_x: np.ndarray
    var_p: np.ndarray
    count_x: np.ndarray
    count_p: np.ndarray
    bob_marginal_prob: np.ndarray
    bob_marginal_var: np.ndarray
    bob_marginal_count: np.ndarray
    eve_marginal_prob: np.ndarray
    eve_marginal_var: np.ndarray
    eve_marginal_count: np.ndarray
    bin_width: float
    min_count: int

    def validate(self) -> None:
        if abs(float(self.prob.sum()) - 1.0) > 1e-9:
            raise ValueError("cell probabilities must sum to 1")
        for arr in (self.var_x, self.var_p, self.bob_marginal_var, self.eve_marginal_var):
            values = arr[np.isfinite(arr)]
            if np.any(values < 0.0):
                raise ValueError("variances must be non-negative")
        if not np.allclose(self.prob.sum(axis=1), self.bob_marginal_prob, atol=1e-9):
            raise ValueError("Bob marginal probabilities inconsistent with cells")
        if not np.allclose(self.prob.sum(axis=0), self.eve_marginal_prob, atol=1e-9):
            raise ValueError("Eve marginal probabilities inconsistent with cells")

    def fraction_eve_given_bob(self) -> np.ndarray:
        """f[i, q] = P(i, q) / P(i)."""
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.bob_marginal_prob[:, None] > 0, self.prob / self.bob_marginal_prob[:, None], 0.0)

    def fraction_bob_given_eve(self) -> np.ndarray:
        """f[i, q] = P(i, q) / P(q)."""
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.eve_marginal_prob[None, :] > 0, self.prob / self.eve_marginal_prob[None, :], 0.0)


def _group_variance(ids: np.ndarray, values: np.ndarray, n_groups: int, min_count: int):
    counts = np.bincount(ids, minlength=n_groups)
    sums = np.bincount(ids, weights=values, minlength=n_groups)
    sumsq = np.bincount(ids, weights=values**2, minlength=n_groups)
    with np.errstate(invalid="ignore", divide="ignore"):
        means = np.where(counts > 0, sums / np.maximum(counts, 1), 0.0)
        variances = np.where(
            counts > 1, (sumsq - counts * means**2) / np.maximum(counts - 1, 1), np.nan
        )
    variances = np.where(counts >= max(min_count, 2), np.clip(variances, 0.0, None), np.nan)
    return counts, variances


def build_joint_conditional_table(
    bob_values: np.ndarray,
    eve_values: np.ndarray,
    alice_values: np.ndarray,
    alice_primary: np.ndarray,
    bin_width: float = 0.5,
    min_count: int = 20,
) -> JointConditionalTable:
    """Build the table from raw joint outcomes.

    ``alice_primary`` marks the slots where Alice measured the primary
    quadrature (the one Bob's measurement infers); the rest measured the
    conjugate one.  The default bin width is coarser than the marginal
    statistics default because cells subdivide in two dimensions.
    """
    if bin_width <= 0.0:
        raise ValueError("bin_width must be positive")
    bob_values = np.asarray(bob_values, dtype=float)
    eve_values = np.asarray(eve_values, dtype=float)
    alice_values = np.asarray(alice_values, dtype=float)
    alice_primary = np.asarray(alice_primary, dtype=bool)
    if not (bob_values.shape == eve_values.shape == alice_values.shape == alice_primary.shape):
        raise ValueError("input arrays must share one shape")
    bob_raw = np.floor(bob_values / bin_width).astype(np.int64)
    eve_raw = np.floor(eve_values / bin_width).astype(np.int64)
    bob_bins, bob_ids = np.unique(bob_raw, return_inverse=True)
    eve_bins, eve_ids = np.unique(eve_raw, return_inverse=True)
    nb, ne = bob_bins.size, eve_bins.size
    cell_ids = bob_ids * ne + eve_ids
    n_cells = nb * ne

    x, p = alice_primary, ~alice_primary
    count_x, var_x = _group_variance(cell_ids[x], alice_values[x], n_cells, min_count)
    count_p, var_p = _group_variance(cell_ids[p], alice_values[p], n_cells, min_count)
    total = np.bincount(cell_ids, minlength=n_cells).astype(float)
    prob = total / total.sum()

    bob_count, bob_var = _group_variance(bob_ids[x], alice_values[x], nb, min_count)
    eve_count, eve_var = _group_variance(eve_ids[p], alice_values[p], ne, min_count)
    bob_prob = np.bincount(bob_ids, minlength=nb) / bob_ids.shape[0]
    eve_prob = np.bincount(eve_ids, minlength=ne) / eve_ids.shape[0]

    table = JointConditionalTable(
        bob_bins=bob_bins,
        eve_bins=eve_bins,
        prob=prob.reshape(nb, ne),
        var_x=var_x.reshape(nb, ne),
        var_p=var_p.reshape(nb, ne),
        count_x=count_x.reshape(nb, ne),
        count_p=count_p.reshape(nb, ne),
        bob_marginal_prob=bob_prob,
        bob_marginal_var=bob_var,
        bob_marginal_count=bob_count,
        eve_marginal_prob=eve_prob,
        eve_marginal_var=eve_var,
        eve_marginal_count=eve_count,
        bin_width=bin_width,
        min_count=min_count,
    )
    table.validate()
    return table


def analytic_joint_table(
    state: GaussianState,
    alice_mode: int,
    primary_angle: float,
    bob_quad: Tuple[int, float],
    eve_quads: Sequence[Tuple[int, float]],
) -> JointConditionalTable:
    """Single-cell table from exact Gaussian conditionals.

    Gaussian conditionals are homoscedastic, so the bin-free limit collapses
    every cell to the same variances; a one-cell table with probability 1
    carries the exact chain.
    """
    conjugate_angle = primary_angle + math.pi / 2.0
    eve_quads = list(eve_quads)
    var_x_cell = conditional_stats(state, (alice_mode, primary_angle), [bob_quad] + eve_quads).residual_variance
    var_p_cell = conditional_stats(state, (alice_mode, conjugate_angle), [bob_quad] + eve_quads).residual_variance
    bob_var = conditional_stats(state, (alice_mode, primary_angle), [bob_quad]).residual_variance
    eve_var = conditional_stats(state, (alice_mode, conjugate_angle), eve_quads).residual_variance
    one = np.ones((1, 1))
    big = np.full((1, 1), 10**9)
    return JointConditionalTable(
        bob_bins=np.array([0]),
        eve_bins=np.array([0]),
        prob=one.copy(),
        var_x=np.array([[var_x_cell]]),
        var_p=np.array([[var_p_cell]]),
        count_x=big.copy(),
        count_p=big.copy(),
        bob_marginal_prob=np.array([1.0]),
        bob_marginal_var=np.array([bob_var]),
        bob_marginal_count=np.array([10**9]),
        eve_marginal_prob=np.array([1.0]),
        eve_marginal_var=np.array([eve_var]),
        eve_marginal_count=np.array([10**9]),
        bin_width=math.inf,
        min_count=2,
    )


class UncertaintyCheck(NamedTuple):
    passed: bool
    worst_product: float
    worst_cell: Optional[Tuple[int, int]]
    n_checked: int
    skipped_mass: float


def conditional_uncertainty_check(
    table: JointConditionalTable, n_se: float = 3.0
) -> UncertaintyCheck:
    """Verify the per-cell product Delta_x * Delta_p >= 1 on every cell.

    Cells lacking a variance in either context are skipped (mass reported).
    Sample variances are noisy and right-skewed at small counts, so the
    comparison runs on the log scale with the Gaussian-theory standard error
    SE(log product) = sqrt(1/(2(n_x-1)) + 1/(2(n_p-1))).  Because the check
    takes a worst case over every populated cell, the allowance is ``n_se``
    standard errors plus the expected magnitude sqrt(2 ln n) of the minimum
    of n studentized cells; a genuine violation at reasonable counts still
    fails by a wide margin.
    """
    valid = np.isfinite(table.var_x) & np.isfinite(table.var_p)
    if not np.any(valid):
        raise ValueError("no jointly populated cells to check")
    products = np.sqrt(table.var_x[valid] * table.var_p[valid])
    nx = np.maximum(table.count_x[valid], 2)
    npp = np.maximum(table.count_p[valid], 2)
    log_se = np.sqrt(0.5 / (nx - 1) + 0.5 / (npp - 1))
    n_checked = int(valid.sum())
    allowance = n_se + math.sqrt(2.0 * math.log(max(n_checked, 2)))
    with np.errstate(divide="ignore"):
        margins = np.log(np.maximum(products, 1e-300)) + allowance * log_se
    worst_idx = int(np.argmin(margins))
    passed = bool(np.all(margins >= -ANALYTIC_TOL))
    cells = np.argwhere(valid)
    worst_cell = (int(table.bob_bins[cells[worst_idx][0]]), int(table.eve_bins[cells[worst_idx][1]]))
    return UncertaintyCheck(
        passed=passed,
        worst_product=float(products[worst_idx]),
        worst_cell=worst_cell,
        n_checked=n_checked,
        skipped_mass=float(table.prob[~valid].sum()),
    )


@dataclass(frozen=True)
class ChainReport:
    """Values of the averaging/Cauchy-Schwarz chain on a table.

    ``marginal_product`` is (sum_i P_i Var_i x) * (sum_q P_q Var_q p) from
    the table marginals; ``pooled_product`` the same built from the per-cell
    variances averaged over P(i, q); ``cs_lower`` the squared average of the
    per-cell deviation products.  The chain guarantees
    marginal >= pooled >= cs_lower >= 1, so an Alice-Bob inference product
    measured below 1 contradicts the hypothesis that the eavesdropper's
    inferred statistics match Bob's.
    """

    marginal_product: float
    pooled_product: float
    cs_lower: float
    skipped_mass: float
    measured_ab_product: Optional[float] = None
    step_se: Optional[Dict[str, float]] = None

    @property
    def hypothesis_refuted(self) -> Optional[bool]:
        if self.measured_ab_product is None:
            return None
        return self.measured_ab_product < 1.0

    def steps(self) -> Dict[str, float]:
        return {
            "marginal_product": self.marginal_product,
            "pooled_product": self.pooled_product,
            "cs_lower": self.cs_lower,
        }

    def holds(self, n_se: float = 3.0) -> bool:
        """Each chain inequality within ``n_se`` standard errors (if attached)."""
        se = self.step_se or {}
        tol1 = n_se * se.get("marginal_minus_pooled", 0.0) + ANALYTIC_TOL
        tol2 = n_se * se.get("pooled_minus_cs", 0.0) + ANALYTIC_TOL
        tol3 = n_se * se.get("cs_lower", 0.0) + ANALYTIC_TOL
        return (
            self.marginal_product >= self.pooled_product - tol1
            and self.pooled_product >= self.cs_lower - tol2
            and self.cs_lower >= 1.0 - tol3
        )

    def to_json_dict(self) -> dict:
        return {
            "marginal_product": self.marginal_product,
            "pooled_product": self.pooled_product,
            "cs_lower": self.cs_lower,
            "skipped_mass": self.skipped_mass,
            "measured_ab_product": self.measured_ab_product,
            "hypothesis_refuted": self.hypothesis_refuted,
            "step_se": dict(self.step_se) if self.step_se else None,
        }


def _chain_values(table: JointConditionalTable) -> Tuple[float, float, float, float]:
    cell_valid = np.isfinite(table.var_x) & np.isfinite(table.var_p)
    if not np.any(cell_valid):
        raise ValueError("no jointly populated cells")
    cell_prob = table.prob[cell_valid]
    cell_prob = cell_prob / cell_prob.sum()
    mean_var_x = float(cell_prob @ table.var_x[cell_valid])
    mean_var_p = float(cell_prob @ table.var_p[cell_valid])
    mean_cross = float(cell_prob @ np.sqrt(table.var_x[cell_valid] * table.var_p[cell_valid]))

    bob_valid = np.isfinite(table.bob_marginal_var)
    eve_valid = np.isfinite(table.eve_marginal_var)
    if not (np.any(bob_valid) and np.any(eve_valid)):
        raise ValueError("no populated marginal bins")
    bob_prob = table.bob_marginal_prob[bob_valid] / table.bob_marginal_prob[bob_valid].sum()
    eve_prob = table.eve_marginal_prob[eve_valid] / table.eve_marginal_prob[eve_valid].sum()
    marginal = float(bob_prob @ table.bob_marginal_var[bob_valid]) * float(
        eve_prob @ table.eve_marginal_var[eve_valid]
    )
    skipped = float(table.prob[~cell_valid].sum())
    return marginal, mean_var_x * mean_var_p, mean_cross**2, skipped


def identical_stats_contradiction(
    alice_bob: Optional[EprStatistics],
    table: JointConditionalTable,
    step_se: Optional[Dict[str, float]] = None,
) -> ChainReport:
    """Evaluate the chain on a table; compare with the Alice-Bob product.

    The chain floor applies to the product of Bob's inference variance for
    one quadrature and the eavesdropper's for the conjugate one.  If the
    parties' own measured product sits below 1, an eavesdropper with
    statistics identical to Bob's is impossible.
    """
    marginal, pooled, cs_lower, skipped = _chain_values(table)
    return ChainReport(
        marginal_product=marginal,
        pooled_product=pooled,
        cs_lower=cs_lower,
        skipped_mass=skipped,
        measured_ab_product=None if alice_bob is None else alice_bob.product,
        step_se=step_se,
    )


def _grouped_chain_values(
    cell_ids: np.ndarray,
    bob_ids: np.ndarray,
    eve_ids: np.ndarray,
    n_cells: int,
    nb: int,
    ne: int,
    alice_values: np.ndarray,
    alice_primary: np.ndarray,
    min_count: int,
):
    """Chain values from pre-binned ids; fast path shared by the bootstrap."""

    def group_variances(ids, values, n_groups):
        counts = np.bincount(ids, minlength=n_groups)
        sums = np.bincount(ids, weights=values, minlength=n_groups)
        sumsq = np.bincount(ids, weights=values**2, minlength=n_groups)
        with np.errstate(invalid="ignore", divide="ignore"):
            means = sums / np.maximum(counts, 1)
            variances = (sumsq - counts * means**2) / np.maximum(counts - 1, 1)
        keep = counts >= max(min_count, 2)
        if not np.any(keep):
            raise ValueError("no populated bins")
        return keep, np.clip(variances, 0.0, None)

    def pooled_weights(ids, keep, n_groups):
        # Weighting by the pooled-slot probability of the kept bins,
        # matching _chain_values on the assembled table.
        counts = np.bincount(ids, minlength=n_groups).astype(float)
        return counts[keep] / counts[keep].sum()

    x, p = alice_primary, ~alice_primary
    keep_x, var_x = group_variances(cell_ids[x], alice_values[x], n_cells)
    keep_p, var_p = group_variances(cell_ids[p], alice_values[p], n_cells)
    both = keep_x & keep_p
    if not np.any(both):
        raise ValueError("no jointly populated cells")
    weights = pooled_weights(cell_ids, both, n_cells)
    vx, vp = var_x[both], var_p[both]
    pooled = float(weights @ vx) * float(weights @ vp)
    cs_lower = float(weights @ np.sqrt(vx * vp)) ** 2

    keep_b, bvar = group_variances(bob_ids[x], alice_values[x], nb)
    keep_e, evar = group_variances(eve_ids[p], alice_values[p], ne)
    marginal = float(pooled_weights(bob_ids, keep_b, nb) @ bvar[keep_b]) * float(
        pooled_weights(eve_ids, keep_e, ne) @ evar[keep_e]
    )
    return marginal, pooled, cs_lower


def bootstrap_table_checks(
    bob_values: np.ndarray,
    eve_values: np.ndarray,
    alice_values: np.ndarray,
    alice_primary: np.ndarray,
    bin_width: float = 0.5,
    min_count: int = 20,
    n_bootstrap: int = 100,
    rng: Optional[np.random.Generator] = None,
) -> Tuple[JointConditionalTable, Dict[str, float]]:
    """Table plus bootstrap standard errors for the chain-step inequalities.

    Resamples slots with replacement and recomputes the chain each time; the
    returned standard errors feed :meth:`ChainReport.holds`.  (Per-cell
    checks use analytic standard errors instead: bootstrap variances are
    unreliable at the small per-cell counts.)
    """
    rng = np.random.default_rng(0) if rng is None else rng
    table = build_joint_conditional_table(
        bob_values, eve_values, alice_values, alice_primary, bin_width, min_count
    )
    # Resampled slots reuse the full data's bin universe, so the ids can be
    # computed once and resampled by index.
    bob_ids = np.searchsorted(table.bob_bins, np.floor(bob_values / bin_width).astype(np.int64))
    eve_ids = np.searchsorted(table.eve_bins, np.floor(eve_values / bin_width).astype(np.int64))
    nb, ne = table.bob_bins.size, table.eve_bins.size
    cell_ids = bob_ids * ne + eve_ids
    alice_primary = np.asarray(alice_primary, dtype=bool)
    n = bob_values.shape[0]
    margins = np.full((n_bootstrap, 3), np.nan)
    for k in range(n_bootstrap):
        idx = rng.integers(0, n, n)
        try:
            marginal, pooled, cs_lower = _grouped_chain_values(
                cell_ids[idx], bob_ids[idx], eve_ids[idx], nb * ne, nb, ne,
                alice_values[idx], alice_primary[idx], min_count,
            )
        except ValueError:
            continue
        margins[k] = (marginal - pooled, pooled - cs_lower, cs_lower)
    with np.errstate(invalid="ignore"):
        step_se = {
            "marginal_minus_pooled": float(np.nanstd(margins[:, 0])),
            "pooled_minus_cs": float(np.nanstd(margins[:, 1])),
            "cs_lower": float(np.nanstd(margins[:, 2])),
        }
    return table, step_se


# ---------------------------------------------------------------------------
# Security report
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SecurityReport:
    """Measured statistics, eavesdropper bounds, and decoding error floors.

    ``eve_bound_x`` bounds Eve's standard deviation for inferring Alice's X
    (reciprocal of the measured P-inference deviation) and vice versa.
    ``hypothesis`` records which assumption backs the verdict: the
    per-outcome narrowness bound requires a measured half-width delta < 1;
    otherwise only the average-inference bound holds, which does not rule
    out an eavesdropper concentrating her accuracy on part of the sequence.
    Error floors assume Gaussian eavesdropper conditionals; the headline
    floor uses the bound rounded down to two significant figures (rounding a
    lower bound down keeps the floor valid), with the exact-bound rate
    reported alongside.
    """

    measured: EprStatistics
    criterion: CriterionResult
    eve_bound_x: Bound
    eve_bound_p: Bound
    delta: Optional[float]
    sigma_agreed: float
    regime: str
    hypothesis: str
    verdict: str
    bob_error_rate_pred: float
    eve_error_rate_lower_bound_gaussian: Optional[float]
    eve_error_rate_exact: Optional[float]
    eve_std_floor: Optional[float]
    eve_std_floor_conservative: Optional[float]

    def to_json_dict(self) -> dict:
        return {
            "measured": self.measured.to_json_dict(),
            "criterion": self.criterion.to_json_dict(),
            "eve_bound_x": bound_to_json(self.eve_bound_x),
            "eve_bound_p": bound_to_json(self.eve_bound_p),
            "delta": self.delta,
            "sigma_agreed": self.sigma_agreed,
            "regime": self.regime,
            "hypothesis": self.hypothesis,
            "verdict": self.verdict,
            "bob_error_rate_pred": self.bob_error_rate_pred,
            "eve_error_rate_lower_bound_gaussian": self.eve_error_rate_lower_bound_gaussian,
            "eve_error_rate_exact": self.eve_error_rate_exact,
            "eve_std_floor": self.eve_std_floor,
            "eve_std_floor_conservative": self.eve_std_floor_conservative,
        }


def build_security_report(stats: EprStatistics, criterion: CriterionResult) -> SecurityReport:
    """Assemble the report from measured statistics and the criterion result.

    Verdict rules (deterministic): ``perfect_secure`` when every per-bin
    conditional variance vanishes (analytic inputs only); ``bounded_secure``
    when the inference product is below 1 with its bootstrap confidence
    interval excluding 1; otherwise ``insecure_indeterminate``.
    """
    perfect = perfect_correlation_verdict(stats) == VERDICT_PERFECT

    def reciprocal_bound(delta_inf: float) -> Bound:
        if perfect or delta_inf <= 0.0:
            return UNBOUNDED
        return average_inference_bound(delta_inf)

    eve_bound_x = reciprocal_bound(stats.delta_inf_p)
    eve_bound_p = reciprocal_bound(stats.delta_inf_x)

    sigma = max(stats.delta_inf_x, stats.delta_inf_p)
    regime = sigma_regime_classifier(sigma) if sigma > 0 else "narrow"
    delta = stats.delta_narrow

    if perfect:
        hypothesis = HYPOTHESIS_PERFECT
        floor = floor_conservative = None
        eve_rate = eve_rate_exact = None
    else:
        if delta is not None and delta < 1.0:
            hypothesis = HYPOTHESIS_NARROW
            floor = narrowness_bound(delta).eve_min_std
        else:
            hypothesis = HYPOTHESIS_AVERAGE
            floor = average_inference_bound(sigma)
        floor_conservative = floor_two_significant(floor)
        eve_rate = gaussian_error_rates(sigma, floor_conservative).eve_rate
        eve_rate_exact = gaussian_error_rates(sigma, floor).eve_rate

    if perfect:
        verdict = VERDICT_PERFECT
    elif criterion.satisfied and (criterion.ci_high is None or criterion.ci_high < 1.0):
        verdict = VERDICT_BOUNDED
    else:
        verdict = VERDICT_INSECURE

    return SecurityReport(
        measured=stats,
        criterion=criterion,
        eve_bound_x=eve_bound_x,
        eve_bound_p=eve_bound_p,
        delta=delta,
        sigma_agreed=sigma,
        regime=regime,
        hypothesis=hypothesis,
        verdict=verdict,
        bob_error_rate_pred=2.0 * normal_upper_tail(3.0),
        eve_error_rate_lower_bound_gaussian=eve_rate,
        eve_error_rate_exact=eve_rate_exact,
        eve_std_floor=floor,
        eve_std_floor_conservative=floor_conservative,
    )


def bounds_report(
    sigma: Optional[float] = None,
    delta: Optional[float] = None,
    dinf: Optional[float] = None,
) -> dict:
    """Bound summary for exactly one selector (CLI backend).

    ``sigma``: regime classification, reciprocal bound, and Gaussian error
    floors (narrow regime uses the half-width bound with delta = 3*sigma).
    ``delta``: the per-outcome bound alone.  ``dinf``: the reciprocal bound
    alone.
    """
    selectors = [v is not None for v in (sigma, delta, dinf)]
    if sum(selectors) != 1:
        raise ValueError("exactly one of sigma/delta/dinf must be given")
    if delta is not None:
        bound = narrowness_bound(delta)
        return {
            "selector": "delta",
            "delta": delta,
            "eve_min_std": bound.eve_min_std,
            "demonstrative": bound.demonstrative,
        }
    if dinf is not None:
        return {
            "selector": "dinf",
            "delta_inf": dinf,
            "eve_min_std": average_inference_bound(dinf),
        }
    if sigma <= 0.0:
        raise ValueError("sigma must be positive")
    regime = sigma_regime_classifier(sigma)
    out: dict = {"selector": "sigma", "sigma": sigma, "regime": regime}
    if regime == "narrow":
        delta_gauss = 3.0 * sigma
        floor = narrowness_bound(delta_gauss).eve_min_std
        out["delta_gaussian"] = delta_gauss
        out["hypothesis"] = HYPOTHESIS_NARROW
    else:
        floor = average_inference_bound(sigma)
        out["hypothesis"] = HYPOTHESIS_AVERAGE
    conservative = floor_two_significant(floor)
    rates = gaussian_error_rates(sigma, conservative)
    out.update(
        {
            "eve_std_floor": floor,
            "eve_std_floor_conservative": conservative,
            "eve_rate_gaussian": rates.eve_rate,
            "eve_rate_gaussian_exact": gaussian_error_rates(sigma, floor).eve_rate,
            "bob_rate_gaussian": rates.bob_rate,
            "gaussian_assumption_only": regime == "indeterminate",
        }
    )
    return out
