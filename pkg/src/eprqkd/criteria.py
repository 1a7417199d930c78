"""Estimators of EPR correlation measures from finite measurement records.

A record holds per-slot measurement settings and outcomes for Alice and Bob
(and optionally an eavesdropper column).  From the slots where both parties
used the same setting we estimate:

* the linear inference variance, the least-squares error of predicting one
  party's outcome from the other's;
* the binned inference variance, the probability-weighted average of
  per-bin conditional variances;
* the inference product criterion (product of the two inference standard
  deviations, correlated below 1);
* the narrowness half-width delta of the binned conditionals.

Settings are restricted to the two protocol angles 0 (X) and pi/2 (P).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Dict, NamedTuple, Optional

import numpy as np

ANGLE_X = 0.0
ANGLE_P = math.pi / 2.0

DEFAULT_BIN_WIDTH = 0.2
DEFAULT_MIN_COUNT = 20
DEFAULT_BOOTSTRAP = 200

_ANGLE_TOL = 1e-9


def _is_setting(angles: np.ndarray, setting: float) -> np.ndarray:
    return np.abs(angles - setting) < _ANGLE_TOL


@dataclass(frozen=True)
class MeasurementRecord:
    """Per-slot settings and outcomes for Alice, Bob, and optionally Eve.

    Alice/Bob angles must be one of the two protocol settings (0 or pi/2).
    The eve columns are either both present or both absent; ``eve_value``
    holds Eve's estimate of Alice's announced quadrature and ``eve_angle``
    the homodyne angle she used (unrestricted).
    """

    alice_angle: np.ndarray
    bob_angle: np.ndarray
    alice_value: np.ndarray
    bob_value: np.ndarray
    eve_angle: Optional[np.ndarray] = None
    eve_value: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        arrays = {
            "alice_angle": np.asarray(self.alice_angle, dtype=float),
            "bob_angle": np.asarray(self.bob_angle, dtype=float),
            "alice_value": np.asarray(self.alice_value, dtype=float),
            "bob_value": np.asarray(self.bob_value, dtype=float),
        }
        if (self.eve_angle is None) != (self.eve_value is None):
            raise ValueError("eve_angle and eve_value must be given together")
        if self.eve_angle is not None:
            arrays["eve_angle"] = np.asarray(self.eve_angle, dtype=float)
            arrays["eve_value"] = np.asarray(self.eve_value, dtype=float)
        n = arrays["alice_angle"].shape[0] if arrays["alice_angle"].ndim else -1
        for name, arr in arrays.items():
            if arr.ndim != 1 or arr.shape[0] != n:
                raise ValueError(f"{name} must be a 1-d array of common length")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains non-finite entries")
        for name in ("alice_angle", "bob_angle"):
            ok = _is_setting(arrays[name], ANGLE_X) | _is_setting(arrays[name], ANGLE_P)
            if not np.all(ok):
                raise ValueError(f"{name} must be one of the protocol settings 0 or pi/2")
        for name, arr in arrays.items():
            object.__setattr__(self, name, arr)

    def __len__(self) -> int:
        return int(self.alice_angle.shape[0])

    @property
    def has_eve(self) -> bool:
        return self.eve_value is not None

    def sift_mask(self) -> np.ndarray:
        """Slots where Alice's and Bob's settings agree."""
        return np.abs(self.alice_angle - self.bob_angle) < _ANGLE_TOL

    def setting_mask(self, which: str) -> np.ndarray:
        """Sifted slots of one setting; ``which`` is ``"x"`` or ``"p"``."""
        setting = _setting_angle(which)
        return _is_setting(self.alice_angle, setting) & _is_setting(self.bob_angle, setting)

    def subset(self, indices: np.ndarray) -> "MeasurementRecord":
        kw = {}
        if self.has_eve:
            kw = {"eve_angle": self.eve_angle[indices], "eve_value": self.eve_value[indices]}
        return MeasurementRecord(
            self.alice_angle[indices],
            self.bob_angle[indices],
            self.alice_value[indices],
            self.bob_value[indices],
            **kw,
        )


def _setting_angle(which: str) -> float:
    if which == "x":
        return ANGLE_X
    if which == "p":
        return ANGLE_P
    raise ValueError("setting must be 'x' or 'p'")


def write_record_csv(record: MeasurementRecord, path) -> None:
    """CSV columns: alice_angle, bob_angle, alice_value, bob_value[, eve_angle, eve_value]."""
    header = ["alice_angle", "bob_angle", "alice_value", "bob_value"]
    columns = [record.alice_angle, record.bob_angle, record.alice_value, record.bob_value]
    if record.has_eve:
        header += ["eve_angle", "eve_value"]
        columns += [record.eve_angle, record.eve_value]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in zip(*columns):
            writer.writerow([repr(float(v)) for v in row])


def read_record_csv(path) -> MeasurementRecord:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [list(map(float, row)) for row in reader if row]
    expected = ["alice_angle", "bob_angle", "alice_value", "bob_value"]
    if header[:4] != expected or header[4:] not in ([], ["eve_angle", "eve_value"]):
        raise ValueError(f"unexpected record CSV header: {header}")
    data = np.asarray(rows, dtype=float).reshape(len(rows), len(header))
    kw = {}
    if len(header) == 6:
        kw = {"eve_angle": data[:, 4], "eve_value": data[:, 5]}
    return MeasurementRecord(data[:, 0], data[:, 1], data[:, 2], data[:, 3], **kw)


class LinearInference(NamedTuple):
    variance: float
    gain: float
    offset: float
    degenerate: bool


def least_squares_inference(a: np.ndarray, b: np.ndarray) -> LinearInference:
    """Least-squares error of predicting ``a`` from ``b`` via a*_i = g b_i + d.

    Returns the minimized mean squared deviation, the gain g and offset d.
    A zero-variance predictor yields gain 0 with the ``degenerate`` flag set.
    """
    if a.shape[0] < 2:
        raise ValueError("need at least 2 slots for a linear inference")
    var_b = float(np.var(b))
    if var_b <= 0.0:
        offset = float(np.mean(a))
        return LinearInference(float(np.var(a)), 0.0, offset, True)
    gain = float(np.cov(a, b, bias=True)[0, 1] / var_b)
    offset = float(np.mean(a) - gain * np.mean(b))
    residual = a - gain * b - offset
    return LinearInference(float(np.mean(residual**2)), gain, offset, False)


def linear_inference_variance(record: MeasurementRecord, which: str) -> LinearInference:
    """Linear inference variance of Alice's outcome from Bob's, one setting.

    For the X setting the estimate is a = g b + d.  The P setting carries the
    anticorrelation sign convention a = -(h b + d), so the returned gain h is
    positive for an anticorrelated record.
    """
    mask = record.setting_mask(which)
    a = record.alice_value[mask]
    b = record.bob_value[mask]
    if a.shape[0] < 2:
        raise ValueError(f"need at least 2 sifted '{which}' slots, got {a.shape[0]}")
    if which == "p":
        fit = least_squares_inference(-a, b)
        return LinearInference(fit.variance, fit.gain, fit.offset, fit.degenerate)
    return least_squares_inference(a, b)


class BinnedInference(NamedTuple):
    variance: float
    per_bin: Dict[int, float]
    counts: Dict[int, int]
    excluded_fraction: float


def binned_inference_variance(
    record: MeasurementRecord,
    which: str,
    bin_width: float = DEFAULT_BIN_WIDTH,
    min_count: int = DEFAULT_MIN_COUNT,
) -> BinnedInference:
    """Bin Bob's outcomes; average Alice's per-bin conditional variance.

    Bins are [k*w, (k+1)*w); per-bin variances use the unbiased (n-1)
    estimator and are weighted by the empirical bin probability among the
    included bins.  Bins with fewer than ``min_count`` samples are excluded
    and their probability mass reported, so the caller can detect bias.
    """
    if bin_width <= 0.0:
        raise ValueError("bin_width must be positive")
    mask = record.setting_mask(which)
    a = record.alice_value[mask]
    b = record.bob_value[mask]
    if a.shape[0] == 0:
        raise ValueError(f"no sifted '{which}' slots")
    bins = np.floor(b / bin_width).astype(np.int64)
    ids, inverse, counts = np.unique(bins, return_inverse=True, return_counts=True)
    sums = np.bincount(inverse, weights=a, minlength=ids.size)
    sumsq = np.bincount(inverse, weights=a**2, minlength=ids.size)
    keep = counts >= max(min_count, 2)
    if not np.any(keep):
        raise ValueError("all bins are below the minimum occupancy")
    means = sums[keep] / counts[keep]
    variances = (sumsq[keep] - counts[keep] * means**2) / (counts[keep] - 1)
    variances = np.clip(variances, 0.0, None)
    weights = counts[keep] / counts[keep].sum()
    per_bin = {int(k): float(v) for k, v in zip(ids[keep], variances)}
    count_map = {int(k): int(c) for k, c in zip(ids[keep], counts[keep])}
    excluded = 1.0 - counts[keep].sum() / a.shape[0]
    return BinnedInference(float(weights @ variances), per_bin, count_map, float(excluded))


def narrowness_delta(
    record: MeasurementRecord,
    which: str,
    coverage: float = 1.0,
    bin_width: float = DEFAULT_BIN_WIDTH,
    min_count: int = DEFAULT_MIN_COUNT,
    convention: str = "observed",
) -> Optional[float]:
    """Smallest half-width delta covering the binned conditional deviations.

    ``convention="observed"`` takes the ``coverage`` quantile (default: the
    maximum) of |alice - bin mean| over all populated bins.
    ``convention="gaussian3"`` instead takes three times the largest per-bin
    sample standard deviation, the point where a Gaussian conditional is
    already negligible.  Returns ``None`` when no delta below 1 exists
    (the half-width criterion is then unusable) or no bin is populated.
    """
    if not 0.0 < coverage <= 1.0:
        raise ValueError("coverage must lie in (0, 1]")
    if convention not in ("observed", "gaussian3"):
        raise ValueError("convention must be 'observed' or 'gaussian3'")
    mask = record.setting_mask(which)
    a = record.alice_value[mask]
    b = record.bob_value[mask]
    if a.shape[0] == 0:
        return None
    bins = np.floor(b / bin_width).astype(np.int64)
    ids, inverse, counts = np.unique(bins, return_inverse=True, return_counts=True)
    keep = counts >= max(min_count, 2)
    if not np.any(keep):
        return None
    sums = np.bincount(inverse, weights=a, minlength=ids.size)
    means = np.where(counts > 0, sums / np.maximum(counts, 1), 0.0)
    in_kept = keep[inverse]
    deviations = np.abs(a[in_kept] - means[inverse][in_kept])
    if convention == "gaussian3":
        sumsq = np.bincount(inverse, weights=a**2, minlength=ids.size)
        variances = (sumsq[keep] - counts[keep] * means[keep] ** 2) / (counts[keep] - 1)
        delta = 3.0 * math.sqrt(max(float(np.max(np.clip(variances, 0.0, None))), 0.0))
    elif coverage >= 1.0:
        delta = float(np.max(deviations))
    else:
        delta = float(np.quantile(deviations, coverage))
    return None if delta >= 1.0 else delta


@dataclass(frozen=True)
class EprStatistics:
    """Inference variances, gains, criterion product, and binned diagnostics.

    ``delta_inf_x``/``delta_inf_p`` are the linear inference *standard
    deviations* (the protocol measures through the linear estimator);
    ``product`` is their product, the quantity compared against 1.
    ``per_bin_variances`` holds the per-bin conditional variances keyed by
    setting then bin index; ``binned_variance`` their weighted averages.
    """

    delta_inf_x: float
    delta_inf_p: float
    gain_g: float
    gain_h: float
    offset_d: float
    offset_d_p: float
    product: float
    binned_variance: Dict[str, float]
    per_bin_variances: Dict[str, Dict[int, float]]
    sample_counts: Dict[str, Dict[int, int]]
    excluded_fraction: Dict[str, float]
    delta_narrow: Optional[float]
    n_slots: Dict[str, int]

    def __post_init__(self) -> None:
        if self.delta_inf_x < 0.0 or self.delta_inf_p < 0.0:
            raise ValueError("inference standard deviations must be non-negative")
        if not math.isclose(self.product, self.delta_inf_x * self.delta_inf_p, rel_tol=1e-12, abs_tol=1e-15):
            raise ValueError("product must equal delta_inf_x * delta_inf_p")

    def to_json_dict(self) -> dict:
        return {
            "delta_inf_x": self.delta_inf_x,
            "delta_inf_p": self.delta_inf_p,
            "gain_g": self.gain_g,
            "gain_h": self.gain_h,
            "offset_d": self.offset_d,
            "offset_d_p": self.offset_d_p,
            "product": self.product,
            "binned_variance": dict(self.binned_variance),
            "per_bin_variances": {k: {str(b): v for b, v in m.items()} for k, m in self.per_bin_variances.items()},
            "sample_counts": {k: {str(b): c for b, c in m.items()} for k, m in self.sample_counts.items()},
            "excluded_fraction": dict(self.excluded_fraction),
            "delta_narrow": self.delta_narrow,
            "n_slots": dict(self.n_slots),
        }


def compute_epr_statistics(
    record: MeasurementRecord,
    bin_width: float = DEFAULT_BIN_WIDTH,
    min_count: int = DEFAULT_MIN_COUNT,
    narrow_convention: str = "observed",
) -> EprStatistics:
    """Full statistics bundle over one record (both settings required)."""
    lin_x = linear_inference_variance(record, "x")
    lin_p = linear_inference_variance(record, "p")
    binned: Dict[str, BinnedInference] = {}
    for which in ("x", "p"):
        binned[which] = binned_inference_variance(record, which, bin_width, min_count)
    deltas = [narrowness_delta(record, w, bin_width=bin_width, min_count=min_count, convention=narrow_convention) for w in ("x", "p")]
    delta_narrow = None if any(d is None for d in deltas) else max(deltas)
    dx = math.sqrt(lin_x.variance)
    dp = math.sqrt(lin_p.variance)
    return EprStatistics(
        delta_inf_x=dx,
        delta_inf_p=dp,
        gain_g=lin_x.gain,
        gain_h=lin_p.gain,
        offset_d=lin_x.offset,
        offset_d_p=lin_p.offset,
        product=dx * dp,
        binned_variance={w: binned[w].variance for w in ("x", "p")},
        per_bin_variances={w: binned[w].per_bin for w in ("x", "p")},
        sample_counts={w: binned[w].counts for w in ("x", "p")},
        excluded_fraction={w: binned[w].excluded_fraction for w in ("x", "p")},
        delta_narrow=delta_narrow,
        n_slots={w: int(record.setting_mask(w).sum()) for w in ("x", "p")},
    )


@dataclass(frozen=True)
class CriterionResult:
    """Inference-product verdict, strictly below 1 means correlations shown."""

    product: float
    satisfied: bool
    ci_low: Optional[float] = None
    ci_high: Optional[float] = None
    n_bootstrap: int = 0

    def to_json_dict(self) -> dict:
        return {
            "product": self.product,
            "satisfied": self.satisfied,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "n_bootstrap": self.n_bootstrap,
        }


def bootstrap_products(
    record: MeasurementRecord,
    n_bootstrap: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Bootstrap samples of the linear inference product (slot resampling)."""
    products = np.empty(n_bootstrap)
    data = {}
    for which in ("x", "p"):
        mask = record.setting_mask(which)
        data[which] = (record.alice_value[mask], record.bob_value[mask])
    for k in range(n_bootstrap):
        value = 1.0
        for which in ("x", "p"):
            a, b = data[which]
            idx = rng.integers(0, a.shape[0], a.shape[0])
            value *= math.sqrt(least_squares_inference(a[idx], b[idx]).variance)
        products[k] = value
    return products


def epr_criterion(
    delta_inf_x: float,
    delta_inf_p: float,
    record: Optional[MeasurementRecord] = None,
    n_bootstrap: int = DEFAULT_BOOTSTRAP,
    confidence: float = 0.95,
    rng: Optional[np.random.Generator] = None,
) -> CriterionResult:
    """Product criterion: satisfied iff delta_inf_x * delta_inf_p < 1 strictly.

    When a record is supplied, a bootstrap percentile confidence interval for
    the product is attached (slotwise resampling, default 200 resamples).
    """
    if delta_inf_x < 0.0 or delta_inf_p < 0.0:
        raise ValueError("inference standard deviations must be non-negative")
    product = delta_inf_x * delta_inf_p
    if record is None:
        return CriterionResult(product, product < 1.0)
    rng = np.random.default_rng(0) if rng is None else rng
    samples = bootstrap_products(record, n_bootstrap, rng)
    tail = 0.5 * (1.0 - confidence)
    lo, hi = np.quantile(samples, [tail, 1.0 - tail])
    return CriterionResult(product, product < 1.0, float(lo), float(hi), n_bootstrap)
