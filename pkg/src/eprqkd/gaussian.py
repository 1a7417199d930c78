"""Gaussian-state kernel: state creation, symplectic evolution, homodyne
measurement with exact conditioning, and seeded quadrature sampling.

Conventions
-----------
Quadratures are X = a + a^dag and P = (a - a^dag)/i, so the vacuum has unit
variance in both and the uncertainty product is bounded below by 1.  State
vectors are ordered (X1, P1, X2, P2, ...).  The symplectic form Omega is
block-diagonal with [[0, 1], [-1, 0]] per mode; physical covariance matrices
satisfy cov + i*Omega >= 0, with the vacuum saturating the bound.

All operations are pure: states are immutable inputs producing new states,
so they are safe to share across worker processes as long as each worker
owns its own RNG stream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence, Tuple

import numpy as np

# Numerical tolerances (see docstrings for where each applies).
SYMMETRY_RTOL = 1e-10
SYMPLECTIC_TOL = 1e-9
PHYSICALITY_TOL = 1e-9
# Marginal variances below this are treated as deterministic outcomes, and
# singular values below this (relative) are dropped when conditioning on a
# degenerate block.
DEGENERACY_CUTOFF = 1e-12


def symplectic_form(n_modes: int) -> np.ndarray:
    """Block-diagonal symplectic form for ``n_modes`` modes in XPXP ordering."""
    return np.kron(np.eye(n_modes), np.array([[0.0, 1.0], [-1.0, 0.0]]))


def is_symplectic(matrix: np.ndarray, tol: float = SYMPLECTIC_TOL) -> bool:
    """Check S Omega S^T = Omega within ``tol``."""
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1] or matrix.shape[0] % 2:
        return False
    omega = symplectic_form(matrix.shape[0] // 2)
    return bool(np.allclose(matrix @ omega @ matrix.T, omega, atol=tol, rtol=0.0))


def quadrature_row(n_modes: int, mode: int, angle: float) -> np.ndarray:
    """Coefficient row of the rotated quadrature cos(angle) X_m + sin(angle) P_m."""
    if not 0 <= mode < n_modes:
        raise ValueError(f"mode {mode} out of range for {n_modes} modes")
    if not math.isfinite(angle):
        raise ValueError("quadrature angle must be finite")
    row = np.zeros(2 * n_modes)
    row[2 * mode] = math.cos(angle)
    row[2 * mode + 1] = math.sin(angle)
    return row


def _quadratures_commute(quads: Sequence[Tuple[int, float]]) -> bool:
    """True when every pair of (mode, angle) quadratures commutes.

    Same-mode quadratures commute iff their angles differ by a multiple of pi.
    """
    for i, (mode_i, angle_i) in enumerate(quads):
        for mode_j, angle_j in quads[i + 1 :]:
            if mode_i == mode_j and abs(math.sin(angle_i - angle_j)) > 1e-12:
                return False
    return True


@dataclass(frozen=True)
class GaussianState:
    """Multimode Gaussian state: mean vector and covariance matrix.

    ``mean`` has length 2*n_modes and ``cov`` is the symmetric 2n x 2n
    covariance of the quadratures in (X1, P1, X2, P2, ...) ordering,
    dimensionless with vacuum variance 1.
    """

    n_modes: int
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self) -> None:
        if self.n_modes < 1:
            raise ValueError("a Gaussian state needs at least one mode")
        mean = np.asarray(self.mean, dtype=float)
        cov = np.asarray(self.cov, dtype=float)
        dim = 2 * self.n_modes
        if mean.shape != (dim,):
            raise ValueError(f"mean must have shape ({dim},), got {mean.shape}")
        if cov.shape != (dim, dim):
            raise ValueError(f"cov must have shape ({dim},{dim}), got {cov.shape}")
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(cov))):
            raise ValueError("state mean/cov must be finite")
        if not np.allclose(cov, cov.T, rtol=SYMMETRY_RTOL, atol=1e-12):
            raise ValueError("covariance matrix is not symmetric")
        # Physicality: cov + i*Omega must be PSD (vacuum saturates it).
        herm = cov.astype(complex) + 1j * symplectic_form(self.n_modes)
        min_eig = float(np.linalg.eigvalsh(herm)[0])
        if min_eig < -PHYSICALITY_TOL:
            raise ValueError(
                f"covariance violates the uncertainty bound (min eig {min_eig:.3e})"
            )
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    def quadrature_row(self, mode: int, angle: float) -> np.ndarray:
        return quadrature_row(self.n_modes, mode, angle)

    def marginal_variance(self, mode: int, angle: float) -> float:
        row = self.quadrature_row(mode, angle)
        return float(row @ self.cov @ row)

    def to_json_dict(self) -> dict:
        """Debug dump: mean array and row-major covariance array."""
        return {
            "n_modes": self.n_modes,
            "mean": self.mean.tolist(),
            "cov_row_major": self.cov.reshape(-1).tolist(),
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "GaussianState":
        n = int(data["n_modes"])
        mean = np.asarray(data["mean"], dtype=float)
        cov = np.asarray(data["cov_row_major"], dtype=float).reshape(2 * n, 2 * n)
        return cls(n, mean, cov)


def make_vacuum(n_modes: int) -> GaussianState:
    """Vacuum state: identity covariance, zero mean."""
    if n_modes < 1:
        raise ValueError("n_modes must be >= 1")
    return GaussianState(n_modes, np.zeros(2 * n_modes), np.eye(2 * n_modes))


def attach_vacuum(state: GaussianState, n_extra: int = 1) -> GaussianState:
    """Append ``n_extra`` vacuum modes after the existing ones."""
    if n_extra < 1:
        raise ValueError("n_extra must be >= 1")
    n = state.n_modes + n_extra
    mean = np.concatenate([state.mean, np.zeros(2 * n_extra)])
    cov = np.eye(2 * n)
    cov[: 2 * state.n_modes, : 2 * state.n_modes] = state.cov
    return GaussianState(n, mean, cov)


@dataclass(frozen=True)
class SymplecticOp:
    """Linear symplectic transformation with an optional displacement.

    The displacement is always zero in this package but kept for generality.
    """

    matrix: np.ndarray
    displacement: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        matrix = np.asarray(self.matrix, dtype=float)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1] or matrix.shape[0] % 2:
            raise ValueError("symplectic matrix must be square with even dimension")
        if not np.all(np.isfinite(matrix)):
            raise ValueError("symplectic matrix must be finite")
        if not is_symplectic(matrix):
            raise ValueError("matrix does not satisfy S Omega S^T = Omega")
        disp = self.displacement
        disp = np.zeros(matrix.shape[0]) if disp is None else np.asarray(disp, dtype=float)
        if disp.shape != (matrix.shape[0],):
            raise ValueError("displacement length must match matrix dimension")
        object.__setattr__(self, "matrix", matrix)
        object.__setattr__(self, "displacement", disp)

    @property
    def n_modes(self) -> int:
        return self.matrix.shape[0] // 2

    def embedded(self, n_modes: int) -> "SymplecticOp":
        """Embed into ``n_modes`` modes, acting as identity on the added ones."""
        if n_modes < self.n_modes:
            raise ValueError("cannot embed into fewer modes")
        if n_modes == self.n_modes:
            return self
        dim = 2 * n_modes
        matrix = np.eye(dim)
        matrix[: 2 * self.n_modes, : 2 * self.n_modes] = self.matrix
        disp = np.zeros(dim)
        disp[: 2 * self.n_modes] = self.displacement
        return SymplecticOp(matrix, disp)

    def apply(self, state: GaussianState) -> GaussianState:
        """New state with cov -> S cov S^T and mean -> S mean + d."""
        op = self.embedded(state.n_modes)
        cov = op.matrix @ state.cov @ op.matrix.T
        cov = 0.5 * (cov + cov.T)
        mean = op.matrix @ state.mean + op.displacement
        return GaussianState(state.n_modes, mean, cov)

    def then(self, other: "SymplecticOp") -> "SymplecticOp":
        """Composite op applying ``self`` first, then ``other``."""
        n = max(self.n_modes, other.n_modes)
        a, b = self.embedded(n), other.embedded(n)
        return SymplecticOp(b.matrix @ a.matrix, b.matrix @ a.displacement + b.displacement)


def _two_mode_pair_indices(mode_a: int, mode_b: int, n_modes: Optional[int]) -> Tuple[int, int, int]:
    if mode_a == mode_b:
        raise ValueError("mode indices must be distinct")
    if min(mode_a, mode_b) < 0:
        raise ValueError("mode indices must be non-negative")
    n = max(mode_a, mode_b) + 1 if n_modes is None else n_modes
    if n <= max(mode_a, mode_b):
        raise ValueError("n_modes too small for the given mode indices")
    return 2 * mode_a, 2 * mode_b, n


def two_mode_squeezer(r: float, mode_a: int, mode_b: int, n_modes: Optional[int] = None) -> SymplecticOp:
    """Two-mode squeezing between ``mode_a`` and ``mode_b``.

    Acting on vacuum it produces Var(X_a) = Var(X_b) = cosh(2r),
    Cov(X_a, X_b) = sinh(2r) and Cov(P_a, P_b) = -sinh(2r), with vanishing
    X/P cross blocks.  r = 0 is the identity.
    """
    if not math.isfinite(r):
        raise ValueError("squeeze parameter must be finite")
    ia, ib, n = _two_mode_pair_indices(mode_a, mode_b, n_modes)
    ch, sh = math.cosh(r), math.sinh(r)
    matrix = np.eye(2 * n)
    matrix[ia, ia] = ch
    matrix[ia, ib] = sh
    matrix[ia + 1, ia + 1] = ch
    matrix[ia + 1, ib + 1] = -sh
    matrix[ib, ib] = ch
    matrix[ib, ia] = sh
    matrix[ib + 1, ib + 1] = ch
    matrix[ib + 1, ia + 1] = -sh
    return SymplecticOp(matrix)


def beamsplitter(transmissivity: float, mode_a: int, mode_b: int, n_modes: Optional[int] = None) -> SymplecticOp:
    """Beamsplitter mixing ``mode_a`` and ``mode_b`` with transmissivity T.

    Output a = sqrt(T) a + sqrt(1-T) b, output b = -sqrt(1-T) a + sqrt(T) b.
    T = 1 is the identity; T = 0 swaps the modes up to the sign of mode b's
    output (output a = b, output b = -a).
    """
    if not (math.isfinite(transmissivity) and 0.0 <= transmissivity <= 1.0):
        raise ValueError("transmissivity must lie in [0, 1]")
    ia, ib, n = _two_mode_pair_indices(mode_a, mode_b, n_modes)
    t, u = math.sqrt(transmissivity), math.sqrt(1.0 - transmissivity)
    matrix = np.eye(2 * n)
    for off in (0, 1):
        matrix[ia + off, ia + off] = t
        matrix[ia + off, ib + off] = u
        matrix[ib + off, ib + off] = t
        matrix[ib + off, ia + off] = -u
    return SymplecticOp(matrix)


def parametric_coupling(kappa_t: float, mode_e: int, mode_b: int, n_modes: Optional[int] = None) -> SymplecticOp:
    """Amplifying (parametric-gain) coupling between an ancilla and a channel.

    Same symplectic family as :func:`two_mode_squeezer`: on vacuum inputs the
    X-X cross covariance grows with +sinh(2*kappa_t) and P-P with
    -sinh(2*kappa_t).  A bilinear gain coupling fixes the ancilla's local
    phase only up to a rotation; this convention pins that freedom, which is
    irrelevant to any angle-optimized measurement on the ancilla.
    kappa_t = 0 is the identity.
    """
    if not math.isfinite(kappa_t):
        raise ValueError("coupling parameter must be finite")
    return two_mode_squeezer(kappa_t, mode_e, mode_b, n_modes)


def phase_rotation(angle: float, mode: int, n_modes: Optional[int] = None) -> SymplecticOp:
    """Phase-space rotation of one mode: X -> cos(a) X + sin(a) P."""
    if not math.isfinite(angle):
        raise ValueError("rotation angle must be finite")
    if mode < 0:
        raise ValueError("mode index must be non-negative")
    n = mode + 1 if n_modes is None else n_modes
    if n <= mode:
        raise ValueError("n_modes too small for the given mode index")
    c, s = math.cos(angle), math.sin(angle)
    matrix = np.eye(2 * n)
    matrix[2 * mode, 2 * mode] = c
    matrix[2 * mode, 2 * mode + 1] = s
    matrix[2 * mode + 1, 2 * mode] = -s
    matrix[2 * mode + 1, 2 * mode + 1] = c
    return SymplecticOp(matrix)


@dataclass(frozen=True)
class HomodyneOutcome:
    """Single homodyne result: quadrature value, measured mode, and angle."""

    value: float
    mode: int
    angle: float

    def __post_init__(self) -> None:
        if not (0.0 <= self.angle < 2.0 * math.pi):
            raise ValueError("angle must lie in [0, 2*pi)")
        if not math.isfinite(self.value):
            raise ValueError("outcome value must be finite")


def homodyne_measure(
    state: GaussianState, mode: int, angle: float, rng: np.random.Generator
) -> Tuple[HomodyneOutcome, Optional[GaussianState]]:
    """Measure the rotated quadrature of one mode; condition the rest on it.

    The outcome is drawn from the exact Gaussian marginal of
    cos(angle) X_mode + sin(angle) P_mode.  The returned state is the
    remaining-modes Gaussian conditioned on the outcome (Schur complement);
    the measured mode is removed (destructive detection).  Measuring the last
    mode returns ``None`` as the remaining state.

    A marginal variance below :data:`DEGENERACY_CUTOFF` is treated as
    deterministic: the mean is returned and no conditioning update is applied
    (the cross covariance vanishes with the variance, so there is no division
    by zero).
    """
    row = state.quadrature_row(mode, angle)
    var = float(row @ state.cov @ row)
    mu = float(row @ state.mean)
    if var > DEGENERACY_CUTOFF:
        value = float(rng.normal(mu, math.sqrt(var)))
    else:
        value = mu
    outcome = HomodyneOutcome(value=value, mode=mode, angle=angle % (2.0 * math.pi))

    if state.n_modes == 1:
        return outcome, None
    keep = np.ones(2 * state.n_modes, dtype=bool)
    keep[2 * mode : 2 * mode + 2] = False
    cross = state.cov[keep, :] @ row
    mean_rest = state.mean[keep]
    cov_rest = state.cov[np.ix_(keep, keep)]
    if var > DEGENERACY_CUTOFF:
        mean_rest = mean_rest + cross * ((value - mu) / var)
        cov_rest = cov_rest - np.outer(cross, cross) / var
    cov_rest = 0.5 * (cov_rest + cov_rest.T)
    return outcome, GaussianState(state.n_modes - 1, mean_rest, cov_rest)


class ConditionalStats(NamedTuple):
    slopes: np.ndarray
    residual_variance: float


def conditional_stats(
    state: GaussianState,
    target: Tuple[int, float],
    given: Sequence[Tuple[int, float]],
) -> ConditionalStats:
    """Exact Gaussian regression of one quadrature on a commuting set.

    Returns the regression slopes of the target quadrature on the given
    quadratures and the residual (conditional) variance, via the Schur
    complement of the joint covariance.  The residual does not depend on the
    observed values (Gaussian homoscedasticity).  A singular given-block is
    handled by pseudo-inverse, dropping singular values below 1e-12 relative
    to the largest.
    """
    given = list(given)
    if not _quadratures_commute(given):
        raise ValueError("the conditioning quadratures must mutually commute")
    for mode, angle in given:
        if mode == target[0] and abs(math.sin(angle - target[1])) <= 1e-12:
            raise ValueError("target quadrature is part of the conditioning set")
    rows = [state.quadrature_row(*target)] + [state.quadrature_row(m, a) for m, a in given]
    joint = np.array(rows) @ state.cov @ np.array(rows).T
    if not given:
        return ConditionalStats(np.zeros(0), float(joint[0, 0]))
    s_gg = joint[1:, 1:]
    s_tg = joint[0, 1:]
    slopes = np.linalg.pinv(s_gg, rcond=DEGENERACY_CUTOFF) @ s_tg
    residual = float(joint[0, 0] - s_tg @ slopes)
    return ConditionalStats(slopes, max(residual, 0.0))


def sample_quadratures(
    state: GaussianState,
    quads: Sequence[Tuple[int, float]],
    n_samples: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Joint samples of a commuting set of quadratures, shape (n_samples, k).

    Sampling a commuting set jointly is equivalent in distribution to
    measuring the quadratures one by one with conditioning.  The Gaussian
    factor is taken from an eigendecomposition (eigenvalues clipped at zero),
    so degenerate, perfectly correlated covariances sample exactly.
    """
    quads = list(quads)
    if not quads:
        raise ValueError("need at least one quadrature to sample")
    if not _quadratures_commute(quads):
        raise ValueError("sampled quadratures must mutually commute")
    if n_samples < 0:
        raise ValueError("n_samples must be non-negative")
    rows = np.array([state.quadrature_row(m, a) for m, a in quads])
    mu = rows @ state.mean
    cov = rows @ state.cov @ rows.T
    cov = 0.5 * (cov + cov.T)
    eigvals, eigvecs = np.linalg.eigh(cov)
    factor = eigvecs * np.sqrt(np.clip(eigvals, 0.0, None))
    z = rng.standard_normal((n_samples, len(quads)))
    return z @ factor.T + mu
