"""Shared test utilities: hand-rolled samplers independent of the engine."""

from __future__ import annotations

import math

import numpy as np

from eprqkd.criteria import ANGLE_P, ANGLE_X, MeasurementRecord


def tmsv_pairs_oracle(r: float, n: int, rng: np.random.Generator, which: str = "x"):
    """Correlated quadrature pairs built directly from the mixing formulas.

    Writes the two-mode squeezing output as explicit combinations of
    independent unit normals (the vacuum quadrature statistics), with no use
    of the engine's covariance machinery:
    X_a = cosh(r) z1 + sinh(r) z2, X_b = sinh(r) z1 + cosh(r) z2 and
    P_a = cosh(r) z1 - sinh(r) z2, P_b = -sinh(r) z1 + cosh(r) z2.
    """
    ch, sh = math.cosh(r), math.sinh(r)
    z1 = rng.standard_normal(n)
    z2 = rng.standard_normal(n)
    if which == "x":
        return ch * z1 + sh * z2, sh * z1 + ch * z2
    return ch * z1 - sh * z2, -sh * z1 + ch * z2


def make_tmsv_record(r: float, n_per_setting: int, rng: np.random.Generator) -> MeasurementRecord:
    """Sifted record with ``n_per_setting`` slots of each setting (oracle sampler)."""
    ax, bx = tmsv_pairs_oracle(r, n_per_setting, rng, "x")
    ap, bp = tmsv_pairs_oracle(r, n_per_setting, rng, "p")
    n = n_per_setting
    return MeasurementRecord(
        alice_angle=np.concatenate([np.full(n, ANGLE_X), np.full(n, ANGLE_P)]),
        bob_angle=np.concatenate([np.full(n, ANGLE_X), np.full(n, ANGLE_P)]),
        alice_value=np.concatenate([ax, ap]),
        bob_value=np.concatenate([bx, bp]),
    )


def min_physicality_eigenvalue(cov: np.ndarray) -> float:
    """Smallest eigenvalue of cov + i*Omega (non-negative for physical states)."""
    n = cov.shape[0] // 2
    omega = np.kron(np.eye(n), np.array([[0.0, 1.0], [-1.0, 0.0]]))
    return float(np.linalg.eigvalsh(cov.astype(complex) + 1j * omega)[0])
