"""Declarative eavesdropping attacks on the two-mode source.

An attack turns the honest two-mode state into a joint Gaussian state over
Alice, Bob, and zero or more Eve modes, together with a mode map.  Eve keeps
her modes untouched until the measurement bases are announced; her
measurements are restricted to homodyne detection on her Gaussian modes,
which is optimal within the Gaussian class.

Variants
--------
* ``none``: the state passes through unchanged, no Eve modes.
* ``beamsplitter_tap``: a vacuum ancilla is mixed onto the named channel(s)
  with transmissivity T; Eve keeps the reflected beam.
* ``parametric_tap``: a vacuum Eve mode is coupled to the channel by an
  amplifying bilinear interaction with gain parameter kappa_t.
* ``source_substitution``: the source is replaced by an arbitrary
  multi-channel Gaussian state with an explicit party-to-mode assignment.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .gaussian import (
    GaussianState,
    attach_vacuum,
    beamsplitter,
    conditional_stats,
    parametric_coupling,
    quadrature_row,
    sample_quadratures,
)

CHANNELS = ("alice", "bob", "both")
VARIANTS = ("none", "beamsplitter_tap", "parametric_tap", "source_substitution")

# Grid resolution used by the fallback angle search: 0.5 degrees over
# [0, pi), i.e. 360 points (a quadrature at angle + pi is the same line).
GRID_POINTS = 360


@dataclass(frozen=True)
class AttackSpec:
    """Tagged attack description; use the classmethod constructors.

    For the tap variants, ``strength`` is the transmissivity T in [0, 1]
    (beamsplitter) or the coupling kappa_t (parametric); for
    ``channel="both"`` it is a pair (alice, bob).
    """

    variant: str
    channel: str = "bob"
    strength: Union[float, Tuple[float, float], None] = None
    state: Optional[GaussianState] = None
    mode_assignment: Optional[Dict[str, object]] = None

    def __post_init__(self) -> None:
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown attack variant {self.variant!r}")
        if self.variant == "none":
            return
        if self.variant == "source_substitution":
            if self.state is None or self.mode_assignment is None:
                raise ValueError("source_substitution needs a state and a mode_assignment")
            _validate_mode_assignment(self.state, self.mode_assignment)
            return
        if self.channel not in CHANNELS:
            raise ValueError(f"channel must be one of {CHANNELS}")
        values = self._strength_pair()
        for value in values:
            if not math.isfinite(value):
                raise ValueError("attack strength must be finite")
            if self.variant == "beamsplitter_tap" and not 0.0 <= value <= 1.0:
                raise ValueError("transmissivity must lie in [0, 1]")

    def _strength_pair(self) -> Tuple[float, ...]:
        if self.channel == "both":
            if not (isinstance(self.strength, (tuple, list)) and len(self.strength) == 2):
                raise ValueError("channel 'both' needs a (alice, bob) strength pair")
            return tuple(float(v) for v in self.strength)
        if isinstance(self.strength, (tuple, list)):
            raise ValueError("single-channel attacks take a scalar strength")
        return (float(self.strength),)

    @classmethod
    def none(cls) -> "AttackSpec":
        return cls(variant="none")

    @classmethod
    def beamsplitter_tap(cls, transmissivity, channel: str = "bob") -> "AttackSpec":
        return cls(variant="beamsplitter_tap", channel=channel, strength=transmissivity)

    @classmethod
    def parametric_tap(cls, kappa_t, channel: str = "bob") -> "AttackSpec":
        return cls(variant="parametric_tap", channel=channel, strength=kappa_t)

    @classmethod
    def source_substitution(cls, state: GaussianState, mode_assignment: Dict[str, object]) -> "AttackSpec":
        return cls(variant="source_substitution", state=state, mode_assignment=mode_assignment)

    @classmethod
    def from_dict(cls, data: dict) -> "AttackSpec":
        """Parse the tagged-union form used by scenario files."""
        data = dict(data)
        variant = data.pop("variant", None)
        if variant not in VARIANTS:
            raise ValueError(f"attack.variant must be one of {VARIANTS}, got {variant!r}")
        if variant == "none":
            _reject_unknown(data, (), "attack")
            return cls.none()
        if variant == "beamsplitter_tap":
            _reject_unknown(data, ("transmissivity", "channel"), "attack")
            if "transmissivity" not in data:
                raise ValueError("attack: beamsplitter_tap needs 'transmissivity'")
            return cls.beamsplitter_tap(_as_strength(data["transmissivity"]), data.get("channel", "bob"))
        if variant == "parametric_tap":
            _reject_unknown(data, ("kappa_t", "channel"), "attack")
            if "kappa_t" not in data:
                raise ValueError("attack: parametric_tap needs 'kappa_t'")
            return cls.parametric_tap(_as_strength(data["kappa_t"]), data.get("channel", "bob"))
        _reject_unknown(data, ("state", "mode_assignment"), "attack")
        if "state" not in data or "mode_assignment" not in data:
            raise ValueError("attack: source_substitution needs 'state' and 'mode_assignment'")
        state = GaussianState.from_json_dict(data["state"])
        assignment = {
            "alice": int(data["mode_assignment"]["alice"]),
            "bob": int(data["mode_assignment"]["bob"]),
            "eve": [int(m) for m in data["mode_assignment"].get("eve", [])],
        }
        return cls.source_substitution(state, assignment)

    def to_json_dict(self) -> dict:
        out: dict = {"variant": self.variant}
        if self.variant in ("beamsplitter_tap", "parametric_tap"):
            out["channel"] = self.channel
            key = "transmissivity" if self.variant == "beamsplitter_tap" else "kappa_t"
            strength = self.strength
            out[key] = list(strength) if isinstance(strength, (tuple, list)) else strength
        elif self.variant == "source_substitution":
            out["state"] = self.state.to_json_dict()
            out["mode_assignment"] = {
                "alice": self.mode_assignment["alice"],
                "bob": self.mode_assignment["bob"],
                "eve": list(self.mode_assignment["eve"]),
            }
        return out


def _as_strength(value):
    if isinstance(value, (tuple, list)):
        return tuple(float(v) for v in value)
    return float(value)


def _reject_unknown(data: dict, allowed: Sequence[str], where: str) -> None:
    unknown = sorted(set(data) - set(allowed))
    if unknown:
        raise ValueError(f"{where}: unknown keys {unknown}")


def _validate_mode_assignment(state: GaussianState, assignment: Dict[str, object]) -> None:
    try:
        alice = int(assignment["alice"])
        bob = int(assignment["bob"])
        eve = [int(m) for m in assignment.get("eve", [])]
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"malformed mode assignment: {exc}") from exc
    claimed = [alice, bob] + eve
    if sorted(claimed) != list(range(state.n_modes)):
        raise ValueError(
            f"mode assignment must cover modes 0..{state.n_modes - 1} exactly once, got {claimed}"
        )


def apply_attack(source: GaussianState, spec: AttackSpec) -> Tuple[GaussianState, Dict[str, object]]:
    """Extend the honest source into the joint Alice/Bob/Eve state.

    Returns the post-attack state and a mode map
    ``{"alice": int, "bob": int, "eve": [int, ...]}``.
    """
    if spec.variant == "source_substitution":
        assignment = spec.mode_assignment
        return spec.state, {
            "alice": int(assignment["alice"]),
            "bob": int(assignment["bob"]),
            "eve": sorted(int(m) for m in assignment.get("eve", [])),
        }
    if source.n_modes != 2:
        raise ValueError("tap attacks act on the 2-mode honest source")
    if spec.variant == "none":
        return source, {"alice": 0, "bob": 1, "eve": []}

    channels = {"alice": [0], "bob": [1], "both": [0, 1]}[spec.channel]
    strengths = spec._strength_pair()
    state = attach_vacuum(source, len(channels))
    eve_modes: List[int] = []
    for k, channel_mode in enumerate(channels):
        ancilla = 2 + k
        eve_modes.append(ancilla)
        if spec.variant == "beamsplitter_tap":
            op = beamsplitter(strengths[k], channel_mode, ancilla, n_modes=state.n_modes)
        else:
            op = parametric_coupling(strengths[k], ancilla, channel_mode, n_modes=state.n_modes)
        state = op.apply(state)
    return state, {"alice": 0, "bob": 1, "eve": eve_modes}


@dataclass(frozen=True)
class EveStrategy:
    """Optimal homodyne angles for Eve plus the resulting inference quality.

    ``slopes`` are the regression coefficients combining her quadrature
    outcomes into the conditional-mean estimate of Alice's announced
    quadrature; ``residual_variance`` is the conditional variance of that
    quadrature given her outcomes.
    """

    eve_modes: Tuple[int, ...]
    angles: Tuple[float, ...]
    slopes: Tuple[float, ...]
    residual_variance: float

    def quadratures(self) -> List[Tuple[int, float]]:
        return list(zip(self.eve_modes, self.angles))

    def estimate(self, outcomes: np.ndarray) -> np.ndarray:
        """Conditional-mean estimate from outcome columns (one per Eve mode)."""
        return np.atleast_2d(outcomes) @ np.asarray(self.slopes)


def _best_single_mode_angle(
    state: GaussianState, target_row: np.ndarray, eve_mode: int, conditioned_rows: List[np.ndarray]
) -> float:
    """Closed-form optimal homodyne angle of one Eve mode.

    Maximizes the explained variance w^T u (u^T M u)^-1 u^T w over quadrature
    directions u, where w/M are the target cross covariance and the mode's
    2x2 covariance after conditioning on the already-chosen quadratures of
    the other modes.  The maximizer is u ~ M^+ w.
    """
    rows = [target_row,
            quadrature_row(state.n_modes, eve_mode, 0.0),
            quadrature_row(state.n_modes, eve_mode, math.pi / 2.0)] + conditioned_rows
    joint = np.array(rows) @ state.cov @ np.array(rows).T
    if conditioned_rows:
        head = joint[:3, :3]
        cross = joint[:3, 3:]
        block = joint[3:, 3:]
        head = head - cross @ np.linalg.pinv(block, rcond=1e-12) @ cross.T
        joint = head
    w = joint[0, 1:3]
    m = joint[1:3, 1:3]
    u = np.linalg.pinv(m, rcond=1e-12) @ w
    if np.linalg.norm(u) < 1e-15:
        return 0.0
    return float(math.atan2(u[1], u[0]) % math.pi)


def eve_conditional_quality(
    state: GaussianState,
    mode_map: Dict[str, object],
    announced_angle: float,
    method: str = "closed_form",
) -> EveStrategy:
    """Eve's best commuting homodyne set for inferring Alice's quadrature.

    Optimizes one homodyne angle per Eve mode.  ``closed_form`` uses the
    exact single-mode maximizer, iterated to convergence over modes when Eve
    holds more than one (each pass re-optimizes one angle with the others
    held fixed, which never increases the residual).  ``grid`` sweeps each
    angle over a 0.5-degree grid instead and is kept as a cross-check; the
    two agree to the grid resolution.
    """
    eve_modes = sorted(int(m) for m in mode_map["eve"])
    if not eve_modes:
        raise ValueError("the attack leaves Eve with no modes")
    if method not in ("closed_form", "grid"):
        raise ValueError("method must be 'closed_form' or 'grid'")
    alice = int(mode_map["alice"])
    target = (alice, announced_angle)
    target_row = quadrature_row(state.n_modes, alice, announced_angle)

    if method == "grid":
        angles = [0.0] * len(eve_modes)
        grid = np.linspace(0.0, math.pi, GRID_POINTS, endpoint=False)
        for _ in range(3 if len(eve_modes) > 1 else 1):
            for k, mode in enumerate(eve_modes):
                best = (math.inf, angles[k])
                for theta in grid:
                    trial = list(zip(eve_modes, angles))
                    trial[k] = (mode, float(theta))
                    res = conditional_stats(state, target, trial).residual_variance
                    if res < best[0]:
                        best = (res, float(theta))
                angles[k] = best[1]
    else:
        angles = [
            _best_single_mode_angle(state, target_row, mode, [])
            for mode in eve_modes
        ]
        if len(eve_modes) > 1:
            previous = math.inf
            for _ in range(50):
                for k, mode in enumerate(eve_modes):
                    other_rows = [
                        quadrature_row(state.n_modes, m, a)
                        for m, a in zip(eve_modes, angles)
                        if m != mode
                    ]
                    angles[k] = _best_single_mode_angle(state, target_row, mode, other_rows)
                res = conditional_stats(state, target, list(zip(eve_modes, angles))).residual_variance
                if previous - res <= 1e-12:
                    break
                previous = res

    stats = conditional_stats(state, target, list(zip(eve_modes, angles)))
    return EveStrategy(
        eve_modes=tuple(eve_modes),
        angles=tuple(angles),
        slopes=tuple(float(s) for s in stats.slopes),
        residual_variance=stats.residual_variance,
    )


@dataclass(frozen=True)
class TradeoffData:
    """One joint-measurement experiment for the information-tradeoff checks.

    Bob always measures the ``primary`` quadrature (the one his inference
    targets); Eve always measures her optimal quadrature for the conjugate
    one; Alice alternates between the two at random.  ``alice_primary`` marks
    the slots where Alice measured the primary quadrature.  The analytic
    fields are the exact Gaussian counterparts of the sampled statistics.
    """

    primary_angle: float
    bob_values: np.ndarray
    eve_values: np.ndarray
    alice_values: np.ndarray
    alice_primary: np.ndarray
    analytic_ab_variance: float
    analytic_eve_variance: float
    eve_strategy: EveStrategy


def tradeoff_experiment(
    state: GaussianState,
    mode_map: Dict[str, object],
    n_slots: int,
    rng: np.random.Generator,
    primary_angle: float = 0.0,
) -> TradeoffData:
    """Simulate the fixed-setting experiment behind the tradeoff bound.

    With primary angle 0 (X): Bob homodynes X on every slot, Eve homodynes
    her best quadrature for inferring Alice's P, and Alice measures X or P
    with equal probability.  ``eve_values`` holds Eve's conditional-mean
    estimate (her outcomes combined with the optimal slopes), a scalar
    sufficient statistic even for multi-mode attacks.
    """
    alice = int(mode_map["alice"])
    bob = int(mode_map["bob"])
    conjugate_angle = primary_angle + math.pi / 2.0
    strategy = eve_conditional_quality(state, mode_map, conjugate_angle)

    ab = conditional_stats(state, (alice, primary_angle), [(bob, primary_angle)])

    alice_primary = rng.integers(0, 2, n_slots) == 0
    values = np.empty(n_slots)
    bob_values = np.empty(n_slots)
    eve_values = np.empty(n_slots)
    for is_primary in (True, False):
        mask = alice_primary == is_primary
        alice_angle = primary_angle if is_primary else conjugate_angle
        quads = [(alice, alice_angle), (bob, primary_angle)] + strategy.quadratures()
        samples = sample_quadratures(state, quads, int(mask.sum()), rng)
        values[mask] = samples[:, 0]
        bob_values[mask] = samples[:, 1]
        eve_values[mask] = strategy.estimate(samples[:, 2:])
    return TradeoffData(
        primary_angle=primary_angle,
        bob_values=bob_values,
        eve_values=eve_values,
        alice_values=values,
        alice_primary=alice_primary,
        analytic_ab_variance=ab.residual_variance,
        analytic_eve_variance=strategy.residual_variance,
        eve_strategy=strategy,
    )
