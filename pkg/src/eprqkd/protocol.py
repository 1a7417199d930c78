"""End-to-end key-distribution session over the two-mode squeezed source.

Per slot the source emits a two-mode squeezed state, the attack (fixed
before any basis choice) transforms it, and Alice and Bob each homodyne a
uniformly random quadrature out of {X, P}.  Eve's stored modes are measured
only after the bases are announced, in her best basis for the announced
setting.  Slots with mismatched settings are discarded; a random subensemble
of the sifted slots feeds the correlation statistics and the rest become
key material: Alice's key is her raw outcomes, Bob's the conditional mean
reconstructed from his outcomes with the *measured* gains (the protocol
trusts measured statistics only), Eve's her conditional-mean estimate.

Messages restricted to a grid spaced 6*A*sigma (sigma the agreed conditional
standard deviation) survive Bob's key noise almost always while any
eavesdropper bounded away from Alice's values keeps decoding wrongly.

All randomness flows from one 64-bit seed through named PCG64 streams
(numpy SeedSequence spawning), so identical (config, seed) pairs produce
bit-identical transcripts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Dict, Optional, Tuple

import numpy as np

from .attacks import AttackSpec, EveStrategy, apply_attack, eve_conditional_quality
from .criteria import (
    ANGLE_P,
    ANGLE_X,
    DEFAULT_BIN_WIDTH,
    DEFAULT_BOOTSTRAP,
    DEFAULT_MIN_COUNT,
    CriterionResult,
    EprStatistics,
    MeasurementRecord,
    compute_epr_statistics,
    epr_criterion,
    least_squares_inference,
)
from .gaussian import make_vacuum, sample_quadratures, two_mode_squeezer
from .security import SecurityReport, build_security_report

STATUS_OK = "ok"
STATUS_FAILED = "failed"


@dataclass(frozen=True)
class SessionConfig:
    """Session parameters; all randomness derives from ``seed``.

    ``subensemble_fraction`` of the sifted slots is diverted to the
    correlation statistics, the rest form keys.  ``amplification_A`` scales
    the key inside the encoded signal; ``alphabet_half_width`` K gives the
    2K+1-point message grid.  ``bin_width``/``min_bin_count`` control the
    binned conditional statistics and ``bootstrap_resamples`` the criterion
    confidence interval.
    """

    n_slots: int
    squeeze_r: float
    message_length: int
    attack: AttackSpec = field(default_factory=AttackSpec.none)
    subensemble_fraction: float = 0.5
    seed: int = 0
    amplification_A: float = 1.0
    alphabet_half_width: int = 4
    bin_width: float = DEFAULT_BIN_WIDTH
    min_bin_count: int = DEFAULT_MIN_COUNT
    bootstrap_resamples: int = DEFAULT_BOOTSTRAP

    def __post_init__(self) -> None:
        if self.n_slots < 4:
            raise ValueError("n_slots must be at least 4")
        if not math.isfinite(self.squeeze_r) or self.squeeze_r < 0.0:
            raise ValueError("squeeze_r must be finite and non-negative")
        if not 0.0 < self.subensemble_fraction < 1.0:
            raise ValueError("subensemble_fraction must lie strictly in (0, 1)")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if not math.isfinite(self.amplification_A) or self.amplification_A <= 0.0:
            raise ValueError("amplification_A must be positive")
        if self.message_length < 1:
            raise ValueError("message_length must be at least 1")
        if self.alphabet_half_width < 1:
            raise ValueError("alphabet_half_width must be at least 1")
        if self.bin_width <= 0.0:
            raise ValueError("bin_width must be positive")

    def to_json_dict(self) -> dict:
        return {
            "n_slots": self.n_slots,
            "squeeze_r": self.squeeze_r,
            "message_length": self.message_length,
            "attack": self.attack.to_json_dict(),
            "subensemble_fraction": self.subensemble_fraction,
            "seed": self.seed,
            "amplification_A": self.amplification_A,
            "alphabet_half_width": self.alphabet_half_width,
            "bin_width": self.bin_width,
            "min_bin_count": self.min_bin_count,
            "bootstrap_resamples": self.bootstrap_resamples,
        }


@dataclass(frozen=True)
class KeySequence:
    """Continuous key values held by one party."""

    values: np.ndarray
    owner: str

    def __post_init__(self) -> None:
        if self.owner not in ("alice", "bob", "eve"):
            raise ValueError("owner must be alice, bob, or eve")
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1 or not np.all(np.isfinite(values)):
            raise ValueError("key values must be a finite 1-d array")
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return int(self.values.shape[0])


@dataclass(frozen=True)
class BinningScheme:
    """Message grid spaced 6*A*sigma so the decision threshold is 3*A*sigma."""

    sigma: float
    amplification_A: float
    grid_origin: float = 0.0

    def __post_init__(self) -> None:
        if self.sigma <= 0.0 or not math.isfinite(self.sigma):
            raise ValueError("sigma must be positive")
        if self.amplification_A <= 0.0 or not math.isfinite(self.amplification_A):
            raise ValueError("amplification_A must be positive")

    @property
    def spacing(self) -> float:
        return 6.0 * self.amplification_A * self.sigma

    def grid_values(self, half_width: int) -> np.ndarray:
        """The 2*half_width+1 grid points centred on the origin."""
        return self.grid_origin + self.spacing * np.arange(-half_width, half_width + 1)

    def nearest_grid(self, values: np.ndarray) -> np.ndarray:
        """Round to the nearest grid point; ties break toward -infinity."""
        steps = np.ceil((values - self.grid_origin) / self.spacing - 0.5)
        return self.grid_origin + steps * self.spacing

    def is_on_grid(self, values: np.ndarray, tol: float = 1e-9) -> np.ndarray:
        steps = (values - self.grid_origin) / self.spacing
        return np.abs(steps - np.round(steps)) <= tol

    def to_json_dict(self) -> dict:
        return {
            "sigma": self.sigma,
            "amplification_A": self.amplification_A,
            "spacing": self.spacing,
            "grid_origin": self.grid_origin,
        }


def encode_message(z: np.ndarray, key: KeySequence, scheme: BinningScheme) -> np.ndarray:
    """Transmit y_m = z_m + A eta_m; the message must sit on the grid."""
    z = np.asarray(z, dtype=float)
    if z.shape[0] > len(key):
        raise ValueError("message longer than the key")
    if not np.all(scheme.is_on_grid(z)):
        raise ValueError("message values must lie on the binning grid")
    return z + scheme.amplification_A * key.values[: z.shape[0]]


def decode_message(
    y: np.ndarray, key: KeySequence, scheme: BinningScheme
) -> Tuple[np.ndarray, np.ndarray]:
    """Recover (grid estimates, raw values) via raw = y - A eta, then rounding."""
    y = np.asarray(y, dtype=float)
    if y.shape[0] != len(key):
        raise ValueError("signal and key lengths must match")
    raw = y - scheme.amplification_A * key.values
    return scheme.nearest_grid(raw), raw


@dataclass(frozen=True)
class ErrorRates:
    """Symbol error fractions and rms deviations of the decoded signals.

    ``identity_gap`` is |<(z - z_raw)^2> - A^2 <(eta - eta_party)^2>| for
    Bob, zero up to rounding because the raw deviation is exactly A times
    the key deviation.
    """

    bob_error_rate: float
    bob_rms: float
    eve_error_rate: Optional[float]
    eve_rms: Optional[float]
    identity_gap: float
    n_symbols: int

    def to_json_dict(self) -> dict:
        return {
            "bob_error_rate": self.bob_error_rate,
            "bob_rms": self.bob_rms,
            "eve_error_rate": self.eve_error_rate,
            "eve_rms": self.eve_rms,
            "identity_gap": self.identity_gap,
            "n_symbols": self.n_symbols,
        }


@dataclass(frozen=True)
class SessionTranscript:
    """Everything a session produces; ``status`` is ``ok`` or ``failed``.

    The record holds the publicly compared subensemble only.  Key and
    encryption fields are None for failed sessions (and the eve fields when
    the attack leaves Eve without modes).
    """

    config: SessionConfig
    status: str
    failure_reason: Optional[str] = None
    record: Optional[MeasurementRecord] = None
    keys: Optional[Dict[str, KeySequence]] = None
    epr_stats: Optional[EprStatistics] = None
    criterion: Optional[CriterionResult] = None
    binning: Optional[BinningScheme] = None
    message: Optional[np.ndarray] = None
    encrypted_signal: Optional[np.ndarray] = None
    encryption_results: Optional[ErrorRates] = None
    security: Optional[SecurityReport] = None
    eve_measured: Optional[Dict[str, float]] = None

    def to_json_dict(self) -> dict:
        return {
            "config": self.config.to_json_dict(),
            "status": self.status,
            "failure_reason": self.failure_reason,
            "n_record_slots": None if self.record is None else len(self.record),
            "keys": None
            if self.keys is None
            else {owner: key.values.tolist() for owner, key in sorted(self.keys.items())},
            "epr_stats": None if self.epr_stats is None else self.epr_stats.to_json_dict(),
            "criterion": None if self.criterion is None else self.criterion.to_json_dict(),
            "binning": None if self.binning is None else self.binning.to_json_dict(),
            "message": None if self.message is None else self.message.tolist(),
            "encrypted_signal": None if self.encrypted_signal is None else self.encrypted_signal.tolist(),
            "encryption_results": None
            if self.encryption_results is None
            else self.encryption_results.to_json_dict(),
            "security": None if self.security is None else self.security.to_json_dict(),
            "eve_measured": self.eve_measured,
        }


def measure_error_rates(
    transcript: SessionTranscript, true_message: Optional[np.ndarray] = None
) -> ErrorRates:
    """Decode the transcript's signal with each key and score it.

    ``true_message`` defaults to the message stored in the transcript.
    """
    if transcript.encrypted_signal is None or transcript.keys is None:
        raise ValueError("transcript has no encryption data")
    z = transcript.message if true_message is None else np.asarray(true_message, dtype=float)
    scheme = transcript.binning
    n = z.shape[0]
    a_amp = scheme.amplification_A

    def trim(key: KeySequence) -> KeySequence:
        return KeySequence(key.values[:n], key.owner)

    alice = trim(transcript.keys["alice"])
    bob = trim(transcript.keys["bob"])
    z_bob, raw_bob = decode_message(transcript.encrypted_signal, bob, scheme)
    bob_rate = float(np.mean(z_bob != z))
    bob_rms = float(np.sqrt(np.mean((z - raw_bob) ** 2)))
    key_rms = float(np.sqrt(np.mean((alice.values - bob.values) ** 2)))
    identity_gap = abs(bob_rms**2 - a_amp**2 * key_rms**2)

    eve_rate = eve_rms = None
    if "eve" in transcript.keys:
        eve = trim(transcript.keys["eve"])
        z_eve, raw_eve = decode_message(transcript.encrypted_signal, eve, scheme)
        eve_rate = float(np.mean(z_eve != z))
        eve_rms = float(np.sqrt(np.mean((z - raw_eve) ** 2)))
    return ErrorRates(
        bob_error_rate=bob_rate,
        bob_rms=bob_rms,
        eve_error_rate=eve_rate,
        eve_rms=eve_rms,
        identity_gap=identity_gap,
        n_symbols=int(n),
    )


def _eve_measured_statistics(record: MeasurementRecord) -> Optional[Dict[str, float]]:
    """Measured std of Alice's value minus Eve's estimate, per setting.

    The eve column already holds Eve's estimate of Alice's announced value,
    so a plain regression of Alice on Eve gives her inference deviation.
    """
    if not record.has_eve:
        return None
    out: Dict[str, float] = {}
    for which in ("x", "p"):
        mask = record.setting_mask(which)
        if int(mask.sum()) < 2:
            return None
        fit = least_squares_inference(record.alice_value[mask], record.eve_value[mask])
        out[which] = math.sqrt(fit.variance)
    return out


def run_session(config: SessionConfig) -> SessionTranscript:
    """Simulate one full session; see the module docstring for the flow.

    Statistically starved outcomes (no sifted slots of a setting, a
    subensemble leaving no key material, or a message longer than the key)
    return a transcript with ``status="failed"`` rather than raising.
    """

    def failed(reason: str) -> SessionTranscript:
        return SessionTranscript(config=config, status=STATUS_FAILED, failure_reason=reason)

    streams = np.random.SeedSequence(config.seed).spawn(5)
    rng_angles, rng_outcomes, rng_sub, rng_msg, rng_boot = (
        np.random.default_rng(s) for s in streams
    )

    source = two_mode_squeezer(config.squeeze_r, 0, 1).apply(make_vacuum(2))
    state, mode_map = apply_attack(source, config.attack)
    alice_mode = int(mode_map["alice"])
    bob_mode = int(mode_map["bob"])
    has_eve = bool(mode_map["eve"])
    eve_strategy: Dict[float, EveStrategy] = {}
    if has_eve:
        eve_strategy = {
            angle: eve_conditional_quality(state, mode_map, angle) for angle in (ANGLE_X, ANGLE_P)
        }

    n = config.n_slots
    settings = np.array([ANGLE_X, ANGLE_P])
    alice_angles = settings[rng_angles.integers(0, 2, n)]
    bob_angles = settings[rng_angles.integers(0, 2, n)]
    alice_values = np.empty(n)
    bob_values = np.empty(n)
    eve_values = np.empty(n) if has_eve else None
    eve_angles = np.empty(n) if has_eve else None

    # The attack (and hence Eve's stored state) is fixed before any angle is
    # drawn; Eve's own measurement follows the announced setting of Alice,
    # whose values define the key.
    for theta in (ANGLE_X, ANGLE_P):
        for phi in (ANGLE_X, ANGLE_P):
            mask = (np.abs(alice_angles - theta) < 1e-9) & (np.abs(bob_angles - phi) < 1e-9)
            count = int(mask.sum())
            quads = [(alice_mode, theta), (bob_mode, phi)]
            if has_eve:
                quads += eve_strategy[theta].quadratures()
            samples = sample_quadratures(state, quads, count, rng_outcomes)
            alice_values[mask] = samples[:, 0]
            bob_values[mask] = samples[:, 1]
            if has_eve:
                eve_values[mask] = eve_strategy[theta].estimate(samples[:, 2:])
                eve_angles[mask] = eve_strategy[theta].angles[0]

    sifted = np.flatnonzero(np.abs(alice_angles - bob_angles) < 1e-9)
    if sifted.size < 4:
        return failed(f"only {sifted.size} sifted slots")
    n_sub = int(round(config.subensemble_fraction * sifted.size))
    n_sub = min(max(n_sub, 4), sifted.size - 1)
    sub_idx = np.sort(rng_sub.choice(sifted, size=n_sub, replace=False))
    key_idx = np.setdiff1d(sifted, sub_idx)
    if key_idx.size < 1:
        return failed("subensemble leaves no key slots")

    def build_record(indices: np.ndarray) -> MeasurementRecord:
        kw = {}
        if has_eve:
            kw = {"eve_angle": eve_angles[indices], "eve_value": eve_values[indices]}
        return MeasurementRecord(
            alice_angles[indices], bob_angles[indices],
            alice_values[indices], bob_values[indices], **kw,
        )

    sub_record = build_record(sub_idx)
    try:
        stats = compute_epr_statistics(
            sub_record, bin_width=config.bin_width, min_count=config.min_bin_count
        )
    except ValueError as exc:
        return failed(f"subensemble statistics unavailable: {exc}")
    criterion = epr_criterion(
        stats.delta_inf_x,
        stats.delta_inf_p,
        record=sub_record,
        n_bootstrap=config.bootstrap_resamples,
        rng=rng_boot,
    )

    key_is_x = np.abs(alice_angles[key_idx] - ANGLE_X) < 1e-9
    alice_key = KeySequence(alice_values[key_idx], "alice")
    bob_raw = bob_values[key_idx]
    bob_key = KeySequence(
        np.where(
            key_is_x,
            stats.gain_g * bob_raw + stats.offset_d,
            -(stats.gain_h * bob_raw + stats.offset_d_p),
        ),
        "bob",
    )
    keys = {"alice": alice_key, "bob": bob_key}
    if has_eve:
        keys["eve"] = KeySequence(eve_values[key_idx], "eve")

    sigma = max(stats.delta_inf_x, stats.delta_inf_p)
    if sigma <= 0.0:
        return failed("measured conditional deviation is zero; binning undefined")
    scheme = BinningScheme(sigma=sigma, amplification_A=config.amplification_A)
    if config.message_length > key_idx.size:
        return failed(
            f"message length {config.message_length} exceeds {key_idx.size} key slots"
        )
    grid_steps = rng_msg.integers(
        -config.alphabet_half_width, config.alphabet_half_width + 1, config.message_length
    )
    message = scheme.grid_origin + grid_steps * scheme.spacing
    trimmed_key = KeySequence(alice_key.values[: config.message_length], "alice")
    encrypted = encode_message(message, trimmed_key, scheme)

    transcript = SessionTranscript(
        config=config,
        status=STATUS_OK,
        record=sub_record,
        keys=keys,
        epr_stats=stats,
        criterion=criterion,
        binning=scheme,
        message=message,
        encrypted_signal=encrypted,
        security=build_security_report(stats, criterion),
        eve_measured=_eve_measured_statistics(sub_record),
    )
    return replace(transcript, encryption_results=measure_error_rates(transcript))
