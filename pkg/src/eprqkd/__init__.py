"""Continuous-variable QKD simulator and security analysis toolkit."""

from .attacks import AttackSpec, EveStrategy, apply_attack, eve_conditional_quality
from .criteria import (
    ANGLE_P,
    ANGLE_X,
    CriterionResult,
    EprStatistics,
    MeasurementRecord,
    binned_inference_variance,
    compute_epr_statistics,
    epr_criterion,
    linear_inference_variance,
    narrowness_delta,
    read_record_csv,
    write_record_csv,
)
from .gaussian import (
    GaussianState,
    HomodyneOutcome,
    SymplecticOp,
    beamsplitter,
    conditional_stats,
    homodyne_measure,
    make_vacuum,
    parametric_coupling,
    phase_rotation,
    sample_quadratures,
    symplectic_form,
    two_mode_squeezer,
)
from .protocol import (
    BinningScheme,
    KeySequence,
    SessionConfig,
    SessionTranscript,
    decode_message,
    encode_message,
    measure_error_rates,
    run_session,
)
from .security import (
    JointConditionalTable,
    SecurityReport,
    average_inference_bound,
    build_joint_conditional_table,
    build_security_report,
    conditional_uncertainty_check,
    gaussian_error_rates,
    identical_stats_contradiction,
    narrowness_bound,
    normal_upper_tail,
    perfect_correlation_verdict,
    sigma_regime_classifier,
)

__version__ = "0.1.0"
