"""Perceptual hashing of CNN weight containers.

Piracy hashes compare models by the higher-order statistics of their largest
weights; tamper hashes locate modified parameter blocks.
"""

from ._core import (
    ChaosParams,
    ConfigMismatch,
    DistanceWeights,
    Error,
    FormatError,
    HashConfig,
    MatchResult,
    ModelWeights,
    PiracyHash,
    TamperHash,
    TamperReport,
    chaotic_iterate,
    encode_state,
    finetune,
    generate,
    hamming,
    hos_sequence,
    kurtosis,
    load_container,
    locate,
    lyapunov_exponents,
    piracy_hash,
    prune,
    quantile,
    quantize_levels,
    save_container,
    simulate,
    skewness,
    structure_sequence,
    suite_names,
    tamper,
    tamper_hash,
    weighted_distance,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
