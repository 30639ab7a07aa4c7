"""Density-aware post-hoc calibration (Python bindings)."""

from ._dacal import (
    Calibrator,
    ConfigError,
    DacModel,
    DataError,
    Error,
    IoError,
    KnnIndex,
    ShapeError,
    accuracy,
    apply_ets,
    apply_ts,
    aupr,
    auroc,
    brier,
    classwise_ece,
    detection_error,
    ece,
    fit_calibrator,
    fit_dac,
    fit_ets,
    fit_ts,
    fpr_at_tpr,
    l2_normalize,
    nll,
    num_threads,
    pav,
    set_num_threads,
    softmax,
    synth,
)


def density_profile(indices, features):
    """Stack k-th neighbor distances of each layer into an (N, L) array.

    `indices` is a list of KnnIndex and `features` maps layer name to the
    raw (unnormalized) features of the samples.
    """
    import numpy as np

    return np.stack([idx.kth_distance(features[idx.layer_name]) for idx in indices], axis=1).astype(np.float32)


__all__ = [name for name in dir() if not name.startswith("_")]
