"""Masked-gate LSTM training and ant colony mesh evolution for flight data."""

from ._core import (
    Arch,
    Mesh,
    Network,
    NeuroevoError,
    correlate,
    count_weights,
    crc32,
    cross_correlate,
    default_window,
    evaluate,
    evolve,
    report,
    sample_mesh,
    synth,
    train,
)

__all__ = [
    "Arch",
    "Mesh",
    "Network",
    "NeuroevoError",
    "correlate",
    "count_weights",
    "crc32",
    "cross_correlate",
    "default_window",
    "evaluate",
    "evolve",
    "report",
    "sample_mesh",
    "synth",
    "train",
]
