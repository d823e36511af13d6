"""Seed derivation: one master seed, independent named streams per trial."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

STREAM_NAMES = ("channel", "noise", "csi", "bits")


@dataclass(frozen=True)
class TrialStreams:
    channel: np.random.Generator
    noise: np.random.Generator
    csi: np.random.Generator
    bits: np.random.Generator


def trial_streams(master: int, *key: int) -> TrialStreams:
    """Independent generators for the trial identified by ``key``.

    The same ``(master, *key)`` always yields the same four streams, and each
    stream can be regenerated on its own.
    """
    gens = [
        np.random.Generator(np.random.PCG64(np.random.SeedSequence(master, spawn_key=(*key, i))))
        for i in range(len(STREAM_NAMES))
    ]
    return TrialStreams(*gens)


def complex_normal(rng: np.random.Generator, shape, variance: float = 1.0) -> np.ndarray:
    """i.i.d. circularly-symmetric CN(0, variance) samples."""
    scale = np.sqrt(variance / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))
