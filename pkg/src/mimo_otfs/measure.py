"""Instrumented runs of the LZ/LM receiver on random channels."""

from __future__ import annotations

import numpy as np

from .blockmat import BlockEigenMatrix, bd_adjoint, bd_invert, bd_matvec, bd_mul, gram
from .channel import apply_transform, eigen_matrix, random_profile, sample_channel
from .complexity import OpCounter
from .rng import complex_normal


def measure_receiver_ops(
    receiver: str,
    n_t: int,
    n_r: int,
    m: int,
    n: int,
    *,
    seed: int = 0,
) -> dict[str, int]:
    """Count the ops of one LZ/LM detection, split into the three closed-form terms.

    Returns ``{"inversion", "pipeline", "transforms"}``: Gram formation plus
    block inversion, the arithmetic of ``G_A^H y``, and the number of 2D DFTs
    (eigenvalue computation plus the two transform stages).

    Op counts depend only on the shapes.  When ``N_r < N_t`` the Gram matrix
    is rank deficient, so the counted inversion runs on a full-rank Gram of
    the same shape instead.
    """
    if receiver not in ("LZ", "LM"):
        raise ValueError(f"only LZ and LM have instrumented pipelines, got {receiver!r}")
    rng = np.random.default_rng(seed)
    profile = random_profile(rng, m, n, n_taps=min(5, m * n))
    real = sample_channel(profile, n_t, n_r, rng) if n_r >= n_t else None
    tf = OpCounter()
    if real is not None:
        d = eigen_matrix(real, tf)
    else:
        # N_r < N_t is outside the channel sampler's contract; the counts only
        # need a block matrix of the right shape
        tf.add(transforms=n_r * n_t)
        d = BlockEigenMatrix(complex_normal(rng, (n_r, n_t, m * n)))
    rho = 0.1 if receiver == "LM" else 0.0

    inv = OpCounter()
    g = gram(d, rho, inv)
    if n_r < n_t:
        g = gram(BlockEigenMatrix(complex_normal(rng, (n_t, n_t, m * n))), rho)
    dinv = bd_invert(g, inv)

    pipe = OpCounter()
    y = complex_normal(rng, n_r * m * n)
    yt = apply_transform(y, n_r, m, n, "forward", pipe)
    dt = bd_mul(d, dinv, pipe)
    z = bd_matvec(bd_adjoint(dt), yt, pipe)
    apply_transform(z, n_t, m, n, "adjoint", pipe)

    return {
        "inversion": inv.arithmetic,
        "pipeline": pipe.arithmetic,
        "transforms": tf.transforms + pipe.transforms + inv.transforms,
    }
