"""Operation counting and closed-form complexity predictors.

Arithmetic is tallied in complex operations: one multiply or divide is one
``mul_div`` op, one add or subtract is one ``add_sub`` op.  2D-DFT
applications are tracked separately as a count of ``M*N``-point transforms,
since the closed forms keep them as ``O(MN log2 MN)`` terms.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable

RECEIVERS = ("LZ", "LM", "cZF", "cMMSE", "MP", "LZ-LAS", "LM-LAS")


@dataclass
class OpCounter:
    """Explicit accumulator of counted operations."""

    mul_div: int = 0
    add_sub: int = 0
    transforms: int = 0

    @property
    def arithmetic(self) -> int:
        return self.mul_div + self.add_sub

    def add(self, mul_div: int = 0, add_sub: int = 0, transforms: int = 0) -> None:
        if mul_div < 0 or add_sub < 0 or transforms < 0:
            raise ValueError("operation counts must be non-negative")
        self.mul_div += int(mul_div)
        self.add_sub += int(add_sub)
        self.transforms += int(transforms)

    def __add__(self, other: "OpCounter") -> "OpCounter":
        return OpCounter(
            self.mul_div + other.mul_div,
            self.add_sub + other.add_sub,
            self.transforms + other.transforms,
        )

    def __iadd__(self, other: "OpCounter") -> "OpCounter":
        self.add(other.mul_div, other.add_sub, other.transforms)
        return self


def tally(counter: OpCounter | None, mul_div: int = 0, add_sub: int = 0, transforms: int = 0) -> None:
    """Record ops on ``counter`` if one is attached; no-op otherwise."""
    if counter is not None:
        counter.add(mul_div, add_sub, transforms)


# ---------------------------------------------------------------------------
# closed forms
# ---------------------------------------------------------------------------

def gram_ops(n_t: int, n_r: int, mn: int, regularized: bool) -> int:
    """Cost of forming D^H D (plus rho*I when ``regularized``)."""
    ops = n_t * n_t * n_r + n_t * n_t * (n_r - 1)
    if regularized:
        ops += 2 * n_t
    return ops * mn


def block_inverse_ops(n_t: int, mn: int) -> int:
    """Cost of the partition/backtrack inversion of an n_t x n_t diagonal-block matrix."""
    return (2 * n_t**3 - 2 * n_t**2 + n_t) * mn


def inversion_ops(n_t: int, n_r: int, mn: int, regularized: bool) -> int:
    """mu_D: Gram formation plus inversion, for LZ (``regularized=False``) or LM."""
    if regularized:
        return (2 * n_t**3 - 3 * n_t**2 + 3 * n_t + 2 * n_t**2 * n_r) * mn
    return (2 * n_t**3 - 3 * n_t**2 + n_t + 2 * n_t**2 * n_r) * mn


def pipeline_ops(n_t: int, n_r: int, mn: int) -> int:
    """Arithmetic part of G_A^H y (the transforms are counted separately)."""
    return (2 * n_t**2 * n_r + n_t * n_r - n_t) * mn


def pipeline_transforms(n_t: int, n_r: int) -> int:
    return n_t + n_r


def mp_ops(n_iter: int, n_t: int, n_r: int, mn: int, n_taps: int, window: int, q: int) -> int:
    """Message-passing detector order count N_I * N_r * N_t * MN * S * Q."""
    s = n_taps * (2 * window + 1)
    return n_iter * n_r * n_t * mn * s * q


@dataclass(frozen=True)
class ComplexityPrediction:
    receiver: str
    exact_ops: int
    transform_ops: int
    exact: bool
    detail: dict = field(default_factory=dict)

    @property
    def total_class(self) -> int:
        """Arithmetic ops plus transforms weighted by MN*log2(MN), for plotting."""
        return self.exact_ops + self.detail.get("transform_weight", 0) * self.transform_ops


def predict_ops(
    receiver: str,
    n_t: int,
    n_r: int,
    m: int,
    n: int,
    *,
    n_iter: int = 20,
    q: int = 4,
    n_taps: int = 5,
    window: int = 10,
) -> ComplexityPrediction:
    """Predicted operation count for ``receiver`` at the given dimensions.

    LZ/LM (and their LAS variants) are exact integers from the closed forms;
    the conventional receivers and MP are order-class counts.
    """
    if min(n_t, n_r, m, n) < 1:
        raise ValueError("dimensions must be positive")
    mn = m * n
    weight = mn * max(mn.bit_length() - 1, 1)
    base = {"transform_weight": weight}
    if receiver in ("LZ", "LM", "LZ-LAS", "LM-LAS"):
        lm = receiver.startswith("LM")
        ops = inversion_ops(n_t, n_r, mn, lm) + pipeline_ops(n_t, n_r, mn)
        transforms = pipeline_transforms(n_t, n_r) + n_t * n_r
        exact = True
        if receiver.endswith("LAS"):
            ops += n_t * mn
            exact = False
        return ComplexityPrediction(receiver, ops, transforms, exact, base)
    if receiver in ("cZF", "cMMSE"):
        return ComplexityPrediction(receiver, (n_t * mn) ** 3, 0, False, base)
    if receiver == "MP":
        ops = mp_ops(n_iter, n_t, n_r, mn, n_taps, window, q)
        return ComplexityPrediction(receiver, ops, 0, False, base)
    raise ValueError(f"unknown receiver tag {receiver!r}")


def measure_ops(workload: Callable[[OpCounter], object], counter: OpCounter | None = None) -> OpCounter:
    """Run ``workload(counter)`` and return the accumulated tallies."""
    if counter is None:
        counter = OpCounter()
    workload(counter)
    return counter


class ComplexityMismatch(AssertionError):
    pass


def complexity_report(
    sweep: Iterable[tuple[int, int, int, int, int]],
    receivers: Iterable[str] = ("LZ", "LM", "cMMSE", "MP"),
    *,
    q: int = 4,
    n_taps: int = 5,
    window: int = 10,
    seed: int = 0,
) -> list[dict]:
    """Evaluate predictions over ``sweep`` points ``(n_t, n_r, m, n, n_iter)``.

    LZ and LM rows are also measured on the instrumented pipeline and must
    match the prediction exactly, otherwise ``ComplexityMismatch`` is raised
    naming the first differing term.
    """
    from .measure import measure_receiver_ops

    receivers = tuple(receivers)
    rows = []
    for n_t, n_r, m, n, n_iter in sweep:
        for rx in receivers:
            pred = predict_ops(rx, n_t, n_r, m, n, n_iter=n_iter, q=q, n_taps=n_taps, window=window)
            measured = None
            measured_tf = None
            if rx in ("LZ", "LM"):
                parts = measure_receiver_ops(rx, n_t, n_r, m, n, seed=seed)
                mn = m * n
                expected = {
                    "inversion": inversion_ops(n_t, n_r, mn, rx == "LM"),
                    "pipeline": pipeline_ops(n_t, n_r, mn),
                    "transforms": pipeline_transforms(n_t, n_r) + n_t * n_r,
                }
                for term, value in expected.items():
                    if parts[term] != value:
                        raise ComplexityMismatch(
                            f"{rx} at (n_t={n_t}, n_r={n_r}, M={m}, N={n}): "
                            f"{term} measured {parts[term]} != predicted {value}"
                        )
                measured = parts["inversion"] + parts["pipeline"]
                measured_tf = parts["transforms"]
            rows.append(
                {
                    "receiver": rx,
                    "n_t": n_t,
                    "n_r": n_r,
                    "m": m,
                    "n": n,
                    "n_iter": n_iter,
                    "predicted_ops": pred.exact_ops,
                    "predicted_transforms": pred.transform_ops,
                    "measured_ops": measured,
                    "measured_transforms": measured_tf,
                    "exact": pred.exact,
                }
            )
    return rows
