"""Algebra over block matrices whose blocks are MN x MN diagonal matrices.

A :class:`BlockEigenMatrix` with ``R x T`` blocks is stored as an array of
shape ``(R, T, MN)``; entry ``[i, j, n]`` is the ``n``-th diagonal element of
block ``(i, j)``.  Every product, sum, Schur complement and inverse of such
matrices stays in the same family, so all of them are computed bin by bin on
the stored diagonals.

Counted primitives tally their arithmetic on an optional
:class:`~mimo_otfs.complexity.OpCounter`.  Negation and conjugation are free.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .complexity import OpCounter, tally

DEFAULT_SINGULAR_TOL = 1e-12


class SingularBlockError(np.linalg.LinAlgError):
    """A corner diagonal of the recursive inversion is numerically zero."""

    def __init__(self, level: int, bin_index: int, magnitude: float):
        self.level = level
        self.bin_index = bin_index
        self.magnitude = magnitude
        super().__init__(
            f"singular corner block at recursion level {level}, bin {bin_index} "
            f"(|d| = {magnitude:.3e})"
        )


@dataclass(frozen=True)
class BlockEigenMatrix:
    blocks: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.blocks, dtype=complex)
        if arr.ndim != 3:
            raise ValueError(f"blocks must have shape (R, T, MN), got {arr.shape}")
        object.__setattr__(self, "blocks", arr)

    @property
    def rows(self) -> int:
        return self.blocks.shape[0]

    @property
    def cols(self) -> int:
        return self.blocks.shape[1]

    @property
    def mn(self) -> int:
        return self.blocks.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.blocks.shape

    def block(self, i: int, j: int) -> np.ndarray:
        return self.blocks[i, j]

    def sub(self, rows: slice, cols: slice) -> "BlockEigenMatrix":
        return BlockEigenMatrix(self.blocks[rows, cols])

    @classmethod
    def identity(cls, n: int, mn: int) -> "BlockEigenMatrix":
        out = np.zeros((n, n, mn), dtype=complex)
        out[np.arange(n), np.arange(n)] = 1.0
        return cls(out)

    @classmethod
    def zeros(cls, rows: int, cols: int, mn: int) -> "BlockEigenMatrix":
        return cls(np.zeros((rows, cols, mn), dtype=complex))

    @classmethod
    def from_vector(cls, v: np.ndarray, mn: int) -> "BlockEigenMatrix":
        """View a stacked length ``R*MN`` vector as an ``R x 1`` block column."""
        v = np.asarray(v)
        if v.size % mn:
            raise ValueError("vector length is not a multiple of MN")
        return cls(v.reshape(-1, 1, mn))

    def to_vector(self) -> np.ndarray:
        if self.cols != 1:
            raise ValueError("only block columns convert to vectors")
        return self.blocks[:, 0, :].reshape(-1).copy()

    def __matmul__(self, other: "BlockEigenMatrix") -> "BlockEigenMatrix":
        return bd_mul(self, other)

    @property
    def H(self) -> "BlockEigenMatrix":
        return bd_adjoint(self)


def _check_mn(*mats: BlockEigenMatrix) -> int:
    mns = {m.mn for m in mats}
    if len(mns) != 1:
        raise ValueError(f"mismatched diagonal lengths {sorted(mns)}")
    return mns.pop()


def bd_mul(x: BlockEigenMatrix, y: BlockEigenMatrix, counter: OpCounter | None = None) -> BlockEigenMatrix:
    """Block product; block (i, k) is sum_j X_ij * Y_jk elementwise."""
    mn = _check_mn(x, y)
    a, b = x.rows, x.cols
    if y.rows != b:
        raise ValueError(f"inner block dimensions differ: {x.shape[:2]} @ {y.shape[:2]}")
    c = y.cols
    out = np.einsum("ijn,jkn->ikn", x.blocks, y.blocks)
    tally(counter, mul_div=a * c * b * mn, add_sub=a * c * (b - 1) * mn)
    return BlockEigenMatrix(out)


def bd_adjoint(x: BlockEigenMatrix) -> BlockEigenMatrix:
    """Block conjugate transpose; block (i, j) becomes conj of block (j, i)."""
    return BlockEigenMatrix(np.conj(np.swapaxes(x.blocks, 0, 1)))


def bd_scale(x: BlockEigenMatrix, a: complex, counter: OpCounter | None = None) -> BlockEigenMatrix:
    if a not in (1, -1):
        tally(counter, mul_div=x.blocks.size)
    return BlockEigenMatrix(a * x.blocks)


def bd_add(
    x: BlockEigenMatrix,
    y: BlockEigenMatrix,
    a1: complex = 1.0,
    a2: complex = 1.0,
    counter: OpCounter | None = None,
) -> BlockEigenMatrix:
    """Blockwise linear combination ``a1*X + a2*Y``.

    Coefficients of +-1 are sign flips and cost nothing; any other
    coefficient costs one multiply per stored entry.
    """
    _check_mn(x, y)
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch {x.shape} vs {y.shape}")
    size = x.blocks.size
    muls = (a1 not in (1, -1)) * size + (a2 not in (1, -1)) * size
    tally(counter, mul_div=muls, add_sub=size)
    return BlockEigenMatrix(a1 * x.blocks + a2 * y.blocks)


def bd_reciprocal(d: np.ndarray, counter: OpCounter | None = None) -> np.ndarray:
    """Elementwise inverse of one diagonal block."""
    tally(counter, mul_div=d.size)
    return 1.0 / d


@dataclass(frozen=True)
class GramMatrix:
    inner: BlockEigenMatrix
    rho: float = 0.0

    def __post_init__(self):
        if self.inner.rows != self.inner.cols:
            raise ValueError("Gram matrix must be block-square")
        if self.rho < 0:
            raise ValueError("rho must be non-negative")


def gram(d: BlockEigenMatrix, rho: float = 0.0, counter: OpCounter | None = None) -> GramMatrix:
    """``D^H D`` (ZF) or ``D^H D + rho*I`` (MMSE) in block-diagonal form."""
    if rho < 0:
        raise ValueError("rho must be non-negative")
    inner = bd_mul(bd_adjoint(d), d, counter)
    if rho > 0:
        n_t, mn = inner.rows, inner.mn
        # rho*I is formed (one scaling per diagonal entry) then added to the diagonal blocks
        tally(counter, mul_div=n_t * mn, add_sub=n_t * mn)
        blocks = inner.blocks.copy()
        idx = np.arange(n_t)
        blocks[idx, idx] += rho
        inner = BlockEigenMatrix(blocks)
    return GramMatrix(inner, float(rho))


@dataclass(frozen=True)
class PartitionLevel:
    """Bordered partition ``[[A, B], [C, d]]`` of one running Schur complement."""

    a: BlockEigenMatrix
    b: BlockEigenMatrix
    c: BlockEigenMatrix
    corner: np.ndarray
    corner_inv: np.ndarray
    corner_inv_c: BlockEigenMatrix

    @property
    def size(self) -> int:
        return self.a.rows + 1


@dataclass
class PartitionStack:
    levels: list[PartitionLevel] = field(default_factory=list)
    base: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.levels)


def _check_corner(d: np.ndarray, level: int, tol: float) -> None:
    mag = np.abs(d)
    bad = mag <= tol * mag.max(initial=0.0) if tol > 0 else mag == 0
    if bad.any():
        n = int(np.argmax(bad))
        raise SingularBlockError(level, n, float(mag[n]))


def schur_step(
    p: BlockEigenMatrix,
    counter: OpCounter | None = None,
    *,
    level: int = 1,
    singular_tol: float = DEFAULT_SINGULAR_TOL,
) -> tuple[PartitionLevel, BlockEigenMatrix]:
    """Split off the last block row/column and return the Schur complement.

    ``S = A - B d^{-1} C`` is evaluated as ``A - B (d^{-1} C)``.
    """
    t = p.rows
    if t != p.cols or t < 2:
        raise ValueError("schur_step needs a block-square input with at least 2x2 blocks")
    a = p.sub(slice(0, t - 1), slice(0, t - 1))
    b = p.sub(slice(0, t - 1), slice(t - 1, t))
    c = p.sub(slice(t - 1, t), slice(0, t - 1))
    corner = p.blocks[t - 1, t - 1]
    _check_corner(corner, level, singular_tol)
    corner_inv = bd_reciprocal(corner, counter)
    dinv_c = bd_mul(BlockEigenMatrix(corner_inv[None, None, :]), c, counter)
    s = bd_add(a, bd_mul(b, dinv_c, counter), 1, -1, counter)
    return PartitionLevel(a, b, c, corner, corner_inv, dinv_c), s


def bd_invert(
    g: GramMatrix | BlockEigenMatrix,
    counter: OpCounter | None = None,
    *,
    singular_tol: float = DEFAULT_SINGULAR_TOL,
    return_stack: bool = False,
):
    """Invert a block-square diagonal-block matrix by partitioning and backtracking.

    The partitioning phase peels off the last block row and column until a
    single diagonal block remains, storing every bordered partition.  The
    backtracking phase then rebuilds the inverse level by level with the
    block-wise inverse formula.
    """
    p = g.inner if isinstance(g, GramMatrix) else g
    if p.rows != p.cols:
        raise ValueError("bd_invert needs a block-square matrix")
    stack = PartitionStack()
    level = 1
    while p.rows > 1:
        part, p = schur_step(p, counter, level=level, singular_tol=singular_tol)
        stack.levels.append(part)
        level += 1
    _check_corner(p.blocks[0, 0], level, singular_tol)
    stack.base = p.blocks[0, 0]
    f = BlockEigenMatrix(bd_reciprocal(p.blocks[0, 0], counter)[None, None, :])

    for part in reversed(stack.levels):
        f = _backtrack(f, part, counter)
    if return_stack:
        return f, stack
    return f


def _backtrack(f: BlockEigenMatrix, part: PartitionLevel, counter: OpCounter | None) -> BlockEigenMatrix:
    """Assemble ``[[A, B], [C, d]]^{-1}`` from ``F = S^{-1}`` and the stored partition."""
    n = f.rows
    mn = f.mn
    dinv = BlockEigenMatrix(part.corner_inv[None, None, :])
    b_dinv = bd_mul(part.b, dinv, counter)
    top_right = bd_mul(f, b_dinv, counter)
    bottom_left = bd_mul(part.corner_inv_c, f, counter)
    corner = bd_add(dinv, bd_mul(bottom_left, b_dinv, counter), 1, 1, counter)

    out = np.empty((n + 1, n + 1, mn), dtype=complex)
    out[:n, :n] = f.blocks
    out[:n, n:] = -top_right.blocks
    out[n:, :n] = -bottom_left.blocks
    out[n, n] = corner.blocks[0, 0]
    return BlockEigenMatrix(out)


def bd_matvec(x: BlockEigenMatrix, v: np.ndarray, counter: OpCounter | None = None) -> np.ndarray:
    """Apply ``X`` to a stacked vector of length ``X.cols * MN``."""
    col = BlockEigenMatrix.from_vector(v, x.mn)
    return bd_mul(x, col, counter).to_vector()


def block_diagonal_mean(x: BlockEigenMatrix) -> np.ndarray:
    """Per-block mean of the diagonal entries, shape ``(R, T)``."""
    return x.blocks.mean(axis=2)


# ---------------------------------------------------------------------------
# dense oracle path
# ---------------------------------------------------------------------------

def dense_expand(x: BlockEigenMatrix) -> np.ndarray:
    """Expand to the full ``R*MN x T*MN`` matrix."""
    r, t, mn = x.shape
    out = np.zeros((r, mn, t, mn), dtype=complex)
    idx = np.arange(mn)
    out[:, idx, :, idx] = np.moveaxis(x.blocks, 2, 0)
    return out.reshape(r * mn, t * mn)


def dense_contract(a: np.ndarray, rows: int, cols: int, *, atol: float = 0.0) -> BlockEigenMatrix:
    """Inverse of :func:`dense_expand`; rejects matrices with off-diagonal block content."""
    a = np.asarray(a)
    mn = a.shape[0] // rows
    if a.shape != (rows * mn, cols * mn):
        raise ValueError("dense matrix does not tile into the requested block grid")
    tiles = a.reshape(rows, mn, cols, mn)
    idx = np.arange(mn)
    diag = tiles[:, idx, :, idx]
    rest = tiles.copy()
    rest[:, idx, :, idx] = 0
    if np.abs(rest).max(initial=0.0) > atol:
        raise ValueError("matrix has entries off the block diagonals")
    return BlockEigenMatrix(np.moveaxis(diag, 0, 2))


def dense_invert(a: np.ndarray, *, rcond: float = 1e-13) -> np.ndarray:
    """Dense inverse (LU with partial pivoting); oracle use only."""
    a = np.asarray(a, dtype=complex)
    if a.shape[0] != a.shape[1]:
        raise ValueError("dense_invert needs a square matrix")
    s = np.linalg.svd(a, compute_uv=False)
    if s[-1] <= rcond * s[0]:
        raise np.linalg.LinAlgError(f"matrix is numerically singular (cond ~ {s[0] / max(s[-1], 1e-300):.2e})")
    return np.linalg.inv(a)
