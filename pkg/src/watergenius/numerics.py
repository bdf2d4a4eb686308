"""Dense linear algebra and seeded randomness shared by the model modules.

Matrices are plain 2-D ``float64`` numpy arrays. The helpers here add the
shape and finiteness checks the models rely on, an SVD-backed
pseudo-inverse, and a fixed random generator recipe.

Random numbers come from numpy's PCG64 bit generator seeded with a 64-bit
unsigned integer, so equal seeds replay bit-identical streams across
platforms. Independent child streams are derived through ``SeedSequence``.
"""

from __future__ import annotations

import numpy as np

DEFAULT_RCOND = 1e-12

Matrix = np.ndarray


class ShapeError(ValueError):
    """Raised when operand shapes do not conform."""


class NumericsError(ArithmeticError):
    """Raised when a decomposition fails or produces non-finite values."""


def as_matrix(a, name: str = "matrix") -> Matrix:
    """Coerce ``a`` to a finite 2-D float64 array.

    1-D input is treated as a column.
    """
    m = np.asarray(a, dtype=np.float64)
    if m.ndim == 1:
        m = m[:, None]
    if m.ndim != 2:
        raise ShapeError(f"{name}: expected 2-D array, got {m.ndim}-D shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise NumericsError(f"{name}: contains non-finite entries")
    return m


def matmul(a, b) -> Matrix:
    """Standard matrix product with a shape diagnostic on mismatch."""
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(
            f"cannot multiply {a.shape[0]}x{a.shape[1]} by {b.shape[0]}x{b.shape[1]}: "
            f"inner dimensions {a.shape[1]} != {b.shape[0]}"
        )
    out = a @ b
    if not np.all(np.isfinite(out)):
        raise NumericsError("matmul overflowed to non-finite values")
    return out


def pseudo_inverse(a, rcond: float = DEFAULT_RCOND) -> Matrix:
    """Moore-Penrose pseudo-inverse via the singular value decomposition.

    Singular values below ``rcond * s_max`` are treated as zero.

    Parameters
    ----------
    a : array_like
        Nonempty matrix.
    rcond : float
        Relative cutoff in (0, 1).

    Returns
    -------
    ndarray
        The ``cols x rows`` pseudo-inverse.
    """
    a = as_matrix(a, "a")
    if a.size == 0:
        raise ShapeError("pseudo_inverse of an empty matrix")
    if not 0.0 < rcond < 1.0:
        raise ValueError(f"rcond must lie in (0, 1), got {rcond}")
    try:
        u, s, vh = np.linalg.svd(a, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        # Frobenius-norm condition estimate does not need the SVD.
        try:
            cond = np.linalg.cond(a, p="fro")
        except np.linalg.LinAlgError:
            cond = float("inf")
        raise NumericsError(
            f"SVD did not converge for {a.shape[0]}x{a.shape[1]} matrix "
            f"(condition estimate {cond:.3e})"
        ) from exc
    cutoff = rcond * s[0] if s.size else 0.0
    s_inv = np.zeros_like(s)
    keep = s > cutoff
    s_inv[keep] = 1.0 / s[keep]
    return (vh.T * s_inv) @ u.T


def solve_least_squares(a, b, rcond: float = DEFAULT_RCOND) -> Matrix:
    """Minimum-norm ``x`` minimising ``||a x - b||_2`` (via :func:`pseudo_inverse`)."""
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[0] != b.shape[0]:
        raise ShapeError(
            f"least squares needs a.rows == b.rows, got {a.shape[0]} and {b.shape[0]}"
        )
    return pseudo_inverse(a, rcond) @ b


def make_rng(seed: int) -> np.random.Generator:
    """PCG64 generator for a 64-bit unsigned ``seed``."""
    seed = int(seed)
    if not 0 <= seed < 2**64:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return np.random.Generator(np.random.PCG64(seed))


def child_seeds(seed: int, n: int) -> list[int]:
    """Derive ``n`` independent 64-bit seeds from ``seed``.

    Used to hand each model in a sweep its own generator.
    """
    ss = np.random.SeedSequence(int(seed))
    return [int(c.generate_state(1, dtype=np.uint64)[0]) for c in ss.spawn(n)]
