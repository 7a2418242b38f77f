"""Binary mapping matrices that reassign target units to source units.

A mapping matrix ``M`` has one row per target unit and one column per source
unit, binary entries and at most one active entry per column. Its genome is
the integer vector ``V`` of length ``q`` with ``V[j] = i + 1`` when
``M[i, j] = 1`` and ``V[j] = 0`` when source column ``j`` is left unmapped.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from ._validation import check_binary
from .exceptions import (
    DimensionMismatch,
    InvalidMapping,
    LengthMismatch,
    NonSquare,
    OutOfRange,
)


class Violation(NamedTuple):
    row: int | None
    column: int
    reason: str


@dataclass(frozen=True)
class LocalityProfile:
    fraction_local: float
    fraction_strictly_local: float
    n_rows: int


@dataclass(frozen=True)
class AlignmentReport:
    """Per-concept alignment flags plus locality of both representations."""

    aligned: dict
    source_locality: LocalityProfile
    target_locality: LocalityProfile

    @property
    def fraction_aligned(self):
        return float(np.mean(list(self.aligned.values()))) if self.aligned else 0.0


def validate(M):
    """Return ``None`` for a valid mapping matrix, else the first violation."""
    M = np.asarray(M)
    if M.ndim != 2:
        return Violation(None, 0, "mapping matrix must be two-dimensional")
    bad = np.argwhere((M != 0) & (M != 1))
    if bad.size:
        r, c = bad[0]
        return Violation(int(r), int(c), f"entry {M[r, c]!r} is not binary")
    sums = M.sum(axis=0)
    over = np.flatnonzero(sums > 1)
    if over.size:
        c = int(over[0])
        rows = np.flatnonzero(M[:, c])
        return Violation(int(rows[1]), c,
                         f"column {c} has {int(sums[c])} active entries")
    return None


def check_mapping(M):
    violation = validate(M)
    if violation is not None:
        raise InvalidMapping(violation.reason)
    return np.asarray(M, dtype=np.float64)


def identity_genome(p, q=None):
    """Direct mapping: source column j takes target unit j when it exists."""
    q = p if q is None else q
    V = np.arange(1, q + 1)
    V[V > p] = 0
    return V


def check_genome(V, p):
    V = np.asarray(V)
    if V.ndim != 1:
        raise InvalidMapping("genome must be one-dimensional")
    if V.size and (not np.issubdtype(V.dtype, np.integer)
                   and not np.all(V == np.round(V))):
        raise OutOfRange("genome entries must be integers")
    V = V.astype(np.int64)
    if V.size and (V.min() < 0 or V.max() > p):
        raise OutOfRange(f"genome entries must lie in 0..{p}")
    return V


def from_genome(V, p):
    """Decode a genome into its ``p x len(V)`` mapping matrix."""
    V = check_genome(V, p)
    M = np.zeros((p, V.size), dtype=np.float64)
    cols = np.flatnonzero(V)
    M[V[cols] - 1, cols] = 1.0
    return M


def to_genome(M):
    M = check_mapping(M)
    V = np.zeros(M.shape[1], dtype=np.int64)
    rows, cols = np.nonzero(M)
    V[cols] = rows + 1
    return V


def apply(M, T):
    """Adjusted representation ``T @ M`` (binary when ``T`` is binary)."""
    M = check_mapping(M)
    T = np.asarray(T, dtype=np.float64)
    if T.ndim != 2 or T.shape[1] != M.shape[0]:
        raise DimensionMismatch(
            f"representation has {T.shape[-1]} columns, mapping has "
            f"{M.shape[0]} rows")
    return T @ M


def apply_genome(V, T):
    """Same result as ``apply(from_genome(V, p), T)`` by column gathering."""
    T = np.asarray(T, dtype=np.float64)
    V = check_genome(V, T.shape[1])
    padded = np.hstack([np.zeros((T.shape[0], 1)), T])
    return padded[:, V]


def compose(A, B):
    """Product of two mapping matrices; again a valid mapping matrix."""
    A = check_mapping(A)
    B = check_mapping(B)
    if A.shape[1] != B.shape[0]:
        raise DimensionMismatch(f"cannot compose {A.shape} with {B.shape}")
    return check_mapping(A @ B)


def adjustment_degree(M):
    """Percentage of columns whose mapping differs from the identity."""
    M = check_mapping(M)
    if M.shape[0] != M.shape[1]:
        raise NonSquare(f"adjustment degree needs a square matrix, got "
                        f"{M.shape[0]}x{M.shape[1]}")
    return 100.0 * np.count_nonzero(np.diag(M) != 1) / M.shape[1]


def genome_adjustment_degree(V, p=None):
    V = np.asarray(V)
    if p is not None and p != V.size:
        raise NonSquare(f"adjustment degree needs a square matrix, got "
                        f"{p}x{V.size}")
    return 100.0 * np.count_nonzero(V != np.arange(1, V.size + 1)) / V.size


def block_concat(J, S):
    """Block-diagonal ``[[J, 0], [0, S]]`` of two valid mapping matrices."""
    J = check_mapping(J)
    S = check_mapping(S)
    (n1, n2), (p, q) = J.shape, S.shape
    M = np.zeros((n1 + p, n2 + q))
    M[:n1, :n2] = J
    M[n1:, n2:] = S
    return M


def block_concat_genome(VJ, VS, n_rows_J):
    """Genome of ``block_concat`` built directly from the block genomes."""
    VS = np.asarray(VS, dtype=np.int64)
    return np.concatenate([np.asarray(VJ, dtype=np.int64),
                           np.where(VS > 0, VS + n_rows_J, 0)])


def locality_profile(R):
    """Fractions of rows with exactly one / at least one active unit."""
    R = check_binary(R, "R")
    active = R.sum(axis=1)
    return LocalityProfile(float(np.mean(active == 1)),
                           float(np.mean(active >= 1)), R.shape[0])


def is_aligned(r_s, r_t):
    r_s = np.asarray(r_s)
    r_t = np.asarray(r_t)
    if r_s.shape != r_t.shape:
        raise LengthMismatch(f"lengths {r_s.shape} and {r_t.shape} differ")
    return bool(np.array_equal(r_s == 1, r_t == 1))


def _modal_code(R):
    codes, counts = np.unique(R, axis=0, return_counts=True)
    return codes[np.argmax(counts)]


def concept_alignment(R_s, y_s, R_t, y_t):
    """Check alignment of each class's most frequent code across domains.

    Classes stand in for concepts; a class is aligned when its modal source
    code and modal target code activate exactly the same units.
    """
    R_s = check_binary(R_s, "R_s")
    R_t = check_binary(R_t, "R_t", n_features=R_s.shape[1])
    y_s, y_t = np.asarray(y_s), np.asarray(y_t)
    shared = np.intersect1d(y_s, y_t)
    aligned = {
        int(c): is_aligned(_modal_code(R_s[y_s == c]), _modal_code(R_t[y_t == c]))
        for c in shared
    }
    return AlignmentReport(aligned, locality_profile(R_s), locality_profile(R_t))


# --------------------------------------------------------------------------
# genome text format


def format_genome(V):
    return ",".join(str(int(v)) for v in V)


def parse_genome(line):
    line = line.strip()
    return np.array([int(tok) for tok in line.split(",")] if line else [],
                    dtype=np.int64)


def write_genomes(path, genomes):
    with open(path, "w") as f:
        for V in genomes:
            f.write(format_genome(V) + "\n")


def read_genomes(path):
    with open(path) as f:
        return [parse_genome(line) for line in f if line.strip()]
