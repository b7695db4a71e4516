"""Compressed sparse row matrices and the kernels the solvers need.

This module is deliberately small: CSR storage, matrix-vector products,
Matrix Market I/O and an LU factorization with partial pivoting used to
apply block-Jacobi preconditioners. Everything targets desk-scale
problems (orders up to a few thousand); clarity wins over throughput.
"""

from __future__ import annotations

import io
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.linalg


class MatrixMarketError(ValueError):
    """Base class for Matrix Market reading failures."""


class MalformedHeaderError(MatrixMarketError):
    """Banner or size line is missing, truncated or unreadable."""


class UnsupportedFormatError(MatrixMarketError):
    """Recognized Matrix Market feature that this reader does not accept."""


class IndexOutOfRangeError(MatrixMarketError):
    """A coordinate entry lies outside the declared matrix dimensions."""


class MalformedEntryError(MatrixMarketError):
    """A coordinate entry line could not be parsed."""


class SingularMatrixError(RuntimeError):
    """LU factorization hit a zero pivot; ``column`` is the failing column."""

    def __init__(self, column: int, detail: str = ""):
        self.column = column
        msg = f"singular matrix: zero pivot in column {column}"
        if detail:
            msg = f"{msg} ({detail})"
        super().__init__(msg)


@dataclass(frozen=True)
class SparseMatrix:
    """CSR matrix with sorted, duplicate-free column indices per row.

    Explicitly stored zeros are allowed, so structural and numeric
    nonzero counts can differ (``nnz_stored`` vs ``nnz_numeric``).
    Instances are immutable and safe to share across threads.
    """

    nrows: int
    ncols: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        offsets = np.ascontiguousarray(self.row_offsets, dtype=np.int64)
        cols = np.ascontiguousarray(self.col_indices, dtype=np.int64)
        vals = np.ascontiguousarray(self.values, dtype=np.float64)
        object.__setattr__(self, "row_offsets", offsets)
        object.__setattr__(self, "col_indices", cols)
        object.__setattr__(self, "values", vals)
        if self.nrows < 0 or self.ncols < 0:
            raise ValueError("matrix dimensions must be nonnegative")
        if offsets.shape != (self.nrows + 1,):
            raise ValueError("row_offsets must have length nrows + 1")
        if offsets[0] != 0 or offsets[-1] != vals.size or cols.size != vals.size:
            raise ValueError("row_offsets inconsistent with stored entries")
        if np.any(np.diff(offsets) < 0):
            raise ValueError("row_offsets must be nondecreasing")
        if cols.size:
            if cols.min() < 0 or cols.max() >= self.ncols:
                raise ValueError("column index out of range")
        if cols.size > 1:
            starts = np.zeros(cols.size, dtype=bool)
            inner = offsets[1:-1]
            starts[inner[inner < cols.size]] = True
            bad = (np.diff(cols) <= 0) & ~starts[1:]
            if bad.any():
                raise ValueError("column indices must be strictly increasing per row")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nrows, self.ncols)

    @property
    def nnz_stored(self) -> int:
        return int(self.values.size)

    @property
    def nnz_numeric(self) -> int:
        return int(np.count_nonzero(self.values))

    def row(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        """Column indices and values of row ``i`` (views, do not mutate)."""
        s, e = self.row_offsets[i], self.row_offsets[i + 1]
        return self.col_indices[s:e], self.values[s:e]

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.nrows, self.ncols))
        counts = np.diff(self.row_offsets)
        rows = np.repeat(np.arange(self.nrows), counts)
        out[rows, self.col_indices] = self.values
        return out

    def __eq__(self, other) -> bool:
        if not isinstance(other, SparseMatrix):
            return NotImplemented
        return (
            self.shape == other.shape
            and np.array_equal(self.row_offsets, other.row_offsets)
            and np.array_equal(self.col_indices, other.col_indices)
            and np.array_equal(self.values, other.values)
        )


def csr_from_coo(nrows, ncols, rows, cols, values) -> SparseMatrix:
    """Build a CSR matrix from coordinates, summing duplicate entries."""
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    values = np.asarray(values, dtype=np.float64)
    if not (rows.size == cols.size == values.size):
        raise ValueError("coordinate arrays must have equal length")
    if rows.size == 0:
        return SparseMatrix(nrows, ncols, np.zeros(nrows + 1, np.int64),
                            np.zeros(0, np.int64), np.zeros(0))
    if rows.min() < 0 or rows.max() >= nrows or cols.min() < 0 or cols.max() >= ncols:
        raise ValueError("coordinate index out of range")
    order = np.lexsort((cols, rows))
    r, c, v = rows[order], cols[order], values[order]
    group_start = np.empty(r.size, dtype=bool)
    group_start[0] = True
    group_start[1:] = (r[1:] != r[:-1]) | (c[1:] != c[:-1])
    starts = np.flatnonzero(group_start)
    summed = np.add.reduceat(v, starts)
    r, c = r[starts], c[starts]
    counts = np.bincount(r, minlength=nrows)
    offsets = np.concatenate(([0], np.cumsum(counts)))
    return SparseMatrix(nrows, ncols, offsets, c, summed)


def csr_from_dense(arr) -> SparseMatrix:
    """CSR from a dense array, dropping exact zeros."""
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError("expected a 2-d array")
    rows, cols = np.nonzero(arr)
    return csr_from_coo(arr.shape[0], arr.shape[1], rows, cols, arr[rows, cols])


def csr_identity(n: int) -> SparseMatrix:
    idx = np.arange(n, dtype=np.int64)
    return SparseMatrix(n, n, np.arange(n + 1, dtype=np.int64), idx, np.ones(n))


def spmv(M: SparseMatrix, x) -> np.ndarray:
    """Matrix-vector product ``M @ x`` by row dot products."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (M.ncols,):
        raise ValueError(f"vector length {x.shape} does not match ncols={M.ncols}")
    out = np.zeros(M.nrows)
    if M.values.size == 0:
        return out
    prod = M.values * x[M.col_indices]
    counts = np.diff(M.row_offsets)
    nonempty = counts > 0
    # reduceat over the starts of nonempty rows sums exactly one row per segment
    out[nonempty] = np.add.reduceat(prod, M.row_offsets[:-1][nonempty])
    return out


def spmv_transpose(M: SparseMatrix, x) -> np.ndarray:
    """Product ``M.T @ x`` without materializing the transpose."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (M.nrows,):
        raise ValueError(f"vector length {x.shape} does not match nrows={M.nrows}")
    if M.values.size == 0:
        return np.zeros(M.ncols)
    counts = np.diff(M.row_offsets)
    weights = M.values * np.repeat(x, counts)
    return np.bincount(M.col_indices, weights=weights, minlength=M.ncols).astype(np.float64)


# ---------------------------------------------------------------------------
# Matrix Market I/O
# ---------------------------------------------------------------------------

_SUPPORTED_FIELDS = {"real", "integer", "pattern"}
_SUPPORTED_SYMMETRIES = {"general", "symmetric"}


def _text_lines(source):
    if isinstance(source, Path):
        return source.read_text().splitlines()
    if isinstance(source, bytes):
        return source.decode("utf-8", errors="replace").splitlines()
    if isinstance(source, str):
        return source.splitlines()
    data = source.read()
    if isinstance(data, bytes):
        data = data.decode("utf-8", errors="replace")
    return data.splitlines()


def parse_matrix_market(source) -> SparseMatrix:
    """Read a coordinate Matrix Market matrix from text, bytes or a stream.

    Supports real, integer and pattern fields with general or symmetric
    qualifiers. Symmetric input is expanded to full storage, pattern
    entries are assigned the value 1.0, duplicate coordinates are summed
    and indices become 0-based.
    """
    lines = _text_lines(source)
    it = iter(enumerate(lines, start=1))

    banner = None
    for _, raw in it:
        if raw.strip():
            banner = raw.strip()
            break
    if banner is None:
        raise MalformedHeaderError("empty input")
    tokens = banner.split()
    if len(tokens) != 5 or not tokens[0].lower().startswith("%%matrixmarket"):
        raise MalformedHeaderError(f"bad banner line: {banner!r}")
    obj, fmt, field, symmetry = (t.lower() for t in tokens[1:])
    if obj != "matrix":
        raise MalformedHeaderError(f"unsupported object {obj!r}")
    if fmt != "coordinate":
        raise UnsupportedFormatError(f"unsupported format {fmt!r}, expected coordinate")
    if field == "complex":
        raise UnsupportedFormatError("complex matrices are not supported")
    if field not in _SUPPORTED_FIELDS:
        raise MalformedHeaderError(f"unknown field {field!r}")
    if symmetry in {"skew-symmetric", "hermitian"}:
        raise UnsupportedFormatError(f"unsupported symmetry {symmetry!r}")
    if symmetry not in _SUPPORTED_SYMMETRIES:
        raise MalformedHeaderError(f"unknown symmetry {symmetry!r}")

    size_line = None
    for lineno, raw in it:
        stripped = raw.strip()
        if not stripped or stripped.startswith("%"):
            continue
        size_line = (lineno, stripped)
        break
    if size_line is None:
        raise MalformedHeaderError("missing size line")
    parts = size_line[1].split()
    if len(parts) != 3:
        raise MalformedHeaderError(f"size line must have three fields: {size_line[1]!r}")
    try:
        nrows, ncols, nnz = (int(p) for p in parts)
    except ValueError as exc:
        raise MalformedHeaderError(f"non-integer size line: {size_line[1]!r}") from exc
    if nrows < 0 or ncols < 0 or nnz < 0:
        raise MalformedHeaderError("negative dimension in size line")
    if symmetry == "symmetric" and nrows != ncols:
        raise MalformedHeaderError("symmetric matrix must be square")

    is_pattern = field == "pattern"
    rows = np.empty(nnz, dtype=np.int64)
    cols = np.empty(nnz, dtype=np.int64)
    vals = np.empty(nnz, dtype=np.float64)
    seen = 0
    for lineno, raw in it:
        stripped = raw.strip()
        if not stripped or stripped.startswith("%"):
            continue
        if seen >= nnz:
            raise MalformedEntryError(f"line {lineno}: more entries than declared ({nnz})")
        parts = stripped.split()
        want = 2 if is_pattern else 3
        if len(parts) < want:
            raise MalformedEntryError(f"line {lineno}: expected {want} fields, got {len(parts)}")
        try:
            i = int(parts[0])
            j = int(parts[1])
            v = 1.0 if is_pattern else float(parts[2])
        except ValueError as exc:
            raise MalformedEntryError(f"line {lineno}: unparsable entry {stripped!r}") from exc
        if not (1 <= i <= nrows and 1 <= j <= ncols):
            raise IndexOutOfRangeError(
                f"line {lineno}: entry ({i}, {j}) outside {nrows} x {ncols}"
            )
        rows[seen] = i - 1
        cols[seen] = j - 1
        vals[seen] = v
        seen += 1
    if seen != nnz:
        raise MalformedEntryError(f"declared {nnz} entries but found {seen}")

    if symmetry == "symmetric":
        off = rows != cols
        rows, cols, vals = (
            np.concatenate([rows, cols[off]]),
            np.concatenate([cols, rows[off]]),
            np.concatenate([vals, vals[off]]),
        )
    return csr_from_coo(nrows, ncols, rows, cols, vals)


def write_matrix_market(M: SparseMatrix, target) -> None:
    """Write ``M`` in coordinate format with 17 significant digits.

    Output always uses the ``real general`` banner and 1-based indices,
    regardless of how the matrix was produced.
    """
    buf = io.StringIO()
    buf.write("%%MatrixMarket matrix coordinate real general\n")
    buf.write(f"{M.nrows} {M.ncols} {M.nnz_stored}\n")
    for i in range(M.nrows):
        cols, vals = M.row(i)
        for j, v in zip(cols, vals):
            buf.write(f"{i + 1} {j + 1} {v:.16e}\n")
    text = buf.getvalue()
    if isinstance(target, (str, Path)):
        Path(target).write_text(text)
    else:
        target.write(text)


def load_matrix_market(path) -> SparseMatrix:
    with open(path, "rb") as fh:
        return parse_matrix_market(fh)


# ---------------------------------------------------------------------------
# LU factorization with partial pivoting
# ---------------------------------------------------------------------------

# Relative magnitude below which a pivot counts as zero.
PIVOT_RTOL = 1e-13

# Above this order the factorization switches from the sparse left-looking
# kernel to LAPACK on a densified copy; pivot choice (first maximum in the
# working column) and the zero-pivot test are the same on both paths.
_DENSE_LU_THRESHOLD = 512


@dataclass(frozen=True)
class LUFactors:
    """Factors of ``P @ M = L @ U`` with row permutation ``perm_rows``.

    ``perm_rows[i]`` is the original row placed at position ``i``. ``L``
    is unit lower triangular with its diagonal stored explicitly and
    ``U`` is upper triangular with nonzero diagonal.
    """

    perm_rows: np.ndarray
    L: SparseMatrix
    U: SparseMatrix

    @property
    def order(self) -> int:
        return self.L.nrows


def _columns_of(M: SparseMatrix):
    """Per-column (row indices, values) of ``M``."""
    counts = np.diff(M.row_offsets)
    row_ids = np.repeat(np.arange(M.nrows, dtype=np.int64), counts)
    order = np.lexsort((row_ids, M.col_indices))
    rows = row_ids[order]
    cols = M.col_indices[order]
    vals = M.values[order]
    out = []
    col_counts = np.bincount(cols, minlength=M.ncols)
    pos = 0
    for j in range(M.ncols):
        nxt = pos + col_counts[j]
        out.append((rows[pos:nxt], vals[pos:nxt]))
        pos = nxt
    return out


def _left_looking_lu(M: SparseMatrix, pivot_rtol: float) -> LUFactors:
    n = M.nrows
    col_entries = _columns_of(M)
    pivrow = np.full(n, -1, dtype=np.int64)
    unpivoted = np.ones(n, dtype=bool)
    l_cols: list[tuple[np.ndarray, np.ndarray]] = []
    u_cols: list[tuple[np.ndarray, np.ndarray]] = []
    u_diag = np.empty(n)
    w = np.zeros(n)

    for j in range(n):
        w[:] = 0.0
        rows_j, vals_j = col_entries[j]
        w[rows_j] = vals_j
        for i in range(j):
            alpha = w[pivrow[i]]
            if alpha != 0.0:
                lr, lv = l_cols[i]
                if lr.size:
                    w[lr] -= alpha * lv

        absw = np.abs(w)
        colmax = absw.max() if n else 0.0
        masked = np.where(unpivoted, absw, -1.0)
        r = int(np.argmax(masked))
        pivot = absw[r]
        if colmax == 0.0 or pivot <= pivot_rtol * colmax:
            raise SingularMatrixError(j)

        upos = pivrow[:j]
        uvals = w[upos]
        keep = uvals != 0.0
        u_cols.append((np.flatnonzero(keep).astype(np.int64), uvals[keep]))
        u_diag[j] = w[r]

        pivrow[j] = r
        unpivoted[r] = False
        sub = unpivoted & (w != 0.0)
        sub_rows = np.flatnonzero(sub)
        l_cols.append((sub_rows, w[sub_rows] / w[r]))

    pinv = np.empty(n, dtype=np.int64)
    pinv[pivrow] = np.arange(n, dtype=np.int64)

    li, lj, lv = [np.arange(n, dtype=np.int64)], [np.arange(n, dtype=np.int64)], [np.ones(n)]
    for j in range(n):
        rows, mult = l_cols[j]
        if rows.size:
            li.append(pinv[rows])
            lj.append(np.full(rows.size, j, np.int64))
            lv.append(mult)
    ui, uj, uv = [np.arange(n, dtype=np.int64)], [np.arange(n, dtype=np.int64)], [u_diag]
    for j in range(n):
        pos, vals = u_cols[j]
        if pos.size:
            ui.append(pos)
            uj.append(np.full(pos.size, j, np.int64))
            uv.append(vals)

    L = csr_from_coo(n, n, np.concatenate(li), np.concatenate(lj), np.concatenate(lv))
    U = csr_from_coo(n, n, np.concatenate(ui), np.concatenate(uj), np.concatenate(uv))
    return LUFactors(pivrow, L, U)


def _dense_lu(M: SparseMatrix, pivot_rtol: float) -> LUFactors:
    n = M.nrows
    dense = M.to_dense()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        lu, piv = scipy.linalg.lu_factor(dense, check_finite=False)
    perm = np.arange(n, dtype=np.int64)
    for i, p in enumerate(piv):
        perm[i], perm[p] = perm[p], perm[i]

    absdiag = np.abs(np.diag(lu))
    abs_u = np.abs(np.triu(lu))
    abs_l = np.abs(np.tril(lu, -1))
    # working-column magnitude at pivot time, reconstructed from the factors
    colmax = np.maximum(abs_u.max(axis=0), abs_l.max(axis=0) * absdiag)
    bad = (colmax == 0.0) | (absdiag <= pivot_rtol * colmax)
    if bad.any():
        raise SingularMatrixError(int(np.flatnonzero(bad)[0]))

    L = csr_from_dense(np.tril(lu, -1) + np.eye(n))
    U = csr_from_dense(np.triu(lu))
    return LUFactors(perm, L, U)


def sparse_lu(M: SparseMatrix, pivot_rtol: float = PIVOT_RTOL) -> LUFactors:
    """Factor a square matrix as ``P @ M = L @ U``.

    Partial pivoting picks the first entry of maximum magnitude in the
    working column; a pivot no larger than ``pivot_rtol`` times the
    column maximum raises :class:`SingularMatrixError` with the failing
    column index.
    """
    if M.nrows != M.ncols:
        raise ValueError("LU factorization requires a square matrix")
    if M.nrows == 0:
        empty = csr_from_dense(np.zeros((0, 0)))
        return LUFactors(np.zeros(0, np.int64), empty, empty)
    if M.nrows <= _DENSE_LU_THRESHOLD:
        return _left_looking_lu(M, pivot_rtol)
    return _dense_lu(M, pivot_rtol)


def lu_solve(F: LUFactors, rhs) -> np.ndarray:
    """Solve ``M @ x = rhs`` via forward then backward substitution."""
    rhs = np.asarray(rhs, dtype=np.float64)
    n = F.order
    if rhs.shape != (n,):
        raise ValueError(f"rhs length {rhs.shape} does not match order {n}")
    y = rhs[F.perm_rows].copy()
    L, U = F.L, F.U
    for i in range(n):
        s, e = L.row_offsets[i], L.row_offsets[i + 1]
        if e - s > 1:
            # diagonal 1.0 is the last entry of the row
            cols = L.col_indices[s:e - 1]
            y[i] -= L.values[s:e - 1] @ y[cols]
    x = y
    for i in range(n - 1, -1, -1):
        s, e = U.row_offsets[i], U.row_offsets[i + 1]
        if e - s > 1:
            cols = U.col_indices[s + 1:e]
            x[i] -= U.values[s + 1:e] @ x[cols]
        x[i] /= U.values[s]
    return x
