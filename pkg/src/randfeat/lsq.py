"""Design-matrix assembly and the normal-equations solver.

The solver forms ``G^T G`` explicitly and factors it with a blocked
right-looking Cholesky decomposition, then runs forward and backward
substitution. Diagonal blocks and triangular blocks are processed with plain
loops; only the trailing updates go through matrix products.

Every stage books elementary operations into an :class:`OperationCount`:

* drawing ``N`` parameters and ``J`` data points: ``N + J`` units,
* assembling ``G`` (``rows x cols``): ``2 rows cols`` units,
* assembling the right-hand side: ``2 rows`` units,
* Gram matrix plus factorization: ``rows cols^2 / 2 + cols^3 / 6`` units.

These are the dominant terms. ``G^T Z`` and the two triangular solves are
booked separately as ``remainder`` (``2 rows cols + 2 cols^2`` units).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .features import (
    FeatureFamily,
    count_multi_indices,
    count_multi_indices_geometric,
    enumerate_multi_indices,
)

log = logging.getLogger(__name__)

JITTER_SCALE = 1e-10
BLOCK = 64


class RankDeficient(np.linalg.LinAlgError):
    """The Gram matrix is not numerically positive definite."""


@dataclass
class OperationCount:
    dominant: Fraction = Fraction(0)
    remainder: Fraction = Fraction(0)
    stages: dict = field(default_factory=dict)
    jitter: float = 0.0

    def add(self, stage: str, units, remainder: bool = False):
        units = Fraction(units)
        if units < 0:
            raise ValueError("operation counts are non-negative")
        if remainder:
            self.remainder += units
        else:
            self.dominant += units
        self.stages[stage] = self.stages.get(stage, Fraction(0)) + units

    @property
    def total(self) -> Fraction:
        return self.dominant + self.remainder

    def merge(self, other: "OperationCount") -> "OperationCount":
        out = OperationCount(self.dominant + other.dominant, self.remainder + other.remainder)
        for src in (self.stages, other.stages):
            for k, v in src.items():
                out.stages[k] = out.stages.get(k, Fraction(0)) + v
        out.jitter = max(self.jitter, other.jitter)
        return out

    def to_dict(self) -> dict:
        return {
            "dominant": str(self.dominant),
            "remainder": str(self.remainder),
            "stages": {k: str(v) for k, v in self.stages.items()},
            "jitter": self.jitter,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "OperationCount":
        out = cls(Fraction(data["dominant"]), Fraction(data["remainder"]))
        out.stages = {k: Fraction(v) for k, v in data.get("stages", {}).items()}
        out.jitter = float(data.get("jitter", 0.0))
        return out


@dataclass
class DesignMatrix:
    """Dense design matrix with documented row and column layouts.

    Rows run over ``(j, alpha, i)`` with ``i`` fastest, then ``alpha`` (in the
    order of :func:`enumerate_multi_indices`), then ``j``. Columns run over
    ``(l, n)`` with ``n`` fastest. For the shared neuron layout there is no
    ``i`` in the rows and no ``l`` in the columns.
    """

    matrix: np.ndarray
    alphas: list
    n_points: int
    d: int
    e: int
    n_features: int
    ledger: OperationCount = field(default_factory=OperationCount)

    @property
    def rows(self) -> int:
        return self.matrix.shape[0]

    @property
    def cols(self) -> int:
        return self.matrix.shape[1]

    def row_index(self, j: int, a: int, i: int = 0) -> int:
        return (j * len(self.alphas) + a) * self.d + i

    def col_index(self, l: int, n: int) -> int:
        return l * self.n_features + n

    def row_label(self, r: int) -> tuple:
        j, rest = divmod(r, len(self.alphas) * self.d)
        a, i = divmod(rest, self.d)
        return j, self.alphas[a], i

    def col_label(self, c: int) -> tuple:
        return divmod(c, self.n_features)


def derivative_weights(m: int, k: int, rule="uniform") -> dict:
    """``c_alpha`` for every ``|alpha| <= k``.

    ``rule`` is ``"uniform"`` (all ones), ``"order_scaled"`` (``m^-|alpha|``),
    or an explicit mapping from multi-index to a positive weight.
    """
    alphas = enumerate_multi_indices(m, k)
    if isinstance(rule, dict):
        c = {tuple(a): float(rule[tuple(a)]) for a in alphas}
    elif rule == "uniform":
        c = {a: 1.0 for a in alphas}
    elif rule == "order_scaled":
        c = {a: float(m) ** (-sum(a)) for a in alphas}
    else:
        raise ValueError(f"unknown derivative weight rule {rule!r}")
    if any(v <= 0 for v in c.values()):
        raise ValueError("derivative weights must be positive")
    return c


def assemble_design_matrix(
    family: FeatureFamily,
    params: np.ndarray,
    points: np.ndarray,
    k: int,
    c: dict | None = None,
    shared: bool = False,
    ledger: OperationCount | None = None,
) -> DesignMatrix:
    """Stack ``c_alpha d^alpha g_{l,i}(theta_n)(V_j)`` into a matrix.

    With ``shared=True`` (neuron families only) the output index is dropped and
    the ``(J |alpha-set|) x N`` matrix shared by all outputs is returned.
    """
    family.check_order(k)
    points = np.atleast_2d(np.asarray(points, dtype=float))
    params = np.atleast_2d(np.asarray(params, dtype=float))
    m = family.m
    alphas = enumerate_multi_indices(m, k)
    c = derivative_weights(m, k) if c is None else c
    J, N = points.shape[0], params.shape[0]
    ledger = OperationCount() if ledger is None else ledger

    if shared:
        if not hasattr(family, "scalar_tensor"):
            raise ValueError("shared layout needs a neuron family")
        G = np.empty((J, len(alphas), N))
        for ai, a in enumerate(alphas):
            G[:, ai, :] = c[a] * family.scalar_tensor(params, points, a)
        G = G.reshape(J * len(alphas), N)
        d, e = 1, 1
    else:
        d, e = family.d, family.e
        dtype = complex if family.is_complex else float
        G = np.empty((J, len(alphas), d, e, N), dtype=dtype)
        for ai, a in enumerate(alphas):
            G[:, ai] = c[a] * family.tensor(params, points, a)
        G = G.reshape(J * len(alphas) * d, e * N)
    ledger.add("assembly", 2 * G.shape[0] * G.shape[1])
    return DesignMatrix(G, alphas, J, d, e, N, ledger)


def target_vector(target, points, alphas, c, d: int) -> np.ndarray:
    """``Z_{(j, alpha, i)} = c_alpha d^alpha f_i(V_j)`` in the design-matrix row order."""
    points = np.atleast_2d(points)
    blocks = []
    for a in alphas:
        vals = np.asarray(target(points, a))
        vals = vals.reshape(points.shape[0], d)
        blocks.append(c[a] * vals)
    Z = np.stack(blocks, axis=1)
    return Z.reshape(-1)


# --- Cholesky and triangular solves ----------------------------------------------


def _chol_unblocked(A: np.ndarray, tol: np.ndarray) -> np.ndarray:
    n = A.shape[0]
    L = np.zeros_like(A)
    for k in range(n):
        row = L[k, :k]
        piv = A[k, k] - row @ row
        if not piv > tol[k]:
            raise RankDeficient(f"non-positive pivot {piv:.3e} at column {k}")
        L[k, k] = np.sqrt(piv)
        if k + 1 < n:
            L[k + 1 :, k] = (A[k + 1 :, k] - L[k + 1 :, :k] @ row) / L[k, k]
    return L


def cholesky(A: np.ndarray, block: int = BLOCK) -> np.ndarray:
    """Lower-triangular ``L`` with ``L L^T = A``.

    Raises :class:`RankDeficient` when the pivot of column ``k`` falls below
    ``n * eps * A[k, k]``, the rounding level of that pivot.
    """
    A = np.array(A, dtype=float, copy=True)
    n = A.shape[0]
    if A.shape != (n, n):
        raise ValueError("matrix must be square")
    tol = n * np.finfo(float).eps * np.abs(np.diag(A))
    L = np.zeros_like(A)
    for j0 in range(0, n, block):
        j1 = min(j0 + block, n)
        try:
            L11 = _chol_unblocked(A[j0:j1, j0:j1], tol[j0:j1])
        except RankDeficient as err:
            raise RankDeficient(f"block at {j0}: {err}") from None
        L[j0:j1, j0:j1] = L11
        if j1 < n:
            # L21 = A21 L11^{-T}
            L21 = forward_substitution(L11, A[j1:, j0:j1].T).T
            L[j1:, j0:j1] = L21
            A[j1:, j1:] -= L21 @ L21.T
    return L


def forward_substitution(L: np.ndarray, B: np.ndarray, block: int = BLOCK) -> np.ndarray:
    """Solve ``L X = B`` for lower-triangular ``L``."""
    B = np.asarray(B, dtype=float)
    vec = B.ndim == 1
    X = np.array(B.reshape(B.shape[0], -1), dtype=float, copy=True)
    n = L.shape[0]
    for i0 in range(0, n, block):
        i1 = min(i0 + block, n)
        if i0:
            X[i0:i1] -= L[i0:i1, :i0] @ X[:i0]
        for i in range(i0, i1):
            if i > i0:
                X[i] -= L[i, i0:i] @ X[i0:i]
            X[i] /= L[i, i]
    return X[:, 0] if vec else X


def backward_substitution(U: np.ndarray, B: np.ndarray, block: int = BLOCK) -> np.ndarray:
    """Solve ``U X = B`` for upper-triangular ``U``."""
    B = np.asarray(B, dtype=float)
    vec = B.ndim == 1
    X = np.array(B.reshape(B.shape[0], -1), dtype=float, copy=True)
    n = U.shape[0]
    starts = list(range(0, n, block))
    for i0 in reversed(starts):
        i1 = min(i0 + block, n)
        if i1 < n:
            X[i0:i1] -= U[i0:i1, i1:] @ X[i1:]
        for i in range(i1 - 1, i0 - 1, -1):
            if i + 1 < i1:
                X[i] -= U[i, i + 1 : i1] @ X[i + 1 : i1]
            X[i] /= U[i, i]
    return X[:, 0] if vec else X


@dataclass
class GramFactor:
    """Cholesky factor of ``G^T G (+ jitter I)`` ready for repeated solves."""

    L: np.ndarray
    jitter: float
    rows: int

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        return backward_substitution(self.L.T, forward_substitution(self.L, rhs))


def _as_real_system(G: np.ndarray, Z: np.ndarray):
    # complex least squares as a stacked real problem in (Re y, Im y)
    Gr = np.block([[G.real, -G.imag], [G.imag, G.real]])
    Zc = np.asarray(Z, dtype=complex)
    Zr = np.concatenate([Zc.real, Zc.imag], axis=0)
    return Gr, Zr


def factor_gram(G: np.ndarray, ledger: OperationCount | None = None) -> GramFactor:
    """Form ``G^T G`` and factor it; one jittered retry on rank deficiency."""
    rows, cols = G.shape
    A = G.T @ G
    jitter = 0.0
    try:
        L = cholesky(A)
    except RankDeficient as err:
        jitter = JITTER_SCALE * float(np.trace(A)) / cols
        log.warning("Gram matrix %dx%d rank deficient (%s); retrying with jitter %.3e",
                    cols, cols, err, jitter)
        try:
            L = cholesky(A + jitter * np.eye(cols))
        except RankDeficient as err2:
            raise RankDeficient(
                f"jittered factorization failed: cols={cols}, rows={rows}, "
                f"jitter={jitter:.3e}, trace={np.trace(A):.3e}: {err2}"
            ) from None
    if ledger is not None:
        book_factorization(ledger, rows, cols, jitter)
    return GramFactor(L, jitter, rows)


def book_factorization(ledger: OperationCount, rows: int, cols: int, jitter: float = 0.0):
    """Gram matrix plus Cholesky: ``rows cols^2 / 2 + cols^3 / 6`` units."""
    ledger.add("factorization", Fraction(rows * cols * cols, 2) + Fraction(cols**3, 6))
    ledger.jitter = max(ledger.jitter, jitter)


def solve_normal_equations(G, Z, ledger: OperationCount | None = None) -> np.ndarray:
    """Least-squares readout through ``G^T G y = G^T Z``.

    ``G`` may be a :class:`DesignMatrix` (whose ledger is then used) or an
    array; complex systems are solved as stacked real systems and the complex
    solution is returned. ``Z`` may hold several right-hand sides as columns.
    """
    if isinstance(G, DesignMatrix):
        ledger = G.ledger if ledger is None else ledger
        G = G.matrix
    G = np.asarray(G)
    Z = np.asarray(Z)
    if Z.shape[0] != G.shape[0]:
        raise ValueError(f"target has {Z.shape[0]} rows, design matrix has {G.shape[0]}")
    # units are field operations, so a complex system is booked at its own size
    rows, cols = G.shape
    nrhs = 1 if Z.ndim == 1 else Z.shape[1]
    is_complex = np.iscomplexobj(G) or np.iscomplexobj(Z)
    if is_complex:
        G, Z = _as_real_system(G, Z)
    fac = factor_gram(G)
    rhs = G.T @ Z
    y = fac.solve(rhs)
    if ledger is not None:
        book_factorization(ledger, rows, cols, fac.jitter)
        ledger.add("normal_rhs_and_substitution", nrhs * (2 * rows * cols + 2 * cols * cols),
                   remainder=True)
    if is_complex:
        half = y.shape[0] // 2
        y = y[:half] + 1j * y[half:]
    return y


def operation_budget(J: int, N: int, m: int, k: int, d: int, e: int,
                     index_count: str = "exact") -> Fraction:
    """Closed-form unit count of the least-squares training pipeline.

    ``N + J + 2 J A d e N + 2 J A d + (J A d)(e N)^2 / 2 + (e N)^3 / 6`` where
    ``A`` is the number of multi-indices: the exact ``C(m+k, k)`` by default,
    or ``sum_j m^j`` with ``index_count="geometric"``.
    """
    if min(J, N, m, d, e) < 1 or k < 0:
        raise ValueError("sizes must be positive")
    if index_count == "exact":
        A = count_multi_indices(m, k)
    elif index_count == "geometric":
        A = count_multi_indices_geometric(m, k)
    else:
        raise ValueError(f"unknown index_count {index_count!r}")
    rows = J * A * d
    cols = e * N
    return (Fraction(N + J) + 2 * rows * cols + 2 * rows
            + Fraction(rows * cols * cols, 2) + Fraction(cols**3, 6))


def complexity_scale(J: int, N: int, m: int, k: int, d: int, e: int) -> float:
    """``J m^k d (eN)^2 + (eN)^3``, the headline complexity order."""
    return J * m**k * d * (e * N) ** 2 + (e * N) ** 3
