"""Small dense LP solver plus two brute-force oracles used to check it.

`solve` is a two-phase tableau simplex with Bland's rule. The instances in this
package have a few dozen variables at most, so the tableau is kept dense and
every pivot is a full numpy row operation.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

FEAS_TOL = 1e-9
_PIVOT_TOL = 1e-11
_COST_TOL = 1e-11
_MAX_PIVOTS = 100_000

RELATIONS = ("<=", "=", ">=")


class LPError(ValueError):
    pass


class DimensionError(LPError):
    pass


class NumericError(LPError):
    pass


@dataclass(frozen=True)
class LinearProgram:
    """min/max c.x subject to rows (a, rel, b) and per-variable (lo, hi) bounds.

    Bounds default to (0, inf). Use None or +-inf for an open side.
    """

    objective: Sequence[float]
    constraints: Sequence[tuple] = ()
    bounds: Sequence[tuple] | None = None
    sense: str = "min"


@dataclass
class LpSolution:
    status: str
    value: float
    witness: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


def _check(lp: LinearProgram):
    try:
        c = np.asarray(lp.objective, dtype=float)
    except ValueError as exc:
        raise DimensionError(f"objective is not a flat vector: {exc}") from None
    if c.ndim != 1 or c.size == 0:
        raise DimensionError("objective must be a non-empty 1-d vector")
    n = c.size
    if not np.all(np.isfinite(c)):
        raise NumericError("objective has non-finite coefficients")
    if lp.sense not in ("min", "max"):
        raise LPError(f"unknown sense {lp.sense!r}")
    rows = []
    for k, con in enumerate(lp.constraints):
        if len(con) != 3:
            raise DimensionError(f"constraint {k} is not (coeffs, rel, rhs)")
        a, rel, b = con
        if rel not in RELATIONS:
            raise LPError(f"constraint {k}: unknown relation {rel!r}")
        try:
            a = np.asarray(a, dtype=float)
        except ValueError:
            raise DimensionError(f"constraint {k} is ragged") from None
        if a.shape != (n,):
            raise DimensionError(f"constraint {k} has {a.size} coefficients, objective has {n}")
        b = float(b)
        if not (np.all(np.isfinite(a)) and np.isfinite(b)):
            raise NumericError(f"constraint {k} has non-finite coefficients")
        rows.append((a, rel, b))
    bounds = lp.bounds if lp.bounds is not None else [(0.0, None)] * n
    if len(bounds) != n:
        raise DimensionError(f"{len(bounds)} bounds for {n} variables")
    clean = []
    for j, (lo, hi) in enumerate(bounds):
        lo = -np.inf if lo is None else float(lo)
        hi = np.inf if hi is None else float(hi)
        if np.isnan(lo) or np.isnan(hi) or lo == np.inf or hi == -np.inf:
            raise NumericError(f"bad bounds for variable {j}")
        clean.append((lo, hi))
    return c, rows, clean


def _pivot(T: np.ndarray, row: int, col: int) -> None:
    T[row] /= T[row, col]
    f = T[:, col].copy()
    f[row] = 0.0
    T -= np.outer(f, T[row])
    T[:, col] = 0.0
    T[row, col] = 1.0


def _bland(T: np.ndarray, basis: np.ndarray, ncols: int) -> str:
    """Minimise over the tableau in place. Last row holds reduced costs."""
    m = T.shape[0] - 1
    for _ in range(_MAX_PIVOTS):
        cost = T[-1, :ncols]
        entering = np.flatnonzero(cost < -_COST_TOL)
        if entering.size == 0:
            return "optimal"
        col = int(entering[0])
        colv = T[:m, col]
        pos = colv > _PIVOT_TOL
        if not pos.any():
            return "unbounded"
        ratios = np.full(m, np.inf)
        ratios[pos] = T[:m, -1][pos] / colv[pos]
        best = ratios.min()
        ties = np.flatnonzero(ratios <= best + 1e-13 * max(1.0, abs(best)))
        row = int(ties[np.argmin(basis[ties])])
        _pivot(T, row, col)
        basis[row] = col
    raise LPError("simplex pivot limit reached")


def _standardize(c, rows, bounds):
    # x_j = offset_j + sum_k M[j, k] x'_k with x' >= 0
    cols = []
    offset = np.zeros(len(bounds))
    extra = []
    for j, (lo, hi) in enumerate(bounds):
        if np.isfinite(lo):
            offset[j] = lo
            cols.append((j, 1.0))
            if np.isfinite(hi):
                extra.append((len(cols) - 1, hi - lo))
        elif np.isfinite(hi):
            offset[j] = hi
            cols.append((j, -1.0))
        else:
            cols.append((j, 1.0))
            cols.append((j, -1.0))
    M = np.zeros((len(bounds), len(cols)))
    for k, (j, s) in enumerate(cols):
        M[j, k] = s
    A, rel, b = [], [], []
    for a, r, rhs in rows:
        A.append(a @ M)
        rel.append(r)
        b.append(rhs - a @ offset)
    for k, ub in extra:
        row = np.zeros(len(cols))
        row[k] = 1.0
        A.append(row)
        rel.append("<=")
        b.append(ub)
    A = np.array(A).reshape(len(A), len(cols))
    return c @ M, c @ offset, A, rel, np.array(b, dtype=float), M, offset


def solve(lp: LinearProgram) -> LpSolution:
    c, rows, bounds = _check(lp)
    sign = 1.0 if lp.sense == "min" else -1.0
    cs, c0, A, rel, b, M, offset = _standardize(sign * c, rows, bounds)
    m, n = A.shape

    A = A.copy()
    rel = list(rel)
    for i in range(m):
        if b[i] < 0:
            A[i] *= -1.0
            b[i] = -b[i]
            rel[i] = {"<=": ">=", ">=": "<=", "=": "="}[rel[i]]

    n_slack = sum(r != "=" for r in rel)
    art_rows = [i for i in range(m) if rel[i] != "<="]
    n_art = len(art_rows)
    width = n + n_slack + n_art
    T = np.zeros((m + 1, width + 1))
    T[:m, :n] = A
    T[:m, -1] = b
    basis = np.zeros(m, dtype=int)
    s = n
    a_col = n + n_slack
    for i in range(m):
        if rel[i] == "<=":
            T[i, s] = 1.0
            basis[i] = s
            s += 1
        elif rel[i] == ">=":
            T[i, s] = -1.0
            s += 1
    for i in art_rows:
        T[i, a_col] = 1.0
        basis[i] = a_col
        a_col += 1

    if n_art:
        T[-1, :] = 0.0
        for i in art_rows:
            T[-1, :] -= T[i, :]
        T[-1, n + n_slack:width] = 0.0
        _bland(T, basis, width)
        if -T[-1, -1] > FEAS_TOL * max(1.0, np.abs(b).max(initial=0.0)):
            return LpSolution("infeasible", float("nan"))
        keep = []
        for i in range(m):
            if basis[i] >= n + n_slack:
                cand = np.flatnonzero(np.abs(T[i, : n + n_slack]) > 1e-9)
                if cand.size:
                    _pivot(T, i, int(cand[0]))
                    basis[i] = int(cand[0])
                    keep.append(i)
            else:
                keep.append(i)
        T = np.vstack([T[keep], T[-1:]])
        basis = basis[keep]
        T = np.delete(T, np.s_[n + n_slack:width], axis=1)
        width = n + n_slack
        m = len(keep)

    cost = np.zeros(width)
    cost[:n] = cs
    T[-1, :] = 0.0
    T[-1, :width] = cost
    for i in range(m):
        cb = cost[basis[i]]
        if cb != 0.0:
            T[-1, :] -= cb * T[i, :]
    status = _bland(T, basis, width)
    if status == "unbounded":
        return LpSolution("unbounded", -np.inf if lp.sense == "min" else np.inf)

    xs = np.zeros(width)
    xs[basis] = np.maximum(T[:m, -1], 0.0)
    x = offset + M @ xs[:n]
    return LpSolution("optimal", float(c @ x), x)


def dual_of_canonical(c, A, b) -> LinearProgram:
    """Dual of max c.x, Ax <= b, x >= 0, i.e. min b.y, A^T y >= c, y >= 0."""
    A = np.asarray(A, dtype=float)
    return LinearProgram(
        objective=np.asarray(b, dtype=float),
        constraints=[(A[:, j], ">=", c[j]) for j in range(A.shape[1])],
        sense="min",
    )


# ---------------------------------------------------------------- oracles


class _Infeasible:
    _inst = None

    def __new__(cls):
        if cls._inst is None:
            cls._inst = super().__new__(cls)
        return cls._inst

    def __repr__(self):
        return "INFEASIBLE"

    def __bool__(self):
        return False


INFEASIBLE = _Infeasible()


def _compositions(n: int, d: int) -> np.ndarray:
    if d == 1:
        return np.array([[n]], dtype=np.int64)
    if d == 2:
        k = np.arange(n + 1, dtype=np.int64)
        return np.column_stack([k, n - k])
    parts = [
        np.column_stack([np.full(len(sub), k, dtype=np.int64), sub])
        for k in range(n + 1)
        for sub in (_compositions(n - k, d - 1),)
    ]
    return np.vstack(parts)


def simplex_grid(dimension: int, step: float) -> np.ndarray:
    """All points of the probability simplex whose coordinates are multiples of step."""
    n = int(round(1.0 / step))
    if n < 1 or abs(n * step - 1.0) > 1e-9:
        raise ValueError(f"1/step must be an integer, got step={step}")
    return _compositions(n, dimension) / n


def grid_oracle(
    objective_fn: Callable[[np.ndarray], np.ndarray],
    feasible_fn: Callable[[np.ndarray], np.ndarray],
    dimension: int,
    step: float,
    blocks: int = 1,
    sense: str = "max",
):
    """Exhaustive search over a product of `blocks` simplex grids.

    Both callables take a batch of points with shape (N, blocks * dimension)
    and return shape (N,) arrays. Returns (best_value, best_point) or INFEASIBLE.
    """
    if dimension > 4:
        raise ValueError("grid oracle supports at most 4 coordinates per block")
    g = simplex_grid(dimension, step)
    sgn = 1.0 if sense == "max" else -1.0
    best_val, best_pt = -np.inf, None
    outer = itertools.product(range(len(g)), repeat=blocks - 1)
    for idx in outer:
        head = np.concatenate([g[i] for i in idx]) if idx else np.zeros(0)
        pts = np.hstack([np.broadcast_to(head, (len(g), head.size)), g])
        ok = np.asarray(feasible_fn(pts), dtype=bool)
        if not ok.any():
            continue
        vals = sgn * np.asarray(objective_fn(pts), dtype=float)
        vals = np.where(ok, vals, -np.inf)
        k = int(np.argmax(vals))
        if vals[k] > best_val:
            best_val, best_pt = vals[k], pts[k].copy()
    if best_pt is None:
        return INFEASIBLE
    return sgn * best_val, best_pt


def vertex_oracle(lp: LinearProgram, chunk: int = 20000):
    """Brute-force optimum over every basic solution of an LP with x >= 0.

    Independent of the simplex code: enumerates all choices of active
    inequality constraints, solves each square system, keeps feasible ones.
    Returns (best_value, best_point) or INFEASIBLE.
    """
    c, rows, bounds = _check(lp)
    n = c.size
    if any(lo != 0.0 or np.isfinite(hi) for lo, hi in bounds):
        raise ValueError("vertex_oracle expects plain x >= 0 bounds")
    E, e, G, h = [], [], [], []
    for a, rel, b in rows:
        if rel == "=":
            E.append(a)
            e.append(b)
        elif rel == "<=":
            G.append(a)
            h.append(b)
        else:
            G.append(-a)
            h.append(-b)
    G += list(-np.eye(n))
    h += [0.0] * n
    E = np.array(E).reshape(len(E), n)
    e = np.array(e, dtype=float)
    G = np.array(G)
    h = np.array(h, dtype=float)
    k = n - len(E)
    if k < 0:
        raise ValueError("more equalities than variables")
    sgn = 1.0 if lp.sense == "min" else -1.0
    best_val, best_pt = np.inf, None
    combos = itertools.combinations(range(len(G)), k)
    while True:
        batch = np.array(list(itertools.islice(combos, chunk)), dtype=np.int64).reshape(-1, k)
        if len(batch) == 0:
            break
        mats = np.concatenate([np.broadcast_to(E, (len(batch),) + E.shape), G[batch]], axis=1)
        rhs = np.concatenate([np.broadcast_to(e, (len(batch), len(e))), h[batch]], axis=1)
        sgn_det, logdet = np.linalg.slogdet(mats)
        good = (sgn_det != 0) & (logdet > np.log(1e-10))
        if not good.any():
            continue
        x = np.linalg.solve(mats[good], rhs[good][..., None])[..., 0]
        ok = np.all(G @ x.T <= h[:, None] + FEAS_TOL, axis=0)
        if len(E):
            ok &= np.all(np.abs(E @ x.T - e[:, None]) <= FEAS_TOL, axis=0)
        if not ok.any():
            continue
        vals = sgn * (x[ok] @ c)
        j = int(np.argmin(vals))
        if vals[j] < best_val:
            best_val, best_pt = vals[j], x[ok][j]
    if best_pt is None:
        return INFEASIBLE
    return sgn * best_val, best_pt
