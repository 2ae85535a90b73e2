"""Second-class constraints and the induced bracket on the ambient chart.

Given a bivector and constraint functions phi^1..phi^m, the matrix
C^{ab} = {phi^a, phi^b} must be invertible (second class); the corrected
bracket

    {f, g}' = {f, g} - {f, phi^a} C_ab {phi^b, g}

has the constraints as Casimir functions. Its bivector coincides, fiber by
fiber, with the stretch of graph(Pi) along the annihilator covectors
(0, d phi^a); `equiv_stretch_check` verifies the two code paths against each
other as subspaces.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .chart import ChartModel
from .errors import NumericalError, PreconditionError
from .expressions import (ScalarExpr, ZERO, add, eval_jet_grid, evaluate_grid,
                          is_constant_expr, mul, num, sub)
from .fields import TensorField, bivector_field, bivector_jacobiator
from .linpair import (Subspace, max_principal_angle, stretch_point,
                      subspace_sum)


class SingularCError(NumericalError):
    """Constraint bracket matrix not invertible: not second class here."""

    def __init__(self, condition_number: float, where=None):
        self.condition_number = condition_number
        self.where = where
        at = "" if where is None else f" at {np.asarray(where).round(6).tolist()}"
        super().__init__(
            f"constraint matrix is singular{at} (condition number {condition_number:.3e})")


@dataclass(frozen=True)
class ConstraintSet:
    """Constraint functions and the level defining the submanifold."""

    constraints: tuple[ScalarExpr, ...]
    level: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "constraints", tuple(self.constraints))
        object.__setattr__(self, "level", tuple(float(v) for v in self.level))
        if len(self.constraints) != len(self.level):
            raise PreconditionError("need one level value per constraint")

    @property
    def size(self) -> int:
        return len(self.constraints)

    def gradients(self, points: np.ndarray) -> np.ndarray:
        """d phi over sample points: (P, m, n)."""
        points = np.asarray(points, dtype=float)
        out = np.zeros((points.shape[0], self.size, points.shape[1]))
        for a, phi in enumerate(self.constraints):
            _, g = eval_jet_grid(phi, points)
            out[:, a, :] = g
        return out

    def values(self, points: np.ndarray) -> np.ndarray:
        """phi - level over sample points: (P, m)."""
        points = np.asarray(points, dtype=float)
        out = np.zeros((points.shape[0], self.size))
        for a, phi in enumerate(self.constraints):
            out[:, a] = evaluate_grid(phi, points) - self.level[a]
        return out


def c_matrix(pi: TensorField, phi: ConstraintSet, point,
             rank_tol: float = 1e-9) -> tuple[np.ndarray, np.ndarray]:
    """C^{ab} = Pi(d phi^a, d phi^b) and its inverse at a point."""
    point = np.asarray(point, dtype=float)
    m = phi.size
    if m == 0:
        empty = np.zeros((0, 0))
        return empty, empty
    grads = phi.gradients(point[None, :])[0]
    pi_vals = pi.values(point[None, :])[0]
    c = grads @ pi_vals @ grads.T
    if m % 2 == 1:
        raise SingularCError(np.inf, point)
    sing = np.linalg.svd(c, compute_uv=False)
    if sing[0] == 0.0 or sing[-1] <= rank_tol * sing[0]:
        cond = np.inf if sing[-1] == 0.0 else float(sing[0] / sing[-1])
        raise SingularCError(cond, point)
    return c, np.linalg.inv(c)


def poisson_bracket_expr(pi: TensorField, f: ScalarExpr, g: ScalarExpr) -> ScalarExpr:
    from .fields import poisson_bracket_expr as pbe
    return pbe(pi, f, g)


@dataclass(frozen=True)
class DiracBivector:
    """The corrected bivector, as expressions when C is constant on the grid,
    and always evaluable per point."""

    base: TensorField
    phi: ConstraintSet
    tensor_field: TensorField | None
    constant_c: bool
    _at: Callable[[np.ndarray], np.ndarray]

    @property
    def dimension(self) -> int:
        return self.base.dimension

    def at(self, point) -> np.ndarray:
        """Bivector matrix at a point."""
        return self._at(np.asarray(point, dtype=float))

    def values(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        if self.tensor_field is not None:
            return self.tensor_field.values(points)
        return np.stack([self.at(p) for p in points])

    def bracket_values(self, f: ScalarExpr, g: ScalarExpr, points: np.ndarray) -> np.ndarray:
        """{f, g} under the corrected bracket, evaluated over points."""
        points = np.asarray(points, dtype=float)
        _, df = eval_jet_grid(f, points)
        _, dg = eval_jet_grid(g, points)
        piv = self.values(points)
        return np.einsum("pi,pij,pj->p", df, piv, dg)


def dirac_bivector(pi: TensorField, phi: ConstraintSet, chart: ChartModel) -> DiracBivector:
    """Assemble the corrected bivector for a second-class constraint set.

    Components are expressions whenever the inverse C entries are constant
    over the working grid (then the whole correction is polynomial in the
    inputs); otherwise C is inverted numerically at each requested point.
    """
    n = chart.dimension
    if pi.kind != "bivector" or pi.dimension != n:
        raise PreconditionError("pi must be a bivector over the chart")
    rank_tol = chart.tolerances.rank_tolerance
    if phi.size == 0:
        return DiracBivector(pi, phi, pi, True,
                             lambda p: pi.values(p[None, :])[0])

    points = chart.sample_grid
    cs = _c_values(pi, phi, points, rank_tol)

    c0 = cs[0]
    spread = float(np.max(np.abs(cs - c0[None, :, :])))
    scale = max(float(np.max(np.abs(cs))), 1e-300)
    constant = spread <= 1e-9 * scale

    def at(point: np.ndarray) -> np.ndarray:
        c, cinv = c_matrix(pi, phi, point, rank_tol)
        grads = phi.gradients(point[None, :])[0]
        pivals = pi.values(point[None, :])[0]
        u = pivals @ grads.T  # u[:, a] = {x^., phi^a}
        return pivals + u @ cinv @ u.T

    field = None
    if constant:
        cinv0 = np.linalg.inv(c0)
        # {x^i, phi^a} as expressions
        u_exprs = [[_row_bracket(pi, phi.constraints[a], i, n) for a in range(phi.size)]
                   for i in range(n)]
        comps = {}
        for i in range(n):
            for j in range(i + 1, n):
                acc = pi.component(i, j)
                for a in range(phi.size):
                    for b in range(phi.size):
                        if cinv0[a, b] == 0.0:
                            continue
                        acc = add(acc, mul(num(cinv0[a, b]),
                                           mul(u_exprs[i][a], u_exprs[j][b])))
                comps[(i, j)] = acc
        field = bivector_field(n, comps)

    return DiracBivector(pi, phi, field, constant, at)


def _c_values(pi: TensorField, phi: ConstraintSet, points: np.ndarray,
              rank_tol: float) -> np.ndarray:
    """C matrices over points, raising where not second class."""
    grads = phi.gradients(points)
    pivals = pi.values(points)
    cs = np.einsum("pai,pij,pbj->pab", grads, pivals, grads)
    m = phi.size
    if m % 2 == 1:
        raise SingularCError(np.inf, points[0])
    sing = np.linalg.svd(cs, compute_uv=False)
    bad = (sing[:, -1] <= rank_tol * np.maximum(sing[:, 0], 1e-300))
    if np.any(bad):
        p = int(np.argmax(bad))
        s = sing[p]
        cond = np.inf if s[-1] == 0.0 else float(s[0] / s[-1])
        raise SingularCError(cond, points[p])
    return cs


def _row_bracket(pi: TensorField, phi_a: ScalarExpr, i: int, n: int) -> ScalarExpr:
    """{x^i, phi^a} = Pi^{ik} d_k phi^a as an expression."""
    from .expressions import diff
    acc = ZERO
    for k in range(n):
        acc = add(acc, mul(pi.component(i, k), diff(phi_a, k)))
    return acc


def casimir_residual(db: DiracBivector, g_exprs: Sequence[ScalarExpr],
                     points: np.ndarray) -> float:
    """Max |{phi^a, g}'| over the constraints, test functions and points."""
    worst = 0.0
    for phi_a in db.phi.constraints:
        for g in g_exprs:
            vals = db.bracket_values(phi_a, g, points)
            worst = max(worst, float(np.max(np.abs(vals))))
    return worst


def dirac_jacobi_residual(db: DiracBivector, points: np.ndarray) -> float:
    """Jacobi residual of the corrected bivector on coordinate triples.

    Needs expression components (constant C); for position-dependent C the
    equivalence with the stretch is the certified route instead.
    """
    if db.tensor_field is None:
        raise PreconditionError(
            "Jacobi residual needs expression components (C not constant)")
    return bivector_jacobiator(db.tensor_field, points)


# ---------------------------------------------------------------------------
# submanifold geometry at a point


def _tangent_and_annihilator(phi: ConstraintSet, point, rank_tol: float):
    grads = phi.gradients(np.asarray(point, dtype=float)[None, :])[0]  # (m, n)
    m, n = grads.shape
    if m:
        sing = np.linalg.svd(grads, compute_uv=False)
        if sing[-1] <= rank_tol * max(sing[0], 1e-300):
            raise PreconditionError(
                "constraint differentials are rank-deficient at the point")
    _, _, vh = np.linalg.svd(grads, full_matrices=True) if m else (None, None, np.eye(n))
    tn = vh[m:].T  # (n, n-m) basis of ker(d phi)
    return grads, tn


def check_cosymplectic(pi: TensorField, phi: ConstraintSet, point,
                       rank_tol: float = 1e-9) -> bool:
    """Does Pi^sharp(TN_ann) + TN split the ambient tangent space directly?"""
    point = np.asarray(point, dtype=float)
    n = pi.dimension
    if phi.size == 0:
        return True
    grads, tn = _tangent_and_annihilator(phi, point, rank_tol)
    pivals = pi.values(point[None, :])[0]
    sharp = grads @ pivals  # row a = Pi^sharp(d phi^a)
    stacked = np.hstack([sharp.T, tn])
    if stacked.shape[1] != n:
        return False
    sing = np.linalg.svd(stacked, compute_uv=False)
    return bool(sing[-1] > rank_tol * max(sing[0], 1e-300))


def check_poisson_dirac(pi: TensorField, r_frame: Sequence[TensorField], point,
                        rank_tol: float = 1e-9) -> bool:
    """Does Pi^sharp(R_ann) meet R only in zero?"""
    point = np.asarray(point, dtype=float)
    n = pi.dimension
    rmat = np.stack([v.values(point[None, :])[0] for v in r_frame], axis=1)  # (n, k)
    u, s, _ = np.linalg.svd(rmat, full_matrices=True)
    r = int(np.sum(s > rank_tol * max(s[0] if s.size else 0.0, 1e-300)))
    r_basis = u[:, :r]
    ann = u[:, r:]  # covectors annihilating R (Euclidean identification)
    pivals = pi.values(point[None, :])[0]
    sharp = ann.T @ pivals  # row = Pi^sharp(eta)
    sh_rank = np.linalg.matrix_rank(sharp, tol=1e-9) if sharp.size else 0
    stacked = np.hstack([sharp.T, r_basis])
    total = np.linalg.matrix_rank(stacked, tol=1e-9) if stacked.size else 0
    return bool(total == sh_rank + r)


# ---------------------------------------------------------------------------
# level-set sampling


def level_set_grid(phi: ConstraintSet, chart: ChartModel, count: int | None = None,
                   seed: int | None = None, tol: float = 1e-10,
                   max_iter: int = 50) -> np.ndarray:
    """Sample points on the level set by damped Gauss-Newton from box seeds."""
    if phi.size == 0:
        return chart.sample_grid
    count = count if count is not None else chart.sample_grid.shape[0]
    from .chart import default_grid
    seeds = default_grid(chart.dimension, chart.box, 4 * count,
                         chart.seed if seed is None else seed)
    accepted = []
    lo, hi = chart.box[:, 0], chart.box[:, 1]
    for x in seeds:
        x = x.copy()
        converged = False
        for _ in range(max_iter):
            vals = phi.values(x[None, :])[0]
            if float(np.max(np.abs(vals))) < tol:
                converged = True
                break
            jac = phi.gradients(x[None, :])[0]
            try:
                step = np.linalg.lstsq(jac, vals, rcond=None)[0]
            except np.linalg.LinAlgError:
                break
            damp = 1.0
            base = float(np.linalg.norm(vals))
            while damp > 1e-6:
                trial = x - damp * step
                if float(np.linalg.norm(phi.values(trial[None, :])[0])) < base:
                    x = trial
                    break
                damp *= 0.5
            else:
                break
        if converged and np.all(x >= lo - 1e-9) and np.all(x <= hi + 1e-9):
            accepted.append(x)
            if len(accepted) == count:
                break
    if not accepted:
        raise NumericalError("no level-set points found inside the box")
    return np.array(accepted)


# ---------------------------------------------------------------------------
# equivalence with stretching


@dataclass(frozen=True)
class EquivStretchReport:
    """Fiberwise comparison of the corrected-bivector graph against the
    stretch of graph(Pi) along the constraint annihilator covectors."""

    max_angle: float
    tolerance: float
    all_graphs: bool
    non_graph_points: tuple[int, ...]
    n_points: int
    notes: tuple[str, ...]

    @property
    def passed(self) -> bool:
        return self.all_graphs and self.max_angle <= self.tolerance

    def lines(self) -> list[str]:
        out = [f"max principal angle: {self.max_angle:.3e} (tol {self.tolerance:.1e})"]
        if not self.all_graphs:
            out.append(f"stretch fails to be a bivector graph at points {list(self.non_graph_points)}")
        out.extend(f"note: {s}" for s in self.notes)
        return out


def annihilator_subspace(phi: ConstraintSet, point, n: int, tol: float) -> Subspace:
    """Span of (0, d phi^a) at a point."""
    if phi.size == 0:
        return Subspace.zero(2 * n, tol)
    grads = phi.gradients(np.asarray(point, dtype=float)[None, :])[0]
    mat = np.vstack([np.zeros((n, phi.size)), grads.T])
    return Subspace.from_matrix(mat, tol)


def graph_subspace(matrix: np.ndarray, tol: float) -> Subspace:
    from .linpair import graph_of_bivector_matrix
    return graph_of_bivector_matrix(matrix, tol)


def is_graph_of_bivector(sub: Subspace, tol: float) -> bool:
    """Lagrangian subspace is a bivector graph iff it sums with TM to the
    whole fiber."""
    n = sub.fiber_dim
    tangent = Subspace(2 * n, np.vstack([np.eye(n), np.zeros((n, n))]), tol)
    return subspace_sum(sub, tangent).rank == 2 * n


def equiv_stretch_check(pi: TensorField, phi: ConstraintSet,
                        chart: ChartModel, angle_tol: float = 1e-8) -> EquivStretchReport:
    """Compare graph(corrected bivector) with the pointwise stretch along
    the constraint annihilator, as subspaces, over the chart grid."""
    n = chart.dimension
    tol = chart.tolerances.rank_tolerance
    points = chart.sample_grid
    notes = ("level-set statements are sampled leaf-by-leaf on the grid, "
             "not certified foliation-wide",)

    db = dirac_bivector(pi, phi, chart) if phi.size else None
    worst = 0.0
    non_graph = []
    for idx, x in enumerate(points):
        d = graph_subspace(pi.values(x[None, :])[0], tol)
        s = annihilator_subspace(phi, x, n, tol)
        ds = stretch_point(d, s)
        if not is_graph_of_bivector(ds, tol):
            non_graph.append(idx)
            continue
        if phi.size == 0:
            target = d
        else:
            target = graph_subspace(db.at(x), tol)
        worst = max(worst, max_principal_angle(ds, target))
    return EquivStretchReport(worst, angle_tol, not non_graph, tuple(non_graph),
                              points.shape[0], notes)


def recombined(phi: ConstraintSet, a: np.ndarray) -> ConstraintSet:
    """Constraint set psi = A phi for a constant invertible matrix A."""
    a = np.asarray(a, dtype=float)
    m = phi.size
    if a.shape != (m, m) or abs(np.linalg.det(a)) < 1e-12:
        raise PreconditionError("recombination matrix must be invertible m x m")
    new_constraints = []
    new_level = a @ np.array(phi.level)
    for row in a:
        acc = ZERO
        for coef, c in zip(row, phi.constraints):
            acc = add(acc, mul(num(coef), c))
        new_constraints.append(acc)
    return ConstraintSet(tuple(new_constraints), tuple(new_level))
