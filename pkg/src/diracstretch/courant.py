"""The twisted Courant bracket on sections of TM + T*M over a chart.

A Section is a pair of expression fields (vector field, one-form). Brackets
of expression-backed sections are again expression-backed: the bracket
formula

    [(X, xi), (Y, eta)] = ([X, Y], L_X eta - i_Y d xi + i_Y i_X H)

composes under symbolic differentiation, so nested brackets need no finite
differences. For the axiom harness, outer bracket levels are assembled from
exact jets of the inner bracket's components, which evaluates the same
composition without materializing depth-2 trees.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import permutations
from typing import Sequence

import numpy as np

from .chart import ChartModel
from .errors import PreconditionError
from .expressions import (ONE, ScalarExpr, Var, ZERO, add as expr_add, diff,
                          eval_jet_grid, mul, num, powi)
from .fields import (TensorField, exterior_derivative_field,
                     interior_product_field, lie_bracket_field,
                     lie_derivative_one_form_field, one_form_field,
                     vector_field, zero_field)
from .linpair import FiberElement


@dataclass(frozen=True)
class Section:
    """A section (X, xi) of TM + T*M with expression components."""

    vector_field: TensorField
    one_form_field: TensorField

    def __post_init__(self):
        if self.vector_field.kind != "vector":
            raise PreconditionError("first component must be a vector field")
        if self.one_form_field.kind != "one_form":
            raise PreconditionError("second component must be a one-form")
        if self.vector_field.dimension != self.one_form_field.dimension:
            raise PreconditionError("section components live on different charts")

    @property
    def dimension(self) -> int:
        return self.vector_field.dimension

    def at(self, point) -> FiberElement:
        return FiberElement(tuple(self.vector_field.value(point)),
                            tuple(self.one_form_field.value(point)))

    def fiber_values(self, points: np.ndarray) -> np.ndarray:
        """(P, 2n) array of fiber vectors over the sample points."""
        return np.hstack([self.vector_field.values(points),
                          self.one_form_field.values(points)])

    def jets(self, points: np.ndarray) -> "SectionJet":
        xv, xg = self.vector_field.jets(points)
        fv, fg = self.one_form_field.jets(points)
        return SectionJet(xv, xg, fv, fg)

    def scaled(self, factor: ScalarExpr | float) -> "Section":
        return Section(self.vector_field.scaled(factor),
                       self.one_form_field.scaled(factor))

    def __add__(self, other: "Section") -> "Section":
        return Section(self.vector_field + other.vector_field,
                       self.one_form_field + other.one_form_field)


def section_from_components(vector: Sequence[ScalarExpr],
                            form: Sequence[ScalarExpr]) -> Section:
    return Section(vector_field(list(vector)), one_form_field(list(form)))


def zero_section(dimension: int) -> Section:
    return Section(zero_field("vector", dimension), zero_field("one_form", dimension))


@dataclass(frozen=True)
class SectionJet:
    """Component values and first derivatives over sample points.

    Shapes: X (P, n); dX (P, n, n) with dX[p, i, j] = d_j X^i; likewise for
    the covector part.
    """

    x: np.ndarray
    dx: np.ndarray
    xi: np.ndarray
    dxi: np.ndarray

    def fiber(self) -> np.ndarray:
        return np.hstack([self.x, self.xi])


def anchor(e: Section, point) -> np.ndarray:
    """Project to the vector part and evaluate."""
    return e.vector_field.value(point)


def d_operator(f: ScalarExpr, point, dimension: int | None = None) -> FiberElement:
    """The operator D f = half pi^* df, evaluated at a point.

    With the half-normalized pairing, identifying the algebroid with its dual
    sends a covector eta to (0, 2 eta), so D f comes out as (0, df). This is
    the normalization under which [e, e] = D<e, e> holds identically.
    """
    point = np.asarray(point, dtype=float)
    n = dimension if dimension is not None else point.size
    _, grad = eval_jet_grid(f, point[None, :])
    return FiberElement((0.0,) * n, tuple(grad[0]))


def d_operator_section(f: ScalarExpr, dimension: int) -> Section:
    df = [diff(f, i) for i in range(dimension)]
    return Section(zero_field("vector", dimension), one_form_field(df))


def pairing_expr(e1: Section, e2: Section) -> ScalarExpr:
    """<e1, e2> as a scalar expression."""
    acc = ZERO
    for i in range(e1.dimension):
        acc = expr_add(acc, mul(e1.one_form_field.component(i), e2.vector_field.component(i)))
        acc = expr_add(acc, mul(e2.one_form_field.component(i), e1.vector_field.component(i)))
    return mul(num(0.5), acc)


def courant_bracket_section(e1: Section, e2: Section, chart: ChartModel) -> Section:
    """The bracket as a derived expression-backed section."""
    x, xi = e1.vector_field, e1.one_form_field
    y, eta = e2.vector_field, e2.one_form_field
    vec = lie_bracket_field(x, y)
    form = lie_derivative_one_form_field(x, eta)
    form = form - interior_product_field(y, exterior_derivative_field(xi))
    if not chart.h_field.is_zero():
        form = form + interior_product_field(y, interior_product_field(x, chart.h_field))
    return Section(vec, form)


def courant_bracket(e1: Section, e2: Section, chart: ChartModel, point) -> FiberElement:
    """Pointwise bracket value."""
    return courant_bracket_section(e1, e2, chart).at(point)


def bracket_from_jets(j1: SectionJet, j2: SectionJet,
                      h_vals: np.ndarray | None) -> np.ndarray:
    """Bracket values (P, 2n) assembled from exact jets of the two sections."""
    vec = np.einsum("pj,pij->pi", j1.x, j2.dx) - np.einsum("pj,pij->pi", j2.x, j1.dx)
    # L_X eta
    form = np.einsum("pj,pij->pi", j1.x, j2.dxi) + np.einsum("pj,pji->pi", j2.xi, j1.dx)
    # - i_Y d xi, with (d xi)_{ji} = d_j xi_i - d_i xi_j
    form -= np.einsum("pj,pij->pi", j2.x, j1.dxi) - np.einsum("pj,pji->pi", j2.x, j1.dxi)
    if h_vals is not None:
        form += np.einsum("pi,pj,pijk->pk", j1.x, j2.x, h_vals)
    return np.hstack([vec, form])


def pairing_values(j1: SectionJet, j2: SectionJet) -> np.ndarray:
    return 0.5 * (np.einsum("pi,pi->p", j1.xi, j2.x) + np.einsum("pi,pi->p", j2.xi, j1.x))


def pairing_gradient(j1: SectionJet, j2: SectionJet) -> np.ndarray:
    """Gradient of <e1, e2> over the sample points, from the product rule."""
    g = np.einsum("pij,pi->pj", j1.dxi, j2.x) + np.einsum("pi,pij->pj", j1.xi, j2.dx)
    g += np.einsum("pij,pi->pj", j2.dxi, j1.x) + np.einsum("pi,pij->pj", j2.xi, j1.dx)
    return 0.5 * g


@dataclass(frozen=True)
class AxiomReport:
    """Max residual per axiom over all section triples and grid points."""

    residuals: dict[str, float]
    tolerance: float
    n_sections: int
    n_points: int

    @property
    def passed(self) -> bool:
        return all(v <= self.tolerance for v in self.residuals.values())

    def lines(self) -> list[str]:
        out = []
        for key in sorted(self.residuals):
            flag = "pass" if self.residuals[key] <= self.tolerance else "FAIL"
            out.append(f"{key}: max residual {self.residuals[key]:.3e} [{flag}]")
        return out


def check_axioms(chart: ChartModel, trial_sections: Sequence[Section],
                 test_functions: Sequence[ScalarExpr] | None = None) -> AxiomReport:
    """Residuals of the five bracket axioms plus the symmetrization identity.

    Evaluated at every grid point over all ordered triples of the trial
    sections. The Jacobi-type axiom brackets a bracket; inner brackets are
    expression-backed sections and the outer level is assembled from their
    exact jets.
    """
    if len(trial_sections) < 3:
        raise PreconditionError("need at least three trial sections")
    points = chart.sample_grid
    p, n = points.shape
    h_vals = None if chart.h_field.is_zero() else chart.h_values(points)
    if test_functions is None:
        test_functions = [Var(0, chart.coordinate_names[0]),
                          expr_add(ONE, powi(Var(n - 1, chart.coordinate_names[n - 1]), 2))]

    sections = list(trial_sections)
    m = len(sections)
    jets = [s.jets(points) for s in sections]

    # depth-1 brackets for every ordered pair, with their jets
    pair_sections: dict[tuple[int, int], Section] = {}
    pair_jets: dict[tuple[int, int], SectionJet] = {}
    for a in range(m):
        for b in range(m):
            sec = courant_bracket_section(sections[a], sections[b], chart)
            pair_sections[(a, b)] = sec
            pair_jets[(a, b)] = sec.jets(points)

    res = {key: 0.0 for key in
           ("axiom_i_jacobi", "axiom_ii_anchor", "axiom_iii_leibniz",
            "axiom_iv_pairing", "axiom_v_square", "symmetrization")}

    def bump(key: str, arr: np.ndarray):
        if arr.size:
            res[key] = max(res[key], float(np.max(np.abs(arr))))

    for i, j, k in permutations(range(m), 3):
        lhs = bracket_from_jets(jets[i], pair_jets[(j, k)], h_vals)
        rhs = bracket_from_jets(pair_jets[(i, j)], jets[k], h_vals)
        rhs = rhs + bracket_from_jets(jets[j], pair_jets[(i, k)], h_vals)
        bump("axiom_i_jacobi", lhs - rhs)

        # pi(e_i) <e_j, e_k> = <[e_i, e_j], e_k> + <e_j, [e_i, e_k]>
        grad = pairing_gradient(jets[j], jets[k])
        lhs_iv = np.einsum("pj,pj->p", jets[i].x, grad)
        br_ij = pair_jets[(i, j)]
        br_ik = pair_jets[(i, k)]
        rhs_iv = pairing_values(br_ij, jets[k]) + pairing_values(jets[j], br_ik)
        bump("axiom_iv_pairing", lhs_iv - rhs_iv)

    for a in range(m):
        for b in range(m):
            # anchor is a bracket homomorphism
            br = pair_jets[(a, b)]
            lie = bracket_from_jets(jets[a], jets[b], None)[:, :n]
            bump("axiom_ii_anchor", br.fiber()[:, :n] - lie)

            # Leibniz rule in the second slot against the test functions
            for f in test_functions:
                fe2 = sections[b].scaled(f)
                lhs_sec = courant_bracket_section(sections[a], fe2, chart)
                lhs_v = lhs_sec.fiber_values(points)
                fv, fg = eval_jet_grid(f, points)
                df_along = np.einsum("pj,pj->p", jets[a].x, fg)
                rhs_v = fv[:, None] * br.fiber() + df_along[:, None] * jets[b].fiber()
                bump("axiom_iii_leibniz", lhs_v - rhs_v)

            # non-skew identity [e1,e2] + [e2,e1] = 2 D <e1, e2>
            sym = pair_jets[(a, b)].fiber() + pair_jets[(b, a)].fiber()
            target = np.hstack([np.zeros((p, n)),
                                2.0 * pairing_gradient(jets[a], jets[b])])
            bump("symmetrization", sym - target)

        # [e, e] = D <e, e>
        sq = pair_jets[(a, a)].fiber()
        target = np.hstack([np.zeros((p, n)), pairing_gradient(jets[a], jets[a])])
        bump("axiom_v_square", sq - target)

    return AxiomReport(res, chart.tolerances.bracket_residual, m, p)
