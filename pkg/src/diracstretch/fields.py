"""Tensor fields over a chart, assembled componentwise from expressions.

Antisymmetric kinds (two_form, bivector, three_form) store only strictly
increasing index tuples; evaluation reconstructs the full tensor by
permutation parity. The calculus here is exactly what the bracket formulas
need: Lie brackets and derivatives, exterior derivatives up to degree three,
interior products, and the bivector operations (sharp, jacobiator, Lie
derivative, induced bracket of functions).
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations, permutations
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ModelError, PreconditionError
from .expressions import (ScalarExpr, ZERO, add, mul, neg, sub, diff,
                          eval_jet_grid, evaluate_grid, is_constant_expr, num)

KIND_DEGREE = {
    "scalar": 0,
    "vector": 1,
    "one_form": 1,
    "two_form": 2,
    "bivector": 2,
    "three_form": 3,
}
ANTISYMMETRIC_KINDS = ("two_form", "bivector", "three_form")


class KindMismatchError(PreconditionError):
    pass


def _parity_sorted(indices: Sequence[int]) -> tuple[tuple[int, ...], int]:
    """Sort an index tuple, returning (sorted tuple, permutation sign);
    sign 0 for repeated indices."""
    idx = list(indices)
    if len(set(idx)) != len(idx):
        return tuple(sorted(idx)), 0
    sign = 1
    for i in range(len(idx)):
        for j in range(len(idx) - 1 - i):
            if idx[j] > idx[j + 1]:
                idx[j], idx[j + 1] = idx[j + 1], idx[j]
                sign = -sign
    return tuple(idx), sign


@dataclass(frozen=True)
class TensorField:
    """A field of one fixed kind with expression components."""

    kind: str
    dimension: int
    components: Mapping[tuple[int, ...], ScalarExpr]

    def __post_init__(self):
        if self.kind not in KIND_DEGREE:
            raise KindMismatchError(f"unknown tensor kind '{self.kind}'")
        degree = KIND_DEGREE[self.kind]
        clean: dict[tuple[int, ...], ScalarExpr] = {}
        for key, expr in dict(self.components).items():
            key = tuple(int(k) for k in key)
            if len(key) != degree:
                raise ModelError(f"{self.kind} component index {key} has wrong length")
            if any(k < 0 or k >= self.dimension for k in key):
                raise ModelError(f"component index {key} outside [0, {self.dimension})")
            if self.kind in ANTISYMMETRIC_KINDS and any(
                    key[i] >= key[i + 1] for i in range(len(key) - 1)):
                raise ModelError(
                    f"{self.kind} components must use strictly increasing indices, got {key}")
            if not isinstance(expr, ScalarExpr):
                raise ModelError(f"component {key} is not a scalar expression")
            if expr != ZERO:
                clean[key] = expr
        object.__setattr__(self, "components", clean)

    @property
    def degree(self) -> int:
        return KIND_DEGREE[self.kind]

    def component(self, *indices: int) -> ScalarExpr:
        """Component at an arbitrary index tuple (parity-signed for
        antisymmetric kinds)."""
        if self.kind in ANTISYMMETRIC_KINDS:
            key, sign = _parity_sorted(indices)
            if sign == 0:
                return ZERO
            expr = self.components.get(key, ZERO)
            return neg(expr) if sign < 0 else expr
        return self.components.get(tuple(indices), ZERO)

    def is_zero(self) -> bool:
        return not self.components

    def is_constant(self) -> bool:
        return all(is_constant_expr(e) for e in self.components.values())

    # ---- evaluation ------------------------------------------------------

    def values(self, points: np.ndarray) -> np.ndarray:
        """Evaluate over points (P, n). Shapes: scalar (P,), degree-1 (P, n),
        degree-2 (P, n, n), degree-3 (P, n, n, n); antisymmetric kinds return
        the full antisymmetrized tensor."""
        points = np.asarray(points, dtype=float)
        p, n = points.shape
        if n != self.dimension:
            raise ModelError("points do not match field dimension")
        out = np.zeros((p,) + (n,) * self.degree)
        for key, expr in self.components.items():
            vals = evaluate_grid(expr, points)
            if self.kind in ANTISYMMETRIC_KINDS:
                for perm in permutations(range(len(key))):
                    _, sign = _parity_sorted([key[i] for i in perm])
                    target = tuple(key[i] for i in perm)
                    out[(slice(None),) + target] = sign * vals
            else:
                out[(slice(None),) + key] = vals
        return out

    def value(self, point) -> np.ndarray | float:
        out = self.values(np.asarray(point, dtype=float)[None, :])[0]
        return float(out) if self.degree == 0 else out

    def jets(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Values plus gradients: gradients have one trailing axis for the
        derivative direction, e.g. vector -> (P, n, n) with [p, i, j] =
        d_j X^i."""
        points = np.asarray(points, dtype=float)
        p, n = points.shape
        vals = np.zeros((p,) + (n,) * self.degree)
        grads = np.zeros((p,) + (n,) * self.degree + (n,))
        for key, expr in self.components.items():
            v, g = eval_jet_grid(expr, points)
            if self.kind in ANTISYMMETRIC_KINDS:
                for perm in permutations(range(len(key))):
                    _, sign = _parity_sorted([key[i] for i in perm])
                    target = tuple(key[i] for i in perm)
                    vals[(slice(None),) + target] = sign * v
                    grads[(slice(None),) + target] = sign * g
            else:
                vals[(slice(None),) + key] = v
                grads[(slice(None),) + key] = g
        return vals, grads

    # ---- linear structure -------------------------------------------------

    def map_components(self, fn) -> "TensorField":
        return TensorField(self.kind, self.dimension,
                           {k: fn(e) for k, e in self.components.items()})

    def __add__(self, other: "TensorField") -> "TensorField":
        if self.kind != other.kind or self.dimension != other.dimension:
            raise KindMismatchError("cannot add fields of different kinds")
        keys = set(self.components) | set(other.components)
        return TensorField(self.kind, self.dimension, {
            k: add(self.components.get(k, ZERO), other.components.get(k, ZERO))
            for k in keys})

    def __sub__(self, other: "TensorField") -> "TensorField":
        if self.kind != other.kind or self.dimension != other.dimension:
            raise KindMismatchError("cannot subtract fields of different kinds")
        keys = set(self.components) | set(other.components)
        return TensorField(self.kind, self.dimension, {
            k: sub(self.components.get(k, ZERO), other.components.get(k, ZERO))
            for k in keys})

    def scaled(self, factor: ScalarExpr | float) -> "TensorField":
        factor = factor if isinstance(factor, ScalarExpr) else num(factor)
        return self.map_components(lambda e: mul(factor, e))


def vector_field(components: Iterable[ScalarExpr], dimension: int | None = None) -> TensorField:
    comps = list(components)
    dim = dimension if dimension is not None else len(comps)
    if len(comps) != dim:
        raise ModelError("vector field needs one component per coordinate")
    return TensorField("vector", dim, {(i,): c for i, c in enumerate(comps)})


def one_form_field(components: Iterable[ScalarExpr], dimension: int | None = None) -> TensorField:
    comps = list(components)
    dim = dimension if dimension is not None else len(comps)
    if len(comps) != dim:
        raise ModelError("one-form needs one component per coordinate")
    return TensorField("one_form", dim, {(i,): c for i, c in enumerate(comps)})


def scalar_field(expr: ScalarExpr, dimension: int) -> TensorField:
    return TensorField("scalar", dimension, {(): expr})


def two_form_field(dimension: int, components: Mapping) -> TensorField:
    return TensorField("two_form", dimension, components)


def bivector_field(dimension: int, components: Mapping) -> TensorField:
    return TensorField("bivector", dimension, components)


def three_form_field(dimension: int, components: Mapping) -> TensorField:
    return TensorField("three_form", dimension, components)


def zero_field(kind: str, dimension: int) -> TensorField:
    return TensorField(kind, dimension, {})


def constant_vector(values: Sequence[float]) -> TensorField:
    return vector_field([num(v) for v in values])


def constant_one_form(values: Sequence[float]) -> TensorField:
    return one_form_field([num(v) for v in values])


def _require(field: TensorField, kind: str, argname: str):
    if field.kind != kind:
        raise KindMismatchError(f"{argname} must be a {kind}, got {field.kind}")


# ---------------------------------------------------------------------------
# symbolic calculus


def lie_bracket_field(x: TensorField, y: TensorField) -> TensorField:
    """[X, Y] = (X . grad) Y - (Y . grad) X as an expression field."""
    _require(x, "vector", "x")
    _require(y, "vector", "y")
    n = x.dimension
    comps = {}
    for i in range(n):
        acc = ZERO
        for j in range(n):
            acc = add(acc, mul(x.component(j), diff(y.component(i), j)))
            acc = sub(acc, mul(y.component(j), diff(x.component(i), j)))
        comps[(i,)] = acc
    return TensorField("vector", n, comps)


def lie_bracket(x: TensorField, y: TensorField, point) -> np.ndarray:
    """Pointwise Lie bracket of two vector fields."""
    return lie_bracket_field(x, y).value(point)


def lie_derivative_one_form_field(x: TensorField, eta: TensorField) -> TensorField:
    """(L_X eta)_i = X^j d_j eta_i + eta_j d_i X^j."""
    _require(x, "vector", "x")
    _require(eta, "one_form", "eta")
    n = x.dimension
    comps = {}
    for i in range(n):
        acc = ZERO
        for j in range(n):
            acc = add(acc, mul(x.component(j), diff(eta.component(i), j)))
            acc = add(acc, mul(eta.component(j), diff(x.component(j), i)))
        comps[(i,)] = acc
    return TensorField("one_form", n, comps)


def lie_derivative_one_form(x: TensorField, eta: TensorField, point) -> np.ndarray:
    return lie_derivative_one_form_field(x, eta).value(point)


def exterior_derivative_field(field: TensorField) -> TensorField:
    """d of a scalar, one-form or two-form (degrees 0..2 -> 1..3)."""
    n = field.dimension
    if field.kind == "scalar":
        f = field.components.get((), ZERO)
        return one_form_field([diff(f, i) for i in range(n)])
    if field.kind == "one_form":
        comps = {}
        for i, j in combinations(range(n), 2):
            comps[(i, j)] = sub(diff(field.component(j), i), diff(field.component(i), j))
        return TensorField("two_form", n, comps)
    if field.kind == "two_form":
        comps = {}
        for i, j, k in combinations(range(n), 3):
            comps[(i, j, k)] = add(sub(diff(field.component(j, k), i),
                                       diff(field.component(i, k), j)),
                                   diff(field.component(i, j), k))
        return TensorField("three_form", n, comps)
    raise KindMismatchError(f"exterior derivative not defined for kind '{field.kind}'")


def exterior_derivative(field: TensorField, point) -> np.ndarray:
    """d(field) evaluated at a point (full antisymmetric array)."""
    return exterior_derivative_field(field).value(point)


def interior_product_field(x: TensorField, form: TensorField) -> TensorField:
    """i_X applied to a one-, two- or three-form (symbolic)."""
    _require(x, "vector", "x")
    n = x.dimension
    if form.kind == "one_form":
        acc = ZERO
        for i in range(n):
            acc = add(acc, mul(x.component(i), form.component(i)))
        return scalar_field(acc, n)
    if form.kind == "two_form":
        comps = {}
        for j in range(n):
            acc = ZERO
            for i in range(n):
                acc = add(acc, mul(x.component(i), form.component(i, j)))
            comps[(j,)] = acc
        return TensorField("one_form", n, comps)
    if form.kind == "three_form":
        comps = {}
        for j, k in combinations(range(n), 2):
            acc = ZERO
            for i in range(n):
                acc = add(acc, mul(x.component(i), form.component(i, j, k)))
            comps[(j, k)] = acc
        return TensorField("two_form", n, comps)
    raise KindMismatchError(f"interior product not defined for kind '{form.kind}'")


def interior_product(x: TensorField, form: TensorField, point):
    out = interior_product_field(x, form).value(point)
    return out


def d_three_form_residual(h: TensorField, points: np.ndarray) -> float:
    """Max |dH| component over the sample points (0 when n < 4)."""
    _require(h, "three_form", "h")
    n = h.dimension
    if n < 4 or h.is_zero():
        return 0.0
    points = np.asarray(points, dtype=float)
    worst = 0.0
    jet_cache = {key: eval_jet_grid(expr, points) for key, expr in h.components.items()}

    def partial(idx: tuple[int, int, int], direction: int) -> np.ndarray:
        key, sign = _parity_sorted(idx)
        if sign == 0:
            return np.zeros(points.shape[0])
        if key not in jet_cache:
            return np.zeros(points.shape[0])
        return sign * jet_cache[key][1][:, direction]

    for quad in combinations(range(n), 4):
        acc = np.zeros(points.shape[0])
        for t in range(4):
            rest = tuple(quad[s] for s in range(4) if s != t)
            acc += (-1.0) ** t * partial(rest, quad[t])
        worst = max(worst, float(np.max(np.abs(acc))))
    return worst


# ---------------------------------------------------------------------------
# bivector operations


def poisson_bracket_expr(pi: TensorField, f: ScalarExpr, g: ScalarExpr) -> ScalarExpr:
    """{f, g} = pi^{ij} d_i f d_j g as an expression."""
    _require(pi, "bivector", "pi")
    n = pi.dimension
    acc = ZERO
    for (i, j), comp in pi.components.items():
        # antisymmetric sum over the stored increasing pairs
        term = sub(mul(diff(f, i), diff(g, j)), mul(diff(f, j), diff(g, i)))
        acc = add(acc, mul(comp, term))
    return acc


def sharp_rows(pi: TensorField) -> list[list[ScalarExpr]]:
    """Row i holds the components of pi^sharp(dx_i) = (pi[i, 0], ..., pi[i, n-1])."""
    _require(pi, "bivector", "pi")
    n = pi.dimension
    return [[pi.component(i, j) for j in range(n)] for i in range(n)]


def bivector_jacobiator(pi: TensorField, points: np.ndarray) -> float:
    """Max Jacobi residual {x^i,{x^j,x^k}} + cyclic over coordinate triples."""
    _require(pi, "bivector", "pi")
    vals, grads = pi.jets(np.asarray(points, dtype=float))
    # J^{ijk} = pi^{il} d_l pi^{jk} + pi^{jl} d_l pi^{ki} + pi^{kl} d_l pi^{ij}
    term = np.einsum("pil,pjkl->pijk", vals, grads)
    jac = term + np.transpose(term, (0, 2, 3, 1)) + np.transpose(term, (0, 3, 1, 2))
    return float(np.max(np.abs(jac))) if jac.size else 0.0


def lie_derivative_bivector_values(x: TensorField, pi: TensorField,
                                   points: np.ndarray) -> np.ndarray:
    """(L_X pi)^{ij} = X^k d_k pi^{ij} - pi^{kj} d_k X^i - pi^{ik} d_k X^j."""
    _require(x, "vector", "x")
    _require(pi, "bivector", "pi")
    points = np.asarray(points, dtype=float)
    xv, xg = x.jets(points)
    pv, pg = pi.jets(points)
    out = np.einsum("pk,pijk->pij", xv, pg)
    out -= np.einsum("pkj,pik->pij", pv, xg)
    out -= np.einsum("pik,pjk->pij", pv, xg)
    return out
