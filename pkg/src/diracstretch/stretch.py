"""Bundle-level stretching over a chart and the canonicity decision procedure.

A FrameBundle is an ordered list of sections whose pointwise span has a
declared constant rank over the chart's sample grid. Stretching intersects
the Lagrangian frame with the pairing-orthogonal of the isotropic frame and
adjoins the latter; the intersection is lifted to expression sections by
solving the pairing constraints symbolically with a pivot order fixed at the
first grid point, falling back to per-point bases (plus a smoothness check)
when no stable lift exists.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .chart import ChartModel
from .courant import Section, bracket_from_jets, pairing_expr
from .errors import PreconditionError
from .expressions import (ONE, ScalarExpr, ZERO, add, div, evaluate_grid,
                          mul, neg, sub)
from .fields import TensorField, lie_bracket_field, one_form_field, vector_field
from .linpair import (Subspace, is_isotropic, is_lagrangian, isotropy_defect,
                      max_principal_angle, orthogonal, stretch_point,
                      subspace_intersection)


class NonConstantRankError(PreconditionError):
    def __init__(self, what: str, ranks: Sequence[int], points: np.ndarray):
        self.what = what
        self.ranks = list(ranks)
        self.points = np.asarray(points)
        super().__init__(
            f"{what} does not have constant rank over the grid (ranks {sorted(set(self.ranks))})")


class FrameRankError(PreconditionError):
    pass


@dataclass(frozen=True)
class FrameBundle:
    """An ordered spanning family of sections with a declared constant rank."""

    sections: tuple[Section, ...]
    declared_rank: int

    def __post_init__(self):
        object.__setattr__(self, "sections", tuple(self.sections))
        if not self.sections:
            raise PreconditionError("a frame bundle needs at least one section")
        dims = {s.dimension for s in self.sections}
        if len(dims) != 1:
            raise PreconditionError("frame sections live on different charts")

    @property
    def dimension(self) -> int:
        return self.sections[0].dimension

    def fiber_matrices(self, points: np.ndarray) -> np.ndarray:
        """(P, 2n, k) matrices whose columns are the evaluated sections."""
        cols = [s.fiber_values(points) for s in self.sections]
        return np.stack(cols, axis=2)

    def subspace_at(self, point, tol: float = 1e-9) -> Subspace:
        mats = self.fiber_matrices(np.asarray(point, dtype=float)[None, :])
        return Subspace.from_matrix(mats[0], tol)


def frame_from_vectors(vfields: Sequence[TensorField], declared_rank: int | None = None) -> FrameBundle:
    """Frame of sections (X, 0) from vector fields."""
    n = vfields[0].dimension
    secs = [Section(v, one_form_field([ZERO] * n)) for v in vfields]
    return FrameBundle(tuple(secs), declared_rank if declared_rank is not None else len(secs))


def frame_from_covectors(forms: Sequence[TensorField], declared_rank: int | None = None) -> FrameBundle:
    """Frame of sections (0, eta) from one-forms."""
    n = forms[0].dimension
    secs = [Section(vector_field([ZERO] * n), f) for f in forms]
    return FrameBundle(tuple(secs), declared_rank if declared_rank is not None else len(secs))


def graph_frame_of_bivector(pi: TensorField) -> FrameBundle:
    """Frame e_i = (pi^sharp dx_i, dx_i) of the graph of a bivector."""
    n = pi.dimension
    secs = []
    for i in range(n):
        vec = vector_field([pi.component(i, j) for j in range(n)])
        form = one_form_field([ONE if j == i else ZERO for j in range(n)])
        secs.append(Section(vec, form))
    return FrameBundle(tuple(secs), n)


def graph_frame_of_two_form(omega: TensorField) -> FrameBundle:
    """Frame e_i = (d/dx_i, omega_flat d/dx_i) of the graph of a 2-form."""
    n = omega.dimension
    secs = []
    for i in range(n):
        vec = vector_field([ONE if j == i else ZERO for j in range(n)])
        form = one_form_field([omega.component(i, j) for j in range(n)])
        secs.append(Section(vec, form))
    return FrameBundle(tuple(secs), n)


def combine_sections(sections: Sequence[Section], coeffs: Sequence[ScalarExpr]) -> Section:
    """Linear combination with expression coefficients."""
    n = sections[0].dimension
    vec = []
    form = []
    for i in range(n):
        av, af = ZERO, ZERO
        for sec, c in zip(sections, coeffs):
            av = add(av, mul(c, sec.vector_field.component(i)))
            af = add(af, mul(c, sec.one_form_field.component(i)))
        vec.append(av)
        form.append(af)
    return Section(vector_field(vec), one_form_field(form))


def orthonormal_frames(mats: np.ndarray, tol: float) -> tuple[np.ndarray, np.ndarray]:
    """Batch-orthonormalize (P, d, k) matrices; returns (bases (P, d, rmax)
    zero-padded, ranks (P,))."""
    u, s, _ = np.linalg.svd(mats, full_matrices=False)
    smax = np.maximum(s[:, :1], 1e-300)
    ranks = np.sum(s > tol * smax, axis=1)
    rmax = int(np.max(ranks)) if ranks.size else 0
    bases = u[:, :, :rmax].copy()
    for p in range(mats.shape[0]):
        bases[p, :, ranks[p]:] = 0.0
    return bases, ranks


def span_residuals(values: np.ndarray, bases: np.ndarray) -> np.ndarray:
    """Per-point least-squares residual of row vectors against span bases:
    values (P, d), bases (P, d, r) orthonormal columns."""
    coef = np.einsum("pdr,pd->pr", bases, values)
    proj = np.einsum("pdr,pr->pd", bases, coef)
    return np.linalg.norm(values - proj, axis=1)


# ---------------------------------------------------------------------------
# symbolic nullspace with fixed pivot order


def symbolic_nullspace(rows: Sequence[Sequence[ScalarExpr]], chart: ChartModel,
                       n_cols: int | None = None) -> list[list[ScalarExpr]] | None:
    """Expression basis of {c : M(x) c = 0} when M has a stable constant-rank
    elimination over the grid; None otherwise.

    Pivots are chosen once, by magnitude at the first grid point, and the
    same Gauss-Jordan steps are applied symbolically and (vectorized) at
    every grid point; a pivot whose magnitude drops below sqrt(rank_tol)
    relative to the matrix scale anywhere on the grid aborts the lift.
    """
    rows = [list(r) for r in rows]
    m = len(rows)
    k = n_cols if n_cols is not None else (len(rows[0]) if rows else 0)
    if any(len(r) != k for r in rows):
        raise PreconditionError("ragged constraint matrix")
    if m == 0 or k == 0:
        return [[ONE if j == i else ZERO for j in range(k)] for i in range(k)]

    points = chart.sample_grid
    tol = chart.tolerances.rank_tolerance
    p = points.shape[0]
    vals = np.empty((p, m, k))
    for i, row in enumerate(rows):
        for j, e in enumerate(row):
            vals[:, i, j] = evaluate_grid(e, points)
    scale = float(np.max(np.abs(vals))) or 1.0
    sing = np.linalg.svd(vals, compute_uv=False)
    ranks = np.sum(sing > tol * max(scale, 1e-300), axis=1)
    if not np.all(ranks == ranks[0]):
        return None
    r = int(ranks[0])
    if r == 0:
        return [[ONE if j == i else ZERO for j in range(k)] for i in range(k)]

    work = [list(row) for row in rows]
    mirror = vals.copy()
    stab = np.sqrt(tol) * scale
    piv: list[tuple[int, int]] = []
    used_rows: set[int] = set()
    used_cols: set[int] = set()
    for _ in range(r):
        best, best_mag = None, -1.0
        for i in range(m):
            if i in used_rows:
                continue
            for j in range(k):
                if j in used_cols:
                    continue
                mag = abs(mirror[0, i, j])
                if mag > best_mag:
                    best, best_mag = (i, j), mag
        pr, pc = best
        if np.any(np.abs(mirror[:, pr, pc]) < stab):
            return None
        piv.append((pr, pc))
        used_rows.add(pr)
        used_cols.add(pc)
        for i in range(m):
            if i == pr:
                continue
            factor_vals = mirror[:, i, pc] / mirror[:, pr, pc]
            factor = div(work[i][pc], work[pr][pc])
            for j in range(k):
                if j == pc:
                    continue
                mirror[:, i, j] -= factor_vals * mirror[:, pr, j]
                work[i][j] = sub(work[i][j], mul(factor, work[pr][j]))
            mirror[:, i, pc] = 0.0
            work[i][pc] = ZERO

    free_cols = [j for j in range(k) if j not in used_cols]
    basis = []
    for f in free_cols:
        vec = [ZERO] * k
        vec[f] = ONE
        for pr, pc in piv:
            vec[pc] = neg(div(work[pr][f], work[pr][pc]))
        basis.append(vec)

    # validate: M v = 0 on the whole grid
    for vec in basis:
        resid = np.zeros(p)
        vec_vals = np.stack([evaluate_grid(c, points) for c in vec], axis=1)
        resid = np.einsum("pmk,pk->pm", vals, vec_vals)
        if float(np.max(np.abs(resid))) > np.sqrt(tol) * scale * 10:
            return None
    return basis


# ---------------------------------------------------------------------------
# stretching of frame bundles


@dataclass(frozen=True)
class StretchResult:
    """Frame for the stretched bundle, with rank and lift diagnostics."""

    frame: FrameBundle | None
    pointwise: tuple[Subspace, ...]
    core_rank: int
    lifted: bool
    lift_angle: float | None
    smoothness: float | None

    @property
    def rank(self) -> int:
        return self.pointwise[0].rank if self.pointwise else 0


def _validate_frame_pointwise(F: FrameBundle, points: np.ndarray, tol: float,
                              what: str) -> list[Subspace]:
    mats = F.fiber_matrices(points)
    subs = [Subspace.from_matrix(mats[p], tol) for p in range(points.shape[0])]
    ranks = [s.rank for s in subs]
    if len(set(ranks)) != 1:
        raise NonConstantRankError(what, ranks, points)
    if ranks[0] != F.declared_rank:
        raise FrameRankError(
            f"{what} has pointwise rank {ranks[0]}, declared {F.declared_rank}")
    return subs


def _nearest_neighbor_pairs(points: np.ndarray) -> list[tuple[int, int]]:
    d2 = np.sum((points[:, None, :] - points[None, :, :]) ** 2, axis=2)
    np.fill_diagonal(d2, np.inf)
    return [(p, int(np.argmin(d2[p]))) for p in range(points.shape[0])]


def stretch_bundle(D: FrameBundle, S: FrameBundle, chart: ChartModel) -> StretchResult:
    """Frame for the stretch of D along S over the chart grid.

    D must be pointwise Lagrangian and S pointwise isotropic, and the
    intersection of D with the pairing-orthogonal of S must have constant
    rank (the standing regularity assumption).
    """
    points = chart.sample_grid
    tol = chart.tolerances.rank_tolerance
    n = chart.dimension
    d_subs = _validate_frame_pointwise(D, points, tol, "D")
    s_subs = _validate_frame_pointwise(S, points, tol, "S")
    for p, d in enumerate(d_subs):
        if not is_lagrangian(d):
            raise PreconditionError(
                f"D is not Lagrangian at grid point {p} "
                f"(rank {d.rank}, pairing defect {isotropy_defect(d):.3e})")
    for p, s in enumerate(s_subs):
        if not is_isotropic(s):
            raise PreconditionError(
                f"S is not isotropic at grid point {p} (defect {isotropy_defect(s):.3e})")

    cores = []
    stretched = []
    for p in range(points.shape[0]):
        core = _core_subspace(d_subs[p], s_subs[p])
        cores.append(core)
        stretched.append(stretch_point(d_subs[p], s_subs[p]))
    core_ranks = [c.rank for c in cores]
    if len(set(core_ranks)) != 1:
        raise NonConstantRankError("D ^ S_perp", core_ranks, points)
    core_rank = core_ranks[0]

    frame, lift_angle = _lift_stretch_frame(D, S, chart, stretched, core_rank)
    if frame is not None:
        return StretchResult(frame, tuple(stretched), core_rank, True, lift_angle, None)

    smooth = 0.0
    for p, q in _nearest_neighbor_pairs(points):
        smooth = max(smooth, max_principal_angle(stretched[p], stretched[q]))
    return StretchResult(None, tuple(stretched), core_rank, False, None, smooth)


def _core_subspace(d: Subspace, s: Subspace) -> Subspace:
    return subspace_intersection(d, orthogonal(s))


def _lift_stretch_frame(D: FrameBundle, S: FrameBundle, chart: ChartModel,
                        stretched: list[Subspace], core_rank: int):
    """Try to produce expression sections spanning the stretched bundle."""
    n = chart.dimension
    tol = chart.tolerances.rank_tolerance
    points = chart.sample_grid
    pairings = [[pairing_expr(d_sec, s_sec) for d_sec in D.sections]
                for s_sec in S.sections]
    coeffs = symbolic_nullspace(pairings, chart)
    if coeffs is None:
        return None, None
    core_sections = [combine_sections(D.sections, c) for c in coeffs]
    generating = list(core_sections) + list(S.sections)

    # prune to an actual frame with a fixed preference order
    mats = np.stack([sec.fiber_values(points) for sec in generating], axis=2)
    selected: list[int] = []
    x0 = mats[0]
    for idx in range(len(generating)):
        trial = selected + [idx]
        if np.linalg.matrix_rank(x0[:, trial], tol=1e-8) == len(trial):
            selected.append(trial[-1])
        if len(selected) == n:
            break
    candidate = [generating[i] for i in selected]
    cand_mats = mats[:, :, selected]
    _, ranks = orthonormal_frames(cand_mats, tol)
    if not np.all(ranks == n):
        candidate = generating
        cand_mats = mats
        _, ranks = orthonormal_frames(cand_mats, tol)
        if not np.all(ranks == n):
            return None, None

    worst = 0.0
    for p in range(points.shape[0]):
        sub = Subspace.from_matrix(cand_mats[p], tol)
        if sub.rank != stretched[p].rank:
            return None, None
        worst = max(worst, max_principal_angle(sub, stretched[p]))
    if worst > 1e-6:
        return None, None
    return FrameBundle(tuple(candidate), n), worst


# ---------------------------------------------------------------------------
# involutivity and preservation checks


@dataclass(frozen=True)
class SpanResidualReport:
    """Max residual of bracket values against a target span."""

    max_residual: float
    tolerance: float
    worst_pair: tuple[int, int]
    worst_point: int
    n_pairs: int
    n_points: int
    label: str = ""

    @property
    def passed(self) -> bool:
        return self.max_residual <= self.tolerance

    def line(self) -> str:
        flag = "pass" if self.passed else "FAIL"
        return (f"{self.label or 'bracket-span'}: max residual {self.max_residual:.3e} "
                f"(tol {self.tolerance:.1e}) [{flag}]")


def check_brackets_in_span(left: FrameBundle, right: FrameBundle,
                           target: FrameBundle, chart: ChartModel,
                           label: str = "") -> SpanResidualReport:
    """Residual of [left_i, right_j] against the pointwise span of target."""
    points = chart.sample_grid
    tol = chart.tolerances.rank_tolerance
    h_vals = None if chart.h_field.is_zero() else chart.h_values(points)
    left_jets = [s.jets(points) for s in left.sections]
    right_jets = [s.jets(points) for s in right.sections]
    bases, ranks = orthonormal_frames(target.fiber_matrices(points), tol)
    if len(set(ranks.tolist())) != 1:
        raise NonConstantRankError("target span", ranks.tolist(), points)
    worst, worst_pair, worst_point = 0.0, (0, 0), 0
    for i, jl in enumerate(left_jets):
        for j, jr in enumerate(right_jets):
            vals = bracket_from_jets(jl, jr, h_vals)
            res = span_residuals(vals, bases)
            pmax = int(np.argmax(res))
            if res[pmax] > worst:
                worst, worst_pair, worst_point = float(res[pmax]), (i, j), pmax
    return SpanResidualReport(worst, chart.tolerances.bracket_residual,
                              worst_pair, worst_point,
                              len(left_jets) * len(right_jets), points.shape[0],
                              label)


def check_involutive(F: FrameBundle, chart: ChartModel,
                     label: str = "involutivity") -> SpanResidualReport:
    """Brackets of all ordered frame pairs against the frame's own span."""
    return check_brackets_in_span(F, F, F, chart, label)


def check_S_preserves(S: FrameBundle, F: FrameBundle, chart: ChartModel,
                      target: FrameBundle | None = None,
                      label: str = "S preserves span") -> SpanResidualReport:
    """Residual of [s_i, f_j] against span(target), target defaulting to F.

    Passing a different target runs the kernel-invariance style variants."""
    return check_brackets_in_span(S, F, target if target is not None else F,
                                  chart, label)


def frobenius_involutive(vfields: Sequence[TensorField], chart: ChartModel,
                         label: str = "Frobenius") -> SpanResidualReport:
    """Lie brackets of a vector-field frame against its own pointwise span."""
    points = chart.sample_grid
    tol = chart.tolerances.rank_tolerance
    mats = np.stack([v.values(points) for v in vfields], axis=2)
    bases, ranks = orthonormal_frames(mats, tol)
    if len(set(ranks.tolist())) != 1:
        raise NonConstantRankError("distribution", ranks.tolist(), points)
    worst, worst_pair, worst_point = 0.0, (0, 0), 0
    for i in range(len(vfields)):
        for j in range(i + 1, len(vfields)):
            br = lie_bracket_field(vfields[i], vfields[j])
            vals = br.values(points)
            res = span_residuals(vals, bases)
            pmax = int(np.argmax(res))
            if res[pmax] > worst:
                worst, worst_pair, worst_point = float(res[pmax]), (i, j), pmax
    return SpanResidualReport(worst, chart.tolerances.bracket_residual,
                              worst_pair, worst_point,
                              len(vfields) * (len(vfields) - 1) // 2,
                              points.shape[0], label)


# ---------------------------------------------------------------------------
# anchor image of S-perp and the canonicity decision


@dataclass(frozen=True)
class AnchorImageResult:
    vfields: tuple[TensorField, ...] | None
    constant_rank: bool
    rank: int | None
    lift_angle: float | None


def anchor_image_of_s_perp(S: FrameBundle, chart: ChartModel) -> AnchorImageResult:
    """Expression frame for the anchor image pi(S_perp), when liftable.

    pi(S_perp) is the annihilator of the covector parts of Ker(pi) ^ S, so
    the lift runs two symbolic nullspace solves: first for coefficient
    vectors c with sum_b c_b X_b = 0, then for vectors killed by the
    resulting covectors.
    """
    points = chart.sample_grid
    tol = chart.tolerances.rank_tolerance
    n = chart.dimension

    # pointwise spans for validation
    mats = S.fiber_matrices(points)
    spans = []
    for p in range(points.shape[0]):
        s_sub = Subspace.from_matrix(mats[p], tol)
        perp = orthogonal(s_sub)
        vec_parts = perp.basis_matrix[:n, :]
        spans.append(Subspace.from_matrix(np.vstack([vec_parts, np.zeros((n, perp.rank))]), tol))
    ranks = [s.rank for s in spans]
    if len(set(ranks)) != 1:
        return AnchorImageResult(None, False, None, None)
    rank = ranks[0]

    x_rows = [[sec.vector_field.component(i) for sec in S.sections] for i in range(n)]
    kernel_coeffs = symbolic_nullspace(x_rows, chart, n_cols=len(S.sections))
    if kernel_coeffs is None:
        return AnchorImageResult(None, True, rank, None)
    covectors = []
    for c in kernel_coeffs:
        comps = []
        for i in range(n):
            acc = ZERO
            for sec, cc in zip(S.sections, c):
                acc = add(acc, mul(cc, sec.one_form_field.component(i)))
            comps.append(acc)
        covectors.append(comps)
    if covectors:
        v_basis = symbolic_nullspace(covectors, chart, n_cols=n)
        if v_basis is None:
            return AnchorImageResult(None, True, rank, None)
    else:
        v_basis = [[ONE if j == i else ZERO for j in range(n)] for i in range(n)]

    vfields = [vector_field(list(vec)) for vec in v_basis]
    if len(vfields) != rank:
        return AnchorImageResult(None, True, rank, None)
    worst = 0.0
    if vfields:
        vals = np.stack([v.values(points) for v in vfields], axis=2)
        for p in range(points.shape[0]):
            lifted = Subspace.from_matrix(
                np.vstack([vals[p], np.zeros_like(vals[p])]), tol)
            if lifted.rank != rank:
                return AnchorImageResult(None, True, rank, None)
            worst = max(worst, max_principal_angle(lifted, spans[p]))
        if worst > 1e-6:
            return AnchorImageResult(None, True, rank, None)
    return AnchorImageResult(tuple(vfields), True, rank, worst)


@dataclass(frozen=True)
class Verdict:
    certified: bool | None
    route: str


@dataclass(frozen=True)
class CanonicalReport:
    """Decision report: which of the three canonical-chain properties are
    certified, and by which route."""

    applicable: bool
    d_involutive: SpanResidualReport | None
    s_involutive: SpanResidualReport | None
    hypothesis_constant_rank: bool
    hypothesis_rank: int | None
    hypothesis_frobenius: SpanResidualReport | None
    hypothesis_holds: bool | None
    stretch: StretchResult | None
    condition_preserved: SpanResidualReport | None
    ds_involutive: SpanResidualReport | None
    closed_span_sufficient: SpanResidualReport | None
    canonical: Verdict
    stretch_is_involutive: Verdict
    stretch_preserved: Verdict
    notes: tuple[str, ...]

    def lines(self) -> list[str]:
        out = []
        if not self.applicable:
            out.append("not applicable: D or S is not involutive")
        for name, v in (("canonical direction", self.canonical),
                        ("stretched bundle involutive", self.stretch_is_involutive),
                        ("stretch preserved by S", self.stretch_preserved)):
            state = {True: "certified", False: "refuted", None: "undecided"}[v.certified]
            out.append(f"{name}: {state} ({v.route})")
        for note in self.notes:
            out.append(f"note: {note}")
        return out


def decide_canonical(D: FrameBundle, S: FrameBundle, chart: ChartModel) -> CanonicalReport:
    """Run the decision procedure for canonicity of S relative to D.

    Certification routes, in order: (1) if the anchor image of S_perp is a
    regular integrable distribution, the three chain properties are
    equivalent and the preservation check decides all of them; (2) the
    closed-span sufficient condition [S, D] inside D; (3) direct measurement
    where a lifted frame makes a residual computable. The canonicity
    definition itself (a local invariant section through every point) is not
    directly decidable numerically, and the report says which proxy decided.
    """
    notes: list[str] = []
    d_inv = check_involutive(D, chart, "D involutive")
    s_inv = check_involutive(S, chart, "S involutive")
    if not (d_inv.passed and s_inv.passed):
        undec = Verdict(None, "not applicable: D or S not involutive")
        return CanonicalReport(False, d_inv, s_inv, False, None, None, None,
                               None, None, None, None, undec, undec, undec, ())

    anchor_img = anchor_image_of_s_perp(S, chart)
    frob = None
    if not anchor_img.constant_rank:
        hypothesis = False
        notes.append("anchor image of S_perp is not regular (rank varies); "
                     "equivalence hypothesis fails")
    elif anchor_img.vfields is None:
        hypothesis = None
        notes.append("anchor image of S_perp admits no stable expression frame; "
                     "integrability left unverified")
    else:
        if anchor_img.rank == 0:
            frob = SpanResidualReport(0.0, chart.tolerances.bracket_residual,
                                      (0, 0), 0, 0, chart.sample_grid.shape[0],
                                      "pi(S_perp) integrability")
        else:
            frob = frobenius_involutive(list(anchor_img.vfields), chart,
                                        "pi(S_perp) integrability")
        hypothesis = frob.passed

    result = stretch_bundle(D, S, chart)
    cond_c = None
    ds_inv = None
    if result.frame is not None:
        cond_c = check_S_preserves(S, result.frame, chart,
                                   label="[S, stretch] in stretch")
        ds_inv = check_involutive(result.frame, chart, "stretch involutive")
    else:
        notes.append("stretched bundle admits no expression frame; bracket "
                     "checks on it are unavailable (pointwise bases only)")
    closed_span = check_brackets_in_span(S, D, D, chart, "[S, D] in D")

    # assemble verdicts
    if cond_c is not None:
        c_verdict = Verdict(cond_c.passed, "measured bracket residual")
    else:
        c_verdict = Verdict(None, "no expression frame for the stretch")

    if ds_inv is not None:
        b_verdict = Verdict(ds_inv.passed, "measured involutivity of the stretched frame")
    elif hypothesis and cond_c is not None:
        b_verdict = Verdict(cond_c.passed, "equivalence under the integrable-regular hypothesis")
    else:
        b_verdict = Verdict(None, "no expression frame for the stretch")

    if hypothesis and cond_c is not None:
        a_verdict = Verdict(
            cond_c.passed,
            "equivalence under the integrable-regular hypothesis, decided by the preservation check")
    elif hypothesis and closed_span.passed:
        a_verdict = Verdict(True, "closed-span sufficient condition [S, D] in D")
    else:
        a_verdict = Verdict(None, "not decidable by the implemented criteria")

    if ds_inv is not None and cond_c is not None and ds_inv.passed and not cond_c.passed:
        notes.append("inconsistency: stretch measured involutive but preservation fails")

    return CanonicalReport(
        applicable=True,
        d_involutive=d_inv,
        s_involutive=s_inv,
        hypothesis_constant_rank=anchor_img.constant_rank,
        hypothesis_rank=anchor_img.rank,
        hypothesis_frobenius=frob,
        hypothesis_holds=hypothesis,
        stretch=result,
        condition_preserved=cond_c,
        ds_involutive=ds_inv,
        closed_span_sufficient=closed_span,
        canonical=a_verdict,
        stretch_is_involutive=b_verdict,
        stretch_preserved=c_verdict,
        notes=tuple(notes),
    )
