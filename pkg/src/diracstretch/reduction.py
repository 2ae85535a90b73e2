"""Reduction via stretching: images of Dirac fibers under linear maps,
quotient bivectors on adapted coordinates, and the coupling constructions on
a fibered chart.

The quotient pipeline stretches graph(Pi) along B + 0, pulls the result back
to the submanifold, pushes it forward along the adapted-coordinate
projection, and probes well-definedness by comparing the extracted bivector
at distinct points of the same fiber. The coupling constructions build the
same Dirac subbundle two ways (from the vertical bivector and from the
horizontal 2-form) and check the condition list governing involutivity.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from typing import Sequence

import numpy as np

from .chart import ChartModel
from .constraints import ConstraintSet, level_set_grid
from .courant import Section
from .errors import NumericalError, PreconditionError
from .expressions import ScalarExpr, ZERO, add, eval_jet_grid, mul, num
from .fields import (TensorField, bivector_field, bivector_jacobiator,
                     exterior_derivative_field, lie_bracket_field,
                     lie_derivative_bivector_values, one_form_field,
                     two_form_field, vector_field)
from .linpair import (Subspace, max_principal_angle, stretch_point,
                      subspace_intersection)
from .stretch import (FrameBundle, StretchResult, graph_frame_of_bivector,
                      orthonormal_frames, span_residuals, stretch_bundle,
                      symbolic_nullspace)


class NonInjectiveError(PreconditionError):
    pass


class NonSurjectiveError(PreconditionError):
    pass


class NotAGraphError(PreconditionError):
    """Quotient Dirac subspace is not the graph of a bivector (it meets the
    tangent directions nontrivially, failing D + TM = TM + T*M)."""


class NotProjectableError(PreconditionError):
    """Fiber-to-fiber discrepancy of the quotient bivector above tolerance."""

    def __init__(self, discrepancy: float, point, partner):
        self.discrepancy = discrepancy
        self.point = np.asarray(point)
        self.partner = np.asarray(partner)
        super().__init__(
            f"quotient bivector varies along a fiber (discrepancy {discrepancy:.3e})")


# ---------------------------------------------------------------------------
# pointwise images of Dirac fibers


def backward_image(d_point: Subspace, d_iota: np.ndarray, point=None) -> Subspace:
    """Pullback {(v, d_iota^T xi) : (d_iota v, xi) in D} along an injective map."""
    d_iota = np.asarray(d_iota, dtype=float)
    n_m, n_n = d_iota.shape
    if 2 * n_m != d_point.ambient_dim:
        raise PreconditionError("map codomain does not match the fiber")
    tol = d_point.rank_tolerance
    if n_m == n_n and np.array_equal(d_iota, np.eye(n_m)):
        return d_point
    if np.linalg.matrix_rank(d_iota, tol=1e-12) != n_n:
        raise NonInjectiveError("differential of the embedding is not injective")
    reach = np.zeros((2 * n_m, n_n + n_m))
    reach[:n_m, :n_n] = d_iota
    reach[n_m:, n_n:] = np.eye(n_m)
    w = subspace_intersection(d_point, Subspace.from_matrix(reach, tol))
    pinv = np.linalg.pinv(d_iota)
    cols = []
    for col in w.basis_matrix.T:
        v = pinv @ col[:n_m]
        eta = d_iota.T @ col[n_m:]
        cols.append(np.concatenate([v, eta]))
    mat = np.column_stack(cols) if cols else np.zeros((2 * n_n, 0))
    return Subspace.from_matrix(mat, tol)


def forward_image(d_point: Subspace, dp: np.ndarray, point=None) -> Subspace:
    """Pushforward {(dp v, eta) : (v, dp^T eta) in D} along a surjective map."""
    dp = np.asarray(dp, dtype=float)
    q, n = dp.shape
    if 2 * n != d_point.ambient_dim:
        raise PreconditionError("map domain does not match the fiber")
    tol = d_point.rank_tolerance
    if q == n and np.array_equal(dp, np.eye(n)):
        return d_point
    if np.linalg.matrix_rank(dp, tol=1e-12) != q:
        raise NonSurjectiveError("differential of the projection is not surjective")
    reach = np.zeros((2 * n, n + q))
    reach[:n, :n] = np.eye(n)
    reach[n:, n:] = dp.T
    w = subspace_intersection(d_point, Subspace.from_matrix(reach, tol))
    pinv_t = np.linalg.pinv(dp.T)
    cols = []
    for col in w.basis_matrix.T:
        u = dp @ col[:n]
        eta = pinv_t @ col[n:]
        cols.append(np.concatenate([u, eta]))
    mat = np.column_stack(cols) if cols else np.zeros((2 * q, 0))
    return Subspace.from_matrix(mat, tol)


def bivector_from_graph(sub: Subspace, tol: float) -> np.ndarray:
    """Extract the bivector matrix of a Lagrangian graph subspace.

    Graphs of bivectors are exactly the Lagrangians summing with the tangent
    directions to the whole fiber, i.e. meeting TM + 0 only in zero (a
    singular bivector's graph legitimately meets 0 + T*)."""
    n = sub.fiber_dim
    tangent = Subspace(2 * n, np.vstack([np.eye(n), np.zeros((n, n))]), tol)
    meet = subspace_intersection(sub, tangent)
    if meet.rank != 0:
        raise NotAGraphError(
            f"subspace meets the tangent directions in rank {meet.rank}")
    top = sub.basis_matrix[:n, :]
    bottom = sub.basis_matrix[n:, :]
    a = top @ np.linalg.pinv(bottom)
    resid = float(np.max(np.abs(a @ bottom - top))) if top.size else 0.0
    if resid > 1e2 * max(tol, 1e-12) * max(1.0, float(np.max(np.abs(top))) if top.size else 1.0):
        raise NumericalError(f"graph extraction residual {resid:.3e}")
    # graph columns satisfy v = Pi^T eta under the row convention
    # (pi_sharp eta)^j = eta_i Pi^{ij}, so the bivector matrix is a^T
    return a.T


# ---------------------------------------------------------------------------
# quotient reduction on adapted coordinates


@dataclass(frozen=True)
class ReductionData:
    """Submanifold constraints, the stretching directions B, and the adapted
    coordinates parametrizing the local quotient."""

    chart: ChartModel
    n_constraints: ConstraintSet
    b_frame: tuple[TensorField, ...]
    quotient_coords: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "b_frame", tuple(self.b_frame))
        object.__setattr__(self, "quotient_coords", tuple(self.quotient_coords))
        index = self.chart.coordinate_index
        for name in self.quotient_coords:
            if name not in index:
                raise PreconditionError(f"unknown quotient coordinate '{name}'")
        if len(set(self.quotient_coords)) != len(self.quotient_coords):
            raise PreconditionError("quotient coordinates must be distinct")
        for v in self.b_frame:
            if v.kind != "vector" or v.dimension != self.chart.dimension:
                raise PreconditionError("b_frame entries must be vector fields on the chart")

    @property
    def quotient_indices(self) -> tuple[int, ...]:
        index = self.chart.coordinate_index
        return tuple(index[name] for name in self.quotient_coords)


@dataclass(frozen=True)
class ReductionResult:
    points: np.ndarray
    bivectors: np.ndarray  # (P, q, q)
    quotient_coords: tuple[str, ...]
    f_rank: int
    fiber_discrepancy: float
    notes: tuple[str, ...]


def _tangent_basis(phi: ConstraintSet, point) -> np.ndarray:
    """Orthonormal basis of ker(d phi) at a point (columns)."""
    grads = phi.gradients(np.asarray(point, dtype=float)[None, :])[0]
    m, n = grads.shape
    if m == 0:
        return np.eye(n)
    sing = np.linalg.svd(grads, compute_uv=False)
    if sing[-1] <= 1e-9 * max(sing[0], 1e-300):
        raise PreconditionError("constraint differentials are rank-deficient on N")
    _, _, vh = np.linalg.svd(grads, full_matrices=True)
    return vh[m:].T


def _project_to_fiber(phi: ConstraintSet, anchor_coords: np.ndarray,
                      quotient_indices: Sequence[int], seed_point: np.ndarray,
                      tol: float = 1e-12, max_iter: int = 60) -> np.ndarray | None:
    """Newton-solve phi = level and quotient coords = anchor from a seed."""
    x = seed_point.copy()
    q_idx = list(quotient_indices)
    for _ in range(max_iter):
        vals = phi.values(x[None, :])[0]
        qres = x[q_idx] - anchor_coords
        full = np.concatenate([vals, qres])
        if float(np.max(np.abs(full))) < tol:
            return x
        jac_phi = phi.gradients(x[None, :])[0]
        jac_q = np.zeros((len(q_idx), x.size))
        for r, i in enumerate(q_idx):
            jac_q[r, i] = 1.0
        jac = np.vstack([jac_phi, jac_q])
        try:
            step = np.linalg.lstsq(jac, full, rcond=None)[0]
        except np.linalg.LinAlgError:
            return None
        x = x - step
    return None


def _plain_intersection(am: np.ndarray, bm: np.ndarray, tol: float) -> np.ndarray:
    """Orthonormal basis (columns) of the intersection of two column spans
    in R^n."""

    def compl(m):
        u, s, _ = np.linalg.svd(m, full_matrices=True)
        r = int(np.sum(s > tol * max(s[0] if s.size else 0.0, 1e-300)))
        return u[:, r:]

    stacked = np.vstack([compl(am).T, compl(bm).T])
    _, s, vh = np.linalg.svd(stacked, full_matrices=True)
    r = int(np.sum(s > tol * max(s[0] if s.size else 0.0, 1e-300)))
    return vh[r:].T


def _graph_fiber(pi: TensorField, point, tol: float) -> Subspace:
    from .linpair import graph_of_bivector_matrix
    return graph_of_bivector_matrix(
        pi.values(np.asarray(point, dtype=float)[None, :])[0], tol)


def _quotient_bivector_at(pi: TensorField, data: ReductionData, x: np.ndarray,
                          tol: float) -> tuple[np.ndarray, np.ndarray]:
    """One pass of the stretch / pull-back / push-forward pipeline at a
    point of N; returns (bivector on quotient coords, F basis columns)."""
    chart = data.chart
    n = chart.dimension
    phi = data.n_constraints
    q_idx = list(data.quotient_indices)
    q = len(q_idx)

    tn = _tangent_basis(phi, x)  # (n, n-m)
    if data.b_frame:
        bmat = np.stack([v.values(x[None, :])[0] for v in data.b_frame], axis=1)
        f_basis = _plain_intersection(bmat, tn, tol)
        s_b = Subspace.from_matrix(np.vstack([bmat, np.zeros_like(bmat)]), tol)
    else:
        bmat = np.zeros((n, 0))
        f_basis = np.zeros((n, 0))
        s_b = Subspace.zero(2 * n, tol)

    d = _graph_fiber(pi, x, tol)
    ds = stretch_point(d, s_b)
    pulled = backward_image(ds, tn)
    dp = tn[q_idx, :]
    if np.linalg.matrix_rank(dp, tol=1e-12) != q:
        raise NonSurjectiveError(
            "adapted coordinates do not project onto the quotient at a sample point")
    pushed = forward_image(pulled, dp)
    return bivector_from_graph(pushed, tol), f_basis


def marsden_ratiu_reduce(pi: TensorField, data: ReductionData,
                         sample_count: int | None = None,
                         probe_step: float = 0.25) -> ReductionResult:
    """Quotient bivector on the adapted coordinates, sampled over N.

    The bivector at each sampled point is the forward image (under the
    adapted-coordinate projection) of the backward image (under the
    submanifold inclusion) of the stretch of graph(Pi) along B + 0; the
    probe for well-definedness recomputes it at a second point of the same
    fiber and compares.
    """
    chart = data.chart
    n = chart.dimension
    tol = chart.tolerances.rank_tolerance
    proj_tol = chart.tolerances.bracket_residual
    phi = data.n_constraints
    q_idx = list(data.quotient_indices)
    q = len(q_idx)
    notes = ("well-definedness is probed on finitely many sampled fibers and "
             "extension directions; this is a confidence statement, not a certificate",)

    # exact identity path: nothing to cut, nothing to stretch, full quotient
    if phi.size == 0 and not data.b_frame and q == n and tuple(q_idx) == tuple(range(n)):
        points = chart.sample_grid if sample_count is None else chart.sample_grid[:sample_count]
        return ReductionResult(points, pi.values(points), data.quotient_coords,
                               0, 0.0, notes)

    points = (level_set_grid(phi, chart, sample_count)
              if phi.size else
              (chart.sample_grid if sample_count is None else chart.sample_grid[:sample_count]))

    f_ranks = []
    bivectors = []
    f_bases = []
    for x in points:
        a_here, f_basis = _quotient_bivector_at(pi, data, x, tol)
        bivectors.append(a_here)
        f_bases.append(f_basis)
        f_ranks.append(f_basis.shape[1])
        for col in f_basis.T:
            drift = float(np.max(np.abs(col[q_idx]))) if q else 0.0
            if drift > proj_tol:
                raise PreconditionError(
                    "quotient coordinates are not constant along the fiber "
                    f"directions (residual {drift:.3e})")

    if len(set(f_ranks)) > 1:
        raise PreconditionError(
            f"B ^ TN does not have constant rank over the sample (ranks {sorted(set(f_ranks))})")
    f_rank = f_ranks[0] if f_ranks else 0

    # fiber-to-fiber probe for well-definedness
    worst = 0.0
    if f_rank > 0:
        for x, a_here, f_basis in zip(points, bivectors, f_bases):
            for direction in f_basis.T:
                seed = x + probe_step * direction
                partner = _project_to_fiber(phi, x[q_idx], q_idx, seed)
                if partner is None or float(np.linalg.norm(partner - x)) < 1e-8:
                    continue
                a_there, _ = _quotient_bivector_at(pi, data, partner, tol)
                disc = float(np.max(np.abs(a_here - a_there)))
                worst = max(worst, disc)
                if disc > proj_tol:
                    raise NotProjectableError(disc, x, partner)

    return ReductionResult(np.asarray(points), np.stack(bivectors),
                           data.quotient_coords, f_rank, worst, notes)


# ---------------------------------------------------------------------------
# couplings on a fibered chart


@dataclass(frozen=True)
class CouplingData:
    """Splitting frames, horizontal 2-form and vertical bivector."""

    hor_frame: tuple[TensorField, ...]
    vert_frame: tuple[TensorField, ...]
    omega: TensorField
    pi_v: TensorField

    def __post_init__(self):
        object.__setattr__(self, "hor_frame", tuple(self.hor_frame))
        object.__setattr__(self, "vert_frame", tuple(self.vert_frame))
        if self.omega.kind != "two_form":
            raise PreconditionError("omega must be a two_form")
        if self.pi_v.kind != "bivector":
            raise PreconditionError("pi_v must be a bivector")
        for v in self.hor_frame + self.vert_frame:
            if v.kind != "vector":
                raise PreconditionError("frames must consist of vector fields")

    @property
    def dimension(self) -> int:
        return self.omega.dimension


@dataclass(frozen=True)
class CouplingLoadReport:
    split_ok: bool
    omega_vertical_residual: float
    pi_v_horizontal_residual: float
    projected: bool
    discarded_omega: float
    discarded_pi_v: float


def _frame_matrices(fields_: Sequence[TensorField], points: np.ndarray) -> np.ndarray:
    return np.stack([v.values(points) for v in fields_], axis=2)


def validate_coupling(data: CouplingData, chart: ChartModel,
                      project: bool = True) -> tuple[CouplingData, CouplingLoadReport]:
    """Check the splitting and the alignment of omega / pi_v with it.

    omega must vanish on vertical arguments and pi_v on covectors
    annihilating the vertical distribution. When the frames are constant
    over the grid and `project` is set, misaligned parts are projected away
    (the discarded residual is reported); otherwise misalignment beyond the
    bracket tolerance is an error.
    """
    n = chart.dimension
    points = chart.sample_grid
    tol = chart.tolerances.bracket_residual
    hm = _frame_matrices(data.hor_frame, points)
    vm = _frame_matrices(data.vert_frame, points)
    if hm.shape[2] + vm.shape[2] != n:
        raise PreconditionError("hor and vert frame sizes must add up to the dimension")
    stacked = np.concatenate([hm, vm], axis=2)
    sing = np.linalg.svd(stacked, compute_uv=False)
    split_ok = bool(np.all(sing[:, -1] > 1e-9 * np.maximum(sing[:, 0], 1e-300)))
    if not split_ok:
        raise PreconditionError("hor and vert frames do not split the tangent space")

    w_vals = data.omega.values(points)
    p_vals = data.pi_v.values(points)
    omega_resid = 0.0
    for b in range(vm.shape[2]):
        contr = np.einsum("pij,pi->pj", w_vals, vm[:, :, b])
        omega_resid = max(omega_resid, float(np.max(np.abs(contr))))
    # covectors annihilating Vert, pointwise
    pi_resid = 0.0
    for p in range(points.shape[0]):
        u, s, _ = np.linalg.svd(vm[p], full_matrices=True)
        r = int(np.sum(s > 1e-9 * max(s[0] if s.size else 0.0, 1e-300)))
        ann = u[:, r:]
        if ann.size:
            contr = ann.T @ p_vals[p]
            pi_resid = max(pi_resid, float(np.max(np.abs(contr))))

    projected = False
    discarded_w = 0.0
    discarded_p = 0.0
    result = data
    frames_constant = all(v.is_constant() for v in data.hor_frame + data.vert_frame)
    if project and frames_constant and (omega_resid > 1e-14 or pi_resid > 1e-14):
        frame0 = np.concatenate([hm[0], vm[0]], axis=1)
        inv = np.linalg.inv(frame0)
        nh = hm.shape[2]
        p_h = frame0[:, :nh] @ inv[:nh, :]
        p_v = frame0[:, nh:] @ inv[nh:, :]
        omega_new = _congruent_two_form(data.omega, p_h)
        pi_new = _congruent_bivector(data.pi_v, p_v)
        discarded_w = omega_resid
        discarded_p = pi_resid
        result = CouplingData(data.hor_frame, data.vert_frame, omega_new, pi_new)
        projected = True
    elif omega_resid > tol or pi_resid > tol:
        raise PreconditionError(
            "omega / pi_v are not aligned with the splitting and the frames are "
            f"not constant (residuals {omega_resid:.3e}, {pi_resid:.3e})")
    return result, CouplingLoadReport(split_ok, omega_resid, pi_resid,
                                      projected, discarded_w, discarded_p)


def _congruent_two_form(omega: TensorField, p_h: np.ndarray) -> TensorField:
    """omega'(u, w) = omega(P u, P w) for a constant projector P."""
    n = omega.dimension
    comps = {}
    for k in range(n):
        for l in range(k + 1, n):
            acc = ZERO
            for i in range(n):
                for j in range(n):
                    coef = p_h[i, k] * p_h[j, l]
                    if coef == 0.0:
                        continue
                    acc = add(acc, mul(num(coef), omega.component(i, j)))
            comps[(k, l)] = acc
    return two_form_field(n, comps)


def _congruent_bivector(pi: TensorField, p_v: np.ndarray) -> TensorField:
    """pi'^{kl} = P[k,i] pi^{ij} P[l,j] for a constant projector P."""
    n = pi.dimension
    comps = {}
    for k in range(n):
        for l in range(k + 1, n):
            acc = ZERO
            for i in range(n):
                for j in range(n):
                    coef = p_v[k, i] * p_v[l, j]
                    if coef == 0.0:
                        continue
                    acc = add(acc, mul(num(coef), pi.component(i, j)))
            comps[(k, l)] = acc
    return bivector_field(n, comps)


def _omega_flat_section(hfield: TensorField, omega: TensorField) -> Section:
    """Section (h, omega_flat h) with (omega_flat h)_j = h^i omega_{ij}."""
    n = omega.dimension
    form = []
    for j in range(n):
        acc = ZERO
        for i in range(n):
            acc = add(acc, mul(hfield.component(i), omega.component(i, j)))
        form.append(acc)
    return Section(hfield, one_form_field(form))


def _pi_sharp_section(eta: Sequence[ScalarExpr], pi: TensorField) -> Section:
    """Section (pi^sharp eta, eta) with (pi^sharp eta)^j = eta_i pi^{ij}."""
    n = pi.dimension
    vec = []
    for j in range(n):
        acc = ZERO
        for i in range(n):
            acc = add(acc, mul(eta[i], pi.component(i, j)))
        vec.append(acc)
    return Section(vector_field(vec), one_form_field(list(eta)))


def coupling_frames_a(data: CouplingData) -> tuple[FrameBundle, FrameBundle]:
    """Construction from the vertical side: D = graph(pi_v^sharp),
    S = graph of the horizontal 2-form map into the vertical annihilator."""
    d = graph_frame_of_bivector(data.pi_v)
    s_secs = [_omega_flat_section(h, data.omega) for h in data.hor_frame]
    return d, FrameBundle(tuple(s_secs), len(s_secs))


def hor_annihilator_coframe(data: CouplingData, chart: ChartModel) -> list[list[ScalarExpr]]:
    """Expression coframe of the annihilator of the horizontal distribution."""
    n = chart.dimension
    rows = [[h.component(i) for i in range(n)] for h in data.hor_frame]
    basis = symbolic_nullspace(rows, chart, n_cols=n)
    if basis is None:
        raise PreconditionError(
            "horizontal annihilator admits no stable expression coframe on this chart")
    return basis


def coupling_frames_b(data: CouplingData, chart: ChartModel) -> tuple[FrameBundle, FrameBundle]:
    """Construction from the horizontal side: D' spans the graph of the
    horizontal 2-form plus the horizontal annihilator; S' pairs annihilator
    covectors with their bivector images."""
    etas = hor_annihilator_coframe(data, chart)
    n = chart.dimension
    d_secs = [_omega_flat_section(h, data.omega) for h in data.hor_frame]
    d_secs += [Section(vector_field([ZERO] * n), one_form_field(list(eta)))
               for eta in etas]
    s_secs = [_pi_sharp_section(eta, data.pi_v) for eta in etas]
    return FrameBundle(tuple(d_secs), n), FrameBundle(tuple(s_secs), len(s_secs))


def coupling_build_a(data: CouplingData, chart: ChartModel) -> StretchResult:
    d, s = coupling_frames_a(data)
    return stretch_bundle(d, s, chart)


def coupling_build_b(data: CouplingData, chart: ChartModel) -> StretchResult:
    d, s = coupling_frames_b(data, chart)
    return stretch_bundle(d, s, chart)


def coupling_agreement(a: StretchResult, b: StretchResult) -> float:
    """Max pointwise principal angle between the two constructions."""
    worst = 0.0
    for sa, sb in zip(a.pointwise, b.pointwise):
        worst = max(worst, max_principal_angle(sa, sb))
    return worst


@dataclass(frozen=True)
class ConditionResult:
    residual: float
    passed: bool


@dataclass(frozen=True)
class CouplingConditionsReport:
    projectable_frame: ConditionResult
    vertical_bivector_closed: ConditionResult       # i)
    horizontally_closed: ConditionResult            # ii)
    vertical_invariance: ConditionResult            # iii)
    image_invariance: ConditionResult               # iii)'
    horizontal_invariance: ConditionResult          # iv)
    iii_implies_iii_prime_consistent: bool
    derived: dict[str, bool]
    tolerance: float

    def lines(self) -> list[str]:
        rows = [
            ("projectable horizontal frame", self.projectable_frame),
            ("i) vertical bivector integrable", self.vertical_bivector_closed),
            ("ii) horizontally closed", self.horizontally_closed),
            ("iii) vertical invariance of omega", self.vertical_invariance),
            ("iii)' invariance along bivector images", self.image_invariance),
            ("iv) horizontal invariance of pi_v", self.horizontal_invariance),
        ]
        out = [f"{name}: residual {c.residual:.3e} [{'pass' if c.passed else 'FAIL'}]"
               for name, c in rows]
        for key in sorted(self.derived):
            out.append(f"derived: {key}: {'yes' if self.derived[key] else 'no'}")
        if not self.iii_implies_iii_prime_consistent:
            out.append("warning: iii) passed while iii)' failed (should be impossible)")
        return out


def coupling_conditions(data: CouplingData, chart: ChartModel) -> CouplingConditionsReport:
    """Evaluate the condition list for the coupling constructions.

    The quantifiers over projectable fields are realized on the user's
    horizontal frame, whose projectability is itself checked first (bracket
    residual against the vertical span).
    """
    points = chart.sample_grid
    tol = chart.tolerances.bracket_residual
    rank_tol = chart.tolerances.rank_tolerance
    n = chart.dimension

    vm = _frame_matrices(data.vert_frame, points)
    v_bases, v_ranks = orthonormal_frames(vm, rank_tol)
    if len(set(v_ranks.tolist())) != 1:
        raise PreconditionError("vertical distribution rank varies over the grid")

    # projectability: [v_b, h_a] must stay vertical
    proj_res = 0.0
    for v in data.vert_frame:
        for h in data.hor_frame:
            br = lie_bracket_field(v, h).values(points)
            proj_res = max(proj_res, float(np.max(span_residuals(br, v_bases))))
    projectable = ConditionResult(proj_res, proj_res <= tol)

    # i) Schouten self-bracket of the vertical bivector
    jac = bivector_jacobiator(data.pi_v, points)
    cond_i = ConditionResult(jac, jac <= tol)

    # ii) d omega restricted to horizontal triples
    hm = _frame_matrices(data.hor_frame, points)
    dw = exterior_derivative_field(data.omega).values(points)
    res_ii = 0.0
    nh = hm.shape[2]
    for a, b, c in combinations(range(nh), 3):
        contr = np.einsum("pijk,pi,pj,pk->p", dw, hm[:, :, a], hm[:, :, b], hm[:, :, c])
        res_ii = max(res_ii, float(np.max(np.abs(contr))))
    cond_ii = ConditionResult(res_ii, res_ii <= tol)

    # pairwise omega evaluations as expressions
    g_exprs = []
    for a, b in combinations(range(nh), 2):
        acc = ZERO
        for i in range(n):
            for j in range(n):
                acc = add(acc, mul(mul(data.hor_frame[a].component(i),
                                       data.hor_frame[b].component(j)),
                                   data.omega.component(i, j)))
        g_exprs.append(acc)

    def directional_residual(vfields_vals: np.ndarray) -> float:
        # vfields_vals: (P, n, k) field values to differentiate along
        worst = 0.0
        for g in g_exprs:
            _, grad = eval_jet_grid(g, points)
            contr = np.einsum("pnk,pn->pk", vfields_vals, grad)
            if contr.size:
                worst = max(worst, float(np.max(np.abs(contr))))
        return worst

    res_iii = directional_residual(vm)
    cond_iii = ConditionResult(res_iii, res_iii <= tol)

    # iii)': along the image of the bivector (rows of pi_v as vector fields)
    p_vals = data.pi_v.values(points)
    img = np.transpose(p_vals, (0, 2, 1))  # columns pi^sharp(dx_i)
    res_iii_p = directional_residual(img)
    cond_iii_p = ConditionResult(res_iii_p, res_iii_p <= tol)

    # iv) Lie derivative of pi_v along the horizontal frame
    res_iv = 0.0
    for h in data.hor_frame:
        lv = lie_derivative_bivector_values(h, data.pi_v, points)
        res_iv = max(res_iv, float(np.max(np.abs(lv))))
    cond_iv = ConditionResult(res_iv, res_iv <= tol)

    consistent = (not cond_iii.passed) or cond_iii_p.passed
    derived = {
        "construction_a_dirac": cond_i.passed and cond_ii.passed and cond_iii.passed
                                and cond_iv.passed,
        "graph_of_two_form_dirac": cond_ii.passed,
        "image_stretch_involutive": cond_i.passed and cond_iv.passed,
        "construction_b_dirac": cond_i.passed and cond_ii.passed and cond_iii_p.passed
                                and cond_iv.passed,
    }
    return CouplingConditionsReport(projectable, cond_i, cond_ii, cond_iii,
                                    cond_iii_p, cond_iv, consistent, derived, tol)
