"""Linear algebra of the split-signature pairing on a single fiber V + V*.

A fiber element is a pair (X, xi) of a tangent vector and a covector at one
point, flattened to a vector of length 2n. The pairing is

    <(X, xi), (X', xi')> = (xi(X') + xi'(X)) / 2,

symmetric, nondegenerate, of signature (n, n). Subspaces are held as
orthonormal (Euclidean) bases with an SVD rank cutoff; all predicates are
relative to that tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable

import numpy as np
from scipy.linalg import subspace_angles

from .errors import NumericalError, PreconditionError

RANK_TOL = 1e-9


class DimensionMismatchError(PreconditionError):
    pass


class NotIsotropicError(PreconditionError):
    def __init__(self, which: str, defect: float):
        self.which = which
        self.defect = defect
        super().__init__(f"{which} is not isotropic (pairing defect {defect:.3e})")


class NotLagrangianError(PreconditionError):
    def __init__(self, which: str, detail: str):
        self.which = which
        super().__init__(f"{which} is not Lagrangian: {detail}")


@dataclass(frozen=True)
class FiberElement:
    """An element (X, xi) of the fiber TM + T*M at a point."""

    vector_part: tuple[float, ...]
    covector_part: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "vector_part", tuple(float(v) for v in self.vector_part))
        object.__setattr__(self, "covector_part", tuple(float(v) for v in self.covector_part))
        if len(self.vector_part) != len(self.covector_part):
            raise DimensionMismatchError(
                "vector and covector parts have different lengths "
                f"({len(self.vector_part)} vs {len(self.covector_part)})"
            )

    @property
    def dimension(self) -> int:
        return len(self.vector_part)

    def as_vector(self) -> np.ndarray:
        """Flatten to a vector of length 2n (vector part first)."""
        return np.array(self.vector_part + self.covector_part, dtype=float)

    @staticmethod
    def from_vector(vec: np.ndarray) -> "FiberElement":
        vec = np.asarray(vec, dtype=float)
        if vec.ndim != 1 or vec.size % 2 != 0:
            raise DimensionMismatchError("fiber vector must have even length")
        n = vec.size // 2
        return FiberElement(tuple(vec[:n]), tuple(vec[n:]))


@dataclass(frozen=True)
class PairingGram:
    """Gram matrix of the split pairing in the standard fiber basis."""

    dimension: int
    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if m.shape != (2 * self.dimension, 2 * self.dimension):
            raise DimensionMismatchError("pairing matrix must be 2n x 2n")
        if not np.allclose(m, m.T):
            raise PreconditionError("pairing matrix must be symmetric")
        eigs = np.linalg.eigvalsh(m)
        if np.any(np.abs(eigs) < 1e-12):
            raise PreconditionError("pairing matrix is degenerate")
        if int(np.sum(eigs > 0)) != self.dimension:
            raise PreconditionError("pairing matrix must have signature (n, n)")
        object.__setattr__(self, "matrix", m)

    @staticmethod
    def standard(dimension: int) -> "PairingGram":
        return PairingGram(dimension, pairing_matrix(dimension))


@lru_cache(maxsize=None)
def _pairing_matrix_cached(n: int) -> np.ndarray:
    g = np.zeros((2 * n, 2 * n))
    g[:n, n:] = 0.5 * np.eye(n)
    g[n:, :n] = 0.5 * np.eye(n)
    g.setflags(write=False)
    return g


def pairing_matrix(n: int) -> np.ndarray:
    """Gram matrix of the pairing: <z, z'> = z^T G z'."""
    return _pairing_matrix_cached(n)


def pair(e1: FiberElement, e2: FiberElement) -> float:
    """Evaluate the symmetric pairing of two fiber elements."""
    if e1.dimension != e2.dimension:
        raise DimensionMismatchError(
            f"fiber dimensions differ ({e1.dimension} vs {e2.dimension})"
        )
    x1, xi1 = np.array(e1.vector_part), np.array(e1.covector_part)
    x2, xi2 = np.array(e2.vector_part), np.array(e2.covector_part)
    return 0.5 * (float(xi1 @ x2) + float(xi2 @ x1))


def _orthonormalize(mat: np.ndarray, tol: float) -> np.ndarray:
    """Orthonormal column basis of the column span, SVD rank cutoff `tol`."""
    if mat.size == 0:
        return mat.reshape(mat.shape[0], 0)
    u, s, _ = np.linalg.svd(mat, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return np.zeros((mat.shape[0], 0))
    rank = int(np.sum(s > tol * s[0]))
    return u[:, :rank]


def _nullspace(mat: np.ndarray, tol: float, ambient: int) -> np.ndarray:
    """Orthonormal basis of {v : mat @ v = 0}; mat has `ambient` columns."""
    if mat.size == 0:
        return np.eye(ambient)
    _, s, vh = np.linalg.svd(mat, full_matrices=True)
    if s.size == 0 or s[0] == 0.0:
        return np.eye(ambient)
    rank = int(np.sum(s > tol * s[0]))
    return vh[rank:].T


@dataclass(frozen=True)
class Subspace:
    """A linear subspace of a 2n-dimensional fiber.

    `basis_matrix` has orthonormal columns spanning the subspace; `rank` is
    its column count after the SVD cutoff applied at construction.
    """

    ambient_dim: int
    basis_matrix: np.ndarray
    rank_tolerance: float = RANK_TOL

    def __post_init__(self):
        m = np.asarray(self.basis_matrix, dtype=float).reshape(self.ambient_dim, -1)
        if self.ambient_dim % 2 != 0:
            raise DimensionMismatchError("ambient dimension must be even (2n)")
        m = m.copy()
        m.setflags(write=False)
        object.__setattr__(self, "basis_matrix", m)

    @property
    def rank(self) -> int:
        return self.basis_matrix.shape[1]

    @property
    def fiber_dim(self) -> int:
        return self.ambient_dim // 2

    @property
    def basis(self) -> tuple[FiberElement, ...]:
        return tuple(FiberElement.from_vector(c) for c in self.basis_matrix.T)

    @staticmethod
    def from_matrix(mat: np.ndarray, tol: float = RANK_TOL) -> "Subspace":
        mat = np.asarray(mat, dtype=float)
        return Subspace(mat.shape[0], _orthonormalize(mat, tol), tol)

    @staticmethod
    def from_elements(elements: Iterable[FiberElement], ambient_dim: int | None = None,
                      tol: float = RANK_TOL) -> "Subspace":
        elements = list(elements)
        if not elements and ambient_dim is None:
            raise DimensionMismatchError("ambient_dim required for an empty span")
        if not elements:
            return Subspace.zero(ambient_dim, tol)
        dim = 2 * elements[0].dimension
        if ambient_dim is not None and ambient_dim != dim:
            raise DimensionMismatchError("elements do not match ambient_dim")
        mat = np.column_stack([e.as_vector() for e in elements])
        return Subspace.from_matrix(mat, tol)

    @staticmethod
    def zero(ambient_dim: int, tol: float = RANK_TOL) -> "Subspace":
        return Subspace(ambient_dim, np.zeros((ambient_dim, 0)), tol)

    @staticmethod
    def full(ambient_dim: int, tol: float = RANK_TOL) -> "Subspace":
        return Subspace(ambient_dim, np.eye(ambient_dim), tol)

    def contains_vector(self, vec: np.ndarray, tol: float | None = None) -> bool:
        return containment_residual_vector(self, vec) <= (tol or self.rank_tolerance) * (
            1.0 + float(np.linalg.norm(vec))
        )


def containment_residual_vector(s: Subspace, vec: np.ndarray) -> float:
    """Least-squares residual of `vec` against the basis of `s`."""
    vec = np.asarray(vec, dtype=float)
    if s.rank == 0:
        return float(np.linalg.norm(vec))
    proj = s.basis_matrix @ (s.basis_matrix.T @ vec)
    return float(np.linalg.norm(vec - proj))


def containment_residual(a: Subspace, b: Subspace) -> float:
    """Max residual of a basis element of `a` against `b` (0 when a <= b)."""
    if a.rank == 0:
        return 0.0
    if b.rank == 0:
        return float(np.max(np.linalg.norm(a.basis_matrix, axis=0)))
    proj = b.basis_matrix @ (b.basis_matrix.T @ a.basis_matrix)
    return float(np.max(np.linalg.norm(a.basis_matrix - proj, axis=0)))


def containment_tol(tol: float) -> float:
    # containment residuals accumulate one extra rounding layer over the rank
    # cutoff, so leave a small margin over the raw tolerance
    return tol * 10.0


def is_contained(a: Subspace, b: Subspace, tol: float | None = None) -> bool:
    tol = tol if tol is not None else max(a.rank_tolerance, b.rank_tolerance)
    # basis columns are unit vectors, so an absolute comparison is scale-free
    return containment_residual(a, b) <= containment_tol(tol)


def subspaces_equal(a: Subspace, b: Subspace, tol: float | None = None) -> bool:
    """Mutual containment within tolerance."""
    if a.ambient_dim != b.ambient_dim:
        raise DimensionMismatchError("subspaces live in different fibers")
    return a.rank == b.rank and is_contained(a, b, tol) and is_contained(b, a, tol)


def principal_angles(a: Subspace, b: Subspace) -> np.ndarray:
    """Principal angles between two subspaces (radians, decreasing)."""
    if a.rank == 0 or b.rank == 0:
        return np.zeros(0)
    return subspace_angles(a.basis_matrix, b.basis_matrix)


def max_principal_angle(a: Subspace, b: Subspace) -> float:
    ang = principal_angles(a, b)
    return float(ang[0]) if ang.size else 0.0


def orthogonal(s: Subspace) -> Subspace:
    """Orthogonal complement with respect to the split pairing."""
    g = pairing_matrix(s.fiber_dim)
    constraints = s.basis_matrix.T @ g
    basis = _nullspace(constraints, s.rank_tolerance, s.ambient_dim)
    return Subspace(s.ambient_dim, basis, s.rank_tolerance)


def subspace_sum(a: Subspace, b: Subspace) -> Subspace:
    if a.ambient_dim != b.ambient_dim:
        raise DimensionMismatchError("subspaces live in different fibers")
    tol = max(a.rank_tolerance, b.rank_tolerance)
    mat = np.hstack([a.basis_matrix, b.basis_matrix])
    return Subspace.from_matrix(mat, tol)


def subspace_intersection(a: Subspace, b: Subspace) -> Subspace:
    """Intersection via the null space of stacked Euclidean complements."""
    if a.ambient_dim != b.ambient_dim:
        raise DimensionMismatchError("subspaces live in different fibers")
    tol = max(a.rank_tolerance, b.rank_tolerance)
    if a.rank == a.ambient_dim:
        return b
    if b.rank == b.ambient_dim:
        return a
    compl_a = _nullspace(a.basis_matrix.T, tol, a.ambient_dim)
    compl_b = _nullspace(b.basis_matrix.T, tol, b.ambient_dim)
    stacked = np.vstack([compl_a.T, compl_b.T])
    return Subspace(a.ambient_dim, _nullspace(stacked, tol, a.ambient_dim), tol)


def isotropy_defect(s: Subspace) -> float:
    """Largest absolute pairing of two basis elements."""
    if s.rank == 0:
        return 0.0
    g = pairing_matrix(s.fiber_dim)
    gram = s.basis_matrix.T @ g @ s.basis_matrix
    return float(np.max(np.abs(gram)))


def is_isotropic(s: Subspace, tol: float | None = None) -> bool:
    tol = tol if tol is not None else containment_tol(s.rank_tolerance)
    return isotropy_defect(s) <= tol


def is_lagrangian(s: Subspace, tol: float | None = None) -> bool:
    return s.rank == s.fiber_dim and is_isotropic(s, tol)


def stretch_point(d: Subspace, s: Subspace) -> Subspace:
    """Stretch the Lagrangian `d` along the isotropic `s`: (d ^ s_perp) + s."""
    if d.ambient_dim != s.ambient_dim:
        raise DimensionMismatchError("subspaces live in different fibers")
    if not is_lagrangian(d):
        detail = (f"rank {d.rank} != {d.fiber_dim}" if d.rank != d.fiber_dim
                  else f"pairing defect {isotropy_defect(d):.3e}")
        raise NotLagrangianError("d", detail)
    if not is_isotropic(s):
        raise NotIsotropicError("s", isotropy_defect(s))
    if s.rank == 0:
        return d
    core = subspace_intersection(d, orthogonal(s))
    return subspace_sum(core, s)


@dataclass(frozen=True)
class MinimalityReport:
    """Outcome of the closest-Dirac-subbundle comparison.

    For Lagrangian d, d_prime with isotropic s contained in d_prime, the
    intersection d_prime ^ d must sit inside stretch(d, s) ^ d, with equality
    exactly when d_prime equals the stretch.
    """

    containment_holds: bool
    intersections_equal: bool
    dprime_equals_stretch: bool
    equivalence_consistent: bool
    offending_vector: np.ndarray | None
    passed: bool


def stretch_minimality_check(d: Subspace, s: Subspace, d_prime: Subspace) -> MinimalityReport:
    """Verify that stretch(d, s) is closest to d among Lagrangians containing s."""
    if not is_lagrangian(d):
        raise NotLagrangianError("d", f"rank {d.rank}, defect {isotropy_defect(d):.3e}")
    if not is_lagrangian(d_prime):
        raise NotLagrangianError("d_prime", f"rank {d_prime.rank}, defect {isotropy_defect(d_prime):.3e}")
    if not is_isotropic(s):
        raise NotIsotropicError("s", isotropy_defect(s))
    if not is_contained(s, d_prime):
        raise PreconditionError("s is not contained in d_prime")

    ds = stretch_point(d, s)
    lhs = subspace_intersection(d_prime, d)
    rhs = subspace_intersection(ds, d)

    offending = None
    containment = True
    if lhs.rank > 0:
        proj = rhs.basis_matrix @ (rhs.basis_matrix.T @ lhs.basis_matrix) if rhs.rank else np.zeros_like(lhs.basis_matrix)
        residuals = np.linalg.norm(lhs.basis_matrix - proj, axis=0)
        worst = int(np.argmax(residuals))
        if residuals[worst] > containment_tol(d.rank_tolerance):
            containment = False
            offending = lhs.basis_matrix[:, worst]

    equal_intersections = containment and subspaces_equal(lhs, rhs)
    dprime_is_stretch = subspaces_equal(d_prime, ds)
    consistent = equal_intersections == dprime_is_stretch
    return MinimalityReport(
        containment_holds=containment,
        intersections_equal=equal_intersections,
        dprime_equals_stretch=dprime_is_stretch,
        equivalence_consistent=consistent,
        offending_vector=offending,
        passed=containment and consistent,
    )


# ---------------------------------------------------------------------------
# random generators and Lagrangian completion (used by tests and probes)

def graph_of_bivector_matrix(pi: np.ndarray, tol: float = RANK_TOL) -> Subspace:
    """Graph {(pi^sharp eta, eta)} of an antisymmetric matrix, row convention
    (pi^sharp eta)^j = eta_i pi[i, j]."""
    pi = np.asarray(pi, dtype=float)
    n = pi.shape[0]
    # column i is the basis element (pi[i, :], e_i)
    mat = np.vstack([pi.T, np.eye(n)])
    return Subspace(2 * n, _orthonormalize(mat, tol), tol)


def graph_of_two_form_matrix(omega: np.ndarray, tol: float = RANK_TOL) -> Subspace:
    """Graph {(X, omega_flat X)} of an antisymmetric matrix,
    (omega_flat X)_j = X^i omega[i, j]."""
    omega = np.asarray(omega, dtype=float)
    n = omega.shape[0]
    mat = np.vstack([np.eye(n), omega.T])
    return Subspace(2 * n, _orthonormalize(mat, tol), tol)


def random_lagrangian(n: int, rng: np.random.Generator, tol: float = RANK_TOL) -> Subspace:
    """Random Lagrangian: graph of a random 2-form, conjugated by a random
    set of coordinate swaps X_i <-> xi_i (which preserve the pairing)."""
    a = rng.standard_normal((n, n))
    omega = a - a.T
    basis = np.vstack([np.eye(n), omega.T])
    swap = rng.random(n) < 0.5
    for i in np.flatnonzero(swap):
        basis[[i, n + i]] = basis[[n + i, i]]
    return Subspace(2 * n, _orthonormalize(basis, tol), tol)


def random_isotropic(n: int, rank: int, rng: np.random.Generator,
                     tol: float = RANK_TOL) -> Subspace:
    """Random isotropic subspace of the given rank (0 <= rank <= n)."""
    if not 0 <= rank <= n:
        raise PreconditionError(f"isotropic rank must lie in [0, {n}]")
    lag = random_lagrangian(n, rng, tol)
    if rank == 0:
        return Subspace.zero(2 * n, tol)
    coeff = rng.standard_normal((n, rank))
    return Subspace.from_matrix(lag.basis_matrix @ coeff, tol)


def lagrangian_extension(s: Subspace, rng: np.random.Generator | None = None) -> Subspace:
    """Extend an isotropic subspace to a Lagrangian one.

    Greedy completion: by default adjoin, at each step, the null vector of the
    induced split form on s_perp/s built from the extreme eigenvalue pair of
    its Gram matrix (deterministic); with an rng, a random null vector of that
    form is used instead.
    """
    if not is_isotropic(s):
        raise NotIsotropicError("s", isotropy_defect(s))
    n = s.fiber_dim
    current = s
    g = pairing_matrix(n)
    while current.rank < n:
        perp = orthogonal(current)
        # Euclidean complement of `current` inside its pairing-orthogonal:
        # the split form is nondegenerate there, so null vectors exist.
        if current.rank:
            proj = perp.basis_matrix - current.basis_matrix @ (
                current.basis_matrix.T @ perp.basis_matrix)
        else:
            proj = perp.basis_matrix
        reduced = _orthonormalize(proj, current.rank_tolerance)
        gram = reduced.T @ g @ reduced
        eigvals, eigvecs = np.linalg.eigh(gram)
        pos = eigvals > 0
        neg = eigvals < 0
        if not (np.any(pos) and np.any(neg)):
            raise NumericalError("split form lost signature during completion")
        if rng is None:
            ip, im = int(np.argmax(eigvals)), int(np.argmin(eigvals))
            vp = eigvecs[:, ip] / np.sqrt(eigvals[ip])
            vm = eigvecs[:, im] / np.sqrt(-eigvals[im])
        else:
            vp = eigvecs[:, pos] @ rng.standard_normal(int(np.sum(pos)))
            vm = eigvecs[:, neg] @ rng.standard_normal(int(np.sum(neg)))
            qp = float(vp @ gram @ vp)
            qm = -float(vm @ gram @ vm)
            if qp < 1e-8 or qm < 1e-8:
                ip, im = int(np.argmax(eigvals)), int(np.argmin(eigvals))
                vp = eigvecs[:, ip] / np.sqrt(eigvals[ip])
                vm = eigvecs[:, im] / np.sqrt(-eigvals[im])
            else:
                vp = vp / np.sqrt(qp)
                vm = vm / np.sqrt(qm)
        # q(vp) = 1 and q(vm) = -1 with vp, vm gram-orthogonal, so vp + vm is null
        null_vec = reduced @ (vp + vm)
        candidate = Subspace.from_matrix(
            np.hstack([current.basis_matrix, null_vec[:, None]]), current.rank_tolerance)
        if candidate.rank != current.rank + 1 or not is_isotropic(candidate):
            raise NumericalError("greedy Lagrangian completion failed to extend")
        current = candidate
    return current
