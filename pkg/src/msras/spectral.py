"""Local particular solves, spectral basis construction, and the coarse space.

The local eigenproblem lives on the discretely a-harmonic subspace of the
oversampling domain: energy of the partition-of-unity-weighted restriction
against the local energy. It is solved by eliminating the interior block:
with interior dofs I1 and interface dofs I2 of omega_i^*, harmonic vectors
are parameterized by their interface values through H = [-A11^{-1} A12; I],
the local energy becomes the Schur complement S = A22 - A21 A11^{-1} A12 and
the weighted Gram becomes Ptil = H^T (X A_omega X) H. The pencil
Ptil x = lambda S x on the interface is exactly equivalent to the full
eigenproblem, at a fraction of the dense size.

Zero-energy harmonic modes (constants on subdomains not touching the
Dirichlet boundary) appear as kernel vectors of S; they are always retained
first in the local basis.
"""

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sparse

from .decomp import pu_apply
from .errors import (
    EmptyBoundary,
    FactorizationFailure,
    NotPositiveDefinite,
    RankDeficientCoarse,
    TooManyModes,
)
from .grid import assemble_partial_stiffness
from .linalg import SparseSym, dense_generalized_sym_eig, extract_submatrix, factorize


def _local_node_map(system, dofs):
    """n_nodes-long map: node id -> position in `dofs`, -1 elsewhere."""
    node_map = np.full(system.node_to_free.shape[0], -1, dtype=np.int64)
    node_map[system.free_to_node[dofs]] = np.arange(dofs.size)
    return node_map


def local_stiffness(system, cellmask, dofs):
    """Stiffness of the bilinear form restricted to `cellmask` cells, on the
    local numbering of the free dofs `dofs`."""
    node_map = _local_node_map(system, dofs)
    return assemble_partial_stiffness(
        system.grid, system.coeff, cellmask, node_map, dofs.size
    )


def local_particular_solve(system, decomp, i):
    """Local source solve with zero boundary data on the internal boundary of
    omega_i^*: solves the principal subsystem on dofs0(omega_i^*) and extends
    by zero to dofs(omega_i^*)."""
    sub = decomp.subdomains[i]
    pos0 = sub.star_positions(sub.dofs0_star)
    try:
        A0 = extract_submatrix(system.A_free, sub.dofs0_star)
        phi0 = factorize(A0).solve(system.f_free[sub.dofs0_star])
    except NotPositiveDefinite as exc:
        raise FactorizationFailure(f"subdomain {i}: {exc}") from exc
    out = np.zeros(sub.dofs_star.size)
    out[pos0] = phi0
    return out


@dataclass
class ParticularField:
    """Per-subdomain particular solutions and their partition-of-unity glue."""

    locals: list
    glued: np.ndarray  # global free-dof vector


def particular_field(system, decomp, pu):
    locals_ = [local_particular_solve(system, decomp, i) for i in range(decomp.n_subdomains)]
    glued = np.zeros(system.n_free)
    for sub, loc in zip(decomp.subdomains, locals_):
        glued[sub.dofs_star] += pu_apply(pu, decomp, sub.id, loc)
    return ParticularField(locals=locals_, glued=glued)


@dataclass
class HarmonicMap:
    """Interface-values-to-harmonic-vector extension for one subdomain."""

    matrix: np.ndarray  # (n_star, n_boundary), columns are harmonic vectors
    interior_pos: np.ndarray
    boundary_pos: np.ndarray
    A_star: sparse.csr_matrix  # local energy matrix on dofs_star

    def extend(self, x_boundary):
        return self.matrix @ x_boundary


def reduce_to_harmonic(system, decomp, pu, i):
    """Interface reduction of the local eigenproblem on omega_i^*.

    Returns (S, Ptil, H): the interface Schur complement of the local energy,
    the harmonic-extended PU-weighted Gram matrix, and the extension map. The
    pencil Ptil x = lambda S x has exactly the eigenpairs of the eigenproblem
    on the a-harmonic subspace.
    """
    sub = decomp.subdomains[i]
    n_star = sub.dofs_star.size
    i1 = sub.star_positions(sub.dofs0_star)
    i2 = sub.star_positions(sub.boundary_star)
    if i2.size == 0:
        raise EmptyBoundary(
            f"subdomain {i}: omega^* has no internal boundary (covers the whole domain)"
        )

    A_star = local_stiffness(system, sub.cells_star, sub.dofs_star)
    A11 = A_star[i1][:, i1].tocsc()
    A12 = A_star[i1][:, i2]
    A22 = A_star[i2][:, i2].toarray()
    try:
        f11 = factorize(SparseSym(A11, validate=False))
    except NotPositiveDefinite as exc:
        raise FactorizationFailure(f"subdomain {i}: interior block not SPD: {exc}") from exc
    E = f11.solve(A12.toarray())  # A11^{-1} A12
    S = A22 - A12.T @ E
    S = 0.5 * (S + S.T)

    H = np.zeros((n_star, i2.size))
    H[i1, :] = -E
    H[i2, :] = np.eye(i2.size)

    A_omega = local_stiffness(system, sub.cells, sub.dofs_star)
    chi = pu.on_star(sub)
    PH = A_omega @ (chi[:, None] * H)
    Ptil = (chi[:, None] * H).T @ PH
    Ptil = 0.5 * (Ptil + Ptil.T)

    return S, Ptil, HarmonicMap(matrix=H, interior_pos=i1, boundary_pos=i2, A_star=A_star.tocsr())


@dataclass
class LocalSpectralBasis:
    """Retained eigenpairs of a local eigenproblem, as full local vectors on
    dofs(omega_i^*). Kernel (zero-energy) modes come first with eigenvalue
    +inf; the remaining eigenvalues are finite and non-increasing."""

    subdomain_id: int
    kind: str  # "harmonic" or "geneo"
    eigenvalues: np.ndarray
    vectors: np.ndarray  # (n_star, m)
    next_eigenvalue: float
    kernel_dim: int

    @property
    def n_modes(self):
        return self.vectors.shape[1]


def _assemble_basis(sub_id, kind, pencil, m, full_of, n_star):
    l = pencil.kernel_dim
    n_finite = pencil.eigenvalues.size
    if m < l:
        raise TooManyModes(
            f"subdomain {sub_id}: {l} zero-energy modes must be retained, got m={m}"
        )
    if m > l + n_finite:
        raise TooManyModes(
            f"subdomain {sub_id}: requested {m} modes, only {l + n_finite} available"
        )
    vecs = np.empty((n_star, m))
    vals = np.empty(m)
    for j in range(l):
        v = full_of(pencil.kernel_vectors[:, j])
        vecs[:, j] = v / np.linalg.norm(v)
        vals[j] = np.inf
    take = m - l
    for j in range(take):
        vecs[:, l + j] = full_of(pencil.eigenvectors[:, j])
        vals[l + j] = pencil.eigenvalues[j]
    next_ev = float(pencil.eigenvalues[take]) if take < n_finite else 0.0
    return LocalSpectralBasis(
        subdomain_id=sub_id,
        kind=kind,
        eigenvalues=vals,
        vectors=vecs,
        next_eigenvalue=next_ev,
        kernel_dim=l,
    )


def solve_local_eigenproblem(S, Ptil, H, m, sub_id=0):
    """Top-m eigenpairs of Ptil x = lambda S x, expanded through H and
    normalized to unit local energy (kernel modes to unit Euclidean norm).

    The finite eigenvectors come out S-orthonormal, i.e. orthonormal in the
    local energy inner product on the oversampling domain.
    """
    pencil = dense_generalized_sym_eig(Ptil, S)
    return _assemble_basis(
        sub_id, "harmonic", pencil, m, H.extend, H.matrix.shape[0]
    )


def truncate_basis(basis, m):
    """Shrink a basis to its leading m modes, recomputing next_eigenvalue."""
    if m > basis.n_modes:
        raise TooManyModes(f"cannot grow a basis from {basis.n_modes} to {m} modes")
    if m < basis.kernel_dim:
        raise TooManyModes(
            f"{basis.kernel_dim} zero-energy modes must be retained, got m={m}"
        )
    if m == basis.n_modes:
        return basis
    return LocalSpectralBasis(
        subdomain_id=basis.subdomain_id,
        kind=basis.kind,
        eigenvalues=basis.eigenvalues[:m],
        vectors=basis.vectors[:, :m],
        next_eigenvalue=float(basis.eigenvalues[m]),
        kernel_dim=basis.kernel_dim,
    )


def geneo_eigenproblem(system, decomp, pu, i, m):
    """Overlap-zone eigenproblem on omega_i (no oversampling, no harmonic
    constraint): PU-weighted energy over the overlap zone against the full
    local energy, on all free dofs of omega_i. Vectors are zero-extended to
    dofs(omega_i^*) so gluing is uniform across basis kinds."""
    sub = decomp.subdomains[i]
    overlap = np.zeros_like(sub.cells)
    for other in decomp.subdomains:
        if other.id != i:
            overlap |= other.cells
    overlap &= sub.cells

    A_omega = local_stiffness(system, sub.cells, sub.dofs).toarray()
    if overlap.any():
        A_over = local_stiffness(system, overlap, sub.dofs).toarray()
    else:
        A_over = np.zeros_like(A_omega)
    chi = pu.weights[sub.id]
    K = chi[:, None] * A_over * chi[None, :]

    pencil = dense_generalized_sym_eig(K, A_omega)
    pos = sub.star_positions(sub.dofs)
    n_star = sub.dofs_star.size

    def full_of(x):
        out = np.zeros(n_star)
        out[pos] = x
        return out

    return _assemble_basis(i, "geneo", pencil, m, full_of, n_star)


@dataclass
class CoarseSpace:
    """Glued coarse basis with its Galerkin matrix and factorization.

    lam is the bound sqrt(xi * xi_star * max_i next_eigenvalue) computed from
    the bases this space was built from.
    """

    basis: sparse.csc_matrix  # (n_free, m) columns
    a_coarse: np.ndarray
    cho: tuple
    xi: int
    xi_star: int
    max_next_eigenvalue: float
    lam: float

    @property
    def m(self):
        return self.basis.shape[1]

    def apply(self, r):
        """R_S^T A_S^{-1} R_S r for a vector or a stack of columns."""
        rc = self.basis.T @ r
        return self.basis @ scipy.linalg.cho_solve(self.cho, rc)


def coarse_space_from_columns(system, columns, xi, xi_star, max_next_eigenvalue):
    """Assemble, rank-filter and factorize a coarse space from explicit
    global columns (already glued)."""
    cols = sparse.csc_matrix(columns)
    norms = np.sqrt(np.maximum((cols.T @ (system.A_free @ cols)).diagonal(), 0.0))
    keep = norms > 0.0
    if not np.all(keep):
        warnings.warn(
            f"dropping {int((~keep).sum())} zero-energy coarse columns", RankDeficientCoarse
        )
        cols = cols[:, keep]
        norms = norms[keep]
    cols = cols @ sparse.diags(1.0 / norms)
    a_c = (cols.T @ (system.A_free @ cols)).toarray()
    a_c = 0.5 * (a_c + a_c.T)

    tol = 1e-12 * scipy.linalg.norm(a_c, 2)
    _, piv, rank, _ = scipy.linalg.lapack.dpstrf(a_c, tol=tol, lower=1)
    if rank < a_c.shape[0]:
        warnings.warn(
            f"coarse basis rank {rank} < {a_c.shape[0]}; dropping dependent columns",
            RankDeficientCoarse,
        )
        keep = np.sort(piv[:rank] - 1)
        cols = cols[:, keep]
        a_c = (cols.T @ (system.A_free @ cols)).toarray()
        a_c = 0.5 * (a_c + a_c.T)
    cho = scipy.linalg.cho_factor(a_c)
    lam = float(np.sqrt(xi * xi_star * max_next_eigenvalue))
    return CoarseSpace(
        basis=cols.tocsc(),
        a_coarse=a_c,
        cho=cho,
        xi=xi,
        xi_star=xi_star,
        max_next_eigenvalue=max_next_eigenvalue,
        lam=lam,
    )


def build_coarse_space(system, decomp, pu, bases):
    """Glue local spectral bases into the global coarse space: column (i, j)
    is the zero-extended nodal product chi_i * phi_{i,j}, normalized in the
    a-norm. Near-duplicate columns are removed by pivoted rank filtering."""
    total = sum(b.n_modes for b in bases)
    if total < 1:
        raise ValueError("empty coarse space: every subdomain contributed 0 modes")
    n = system.n_free
    cols = sparse.lil_matrix((n, total))
    j = 0
    for basis in bases:
        sub = decomp.subdomains[basis.subdomain_id]
        for k in range(basis.n_modes):
            glued = pu_apply(pu, decomp, sub.id, basis.vectors[:, k])
            cols[sub.dofs_star, j] = glued
            j += 1
    max_next = max((b.next_eigenvalue for b in bases), default=0.0)
    return coarse_space_from_columns(
        system, cols.tocsc(), decomp.xi, decomp.xi_star, max_next
    )


def export_spectrum_csv(path, bases):
    """Per-subdomain eigenvalue decay: rows "i,k,lambda" (1-based k)."""
    with open(path, "w") as fh:
        fh.write("i,k,lambda\n")
        for b in bases:
            for k, lam in enumerate(b.eigenvalues, start=1):
                fh.write(f"{b.subdomain_id},{k},{lam:.17g}\n")
            fh.write(f"{b.subdomain_id},{b.n_modes + 1},{b.next_eigenvalue:.17g}\n")
