"""Two-level Schwarz preconditioners and the Richardson/GMRES drivers.

The hybrid restricted scheme applies PU-weighted local solves on the
oversampling domains additively and then a coarse correction on the updated
residual; that composition applied to A reproduces the one-shot multiscale
approximation map, so the Richardson iteration contracts in the energy norm
at the rate sqrt(xi * xi_star * max_i lambda_{i, m_i+1}).

Scheme variants: {hybrid_RAS_msgfem, RAS, AS, hybrid_AS} share the
oversampled local solves (RAS flavours weight them by the partition of
unity, AS flavours do not; hybrid flavours apply the coarse solve
multiplicatively, the rest additively). AS2_geneo is the standard fully
additive two-level method: unweighted local solves on the overlap subdomains
themselves plus an additive coarse solve.
"""

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import (
    Breakdown,
    DimensionMismatch,
    MissingCoarseSpace,
    Stagnation,
    TooLarge,
)
from .linalg import extract_submatrix, factorize

SCHEMES = ("hybrid_RAS_msgfem", "RAS", "AS", "hybrid_AS", "AS2_geneo")
_HYBRID = ("hybrid_RAS_msgfem", "hybrid_AS")
_PU_WEIGHTED = ("hybrid_RAS_msgfem", "RAS")


@dataclass
class PreconditionerState:
    scheme: str
    local_dofs: list  # global free indices per subdomain
    local_factors: list
    local_weights: list  # chi values aligned with local_dofs, or None
    coarse: object  # CoarseSpace or None
    system: object


def build_preconditioner(system, decomp, pu, scheme, coarse=None):
    """Factorize the per-subdomain solves and bundle the application state.

    MS-GFEM flavours solve on the interior dofs of the oversampling domains;
    AS2_geneo solves on the interior dofs of the overlap subdomains.
    """
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}, expected one of {SCHEMES}")
    local_dofs = []
    local_factors = []
    local_weights = []
    for sub in decomp.subdomains:
        dofs = sub.dofs0 if scheme == "AS2_geneo" else sub.dofs0_star
        local_dofs.append(dofs)
        local_factors.append(factorize(extract_submatrix(system.A_free, dofs)))
        if scheme in _PU_WEIGHTED:
            local_weights.append(pu.at(sub, dofs))
        else:
            local_weights.append(None)
    return PreconditionerState(
        scheme=scheme,
        local_dofs=local_dofs,
        local_factors=local_factors,
        local_weights=local_weights,
        coarse=coarse,
        system=system,
    )


def apply_one_level(state, r):
    """Sum of zero-extended (optionally PU-weighted) local solves of r.

    Accepts a vector or a stack of columns.
    """
    r = np.asarray(r, dtype=float)
    n = state.system.n_free
    if r.shape[0] != n:
        raise DimensionMismatch(f"residual has length {r.shape[0]}, expected {n}")
    z = np.zeros_like(r)
    for dofs, fac, w in zip(state.local_dofs, state.local_factors, state.local_weights):
        y = fac.solve(r[dofs])
        if w is not None:
            y = (w * y.T).T
        z[dofs] += y
    return z


def apply_preconditioner(state, r):
    """Full preconditioner application: one-level part plus the coarse solve,
    multiplicatively on the updated residual for hybrid schemes, additively
    otherwise. Linear and stateless."""
    z1 = apply_one_level(state, r)
    if state.coarse is None:
        if state.scheme in _HYBRID:
            raise MissingCoarseSpace(f"scheme {state.scheme} requires a coarse space")
        return z1
    if state.scheme in _HYBRID:
        return z1 + state.coarse.apply(r - state.system.A_free @ z1)
    return z1 + state.coarse.apply(r)


def msgfem_map(state, v):
    """The one-shot multiscale approximation of v: precondition A v. For the
    right-hand side a(v, .) this is exactly the coarse-plus-local-solve
    approximation whose error contracts by the coarse-space bound."""
    if state.scheme != "hybrid_RAS_msgfem":
        raise ValueError("approximation map is defined for the hybrid_RAS_msgfem scheme")
    return apply_preconditioner(state, state.system.A_free @ v)


@dataclass
class IterationHistory:
    """Per-iteration convergence records.

    res_b is the Euclidean residual norm ||f - A v_j||; res_precond the
    preconditioned one ||B(f - A v_j)||; err_a the energy-norm error against
    a supplied reference solution (empty if none was given). time_s holds
    cumulative wall time.
    """

    iters: list = field(default_factory=list)
    res_b: list = field(default_factory=list)
    res_precond: list = field(default_factory=list)
    err_a: list = field(default_factory=list)
    time_s: list = field(default_factory=list)

    def record(self, j, res, res_pre, err, t):
        self.iters.append(j)
        self.res_b.append(res)
        self.res_precond.append(res_pre)
        self.err_a.append(err)
        self.time_s.append(t)

    @property
    def n_iterations(self):
        return self.iters[-1] if self.iters else 0

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write("iter,res_b,err_a,time_ms\n")
            for j, res, err, t in zip(self.iters, self.res_b, self.err_a, self.time_s):
                err_txt = "" if err is None else f"{err:.17g}"
                fh.write(f"{j},{res:.17g},{err_txt},{1e3 * t:.6g}\n")


def _err_a(system, v, u_ref):
    if u_ref is None:
        return None
    return system.a_norm(v - u_ref)


def richardson(state, system, v0=None, target_reduction=1e-10, maxit=200, u_ref=None):
    """Preconditioned Richardson iteration v += B(f - A v), stopping on
    Euclidean residual reduction. Raises Stagnation after 5 consecutive
    non-decreasing steps (the configuration does not contract)."""
    if not (0.0 < target_reduction < 1.0):
        raise ValueError("target_reduction must lie in (0, 1)")
    A = system.A_free
    f = system.f_free
    v = np.zeros(system.n_free) if v0 is None else np.array(v0, dtype=float)
    t0 = time.perf_counter()
    history = IterationHistory()

    r = f - A @ v
    res0 = float(np.linalg.norm(r))
    z = apply_preconditioner(state, r)
    history.record(0, res0, float(np.linalg.norm(z)), _err_a(system, v, u_ref),
                   time.perf_counter() - t0)
    if res0 == 0.0:
        return v, history

    res_prev = res0
    stalled = 0
    for j in range(1, maxit + 1):
        v = v + z
        r = f - A @ v
        res = float(np.linalg.norm(r))
        z = apply_preconditioner(state, r)
        history.record(j, res, float(np.linalg.norm(z)), _err_a(system, v, u_ref),
                       time.perf_counter() - t0)
        if res <= target_reduction * res0:
            return v, history
        stalled = stalled + 1 if res >= res_prev else 0
        if stalled >= 5:
            raise Stagnation(
                f"residual did not decrease for 5 consecutive steps (at iteration {j})"
            )
        res_prev = res
    return v, history


def gmres(state, system, u0=None, target_reduction=1e-10, maxit=200, u_ref=None):
    """Left-preconditioned GMRES on B A u = B f.

    Arnoldi with modified Gram-Schmidt plus one reorthogonalization pass and
    Givens-rotation least squares; no restarting. Stops when the
    preconditioned residual drops below target_reduction times its initial
    value. A vanishing new Arnoldi vector (happy breakdown) is convergence;
    non-finite coefficients raise Breakdown.
    """
    if not (0.0 < target_reduction < 1.0):
        raise ValueError("target_reduction must lie in (0, 1)")
    A = system.A_free
    f = system.f_free
    n = system.n_free
    u0 = np.zeros(n) if u0 is None else np.array(u0, dtype=float)
    t0 = time.perf_counter()
    history = IterationHistory()

    r0 = apply_preconditioner(state, f - A @ u0)
    beta = float(np.linalg.norm(r0))
    history.record(0, float(np.linalg.norm(f - A @ u0)), beta,
                   _err_a(system, u0, u_ref), time.perf_counter() - t0)
    if beta == 0.0:
        return u0, history

    V = np.zeros((n, maxit + 1))
    Hm = np.zeros((maxit + 1, maxit))
    cs = np.zeros(maxit)
    sn = np.zeros(maxit)
    g = np.zeros(maxit + 1)
    g[0] = beta
    V[:, 0] = r0 / beta

    def current_iterate(k):
        y = scipy.linalg.solve_triangular(Hm[:k, :k], g[:k])
        return u0 + V[:, :k] @ y

    converged_at = None
    for j in range(maxit):
        w = apply_preconditioner(state, A @ V[:, j])
        for i in range(j + 1):
            Hm[i, j] = V[:, i] @ w
            w -= Hm[i, j] * V[:, i]
        for i in range(j + 1):  # one reorthogonalization pass
            c = V[:, i] @ w
            Hm[i, j] += c
            w -= c * V[:, i]
        hnext = float(np.linalg.norm(w))
        if not np.isfinite(hnext) or not np.all(np.isfinite(Hm[: j + 2, j])):
            raise Breakdown(f"non-finite Arnoldi coefficients at step {j + 1}")
        Hm[j + 1, j] = hnext

        for i in range(j):
            h0 = cs[i] * Hm[i, j] + sn[i] * Hm[i + 1, j]
            Hm[i + 1, j] = -sn[i] * Hm[i, j] + cs[i] * Hm[i + 1, j]
            Hm[i, j] = h0
        denom = np.hypot(Hm[j, j], Hm[j + 1, j])
        cs[j] = Hm[j, j] / denom if denom else 1.0
        sn[j] = Hm[j + 1, j] / denom if denom else 0.0
        Hm[j, j] = denom
        Hm[j + 1, j] = 0.0
        g[j + 1] = -sn[j] * g[j]
        g[j] = cs[j] * g[j]

        res_pre = abs(g[j + 1])
        uj = current_iterate(j + 1)
        history.record(j + 1, float(np.linalg.norm(f - A @ uj)), float(res_pre),
                       _err_a(system, uj, u_ref), time.perf_counter() - t0)
        if res_pre <= target_reduction * beta or hnext <= 1e-14 * beta:
            converged_at = j + 1
            break
        V[:, j + 1] = w / hnext

    k = converged_at if converged_at is not None else maxit
    return current_iterate(k), history


def contraction_norm(state, system, max_dofs=3000):
    """Exact ||I - B A|| in the energy norm, via dense assembly of the
    preconditioned operator and a symmetric eigensolve of its similarity
    transform. Only for small instances."""
    n = system.n_free
    if n > max_dofs:
        raise TooLarge(f"{n} dofs exceeds the dense-oracle limit {max_dofs}")
    A = system.A_free.to_dense()
    BA = apply_preconditioner(state, A)  # B applied to the columns of A
    E = np.eye(n) - BA
    w, Q = scipy.linalg.eigh(A)
    w = np.maximum(w, 0.0)
    half = Q @ (np.sqrt(w)[:, None] * Q.T)
    inv_half = Q @ ((1.0 / np.sqrt(w))[:, None] * Q.T)
    T = half @ E @ inv_half
    s2 = scipy.linalg.eigh(T.T @ T, eigvals_only=True)[-1]
    return float(np.sqrt(max(s2, 0.0)))


def spd_condition_number(state, system, max_dofs=3000):
    """Spectral condition number of the preconditioned operator B A for a
    symmetric preconditioner (the additive schemes), via the symmetric form
    A^(1/2) B A^(1/2)."""
    n = system.n_free
    if n > max_dofs:
        raise TooLarge(f"{n} dofs exceeds the dense-oracle limit {max_dofs}")
    A = system.A_free.to_dense()
    B = apply_preconditioner(state, np.eye(n))
    w, Q = scipy.linalg.eigh(A)
    w = np.maximum(w, 0.0)
    half = Q @ (np.sqrt(w)[:, None] * Q.T)
    C = half @ B @ half
    ev = scipy.linalg.eigh(0.5 * (C + C.T), eigvals_only=True)
    return float(ev[-1] / ev[0])
