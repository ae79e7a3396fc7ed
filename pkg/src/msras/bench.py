"""Configuration-driven experiment runner: single solves, scheme comparisons,
and oversampling-by-modes sweeps, with machine-readable reports.

One JSON document describes one experiment (grid, coefficient, boundary
data, source, decomposition, coarse-space size, scheme, solver). Reports
echo every input parameter, carry per-stage wall times, and are
deterministic in the config seed except for the timing fields.
"""

import json
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import schwarz, spectral
from .decomp import build_decomposition, build_partition_of_unity
from .errors import ConfigError, MsrasError, Stagnation
from .grid import (
    BoundarySpec,
    CartesianGrid,
    CoefficientField,
    assemble,
    export_solution_csv,
    gaussian_bump_source,
    skyscraper_coefficient,
)

_DRIVERS = ("richardson", "gmres")


@dataclass
class ExperimentConfig:
    nx: int = 64
    ny: int = 64
    lx: float = 1.0
    ly: float = 1.0
    coefficient: dict = field(default_factory=lambda: {"kind": "constant", "value": 1.0})
    boundary: dict = field(default_factory=lambda: {"preset": "mixed_flux_channel"})
    source: dict = field(default_factory=lambda: {"kind": "gaussian_bump"})
    px: int = 4
    py: int = 4
    overlap_layers: int = 2
    oversampling_layers: int = 4
    modes: object = 10  # uniform int or per-subdomain list
    scheme: str = "hybrid_RAS_msgfem"
    driver: str = "gmres"
    target_reduction: float = 1e-10
    maxit: int = 200
    seed: int = 7
    outputs: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        cfg = cls(**data)
        cfg.validate()
        return cfg

    @classmethod
    def from_json(cls, path):
        try:
            with open(path) as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        return cls.from_dict(data)

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)

    def validate(self):
        if self.nx < 2 or self.ny < 2:
            raise ConfigError("grid: nx and ny must be >= 2")
        if self.lx <= 0 or self.ly <= 0:
            raise ConfigError("grid: lx and ly must be positive")
        if self.px < 1 or self.py < 1:
            raise ConfigError("decomposition.px/py: must be >= 1")
        if self.px > self.nx or self.py > self.ny:
            raise ConfigError("decomposition: more blocks than cells")
        if self.overlap_layers < 1:
            raise ConfigError("decomposition.overlap_layers: must be >= 1")
        if self.oversampling_layers < 1:
            raise ConfigError("decomposition.oversampling_layers: must be >= 1")
        if self.scheme not in schwarz.SCHEMES:
            raise ConfigError(f"scheme: {self.scheme!r} not in {schwarz.SCHEMES}")
        if self.driver not in _DRIVERS:
            raise ConfigError(f"solver.driver: {self.driver!r} not in {_DRIVERS}")
        if not (0.0 < self.target_reduction < 1.0):
            raise ConfigError("solver.target_reduction: must lie in (0, 1)")
        if self.maxit < 1:
            raise ConfigError("solver.maxit: must be >= 1")
        kind = self.coefficient.get("kind")
        if kind not in ("constant", "skyscraper", "raster"):
            raise ConfigError(f"coefficient.kind: unknown kind {kind!r}")
        if kind == "skyscraper":
            if self.coefficient.get("contrast", 1.0) < 1.0:
                raise ConfigError("coefficient.contrast: must be >= 1")
            fr = self.coefficient.get("fraction", 0.0)
            if not (0.0 <= fr <= 1.0):
                raise ConfigError("coefficient.fraction: must lie in [0, 1]")
            bx, by = self.coefficient.get("blocks", (8, 8))
            if not (1 <= bx <= self.nx and 1 <= by <= self.ny):
                raise ConfigError("coefficient.blocks: must fit the cell grid")
        skind = self.source.get("kind", "none")
        if skind not in ("gaussian_bump", "constant", "none"):
            raise ConfigError(f"source.kind: unknown kind {skind!r}")
        self.modes_list()  # raises on malformed modes

    def modes_list(self):
        n_sub = self.px * self.py
        if isinstance(self.modes, int):
            if self.modes < 0:
                raise ConfigError("modes: must be >= 0")
            return [self.modes] * n_sub
        modes = list(self.modes)
        if len(modes) != n_sub or any((not isinstance(m, int)) or m < 0 for m in modes):
            raise ConfigError(f"modes: need {n_sub} nonnegative integers")
        return modes


def _build_boundary(spec):
    preset = spec.get("preset")
    if preset == "mixed_flux_channel":
        return BoundarySpec.mixed_flux_channel()
    if preset == "all_dirichlet":
        return BoundarySpec.all_dirichlet(spec.get("value", 0.0))
    if preset is not None:
        raise ConfigError(f"boundary.preset: unknown preset {preset!r}")
    sides = {}
    for side in ("left", "right", "bottom", "top"):
        s = spec.get(side)
        if s is None:
            raise ConfigError(f"boundary.{side}: missing")
        if s.get("type") == "dirichlet":
            sides[side] = ("dirichlet", float(s.get("value", 0.0)))
        elif s.get("type") == "neumann":
            sides[side] = ("neumann", float(s.get("flux", 0.0)))
        else:
            raise ConfigError(f"boundary.{side}.type: unknown type")
    return BoundarySpec(**sides)


def _build_coefficient(cfg, grid):
    spec = cfg.coefficient
    kind = spec["kind"]
    if kind == "constant":
        return CoefficientField.constant(grid, spec.get("value", 1.0))
    if kind == "skyscraper":
        return skyscraper_coefficient(
            grid,
            contrast=spec.get("contrast", 1e6),
            blocks=tuple(spec.get("blocks", (8, 8))),
            inclusion_fraction=spec.get("fraction", 0.3),
            seed=spec.get("seed", cfg.seed),
        )
    return CoefficientField.from_raster(grid, spec["path"])


def _build_source(cfg):
    kind = cfg.source.get("kind", "none")
    if kind == "gaussian_bump":
        return gaussian_bump_source
    if kind == "constant":
        value = float(cfg.source.get("value", 1.0))
        return lambda x, y: np.full_like(np.asarray(x, dtype=float), value)
    return None


def build_problem(cfg):
    """Grid, coefficient, boundary data and assembled system from a config."""
    grid = CartesianGrid(cfg.nx, cfg.ny, cfg.lx, cfg.ly)
    coeff = _build_coefficient(cfg, grid)
    bc = _build_boundary(cfg.boundary)
    system = assemble(grid, coeff, bc, source=_build_source(cfg))
    return system


def compute_bases(system, decomp, pu, modes, kind="harmonic", subdomain=None):
    """Spectral bases per subdomain (all of them, or a single one); `modes`
    aligns with the subdomains computed."""
    ids = list(range(decomp.n_subdomains)) if subdomain is None else [subdomain]
    bases = []
    for m, i in zip(modes, ids, strict=True):
        if kind == "geneo":
            bases.append(spectral.geneo_eigenproblem(system, decomp, pu, i, m))
        else:
            S, P, H = spectral.reduce_to_harmonic(system, decomp, pu, i)
            bases.append(spectral.solve_local_eigenproblem(S, P, H, m, sub_id=i))
    return bases


def _effective_scheme(scheme, have_coarse):
    if have_coarse:
        return scheme
    return {"hybrid_RAS_msgfem": "RAS", "hybrid_AS": "AS"}.get(scheme, scheme)


def _setup(cfg, scheme=None):
    """Shared pipeline up to the preconditioner: returns a dict of parts and
    stage timings in seconds."""
    scheme = scheme or cfg.scheme
    stages = {}
    t = time.perf_counter()
    system = build_problem(cfg)
    stages["assembly_s"] = time.perf_counter() - t

    t = time.perf_counter()
    decomp = build_decomposition(system, cfg.px, cfg.py, cfg.overlap_layers,
                                 cfg.oversampling_layers)
    pu = build_partition_of_unity(decomp)
    stages["decomposition_s"] = time.perf_counter() - t

    modes = cfg.modes_list()
    have_coarse = sum(modes) > 0 and decomp.n_subdomains > 1
    bases = None
    coarse = None
    if have_coarse:
        t = time.perf_counter()
        kind = "geneo" if scheme == "AS2_geneo" else "harmonic"
        bases = compute_bases(system, decomp, pu, modes, kind=kind)
        stages["eigensolves_s"] = time.perf_counter() - t
        t = time.perf_counter()
        coarse = spectral.build_coarse_space(system, decomp, pu, bases)
        stages["coarse_setup_s"] = time.perf_counter() - t
    else:
        stages["eigensolves_s"] = 0.0
        stages["coarse_setup_s"] = 0.0

    applied = _effective_scheme(scheme, have_coarse)
    t = time.perf_counter()
    state = schwarz.build_preconditioner(system, decomp, pu, applied, coarse=coarse)
    stages["local_factorizations_s"] = time.perf_counter() - t
    return {
        "system": system,
        "decomp": decomp,
        "pu": pu,
        "bases": bases,
        "coarse": coarse,
        "state": state,
        "scheme_applied": applied,
        "stages": stages,
    }


def _drive(cfg, state, system):
    driver = schwarz.richardson if cfg.driver == "richardson" else schwarz.gmres
    t = time.perf_counter()
    try:
        solution, history = driver(
            state, system, target_reduction=cfg.target_reduction, maxit=cfg.maxit
        )
        failure = None
    except Stagnation as exc:
        solution, history = None, None
        failure = f"Stagnation: {exc}"
    solve_s = time.perf_counter() - t
    return solution, history, failure, solve_s


def _converged(cfg, history):
    """Convergence in the driver's own stopping quantity: Richardson stops on
    the Euclidean residual, GMRES on the preconditioned one."""
    if history is None:
        return False
    series = history.res_b if cfg.driver == "richardson" else history.res_precond
    return series[-1] <= cfg.target_reduction * series[0]


def run_single(cfg):
    """Full pipeline for one experiment. Returns (report, history, solution);
    writes the configured output files."""
    parts = _setup(cfg)
    system = parts["system"]
    solution, history, failure, solve_s = _drive(cfg, parts["state"], system)
    stages = dict(parts["stages"], krylov_s=solve_s)

    converged = _converged(cfg, history)
    final_res = None
    iterations = None
    if history is not None:
        final_res = history.res_b[-1]
        iterations = history.n_iterations
    coarse = parts["coarse"]
    report = {
        "config": cfg.to_dict(),
        "scheme_applied": parts["scheme_applied"],
        "n_free_dofs": system.n_free,
        "xi": parts["decomp"].xi,
        "xi_star": parts["decomp"].xi_star,
        "coarse_dim": coarse.m if coarse is not None else 0,
        "lambda_bound": coarse.lam if coarse is not None else None,
        "iterations": iterations,
        "final_residual": final_res,
        "converged": converged,
        "failure": failure,
        "timings": stages,
    }
    out = cfg.outputs
    if out.get("report"):
        with open(out["report"], "w") as fh:
            json.dump(report, fh, indent=2)
    if out.get("history") and history is not None:
        history.to_csv(out["history"])
    if out.get("solution") and solution is not None:
        export_solution_csv(out["solution"], system.grid, system.expand(solution))
    return report, history, solution


def run_comparison(cfg, schemes):
    """One history per scheme over a shared setup. Schemes with the standard
    coarse space share eigensolves; AS2_geneo builds its own. Per-scheme
    failures are recorded and the run continues."""
    base = _setup(cfg, scheme="hybrid_RAS_msgfem")
    system, decomp, pu = base["system"], base["decomp"], base["pu"]
    modes = cfg.modes_list()
    results = {}
    for scheme in schemes:
        if scheme not in schwarz.SCHEMES:
            results[scheme] = {"failure": f"unknown scheme {scheme!r}"}
            continue
        try:
            if scheme == "AS2_geneo" and sum(modes) > 0 and decomp.n_subdomains > 1:
                bases = compute_bases(system, decomp, pu, modes, kind="geneo")
                coarse = spectral.build_coarse_space(system, decomp, pu, bases)
            else:
                bases = base["bases"]
                coarse = base["coarse"]
            applied = _effective_scheme(scheme, coarse is not None)
            state = schwarz.build_preconditioner(system, decomp, pu, applied, coarse=coarse)
            solution, history, failure, solve_s = _drive(cfg, state, system)
            results[scheme] = {
                "failure": failure,
                "iterations": history.n_iterations if history else None,
                "history": history,
                "solve_s": solve_s,
                "spectrum": bases,
            }
        except MsrasError as exc:
            results[scheme] = {"failure": f"{type(exc).__name__}: {exc}"}
    out_prefix = cfg.outputs.get("history_prefix")
    if out_prefix:
        for scheme, res in results.items():
            if res.get("history") is not None:
                res["history"].to_csv(f"{out_prefix}{scheme}.csv")
    return results


@dataclass
class SweepReport:
    ovsp_list: list
    modes_list: list
    cells: dict  # (ovsp, modes) -> dict

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write("ovsp,modes,iters,lambda,setup_ms,solve_ms\n")
            for s in self.ovsp_list:
                for m in self.modes_list:
                    c = self.cells[(s, m)]
                    if c.get("failure"):
                        fh.write(f"{s},{m},FAIL:{c['failure']},,,\n")
                        continue
                    lam = "" if c["lambda"] is None else f"{c['lambda']:.17g}"
                    fh.write(
                        f"{s},{m},{c['iterations']},{lam},"
                        f"{1e3 * c['setup_s']:.6g},{1e3 * c['solve_s']:.6g}\n"
                    )


def run_sweep(cfg, ovsp_list, modes_list):
    """Cartesian (oversampling x modes) sweep. Assembly is shared; per
    oversampling value the eigenproblems are solved once for the largest
    mode count (plus one, for the error bound) and truncated per cell."""
    if not ovsp_list or not modes_list:
        raise ConfigError("sweep: oversampling and modes lists must be nonempty")
    if any(m < 0 for m in modes_list):
        raise ConfigError("sweep: modes must be >= 0")
    system = build_problem(cfg)
    m_max = max(modes_list)
    kind = "geneo" if cfg.scheme == "AS2_geneo" else "harmonic"
    cells = {}
    for s in ovsp_list:
        try:
            t = time.perf_counter()
            decomp = build_decomposition(system, cfg.px, cfg.py, cfg.overlap_layers, s)
            pu = build_partition_of_unity(decomp)
            # one eigensolve per subdomain at the largest requested size (plus
            # one for the error bound), clamped to the local spectrum size
            full_bases = []
            for i, sub in enumerate(decomp.subdomains):
                cap = sub.dofs.size if kind == "geneo" else sub.boundary_star.size
                full_bases.append(
                    compute_bases(system, decomp, pu, [min(m_max + 1, cap)], kind=kind,
                                  subdomain=i)[0]
                )
            shared_s = time.perf_counter() - t
        except MsrasError as exc:
            for m in modes_list:
                cells[(s, m)] = {"failure": f"{type(exc).__name__}: {exc}"}
            continue
        for m in modes_list:
            try:
                t = time.perf_counter()
                if m > 0:
                    bases = [spectral.truncate_basis(b, m) for b in full_bases]
                    coarse = spectral.build_coarse_space(system, decomp, pu, bases)
                else:
                    coarse = None
                applied = _effective_scheme(cfg.scheme, coarse is not None)
                state = schwarz.build_preconditioner(
                    system, decomp, pu, applied, coarse=coarse
                )
                setup_s = shared_s + (time.perf_counter() - t)
                solution, history, failure, solve_s = _drive(cfg, state, system)
                if failure:
                    cells[(s, m)] = {"failure": failure}
                    continue
                cells[(s, m)] = {
                    "iterations": history.n_iterations,
                    "lambda": coarse.lam if coarse is not None else None,
                    "max_next_eigenvalue": coarse.max_next_eigenvalue
                    if coarse is not None
                    else None,
                    "setup_s": setup_s,
                    "solve_s": solve_s,
                    "converged": _converged(cfg, history),
                }
            except MsrasError as exc:
                cells[(s, m)] = {"failure": f"{type(exc).__name__}: {exc}"}
    report = SweepReport(ovsp_list=list(ovsp_list), modes_list=list(modes_list), cells=cells)
    if cfg.outputs.get("sweep"):
        report.to_csv(cfg.outputs["sweep"])
    return report


def run_spectrum(cfg):
    """Eigenvalue decay export for the configured instance."""
    system = build_problem(cfg)
    decomp = build_decomposition(
        system, cfg.px, cfg.py, cfg.overlap_layers, cfg.oversampling_layers
    )
    pu = build_partition_of_unity(decomp)
    kind = "geneo" if cfg.scheme == "AS2_geneo" else "harmonic"
    bases = compute_bases(system, decomp, pu, cfg.modes_list(), kind=kind)
    path = cfg.outputs.get("spectrum", "spectrum.csv")
    spectral.export_spectrum_csv(path, bases)
    return bases
