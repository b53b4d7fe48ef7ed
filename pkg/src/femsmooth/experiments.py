"""Experiment recipes: one configured AFEM run, estimator comparisons, mesh dumps."""
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .afem import CSV_HEADER, AfemAbort, afem_run, build_fine_layer, csv_line, loglog_slope
from .assembly import assemble_matrix
from .estimators import contraction_factor_estimate
from .fe_space import build_space
from .config import ensure_output_dir
from .mesh_io import write_mesh_svg, write_triangle
from .plots import loglog_svg

__all__ = ["RunResult", "run_experiment", "compare_estimators", "mesh_dump", "TRAILING"]

TRAILING = 5  # iterations used for the fitted rate


@dataclass
class RunResult:
    record: object
    directory: Path
    slope: float
    estimator_slope: float

    @property
    def final_effectivity(self):
        return float(self.record.rows[-1].effectivity)


def _slope(rec, column):
    rows = rec.rows[-TRAILING:]
    if len(rows) < 2:
        return float("nan")
    return loglog_slope([r.dofs for r in rows], [getattr(r, column) for r in rows])


def initial_contraction(problem, cfg, probes=50):
    """Two-level Gauss-Seidel contraction on the initial mesh, probed with ``cfg.seed``.

    ``None`` for nonsymmetric problems, where the energy norm is undefined.
    """
    if not problem.symmetric:
        return None
    V = build_space(problem.initial_mesh(), cfg.degree)
    fine = build_fine_layer(problem, V)
    ff, fc = fine.space.free_dofs, V.free_dofs
    Af = fine.A.tocsr()[ff][:, ff]
    Ac = assemble_matrix(V, problem.form).tocsr()[fc][:, fc]
    return contraction_factor_estimate(Af, Ac, fine.P, "gauss_seidel", probes=probes, seed=cfg.seed)


def _summary(cfg, rec, slope, est_slope, rho=None):
    last = rec.rows[-1]
    lines = [
        f"problem: {cfg.problem}",
        f"estimator: {cfg.estimator}",
        f"norm: {cfg.norm}",
        f"degree: {cfg.degree}",
        f"variant: {cfg.variant}" + (f" (q={cfg.q})" if cfg.q else ""),
        f"theta: {cfg.theta}",
        f"iterations: {len(rec.rows)}",
        f"final dofs: {last.dofs}",
        f"final error: {last.error:.6e}",
        f"final estimator: {last.estimator:.6e}",
        f"final effectivity: {last.effectivity:.6f}",
        f"error slope (last {TRAILING} iterations): {slope:.6f}",
        f"estimator slope (last {TRAILING} iterations): {est_slope:.6f}",
    ]
    if rho is not None:
        lines.append(f"two-level contraction on initial mesh (seed {cfg.seed}): {rho:.6f}")
    return "\n".join(lines) + "\n"


def run_experiment(cfg, directory=None, keep_meshes=False):
    """Run one AFEM experiment and write its artefacts.

    Files written to ``directory`` (default ``cfg.output``):
    ``convergence.csv``, ``mesh_final.svg``, ``convergence.svg``,
    ``summary.txt``.  CSV rows are flushed as iterations finish, so an
    aborted run leaves its completed rows behind before the
    :class:`~femsmooth.afem.AfemAbort` propagates.
    """
    out = Path(directory) if directory is not None else ensure_output_dir(cfg)
    out.mkdir(parents=True, exist_ok=True)
    problem = cfg.make_problem()
    with open(out / "convergence.csv", "w", newline="") as fh:
        fh.write(",".join(CSV_HEADER) + "\n")

        def on_row(row):
            fh.write(csv_line(row, cfg.timing))
            fh.flush()

        rec = afem_run(problem, cfg.afem_config(), keep_meshes=keep_meshes, on_row=on_row)
    slope, est_slope = _slope(rec, "error"), _slope(rec, "estimator")
    label = "error" if problem.exact is not None else "reference error"
    svg = loglog_svg([(label, rec.column("dofs"), rec.column("error")),
                      (f"estimator ({cfg.estimator})", rec.column("dofs"), rec.column("estimator"))],
                     ylabel="error", title=f"{cfg.problem}, P{cfg.degree}, {cfg.estimator}")
    (out / "convergence.svg").write_text(svg)
    write_mesh_svg(rec.final_mesh, out / "mesh_final.svg", values=rec.final_indicators,
                   title=f"final mesh, {rec.final_mesh.n_elements} elements")
    rho = initial_contraction(problem, cfg)
    (out / "summary.txt").write_text(_summary(cfg, rec, slope, est_slope, rho))
    return RunResult(rec, out, slope, est_slope)


def _one(args):
    cfg, est, out = args
    return est, run_experiment(cfg.with_(estimator=est), out / est)


def compare_estimators(cfg, estimators, jobs=1):
    """One AFEM run per estimator under a shared configuration.

    Writes ``<output>/<estimator>/...`` for every run, plus ``compare.csv``
    (columns ``estimator,iter,dofs,error,estimate,effectivity``) and an
    overlay plot ``compare.svg``.  Returns ``{estimator: RunResult}``.
    """
    estimators = list(dict.fromkeys(estimators))
    if len(estimators) < 2:
        raise ValueError("compare_estimators needs at least two distinct estimators")
    out = ensure_output_dir(cfg)
    tasks = [(cfg, e, out) for e in estimators]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = dict(pool.map(_one, tasks))
    else:
        results = dict(map(_one, tasks))
    lines = ["estimator,iter,dofs,error,estimate,effectivity\n"]
    series = []
    for est in estimators:
        rec = results[est].record
        for r in rec.rows:
            lines.append(f"{est},{r.iter},{r.dofs},{r.error:.17g},{r.estimator:.17g},{r.effectivity:.17g}\n")
        series.append((f"error ({est} run)", rec.column("dofs"), rec.column("error")))
        series.append((f"{est}", rec.column("dofs"), rec.column("estimator")))
    (out / "compare.csv").write_text("".join(lines))
    (out / "compare.svg").write_text(loglog_svg(series, ylabel="error / estimator",
                                                title=f"{cfg.problem}: estimator comparison"))
    return results


def mesh_dump(cfg, final=False):
    """Write the initial mesh (and, with ``final=True``, the final adaptive mesh).

    Each mesh is written as Triangle ``.node/.ele/.edge`` files plus an SVG.
    Returns the list of basenames written.
    """
    out = ensure_output_dir(cfg)
    problem = cfg.make_problem()
    mesh = problem.initial_mesh()
    written = [write_triangle(mesh, out / "mesh_initial")]
    write_mesh_svg(mesh, out / "mesh_initial.svg")
    if final:
        try:
            rec = afem_run(problem, cfg.afem_config())
        except AfemAbort as exc:
            rec = exc.record
            if rec.final_mesh is None:
                raise
        written.append(write_triangle(rec.final_mesh, out / "mesh_final"))
        write_mesh_svg(rec.final_mesh, out / "mesh_final.svg", values=rec.final_indicators)
    return written


def marked_near_fraction(record, distance):
    """Fraction of all marked elements whose centroid lies within ``2 h_T`` of a set.

    ``distance(xy)`` returns the distance of points to the target set.
    """
    total = near = 0
    for c, h in zip(record.marked_centroids, record.marked_diameters):
        total += len(c)
        near += int(np.count_nonzero(distance(c) <= 2.0 * h))
    return near / total if total else float("nan")
