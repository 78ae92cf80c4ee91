"""Macro-replication experiments: interval coverage over a (m, k, n) grid,
the unstable-bootstrap-fraction study, and the hyperparameter-sensitivity
study, all with CSV export."""
from __future__ import annotations

import csv
import dataclasses
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import bootstrap, queueing, sk, uq
from .errors import SkbootError
from .input_models import InputModelSet, sample_dataset

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ExperimentGrid:
    """Factor levels of the coverage study plus the macro-replication count."""

    m_levels: tuple[int, ...] = (50, 500, 5000)
    k_levels: tuple[int, ...] = (20, 40, 80, 130)
    n_levels: tuple[int, ...] = (10, 50, 100)
    R: int = 1000
    base_seed: int = 0

    def cells(self) -> list[tuple[int, int, int]]:
        return [
            (m, k, n)
            for m in self.m_levels
            for k in self.k_levels
            for n in self.n_levels
        ]


@dataclass(frozen=True)
class CoverageRow:
    """Aggregated results of one grid cell."""

    m: int
    k: int
    n: int
    R: int
    n_failed: int
    coverage_ci0: float
    coverage_ci_plus: float
    se_ci0: float
    se_ci_plus: float
    width_ci0_mean: float
    width_ci0_sd: float
    width_ci_plus_mean: float
    width_ci_plus_sd: float
    ratio_mean: float
    p_u_mean: float


def _rep_seeds(base_seed: int, cell: tuple[int, ...], rep: int) -> tuple[int, int]:
    """Deterministic (data seed, run seed) for one macro-replication."""
    ss = np.random.SeedSequence(entropy=(base_seed, *cell, rep))
    data_seed, run_seed = (int(s) for s in ss.generate_state(2))
    return data_seed, run_seed


def _coverage_rep(args) -> dict | None:
    """One macro-replication: fresh data, full procedure, coverage record."""
    (cell, rep, topology, models, protocol, config, base_seed, truth) = args
    m, k, n = cell
    data_seed, run_seed = _rep_seeds(base_seed, cell, rep)
    dataset = sample_dataset(models, m, np.random.default_rng(data_seed))
    config = dataclasses.replace(config, k=k, N=k * n, seed=run_seed)
    try:
        result = uq.run_aci(dataset, topology, protocol, config)
    except SkbootError as exc:
        log.warning("cell %s rep %d failed: %s", cell, rep, exc)
        return None
    return {
        "covered0": result.ci0[0] <= truth <= result.ci0[1],
        "covered_plus": result.ci_plus[0] <= truth <= result.ci_plus[1],
        "width0": result.ci0[1] - result.ci0[0],
        "width_plus": result.ci_plus[1] - result.ci_plus[0],
        "ratio": result.ratio,
        "p_u": result.p_u_hat,
    }


def _run_tasks(fn, tasks, workers: int):
    if workers <= 1:
        return [fn(task) for task in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks))


def _coverage_se(p: float, n: int) -> float:
    return float(np.sqrt(p * (1.0 - p) / n)) if n > 0 else float("nan")


def _aggregate_cell(cell, R, records) -> CoverageRow:
    m, k, n = cell
    ok = [r for r in records if r is not None]
    if not ok:
        raise SkbootError(f"every macro-replication of cell {cell} failed")
    cov0 = float(np.mean([r["covered0"] for r in ok]))
    covp = float(np.mean([r["covered_plus"] for r in ok]))
    w0 = np.array([r["width0"] for r in ok])
    wp = np.array([r["width_plus"] for r in ok])
    return CoverageRow(
        m=m,
        k=k,
        n=n,
        R=R,
        n_failed=R - len(ok),
        coverage_ci0=cov0,
        coverage_ci_plus=covp,
        se_ci0=_coverage_se(cov0, len(ok)),
        se_ci_plus=_coverage_se(covp, len(ok)),
        width_ci0_mean=float(w0.mean()),
        width_ci0_sd=float(w0.std(ddof=1)) if len(ok) > 1 else 0.0,
        width_ci_plus_mean=float(wp.mean()),
        width_ci_plus_sd=float(wp.std(ddof=1)) if len(ok) > 1 else 0.0,
        ratio_mean=float(np.mean([r["ratio"] for r in ok])),
        p_u_mean=float(np.mean([r["p_u"] for r in ok])),
    )


def coverage_experiment(
    grid: ExperimentGrid,
    topology: queueing.NetworkTopology,
    true_models: InputModelSet,
    protocol: queueing.SimProtocol,
    config: uq.UQConfig,
    workers: int = 1,
) -> list[CoverageRow]:
    """Empirical coverage of CI0 and CI+ against the analytic oracle truth."""
    oracle = queueing.jackson_oracle(
        topology, true_models.moment_vector(), true_models.layout
    )
    if not oracle.stable:
        raise ValueError("true configuration must be stable to define the truth")
    truth = oracle.expected_number
    rows = []
    for cell in grid.cells():
        tasks = [
            (cell, rep, topology, true_models, protocol, config, grid.base_seed, truth)
            for rep in range(grid.R)
        ]
        records = _run_tasks(_coverage_rep, tasks, workers)
        rows.append(_aggregate_cell(cell, grid.R, records))
        log.info("cell %s done: %s", cell, rows[-1])
    return rows


@dataclass(frozen=True)
class PURow:
    m: int
    R: int
    B: int
    p_u_mean: float
    p_u_sd: float


def _pu_rep(args) -> float:
    (m, rep, topology, models, B, base_seed) = args
    data_seed, boot_seed = _rep_seeds(base_seed, (m,), rep)
    dataset = sample_dataset(models, m, np.random.default_rng(data_seed))
    vectors = bootstrap.generate(dataset, B, np.random.default_rng(boot_seed)).vectors
    return uq.estimate_unstable_fraction(topology, vectors, dataset.layout)


def pu_experiment(
    m_levels,
    topology: queueing.NetworkTopology,
    true_models: InputModelSet,
    B: int,
    R: int,
    base_seed: int = 0,
    workers: int = 1,
) -> list[PURow]:
    """Mean and SD of the unstable-bootstrap fraction per data size m."""
    rows = []
    for m in m_levels:
        tasks = [(m, rep, topology, true_models, B, base_seed) for rep in range(R)]
        values = np.array(_run_tasks(_pu_rep, tasks, workers))
        rows.append(
            PURow(
                m=int(m),
                R=R,
                B=B,
                p_u_mean=float(values.mean()),
                p_u_sd=float(values.std(ddof=1)) if R > 1 else 0.0,
            )
        )
    return rows


def _sensitivity_rep(args) -> tuple[dict | None, dict | None]:
    """One macro-replication of the two hyperparameter-estimation cases.

    Case 1 fits the GP parameters on the same simulation outputs that form
    the metamodel; case 2 fits them on an independent second batch but keeps
    the first batch's responses in the predictor.
    """
    (cell, rep, topology, models, protocol, config, base_seed, truth) = args
    m, k, n = cell
    data_seed, run_seed = _rep_seeds(base_seed, cell, rep)
    dataset = sample_dataset(models, m, np.random.default_rng(data_seed))
    config = dataclasses.replace(config, k=k, N=k * n, seed=run_seed)
    ss = np.random.SeedSequence(config.seed)
    rng_design, rng_sim1, rng_sim2, rng_b1, rng_n1, rng_b2, rng_n2 = (
        np.random.default_rng(child) for child in ss.spawn(7)
    )
    from . import design as design_mod

    try:
        design = design_mod.build_design(dataset, config.q, config.k, config.N, rng_design)
        summary1 = uq.simulate_design(design, topology, protocol, rng_sim1)
        model1 = sk.fit(design.points, summary1, config.sk_fit)
        summary2 = uq.simulate_design(design, topology, protocol, rng_sim2)
        hyper2 = sk.fit(design.points, summary2, config.sk_fit).hyper
        model2 = sk.SKModel(
            hyper2, design.points, summary1.ybar, summary1.intrinsic_variance
        )
        res1 = uq.aci_from_model(model1, dataset, topology, config, rng_b1, rng_n1)
        res2 = uq.aci_from_model(model2, dataset, topology, config, rng_b2, rng_n2)
    except SkbootError as exc:
        log.warning("sensitivity cell %s rep %d failed: %s", cell, rep, exc)
        return None, None

    def record(res):
        return {
            "covered0": res.ci0[0] <= truth <= res.ci0[1],
            "covered_plus": res.ci_plus[0] <= truth <= res.ci_plus[1],
            "width0": res.ci0[1] - res.ci0[0],
            "width_plus": res.ci_plus[1] - res.ci_plus[0],
            "ratio": res.ratio,
            "p_u": res.p_u_hat,
        }

    return record(res1), record(res2)


def sensitivity_experiment(
    cell: tuple[int, int, int],
    topology: queueing.NetworkTopology,
    true_models: InputModelSet,
    protocol: queueing.SimProtocol,
    config: uq.UQConfig,
    R: int,
    base_seed: int = 0,
    workers: int = 1,
) -> tuple[CoverageRow, CoverageRow]:
    """Paired coverage rows for the two hyperparameter-fitting cases."""
    oracle = queueing.jackson_oracle(
        topology, true_models.moment_vector(), true_models.layout
    )
    if not oracle.stable:
        raise ValueError("true configuration must be stable to define the truth")
    tasks = [
        (cell, rep, topology, true_models, protocol, config, base_seed, oracle.expected_number)
        for rep in range(R)
    ]
    pairs = _run_tasks(_sensitivity_rep, tasks, workers)
    case1 = _aggregate_cell(cell, R, [p[0] for p in pairs])
    case2 = _aggregate_cell(cell, R, [p[1] for p in pairs])
    return case1, case2


def write_coverage_csv(rows: list[CoverageRow], path) -> None:
    _write_dataclass_csv(rows, path, CoverageRow)


def write_pu_csv(rows: list[PURow], path) -> None:
    _write_dataclass_csv(rows, path, PURow)


def write_sensitivity_csv(rows: tuple[CoverageRow, CoverageRow], path) -> None:
    case1, case2 = rows
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        fields = [f.name for f in dataclasses.fields(CoverageRow)]
        writer.writerow(["case"] + fields)
        for label, row in (("case1", case1), ("case2", case2)):
            writer.writerow([label] + [getattr(row, f) for f in fields])


def scatter_export(rows: list[CoverageRow], path, alpha: float = 0.05) -> None:
    """Flat (ratio, coverage error) pairs, one row per cell and interval type."""
    nominal = 1.0 - alpha
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["m", "k", "n", "interval", "ratio_mean", "coverage", "coverage_error"])
        for row in rows:
            for label, cov in (("ci0", row.coverage_ci0), ("ci_plus", row.coverage_ci_plus)):
                writer.writerow(
                    [row.m, row.k, row.n, label, repr(row.ratio_mean), repr(cov), repr(cov - nominal)]
                )


def _write_dataclass_csv(rows, path, cls) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        fields = [f.name for f in dataclasses.fields(cls)]
        writer.writerow(fields)
        for row in rows:
            writer.writerow([getattr(row, f) for f in fields])
