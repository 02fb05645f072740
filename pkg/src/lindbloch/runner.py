"""Turn a :class:`Scenario` into trajectories, CSV files and comparison reports."""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .algebra import (
    StructureTensor,
    bloch_decode,
    build_generators,
    normalized_purity,
    structure_constants,
)
from .errors import PreconditionError
from .oracle import MatrixProblem, integrate, to_heisenberg
from .propagator import (
    EvolutionProblem,
    GammaProfile,
    Trajectory,
    _tail_bound,
    default_step,
    dyson_series,
    evolve_formula,
    perturbation_series,
)
from .scenario import Scenario, ScenarioError
from .unraveling import NoiseConfig, bloch_space_unraveling, ensemble_bloch

log = logging.getLogger(__name__)

DETERMINISTIC_TOL = 1e-6
SE_MULTIPLE = 3.0
SE_FLOOR = 1e-8
DEFAULT_COMPARE = ("formula", "series", "oracle")


def _gamma_profile(spec) -> GammaProfile:
    kind = spec[0]
    if kind == "constant":
        return GammaProfile.constant(spec[1])
    if kind == "exponential":
        return GammaProfile.exponential(spec[1], spec[2])
    return GammaProfile.tabulated(spec[1], spec[2])


def _matrix(values, n):
    return np.array(values, dtype=complex).reshape(n, n)


@dataclass
class Problems:
    evolution: EvolutionProblem
    matrix: MatrixProblem | None
    basis: object | None


def build_problems(sc: Scenario) -> Problems:
    """Bloch-space problem always; matrix problem whenever the trace-2 basis is in use."""
    n, d = sc.dimension, sc.bloch_dim
    try:
        gammas = [_gamma_profile(spec.gamma) for spec in sc.lindblads]
    except ValueError as exc:
        raise ScenarioError([f"bad gamma profile: {exc}"]) from exc
    if sc.convention == "custom-f":
        f = StructureTensor.from_entries(d, {(i - 1, j - 1, k - 1): v for i, j, k, v in sc.structure})
        h = np.array(sc.hamiltonian.bloch) if sc.hamiltonian.bloch is not None else np.zeros(d)
        chans = [(np.array(spec.operator.bloch), g) for spec, g in zip(sc.lindblads, gammas)]
        evo = EvolutionProblem(f, h, tuple(chans), np.array(sc.r0), sc.picture)
        return Problems(evo, None, None)

    basis = build_generators(n)
    f = structure_constants(basis)

    def as_matrix(op):
        if op.matrix is not None:
            return _matrix(op.matrix, n)
        if op.bloch is not None:
            return basis.combine(np.array(op.bloch))
        return np.zeros((n, n), dtype=complex)

    H = as_matrix(sc.hamiltonian)
    Ls = [as_matrix(spec.operator) for spec in sc.lindblads]
    rho0 = _matrix(sc.rho0, n) if sc.rho0 is not None else bloch_decode(np.array(sc.r0), basis)
    kwargs = {"rho0": rho0} if sc.rho0 is not None else {"r0": np.array(sc.r0)}
    evo = EvolutionProblem.from_operators(basis, H, Ls, gammas, picture=sc.picture, f=f, **kwargs)
    try:
        mp = MatrixProblem(H, tuple(Ls), tuple(gammas), rho0)
    except ValueError as exc:
        log.warning("matrix form unavailable: %s", exc)
        mp = None
    return Problems(evo, mp, basis)


def step_size(sc: Scenario, problems: Problems) -> float:
    if sc.dt is not None:
        return sc.dt
    return default_step(*problems.evolution.rates(sc.t_final), span=sc.t_final)


def output_grid(sc: Scenario, dt: float) -> np.ndarray:
    spacing = dt * sc.output_stride
    if sc.t_final == 0:
        return np.array([0.0])
    count = int(round(sc.t_final / spacing))
    grid = spacing * np.arange(count + 1)
    grid = grid[grid < sc.t_final - 1e-12 * max(1.0, sc.t_final)]
    return np.append(grid, sc.t_final)


def run_method(sc: Scenario, method: str, problems: Problems, grid, dt) -> Trajectory:
    evo = problems.evolution
    if method == "formula":
        return evolve_formula(evo, grid, dt)
    if method == "series":
        order = int(sc.series.get("order", 12))
        nodes = int(sc.series.get("nodes", 32))
        results = [dyson_series(evo, t, order, nodes) for t in grid]
        meta = {"method": "series", "order": order, "nodes": nodes,
                "max_tail_bound": max(r.tail_bound for r in results), "picture": evo.picture}
        return Trajectory(grid, np.array([r.value for r in results]), None, meta)
    if method == "perturbation":
        # expansion parameter is bookkeeping only: l = sqrt(g) * l_unit gives the same sum
        order = int(sc.perturbation.get("order", 2))
        nodes = int(sc.perturbation.get("nodes", 32))
        values = np.array([perturbation_series(evo, t, order, 1.0, nodes) for t in grid])
        tail = _tail_bound(evo.rates(sc.t_final)[1] * sc.t_final, order) * float(np.linalg.norm(evo.r0))
        meta = {"method": "perturbation", "order": order, "nodes": nodes,
                "tail_bound": tail, "picture": evo.picture}
        return Trajectory(grid, values, None, meta)
    if method == "oracle":
        if problems.matrix is None:
            raise PreconditionError("oracle needs a valid density matrix and matrix operators")
        traj = integrate(problems.matrix, grid, dt)
        if sc.picture == "heisenberg":
            traj = to_heisenberg(traj, problems.matrix.hamiltonian)
        meta = {"method": "oracle", "picture": sc.picture, **traj.diagnostics}
        return Trajectory(grid, traj.bloch(problems.basis), None, meta)
    if method == "mc":
        seed = int(sc.mc.get("seed", 0))
        m = int(sc.mc.get("trajectories", 1000))
        mc_dt = float(sc.mc.get("dt", dt))
        chunk = int(sc.mc.get("chunk", 4096))
        estimator = sc.mc.get("estimator", "matrix")
        config = NoiseConfig(seed, m, mc_dt, len(evo.channels), chunk)
        if estimator == "bloch":
            res = bloch_space_unraveling(evo, config, grid)
        else:
            if problems.matrix is None:
                raise PreconditionError("matrix estimator needs a valid density matrix")
            res = ensemble_bloch(problems.matrix, problems.basis, config, grid, sc.picture)
        return res.trajectory
    raise ValueError(f"unknown method {method!r}")


@dataclass
class PairReport:
    a: str
    b: str
    deviation: np.ndarray           # per-time sup-norm deviation
    se_multiple: np.ndarray | None  # per-time max |delta| / SE (stochastic pairs)
    threshold: float
    passed: bool

    @property
    def label(self) -> str:
        return f"{self.a}-{self.b}"

    @property
    def global_deviation(self) -> float:
        return float(self.deviation.max()) if self.deviation.size else 0.0


def _tolerance(traj: Trajectory) -> float:
    meta = traj.metadata
    return float(meta.get("max_tail_bound", meta.get("tail_bound", 0.0)))


def compare_report(trajectories: dict[str, Trajectory], tol: float = DETERMINISTIC_TOL) -> list[PairReport]:
    """Pairwise deviations.  Deterministic pairs pass below ``tol`` plus any
    truncation bound; pairs involving a stochastic estimate pass while every
    deviation stays within 3 standard errors."""
    if len(trajectories) < 2:
        raise ValueError("comparison needs at least two trajectories")
    items = list(trajectories.items())
    ref_times = items[0][1].times
    for name, traj in items[1:]:
        if traj.times.shape != ref_times.shape or np.abs(traj.times - ref_times).max() > 1e-12:
            raise ValueError(f"trajectory {name!r} is on a different time grid")
    reports = []
    for (na, ta), (nb, tb) in itertools.combinations(items, 2):
        delta = np.abs(ta.bloch - tb.bloch)
        dev = delta.max(axis=1)
        se = [t.stderr for t in (ta, tb) if t.stderr is not None]
        if se:
            comb = np.sqrt(sum(s ** 2 for s in se))
            with np.errstate(divide="ignore", invalid="ignore"):
                mult = np.where(delta <= SE_FLOOR, 0.0, delta / comb).max(axis=1)
            passed = bool(np.all(delta <= SE_MULTIPLE * comb + SE_FLOOR))
            reports.append(PairReport(na, nb, dev, mult, SE_MULTIPLE, passed))
        else:
            threshold = tol + _tolerance(ta) + _tolerance(tb)
            reports.append(PairReport(na, nb, dev, None, threshold, bool(dev.max() <= threshold)))
    return reports


def _fmt(x) -> str:
    return "%.17g" % x


def write_csv(path: Path, traj: Trajectory, n: int) -> None:
    d = traj.bloch.shape[1]
    header = ["t"] + [f"r{k + 1}" for k in range(d)] + ["purity"]
    if traj.stderr is not None:
        header += [f"se{k + 1}" for k in range(d)]
    purity = normalized_purity(traj.bloch, n)
    rows = [",".join(header)]
    for i, t in enumerate(traj.times):
        vals = [t, *traj.bloch[i], purity[i]]
        if traj.stderr is not None:
            vals += list(traj.stderr[i])
        rows.append(",".join(_fmt(v) for v in vals))
    path.write_text("\n".join(rows) + "\n")


def _meta_lines(meta: dict) -> list[str]:
    out = []
    for key in sorted(meta):
        value = meta[key]
        out.append(f"{key} = {_fmt(value) if isinstance(value, float) else value}")
    return out


def write_meta(path: Path, metas: dict[str, dict], common: dict) -> None:
    lines = _meta_lines(common)
    for method, meta in metas.items():
        lines += ["", f"[{method}]"] + _meta_lines(meta)
    path.write_text("\n".join(lines) + "\n")


def write_compare(out: Path, name: str, times, reports: list[PairReport]) -> None:
    header = ["t"]
    for r in reports:
        header.append(f"{r.label}")
        if r.se_multiple is not None:
            header.append(f"{r.label}_se")
    rows = [",".join(header)]
    for i, t in enumerate(times):
        vals = [t]
        for r in reports:
            vals.append(r.deviation[i])
            if r.se_multiple is not None:
                vals.append(r.se_multiple[i])
        rows.append(",".join(_fmt(v) for v in vals))
    (out / f"{name}.compare.csv").write_text("\n".join(rows) + "\n")
    lines = []
    for r in reports:
        kind = f"<= {SE_MULTIPLE:g} SE" if r.se_multiple is not None else f"<= {_fmt(r.threshold)}"
        extra = f" max_se_multiple={_fmt(r.se_multiple.max())}" if r.se_multiple is not None else ""
        lines.append(f"{r.label}: global_deviation={_fmt(r.global_deviation)}{extra} "
                     f"criterion {kind} {'PASS' if r.passed else 'FAIL'}")
    overall = all(r.passed for r in reports)
    lines.append(f"overall {'PASS' if overall else 'FAIL'}")
    (out / f"{name}.report").write_text("\n".join(lines) + "\n")


def run(sc: Scenario, out_dir, method: str | None = None) -> bool:
    """Execute ``method`` (default: the scenario's) and write its files.

    Returns ``False`` only when a comparison FAILs.
    """
    method = method or sc.method
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    problems = build_problems(sc)
    dt = step_size(sc, problems)
    grid = output_grid(sc, dt)
    common = {"scenario": sc.name, "method": method, "dimension": sc.dimension,
              "convention": sc.convention, "picture": sc.picture, "dt": dt,
              "output_stride": sc.output_stride, "t_final": sc.t_final}
    if method != "compare":
        traj = run_method(sc, method, problems, grid, dt)
        write_csv(out / f"{sc.name}.{method}.csv", traj, sc.dimension)
        write_meta(out / f"{sc.name}.meta", {method: traj.metadata}, common)
        return True
    methods = sc.compare or tuple(m for m in DEFAULT_COMPARE
                                  if m != "oracle" or problems.matrix is not None)
    trajs = {}
    for m in methods:
        trajs[m] = run_method(sc, m, problems, grid, dt)
        write_csv(out / f"{sc.name}.{m}.csv", trajs[m], sc.dimension)
    reports = compare_report(trajs)
    write_compare(out, sc.name, grid, reports)
    passed = all(r.passed for r in reports)
    common["result"] = "PASS" if passed else "FAIL"
    write_meta(out / f"{sc.name}.meta", {m: t.metadata for m, t in trajs.items()}, common)
    return passed
