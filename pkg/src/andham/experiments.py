"""Numerical experiments: eps-convergence with coupled noise, the
scaling identity, tail exponents of the lowest eigenvalues and the bump
potential sandwich.

Every experiment is a pure function of its config: replica r draws its white
noise from the stream (seed, r), and all eps levels and both sides of the
scaling identity reuse that single white field. Rows are formatted to strings
as soon as a replica finishes, so a resumed run writes the same bytes.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

from andham import bump, renorm
from andham.errors import ConfigError, GeometryError, InsufficientTailMass, UnresolvedMollifier
from andham.noise import (
    BOUNDARY_CONDITIONS,
    DIRICHLET,
    LatticeGrid,
    Mollifier,
    deterministic,
    mollify,
    rescale_noise,
    sample_white,
    zero_field,
)
from andham.operator import assemble
from andham.spectra import lowest_eigenpairs

EXPERIMENTS = ("spectrum", "converge", "scaling", "tail", "bump")
MIN_EXCEEDANCES = 30


def code_version() -> str:
    from andham import __version__

    return __version__


@dataclass
class ExperimentConfig:
    experiment: str = "spectrum"
    d: int = 1
    L: float = 1.0
    N: int = 256
    bc: str = DIRICHLET
    eps: list = field(default_factory=list)
    a: float = 1.0
    b: float = 0.0
    replicas: int = 1
    seed: int = 0
    method: str = renorm.CONTINUUM
    mollifier: str = "bump"
    k: int = 1
    noise: bool = True
    solver: str = "auto"
    residual_tol: float = 1e-8
    scale_L: float = 2.0
    n_eig: int = 1
    thresholds: list = field(default_factory=list)
    n_bumps: int = 1
    well_c: float = 1.0
    output: str | None = None
    threads: int | None = None

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}", "experiment")
        if self.d not in (1, 2, 3):
            raise ConfigError("must be 1, 2 or 3", "d")
        if self.bc not in BOUNDARY_CONDITIONS:
            raise ConfigError(f"must be one of {BOUNDARY_CONDITIONS}", "bc")
        if self.N <= 0 or self.N % 2:
            raise ConfigError("must be a positive even integer", "N")
        if self.L <= 0:
            raise ConfigError("must be positive", "L")
        if self.replicas < 1:
            raise ConfigError("must be >= 1", "replicas")
        if self.method not in renorm.METHODS:
            raise ConfigError(f"must be one of {renorm.METHODS}", "method")
        self.eps = [float(e) for e in self.eps]
        if any(e2 >= e1 for e1, e2 in zip(self.eps, self.eps[1:])):
            raise ConfigError("schedule must be strictly decreasing", "eps")

    @property
    def grid(self) -> LatticeGrid:
        return LatticeGrid(self.d, float(self.L), int(self.N), self.bc)

    def check_resolved(self) -> None:
        h = self.grid.h
        for e in self.eps:
            if e < 2 * h * (1 - 1e-12):
                raise UnresolvedMollifier(f"eps={e} below 2h={2 * h}")

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out.pop("output")
        out.pop("threads")
        return out

    def hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.17g}"


@dataclass
class ExperimentTable:
    name: str
    columns: list
    rows: list  # list of lists of strings
    summary: dict = field(default_factory=dict)

    def column(self, name: str) -> np.ndarray:
        j = self.columns.index(name)
        return np.array([float(r[j]) for r in self.rows])


# ---- replica harness ------------------------------------------------------------


def _pool_size(threads: int | None) -> int:
    if threads:
        return int(threads)
    env = os.getenv("ANDHAM_THREADS")
    return int(env) if env else (os.cpu_count() or 1)


def _partial_path(cfg: ExperimentConfig, name: str) -> Path | None:
    if cfg.output is None:
        return None
    return Path(cfg.output) / f"{name}.partial.csv"


def run_replicas(cfg: ExperimentConfig, name: str, fn) -> dict[int, list]:
    """Evaluate ``fn(replica) -> list of string rows`` for every replica.

    With an output directory, finished replicas are appended to a partial
    file as they complete and skipped on a rerun.
    """
    done: dict[int, list] = {}
    part = _partial_path(cfg, name)
    if part is not None and part.exists():
        with open(part, newline="") as fh:
            for row in csv.reader(fh):
                done.setdefault(int(row[0]), []).append(row[1:])
    todo = [r for r in range(cfg.replicas) if r not in done]
    if part is not None:
        part.parent.mkdir(parents=True, exist_ok=True)
    fh = open(part, "a", newline="") if part is not None else None
    try:
        writer = csv.writer(fh) if fh else None

        def record(r, rows):
            done[r] = rows
            if writer:
                for row in rows:
                    writer.writerow([r] + row)
                fh.flush()

        workers = min(_pool_size(cfg.threads), max(len(todo), 1))
        if workers <= 1:
            for r in todo:
                record(r, fn(r))
        else:
            with ThreadPoolExecutor(workers) as pool:
                for r, rows in zip(todo, pool.map(fn, todo)):
                    record(r, rows)
    finally:
        if fh:
            fh.close()
    return done


def finish_table(cfg: ExperimentConfig, table: ExperimentTable) -> ExperimentTable:
    """Write CSV + manifest when an output directory is configured."""
    if cfg.output is None:
        return table
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{table.name}.csv"
    write_table(table, path)
    write_manifest(cfg, [path.name], out / f"{table.name}.manifest.json")
    part = _partial_path(cfg, table.name)
    if part is not None and part.exists():
        part.unlink()
    return table


def write_table(table: ExperimentTable, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# andham-{table.name} v1\n")
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(table.columns)
        wr.writerows(table.rows)


def write_manifest(cfg: ExperimentConfig, outputs: list, path) -> dict:
    man = {
        "config": cfg.to_dict(),
        "config_hash": cfg.hash(),
        "code_version": code_version(),
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        "seeds": [{"replica": r, "seed": cfg.seed, "spawn_key": [r]} for r in range(cfg.replicas)],
        "outputs": outputs,
    }
    with open(path, "w") as fh:
        json.dump(man, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return man


def _ordered(done: dict[int, list]) -> list:
    rows = []
    for r in sorted(done):
        rows.extend([[str(r)] + row for row in done[r]])
    return rows


# ---- shared pieces -------------------------------------------------------------------


def _constant(cfg: ExperimentConfig, eps: float, grid: LatticeGrid | None = None) -> float:
    if cfg.d == 1:
        return 0.0
    return renorm.constants(cfg.d, 1.0, eps, cfg.mollifier, cfg.method, grid or cfg.grid).C


def _field(cfg: ExperimentConfig, grid: LatticeGrid, replica: int, eps: float | None):
    if not cfg.noise:
        return zero_field(grid)
    white = sample_white(grid, cfg.seed, replica)
    return white if eps is None else mollify(white, Mollifier(eps, cfg.mollifier))


def _solver(cfg: ExperimentConfig) -> str:
    return cfg.solver


# ---- experiments ----------------------------------------------------------------------


def spectrum(cfg: ExperimentConfig) -> ExperimentTable:
    """Lowest k eigenvalues per replica at the first eps level (white noise if none)."""
    cfg.check_resolved()
    grid = cfg.grid
    eps = cfg.eps[0] if cfg.eps else None
    C = _constant(cfg, eps) if (eps is not None and cfg.noise) else 0.0

    def one(r):
        H = assemble(grid, _field(cfg, grid, r, eps), C)
        res = lowest_eigenpairs(H, cfg.k, cfg.residual_tol, seed=cfg.seed + r, method=_solver(cfg))
        return [[str(i), _fmt(v), f"{res.residuals[i - 1]:.3e}"] for i, v in enumerate(res.eigenvalues, start=1)]

    done = run_replicas(cfg, "spectrum", one)
    table = ExperimentTable("spectrum", ["replica", "n", "eigenvalue", "residual"], _ordered(done), {"C": C})
    return finish_table(cfg, table)


def _monotone_shrinking(diffs) -> bool:
    return all(b < a for a, b in zip(diffs, diffs[1:]))


def convergence_in_epsilon(cfg: ExperimentConfig) -> ExperimentTable:
    """lambda_{n, eps} over the eps schedule with one white field per replica.

    The control value lambda - C_eps is the spectrum of the same operator
    without the counterterm (a diagonal shift moves eigenvalues exactly).
    """
    if len(cfg.eps) < 4:
        raise ConfigError("needs at least 4 levels", "eps")
    cfg.check_resolved()
    grid = cfg.grid
    Cs = [_constant(cfg, e) for e in cfg.eps]

    def one(r):
        white = sample_white(grid, cfg.seed, r)
        rows = []
        for e, C in zip(cfg.eps, Cs):
            H = assemble(grid, mollify(white, Mollifier(e, cfg.mollifier)), C)
            res = lowest_eigenpairs(H, cfg.k, cfg.residual_tol, seed=cfg.seed + r, method=_solver(cfg))
            for i, v in enumerate(res.eigenvalues, start=1):
                rows.append([_fmt(e), str(i), _fmt(v), _fmt(v - C), _fmt(C)])
        return rows

    done = run_replicas(cfg, "converge", one)
    cols = ["replica", "eps", "n", "lambda", "lambda_control", "C"]
    table = ExperimentTable("converge", cols, _ordered(done))
    table.summary = convergence_summary(table, cfg)
    return finish_table(cfg, table)


def convergence_summary(table: ExperimentTable, cfg: ExperimentConfig) -> dict:
    rep = table.column("replica").astype(int)
    n = table.column("n").astype(int)
    lam = table.column("lambda")
    ctrl = table.column("lambda_control")
    eps = np.array(cfg.eps)
    verdicts = []
    first = n == 1
    per_rep_ctrl = []
    for r in range(cfg.replicas):
        sel = first & (rep == r)
        lr = lam[sel]
        diffs = np.abs(np.diff(lr))
        verdicts.append(_monotone_shrinking(diffs))
        per_rep_ctrl.append(ctrl[sel])
    mean_ctrl = np.mean(per_rep_ctrl, axis=0)
    slope = float(np.polyfit(np.log(eps), mean_ctrl, 1)[0])
    return {
        "fraction_monotone": float(np.mean(verdicts)),
        "control_slope_vs_ln_eps": slope,
        "reference_slope": 1.0 / (2 * math.pi) if cfg.d == 2 else None,
        "mean_lambda": [float(np.mean(lam[first][i :: len(eps)])) for i in range(len(eps))],
    }


def stencil_error_bound(lam: float, h: float) -> float:
    """Leading consistency error h^2 lambda^2 / 12 of the 2d+1 stencil on an
    eigenfunction with eigenvalue lambda, floored at h^2 / 12."""
    return h**2 * max(abs(lam), 1.0) ** 2 / 12.0


def scaling_identity_check(cfg: ExperimentConfig) -> ExperimentTable:
    """Per-realisation check of L^-2 lambda_n - tilde lambda_n = L^-2 C - tilde C."""
    if not math.isclose(cfg.L, 1.0):
        raise ConfigError("the reference box must be (-1, 1)^d", "L")
    if not cfg.eps:
        raise ConfigError("needs one eps level", "eps")
    cfg.check_resolved()
    Ls = float(cfg.scale_L)
    grid = cfg.grid
    big = grid.with_L(Ls)
    eps = cfg.eps[0]
    if cfg.d == 1 or not cfg.noise:
        C, Ct = 0.0, 0.0
    else:
        base = renorm.constants(cfg.d, 1.0, eps, cfg.mollifier)
        sc = renorm.scaled_constants(base, Ls)
        C, Ct = base.C, sc.C
    delta = Ls**-2 * C - Ct

    def one(r):
        xi = _field(cfg, grid, r, eps)
        lam = lowest_eigenpairs(assemble(grid, xi, C), cfg.k, cfg.residual_tol, seed=cfg.seed + r, method=_solver(cfg))
        xt = rescale_noise(xi, Ls) if cfg.noise else zero_field(big)
        lt = lowest_eigenpairs(assemble(big, xt, Ct), cfg.k, cfg.residual_tol, seed=cfg.seed + r, method=_solver(cfg))
        rows = []
        for i in range(cfg.k):
            lhs = Ls**-2 * lam.eigenvalues[i] - lt.eigenvalues[i]
            tol = 5 * (Ls**-2 * stencil_error_bound(lam.eigenvalues[i], grid.h) + stencil_error_bound(lt.eigenvalues[i], big.h))
            rows.append(
                [str(i + 1), _fmt(lam.eigenvalues[i]), _fmt(lt.eigenvalues[i]), _fmt(lhs), _fmt(delta), _fmt(tol), _fmt(abs(lhs - delta) <= tol)]
            )
        return rows

    done = run_replicas(cfg, "scaling", one)
    cols = ["replica", "n", "lambda", "lambda_tilde", "lhs", "rhs", "tolerance", "ok"]
    table = ExperimentTable("scaling", cols, _ordered(done))
    lam = table.column("lambda")
    lt = table.column("lambda_tilde")
    table.summary = {
        "all_ok": bool(np.all(table.column("ok") == 1)),
        "delta_L": delta,
        "mean_gap": float(np.mean(Ls**-2 * lam) - np.mean(lt)),
        "max_deviation": float(np.max(np.abs(table.column("lhs") - delta))),
    }
    return finish_table(cfg, table)


@dataclass
class TailRecord:
    seeds: list
    eigenvalues: np.ndarray  # (R,) lambda_n per replica
    thresholds: np.ndarray
    exceedances: np.ndarray
    p_hat: np.ndarray
    ci_low: np.ndarray
    ci_high: np.ndarray
    used: np.ndarray
    slope: float
    slope_ci: tuple
    target: float
    trend_only: bool
    local_slopes: np.ndarray

    @property
    def monotone_cdf(self) -> bool:
        return bool(np.all(np.diff(self.p_hat) <= 0))

    @property
    def slope_trend_decreasing(self) -> bool:
        s = self.local_slopes[np.isfinite(self.local_slopes)]
        return bool(s.size >= 2 and s[-1] < s[0])


def clopper_pearson(k: int, n: int, level: float = 0.95) -> tuple[float, float]:
    alpha = 1 - level
    lo = 0.0 if k == 0 else stats.beta.ppf(alpha / 2, k, n - k + 1)
    hi = 1.0 if k == n else stats.beta.ppf(1 - alpha / 2, k + 1, n - k)
    return float(lo), float(hi)


def _default_thresholds(lam: np.ndarray, count: int = 48) -> np.ndarray:
    lo = max(-float(np.median(lam)), 0.0)
    hi = -float(np.min(lam))
    if hi <= lo:
        return np.array([])
    xs = np.linspace(lo, hi, count + 1)
    return xs[xs > 0]


def _tail_slope(x, p):
    return float(np.polyfit(np.log(x), np.log(-np.log(p)), 1)[0])


def fit_tail(lam: np.ndarray, thresholds=None, d: int = 1, seeds=None, bootstrap: int = 400, rng_seed: int = 0) -> TailRecord:
    """Slope of log(-log P(lambda < -x)) against log x over thresholds with
    at least 30 exceedances and P <= 1/2."""
    lam = np.asarray(lam, dtype=float)
    R = lam.size
    xs = np.asarray(thresholds, dtype=float) if thresholds is not None and len(thresholds) else _default_thresholds(lam)
    xs = np.sort(xs[xs > 0])
    counts = np.array([int(np.sum(lam < -x)) for x in xs], dtype=int)
    p = counts / R
    ci = np.array([clopper_pearson(int(k), R) for k in counts]).reshape(-1, 2)
    used = (counts >= MIN_EXCEEDANCES) & (p <= 0.5) & (p > 0)
    if used.sum() < 3:
        raise InsufficientTailMass(f"only {int(used.sum())} thresholds carry >= {MIN_EXCEEDANCES} exceedances")
    slope = _tail_slope(xs[used], p[used])
    rng = np.random.default_rng(rng_seed)
    boots = []
    xu = xs[used]
    for _ in range(bootstrap):
        s = rng.choice(lam, R, replace=True)
        pb = np.array([np.mean(s < -x) for x in xu])
        ok = (pb > 0) & (pb < 1)
        if ok.sum() >= 3:
            boots.append(_tail_slope(xu[ok], pb[ok]))
    ci_slope = (float(np.percentile(boots, 2.5)), float(np.percentile(boots, 97.5))) if boots else (math.nan, math.nan)
    # local slopes over consecutive thirds of the usable thresholds
    idx = np.flatnonzero(used)
    local = []
    for chunk in np.array_split(idx, 3):
        local.append(_tail_slope(xs[chunk], p[chunk]) if chunk.size >= 2 else math.nan)
    return TailRecord(
        list(seeds) if seeds is not None else [],
        lam,
        xs,
        counts,
        p,
        ci[:, 0],
        ci[:, 1],
        used,
        slope,
        ci_slope,
        2.0 - d / 2.0,
        d == 3,
        np.array(local),
    )


def tail_exponent(cfg: ExperimentConfig) -> tuple[TailRecord, ExperimentTable]:
    cfg.check_resolved()
    grid = cfg.grid
    eps = cfg.eps[0] if cfg.eps else None
    C = _constant(cfg, eps) if eps is not None else 0.0
    n = cfg.n_eig

    def one(r):
        H = assemble(grid, _field(cfg, grid, r, eps), C)
        res = lowest_eigenpairs(H, n, cfg.residual_tol, seed=cfg.seed + r, method=_solver(cfg))
        return [[_fmt(res.eigenvalues[n - 1])]]

    done = run_replicas(cfg, "tail", one)
    lam = np.array([float(done[r][0][0]) for r in sorted(done)])
    rec = fit_tail(lam, cfg.thresholds, cfg.d, seeds=[(cfg.seed, r) for r in sorted(done)], rng_seed=cfg.seed)
    rows = []
    for x, k, p, lo, hi, u in zip(rec.thresholds, rec.exceedances, rec.p_hat, rec.ci_low, rec.ci_high, rec.used):
        rows.append([_fmt(x), str(int(k)), _fmt(p), _fmt(lo), _fmt(hi), _fmt(bool(u))])
    table = ExperimentTable("tail", ["x", "exceedances", "p_hat", "ci_low", "ci_high", "used"], rows)
    table.summary = {
        "slope": rec.slope,
        "slope_ci": list(rec.slope_ci),
        "target": rec.target,
        "trend_only": rec.trend_only,
        "local_slopes": rec.local_slopes.tolist(),
        "replicas": int(lam.size),
    }
    if cfg.output is not None:
        ev = ExperimentTable("tail_eigenvalues", ["replica", "eigenvalue"], [[str(r)] + done[r][0] for r in sorted(done)])
        write_table(ev, Path(cfg.output) / "tail_eigenvalues.csv")
    finish_table(cfg, table)
    return rec, table


# ---- bump potential ---------------------------------------------------------------------


@dataclass
class BumpReport:
    n: int
    eigenvalues: np.ndarray
    depth_b: float
    upper: float
    dirichlet_energy: float
    ok: bool


def bump_centres(d: int, L: float, n: int) -> np.ndarray:
    """n centres on the first axis, 2 apart, each unit ball inside the box."""
    if n == 0:
        return np.zeros((0, d))
    span = 2.0 * n
    if span > 2.0 * L + 1e-12:
        raise GeometryError(f"{n} unit-radius supports do not fit disjointly in (-{L}, {L})^{d}")
    xs = -span / 2 + 1.0 + 2.0 * np.arange(n)
    out = np.zeros((n, d))
    out[:, 0] = xs
    return out


def bump_lower_bound(cfg: ExperimentConfig, centres=None) -> BumpReport:
    """Wells chi_k = b Psi(|x - x_k|) with b = -3c - <f, -Delta_h f>, where f
    is the normalised lattice bump supported in B(0, 1/2)."""
    grid = cfg.grid
    n = int(cfg.n_bumps)
    c = float(cfg.well_c)
    pts = np.asarray(centres, dtype=float) if centres is not None else bump_centres(cfg.d, cfg.L, n)
    n = len(pts)
    for i in range(n):
        if np.any(cfg.L - np.abs(pts[i]) < 1.0 - 1e-12):
            raise GeometryError(f"support of bump {i} leaves the box")
        for j in range(i):
            if np.linalg.norm(pts[i] - pts[j]) < 2.0 - 1e-12:
                raise GeometryError(f"supports of bumps {j} and {i} overlap")
    x = grid.coords()
    hd = grid.h**grid.d
    # f_1 on the lattice, centred at a node of a same-mesh grid
    f = bump.bump(2.0 * np.linalg.norm(x, axis=-1))
    f = f / math.sqrt(np.sum(f**2) * hd)
    free = assemble(grid)
    energy = float(np.sum(f * free.matvec(f)) * hd)
    b = -3.0 * c - energy
    pot = np.zeros(grid.shape)
    for p in pts:
        pot += b * bump.cutoff(np.linalg.norm(x - p, axis=-1))
    H = assemble(grid, deterministic(grid, pot), 0.0)
    k = max(n, 1)
    res = lowest_eigenpairs(H, k, cfg.residual_tol, seed=cfg.seed, method=_solver(cfg))
    lam_n = res.eigenvalues[k - 1]
    ok = (b - 1e-9 <= lam_n <= -3.0 * c + 1e-9) if n > 0 else lam_n > 0
    return BumpReport(n, res.eigenvalues, b, -3.0 * c, energy, bool(ok))


def bump_table(cfg: ExperimentConfig) -> tuple[BumpReport, ExperimentTable]:
    rep = bump_lower_bound(cfg)
    rows = [[str(i), _fmt(v), _fmt(rep.depth_b), _fmt(rep.upper)] for i, v in enumerate(rep.eigenvalues, start=1)]
    table = ExperimentTable("bump", ["n", "eigenvalue", "b", "upper"], rows, {"ok": rep.ok, "b": rep.depth_b})
    finish_table(cfg, table)
    return rep, table


def run(cfg: ExperimentConfig):
    if cfg.experiment == "spectrum":
        return spectrum(cfg)
    if cfg.experiment == "converge":
        return convergence_in_epsilon(cfg)
    if cfg.experiment == "scaling":
        return scaling_identity_check(cfg)
    if cfg.experiment == "tail":
        return tail_exponent(cfg)[1]
    return bump_table(cfg)[1]
