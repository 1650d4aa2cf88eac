"""
Parameter-grid evaluation with checkpointing, worker pools and CSV output.

Every grid point is an independent task. Results are merged by grid index,
and the checkpoint file (JSON lines) is only ever written by the parent
process, so an interrupted sweep can resume without recomputing finished
points and without worker-count dependence.
"""

import csv
import hashlib
import itertools
import json
import logging
import math
import multiprocessing as mp
import os
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .analysis import bessel_ridges
from .heom import HeomConfig, convergence_check, solve_heom_pair
from .measures import (ENGINES, MEASURES, Trajectory, measure_value,
                       n_relative)
from .qcore import SystemParams
from .rwa import IntegratorConfig, solve_g

log = logging.getLogger(__name__)

CSV_HEADER = ("gamma0", "delta", "omega_d", "omega0", "engine", "measure",
              "value", "horizon", "trunc_n", "status")
PARAM_NAMES = ("gamma0", "delta", "omega_d", "omega0")
STATIC_DELTA_RANGE = (0.0, 20.0, 0.25)


class SweepAborted(RuntimeError):
    pass


def fmt(x):
    """Nine significant digits; missing values become empty fields."""
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{x:.9g}"


@dataclass(frozen=True)
class Axis:
    name: str
    values: tuple

    def __post_init__(self):
        if self.name not in PARAM_NAMES:
            raise ValueError(f"unknown sweep parameter {self.name!r}")
        if len(self.values) == 0:
            raise ValueError(f"axis {self.name} is empty")
        object.__setattr__(self, "values",
                           tuple(float(v) for v in self.values))

    @classmethod
    def range(cls, name, lo, hi, step):
        """Inclusive uniform axis ``lo, lo + step, ..., hi``."""
        if step <= 0:
            raise ValueError("axis step must be > 0")
        if hi < lo:
            raise ValueError("axis max must be >= min")
        n = int(math.floor((hi - lo) / step + 1e-9)) + 1
        return cls(name, tuple(lo + i * step for i in range(n)))

    @classmethod
    def parse(cls, text):
        """``name=lo:hi:step`` or ``name=v1,v2,...``."""
        name, _, rest = text.partition("=")
        name = name.strip().replace("-", "_")
        if ":" in rest:
            lo, hi, step = (float(s) for s in rest.split(":"))
            return cls.range(name, lo, hi, step)
        return cls(name, tuple(float(s) for s in rest.split(",") if s.strip()))


@dataclass(frozen=True)
class SweepSpec:
    engine: str
    axes: tuple
    fixed: SystemParams = SystemParams(gamma0=0.0)
    measures: tuple = MEASURES
    rwa_config: IntegratorConfig = IntegratorConfig()
    heom_config: HeomConfig = HeomConfig()
    # gamma0 -> {measure: static max or None}
    static_max: Optional[dict] = None
    check_convergence: bool = True

    def __post_init__(self):
        if self.engine not in ENGINES:
            raise ValueError(f"unknown engine {self.engine!r}")
        if not self.axes:
            raise ValueError("a sweep needs at least one axis")
        for m in self.measures:
            if m not in MEASURES:
                raise ValueError(f"unknown measure {m!r}")
        names = [a.name for a in self.axes]
        if len(set(names)) != len(names):
            raise ValueError("duplicate sweep axes")

    def points(self):
        names = [a.name for a in self.axes]
        for combo in itertools.product(*(a.values for a in self.axes)):
            yield self.fixed.replace(**dict(zip(names, combo)))

    @property
    def size(self):
        return math.prod(len(a.values) for a in self.axes)

    def to_dict(self):
        d = {
            "engine": self.engine,
            "axes": [{"name": a.name, "values": list(a.values)}
                     for a in self.axes],
            "fixed": asdict(self.fixed),
            "measures": list(self.measures),
            "rwa_config": asdict(self.rwa_config),
            "heom_config": asdict(self.heom_config),
        }
        if self.static_max is not None:
            d["static_max"] = {repr(float(k)): v
                               for k, v in sorted(self.static_max.items())}
        return d

    def fingerprint(self):
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass(frozen=True)
class SweepRecord:
    index: int
    params: SystemParams
    engine: str
    measure: str
    value: Optional[float]
    horizon: Optional[float]
    trunc_n: Optional[int]
    status: str

    def row(self):
        p = self.params
        return (fmt(p.gamma0), fmt(p.delta), fmt(p.omega_d), fmt(p.omega0),
                self.engine, self.measure, fmt(self.value), fmt(self.horizon),
                fmt(self.trunc_n), self.status)


def engine_trajectory(engine, params, rwa_config=None, heom_config=None):
    """Trace-distance trajectory of the sigma_x pair from either engine."""
    if engine == "rwa":
        amp = solve_g(params, rwa_config or IntegratorConfig())
        return Trajectory(amp.tau, np.clip(amp.distance, 0.0, 1.0),
                          engine="rwa", params=params)
    if engine == "heom":
        return solve_heom_pair(params, heom_config or HeomConfig())[0]
    raise ValueError(f"unknown engine {engine!r}")


def evaluate_point(task):
    """Worker entry point: ``(index, engine, params, rwa_cfg, heom_cfg, measures)``.

    Never raises; failures come back as an ``error:`` status.
    """
    index, engine, params, rwa_cfg, heom_cfg, measures = task
    trunc_n = heom_cfg.n_trunc if engine == "heom" else None
    try:
        traj = engine_trajectory(engine, params, rwa_cfg, heom_cfg)
        values = {m: measure_value(traj, m) for m in measures}
        return {"index": index, "values": values,
                "horizon": float(traj.tau[-1]), "trunc_n": trunc_n,
                "status": "ok"}
    except Exception as exc:  # recorded per point, sweep continues
        msg = f"error:{type(exc).__name__}:{exc}".replace(",", ";")
        return {"index": index, "values": {m: None for m in measures},
                "horizon": None, "trunc_n": trunc_n, "status": msg}


def _records_for(spec, params, res):
    out = []
    for m in spec.measures:
        v = res["values"][m]
        out.append(SweepRecord(res["index"], params, spec.engine, m, v,
                               res["horizon"], res["trunc_n"], res["status"]))
    if spec.static_max is not None:
        row = spec.static_max.get(float(params.gamma0), {})
        for m in spec.measures:
            v = res["values"][m]
            rel = n_relative(v, row.get(m)) if v is not None else None
            status = res["status"]
            if status == "ok" and rel is None:
                status = "undefined"
            out.append(SweepRecord(res["index"], params, spec.engine,
                                   f"{m}_rel", rel, res["horizon"],
                                   res["trunc_n"], status))
    return out


def _load_checkpoint(path, fingerprint):
    done = {}
    if not path.exists():
        return done
    with path.open() as fh:
        header = fh.readline()
        if not header:
            return done
        if json.loads(header).get("fingerprint") != fingerprint:
            raise SweepAborted(
                f"checkpoint {path} belongs to a different sweep spec")
        for line in fh:
            line = line.strip()
            if not line:
                continue
            try:
                res = json.loads(line)
            except json.JSONDecodeError:
                # torn final line from an interrupted write
                break
            done[res["index"]] = res
    return done


def default_workers():
    try:
        return max(1, int(os.environ.get("NMQSIM_WORKERS", "1")))
    except ValueError:
        return 1


def _corner_points(spec):
    corners = []
    for combo in itertools.product(*((a.values[0], a.values[-1])
                                     for a in spec.axes)):
        p = spec.fixed.replace(**dict(zip([a.name for a in spec.axes], combo)))
        if p not in corners:
            corners.append(p)
    return corners


def heom_corner_check(spec):
    """Truncation study (N, N+2) at the grid corners; raises if unconverged."""
    cfg = spec.heom_config
    reports = []
    for p in _corner_points(spec):
        rep = convergence_check(p, cfg, (cfg.n_trunc, cfg.n_trunc + 2))
        reports.append({"params": asdict(p), "delta": rep.deltas[-1],
                        "converged": rep.converged})
        if not rep.converged:
            raise SweepAborted(
                f"HEOM not converged at N={cfg.n_trunc} for {p.label()}: "
                f"sup|D_N - D_N+2| = {rep.deltas[-1]:.3g}")
    return reports


def run_sweep(spec, workers=None, checkpoint=None, resume=False,
              progress=None):
    """Evaluate every grid point of ``spec``.

    Parameters
    ----------
    spec : SweepSpec
    workers : int, optional
        Process count; defaults to ``NMQSIM_WORKERS`` or 1.
    checkpoint : path, optional
        JSON-lines file receiving one line per finished point.
    resume : bool
        Reuse finished points from ``checkpoint`` instead of starting over.
    progress : callable, optional
        Called as ``progress(n_done, n_total)`` after each point.

    Returns
    -------
    list of SweepRecord
        Ordered by grid index, then measure.
    """
    workers = workers or default_workers()
    points = list(spec.points())
    fp = spec.fingerprint()
    done = {}
    ck = Path(checkpoint) if checkpoint else None
    if ck is not None:
        if resume:
            done = _load_checkpoint(ck, fp)
        if not resume or not ck.exists() or ck.stat().st_size == 0:
            ck.parent.mkdir(parents=True, exist_ok=True)
            with ck.open("w") as fh:
                fh.write(json.dumps({"fingerprint": fp}) + "\n")
        elif done:
            # drop a possibly torn tail so appended lines stay parseable
            with ck.open("w") as fh:
                fh.write(json.dumps({"fingerprint": fp}) + "\n")
                for i in sorted(done):
                    fh.write(json.dumps(done[i]) + "\n")

    if spec.engine == "heom" and spec.check_convergence and not done:
        heom_corner_check(spec)

    todo = [(i, spec.engine, p, spec.rwa_config, spec.heom_config,
             tuple(spec.measures))
            for i, p in enumerate(points) if i not in done]
    results = dict(done)
    fh = ck.open("a") if ck is not None else None
    try:
        def accept(res):
            results[res["index"]] = res
            if fh is not None:
                fh.write(json.dumps(res) + "\n")
                fh.flush()
            if progress is not None:
                progress(len(results), len(points))

        if workers > 1 and len(todo) > 1:
            ctx = mp.get_context("spawn")
            with ctx.Pool(workers) as pool:
                for res in pool.imap_unordered(evaluate_point, todo,
                                               chunksize=1):
                    accept(res)
        else:
            for task in todo:
                accept(evaluate_point(task))
    finally:
        if fh is not None:
            fh.close()

    records = []
    for i, p in enumerate(points):
        records.extend(_records_for(spec, p, results[i]))
    return records


def write_csv(records, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in records:
            w.writerow(r.row())
    return path


def read_csv(path):
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))


def write_metadata(path, **entries):
    path = Path(path)
    meta = {"tool": "nmqsim", "version": __version__}
    meta.update(entries)
    path.write_text(json.dumps(meta, indent=2, sort_keys=True, default=str)
                    + "\n")
    return path


@dataclass(frozen=True)
class StaticMax:
    gamma0: float
    measure: str
    value: Optional[float]
    argmax_delta: Optional[float]
    status: str


def static_max_table(measure, gamma0_list, delta_range=STATIC_DELTA_RANGE,
                     engine="rwa", omega0=20.0, rwa_config=None,
                     heom_config=None, workers=None, cache=None):
    """Best undriven measure over the detuning grid, per coupling.

    ``delta_range = (lo, hi, step)``. Couplings whose static measure is
    identically zero (or failed) get ``value=None`` with status
    ``undefined``. ``cache`` is an optional dict shared between calls.
    """
    measures = (measure,) if isinstance(measure, str) else tuple(measure)
    gamma0_list = [float(g) for g in gamma0_list]
    if not gamma0_list:
        return {}
    rwa_config = rwa_config or IntegratorConfig()
    heom_config = heom_config or HeomConfig()
    key_base = (engine, tuple(delta_range), omega0, rwa_config, heom_config)
    table = {}
    missing = [g for g in gamma0_list
               if cache is None or (key_base, g) not in cache]
    if missing:
        spec = SweepSpec(
            engine=engine,
            axes=(Axis("gamma0", tuple(missing)),
                  Axis.range("delta", *delta_range)),
            fixed=SystemParams(0.0, 0.0, 0.0, omega0),
            measures=MEASURES, rwa_config=rwa_config,
            heom_config=heom_config, check_convergence=False)
        recs = run_sweep(spec, workers=workers)
        per = {}
        for r in recs:
            per.setdefault(r.params.gamma0, []).append(r)
        for g in missing:
            row = {}
            for m in MEASURES:
                vals = [(r.value, r.params.delta) for r in per[g]
                        if r.measure == m and r.value is not None]
                if not vals or max(v for v, _ in vals) <= 0:
                    row[m] = StaticMax(g, m, None, None, "undefined")
                else:
                    # first maximiser on ties keeps the result deterministic
                    v, d = max(vals, key=lambda x: x[0])
                    row[m] = StaticMax(g, m, v, d, "ok")
            if cache is not None:
                cache[(key_base, g)] = row
            table[g] = row
    for g in gamma0_list:
        if g not in table:
            table[g] = cache[(key_base, g)]
    return {g: {m: table[g][m] for m in measures} for g in gamma0_list}


def static_max_values(table):
    """``{gamma0: {measure: value}}`` view used by :class:`SweepSpec`."""
    return {g: {m: sm.value for m, sm in row.items()}
            for g, row in table.items()}


def relative_grid(records, measure):
    """``{index: (params, n_rel)}`` for one relative measure."""
    tag = f"{measure}_rel"
    return {r.index: (r.params, r.value) for r in records if r.measure == tag}


def max_relative(records, measure, static_row):
    """Largest relative measure over the driven grid.

    The static maximiser is part of the maximisation domain (omega_d = 0
    slice), so the result is never below 1 when the static maximum is
    defined.
    """
    vals = [(v, p) for p, v in relative_grid(records, measure).values()
            if v is not None]
    if static_row is None or static_row.value is None:
        return None, None
    best = (1.0, static_row.gamma0, static_row.argmax_delta, 0.0)
    for v, p in vals:
        if v > best[0]:
            best = (v, p.gamma0, p.delta, p.omega_d)
    return best[0], best


# figure datasets ---------------------------------------------------------

@dataclass
class FigureOptions:
    engine: str = "rwa"
    omega0: float = 20.0
    resolution: Optional[int] = None
    workers: Optional[int] = None
    resume: bool = False
    rwa_config: IntegratorConfig = IntegratorConfig()
    heom_config: HeomConfig = HeomConfig()
    gamma0_list: Optional[Sequence[float]] = None
    progress: Optional[object] = None


def _res(opts, rwa_default, heom_default=21):
    if opts.resolution:
        return opts.resolution
    return rwa_default if opts.engine == "rwa" else heom_default


def _lin_axis(name, lo, hi, n):
    return Axis(name, tuple(np.linspace(lo, hi, n)))


def _spec(opts, axes, fixed, static=None):
    return SweepSpec(engine=opts.engine, axes=axes, fixed=fixed,
                     rwa_config=opts.rwa_config, heom_config=opts.heom_config,
                     static_max=static)


def _run(spec, out_dir, stem, opts):
    ck = Path(out_dir) / f"{stem}.checkpoint.jsonl"
    recs = run_sweep(spec, workers=opts.workers, checkpoint=ck,
                     resume=opts.resume, progress=opts.progress)
    path = write_csv(recs, Path(out_dir) / f"{stem}.csv")
    write_metadata(Path(out_dir) / f"{stem}.meta.json",
                   spec=spec.to_dict(), fingerprint=spec.fingerprint(),
                   units="all quantities in units of the bath width lambda")
    return recs, [path]


def fig1_dataset(out_dir, opts):
    n = _res(opts, 41)
    spec = _spec(opts, (_lin_axis("gamma0", 0, 10, n),
                        _lin_axis("delta", 0, 10, n)),
                 SystemParams(0.0, 0.0, 0.0, opts.omega0))
    return _run(spec, out_dir, f"fig1_{opts.engine}", opts)[1]


def fig2_dataset(out_dir, opts):
    """M_x(gamma0) with a (delta, omega_d) maximisation grid on [0, 20]^2."""
    gammas = (list(opts.gamma0_list) if opts.gamma0_list
              else list(np.geomspace(0.1, 10.0, 15)))
    n = _res(opts, 21)
    table = static_max_table(MEASURES, gammas, engine=opts.engine,
                             omega0=opts.omega0, rwa_config=opts.rwa_config,
                             heom_config=opts.heom_config,
                             workers=opts.workers)
    spec = _spec(opts, (Axis("gamma0", tuple(gammas)),
                        _lin_axis("delta", 0, 20, n),
                        _lin_axis("omega_d", 0, 20, n)),
                 SystemParams(0.0, 0.0, 0.0, opts.omega0),
                 static_max_values(table))
    stem = f"fig2_{opts.engine}"
    recs, files = _run(spec, out_dir, f"{stem}_points", opts)
    by_g = {}
    for r in recs:
        by_g.setdefault(r.params.gamma0, []).append(r)
    path = Path(out_dir) / f"{stem}.csv"
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("gamma0", "M_BLP", "M_LR", "static_max_BLP",
                    "static_max_LR", "static_argmax_delta_LR",
                    "argmax_delta_LR", "argmax_omega_d_LR", "status"))
        for g in gammas:
            m_blp, _ = max_relative(by_g[float(g)], "BLP", table[g]["BLP"])
            m_lr, best = max_relative(by_g[float(g)], "LR", table[g]["LR"])
            status = "ok" if m_lr is not None and m_blp is not None \
                else "undefined"
            w.writerow((fmt(g), fmt(m_blp), fmt(m_lr),
                        fmt(table[g]["BLP"].value), fmt(table[g]["LR"].value),
                        fmt(table[g]["LR"].argmax_delta),
                        fmt(best[2] if best else None),
                        fmt(best[3] if best else None), status))
    write_metadata(Path(out_dir) / f"{stem}.meta.json",
                   grid_note=("M values are maxima over a finite "
                              f"{n}x{n} grid and are lower bounds"),
                   static_delta_range=list(STATIC_DELTA_RANGE),
                   engine=opts.engine, omega0=opts.omega0)
    return [path] + files


def fig3_dataset(out_dir, opts):
    gammas = list(opts.gamma0_list) if opts.gamma0_list else [0.1, 1.4, 10.0]
    n = _res(opts, 41)
    table = static_max_table(MEASURES, gammas, engine=opts.engine,
                             omega0=opts.omega0, rwa_config=opts.rwa_config,
                             heom_config=opts.heom_config,
                             workers=opts.workers)
    spec = _spec(opts, (Axis("gamma0", tuple(gammas)),
                        _lin_axis("delta", 0, 20, n),
                        _lin_axis("omega_d", 0, 20, n)),
                 SystemParams(0.0, 0.0, 0.0, opts.omega0),
                 static_max_values(table))
    return _run(spec, out_dir, f"fig3_{opts.engine}", opts)[1]


FIG4_WINDOW = {"delta": (0.0, 20.0), "omega_d": (0.0, 8.0)}
FIG4_GAMMA0 = 0.1


def ray_profiles(gamma0, deltas, ratios, static_value, omega0=20.0,
                 rwa_config=None, engine="rwa", heom_config=None):
    """Relative LR measure along rays of constant omega_d/delta.

    Returns an array of shape ``(len(deltas), len(ratios))``.
    """
    out = np.empty((len(deltas), len(ratios)))
    for i, d in enumerate(deltas):
        for j, r in enumerate(ratios):
            p = SystemParams(gamma0, d, r * d, omega0)
            traj = engine_trajectory(engine, p, rwa_config, heom_config)
            rel = n_relative(measure_value(traj, "LR"), static_value)
            out[i, j] = math.nan if rel is None else rel
    return out


def fig4_dataset(out_dir, opts):
    n = _res(opts, 61)
    g = FIG4_GAMMA0
    table = static_max_table(MEASURES, [g], engine=opts.engine,
                             omega0=opts.omega0, rwa_config=opts.rwa_config,
                             heom_config=opts.heom_config,
                             workers=opts.workers)
    spec = _spec(opts, (Axis("gamma0", (g,)),
                        _lin_axis("delta", *FIG4_WINDOW["delta"], n),
                        _lin_axis("omega_d", *FIG4_WINDOW["omega_d"], n)),
                 SystemParams(0.0, 0.0, 0.0, opts.omega0),
                 static_max_values(table))
    _, files = _run(spec, out_dir, f"fig4_{opts.engine}", opts)
    ridges = bessel_ridges((0.05, 1.0))
    path = Path(out_dir) / f"fig4_{opts.engine}_ridges.csv"
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("omega_d_over_delta", "root", "function", "index"))
        for r in ridges:
            w.writerow((fmt(r.ratio), fmt(r.root), r.function, r.index))
    return files + [path]


FIGURES = {"fig1": fig1_dataset, "fig2": fig2_dataset, "fig3": fig3_dataset,
           "fig4": fig4_dataset}


def figure_dataset(which, out_dir, opts=None):
    """Write the data behind one of the figures into ``out_dir``."""
    if which not in FIGURES:
        raise ValueError(f"unknown figure {which!r}; expected {sorted(FIGURES)}")
    opts = opts or FigureOptions()
    Path(out_dir).mkdir(parents=True, exist_ok=True)
    return FIGURES[which](out_dir, opts)
