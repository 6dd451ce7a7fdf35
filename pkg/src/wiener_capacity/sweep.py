"""SNR sweeps over all bounds, with CSV output and a JSON provenance file.

A sweep config is an INI file with one section per sweep:

    [fig1]
    sigma_delta_sq = 1e-3
    es = 1.0
    snr_db = 0, 10, 20, 30, 40
    compute = c_u, c_u_tilde, lb_m2, lb_m3
    particles = 10000
    uses = 1000
    entropy_samples = 100000
    input_samples = 10000000
    seed = 0
    workers = 1

SNR points vary sigma_w_sq at fixed es.  A failing quantity is recorded as
absent, with the error noted in the JSON sidecar; the sweep carries on.
"""

from __future__ import annotations

import configparser
import csv
import io
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields

import numpy as np

from . import bounds_upper, quad, rate, refs
from .errors import CapacityError, InvalidConfig
from .model import ChannelParams

CSV_COLUMNS = ("snr_db", "c_awgn", "c_lapidoth", "c_u", "c_u_tilde",
               "lb_m2", "lb_m2_stderr", "lb_m3", "lb_m3_stderr")
QUANTITIES = ("c_u", "c_u_tilde", "lb_m2", "lb_m3")


@dataclass(frozen=True)
class SweepConfig:
    name: str
    snr_db: tuple
    sigma_delta_sq: float = 1e-3
    es: float = 1.0
    compute: tuple = QUANTITIES
    particles: int = 10_000
    uses: int = 1000
    entropy_samples: int = 100_000
    input_samples: int = 10_000_000
    r_grid_points: int = 60
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if len(self.snr_db) == 0:
            raise InvalidConfig(f"[{self.name}] SNR grid is empty")
        if not all(math.isfinite(s) for s in self.snr_db):
            raise InvalidConfig(f"[{self.name}] SNR grid has nonfinite values")
        unknown = set(self.compute) - set(QUANTITIES)
        if unknown:
            raise InvalidConfig(f"[{self.name}] unknown quantities {sorted(unknown)}")
        if not self.sigma_delta_sq > 0:
            raise InvalidConfig(f"[{self.name}] sigma_delta_sq must be > 0")
        if not self.es > 0:
            raise InvalidConfig(f"[{self.name}] es must be > 0")
        if self.workers < 1:
            raise InvalidConfig(f"[{self.name}] workers must be >= 1")

    def channel(self, snr_db: float) -> ChannelParams:
        return ChannelParams.from_snr_db(snr_db, self.sigma_delta_sq, self.es)


_INT_KEYS = ("particles", "uses", "entropy_samples", "input_samples",
             "r_grid_points", "seed", "workers")


def _split(text: str) -> list[str]:
    return [t for t in (s.strip() for s in text.replace("\n", ",").split(",")) if t]


def parse_config(text: str) -> list[SweepConfig]:
    """Parse INI text into one config per section."""
    cp = configparser.ConfigParser()
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise InvalidConfig(str(exc)) from exc
    known = {f.name for f in fields(SweepConfig)} - {"name"}
    out = []
    for name in cp.sections():
        sec = cp[name]
        extra = set(sec) - known
        if extra:
            raise InvalidConfig(f"[{name}] unknown keys {sorted(extra)}")
        kw = {}
        try:
            kw["snr_db"] = tuple(float(s) for s in _split(sec.get("snr_db", "")))
            if "compute" in sec:
                kw["compute"] = tuple(_split(sec["compute"]))
            for key in ("sigma_delta_sq", "es"):
                if key in sec:
                    kw[key] = sec.getfloat(key)
            for key in _INT_KEYS:
                if key in sec:
                    kw[key] = sec.getint(key)
        except ValueError as exc:
            raise InvalidConfig(f"[{name}] {exc}") from exc
        out.append(SweepConfig(name=name, **kw))
    if not out:
        raise InvalidConfig("config has no sweep sections")
    return out


def load_config(path) -> list[SweepConfig]:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise InvalidConfig(f"cannot read config: {exc}") from exc
    return parse_config(text)


@dataclass(frozen=True)
class SweepRow:
    """One SNR point.  ``None`` marks an absent value."""

    snr_db: float
    c_awgn: float
    c_lapidoth: float
    c_u: float | None = None
    c_u_tilde: float | None = None
    lb_m2: float | None = None
    lb_m2_stderr: float | None = None
    lb_m3: float | None = None
    lb_m3_stderr: float | None = None

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if v is not None and not math.isfinite(v):
                raise ValueError(f"{f.name} is not finite")
        if self.c_awgn < 0:
            raise ValueError("c_awgn must be >= 0")


def _row_job(cfg: SweepConfig, snr_db: float):
    """Compute one row.  Returns (SweepRow, provenance dict)."""
    t0 = time.perf_counter()
    p = cfg.channel(snr_db)
    vals = {"snr_db": float(snr_db), "c_awgn": refs.c_awgn(p),
            "c_lapidoth": refs.c_lapidoth(p)}
    prov: dict = {"snr_db": float(snr_db), "sigma_w_sq": p.sigma_w_sq,
                  "errors": {}}

    def attempt(key, fn):
        try:
            fn()
        except CapacityError as exc:
            prov["errors"][key] = f"{type(exc).__name__}: {exc}"

    if "c_u_tilde" in cfg.compute:
        def do_tilde():
            aux = quad.solve_aux_params(p, 0.0)
            vals["c_u_tilde"] = bounds_upper.upper_bound_cu_tilde(p, aux)
            prov["aux_mu0"] = {"alpha_u": aux.alpha_u, "beta_u": aux.beta_u,
                               "residuals": list(aux.residuals)}
        attempt("c_u_tilde", do_tilde)

    if "c_u" in cfg.compute:
        def do_cu():
            r_grid = bounds_upper.default_r_grid(cfg.es, cfg.r_grid_points)
            res = bounds_upper.upper_bound_cu(p, r_grid=r_grid,
                                              n_samples=cfg.entropy_samples,
                                              seed=cfg.seed)
            vals["c_u"] = res.c_u
            prov["upper_bound"] = {"argmax_R": res.argmax_R, "argmin_mu": res.argmin_mu,
                                   "mu_grid": res.diagnostics["mu_grid"],
                                   "r_grid": res.diagnostics["r_grid"],
                                   "c_u_per_mu": res.diagnostics["c_u_per_mu"],
                                   "n_samples": cfg.entropy_samples, "seed": cfg.seed}
        attempt("c_u", do_cu)

    for m in (2, 3):
        key = f"lb_m{m}"
        if key not in cfg.compute:
            continue

        def do_lb(m=m, key=key):
            dist = quad.solve_input_params(p, m, n_samples=cfg.input_samples,
                                           seed=cfg.seed + 2015)
            est = rate.estimate_rate(p, dist, cfg.uses, cfg.particles, cfg.seed)
            vals[key] = est.bits_per_use
            vals[key + "_stderr"] = est.std_err
            prov[key] = {"input": {"alpha_l": dist.alpha_l, "beta_l": dist.beta_l,
                                   "residuals": list(dist.residuals),
                                   **_jsonable(dist.provenance)},
                         "estimate": _jsonable(est.as_dict())}
        attempt(key, do_lb)

    prov["wall_clock_s"] = time.perf_counter() - t0
    return SweepRow(**vals), prov


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def run_sweep(cfg: SweepConfig):
    """Run every SNR point of ``cfg``.  Returns (rows, provenance) with rows
    ordered by SNR."""
    t0 = time.perf_counter()
    grid = sorted(cfg.snr_db)
    if cfg.workers > 1:
        with ProcessPoolExecutor(cfg.workers) as pool:
            results = list(pool.map(_row_job, [cfg] * len(grid), grid))
    else:
        results = [_row_job(cfg, s) for s in grid]
    rows = [r for r, _ in results]
    prov = {"config": asdict(cfg), "rows": [p for _, p in results],
            "wall_clock_s": time.perf_counter() - t0}
    return rows, prov


def _fmt(v) -> str:
    return "" if v is None else "%.9g" % v


def emit_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for row in rows:
        w.writerow([_fmt(getattr(row, c)) for c in CSV_COLUMNS])
    return buf.getvalue()


def parse_csv(text: str) -> list[SweepRow]:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None or tuple(header) != CSV_COLUMNS:
        raise InvalidConfig(f"unexpected CSV header {header}")
    rows = []
    for rec in reader:
        if not rec:
            continue
        rows.append(SweepRow(**{c: (float(v) if v != "" else None)
                                for c, v in zip(CSV_COLUMNS, rec)}))
    return rows


def rounded(row: SweepRow) -> SweepRow:
    """``row`` with every value rounded to the 9 significant digits kept in
    the CSV."""
    return SweepRow(**{c: (None if v is None else float(_fmt(v)))
                       for c, v in ((c, getattr(row, c)) for c in CSV_COLUMNS)})


def write_outputs(rows, prov, csv_path) -> str:
    """Write the CSV and its ``.json`` sidecar; returns the sidecar path."""
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        fh.write(emit_csv(rows))
    side = str(csv_path)
    side = (side[:-4] if side.endswith(".csv") else side) + ".json"
    with open(side, "w", encoding="utf-8") as fh:
        json.dump(_jsonable(prov), fh, indent=2)
    return side
