"""Batch driver: run an experiment over a parameter grid and write its reports."""

from __future__ import annotations

import csv
import io
import json
import math
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import __version__
from ..construction import (DataFamilyParams, build_initial_data, cross_term_report,
                            cross_term_sweep, envelope_shapes, initial_besov_check,
                            theta2_lower_report)
from ..field_rep import GridField, GridSpec, MemoryCapExceeded
from ..lp_frame import build_lp_frame
from ..multipliers import PhysicalParams, QuadratureError, QuadratureSpec
from ..norms import besov_norm, lp_norm, modulation_norm
from ..picard_hierarchy import (combinatorial_maximum, compute_hierarchy, fit_order_bounds,
                                theta_lower_total)
from ..spectral import set_fft_workers
from .config import ConfigError, ExperimentConfig
from .svgplot import line_chart

__all__ = ["SCHEMA_VERSION", "CSV_COLUMNS", "ExperimentResult", "run", "emit_plots",
           "ERROR_CODES"]

SCHEMA_VERSION = 1
CSV_COLUMNS = ("schema_version", "d", "N", "delta", "eps0", "R", "T_N", "norm_u0_B0",
               "theta2_main_F", "theta2_lowfreq", "crossterm_pair", "crossterm_far",
               "crossterm_triple", "c1_fit", "c2_fit", "tail_k_ge_3", "theta_lower_net")
ERROR_CODES = {ConfigError: "invalid_config", MemoryCapExceeded: "memory_cap",
               QuadratureError: "quadrature_nonconvergence"}


@dataclass
class ExperimentResult:
    """Records, invariant checks and timings of one run.

    Attributes
    ----------
    config : ExperimentConfig
    records : list of dict
        One record per parameter point, in sorted point order.
    checks : dict
        Invariant name -> bool; the run succeeds iff all are true and no
        error was recorded.
    summary : dict
        Run-level quantities (slopes, combinatorial maximum, ...).
    errors : list of dict
        ``{"code", "message", "point"}`` entries.
    timings : dict
    version : str
    """

    config: ExperimentConfig
    records: list = field(default_factory=list)
    checks: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)
    errors: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)
    version: str = __version__

    @property
    def ok(self) -> bool:
        return not self.errors and all(self.checks.values())

    @property
    def exit_code(self) -> int:
        return 0 if self.ok else 1

    def to_json(self, include_timings: bool = True) -> str:
        out = {"config": self.config.to_dict(), "config_echo": self.config.echo(),
               "version": self.version, "records": self.records, "checks": self.checks,
               "summary": self.summary, "errors": self.errors, "ok": self.ok}
        if include_timings:
            out["timings"] = self.timings
        return json.dumps(_jsonable(out), indent=2, sort_keys=True)

    def csv_text(self) -> str:
        """Fixed-schema CSV of the per-point records carrying the sweep columns."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.records:
            if "N" not in r:
                continue
            row = []
            for c in CSV_COLUMNS:
                v = SCHEMA_VERSION if c == "schema_version" else r.get(c, math.nan)
                row.append(_fmt(v))
            w.writerow(row)
        return buf.getvalue()


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _points(cfg: ExperimentConfig):
    return [DataFamilyParams(n, dl, cfg.d, cfg.eps0) for dl in sorted(cfg.delta)
            for n in sorted(cfg.N)]


def _base(p: DataFamilyParams) -> dict:
    return {"d": p.d, "N": p.N, "delta": p.delta, "eps0": p.eps0, "R": p.R, "T_N": p.T_N,
            "certified": p.certified, "n_scales": p.n_scales}


def _phys(cfg):
    return PhysicalParams(cfg.mu, cfg.lam, cfg.kappa)


def _quad(cfg):
    return QuadratureSpec(cfg.quad_nodes, cfg.quad_max_refine, cfg.quad_rel_tol)


def _spec(cfg, tail):
    return GridSpec(tail_tol=tail, memory_cap=cfg.memory_cap)


# -- experiments -------------------------------------------------------------------------------
def _frame_check(cfg, res, dump):
    rng = np.random.default_rng(cfg.seed)
    frame = build_lp_frame(-40, 40, cfg.d)
    xi = rng.normal(size=(10_000, cfg.d))
    radii = 2.0 ** rng.uniform(-35, 35, size=10_000)
    xi *= (radii / np.linalg.norm(xi, axis=1))[:, None]
    dev = float(np.max(np.abs(frame.partition_sum(np.linalg.norm(xi, axis=1)) - 1.0)))
    r = np.abs(rng.normal(size=200)) * 4.0
    dil = 0.0
    for j in (-3, -1, 1, 3):
        a = frame.kernel(j, r)
        b = 2.0 ** (cfg.d * j) * frame.kernel(0, 2.0**j * r)
        dil = max(dil, float(np.max(np.abs(a - b)) / np.max(np.abs(b))))
    sym = 0.0
    s = 2.0 ** rng.uniform(-6, 6, size=1000)
    for j in (-3, -1, 1, 3):
        sym = max(sym, float(np.max(np.abs(frame.symbol(j, s) - frame.symbol(0, s / 2.0**j)))))
    res.records.append({"d": cfg.d, "partition_deviation": dev, "dilation_kernel": dil,
                        "dilation_symbol": sym, "samples": 10_000})
    res.checks["partition_of_unity"] = dev < 1e-10
    res.checks["dilation_identity"] = max(dil, sym) < 1e-12


def _data(cfg, res, dump):
    for p in _points(cfg):
        rec = _base(p)
        spec = _spec(cfg, cfg.tail_tol)
        val, ratio = initial_besov_check(p, spec)
        rec.update(norm_u0_B0=val, besov_ratio=ratio)
        if dump is not None:
            u0 = build_initial_data(p, spec)
            for i, patch in enumerate(u0.patches):
                sf = patch.field
                lo, hi = sf.index_bounds()
                counts = [1 << (2 * int(max(abs(a), abs(b))) + 1).bit_length()
                          for a, b in zip(lo, hi)]
                g = GridField(sf.box, sf.sample(counts), {"N": p.N, "delta": p.delta,
                                                           "patch": i})
                g.dump(Path(dump) / f"u0_N{p.N}_delta{p.delta}_patch{i}")
        res.records.append(rec)
    res.checks["records_consistent"] = _consistent(res.records)


def _norms(cfg, res, dump):
    for p in _points(cfg):
        rec = _base(p)
        u0 = build_initial_data(p, _spec(cfg, cfg.tail_tol))
        lo, hi = -p.n_scales - 2, p.N + 2
        frame = build_lp_frame(lo, hi, p.d)
        rec["lp_norm"] = lp_norm(u0, float(p.d))
        rec["norm_u0_B0"] = besov_norm(u0, 0.0, p.d, 1.0, None, frame).total
        rec["modulation_norm"] = modulation_norm(u0).total
        res.records.append(rec)
    res.checks["records_consistent"] = _consistent(res.records)


def _theta2(cfg, res, dump, cross_cache=None):
    for p in _points(cfg):
        rec = _base(p)
        cross = cross_term_report(p)
        rep = theta2_lower_report(p, _phys(cfg), _spec(cfg, cfg.tail_tol), _quad(cfg), cross)
        rec.update(theta2_main_F=rep.main_F, theta2_lowfreq=rep.lowfreq,
                   theta2_oscillation=rep.oscillation, theta2_full_band=rep.full_band,
                   ratio_F=rep.ratio_F, ratio_lowfreq=rep.ratio_lowfreq,
                   crossterm_pair=cross.sum_pair, crossterm_far=cross.sum_far,
                   crossterm_triple=cross.sum_triple, cross_total=rep.cross_total,
                   dominance=rep.dominance)
        res.records.append(rec)
    res.checks["records_consistent"] = _consistent(res.records)


def _picard_point(cfg, p, dump):
    u0 = build_initial_data(p, _spec(cfg, cfg.hierarchy_tail_tol))
    state = compute_hierarchy(u0, cfg.K, params=_phys(cfg), quad=_quad(cfg), family=p)
    fit = fit_order_bounds(state)
    tl = theta_lower_total(state, fit)
    support = max(state.support_defect(n, k) for n in ("U", "Theta", "P")
                  for k in range(1, cfg.K + 1))
    if dump is not None:
        state.dump_fields(Path(dump) / f"hierarchy_N{p.N}_delta{p.delta}")
    return state, fit, tl, support


def _picard(cfg, res, dump):
    geometric = True
    support_ok = True
    for p in _points(cfg):
        rec = _base(p)
        state, fit, tl, support = _picard_point(cfg, p, dump)
        rec.update(c1_fit=fit.c1, c2_fit=fit.c2, support_defect=support,
                   margins={str(k): v for k, v in fit.per_order.items()},
                   margin_ratios={str(k): v for k, v in fit.ratios.items()},
                   theta2_restricted=tl.theta2, tail_k_ge_3=sum(tl.higher.values()) + tl.tail,
                   theta_lower_net=tl.net, hierarchy=state.summary())
        geometric &= fit.geometric
        support_ok &= support < 1e-10
        res.records.append(rec)
    res.checks["support_claim"] = bool(support_ok)
    if cfg.K >= 4:
        res.checks["geometric_margins"] = bool(geometric)
    res.checks["records_consistent"] = _consistent(res.records)


def _sweep(cfg, res, dump):
    sweeps = {}
    for dl in sorted(cfg.delta):
        sweeps[dl] = cross_term_sweep(sorted(cfg.N), dl, cfg.d, cfg.eps0)
    for p in _points(cfg):
        rec = _base(p)
        cross = sweeps[p.delta].reports[sorted(cfg.N).index(p.N)]
        spec = _spec(cfg, cfg.tail_tol)
        rec["norm_u0_B0"] = initial_besov_check(p, spec)[0]
        rep = theta2_lower_report(p, _phys(cfg), spec, _quad(cfg), cross)
        state, fit, tl, support = _picard_point(cfg, p, dump)
        rec.update(theta2_main_F=rep.main_F, theta2_lowfreq=rep.lowfreq,
                   crossterm_pair=cross.sum_pair, crossterm_far=cross.sum_far,
                   crossterm_triple=cross.sum_triple, c1_fit=fit.c1, c2_fit=fit.c2,
                   tail_k_ge_3=sum(tl.higher.values()) + tl.tail, theta_lower_net=tl.net,
                   envelopes=dict(cross.predicted_envelopes),
                   margins={str(k): v for k, v in fit.per_order.items()},
                   support_defect=support)
        res.records.append(rec)
    res.summary["crossterm_slopes"] = {str(dl): s.slopes for dl, s in sweeps.items()}
    res.summary["envelope_constants"] = {str(dl): s.constants for dl, s in sweeps.items()}
    res.checks["csv_finite"] = all(math.isfinite(float(r.get(c, math.nan)))
                                   for r in res.records for c in CSV_COLUMNS[1:])
    res.checks["records_consistent"] = _consistent(res.records)


def _bounds(cfg, res, dump):
    value, kmax = combinatorial_maximum()
    res.summary["combinatorial_maximum"] = {"value": value, "argmax_k": kmax, "k_max": 10_000}
    res.checks["combinatorial_finite"] = math.isfinite(value)
    slopes = {}
    for dl in sorted(cfg.delta):
        sw = cross_term_sweep(sorted(cfg.N), dl, cfg.d, cfg.eps0)
        slopes[str(dl)] = sw.slopes
        for n, r in zip(sorted(cfg.N), sw.reports):
            rec = _base(r.params)
            rec.update(crossterm_pair=r.sum_pair, crossterm_far=r.sum_far,
                       crossterm_triple=r.sum_triple, envelopes=dict(r.predicted_envelopes))
            res.records.append(rec)
        d = cfg.d
        res.checks[f"pair_slope_delta{dl}"] = sw.slopes["pair"] <= -d * (1 - dl) + 0.5
        res.checks[f"triple_slope_delta{dl}"] = sw.slopes["triple"] <= -d * (1 - dl) + 0.5
        res.checks[f"far_slope_delta{dl}"] = sw.slopes["far"] <= -d * (1 - 2 * dl) + 0.5
    res.summary["crossterm_slopes"] = slopes
    res.checks["records_consistent"] = _consistent(res.records)


def _consistent(records) -> bool:
    """Derived fields recompute from the inputs: ``R = 1/log N``, ``T_N = eps0 4^{-N}``."""
    for r in records:
        if "N" not in r:
            continue
        if not math.isclose(r["R"], 1.0 / math.log(r["N"]), rel_tol=1e-15):
            return False
        if not math.isclose(r["T_N"], r["eps0"] * 2.0 ** (-2 * r["N"]), rel_tol=1e-15):
            return False
    return True


_RUNNERS = {"frame-check": _frame_check, "data": _data, "norms": _norms, "theta2": _theta2,
            "picard": _picard, "sweep": _sweep, "bounds": _bounds}


def run(config: ExperimentConfig, uncertified: bool = False, threads: int = 1,
        dump_fields: str | Path | None = None) -> ExperimentResult:
    """Execute ``config.experiment`` over its parameter grid.

    Failures are caught and recorded with a machine-readable code
    (``invalid_config``, ``memory_cap``, ``quadrature_nonconvergence`` or
    ``internal``); the result is then not ``ok``.
    """
    res = ExperimentResult(config)
    t0 = time.perf_counter()
    try:
        config.validate(uncertified)
        set_fft_workers(threads)
        if dump_fields is not None:
            Path(dump_fields).mkdir(parents=True, exist_ok=True)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            _RUNNERS[config.experiment](config, res, dump_fields)
    except Exception as exc:  # recorded, reported through the exit status
        code = next((c for t, c in ERROR_CODES.items() if isinstance(exc, t)), "internal")
        entry = {"code": code, "message": str(exc)}
        if isinstance(exc, ConfigError):
            entry["field"] = exc.field
        res.errors.append(entry)
    finally:
        set_fft_workers(1)
    res.timings["total_seconds"] = time.perf_counter() - t0
    return res


# -- output ------------------------------------------------------------------------------------
def write_outputs(result: ExperimentResult, out: str | Path) -> list:
    """Write ``results.csv`` (when the records carry ``N``) and ``result.json``."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    files = []
    if any("N" in r for r in result.records):
        p = out / "results.csv"
        p.write_text(result.csv_text())
        files.append(p)
    p = out / "result.json"
    p.write_text(result.to_json())
    files.append(p)
    return files


def _write_dat(path: Path, header: list, rows: list, comments=()) -> Path:
    lines = [f"# {c}" for c in comments] + ["# " + " ".join(header)]
    lines += [" ".join(_fmt(v) for v in row) for row in rows]
    path.write_text("\n".join(lines) + "\n")
    return path


def emit_plots(result: ExperimentResult, directory: str | Path) -> list:
    """Plot-ready data files and an SVG chart for each.

    Files: ``norm_u0.dat`` (N, norm), ``theta_lower.dat`` (N, net bound),
    ``crossterms.dat`` (N, log2 of the three sums and their envelopes) and
    ``margins.dat`` (k, margin at the largest N); each only when the records
    carry the quantities.  An empty result writes nothing and warns.
    """
    directory = Path(directory)
    recs = [r for r in result.records if "N" in r]
    if not recs:
        warnings.warn("empty result: no plot files written", stacklevel=2)
        return []
    directory.mkdir(parents=True, exist_ok=True)
    files = []
    Ns = [r["N"] for r in recs]
    tag = ", ".join(f"delta={r['delta']}" for r in recs[:1])

    def both(stem, header, rows, title, ylabel, series, comments=(), annotation=""):
        files.append(_write_dat(directory / f"{stem}.dat", header, rows, comments))
        files.append(line_chart(directory / f"{stem}.svg", [row[0] for row in rows], series,
                                title, header[0], ylabel, annotation))

    if all("norm_u0_B0" in r for r in recs):
        rows = [(r["N"], r["norm_u0_B0"]) for r in recs]
        both("norm_u0", ["N", "norm_u0_B0"], rows, f"critical Besov norm of the data ({tag})",
             "norm", {"norm_u0_B0": [v for _, v in rows]})
    if all("theta_lower_net" in r for r in recs):
        rows = [(r["N"], r["theta_lower_net"]) for r in recs]
        both("theta_lower", ["N", "theta_lower_net"], rows,
             f"net temperature lower bound ({tag})", "bound",
             {"theta_lower_net": [v for _, v in rows]})
    if all("crossterm_pair" in r for r in recs):
        kinds = ("pair", "far", "triple")

        def lg(v):
            return math.log2(v) if v > 0 else -math.inf

        rows = []
        for r in recs:
            env = r.get("envelopes") or envelope_shapes(r["N"], r["delta"], r["d"])
            rows.append((r["N"],) + tuple(lg(r["crossterm_" + k]) for k in kinds)
                        + tuple(lg(env[k]) for k in kinds))
        slopes = result.summary.get("crossterm_slopes", {}).get(str(recs[0]["delta"]), {})
        comments = [f"slope_{k} = {_fmt(slopes[k])}" for k in kinds if k in slopes]
        series = {f"log2 {k}": [row[1 + i] for row in rows] for i, k in enumerate(kinds)}
        series.update({f"envelope {k}": [row[4 + i] for row in rows]
                       for i, k in enumerate(kinds)})
        both("crossterms", ["N"] + [f"log2_{k}" for k in kinds]
             + [f"log2_envelope_{k}" for k in kinds], rows, f"cross-term sums ({tag})",
             "log2 value", series, comments, "; ".join(comments))
    if all("margins" in r for r in recs):
        last = max(recs, key=lambda r: r["N"])
        rows = [(int(k), v) for k, v in sorted(last["margins"].items(), key=lambda kv: int(kv[0]))]
        both("margins", ["k", "margin"], rows, f"order-k bound margins (N={last['N']})",
             "margin", {"margin": [v for _, v in rows]})
    return files
