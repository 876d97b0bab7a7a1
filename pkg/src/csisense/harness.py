"""Experiment driver: seeded Monte-Carlo sweeps over rounds, algorithms and
quantizers, with CSV/JSON emission and trend comparison reports."""

from __future__ import annotations

import csv
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, asdict
import numpy as np

from . import basis as basis_mod
from . import channel as channel_mod
from . import codebook as codebook_mod
from . import feedback as feedback_mod
from . import precoder as precoder_mod
from . import solvers as solvers_mod
from .metrics import evaluate

ALGORITHMS = ("type1_baseline", "mm_unconstrained", "pd_evd", "pd_evd_mecs",
              "mecs_sgda", "cbyc_mecs_sgda")

CSV_COLUMNS = ["algorithm", "T", "trial", "draw", "seed", "correlation",
               "nmse_r", "violations_count", "violation_total", "mecs_size",
               "wall_time_s"]


@dataclass
class ExperimentConfig:
    """Everything one sweep needs; mirrors the flat key=value config file."""

    # geometry
    geom_n1: int = 8
    geom_n2: int = 4
    geom_dual_pol: bool = False
    geom_spacing_h: float = 0.5
    geom_spacing_v: float = 0.5
    # scenario source
    dataset: str = ""
    area_size: float = 30.0
    n_ru: int = 10
    n_paths: int = 12
    n_dominant: int = 4
    angle_jitter_per_m: float = 0.005
    weak_power: float = 0.02
    n_carriers: int = 1
    bandwidth: float = 1e6
    max_delay_taps: float = 3.0
    normalize: bool = True
    # codebooks
    cb_n1: int = 8
    cb_n2: int = 2
    cb_o1: int = 4
    cb_o2: int = 4
    baseline_cb_n1: int = 0  # 0 -> same as cb_*
    baseline_cb_n2: int = 0
    baseline_cb_o1: int = 0
    baseline_cb_o2: int = 0
    # dimension reduction
    l: int = 5
    l_tilde: int = 5
    n_delay: int = 5
    basis_source: str = "ru_csi"
    type2_beams: int = 4
    # sweep
    t_list: tuple[int, ...] = (1, 2, 3, 4)
    n_draws: int = 10
    algorithms: tuple[str, ...] = ("mm_unconstrained", "mecs_sgda")
    quantizer: str = "dB"  # none | linear | dB
    quant_bits: int = 4
    quant_lo: float = 3.35
    quant_hi: float = 28.89
    est_snr_db: float | None = None
    n_trials: int = 50
    seed: int = 0
    sigma_w: float = 1.0
    group_size: int = 1
    mode: str = "flat"  # flat | multicarrier

    def __post_init__(self):
        if not self.t_list:
            raise ValueError("t_list must be nonempty")
        if not self.algorithms:
            raise ValueError("algorithms must be nonempty")
        bad = set(self.algorithms) - set(ALGORITHMS)
        if bad:
            raise ValueError(f"unknown algorithms: {sorted(bad)}")
        if self.n_trials < 1:
            raise ValueError("n_trials must be >= 1")
        if self.mode not in ("flat", "multicarrier"):
            raise ValueError("mode must be 'flat' or 'multicarrier'")
        if self.mode == "multicarrier" and self.n_carriers < 2:
            raise ValueError("multicarrier mode needs n_carriers >= 2")
        if self.basis_source not in ("ru_csi", "ru_type2", "tu_paths"):
            raise ValueError("basis_source must be ru_csi, ru_type2 or tu_paths")
        if not self.dataset and self.n_ru == 0 and self.basis_source != "tu_paths":
            raise ValueError("RU-based basis construction needs n_ru >= 1")

    # -- derived objects --

    def geometry(self) -> channel_mod.ArrayGeometry:
        return channel_mod.ArrayGeometry(
            n_horizontal=self.geom_n1, n_vertical=self.geom_n2,
            dual_polarized=self.geom_dual_pol,
            spacing_h=self.geom_spacing_h, spacing_v=self.geom_spacing_v)

    def scenario_config(self) -> channel_mod.ScenarioConfig:
        return channel_mod.ScenarioConfig(
            geometry=self.geometry(), area_size=self.area_size, n_ru=self.n_ru,
            n_paths=self.n_paths, n_dominant=self.n_dominant,
            angle_jitter_per_m=self.angle_jitter_per_m, weak_power=self.weak_power,
            n_carriers=self.n_carriers, bandwidth=self.bandwidth,
            max_delay_taps=self.max_delay_taps, normalize=self.normalize)

    def build_codebook(self) -> codebook_mod.Type1Codebook:
        return codebook_mod.build_type1_codebook(self.cb_n1, self.cb_n2,
                                                 self.cb_o1, self.cb_o2)

    def build_baseline_codebook(self) -> codebook_mod.Type1Codebook:
        n1 = self.baseline_cb_n1 or self.cb_n1
        n2 = self.baseline_cb_n2 or self.cb_n2
        o1 = self.baseline_cb_o1 or self.cb_o1
        o2 = self.baseline_cb_o2 or self.cb_o2
        cb = codebook_mod.build_type1_codebook(n1, n2, o1, o2)
        m = self.geometry().n_ports
        if cb.n_ports != m:
            raise ValueError(
                f"baseline codebook has {cb.n_ports} ports but the array has {m}; "
                "set baseline_cb_* so that 2*N1*N2 matches the antenna count")
        return cb

    def build_quantizer(self) -> codebook_mod.QuantizerSpec | None:
        if self.quantizer == "none":
            return None
        if self.quantizer == "linear":
            return codebook_mod.QuantizerSpec("linear", self.quant_bits,
                                              self.quant_lo, self.quant_hi)
        if self.quantizer == "dB":
            return codebook_mod.QuantizerSpec.db_from_linear_range(
                self.quant_bits, self.quant_lo, self.quant_hi)
        raise ValueError(f"unknown quantizer scheme {self.quantizer!r}")


_BOOL_KEYS = {"geom_dual_pol", "normalize"}
_INT_KEYS = {"geom_n1", "geom_n2", "n_ru", "n_paths", "n_dominant", "n_carriers",
             "cb_n1", "cb_n2", "cb_o1", "cb_o2", "baseline_cb_n1", "baseline_cb_n2",
             "baseline_cb_o1", "baseline_cb_o2", "l", "l_tilde", "n_delay",
             "type2_beams", "n_draws", "quant_bits", "n_trials", "seed",
             "group_size"}
_FLOAT_KEYS = {"geom_spacing_h", "geom_spacing_v", "area_size",
               "angle_jitter_per_m", "weak_power", "bandwidth", "max_delay_taps",
               "quant_lo", "quant_hi", "sigma_w"}


def parse_config(path) -> ExperimentConfig:
    """Parse the flat key=value config file (``#`` starts a comment)."""
    kwargs = {}
    with open(path) as f:
        for lineno, raw in enumerate(f, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value, got {raw!r}")
            key, val = (s.strip() for s in line.split("=", 1))
            if key not in ExperimentConfig.__dataclass_fields__:
                raise ValueError(f"{path}:{lineno}: unknown config key {key!r}")
            kwargs[key] = _parse_value(key, val)
    return ExperimentConfig(**kwargs)


def _parse_value(key: str, val: str):
    if key == "t_list":
        return tuple(int(v) for v in val.split(",") if v.strip())
    if key == "algorithms":
        return tuple(v.strip() for v in val.split(",") if v.strip())
    if key == "est_snr_db":
        return None if val.lower() in ("", "none", "exact") else float(val)
    if key in _BOOL_KEYS:
        return val.lower() in ("1", "true", "yes", "on")
    if key in _INT_KEYS:
        return int(val)
    if key in _FLOAT_KEYS:
        return float(val)
    return val


@dataclass
class ResultRow:
    algorithm: str
    t: int
    trial: int
    draw: int
    seed: int
    correlation: float
    nmse_r: float
    violations_count: int
    violation_total: float
    mecs_size: int | None
    wall_time_s: float

    def csv_row(self) -> list:
        return [self.algorithm, self.t, self.trial, self.draw, self.seed,
                float(self.correlation), float(self.nmse_r),
                int(self.violations_count), float(self.violation_total),
                "" if self.mecs_size is None else int(self.mecs_size),
                float(self.wall_time_s)]


def _trial_seed(seed: int, trial: int) -> int:
    return int(np.random.SeedSequence([seed, trial]).generate_state(1)[0])


def _build_flat_basis(cfg: ExperimentConfig, scenario) -> basis_mod.BasisMatrix:
    geo = cfg.geometry()
    if cfg.basis_source == "ru_csi":
        return basis_mod.build_basis(scenario.ru_matrix(), cfg.l, source="ru_csi")
    if cfg.basis_source == "ru_type2":
        cols = [codebook_mod.build_type2_surrogate(ru.channel.vector,
                                                   cfg.type2_beams, geo)
                for ru in scenario.rus]
        return basis_mod.build_basis(np.stack(cols, axis=1), cfg.l, source="ru_type2")
    ps = scenario.tu.pathset
    if ps is None:
        raise ValueError("tu_paths basis needs per-path data (synthetic scenarios only)")
    gains = np.sqrt(ps.powers) * np.exp(1j * ps.phases)
    cols = np.stack([gains[i] * channel_mod.array_response(geo, ps.azimuths[i],
                                                           ps.elevations[i])
                     for i in range(ps.n_paths)], axis=1)
    return basis_mod.build_basis(cols, min(cfg.l, ps.n_paths), source="tu_paths")


def _solve(algorithm: str, instance, opts) -> solvers_mod.SolverReport:
    if algorithm == "mm_unconstrained":
        return solvers_mod.mm_unconstrained_solve(instance, opts)
    if algorithm == "pd_evd":
        return solvers_mod.pd_evd_solve(instance, opts)
    if algorithm == "pd_evd_mecs":
        mecs = solvers_mod.mecs_construct(instance, opts)
        report = solvers_mod.pd_evd_solve(instance, opts, mask=mecs.mask)
        report.mecs_size = mecs.size
        return report
    if algorithm == "mecs_sgda":
        return solvers_mod.mecs_sgda_solve(instance, opts)
    raise ValueError(f"unknown solver algorithm {algorithm!r}")


def _type1_baseline_row(cfg: ExperimentConfig, scenario, trial: int,
                        seed: int, rng) -> ResultRow:
    """CSI estimate = the selected codeword of one identity-precoder round."""
    cb = cfg.build_baseline_codebook()
    h = scenario.tu.channel.matrix
    corrs, nmses = [], []
    for k in range(h.shape[1]):
        h_eff = h[:, k]
        if cfg.est_snr_db is not None:
            h_eff = h_eff + feedback_mod.estimation_noise(h_eff, cfg.est_snr_db, rng)
        pmi, _ = codebook_mod.select_pmi(h_eff, cb)
        res = evaluate(h[:, k], cb.codewords[:, pmi])
        corrs.append(res.correlation)
        nmses.append(res.nmse_r)
    return ResultRow(algorithm="type1_baseline", t=0, trial=trial, draw=0,
                     seed=seed, correlation=float(np.mean(corrs)),
                     nmse_r=float(np.mean(nmses)), violations_count=0,
                     violation_total=0.0, mecs_size=None, wall_time_s=0.0)


def run_trial(cfg: ExperimentConfig, trial: int) -> list[ResultRow]:
    """All rows of one Monte-Carlo trial (deterministic given cfg and trial)."""
    seed = _trial_seed(cfg.seed, trial)
    if cfg.dataset:
        scenario = channel_mod.load_csi_dataset(cfg.dataset, cfg.geometry())
    else:
        scenario = channel_mod.gen_scenario(cfg.scenario_config(), seed)
    codebook = cfg.build_codebook()
    quantizer = cfg.build_quantizer()
    n_ports = codebook.n_ports
    m = cfg.geometry().n_ports
    if n_ports > m:
        raise ValueError(f"codebook ports {n_ports} exceed antenna count {m}")
    t_max = max(cfg.t_list)
    rows = [_type1_baseline_row(cfg, scenario, trial, seed,
                                np.random.default_rng([seed, 10_000]))]
    solver_algos = [a for a in cfg.algorithms if a != "type1_baseline"]

    if cfg.mode == "flat":
        bm = _build_flat_basis(cfg, scenario)
        h = scenario.tu.channel.vector
        for draw in range(cfg.n_draws):
            rng = np.random.default_rng([seed, 1, draw])
            precs = [precoder_mod.gen_hybrid_precoder(bm, n_ports, cfg.sigma_w, rng)
                     for _ in range(t_max)]
            noise_rng = np.random.default_rng([seed, 2, draw])
            records = [feedback_mod.simulate_round(
                h, precs[t], codebook, est_snr_db=cfg.est_snr_db,
                quantizer=quantizer, rng=noise_rng, t=t) for t in range(t_max)]
            for t_rounds in cfg.t_list:
                inst = feedback_mod.assemble_cpr_instance(
                    records[:t_rounds], bm, precs[:t_rounds], codebook)
                for algo in solver_algos:
                    opts = solvers_mod.SolverOptions(seed=seed)
                    report = _solve(algo, inst, opts)
                    res = evaluate(h, report.h_star)
                    rows.append(ResultRow(
                        algorithm=algo, t=t_rounds, trial=trial, draw=draw,
                        seed=seed, correlation=res.correlation, nmse_r=res.nmse_r,
                        violations_count=report.violations_count,
                        violation_total=report.violations_total,
                        mecs_size=report.mecs_size,
                        wall_time_s=report.wall_time_s))
    else:
        rows.extend(_run_multicarrier_trial(cfg, scenario, codebook, quantizer,
                                            trial, seed, solver_algos))
    return rows


def _run_multicarrier_trial(cfg, scenario, codebook, quantizer, trial, seed,
                            solver_algos) -> list[ResultRow]:
    db = basis_mod.build_delay_basis([ru.channel.matrix for ru in scenario.rus],
                                     cfg.n_delay, cfg.l_tilde)
    h = scenario.tu.channel.matrix
    n_ports = codebook.n_ports
    t_max = max(cfg.t_list)
    rows = []
    for draw in range(cfg.n_draws):
        rng = np.random.default_rng([seed, 1, draw])
        precs = [precoder_mod.gen_subcarrier_precoders(db, n_ports, cfg.sigma_w, rng)
                 for _ in range(t_max)]
        noise_rng = np.random.default_rng([seed, 2, draw])
        records = []
        for t in range(t_max):
            records.extend(feedback_mod.simulate_mc_round(
                h, precs[t], codebook, est_snr_db=cfg.est_snr_db,
                quantizer=quantizer, rng=noise_rng, t=t,
                group_size=cfg.group_size))
        for t_rounds in cfg.t_list:
            sub = [r for r in records if r.t < t_rounds]
            for algo in solver_algos:
                opts = solvers_mod.SolverOptions(seed=seed)
                if algo == "cbyc_mecs_sgda":
                    report, res = _solve_cbyc(cfg, db, sub, precs, codebook, h, opts)
                else:
                    inst = feedback_mod.assemble_multicarrier_instance(
                        sub, db, precs, codebook, group_size=cfg.group_size)
                    report = _solve(algo, inst, opts)
                    res = evaluate(h, report.h_star)
                rows.append(ResultRow(
                    algorithm=algo, t=t_rounds, trial=trial, draw=draw,
                    seed=seed, correlation=res.correlation, nmse_r=res.nmse_r,
                    violations_count=report.violations_count,
                    violation_total=report.violations_total,
                    mecs_size=report.mecs_size, wall_time_s=report.wall_time_s))
    return rows


def _solve_cbyc(cfg, db, records, precs, codebook, h, opts):
    """Carrier-by-carrier reference: independent flat solves per subcarrier."""
    if cfg.group_size != 1:
        raise ValueError("carrier-by-carrier sensing needs per-carrier feedback")
    n_c = db.n_carriers
    h_star = np.zeros_like(h)
    wall = 0.0
    viol_count, viol_total, mecs_total = 0, 0.0, 0
    for k in range(n_c):
        recs_k = sorted([r for r in records if r.carrier == k], key=lambda r: r.t)
        bm = basis_mod.BasisMatrix(d=db.per_carrier[k], source="ru_csi")
        inst = feedback_mod.assemble_cpr_instance(
            recs_k, bm, [precs[r.t][k] for r in recs_k], codebook)
        rep = solvers_mod.mecs_sgda_solve(inst, opts)
        h_star[:, k] = rep.h_star
        wall += rep.wall_time_s
        viol_count += rep.violations_count
        viol_total += rep.violations_total
        mecs_total += rep.mecs_size or 0
    res = evaluate(h, h_star)
    report = solvers_mod.SolverReport(
        g_star=np.zeros(0), h_star=h_star, objective=float("nan"),
        inner_iterations=0, outer_iterations=0, violations_count=viol_count,
        violations_total=viol_total, wall_time_s=wall, mecs_size=mecs_total)
    return report, res


def run_experiment(cfg: ExperimentConfig, out_dir, threads: int = 1,
                   render_plots: bool = True) -> dict:
    """Run the sweep; stream rows to CSV and write a JSON summary.

    Returns the summary dict.  Figures are rendered next to the CSV unless
    ``render_plots`` is false.  Results are independent of ``threads``.
    """
    os.makedirs(out_dir, exist_ok=True)
    trials = list(range(cfg.n_trials))
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as ex:
            per_trial = list(ex.map(run_trial, [cfg] * len(trials), trials))
    else:
        per_trial = [run_trial(cfg, t) for t in trials]

    csv_path = os.path.join(out_dir, "results.csv")
    with open(csv_path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(CSV_COLUMNS)
        for rows in per_trial:
            for row in rows:
                w.writerow(row.csv_row())

    summary = summarize_rows([r for rows in per_trial for r in rows])
    summary["config"] = asdict(cfg)
    if cfg.mode == "multicarrier":
        n_c = cfg.n_carriers
        pmi_group = 12 if n_c % 12 == 0 else n_c
        if cfg.group_size > 1 and n_c % cfg.group_size == 0:
            cqi_group = cfg.group_size
        else:
            cqi_group = 4 if n_c % 4 == 0 else n_c
        summary["overhead"] = overhead_report(
            n_carriers=n_c, pmi_group=pmi_group,
            pmi_bits=int(np.ceil(np.log2(cfg.build_codebook().n_codewords))),
            cqi_group=cqi_group, cqi_bits=cfg.quant_bits,
            t_rounds=max(cfg.t_list),
            type2_subband_size=4 if n_c % 4 == 0 else n_c)
    summary_path = os.path.join(out_dir, "summary.json")
    with open(summary_path, "w") as f:
        json.dump(summary, f, indent=2, sort_keys=True)

    if render_plots:
        from .plotting import render_result_figures
        summary["figures"] = render_result_figures(csv_path, out_dir)
    return summary


def summarize_rows(rows: list[ResultRow]) -> dict:
    by_alg: dict = {}
    for row in rows:
        slot = by_alg.setdefault(row.algorithm, {}).setdefault(str(row.t), [])
        slot.append(row)
    out = {"n_rows": len(rows), "by_algorithm": {}}
    for alg, by_t in by_alg.items():
        out["by_algorithm"][alg] = {}
        for t, rs in by_t.items():
            out["by_algorithm"][alg][t] = {
                "n": len(rs),
                "mean_correlation": float(np.mean([r.correlation for r in rs])),
                "mean_nmse_r": float(np.mean([r.nmse_r for r in rs])),
                "mean_violation_total": float(np.mean([r.violation_total for r in rs])),
                "mean_wall_time_s": float(np.mean([r.wall_time_s for r in rs])),
            }
    return out


# --- comparison report ---------------------------------------------------------

def load_rows(csv_path) -> list[dict]:
    with open(csv_path, newline="") as f:
        reader = csv.DictReader(f)
        missing = {"algorithm", "T", "correlation"} - set(reader.fieldnames or [])
        if missing:
            raise ValueError(f"{csv_path}: missing columns {sorted(missing)}")
        return list(reader)


def _mean_corr_by_alg_t(rows: list[dict]) -> dict:
    acc: dict = {}
    for r in rows:
        acc.setdefault((r["algorithm"], int(r["T"])), []).append(float(r["correlation"]))
    return {k: float(np.mean(v)) for k, v in acc.items()}


def compare_report(csv_paths: list, trends: list[str] | None = None,
                   tol: float = 0.01) -> tuple[str, bool]:
    """Markdown summary of per-algorithm means plus configured trend checks.

    Trends: ``monotonic:<alg>`` (mean correlation non-decreasing in T, dips
    up to ``tol`` allowed) and ``order:<algA>>=<algB>`` (A at least B - tol
    at every shared T).  Returns (markdown, all_trends_pass).
    """
    trends = trends or []
    tables = [(p, _mean_corr_by_alg_t(load_rows(p))) for p in csv_paths]
    lines = ["# Sensing result comparison", ""]
    for path, table in tables:
        lines.append(f"## {path}")
        lines.append("")
        lines.append("| algorithm | T | mean correlation |")
        lines.append("|---|---|---|")
        for (alg, t) in sorted(table):
            lines.append(f"| {alg} | {t} | {table[(alg, t)]:.6f} |")
        lines.append("")
    if len(tables) == 2:
        (pa, ta), (pb, tb) = tables
        lines.append(f"## Deltas: {pa} minus {pb}")
        lines.append("")
        lines.append("| algorithm | T | delta correlation |")
        lines.append("|---|---|---|")
        for key in sorted(set(ta) & set(tb)):
            lines.append(f"| {key[0]} | {key[1]} | {ta[key] - tb[key]:+.6f} |")
        lines.append("")

    all_ok = True
    if trends:
        lines.append("## Trend checks")
        lines.append("")
    merged = _mean_corr_by_alg_t([r for p in csv_paths for r in load_rows(p)])
    for trend in trends:
        ok, detail = _check_trend(trend, merged, tol)
        all_ok &= ok
        lines.append(f"- {'PASS' if ok else 'FAIL'} `{trend}`: {detail}")
    return "\n".join(lines) + "\n", all_ok


def _check_trend(trend: str, table: dict, tol: float) -> tuple[bool, str]:
    if trend.startswith("monotonic:"):
        alg = trend.split(":", 1)[1]
        ts = sorted(t for (a, t) in table if a == alg)
        if len(ts) < 2:
            return False, f"no sweep over T for algorithm {alg!r}"
        vals = [table[(alg, t)] for t in ts]
        dips = [(ts[i], vals[i + 1] - vals[i]) for i in range(len(ts) - 1)
                if vals[i + 1] < vals[i] - tol]
        if dips:
            return False, f"correlation drops after T={dips[0][0]} by {-dips[0][1]:.4f}"
        return True, f"mean correlation non-decreasing over T={ts}"
    if trend.startswith("order:") and ">=" in trend:
        a, b = trend.split(":", 1)[1].split(">=")
        shared = sorted(t for (alg, t) in table if alg == a and (b, t) in table)
        if not shared:
            return False, f"no shared T values for {a!r} and {b!r}"
        bad = [t for t in shared if table[(a, t)] < table[(b, t)] - tol]
        if bad:
            t = bad[0]
            return False, (f"{a} < {b} at T={t} "
                           f"({table[(a, t)]:.4f} vs {table[(b, t)]:.4f})")
        return True, f"{a} >= {b} at T={shared}"
    return False, f"unrecognized trend spec {trend!r}"


# --- feedback overhead arithmetic ----------------------------------------------

def overhead_report(n_carriers: int, pmi_group: int, pmi_bits: int,
                    cqi_group: int, cqi_bits: int, t_rounds: int,
                    type2_header_bits: int = 20, type2_subband_bits: int = 56,
                    type2_subband_size: int = 4) -> dict:
    """Feedback bit budget versus the high-resolution codebook report."""
    if n_carriers % pmi_group or n_carriers % cqi_group:
        raise ValueError("pmi_group and cqi_group must divide n_carriers")
    per_round = (n_carriers // pmi_group) * pmi_bits \
        + (n_carriers // cqi_group) * cqi_bits
    total = per_round * t_rounds
    type2 = type2_header_bits + (n_carriers // type2_subband_size) * type2_subband_bits
    return {
        "bits_per_round": per_round,
        "total_bits": total,
        "type2_bits": type2,
        "saving_fraction": 1.0 - total / type2,
    }
