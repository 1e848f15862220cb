"""Experiment orchestration: seeded replications of the tracking loop and result emission."""

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import __version__
from . import kalman
from .bounds import BoundParams, make_bound
from .config import ExperimentConfig, load_config
from .errors import InfeasibleSelectionError, InvalidArgumentError
from .ihp import make_grid, select_k_ihp
from .param_est import ParamEstimatorState, estimate_step, sample_probe_points, update_running
from .problem import (advance, make_problem, mc_excess_risk_estimate, regression_constants,
                      true_excess_risk)
from .rho_est import MeanEuclid, MeanL2, RhoEstimator, SlackSchedule, WindowEuclid, WindowL2
from .selector import (TrackerLedger, k_next_no_update, k_next_update_past, k_star,
                       recompute_past_bounds)
from .sgd import InverseStepWeighted, InverseTime, run_epoch

__all__ = [
    "StepRecord", "ResultTable", "Tracker", "run_mean_experiment", "run_tradeoff",
    "run_ihp_experiment", "run_kalman_comparison", "run_experiment", "emit_results",
    "load_config", "format_value",
]

BASE_COLUMNS = ("n", "rep", "K_n", "rho_hat", "rho_upper", "excess_est", "excess_true")


@dataclass
class StepRecord:
    n: int
    rep: int
    K_n: int
    rho_hat: float
    rho_upper: float
    excess_est: float
    excess_true: float
    eps_hat: float = math.nan
    ihp_violation: int | None = None


@dataclass
class ResultTable:
    columns: tuple
    rows: list
    summary: dict = field(default_factory=dict)
    records: list = field(default_factory=list)


def _combiner(cfg: ExperimentConfig):
    return {
        "mean_euclid": lambda: MeanEuclid(),
        "mean_l2": lambda: MeanL2(),
        "window_euclid": lambda: WindowEuclid(cfg.window),
        "window_l2": lambda: WindowL2(cfg.window),
    }[cfg.combiner]()


def _streams(seed, reps):
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(reps)]


class Tracker:
    """One replication of the tracking loop.

    Owns the drifting problem, the current iterate, the drift estimator, the
    running parameter estimates and the selection history. ``step`` advances
    one time step and returns the record plus the epoch's sample batch.
    """

    def __init__(self, cfg: ExperimentConfig, rng, rep=0):
        self.cfg = cfg
        self.rng = rng
        self.rep = rep
        self.problem = make_problem(cfg.d, cfg.sigma_w_sq, cfg.sigma_e_sq, cfg.rho, cfg.drift, cfg.radius)
        self.diam = self.problem.domain.diam
        self.exact = regression_constants(cfg.d, cfg.sigma_w_sq, cfg.sigma_e_sq, self.diam)
        self.x = np.zeros(cfg.d)
        self.n = 0
        self.params_state = ParamEstimatorState(cfg.param_c_t, cfg.m_floor)
        self.ledger = TrackerLedger()
        sigma = cfg.sigma_e_sq * cfg.sigma_w_sq  # E||gradient at the minimizer||^2
        slack = SlackSchedule(cfg.rho_c_t, self.exact.m, self.exact.M, self.diam, sigma=sigma,
                              dn_weight=0.0 if cfg.dn_mode == "off" else 1.0)
        if cfg.dn_mode == "noise":
            slack.C = lambda K: 0.0
        self.estimator = RhoEstimator(_combiner(cfg), self.exact.m, slack)
        self.last_upper = math.nan
        self._bound_cache = (None, None)
        self.grid_template = None
        if cfg.experiment == "ihp":
            self.grid_template = make_grid(1.0, self.diam, cfg.ihp_t)

    # parameters and bound -------------------------------------------------
    def params(self) -> BoundParams:
        if self.cfg.params == "known" or self.params_state.n == 0:
            return self.exact
        s = self.params_state
        m = s.m_lower
        return BoundParams(m=m, A=s.A_upper, B=s.B_upper, M=max(s.M_upper, m), diam=self.diam)

    def bound(self):
        p = self.params()
        key, b = self._bound_cache
        if key != p:
            b = make_bound(self.cfg.bound, p)
            self._bound_cache = (p, b)
        return b

    def _estimate_params(self, batch):
        if self.cfg.params != "estimated" or len(batch) < 2:
            return
        probes = sample_probe_points(self.x, self.problem.domain, self.rng, self.cfg.n_probe,
                                     self.cfg.probe_radius)
        M_prev = self.params_state.M_upper if self.params_state.n else None
        update_running(self.params_state, estimate_step(probes, batch, M_prev))

    # selection ---------------------------------------------------------------
    def select_k(self):
        cfg, n = self.cfg, self.n
        if n <= 2:
            return cfg.k_initial
        bound, r = self.bound(), self.last_upper
        if cfg.experiment == "ihp":
            hint = self.ledger.K[-1] if self.ledger.K else None
            return select_k_ihp(cfg.ihp_t, cfg.ihp_r, r, bound, self.grid_template, cfg.k_max, cfg.ihp_iters,
                                k_hint=hint)
        if cfg.selector == "rho_known":
            return k_star(cfg.epsilon, cfg.rho, bound, cfg.k_max)
        if cfg.selector == "update_past":
            return k_next_update_past(self.ledger, cfg.epsilon, r, bound, cfg.k_max)
        return k_next_no_update(cfg.epsilon, r, bound, cfg.k_max)

    # one time step -----------------------------------------------------------
    def step(self):
        cfg = self.cfg
        self.n += 1
        if self.n > 1:
            self.problem = advance(self.problem, self.rng)
        try:
            K = int(self.select_k())
        except InfeasibleSelectionError as exc:
            exc.step = self.n
            exc.args = (f"step {self.n}, rep {self.rep}: {exc.args[0]}",)
            raise
        self.ledger.record(K, self.last_upper, cfg.epsilon)
        batch = self.problem.draw(K, self.rng)
        self._estimate_params(batch)
        p = self.params()
        sched = InverseTime(p.m)
        ep = run_epoch(self.x, K, sched, InverseStepWeighted(), self.problem, self.rng, batch=batch)
        self.x = ep.x_out

        est = self.estimator
        est.m = p.m
        est.slack.m, est.slack.M = p.m, max(p.M, p.m)
        est.slack.bound = self.bound() if cfg.dn_mode == "full" else None
        est.observe(ep.x_out, ep.grad_mean, K)
        if self.n >= 2:
            rho_hat, upper = est.rho_hat(), est.upper()
        else:
            rho_hat, upper = math.nan, math.nan
        self.last_upper = upper

        eps_hat = math.nan
        if cfg.selector == "update_past" and cfg.experiment != "ihp" and self.n >= 2:
            eps_hat = recompute_past_bounds(self.ledger, upper, self.bound())[-1]

        excess_true = true_excess_risk(self.problem, self.x)
        excess_est = mc_excess_risk_estimate(self.problem, self.x, cfg.mc_samples, self.rng)
        rec = StepRecord(self.n, self.rep, K, rho_hat, upper, excess_est, excess_true, eps_hat)
        if cfg.experiment == "ihp":
            rec.ihp_violation = int(excess_true > cfg.ihp_t)
        return rec, batch


def _columns(cfg):
    cols = list(BASE_COLUMNS)
    if cfg.selector == "update_past" and cfg.experiment != "ihp":
        cols.append("eps_hat")
    if cfg.experiment == "ihp":
        cols.append("ihp_violation")
    return tuple(cols)


def _row(rec: StepRecord, cols):
    return tuple(getattr(rec, c) for c in cols)


def _mean_se(values):
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        return math.nan, math.nan
    se = float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else math.nan
    return float(v.mean()), se


def _run_reps(fn, cfg, workers):
    """Run ``fn(cfg, rep, rng)`` for every replication; results come back in rep order."""
    rngs = _streams(cfg.seed, cfg.reps)
    if workers and workers > 1 and cfg.reps > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, [cfg] * cfg.reps, range(cfg.reps), rngs))
    return [fn(cfg, rep, rng) for rep, rng in zip(range(cfg.reps), rngs)]


def _track_rep(cfg, rep, rng):
    tr = Tracker(cfg, rng, rep)
    return [tr.step()[0] for _ in range(cfg.horizon)]


def _tracking_table(cfg, per_rep):
    cols = _columns(cfg)
    records = [r for reps in per_rep for r in reps]
    rows = [_row(r, cols) for r in records]
    summary = {"reps": cfg.reps, "horizon": cfg.horizon}
    if cfg.horizon > 0 and cfg.reps > 0:
        est = [np.mean([r.excess_est for r in reps]) for reps in per_rep]
        true = [np.mean([r.excess_true for r in reps]) for reps in per_rep]
        half = max(cfg.horizon // 2, 1)
        k_tail = [np.mean([r.K_n for r in reps[-half:]]) for reps in per_rep]
        summary["excess_est_mean"], summary["excess_est_se"] = _mean_se(est)
        summary["excess_true_mean"], summary["excess_true_se"] = _mean_se(true)
        summary["K_tail_mean"], summary["K_tail_se"] = _mean_se(k_tail)
    return ResultTable(cols, rows, summary, records)


def run_mean_experiment(cfg: ExperimentConfig, workers=None) -> ResultTable:
    """Mean-criterion tracking over ``cfg.reps`` seeded replications.

    The summary averages each replication's excess risk over n = 1..horizon
    and reports the mean and standard error across replications.
    """
    return _tracking_table(cfg, _run_reps(_track_rep, cfg, workers))


def run_tradeoff(cfg: ExperimentConfig, epsilon_grid=None) -> ResultTable:
    """K* for each target with the drift bound and constants known."""
    grid = cfg.epsilon_grid if epsilon_grid is None else epsilon_grid
    if any(not e > 0 for e in grid):
        raise InvalidArgumentError("targets must be positive")
    diam = 2.0 * cfg.radius
    bound = make_bound(cfg.bound, regression_constants(cfg.d, cfg.sigma_w_sq, cfg.sigma_e_sq, diam))
    rows = [(float(e), k_star(float(e), cfg.rho, bound, cfg.k_max)) for e in grid]
    return ResultTable(("epsilon", "K_star"), rows, {"points": len(rows)})


def binomial_summary(indicators):
    x = np.asarray(indicators, dtype=float)
    N = int(x.size)
    if N == 0:
        return {"violations": 0, "indicators": 0, "frequency": math.nan, "se": math.nan}
    p = float(x.mean())
    se = math.sqrt(p * (1.0 - p) / N)
    return {"violations": int(x.sum()), "indicators": N, "frequency": p, "se": se,
            "ci_low": max(p - 3.0 * se, 0.0), "ci_high": min(p + 3.0 * se, 1.0)}


def run_ihp_experiment(cfg: ExperimentConfig, workers=None) -> ResultTable:
    """Tracking with sample sizes chosen for ``P{excess > t} <= r``."""
    if cfg.experiment != "ihp":
        cfg = replace(cfg, experiment="ihp")
    table = _tracking_table(cfg, _run_reps(_track_rep, cfg, workers))
    table.summary.update(binomial_summary([r.ihp_violation for r in table.records]))
    table.summary.update({"t": cfg.ihp_t, "r": cfg.ihp_r})
    return table


def _kalman_rep(cfg, rep, rng):
    tr = Tracker(cfg, rng, rep)
    d = cfg.d
    sigma_sq = cfg.rho**2 / d  # per-coordinate variance of one drift step
    matched = kalman.initial_state(d, sigma_sq, cfg.sigma_e_sq)
    mism = kalman.initial_state(d, sigma_sq * cfg.kalman_sigma_factor,
                                cfg.sigma_e_sq * cfg.kalman_noise_factor)
    out = []
    for _ in range(cfg.horizon):
        rec, batch = tr.step()
        first = tr.n == 1
        matched = kalman.run_epoch(matched, batch, is_epoch_start=not first)
        mism = kalman.run_epoch(mism, batch, is_epoch_start=not first)
        eta_m = tr.problem.domain.project(matched.eta_hat)
        eta_x = tr.problem.domain.project(mism.eta_hat)
        # one shared set of fresh samples scores all three trackers
        evals = tr.problem.draw(cfg.mc_samples, tr.rng)
        off = 0.5 * cfg.sigma_e_sq
        scores = [float(np.mean(evals.losses(x))) - off for x in (tr.x, eta_m, eta_x)]
        true = [true_excess_risk(tr.problem, x) for x in (tr.x, eta_m, eta_x)]
        out.append((rec, len(batch), scores, true))
    return out


def run_kalman_comparison(cfg: ExperimentConfig, workers=None) -> ResultTable:
    """SGD tracker against matched and mismatched Kalman filters on shared samples.

    Both filters consume exactly the batches, and hence the sample counts,
    drawn by the SGD tracker.
    """
    per_rep = _run_reps(_kalman_rep, cfg, workers)
    for reps in per_rep:
        for rec, k_seen, _, _ in reps:
            assert rec.K_n == k_seen, "Kalman filter saw a different sample count"
    table = _tracking_table(cfg, [[r[0] for r in reps] for reps in per_rep])
    names = ("sgd_tracker", "kalman_matched", "kalman_mismatched")
    methods = {}
    for i, name in enumerate(names):
        est = [np.mean([r[2][i] for r in reps]) for reps in per_rep]
        true = [np.mean([r[3][i] for r in reps]) for reps in per_rep]
        mu, se = _mean_se(est)
        mt, st = _mean_se(true)
        methods[name] = {"excess_est_mean": mu, "excess_est_se": se,
                         "excess_true_mean": mt, "excess_true_se": st}
    table.summary["methods"] = methods
    table.summary["kalman_sigma_factor"] = cfg.kalman_sigma_factor
    table.summary["kalman_noise_factor"] = cfg.kalman_noise_factor
    return table


def run_experiment(cfg: ExperimentConfig, workers=None) -> ResultTable:
    if cfg.experiment == "mean":
        return run_mean_experiment(cfg, workers)
    if cfg.experiment == "tradeoff":
        return run_tradeoff(cfg)
    if cfg.experiment == "ihp":
        return run_ihp_experiment(cfg, workers)
    return run_kalman_comparison(cfg, workers)


# emission ------------------------------------------------------------------

def format_value(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".9g")


def _json_value(v):
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else None
    return v


def _json_tree(obj):
    if isinstance(obj, dict):
        return {k: _json_tree(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_tree(v) for v in obj]
    return _json_value(obj)


def render(table: ResultTable, fmt="csv") -> str:
    if fmt == "csv":
        lines = [",".join(table.columns)]
        lines += [",".join(format_value(v) for v in row) for row in table.rows]
        return "\n".join(lines) + "\n"
    if fmt == "json":
        rows = [[float(format_value(v)) if isinstance(v, (float, np.floating)) else _json_value(v)
                 for v in row] for row in table.rows]
        return json.dumps({"columns": list(table.columns), "rows": _json_tree(rows)}, indent=None) + "\n"
    raise InvalidArgumentError(f"unknown output format {fmt!r}")


def metadata(cfg: ExperimentConfig) -> dict:
    return {"seed": cfg.seed, "config_hash": cfg.digest(), "version": __version__,
            "experiment": cfg.experiment, "config": cfg.to_dict()}


def emit_results(table: ResultTable, path, cfg: ExperimentConfig, fmt="csv"):
    """Write the table to ``path`` and the summary plus run metadata to ``<path>.summary.json``."""
    with open(path, "w", newline="") as fh:
        fh.write(render(table, fmt))
    summary_path = f"{path}.summary.json"
    blob = {"metadata": metadata(cfg), "summary": _json_tree(table.summary)}
    with open(summary_path, "w") as fh:
        json.dump(blob, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return summary_path
