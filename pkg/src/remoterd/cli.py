"""Experiment runner: one config file in, one seeded output file out.

Subcommands: rd-curve, dispersion, approx, bound, simulate, verify.  Every
run reads a JSON config, executes, writes its CSV or JSON output atomically
(temp file + rename) with a provenance header, and prints a one-line
summary.  Exit codes: 0 success, 1 malformed config or parameters, 2
numerical non-convergence, 3 invariant failure (verify only).

Config schema (one flat JSON object; unknown keys are rejected):

  model            inline model mapping (see below), or
  model_path       path to a JSON file with the same mapping, relative to
                   the config file
  seed             root seed (u64, default 0); --seed overrides
  output_path      result file; --out overrides
  unit             "nats" (default) or "bits"; affects summary lines and
                   nothing in the fixed CSV/JSON schemas

  d_s              hidden-distortion target
  d_x              observation-distortion target (joint runs only)
  d_s_grid         explicit list of d_s values (rd-curve), or use
  d_s_min, d_s_max, points   an even grid (rd-curve)
  epsilon          excess-probability target (approx, m_rule)
  k, k_list        blocklength, or list of them
  m, m_log_nats    codebook size, directly or via its natural log
  m_rule           {"epsilon": e, "logk_coeff": c}: per-k size from the
                   two-term expansion (simulate)
  trials           simulation trials (default 100000)
  samples, inner   outer/inner Monte Carlo sizes (bound)
  gamma            relaxed-bound parameter, or gamma_rule
  gamma_rule       "m_over_log_sqrt_k": gamma = M / ln(sqrt(k))
  c0               normal-approximation constant (default 0.5600)
  logk_coeff       coefficient on the ln(k) remainder (default 0)
  t_grid_size      grid size for the exponent diagnostic (default 9)
  c_const          threshold constant for the exponent diagnostic
  method           bound flavor: "oneshot", "oneshot-relaxed",
                   "oneshot-joint", "g-exponent"
  eval             "mc" (default) or "exact" bound evaluation
  encoder          "min_surrogate" (default) or "min_pi" (simulate)
  codebook_mode    "auto" (default), "ensemble", "materialized", "streamed"

Model mapping keys: x_symbols, p_x, phi, noise_support, noise_probs,
s_hat_symbols, and optionally x_hat_symbols with d_x_table (row-major
|X| x |X_hat| entries).

CSV outputs use ',' delimiters, '.' decimal points, LF line endings, a
`# config_hash=... seed=...` provenance comment, then the header row.
JSON outputs carry the same provenance as a "config_hash" field.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import tempfile

import numpy as np

from . import bounds, gaussian, rd, simulate, tilted
from .errors import (BudgetExceeded, ConfigError, Degenerate, NotConverged,
                     RemoteRdError, UnsupportedModel)
from .model import (d_min_max, model_from_dict, validate_model)

LN2 = math.log(2.0)

_KNOWN_KEYS = {
    "model", "model_path", "seed", "output_path", "unit",
    "d_s", "d_x", "d_s_grid", "d_s_min", "d_s_max", "points",
    "epsilon", "k", "k_list", "m", "m_log_nats", "m_rule", "trials",
    "samples", "inner", "gamma", "gamma_rule", "c0", "logk_coeff",
    "t_grid_size", "c_const", "method", "eval", "encoder", "codebook_mode",
}


class _Run:
    """Resolved configuration for one invocation."""

    def __init__(self, args):
        path = args.config
        try:
            with open(path, "rb") as fh:
                raw = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path!r}: {exc}") from exc
        try:
            cfg = json.loads(raw)
        except ValueError as exc:
            raise ConfigError(f"config {path!r} is not valid JSON: {exc}") from exc
        if not isinstance(cfg, dict):
            raise ConfigError("config must be a JSON object")
        unknown = sorted(set(cfg) - _KNOWN_KEYS)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        self.cfg = cfg
        self.config_hash = hashlib.sha256(raw).hexdigest()[:16]
        self.seed = int(args.seed if args.seed is not None
                        else cfg.get("seed", 0))
        self.unit = args.unit or cfg.get("unit", "nats")
        if self.unit not in ("nats", "bits"):
            raise ConfigError(f"unit must be nats or bits, got {self.unit!r}")
        self.threads = max(1, int(args.threads))
        self.out = args.out or cfg.get("output_path")
        if "model" in cfg:
            self.model = model_from_dict(cfg["model"])
        elif "model_path" in cfg:
            mp = os.path.join(os.path.dirname(os.path.abspath(path)),
                              cfg["model_path"])
            try:
                with open(mp, "r") as fh:
                    self.model = model_from_dict(json.load(fh))
            except OSError as exc:
                raise ConfigError(f"cannot read model {mp!r}: {exc}") from exc
            except ValueError as exc:
                raise ConfigError(f"model file {mp!r}: {exc}") from exc
        else:
            raise ConfigError("config needs a model or model_path key")

    def require(self, key):
        if key not in self.cfg:
            raise ConfigError(f"missing config key {key!r}")
        return self.cfg[key]

    def get(self, key, default=None):
        return self.cfg.get(key, default)

    def k_values(self):
        if "k_list" in self.cfg:
            ks = self.cfg["k_list"]
        elif "k" in self.cfg:
            ks = [self.cfg["k"]]
        else:
            raise ConfigError("missing config key 'k' or 'k_list'")
        ks = [int(k) for k in ks]
        if not ks or any(k < 1 for k in ks):
            raise ConfigError(f"blocklengths must be positive, got {ks!r}")
        return ks

    def in_unit(self, nats: float) -> float:
        return nats / LN2 if self.unit == "bits" else nats

    def header(self) -> str:
        return f"# config_hash={self.config_hash} seed={self.seed}\n"

    def write_csv(self, rows):
        if not self.out:
            raise ConfigError("no output path: set output_path or pass --out")
        _write_atomic(self.out, self.header() + "\n".join(rows) + "\n")

    def write_json(self, payload: dict):
        if not self.out:
            raise ConfigError("no output path: set output_path or pass --out")
        payload = {"config_hash": self.config_hash, **payload}
        _write_atomic(self.out, json.dumps(payload, indent=2) + "\n")


def _write_atomic(path: str, text: str):
    path = os.path.abspath(path)
    try:
        fd, tmp = tempfile.mkstemp(dir=os.path.dirname(path), prefix=".tmp-")
    except OSError as exc:
        raise ConfigError(f"cannot write output {path!r}: {exc}") from exc
    try:
        with os.fdopen(fd, "w", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def _fmt(value) -> str:
    if value is None:
        return ""
    return repr(float(value))


# -- subcommands ---------------------------------------------------------------


def _cmd_rd_curve(run: _Run) -> str:
    if "d_s_grid" in run.cfg:
        grid = [float(d) for d in run.cfg["d_s_grid"]]
    else:
        lo = float(run.require("d_s_min"))
        hi = float(run.require("d_s_max"))
        points = int(run.require("points"))
        if points < 1:
            raise ConfigError(f"points must be positive, got {points}")
        grid = np.linspace(lo, hi, points).tolist()
    curve = rd.rd_curve(run.model, grid)
    run.write_csv(list(curve.csv_rows()))
    lo, hi = min(grid), max(grid)
    return (f"rd-curve: {len(grid)} points, d_s in [{lo:g}, {hi:g}], "
            f"rate {run.in_unit(float(curve.rate_nats.min())):.6f}.."
            f"{run.in_unit(float(curve.rate_nats.max())):.6f} {run.unit}")


def _solve_single(run: _Run, d_s: float):
    return rd.solve_for_distortion(run.model, d_s)


def _cmd_dispersion(run: _Run) -> str:
    d_s = float(run.require("d_s"))
    solution = _solve_single(run, d_s)
    report = tilted.dispersion(tilted.TiltedContext(run.model, solution, d_s))
    run.write_json(report.as_dict())
    return (f"dispersion: d_s={d_s:g}, v_tilde={report.v_tilde:.9g}, "
            f"identity residual {report.identity_residual:.3g}")


def _cmd_approx(run: _Run) -> str:
    d_s = float(run.require("d_s"))
    epsilon = float(run.require("epsilon"))
    coeff = float(run.get("logk_coeff", 0.0))
    ks = run.k_values()
    solution = _solve_single(run, d_s)
    report = tilted.dispersion(tilted.TiltedContext(run.model, solution, d_s))
    rows = ["k,log_m_nats,log_m_bits,rate_term,dispersion_term,logk_term"]
    last = 0.0
    for k in ks:
        params = gaussian.SecondOrderParams(
            rate=solution.rate, v_tilde=report.v_tilde, epsilon=epsilon,
            k=k, log_k_coeff=coeff)
        rate_term, disp_term, logk_term = gaussian.second_order_terms(params)
        last = rate_term + disp_term + logk_term
        rows.append(f"{k},{last!r},{last / LN2!r},{rate_term!r},"
                    f"{disp_term!r},{logk_term!r}")
    run.write_csv(rows)
    return (f"approx: {len(ks)} blocklengths, last log M = "
            f"{run.in_unit(last):.4f} {run.unit}")


def _resolve_m(run: _Run, k: int, solution=None, v_tilde=None):
    if "m" in run.cfg:
        m = run.cfg["m"]
        if m < 1:
            raise ConfigError(f"m must be at least 1, got {m!r}")
        return m
    if "m_log_nats" in run.cfg:
        return math.ceil(math.exp(float(run.cfg["m_log_nats"])))
    if "m_rule" in run.cfg:
        rule = run.cfg["m_rule"]
        if not isinstance(rule, dict) or "epsilon" not in rule:
            raise ConfigError("m_rule needs an epsilon entry")
        if solution is None or v_tilde is None:
            raise ConfigError(
                "m_rule applies to the simulate subcommand; give m or "
                "m_log_nats here")
        params = gaussian.SecondOrderParams(
            rate=solution.rate, v_tilde=v_tilde,
            epsilon=float(rule["epsilon"]), k=k,
            log_k_coeff=float(rule.get("logk_coeff", 0.0)))
        return math.ceil(math.exp(gaussian.second_order_log_m(params)))
    raise ConfigError("missing config key 'm', 'm_log_nats' or 'm_rule'")


def _solve_pair(run: _Run, d_s: float, d_x: float):
    """Joint solve with the documented fallback: when one constraint is
    slack at the optimum, complete the single-constraint solution with a
    deterministic second reconstruction."""
    try:
        return rd.solve_joint_for_distortions(run.model, d_s, d_x)
    except Degenerate as exc:
        if exc.constraint == "d_x":
            return rd.degenerate_joint_completion(run.model,
                                                  _solve_single(run, d_s))
        raise


def _cmd_bound(run: _Run) -> str:
    method = run.get("method", "oneshot")
    d_s = float(run.require("d_s"))
    k = run.k_values()[0]
    evaluation = run.get("eval", "mc")
    if evaluation not in ("mc", "exact"):
        raise ConfigError(f"eval must be mc or exact, got {evaluation!r}")
    samples = int(run.get("samples", 256))
    inner = int(run.get("inner", 512))
    c0 = float(run.get("c0", gaussian.C0_DEFAULT))
    if method == "oneshot-joint":
        d_x = float(run.require("d_x"))
        solution = _solve_pair(run, d_s, d_x)
    else:
        solution = _solve_single(run, d_s)
    if method == "g-exponent":
        t0 = 2.0 * gaussian.zeta(run.model, c0) / math.sqrt(k)
        size = int(run.get("t_grid_size", 9))
        t_grid = np.linspace(t0, 1.0, size + 2)[1:-1]
        value = bounds.g_exponent_check(
            run.model, solution, d_s, k, t_grid, c0=c0, samples=samples,
            seed=run.seed, c_const=float(run.get("c_const", 5.0)))
        payload = {"method": method, "value": value, "half_width": 0.0,
                   "samples": samples, "seed": run.seed, "k": k,
                   "M_log_nats": None}
        run.write_json(payload)
        return f"g-exponent: fraction {value:.4f} at k={k}"
    m = _resolve_m(run, k)
    if method == "oneshot":
        est = bounds.oneshot_bound(run.model, solution, d_s, k, m,
                                   method=evaluation, samples=samples,
                                   inner=inner, seed=run.seed)
    elif method == "oneshot-relaxed":
        gamma = run.get("gamma")
        if gamma is None:
            if run.get("gamma_rule") != "m_over_log_sqrt_k":
                raise ConfigError("missing config key 'gamma' or gamma_rule "
                                  "'m_over_log_sqrt_k'")
            gamma = float(m) / math.log(math.sqrt(k))
        parts = bounds.oneshot_relaxed_breakdown(
            run.model, solution, d_s, k, float(gamma), m, c0=c0,
            method=evaluation, samples=samples, inner=inner, seed=run.seed)
        est = bounds.BoundEstimate(value=parts.value,
                                   half_width=parts.middle_half_width,
                                   method=f"relaxed-{evaluation}",
                                   seed=run.seed, samples=samples)
    elif method == "oneshot-joint":
        est = bounds.oneshot_joint_bound(
            run.model, solution, d_s, float(run.require("d_x")), k, m,
            method=evaluation, samples=samples, inner=inner, seed=run.seed)
    else:
        raise ConfigError(f"unknown bound method {method!r}")
    payload = {"method": est.method, "value": est.value,
               "half_width": est.half_width, "samples": est.samples,
               "seed": est.seed, "k": k, "M_log_nats": float(np.log(float(m)))}
    run.write_json(payload)
    return (f"bound[{method}/{evaluation}]: value {est.value:.6f} "
            f"+- {est.half_width:.6f} at k={k}")


def _cmd_simulate(run: _Run) -> str:
    d_s = float(run.require("d_s"))
    d_x = run.get("d_x")
    d_x = float(d_x) if d_x is not None else None
    ks = run.k_values()
    trials = int(run.get("trials", 100000))
    mode = run.get("codebook_mode", "auto")
    if mode not in ("auto", "ensemble", "materialized", "streamed"):
        raise ConfigError(f"unknown codebook_mode {mode!r}")
    encoder = run.get("encoder", "min_surrogate")
    if d_x is None:
        solution = _solve_single(run, d_s)
    else:
        solution = _solve_pair(run, d_s, d_x)
    v_tilde = None
    if "m_rule" in run.cfg:
        # the context checks its targets against the solution, and a
        # completed pair solution sits below the requested d_x
        ctx = tilted.TiltedContext(
            run.model, solution, d_s,
            solution.d_x_achieved if solution.is_joint else None)
        v_tilde = tilted.dispersion(ctx).v_tilde
    row_seeds = np.random.SeedSequence(run.seed).generate_state(
        len(ks), dtype=np.uint64)
    rows = ["k,M_log_nats,d_s,d_x,excess_prob,half_width,trials,seed"]
    last = None
    for k, row_seed in zip(ks, row_seeds.tolist()):
        m = _resolve_m(run, k, solution, v_tilde)
        last = _simulate_one(run, solution, d_s, d_x, k, m, trials,
                             row_seed, mode, encoder)
        rows.append(f"{last.k},{_fmt(last.m_log_nats)},{_fmt(last.d_s)},"
                    f"{_fmt(last.d_x)},{_fmt(last.excess_prob)},"
                    f"{_fmt(last.half_width)},{last.trials},{last.seed}")
    run.write_csv(rows)
    return (f"simulate: {len(ks)} blocklengths x {trials} trials, last "
            f"excess {last.excess_prob:.5f} +- {last.half_width:.5f}")


def _simulate_one(run, solution, d_s, d_x, k, m, trials, seed, mode, encoder):
    model = run.model
    if mode in ("auto", "ensemble") and encoder == "min_surrogate":
        try:
            return simulate.estimate_excess_ensemble(
                model, solution, d_s, k, m, trials, seed, d_x=d_x,
                threads=run.threads)
        except (UnsupportedModel, BudgetExceeded):
            if mode == "ensemble":
                raise
    if mode == "streamed" or (
            mode in ("auto",) and float(m) * k > simulate.MATERIALIZE_BUDGET):
        codebook = simulate.streamed_codebook(model, solution, k, m, seed)
    else:
        codebook = simulate.sample_codebook(model, solution, k, m, seed)
    if d_x is None:
        return simulate.estimate_excess(model, codebook, d_s, trials, seed,
                                        rule=encoder, threads=run.threads)
    return simulate.estimate_excess_joint(model, codebook, d_s, d_x, trials,
                                          seed, threads=run.threads)


def _cmd_verify(run: _Run) -> str:
    model = run.model
    checks = []

    def check(name, passed, detail):
        checks.append({"name": name, "passed": bool(passed), "detail": detail})
        print(f"[{'PASS' if passed else 'FAIL'}] {name}: {detail}")

    try:
        moments = validate_model(model)
        check("noise-moments", True,
              f"Var[W]={moments.sigma_w2:g}, Var[W^2]={moments.sigma_w2_var:g}")
    except RemoteRdError as exc:
        check("noise-moments", False, str(exc))
        return _finish_verify(run, checks)
    lo, hi = d_min_max(model)
    d_s = float(run.get("d_s", 0.5 * (lo + hi)))
    solution = rd.solve_for_distortion(model, d_s)
    check("rd-converged", solution.converged,
          f"rate={solution.rate:.9f} nats in {solution.iterations} iterations")
    gap = abs(solution.d_s_achieved - d_s)
    check("rd-on-target", gap <= 1e-8, f"|achieved - target| = {gap:.3g}")
    q_res = float(np.max(np.abs(
        model.p_x @ solution.kernel.matrix - solution.marginal)))
    check("marginal-consistent", q_res <= 1e-9, f"residual {q_res:.3g}")
    ctx = tilted.TiltedContext(model, solution, d_s)
    j = tilted.tilted_all_direct(ctx)
    mean_gap = abs(float(model.p_x @ j) - solution.rate)
    check("tilted-mean-is-rate", mean_gap <= 1e-9, f"|E[j]-R| = {mean_gap:.3g}")
    live = solution.marginal > 0
    log_q = np.log(solution.marginal[live])
    lam = solution.lambda_s
    dbar = model.surrogate_matrix()[:, live]
    opt = np.exp(log_q[None, :] + lam * (d_s - dbar) + j[:, None])
    opt_res = float(np.max(np.abs(
        np.where(solution.kernel.matrix[:, live] > 0,
                 opt - solution.kernel.matrix[:, live], 0.0))))
    check("kernel-tilted-form", opt_res <= 1e-9, f"residual {opt_res:.3g}")
    report = tilted.dispersion(ctx)
    check("variance-identity", report.identity_residual <= 1e-9,
          f"residual {report.identity_residual:.3g}")
    grid = np.linspace(1e-9, 1 - 1e-9, 41)
    round_trip = max(abs(gaussian.q_func(gaussian.q_inv(p)) - p) for p in grid)
    check("quantile-round-trip", round_trip <= 1e-12, f"max {round_trip:.3g}")
    z_ref = float(model.s_hat.symbols[0])
    stats = gaussian.be_stats(model, model.x.symbols,
                              np.full(len(model.x), z_ref))
    z_bound = gaussian.zeta(model)
    check("be-normalized-bound", stats.b_k <= z_bound + 1e-12,
          f"b_k={stats.b_k:.6g} <= zeta={z_bound:.6g}")
    x_seq = np.tile(model.x.symbols, 3)[:3]
    z_seq = np.full(3, z_ref)
    dist = bounds.distortion_distribution(model, x_seq, z_seq)
    mass_gap = abs(float(dist.probs.sum()) - 1.0)
    check("pi-law-mass", mass_gap <= 1e-10, f"|mass - 1| = {mass_gap:.3g}")
    payload = {"checks": checks,
               "all_passed": all(c["passed"] for c in checks)}
    if run.out:
        run.write_json(payload)
    return _finish_verify(run, checks)


def _finish_verify(run: _Run, checks) -> str:
    failed = [c["name"] for c in checks if not c["passed"]]
    if failed:
        raise _VerifyFailure(f"verify: {len(failed)} failed "
                             f"({', '.join(failed)})")
    return f"verify: all {len(checks)} checks passed"


class _VerifyFailure(RemoteRdError):
    pass


_COMMANDS = {
    "rd-curve": _cmd_rd_curve,
    "dispersion": _cmd_dispersion,
    "approx": _cmd_approx,
    "bound": _cmd_bound,
    "simulate": _cmd_simulate,
    "verify": _cmd_verify,
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="remoterd",
        description="indirect-source coding experiments: rate-distortion "
                    "curves, dispersions, finite-k approximations, one-shot "
                    "bounds and random-code simulation")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON config file")
        p.add_argument("--out", help="output file (overrides output_path)")
        p.add_argument("--seed", type=int, help="root seed (overrides config)")
        p.add_argument("--unit", choices=("nats", "bits"))
        p.add_argument("--threads", type=int, default=1)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        run = _Run(args)
        summary = _COMMANDS[args.command](run)
    except _VerifyFailure as exc:
        print(exc)
        return 3
    except NotConverged as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except RemoteRdError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(summary)
    return 0


if __name__ == "__main__":
    sys.exit(main())
