"""
Orchestrates experiments: builds models from a validated RunConfig, runs the
predictors, writes CSV/JSON outputs and records the run.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import __version__
from .analytic import (
    CurveMethod,
    DecayCurve,
    coarse_curve,
    coarse_curve_renormalized,
    epsilon_reference,
    markov_exact_curve,
    plme_curve,
    plme_epsilons,
    quasistatic_exact_curve,
    select_method,
    gamma_bar_profile,
)
from .config_store import (
    FULL_SCALE_NOISE,
    FULL_SCALE_SEQUENCES,
    Experiment,
    Method,
    RunConfig,
    config_digest,
    resolve_lengths,
)
from .errors import ConfigError, FitError, InvariantFailure, RbsimError, ValidationError, exit_code_for
from .fit import default_window, fit_exponential, initial_rate, loglog_slope
from .gate_impl import FCoefficients, GateImplementation, GateKind, compute_F, make_implementation
from .montecarlo import McConfig, McResult, convergence_table, converged, run, run_sequence_averaged
from .noise import NoiseKind, NoiseModel, model_for_gamma0
from .result_store import (
    RunRecord,
    read_curve_csv,
    save_run,
    write_curve_csv,
    write_sidecar,
    write_table_csv,
)

logger = logging.getLogger(__name__)

AGREEMENT_STDERR = 3.0
# p0 - 1/2 falls as m^(-1/2) once slow noise dephases a sequence
QUASISTATIC_SLOPE = -0.5
TAIL_RMS_LIMIT = 1e-4
SLOPE_DRIFT_LIMIT = 0.1


@dataclass
class ExperimentResult:
    success: bool
    experiment: str = ""
    files: List[str] = field(default_factory=list)
    summary: Dict[str, Any] = field(default_factory=dict)
    warnings: List[str] = field(default_factory=list)
    error_message: str = ""
    error_kind: str = ""
    exit_code: int = 0
    config_digest: str = ""
    run_id: str = ""


@dataclass
class RunContext:
    config: RunConfig
    out_dir: Path
    workers: int = 1
    full_scale: bool = False

    @property
    def digest(self) -> str:
        return config_digest(self.config)

    def path(self, name: str) -> Path:
        return self.out_dir / name


# ---------------------------------------------------------------------------
# Shared helpers
# ---------------------------------------------------------------------------

def _mc_config(
    ctx: RunContext,
    model: NoiseModel,
    impl: GateImplementation,
    lengths: Sequence[int],
    perfect_first_gate: Optional[bool] = None,
) -> McConfig:
    s = ctx.config.mc
    n_seq, n_noise = s.n_sequences, s.n_noise_per_sequence
    if ctx.full_scale:
        n_seq, n_noise = FULL_SCALE_SEQUENCES, FULL_SCALE_NOISE
    return McConfig(
        model=model,
        impl=impl,
        lengths=tuple(int(m) for m in lengths),
        n_sequences=n_seq,
        n_noise_per_sequence=n_noise,
        substeps_per_gate=s.substeps_per_gate,
        perfect_first_gate=s.perfect_first_gate if perfect_first_gate is None else perfect_first_gate,
        master_seed=ctx.config.seed,
        audit=s.audit,
    )


def _f_summary(fc: FCoefficients) -> Dict[str, Any]:
    return {
        "implementation": fc.kind.value,
        "F_curr": fc.F_curr,
        "F_prev": fc.F_prev,
        "quad_points": fc.quad_points,
        "quadrature_error_estimate": fc.quadrature_error_estimate,
        "warning": fc.warning,
    }


def compute_curve(
    ctx: RunContext,
    method: Method,
    model: NoiseModel,
    impl: GateImplementation,
    lengths: np.ndarray,
) -> Tuple[DecayCurve, Dict[str, Any]]:
    """Evaluate one method; returns the curve and sidecar details."""
    cfg = ctx.config
    details: Dict[str, Any] = {"requested_method": method.value}
    if method is Method.AUTO:
        sel = select_method(model, impl, cfg.thresholds.coarse, cfg.thresholds.weak)
        details["selection"] = {
            "method": sel.method.value,
            "coarse_metric": sel.coarse_metric,
            "weak_metric": sel.weak_metric,
            "warning": sel.warning,
        }
        method = Method.PLME if sel.method is CurveMethod.PLME2 else Method.COARSE
    if method in (Method.COARSE, Method.COARSE_RENORMALIZED, Method.QUASISTATIC):
        fc = compute_F(impl, cfg.quad_points)
        details["f_coefficients"] = _f_summary(fc)
    if method is Method.PLME:
        curve = plme_curve(model, impl, lengths)
        eps, eps_prime = plme_epsilons(model, impl)
        details["eps"], details["eps_prime"], details["decay_exponent"] = eps, eps_prime, 4.0 * eps
    elif method is Method.COARSE:
        curve = coarse_curve(model, fc, lengths)
    elif method is Method.COARSE_RENORMALIZED:
        curve = coarse_curve_renormalized(model, fc, lengths)
    elif method is Method.MARKOV:
        if model.kind is not NoiseKind.WHITE:
            raise ConfigError("method 'markov' needs white noise")
        curve = markov_exact_curve(model.gamma, lengths, impl.t_g)
    elif method is Method.QUASISTATIC:
        if not (model.kind is NoiseKind.QUASISTATIC or (model.kind is NoiseKind.OU and math.isinf(model.tau_c))):
            raise ConfigError("method 'quasistatic' needs quasistatic noise")
        curve = quasistatic_exact_curve(model.sigma, fc, lengths, impl.t_g)
    elif method is Method.SEQUENCE_AVERAGED:
        curve = run_sequence_averaged(model, impl, lengths, cfg.mc.n_realizations, seed=cfg.seed)
    else:
        result = run(_mc_config(ctx, model, impl, lengths), workers=ctx.workers)
        curve = result.curve
        details["mc"] = _mc_summary(result)
    details["method"] = curve.method.value
    return curve.with_digest(ctx.digest), details


def _mc_summary(result: McResult) -> Dict[str, Any]:
    out: Dict[str, Any] = {
        "n_sequences": int(result.per_sequence.shape[1]),
        "converged": bool(np.all(converged(result))),
    }
    if result.audit is not None:
        out["audit"] = {
            "max_delta": result.audit.max_delta,
            "ratio": result.audit.ratio,
            "passed": result.audit.passed,
            "substeps": result.audit.substeps,
        }
    return out


def fit_summary(curve: DecayCurve, ctx: RunContext, window: Optional[Tuple[int, int]] = None) -> Dict[str, Any]:
    """Tail fit plus head rate; fit failures are reported, not raised."""
    s = ctx.config.fit
    window = window or s.window or default_window(curve.lengths, s.tail_fraction)
    out: Dict[str, Any] = {}
    try:
        out["tail_fit"] = fit_exponential(curve, window).to_dict()
    except (FitError, ValidationError) as e:
        out["tail_fit_error"] = str(e)
    try:
        out["initial_rate"] = initial_rate(curve)
    except ValidationError as e:
        out["initial_rate_error"] = str(e)
    return out


def _sidecar(ctx: RunContext, name: str, payload: Dict[str, Any]) -> Path:
    base = {
        "config": ctx.config.model_dump(mode="json"),
        "config_digest": ctx.digest,
        "version": __version__,
    }
    base.update(payload)
    return write_sidecar(ctx.path(name), base)


def _max_deviation(curve: DecayCurve, reference: DecayCurve) -> float:
    """max_m |p0 - p0_ref| / stderr; zero-stderr points count only when they differ."""
    d = np.abs(curve.p0 - reference.p0)
    err = np.hypot(curve.stderr, reference.stderr)
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(d <= 1e-12, 0.0, d / err)
    return float(np.max(r))


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_curve(ctx: RunContext) -> ExperimentResult:
    cfg = ctx.config
    model = cfg.noise_model()
    impl = make_implementation(cfg.implementation)
    curve, details = compute_curve(ctx, cfg.method, model, impl, cfg.resolved_lengths())
    warnings = []
    if details.get("selection", {}).get("warning"):
        warnings.append("no approximation is inside its validity regime")
    if details.get("mc", {}).get("audit", {}).get("passed") is False:
        warnings.append("monte carlo step-size audit failed")
    if cfg.fit.enabled:
        details["fit"] = fit_summary(curve, ctx)
    files = [
        write_curve_csv(curve, ctx.path("curve.csv"), ctx.digest),
        _sidecar(ctx, "curve.json", {"noise": model.to_dict(), "warnings": warnings, **details}),
    ]
    return ExperimentResult(
        success=True,
        files=[str(f) for f in files],
        summary={"method": details["method"], "p0_last": float(curve.p0[-1])},
        warnings=warnings,
    )


def cmd_fcoef(ctx: RunContext) -> ExperimentResult:
    cfg = ctx.config
    rows, files, summary = [], [], {}
    for kind in GateKind:
        fc = compute_F(kind, cfg.quad_points)
        rows.append((kind.value, fc.F_curr, fc.F_prev, fc.total, fc.quadrature_error_estimate, fc.warning))
        summary[kind.value] = _f_summary(fc)
        g = fc.f_grid
        t1, t2 = np.meshgrid(g.taus, g.taus, indexing="ij")
        grid_rows = zip(t1.ravel(), t2.ravel(), g.same.ravel(), g.adjacent.ravel())
        files.append(write_table_csv(
            ctx.path(f"f_grid_{kind.value}.csv"), ("tau1", "tau2", "f_same", "f_adjacent"), list(grid_rows), ctx.digest
        ))
    files.insert(0, write_table_csv(
        ctx.path("fcoef.csv"),
        ("implementation", "F_curr", "F_prev", "F_total", "error_estimate", "warning"),
        rows,
        ctx.digest,
    ))
    if cfg.noise is not None:
        model = cfg.noise_model()
        impl = make_implementation(cfg.implementation)
        times = np.linspace(0.0, 3.0 * impl.t_g, 61)
        rates = gamma_bar_profile(model, impl, times)
        files.append(write_table_csv(
            ctx.path("gamma_bar.csv"), ("t_over_tg", "gamma_bar"), list(zip(times, rates)), ctx.digest
        ))
    files.append(_sidecar(ctx, "fcoef.json", {"f_coefficients": summary}))
    warnings = [f"{k}: quadrature estimate above tolerance" for k, v in summary.items() if v["warning"]]
    return ExperimentResult(success=True, files=[str(f) for f in files], summary=summary, warnings=warnings)


def cmd_fit(ctx: RunContext) -> ExperimentResult:
    curve = read_curve_csv(ctx.config.input_curve)
    summary = fit_summary(curve, ctx)
    above = curve.p0 > 0.5
    files = []
    if above.sum() >= 2:
        sub = curve.subset(above)
        files.append(write_table_csv(
            ctx.path("loglog_slope.csv"), ("m", "slope"), list(zip(sub.lengths, loglog_slope(sub))), ctx.digest
        ))
    files.append(_sidecar(ctx, "fit.json", {"input_curve": ctx.config.input_curve, "fit": summary}))
    warnings = [v for k, v in summary.items() if k.endswith("_error")]
    return ExperimentResult(success=True, files=[str(f) for f in files], summary=summary, warnings=warnings)


def cmd_compare(ctx: RunContext) -> ExperimentResult:
    cfg = ctx.config
    model = cfg.noise_model()
    impl = make_implementation(cfg.implementation)
    lengths = cfg.resolved_lengths()
    methods = list(dict.fromkeys(cfg.compare_methods))
    if len(methods) < 2:
        raise ConfigError("compare needs at least two distinct methods")
    curves, details = [], {}
    for method in methods:
        curve, d = compute_curve(ctx, method, model, impl, lengths)
        curves.append(curve)
        details[method.value] = d
    ref = curves[0]
    header = ["m"] + [f"p0_{m.value}" for m in methods] + [f"stderr_{m.value}" for m in methods]
    header += [f"diff_{m.value}" for m in methods[1:]]
    rows = []
    for k, m in enumerate(lengths):
        row = [int(m)] + [c.p0[k] for c in curves] + [c.stderr[k] for c in curves]
        row += [c.p0[k] - ref.p0[k] for c in curves[1:]]
        rows.append(row)
    stats = {
        m.value: {
            "max_abs_diff": float(np.max(np.abs(c.p0 - ref.p0))),
            "max_diff_over_stderr": _max_deviation(c, ref),
        }
        for m, c in zip(methods[1:], curves[1:])
    }
    files = [
        write_table_csv(ctx.path("compare.csv"), header, rows, ctx.digest),
        _sidecar(ctx, "compare.json", {"reference": methods[0].value, "differences": stats, "methods": details}),
    ]
    return ExperimentResult(success=True, files=[str(f) for f in files], summary=stats)


def cmd_validate(ctx: RunContext) -> ExperimentResult:
    from .validation_suite import require_passing, run_suite

    report = run_suite()
    rows = [(c.name, "PASS" if c.passed else "FAIL", c.detail) for c in report]
    files = [write_table_csv(ctx.path("validation.csv"), ("check", "status", "detail"), rows, ctx.digest)]
    failed = [c.name for c in report if not c.passed]
    result = ExperimentResult(
        success=not failed,
        files=[str(f) for f in files],
        summary={"checks": len(report), "failed": failed, "table": rows},
    )
    # the table is still reported when checks fail
    try:
        require_passing(report)
    except InvariantFailure as e:
        result.error_kind = "validation"
        result.error_message = str(e)
        result.exit_code = e.exit_code
    return result


def cmd_figure1(ctx: RunContext) -> ExperimentResult:
    s = ctx.config.figure1
    if s.tau_c_max <= s.tau_c_min:
        raise ConfigError("figure1 needs tau_c_min < tau_c_max")
    taus = np.geomspace(s.tau_c_min, s.tau_c_max, s.n_points)
    eps_ref = epsilon_reference(s.gamma0)
    rows, at_ten = [], {}
    for kind in s.implementations:
        impl = make_implementation(kind)
        for tau in taus:
            eps, eps_prime = plme_epsilons(model_for_gamma0(NoiseKind.OU, s.gamma0, tau_c=float(tau)), impl)
            rows.append((kind.value, tau, eps / eps_ref, eps_prime / eps_ref, eps, eps_prime))
        eps10, _ = plme_epsilons(model_for_gamma0(NoiseKind.OU, s.gamma0, tau_c=10.0), impl)
        at_ten[kind.value] = eps10 / eps_ref
    ratio = max(at_ten.values()) / min(at_ten.values())
    summary = {"gamma0": s.gamma0, "eps_ref": eps_ref, "eps_over_ref_at_tau_c_10": at_ten, "impl_ratio_at_tau_c_10": ratio}
    files = [
        write_table_csv(
            ctx.path("figure1.csv"),
            ("implementation", "tau_c_over_tg", "eps_over_ref", "eps_prime_over_ref", "eps", "eps_prime"),
            rows,
            ctx.digest,
        ),
        _sidecar(ctx, "figure1.json", {
            "summary": summary,
            "normalization": "eps_ref = 2 gamma0 / 3, the white-noise limit at the same one-gate phase variance",
        }),
    ]
    return ExperimentResult(success=True, files=[str(f) for f in files], summary=summary)


def cmd_figure2(ctx: RunContext) -> ExperimentResult:
    s = ctx.config.figure2
    impl = make_implementation(s.implementation)
    fc = compute_F(impl, ctx.config.quad_points)
    lengths = resolve_lengths(s.lengths)
    curve_rows, rate_rows, warnings = [], [], []
    per_tau: List[Dict[str, Any]] = []
    for tau in sorted(s.tau_c_values):
        model = model_for_gamma0(NoiseKind.OU, s.gamma0, tau_c=tau)
        curve = coarse_curve(model, fc, lengths)
        curve_rows.extend((tau, int(m), p) for m, p in zip(curve.lengths, curve.p0))
        window = (int(math.ceil(3 * tau)), int(math.floor(6 * tau)))
        inside = (lengths >= window[0]) & (lengths <= window[1])
        if inside.sum() < 5:
            window = default_window(lengths, ctx.config.fit.tail_fraction)
            warnings.append(f"tau_c={tau}: fewer than 5 lengths in [3 tau_c, 6 tau_c], using {window}")
        fit = fit_exponential(curve, window)
        gamma_0 = initial_rate(coarse_curve(model, fc, [1, 2]))
        early = (int(math.ceil(s.slope_window[0] * tau)), int(math.floor(s.slope_window[1] * tau)))
        try:
            slopes = loglog_slope(curve, early)
            slope = float(np.mean(slopes))
            drift = float(np.max(np.abs(slopes - QUASISTATIC_SLOPE)) / abs(QUASISTATIC_SLOPE))
        except ValidationError as e:
            slope = drift = float("nan")
            warnings.append(f"tau_c={tau}: no early log-log slope on {early}: {e}")
        if drift > SLOPE_DRIFT_LIMIT:
            warnings.append(f"tau_c={tau}: early log-log slope drifts {drift:.0%} from {QUASISTATIC_SLOPE:g} on {early}")
        if fit.rms_residual > TAIL_RMS_LIMIT:
            warnings.append(f"tau_c={tau}: tail fit rms residual {fit.rms_residual:.3g} exceeds {TAIL_RMS_LIMIT:g}")
        rate_rows.append(
            (tau, fit.gamma, fit.gamma_stderr, gamma_0, fit.A, fit.B, fit.rms_residual, window[0], window[1], slope)
        )
        per_tau.append({
            "tau_c_over_tg": tau,
            "gamma_inf": fit.gamma,
            "gamma_0": gamma_0,
            "rms_residual": fit.rms_residual,
            "tail_rms_ok": bool(fit.rms_residual <= TAIL_RMS_LIMIT),
            "early_window": list(early),
            "early_slope": slope,
            "early_slope_drift": drift,
            "early_slope_ok": bool(drift <= SLOPE_DRIFT_LIMIT),
        })
    gamma_inf = [r[1] for r in rate_rows]
    monotone = bool(np.all(np.diff(gamma_inf) < 0))
    if not monotone:
        warnings.append("gamma_inf is not strictly decreasing in tau_c")
    summary = {
        "gamma_inf": gamma_inf,
        "gamma_inf_decreasing": monotone,
        "rms_residual": [p["rms_residual"] for p in per_tau],
        "early_slope": [p["early_slope"] for p in per_tau],
        "early_slope_drift": [p["early_slope_drift"] for p in per_tau],
        "per_tau_c": per_tau,
    }
    files = [
        write_table_csv(ctx.path("figure2_curves.csv"), ("tau_c_over_tg", "m", "p0"), curve_rows, ctx.digest),
        write_table_csv(
            ctx.path("figure2_rates.csv"),
            (
                "tau_c_over_tg", "gamma_inf", "gamma_inf_stderr", "gamma_0", "A", "B", "rms_residual",
                "window_lo", "window_hi", "early_slope",
            ),
            rate_rows,
            ctx.digest,
        ),
        _sidecar(ctx, "figure2.json", {"f_coefficients": _f_summary(fc), "summary": summary}),
    ]
    return ExperimentResult(success=True, files=[str(f) for f in files], summary=summary, warnings=warnings)


def _mc_panel(
    ctx: RunContext, name: str, model: NoiseModel, impl: GateImplementation, lengths: np.ndarray,
    references: Dict[str, DecayCurve], stats: List[tuple], conv_rows: List[tuple],
) -> McResult:
    result = run(_mc_config(ctx, model, impl, lengths), workers=ctx.workers)
    for label, ref in references.items():
        dev = _max_deviation(result.curve, ref)
        stats.append((name, label, dev, dev <= AGREEMENT_STDERR))
    table = convergence_table(result)
    for k, m in enumerate(table.lengths):
        for j, n in enumerate(table.checkpoints):
            conv_rows.append((name, int(m), int(n), table.running[k, j], table.final[k], table.stderr[k]))
    return result


def first_gate_agreement(
    perfect: Dict[str, Any], pulsed: Dict[str, Any], k: float = AGREEMENT_STDERR
) -> Dict[str, Any]:
    """Tail rates of the two first-gate variants agree within k combined standard errors."""
    a, b = perfect.get("tail_fit"), pulsed.get("tail_fit")
    if a is None or b is None:
        return {"rate_difference": None, "combined_stderr": None, "agreement": False}
    difference = abs(a["gamma"] - b["gamma"])
    combined = math.hypot(a["gamma_stderr"], b["gamma_stderr"])
    return {"rate_difference": difference, "combined_stderr": combined, "agreement": bool(difference <= k * combined)}


def cmd_sm_validation(ctx: RunContext) -> ExperimentResult:
    s = ctx.config.sm_validation
    impl = make_implementation(ctx.config.implementation)
    fc = compute_F(impl, ctx.config.quad_points)
    lengths = ctx.config.resolved_lengths()
    stats: List[tuple] = []
    conv_rows: List[tuple] = []
    summary: Dict[str, Any] = {}
    warnings: List[str] = []

    if s.zero_noise_panel:
        zero = run(_mc_config(ctx, NoiseModel.ou(0.0, 1.0), impl, lengths), workers=ctx.workers)
        exact = bool(np.max(np.abs(zero.curve.p0 - 1.0)) < 1e-12)
        stats.append(("zero_noise", "exact", float(np.max(np.abs(zero.curve.p0 - 1.0))), exact))

    for tau in s.tau_c_values:
        model = NoiseModel.ou(s.sigma, tau)
        refs = {"plme": plme_curve(model, impl, lengths), "coarse": coarse_curve(model, fc, lengths)}
        _mc_panel(ctx, f"ou_tau_c={tau:g}", model, impl, lengths, refs, stats, conv_rows)

    for omega_l in s.omega_l_values:
        model = NoiseModel.one_over_f(s.lam, omega_l, s.omega_h)
        refs = {
            "plme": plme_curve(model, impl, lengths),
            "coarse": coarse_curve(model, fc, lengths),
            "sequence_averaged": run_sequence_averaged(model, impl, lengths, ctx.config.mc.n_realizations, seed=ctx.config.seed),
        }
        _mc_panel(ctx, f"one_over_f_omega_l={omega_l:g}", model, impl, lengths, refs, stats, conv_rows)

    if s.first_gate_comparison and s.tau_c_values:
        model = NoiseModel.ou(s.sigma, s.tau_c_values[0])
        pair = {}
        for flag in (True, False):
            curve = run(_mc_config(ctx, model, impl, lengths, perfect_first_gate=flag), workers=ctx.workers).curve
            pair["perfect" if flag else "pulsed"] = fit_summary(curve, ctx)
        pair.update(first_gate_agreement(pair["perfect"], pair["pulsed"]))
        summary["first_gate_comparison"] = pair
        if pair["rate_difference"] is None:
            warnings.append("first-gate comparison skipped: a tail fit failed")
        elif not pair["agreement"]:
            warnings.append(
                "tail rates with a perfect and a pulsed first gate disagree: "
                f"|difference| {pair['rate_difference']:.3g} vs {AGREEMENT_STDERR:g} x {pair['combined_stderr']:.3g}"
            )

    summary["panels"] = [{"panel": p, "reference": r, "max_dev_over_stderr": d, "within_3_stderr": ok} for p, r, d, ok in stats]
    files = [
        write_table_csv(
            ctx.path("sm_validation.csv"), ("panel", "reference", "max_dev_over_stderr", "within_3_stderr"), stats, ctx.digest
        ),
        write_table_csv(
            ctx.path("sm_convergence.csv"), ("panel", "m", "n_sequences", "running_mean", "final_mean", "stderr"),
            conv_rows, ctx.digest,
        ),
        _sidecar(ctx, "sm_validation.json", {"summary": summary, "full_scale": ctx.full_scale}),
    ]
    return ExperimentResult(success=True, files=[str(f) for f in files], summary=summary, warnings=warnings)


def cmd_one_over_f(ctx: RunContext) -> ExperimentResult:
    s = ctx.config.one_over_f
    impl = make_implementation(ctx.config.implementation)
    fc = compute_F(impl, ctx.config.quad_points)
    lengths = ctx.config.resolved_lengths()
    rows, summary, warnings = [], {}, []
    for omega_l in s.omega_l_values:
        model = NoiseModel.one_over_f(s.lam, omega_l, s.omega_h)
        sel = select_method(model, impl, ctx.config.thresholds.coarse, ctx.config.thresholds.weak)
        curves = [
            plme_curve(model, impl, lengths),
            coarse_curve(model, fc, lengths),
            run_sequence_averaged(model, impl, lengths, ctx.config.mc.n_realizations, seed=ctx.config.seed),
        ]
        if s.include_mc:
            curves.append(run(_mc_config(ctx, model, impl, lengths), workers=ctx.workers).curve)
        for c in curves:
            rows.extend((omega_l, int(m), c.method.value, p, e) for m, p, e in zip(c.lengths, c.p0, c.stderr))
        summary[f"{omega_l:g}"] = {
            "selected": sel.method.value,
            "coarse_metric": sel.coarse_metric,
            "weak_metric": sel.weak_metric,
            "warning": sel.warning,
        }
        if sel.warning:
            warnings.append(
                f"omega_l={omega_l:g}: neither approximation is inside its validity regime, "
                f"selected {sel.method.value} as the smaller relative violation"
            )
    files = [
        write_table_csv(ctx.path("one_over_f.csv"), ("omega_l", "m", "method", "p0", "stderr"), rows, ctx.digest),
        _sidecar(ctx, "one_over_f.json", {"selection": summary}),
    ]
    return ExperimentResult(success=True, files=[str(f) for f in files], summary=summary, warnings=warnings)


EXPERIMENTS: Dict[Experiment, Callable[[RunContext], ExperimentResult]] = {
    Experiment.CURVE: cmd_curve,
    Experiment.FCOEF: cmd_fcoef,
    Experiment.FIT: cmd_fit,
    Experiment.COMPARE: cmd_compare,
    Experiment.VALIDATE: cmd_validate,
    Experiment.FIGURE1: cmd_figure1,
    Experiment.FIGURE2: cmd_figure2,
    Experiment.SM_VALIDATION: cmd_sm_validation,
    Experiment.ONE_OVER_F: cmd_one_over_f,
}

_ERROR_KINDS = {2: "config", 3: "numerical", 4: "validation"}


def run_experiment(
    config: RunConfig,
    out_dir: Optional[Path] = None,
    workers: int = 1,
    full_scale: bool = False,
    record: bool = True,
) -> ExperimentResult:
    """Run config.experiment; errors come back on the result instead of being raised."""
    ctx = RunContext(config=config, out_dir=Path(out_dir or config.output_path), workers=workers, full_scale=full_scale)
    name = config.experiment.value
    logger.info("running %s (digest %s, %d workers)", name, ctx.digest[:12], workers)
    try:
        result = EXPERIMENTS[config.experiment](ctx)
    except RbsimError as e:
        code = exit_code_for(e)
        logger.debug("experiment %s failed", name, exc_info=True)
        result = ExperimentResult(
            success=False, error_message=str(e), error_kind=_ERROR_KINDS.get(code, "error"), exit_code=code
        )
    result.experiment = name
    result.config_digest = ctx.digest
    for w in result.warnings:
        logger.warning("%s: %s", name, w)
    if record:
        entry = RunRecord(
            timestamp=datetime.now(timezone.utc).isoformat(),
            experiment=name,
            config_digest=ctx.digest,
            success=result.success,
            files=result.files,
            summary=result.summary,
            warnings=result.warnings,
            error_message=result.error_message,
        )
        try:
            result.run_id = save_run(entry, ctx.out_dir)
        except OSError as e:
            logger.warning("could not record run: %s", e)
    return result
