"""
Invariant suite run by `rbsim validate`.

Every check returns a CheckResult instead of raising; an exception inside a
check counts as a failure and its message becomes the detail.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Dict, Iterable, List, Optional

import numpy as np

from . import analytic, montecarlo
from .clifford import twirl_coefficients_ptm, twirl_first_moment, twirl_second_moment
from .cumulant_check import averaged_product, factorization_residual, second_cumulant_structure
from .errors import InvariantFailure
from .gate_impl import (
    GateKind,
    compute_F,
    f_adjacent_gate,
    f_same_gate,
    make_implementation,
    overlap,
    overlap_adjacent_grid,
    overlap_same_grid,
)
from .noise import NoiseModel
from .pauli_algebra import IDENTITY

logger = logging.getLogger(__name__)

DETERMINISM_WORKERS = (1, 4, 8)


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def _random_operator(rng: np.random.Generator) -> np.ndarray:
    return rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))


def check_twirl_identities() -> CheckResult:
    rng = np.random.Generator(np.random.Philox(7))
    worst = 0.0
    for _ in range(100):
        a, b = _random_operator(rng), _random_operator(rng)
        first = twirl_first_moment(a)
        worst = max(worst, float(np.max(np.abs(first - 0.5 * np.trace(a) * IDENTITY))))
        second = twirl_second_moment(a, b).ptm
        worst = max(worst, float(np.max(np.abs(second - twirl_coefficients_ptm(a, b)))))
    return CheckResult("twirl_identities", worst < 1e-12, f"max deviation {worst:.3g}")


def check_markov_closed_form() -> CheckResult:
    impl = make_implementation(GateKind.ZSX)
    m = np.arange(1, 1001)
    worst = 0.0
    for gamma in (1e-3, 1e-2, 1e-1):
        got = analytic.plme_curve(NoiseModel.white(gamma), impl, m).p0
        want = analytic.markov_exact_curve(gamma, m).p0
        worst = max(worst, float(np.max(np.abs(got - want))))
    return CheckResult("markov_closed_form", worst < 1e-12, f"max deviation {worst:.3g}")


def check_quasistatic_equivalence() -> CheckResult:
    m = np.arange(1, 65)
    worst = 0.0
    for kind in GateKind:
        fc = compute_F(kind)
        model = NoiseModel.quasistatic(0.05)
        got = analytic.coarse_curve(model, fc, m).p0
        want = analytic.quasistatic_exact_curve(model.sigma, fc, m).p0
        worst = max(worst, float(np.max(np.abs(got - want) / want)))
    return CheckResult("quasistatic_equivalence", worst < 1e-10, f"max relative deviation {worst:.3g}")


def check_instant_f_coefficients() -> CheckResult:
    fc = compute_F(GateKind.INSTANT)
    ok = abs(fc.F_curr - 1.0) < 1e-8 and abs(fc.F_prev) < 1e-8
    return CheckResult("instant_f_coefficients", ok, f"F_curr={fc.F_curr:.12g} F_prev={fc.F_prev:.3g}")


def check_overlap_reduction() -> CheckResult:
    worst = 0.0
    for kind in (GateKind.ZSX, GateKind.U3):
        impl = make_implementation(kind)
        for t1, t2 in ((0.75, 0.25), (0.4, 0.1), (1.0, 0.5)):
            worst = max(worst, abs(float(overlap_same_grid(impl, t1, t2)) - f_same_gate(impl, t1, t2)))
            worst = max(worst, abs(float(overlap_adjacent_grid(impl, t1, t2)) - f_adjacent_gate(impl, t1, t2)))
    return CheckResult("overlap_reduction", worst < 1e-12, f"max deviation {worst:.3g}")


def check_first_moment() -> CheckResult:
    impl = make_implementation(GateKind.ZSX)
    worst = max(float(np.max(np.abs(averaged_product([t], impl).ptm))) for t in (0.3, 1.7, 2.5))
    return CheckResult("first_moment_vanishes", worst < 1e-12, f"max entry {worst:.3g}")


def check_second_cumulant() -> CheckResult:
    worst_coef, worst_res = 0.0, 0.0
    for kind in (GateKind.ZSX, GateKind.U3):
        impl = make_implementation(kind)
        for t2, t1 in ((0.75, 0.25), (1.6, 0.7), (0.5, 0.5)):
            coef, res = second_cumulant_structure(t2, t1, impl)
            worst_coef = max(worst_coef, abs(coef - overlap(impl, t2, t1) / 3.0))
            worst_res = max(worst_res, res)
    ok = worst_coef < 1e-10 and worst_res < 1e-12
    return CheckResult("second_cumulant_structure", ok, f"coefficient {worst_coef:.3g}, residual {worst_res:.3g}")


def check_factorization() -> CheckResult:
    worst = 0.0
    for kind in (GateKind.ZSX, GateKind.U3):
        worst = max(worst, factorization_residual(3.5, 1.2, 0.3, make_implementation(kind)))
    return CheckResult("moment_factorization", worst < 1e-12, f"max residual {worst:.3g}")


def check_determinism() -> CheckResult:
    config = montecarlo.McConfig(
        model=NoiseModel.ou(0.1, 0.5),
        impl=make_implementation(GateKind.ZSX),
        lengths=(1, 3),
        n_sequences=60,
        n_noise_per_sequence=2,
        substeps_per_gate=8,
        master_seed=1234,
    )
    runs = {w: montecarlo.run(config, workers=w).per_sequence for w in DETERMINISM_WORKERS}
    differ = [w for w, r in runs.items() if not np.array_equal(r, runs[1])]
    ok = not differ
    detail = f"bit-identical at workers {list(runs)}" if ok else f"workers {differ} differ from the serial run"
    return CheckResult("determinism", ok, detail)


CHECKS: Dict[str, Callable[[], CheckResult]] = {
    "twirl_identities": check_twirl_identities,
    "markov_closed_form": check_markov_closed_form,
    "quasistatic_equivalence": check_quasistatic_equivalence,
    "instant_f_coefficients": check_instant_f_coefficients,
    "overlap_reduction": check_overlap_reduction,
    "first_moment_vanishes": check_first_moment,
    "second_cumulant_structure": check_second_cumulant,
    "moment_factorization": check_factorization,
    "determinism": check_determinism,
}


def run_suite(names: Optional[Iterable[str]] = None) -> List[CheckResult]:
    selected = list(names) if names is not None else list(CHECKS)
    results = []
    for name in selected:
        try:
            result = CHECKS[name]()
        except Exception as e:
            result = CheckResult(name, False, f"{type(e).__name__}: {e}")
        logger.info("%-28s %s  %s", name, "PASS" if result.passed else "FAIL", result.detail)
        results.append(result)
    return results


def require_passing(report: List[CheckResult]) -> None:
    failed = [c.name for c in report if not c.passed]
    if failed:
        raise InvariantFailure(f"{len(failed)} invariant check(s) failed: {', '.join(failed)}")
