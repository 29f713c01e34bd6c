import numpy as np
import pytest

from rbsim.analytic import CurveMethod, coarse_curve, markov_exact_curve, plme_curve, quasistatic_exact_curve
from rbsim.clifford import build_group
from rbsim.errors import ValidationError
from rbsim.gate_impl import GateKind, make_implementation
from rbsim.montecarlo import (
    McConfig,
    build_control_table,
    convergence_table,
    converged,
    derive_seed,
    propagate,
    run,
    run_sequence_averaged,
    sequence_gates,
    step_size_audit,
    step_unitaries,
)
from rbsim.noise import NoiseModel
from rbsim.pauli_algebra import pauli_rotation, ptm_distance, unitary_to_ptm


def _config(**overrides):
    base = dict(
        model=NoiseModel.ou(0.1, 0.5),
        impl=make_implementation(GateKind.ZSX),
        lengths=(1, 3),
        n_sequences=8,
        n_noise_per_sequence=2,
        substeps_per_gate=8,
        master_seed=7,
    )
    base.update(overrides)
    return McConfig(**base)


def test_derive_seed():
    assert derive_seed(1, 0, 5, 3) == derive_seed(1, 0, 5, 3)
    seeds = {derive_seed(1, 0, 5, s) for s in range(100)}
    assert len(seeds) == 100
    assert derive_seed(1, 0, 5, 3) != derive_seed(2, 0, 5, 3)
    assert derive_seed(1, 0, 5, 3) != derive_seed(1, 1, 5, 3)


def test_config_validation():
    with pytest.raises(ValidationError):
        _config(n_sequences=0)
    with pytest.raises(ValidationError):
        _config(n_noise_per_sequence=0)
    with pytest.raises(ValidationError):
        _config(substeps_per_gate=4)
    with pytest.raises(ValidationError):
        _config(master_seed=-1)
    with pytest.raises(ValidationError):
        _config(lengths=(3, 1))


@pytest.mark.parametrize("perfect", [True, False])
def test_sequences_compose_to_identity(perfect):
    group = build_group()
    for m in (1, 2, 7):
        for s in range(5):
            g0, pulses = sequence_gates(11, m, s, perfect)
            if perfect:
                assert len(pulses) == m
                assert group.compose_indices([g0, *pulses]) == 0
            else:
                assert g0 is None
                assert len(pulses) == m + 1
                assert group.compose_indices(pulses) == 0


def test_sequence_gates_are_reproducible():
    a = sequence_gates(3, 10, 4, True)
    b = sequence_gates(3, 10, 4, True)
    assert a[0] == b[0]
    np.testing.assert_array_equal(a[1], b[1])


def test_control_table_must_resolve_drives():
    with pytest.raises(ValidationError):
        build_control_table(make_implementation(GateKind.ZSX), 9)
    table = build_control_table(make_implementation(GateKind.U3), 9)
    assert table.n_substeps == 9
    assert table.dt == pytest.approx(1 / 9)


def test_step_unitaries():
    rng = np.random.default_rng(0)
    h = rng.standard_normal((5, 3))
    dt = 0.07
    steps = step_unitaries(h, dt)
    for k in range(5):
        norm = np.linalg.norm(h[k])
        np.testing.assert_allclose(steps[k], pauli_rotation(h[k], 2 * norm * dt), atol=1e-13)
    np.testing.assert_allclose(step_unitaries(np.zeros(3), dt), np.eye(2), atol=1e-15)


@pytest.mark.parametrize("kind", list(GateKind))
def test_noise_free_propagation_reproduces_cliffords(kind):
    impl = make_implementation(kind)
    table = build_control_table(impl, 16)
    group = build_group()
    gates = np.arange(24)[:, None]
    first = np.broadcast_to(np.eye(2, dtype=complex), (24, 2, 2))
    u = propagate(table, first, gates, np.zeros((24, 1, 16)))
    for i in range(24):
        assert ptm_distance(unitary_to_ptm(u[i, 0]), group.ptms[i]) < 1e-10


@pytest.mark.parametrize("perfect", [True, False])
def test_zero_noise_survives(perfect):
    result = run(_config(model=NoiseModel.ou(0.0, 1.0), perfect_first_gate=perfect))
    np.testing.assert_allclose(result.curve.p0, 1.0, atol=1e-12)
    np.testing.assert_allclose(result.curve.stderr, 0.0, atol=1e-12)
    assert result.curve.method is CurveMethod.MONTECARLO


@pytest.mark.parametrize("workers", [1, 4, 8])
def test_run_is_deterministic_across_workers(workers):
    config = _config(n_sequences=60)
    serial = run(config, workers=1)
    parallel = run(config, workers=workers)
    np.testing.assert_array_equal(serial.per_sequence, parallel.per_sequence)
    np.testing.assert_array_equal(serial.curve.p0, parallel.curve.p0)
    np.testing.assert_array_equal(serial.curve.stderr, parallel.curve.stderr)


def test_seed_changes_result():
    a = run(_config(master_seed=1)).curve.p0
    b = run(_config(master_seed=2)).curve.p0
    assert not np.array_equal(a, b)


def test_white_noise_matches_markov():
    gamma = 0.02
    lengths = (1, 5, 10)
    config = McConfig(
        model=NoiseModel.white(gamma),
        impl=make_implementation(GateKind.INSTANT),
        lengths=lengths,
        n_sequences=200,
        n_noise_per_sequence=10,
        substeps_per_gate=8,
        master_seed=5,
    )
    curve = run(config).curve
    want = markov_exact_curve(gamma, lengths).p0
    assert np.all(np.abs(curve.p0 - want) <= 4 * curve.stderr + 2e-3)


def test_step_size_audit_without_noise():
    audit = step_size_audit(_config(model=NoiseModel.ou(0.0, 1.0)))
    assert audit.max_delta < 1e-12
    assert audit.ratio == 0.0
    assert audit.passed
    assert audit.substeps == 8


def test_audit_attached_when_requested():
    result = run(_config(audit=True))
    assert result.audit is not None
    assert result.audit.delta.shape == (2,)
    assert result.warning == (not result.audit.passed)


def test_convergence_table():
    result = run(_config(n_sequences=20))
    table = convergence_table(result)
    assert table.running.shape == (2, table.checkpoints.size)
    assert table.checkpoints[-1] == 20
    np.testing.assert_allclose(table.running[:, -1], result.curve.p0)
    assert converged(result).shape == (2,)
    with pytest.raises(ValidationError):
        convergence_table(result, checkpoints=[0, 5])


def test_sequence_averaged_zero_noise():
    curve = run_sequence_averaged(NoiseModel.ou(0.0, 1.0), make_implementation(GateKind.ZSX), [1, 5], n_realizations=4)
    np.testing.assert_array_equal(curve.p0, 1.0)
    assert curve.method is CurveMethod.SEQUENCE_AVERAGED


def test_sequence_averaged_quasistatic_matches_exact():
    impl = make_implementation(GateKind.ZSX)
    lengths = [1, 10, 50]
    curve = run_sequence_averaged(NoiseModel.quasistatic(0.1), impl, lengths, n_realizations=2000, seed=3)
    want = quasistatic_exact_curve(0.1, impl, lengths).p0
    assert np.all(np.abs(curve.p0 - want) <= 4 * curve.stderr + 1e-6)


def test_sequence_averaged_rejects_unresolved_breakpoints():
    with pytest.raises(ValidationError):
        run_sequence_averaged(NoiseModel.ou(0.1, 1.0), make_implementation(GateKind.ZSX), [1], cells_per_gate=3)


def _ou_against(reference, kind, tau_c, lengths):
    model = NoiseModel.ou(0.05, tau_c)
    impl = make_implementation(kind)
    config = McConfig(
        model=model,
        impl=impl,
        lengths=lengths,
        n_sequences=400,
        n_noise_per_sequence=10,
        substeps_per_gate=16,
        master_seed=11,
    )
    curve = run(config, workers=4).curve
    want = reference(model, impl, lengths).p0
    # slack covers the truncation error of the analytic curve
    return np.abs(curve.p0 - want) <= 3 * curve.stderr + 2e-3


@pytest.mark.slow
@pytest.mark.parametrize("tau_c", [0.5, 2.0])
@pytest.mark.parametrize("kind", [GateKind.ZSX, GateKind.U3])
def test_ou_short_correlation_matches_plme(kind, tau_c):
    assert np.all(_ou_against(plme_curve, kind, tau_c, (1, 10, 40, 100)))


@pytest.mark.slow
@pytest.mark.parametrize("tau_c", [30.0, 100.0])
@pytest.mark.parametrize("kind", [GateKind.ZSX, GateKind.U3])
def test_ou_long_correlation_matches_coarse(kind, tau_c):
    assert np.all(_ou_against(coarse_curve, kind, tau_c, (1, 10, 40, 100)))
