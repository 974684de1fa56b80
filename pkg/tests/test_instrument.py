import numpy as np
import pytest

from dqe import agsp, instrument as im, pauli
from dqe.errors import InvalidAgspError, ParameterError, SingularFixedPointError

from oracles import global_run_success_probs, markov_expected_absorption


def _rand_state(rng, d):
    psi = rng.normal(size=d) + 1j * rng.normal(size=d)
    return psi / np.linalg.norm(psi)


def _rand_density(rng, d):
    a = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    rho = a @ a.conj().T
    return rho / np.trace(rho).real


class TestMakeInstrument:
    def test_projective_limit(self):
        p = np.diag([1.0, 0.0]).astype(complex)
        inst = im.make_instrument(p, 1.0, im.Resampler.global_mixed(2))
        assert np.allclose(inst.e0, p)
        assert np.allclose(inst.e1, np.eye(2) - p)

    def test_trivial_limit(self):
        p = np.diag([1.0, 0.0]).astype(complex)
        inst = im.make_instrument(p, 0.0, im.Resampler.global_mixed(2))
        assert np.allclose(inst.e0, np.eye(2))
        assert np.allclose(inst.e1, 0.0)

    def test_weighted_weak_eigenvalues(self):
        p = np.diag([1.0, 0.0]).astype(complex)
        inst = im.make_instrument(0.5 * p, 0.2, im.Resampler.global_mixed(2))
        assert sorted(np.linalg.eigvalsh(inst.e0)) == pytest.approx([0.8, 0.9])
        expected = sorted([np.sqrt(1 - 0.81), np.sqrt(1 - 0.64)])
        assert sorted(np.linalg.eigvalsh(inst.e1)) == pytest.approx(expected)

    def test_completeness(self, heis3, spec3):
        a = agsp.agsp_linear(heis3, spec3)
        for eps in (0.1, 0.5, 1.0):
            inst = im.make_instrument(a.operator, eps, im.Resampler.global_mixed(8))
            comp = inst.e0.conj().T @ inst.e0 + inst.e1.conj().T @ inst.e1
            assert np.abs(comp - np.eye(8)).max() <= 1e-10
            assert np.linalg.norm(inst.e0, 2) <= 1.0 + 1e-12

    def test_overscaled_rejected(self):
        with pytest.raises(InvalidAgspError):
            im.make_instrument(2.0 * np.eye(2), 1.0, im.Resampler.global_mixed(2))

    def test_eps_out_of_range(self):
        with pytest.raises(ParameterError):
            im.make_instrument(np.eye(2), 1.5, im.Resampler.global_mixed(2))


class TestApplySampled:
    def test_projective_in_range(self, rng):
        p = np.diag([1.0, 0.0, 0.0, 0.0]).astype(complex)
        inst = im.make_instrument(p, 1.0, im.Resampler.global_mixed(4))
        psi = np.array([1.0, 0, 0, 0], dtype=complex)
        for _ in range(10):
            out, new = im.apply_sampled(inst, psi, rng)
            assert out == 0
            assert np.allclose(new, psi)

    def test_projective_orthogonal(self, rng):
        p = np.diag([1.0, 0.0]).astype(complex)
        inst = im.make_instrument(p, 1.0, im.Resampler.global_mixed(2))
        psi = np.array([0.0, 1.0], dtype=complex)
        out, new = im.apply_sampled(inst, psi, rng)
        assert out == 1

    def test_weak_z_on_plus_statistics(self, rng):
        # P(0) on |+> from 2x2 arithmetic, checked against 1e5 samples
        eps = 0.2
        pi = np.diag([0.0, 1.0]).astype(complex)  # ground of +Z
        inst = im.make_instrument(pi, eps, im.Resampler.global_mixed(2))
        plus = np.array([1.0, 1.0], dtype=complex) / np.sqrt(2)
        p0 = float(np.vdot(inst.e0 @ plus, inst.e0 @ plus).real)
        n = 100_000
        hits = sum(im.apply_sampled(inst, plus, rng)[0] == 0 for _ in range(n))
        sigma = np.sqrt(p0 * (1 - p0) / n)
        assert abs(hits / n - p0) <= 3 * sigma

    def test_local_resampler_unravelling(self, rng):
        # ensemble of pure-state updates reproduces the channel on average
        table_qubits = (0,)
        p = np.diag([0.3, 0.3, 0.8, 0.8]).astype(complex)
        inst = im.make_instrument(
            p, 0.7, im.Resampler.local_mixed(table_qubits), support=table_qubits
        )
        psi = _rand_state(rng, 4)
        rho0 = np.outer(psi, psi.conj())
        t0 = im.transfer_of_instrument_success(inst).matrix
        t1 = im.transfer_of_instrument_failure(inst, 2).matrix
        expected = im.unvec((t0 + t1) @ im.vec(rho0))
        n = 40_000
        acc = np.zeros((4, 4), dtype=complex)
        for _ in range(n):
            _, new = im.apply_sampled(inst, psi, rng, num_qubits=2)
            acc += np.outer(new, new.conj())
        acc /= n
        assert np.abs(acc - expected).max() <= 0.02


class TestTransfer:
    def test_identity_kraus(self):
        t = im.transfer_of_kraus([np.eye(3)])
        assert np.allclose(t.matrix, np.eye(9))
        assert t.trace_preserving

    def test_x_moves_populations(self):
        x = pauli.PauliString("X").to_matrix()
        t = im.transfer_of_kraus([x])
        out = t.apply(np.diag([1.0, 0.0]).astype(complex))
        assert np.allclose(out, np.diag([0.0, 1.0]))

    def test_diagonal_kraus(self):
        k = np.diag([0.9, 0.3]).astype(complex)
        t = im.transfer_of_kraus([k])
        assert np.allclose(np.diag(t.matrix).real, [0.81, 0.27, 0.27, 0.09])

    def test_round_trip_and_action(self, rng):
        rho = _rand_density(rng, 4)
        assert np.abs(im.unvec(im.vec(rho)) - rho).max() == 0.0
        ops = [rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4)) * 0.3 for _ in range(3)]
        ops = [o / (3 * np.linalg.norm(o, 2)) for o in ops]
        t = im.transfer_of_kraus(ops)
        direct = sum(o @ rho @ o.conj().T for o in ops)
        assert np.abs(t.apply(rho) - direct).max() <= 1e-12

    def test_spectral_radius_trace_non_increasing(self, heis2, spec2):
        a = agsp.agsp_linear(heis2, spec2)
        inst = im.make_instrument(a.operator, 0.5, im.Resampler.global_mixed(4))
        t0 = im.transfer_of_instrument_success(inst)
        radius = np.abs(np.linalg.eigvals(t0.matrix)).max()
        assert radius <= 1.0 + 1e-9

    def test_failure_transfer_global_cases(self):
        d = 4
        zero = np.zeros((d, d), dtype=complex)
        inst = im.Instrument(zero, np.eye(d), im.Resampler.global_mixed(d))
        t1 = im.transfer_of_instrument_failure(inst)
        rho = np.diag([1.0, 0, 0, 0]).astype(complex)
        assert np.abs(t1.apply(rho) - np.eye(d) / d).max() <= 1e-12

    def test_failure_probability_zero_on_top_eigenspace(self):
        p = np.diag([1.0, 0.0]).astype(complex)
        inst = im.make_instrument(p, 1.0, im.Resampler.global_mixed(2))
        t1 = im.transfer_of_instrument_failure(inst)
        rho = np.diag([1.0, 0.0]).astype(complex)
        assert np.trace(t1.apply(rho)).real <= 1e-12

    def test_sum_trace_preserving(self, heis2, spec2):
        a = agsp.agsp_linear(heis2, spec2)
        inst = im.make_instrument(a.operator, 0.5, im.Resampler.global_mixed(4))
        t0 = im.transfer_of_instrument_success(inst).matrix
        t1 = im.transfer_of_instrument_failure(inst).matrix
        row = im.trace_row(4)
        assert np.abs(row @ (t0 + t1) - row).max() <= 1e-10

    def test_local_failure_trace_preserving_sum(self, heis3, spec3):
        a = agsp.agsp_linear(heis3, spec3)
        f = a.local_factors[0]
        inst = im.make_instrument(
            f.weight * f.operator, 0.3, im.Resampler.local_mixed(f.support), support=f.support
        )
        t0 = im.transfer_of_instrument_success(inst).matrix
        t1 = im.transfer_of_instrument_failure(inst, 3).matrix
        row = im.trace_row(8)
        assert np.abs(row @ (t0 + t1) - row).max() <= 1e-10


class TestFixedPoint:
    def test_closed_form_matches_iteration(self):
        k = np.diag([0.9, 0.3]).astype(complex)
        rho = im.fixed_point_direct(k)
        raw = np.array([1 / 0.19, 1 / 0.91])
        assert np.allclose(np.diag(rho).real, raw / raw.sum())
        channel = im.global_channel_transfer(k)
        rho_it = im.fixed_point_iterate(channel, tol=1e-12)
        assert im.trace_distance(rho, rho_it) <= 1e-8
        assert im.trace_distance(channel.apply(rho), rho) <= 1e-9

    def test_zero_and_scalar_agsp(self):
        assert np.allclose(im.fixed_point_direct(np.zeros((4, 4))), np.eye(4) / 4)
        assert np.allclose(im.fixed_point_direct(0.5 * np.eye(4)), np.eye(4) / 4)

    def test_singular_refused(self):
        with pytest.raises(SingularFixedPointError):
            im.fixed_point_direct(np.diag([1.0, 0.3]).astype(complex))

    def test_uniqueness_from_random_starts(self, rng):
        k = np.diag([0.8, 0.5, 0.2, 0.6]).astype(complex)
        channel = im.global_channel_transfer(k)
        ref = im.fixed_point_iterate(channel, tol=1e-12)
        for _ in range(5):
            rho0 = _rand_density(rng, 4)
            rho = im.fixed_point_iterate(channel, tol=1e-12, rho0=rho0)
            assert im.trace_distance(rho, ref) <= 1e-7

    def test_block_structure(self, rng):
        # Pi block eigenvalues >= 1/(1-Gamma), complement <= 1/(1-Delta),
        # in units of the normalization constant c
        q, _ = np.linalg.qr(rng.normal(size=(8, 8)) + 1j * rng.normal(size=(8, 8)))
        vals = np.array([0.9, 0.85, 0.3, 0.25, 0.2, 0.15, 0.1, 0.05])
        k = (q * vals) @ q.conj().T
        pi = q[:, :2] @ q[:, :2].conj().T
        params = agsp.verify_agsp(k, pi)
        rho = im.fixed_point_direct(k)
        c = 1.0 / np.trace(np.linalg.inv(np.eye(8) - k @ k)).real
        x0 = q[:, :2].conj().T @ rho @ q[:, :2] / c
        xperp = q[:, 2:].conj().T @ rho @ q[:, 2:] / c
        assert np.linalg.eigvalsh(x0).min() >= 1.0 / (1.0 - params.gamma) - 1e-8
        assert np.linalg.eigvalsh(xperp).max() <= 1.0 / (1.0 - params.delta) + 1e-8

    def test_chebyshev_fixed_point_bound(self, heis2, spec2):
        a = agsp.agsp_chebyshev(spec2, 3)
        scale = 1.0 - spec2.degeneracy / spec2.dimension
        k = scale * a.operator
        rho = im.fixed_point_direct(k)
        overlap = np.trace(spec2.ground_projector @ rho).real
        delta_f = 4 * np.exp(-4 * 3 * np.sqrt(spec2.gap / (spec2.norm - spec2.lambda0)))
        eps_c = spec2.degeneracy / spec2.dimension
        bound = 1.0 - eps_c / (1.0 - delta_f) * (spec2.dimension / spec2.degeneracy - 1.0)
        assert overlap >= bound - 1e-9


class TestSweepTransfers:
    def test_product_sweep_trace_preserving(self, heis3, spec3):
        a = agsp.agsp_linear(heis3, spec3)
        insts = [
            im.make_instrument(
                f.weight * f.operator, 0.2, im.Resampler.local_mixed(f.support), support=f.support
            )
            for f in a.local_factors
        ]
        t0, t1 = im.sweep_transfer_product(insts, 3)
        row = im.trace_row(8)
        assert np.abs(row @ (t0.matrix + t1.matrix) - row).max() <= 1e-9

    def test_mixture_sweep_trace_preserving(self, heis2, spec2):
        a = agsp.agsp_linear(heis2, spec2)
        insts = [
            im.make_instrument(
                f.weight * f.operator, 0.2, im.Resampler.global_mixed(4), support=f.support
            )
            for f in a.local_factors
        ]
        t0, t1 = im.sweep_transfer_mixture(insts, 2)
        row = im.trace_row(4)
        assert np.abs(row @ (t0.matrix + t1.matrix) - row).max() <= 1e-9


class TestCustomResampler:
    def test_completeness_enforced(self):
        with pytest.raises(ParameterError):
            im.Resampler.custom([0.5 * np.eye(2)])

    def test_unitary_custom_resampler(self, rng):
        x = pauli.PauliString("X").to_matrix()
        res = im.Resampler.custom([x])
        t = im.resampler_transfer(res, 1)
        assert t.trace_preserving
        psi = np.array([1.0, 0.0], dtype=complex)
        new = im._resample_pure(psi, res, rng, 1)
        assert np.allclose(new, [0.0, 1.0])

    def test_min_support_sampling(self, rng):
        # the global maximally mixed map honestly declares mu = 1/D
        res = im.Resampler.global_mixed(4)
        assert res.min_support == pytest.approx(0.25)
        im.validate_min_support(res, 2, rng)
        # a unitary resampler with a dishonest mu is rejected
        x = pauli.PauliString("XI").to_matrix()
        bad = im.Resampler.custom([x], min_support=0.1)
        with pytest.raises(ParameterError):
            im.validate_min_support(bad, 2, rng)


class TestMarkovOracleAgreement:
    def test_projector_agsp_run_chain(self):
        # the absorbing run-length chain is an independent route to E(tau)
        k = np.diag([1.0, 0.0]).astype(complex)
        probs = global_run_success_probs(k, 3)
        assert probs[0] == pytest.approx(0.5)
        assert markov_expected_absorption(probs) == pytest.approx(4.0, abs=1e-12)

    def test_weak_diag_run_chain(self):
        from dqe import analytics as an

        k = np.diag([1.0, 0.5]).astype(complex)
        probs = global_run_success_probs(k, 1)
        assert markov_expected_absorption(probs) == pytest.approx(1.6, abs=1e-12)
        assert an.expected_tau_global(k, 1) == pytest.approx(1.6, abs=1e-12)
