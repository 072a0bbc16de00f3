import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import bond_totals, ipf_by_loops
from qhyst.errors import CapacityError, ContractViolation, StabilityError, UpdateCollapseError, ValidationError
from qhyst.exact import basis_index, kink_indicators
from qhyst.hybrid import (HybridConfig, KinkField, check_time_step, ipf_update, ipf_weight, kinetics_step,
                          run_protocol, with_overrides)
from qhyst.spin_model import DriveProtocol, build_grid, build_ring

densities = st.lists(st.floats(0, 1), min_size=3, max_size=10)


class TestKinetics:
    def test_pure_annihilation_without_field(self):
        field = KinkField([0.5, 0, 0, 0], [0.5, 0, 0, 0])
        out = kinetics_step(field, h=0.0, dt=1.0, omega=0.1)
        assert out.n_plus[0] == pytest.approx(0.5 - 0.1 * 0.25)
        assert out.n_minus[0] == pytest.approx(0.5 - 0.1 * 0.25)
        assert out.winding == pytest.approx(0.0)

    def test_uniform_field_is_stationary_under_advection(self):
        field = KinkField(np.full(6, 0.3), np.zeros(6))
        out = kinetics_step(field, h=0.7, dt=0.5, omega=0.0)
        np.testing.assert_allclose(out.n_plus, 0.3)

    def test_courant_one_is_an_exact_shift(self):
        field = KinkField([1.0, 0, 0, 0, 0], [0, 0, 0, 1.0, 0])
        out = kinetics_step(field, h=1.0, dt=1.0, v0=1.0, omega=0.0)
        assert out.n_plus.tolist() == [0, 1.0, 0, 0, 0]
        assert out.n_minus.tolist() == [0, 0, 1.0, 0, 0]

    def test_negative_field_reverses_motion(self):
        field = KinkField([1.0, 0, 0, 0], [0, 0, 0, 0])
        assert kinetics_step(field, h=-1.0, dt=1.0, omega=0.0).n_plus.tolist() == [0, 0, 0, 1.0]

    def test_cfl_violation(self):
        with pytest.raises(StabilityError) as info:
            kinetics_step(KinkField.zeros(4), h=3.0, dt=0.5)
        assert info.value.ratio == pytest.approx(1.5)

    @settings(max_examples=50)
    @given(densities, st.floats(-1, 1), st.floats(0.01, 1))
    def test_winding_conserved_without_annihilation(self, values, h, dt):
        field = KinkField(values, values[::-1])
        out = kinetics_step(field, h=h, dt=dt, omega=0.0)
        assert out.winding == pytest.approx(field.winding, abs=1e-12)
        assert out.mass == pytest.approx(field.mass, abs=1e-12)

    @given(densities, st.floats(-1, 1))
    def test_stays_in_unit_interval(self, values, h):
        out = kinetics_step(KinkField(values, values), h=h, dt=1.0, omega=1.0)
        assert np.all((0 <= out.total) & (out.n_plus <= 1) & (out.n_minus <= 1))

    def test_density_bounds_enforced(self):
        with pytest.raises(ContractViolation):
            KinkField([1.2], [0.0])


def _halving_state():
    psi = np.zeros(16, complex)
    psi[basis_index([1, 1, 1, 1])] = 1
    psi[basis_index([1, 1, -1, -1])] = 1
    return psi / np.sqrt(2)


class TestIpf:
    ring = build_ring(4)
    indicators = kink_indicators(ring)

    def test_identity_at_zero_weight(self):
        psi = _halving_state()
        target = KinkField([0.3, 0.1, 0.2, 0.0], [0.0, 0.0, 0.1, 0.4])
        measured = KinkField([0.0, 0.5, 0.0, 0.0], [0.0, 0.0, 0.0, 0.5])
        out = ipf_update(psi, target, measured, self.indicators, alpha=0.0)
        assert np.array_equal(out, psi)

    def test_identity_when_target_is_measured(self):
        psi = _halving_state()
        field = KinkField([0.0, 0.5, 0.0, 0.0], [0.0, 0.0, 0.0, 0.5])
        np.testing.assert_array_equal(ipf_update(psi, field, field, self.indicators), psi)

    def test_halving_example_matches_loop_oracle(self):
        psi = _halving_state()
        measured = bond_totals(psi)
        np.testing.assert_allclose(measured, [0, 0.5, 0, 0.5])
        target = measured / 2
        out = ipf_update(psi, target, measured, self.indicators, alpha=1.0, epsilon_floor=1e-6)
        ref = ipf_by_loops(psi, target, measured, alpha=1.0, eps=1e-6)
        np.testing.assert_allclose(out, ref, atol=1e-14)
        # two kinked bonds, each scaled by 1/2: weights 1 : 1/16
        assert bond_totals(out)[1] == pytest.approx(1 / 17)

    @settings(max_examples=25, deadline=None)
    @given(st.lists(st.floats(0.01, 1), min_size=4, max_size=4), st.floats(0.1, 2), st.integers(0, 2 ** 32 - 1))
    def test_totals_form_matches_oracle(self, target, alpha, seed):
        rng = np.random.default_rng(seed)
        psi = rng.normal(size=16) + 1j * rng.normal(size=16)
        psi /= np.linalg.norm(psi)
        measured = bond_totals(psi)
        out = ipf_update(psi, np.array(target), measured, self.indicators, alpha=alpha, epsilon_floor=1e-6)
        np.testing.assert_allclose(out, ipf_by_loops(psi, target, measured, alpha, 1e-6), atol=1e-12)

    def test_moves_single_kink_marginal_toward_target(self):
        # one bond, one kink species: the update is an exponential tilt, which
        # lowers the KL divergence to the target marginal
        psi = _halving_state()
        measured = KinkField([0, 0.5, 0, 0], [0, 0, 0, 0.5])
        target = KinkField([0, 0.2, 0, 0], [0, 0, 0, 0.5])
        out = ipf_update(psi, target, measured, self.indicators, alpha=0.5)
        new = bond_totals(out)[1]

        def kl(p, q):
            return p * np.log(p / q) + (1 - p) * np.log((1 - p) / (1 - q))

        assert kl(0.2, new) < kl(0.2, 0.5)
        assert 0.2 <= new < 0.5

    def test_phases_preserved(self):
        psi = _halving_state() * np.exp(1j * np.arange(16))
        measured = KinkField([0, 0.5, 0, 0], [0, 0, 0, 0.5])
        target = KinkField([0, 0.3, 0, 0], [0, 0, 0, 0.3])
        out = ipf_update(psi, target, measured, self.indicators, alpha=1.0)
        nz = np.abs(psi) > 0
        np.testing.assert_allclose(np.angle(out[nz]), np.angle(psi[nz]))

    def test_collapse(self):
        psi = np.zeros(16, complex)
        psi[basis_index([1, 1, -1, -1])] = 1
        measured = KinkField([0, 1, 0, 0], [0, 0, 0, 1])
        with pytest.raises(UpdateCollapseError):
            ipf_update(psi, KinkField.zeros(4), measured, self.indicators, alpha=1e4, epsilon_floor=1e-300)

    def test_adaptive_weight(self):
        assert ipf_weight([0, 0], [0, 0], alpha0=0.05) == 0.05
        assert ipf_weight([1, 0], [0, 0], alpha0=0.05, kappa=0.5) == pytest.approx(0.05 + 0.5 / 4)


def _config(**kw):
    base = dict(lattice=build_ring(4), protocol=DriveProtocol(3.0, 120.0), gamma=1 / 7.87, dt=0.02, seed=3)
    base.update(kw)
    return HybridConfig(**base)


class TestRunProtocol:
    def test_deterministic(self):
        a = run_protocol(_config())
        b = run_protocol(_config())
        for col in ("mz", "kink_total", "energy"):
            assert np.array_equal(getattr(a, col), getattr(b, col))

    def test_trace_shape(self):
        cfg = _config(record_stride=10)
        trace = run_protocol(cfg)
        assert len(trace) == cfg.n_steps // 10 + 1
        assert trace.segments[0] == "ramp" and trace.segments[-1] == "forward"
        trace.validate()
        assert trace.mz[0] == 1.0

    def test_unitary_only_is_seed_independent(self):
        a = run_protocol(_config(mode="unitary-only", seed=1))
        b = run_protocol(_config(mode="unitary-only", seed=2))
        assert np.array_equal(a.mz, b.mz)

    def test_populations_recorded(self):
        trace = run_protocol(_config(record_populations=True, record_stride=50))
        assert len(trace.populations) == len(trace)
        assert np.allclose([p.sum() for p in trace.populations], 1.0)

    def test_observer_sees_every_record(self):
        seen = []
        trace = run_protocol(_config(record_stride=100), observer=lambda t, h, seg, psi: seen.append(seg))
        assert seen == trace.segments

    def test_partial_trace_on_error(self):
        def boom(t, h, seg, psi):
            if t > 10:
                raise StabilityError("forced", ratio=2.0)

        with pytest.raises(StabilityError) as info:
            run_protocol(_config(record_stride=50), observer=boom)
        trace = info.value.trace
        assert trace.partial
        assert 0 < len(trace) < _config().n_steps

    def test_coarse_step_aborts(self):
        with pytest.raises(StabilityError):
            check_time_step(_config(dt=5.0, protocol=DriveProtocol(3.0, 10.0)))

    def test_moderate_step_warns(self):
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            check_time_step(_config(dt=0.1, protocol=DriveProtocol(3.0, 60.0)))
        assert any(issubclass(w.category, RuntimeWarning) for w in caught)

    def test_capacity(self):
        with pytest.raises(CapacityError):
            run_protocol(_config(lattice=build_ring(16), mode="unitary-only"))

    def test_hybrid_requires_ring(self):
        with pytest.raises(ValidationError):
            _config(lattice=build_grid(2, 2))

    def test_overrides(self):
        assert with_overrides(_config(), gamma=0.5).gamma == 0.5

    def test_hybrid_reverses_where_unitary_does_not(self):
        cfg = _config(protocol=DriveProtocol(3.0, 600.0), dt=0.05)
        hyb = run_protocol(cfg)
        uni = run_protocol(with_overrides(cfg, mode="unitary-only"))
        back = hyb.mask("backward")
        assert hyb.mz[back][-1] < -0.9
        assert abs(uni.mz[back][-1]) < 0.9
