import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qhyst.errors import GaugeInfeasibleError, InvalidLatticeError, OutOfRangeError, ScheduleError, ValidationError
from qhyst.exact import all_up_state, basis_spins, build_hamiltonian, eigendecompose, observe
from qhyst.spin_model import (DriveProtocol, LatticeSpec, Schedule, UnitSystem, apply_afm_gauge, build_grid,
                              build_ring, device_energies, drive_integral, drive_value, schedule_lookup)


class TestLattices:
    def test_ring_of_four(self):
        ring = build_ring(4, 1)
        assert ring.n_spins == 4
        assert {(a, b) for a, b, _ in ring.bonds} == {(0, 1), (1, 2), (2, 3), (3, 0)}
        assert all(j == 1 for *_, j in ring.bonds)
        assert ring.local_fields == (1.0,) * 4

    def test_hundred_site_ring(self):
        assert build_ring(100, 1).n_bonds == 100

    @pytest.mark.parametrize("n", [0, 1])
    def test_degenerate_ring(self, n):
        with pytest.raises(InvalidLatticeError):
            build_ring(n, 1)

    def test_large_grid_counts(self):
        grid = build_grid(25, 25, 1)
        assert grid.n_spins == 625
        assert grid.n_bonds == 1200

    def test_smallest_grid(self):
        assert build_grid(2, 2, 1).n_bonds == 4

    def test_degenerate_grid(self):
        with pytest.raises(InvalidLatticeError):
            build_grid(1, 5, 1)

    @given(st.integers(2, 9), st.integers(2, 9))
    def test_grid_bond_formula(self, w, h):
        assert build_grid(w, h).n_bonds == w * (h - 1) + h * (w - 1)

    def test_duplicate_bond_rejected(self):
        with pytest.raises(InvalidLatticeError):
            LatticeSpec(3, ((0, 1, 1.0), (1, 0, 1.0)), (1, 1, 1), ((0, 0), (1, 0), (2, 0)))

    def test_self_bond_rejected(self):
        with pytest.raises(InvalidLatticeError):
            LatticeSpec(2, ((1, 1, 1.0),), (1, 1), ((0, 0), (1, 0)))

    def test_field_length_checked(self):
        with pytest.raises(InvalidLatticeError):
            LatticeSpec(2, ((0, 1, 1.0),), (1,), ((0, 0), (1, 0)))


class TestGauge:
    def test_definition(self):
        gauged = apply_afm_gauge(build_ring(4, 1))
        assert all(j == -1 for *_, j in gauged.bonds)
        assert gauged.local_fields == (1, -1, 1, -1)

    def test_odd_ring(self):
        with pytest.raises(GaugeInfeasibleError):
            apply_afm_gauge(build_ring(3, 1))

    def test_ground_state_magnetization_matches(self):
        ring = build_ring(4, 1)
        gauged = apply_afm_gauge(ring)
        values = []
        for lattice in (ring, gauged):
            spectrum = eigendecompose(build_hamiltonian(lattice, 0.1, 0.5))
            values.append(observe(spectrum.vectors[:, 0], lattice).m_z)
        assert values[1] == pytest.approx(values[0], abs=1e-10)

    @settings(max_examples=30, deadline=None)
    @given(st.sampled_from([2, 4, 6]), st.data())
    def test_readout_involution_on_product_states(self, n, data):
        k = data.draw(st.integers(0, 2 ** n - 1))
        ring = build_ring(n, 1)
        gauged = apply_afm_gauge(ring)
        # the gauge image of basis state k flips the odd sites
        flip = sum(1 << (n - 1 - i) for i in range(n) if i % 2)
        psi = np.zeros(2 ** n, complex)
        psi[k] = 1
        image = np.zeros(2 ** n, complex)
        image[k ^ flip] = 1
        direct = observe(psi, ring, build_hamiltonian(ring, 0.0, 0.3))
        via = observe(image, gauged, build_hamiltonian(gauged, 0.0, 0.3))
        assert via.m_z == pytest.approx(direct.m_z)
        assert via.energy == pytest.approx(direct.energy)
        np.testing.assert_allclose(via.kinks_plus, direct.kinks_plus)
        np.testing.assert_allclose(via.kinks_minus, direct.kinks_minus)


class TestSchedule:
    table = Schedule.from_rows([(0.0, 4.0, 0.5), (0.5, 2.0, 1.0), (1.0, 1.0, 3.0)])

    def test_exact_at_rows(self):
        assert schedule_lookup(self.table, 0.5) == (2.0, 1.0)

    def test_linear_midpoint(self):
        assert schedule_lookup(self.table, 0.75) == pytest.approx((1.5, 2.0))

    @pytest.mark.parametrize("s", [1.5, -0.1])
    def test_out_of_range(self, s):
        with pytest.raises(OutOfRangeError):
            schedule_lookup(self.table, s)

    @pytest.mark.parametrize("rows", [
        [(0.0, 1.0, 2.0), (0.5, 2.0, 3.0)],   # A increasing
        [(0.0, 2.0, 3.0), (0.5, 1.0, 2.0)],   # B decreasing
        [(0.5, 2.0, 1.0), (0.5, 1.0, 2.0)],   # s repeated
    ])
    def test_monotonicity_enforced(self, rows):
        with pytest.raises(ScheduleError):
            Schedule.from_rows(rows)

    @given(st.floats(0, 1))
    def test_lookup_monotone(self, s):
        a, b = schedule_lookup(self.table, s)
        a2, b2 = schedule_lookup(self.table, min(1.0, s + 0.01))
        assert a2 <= a + 1e-12 and b2 >= b - 1e-12

    def test_device_mapping(self):
        gamma, j, h = device_energies(self.table, 0.5, gamma_prime=1.0, j_prime=1.0, h_prime=2.0)
        assert (gamma, j, h) == (1.0, 0.5, 1.0)


class TestDrive:
    p = DriveProtocol(h_max=2.0, t_total=10.0)

    def test_ramp_end(self):
        assert drive_value(self.p, 2.0)[0] == pytest.approx(2.0)

    def test_midpoint_of_backward_sweep(self):
        h, hdot = drive_value(self.p, 4.0)
        assert h == pytest.approx(0.0, abs=1e-12)
        assert hdot == pytest.approx(-5 * 2.0 / 10.0)

    def test_final_point(self):
        h, hdot = drive_value(self.p, 10.0)
        assert h == pytest.approx(2.0)
        assert hdot == pytest.approx(5 * 2.0 / 10.0)

    def test_left_continuous_rate(self):
        # t = t_total/5 belongs to the ramp
        assert drive_value(self.p, 2.0)[1] == pytest.approx(1.0)
        assert self.p.segment_tag(2.0) == "ramp"

    def test_continuity(self):
        for edge in self.p.boundaries[:-1]:
            below = drive_value(self.p, edge * (1 - 1e-14))[0]
            above = drive_value(self.p, edge * (1 + 1e-14))[0]
            assert abs(below - above) < 1e-12

    def test_sweep_rate(self):
        assert self.p.sweep_rate == pytest.approx(5 * self.p.h_max / self.p.t_total)

    def test_tags(self):
        assert self.p.tags == ("ramp", "backward", "forward")

    def test_fractions_must_sum_to_one(self):
        with pytest.raises(ValidationError):
            DriveProtocol(1.0, 1.0, ((0.2, 0, 1), (0.3, 1, -1), (0.4, -1, 1)))

    def test_discontinuous_segments(self):
        with pytest.raises(ValidationError):
            DriveProtocol(1.0, 1.0, ((0.5, 0, 1), (0.5, 0.5, -1)))

    def test_outside_window(self):
        with pytest.raises(OutOfRangeError):
            drive_value(self.p, 10.5)

    @given(st.floats(0, 10))
    def test_integral_matches_quadrature(self, t):
        grid = np.linspace(0, t, 2001)
        values = [drive_value(self.p, x)[0] for x in grid]
        assert drive_integral(self.p, t) == pytest.approx(np.trapezoid(values, grid), abs=1e-5)


class TestUnits:
    def test_natural_phase(self):
        assert UnitSystem().phase(2.0, 0.5) == 1.0

    def test_device_phase(self):
        assert UnitSystem("device").phase(1.0, 1.0) == pytest.approx(2 * math.pi)

    def test_unknown_unit(self):
        with pytest.raises(ValidationError):
            UnitSystem("furlongs")


def test_all_up_is_index_zero():
    assert basis_spins(3)[0].tolist() == [1, 1, 1]
    assert all_up_state(3)[0] == 1
