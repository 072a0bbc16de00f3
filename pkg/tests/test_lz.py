import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qhyst.errors import AdiabaticLimitError, OutOfRangeError
from qhyst.lz import LzParams, lz_numeric_oracle, lz_probability, transition_probability


def test_known_value():
    p, q = lz_probability(1.0, 1.0)
    assert p == pytest.approx(math.exp(-math.pi / 2))
    assert p + q == 1.0


def test_zero_gamma_is_exactly_diabatic():
    assert lz_probability(0.0, 0.7) == (1.0, 0.0)


def test_zero_rate():
    with pytest.raises(AdiabaticLimitError):
        lz_probability(0.1, 0.0)
    assert lz_probability(0.1, 0.0, allow_adiabatic_limit=True) == (0.0, 1.0)


@pytest.mark.parametrize("gamma,hdot,hbar", [(-0.1, 1, 1), (0.1, -1, 1), (0.1, 1, 0)])
def test_invalid_arguments(gamma, hdot, hbar):
    with pytest.raises(OutOfRangeError):
        lz_probability(gamma, hdot, hbar)


def test_parallel_levels():
    with pytest.raises(OutOfRangeError):
        LzParams(0.1, 1.0, 1.0)


@given(st.floats(1e-3, 5), st.floats(1e-3, 5))
def test_slower_sweeps_are_more_adiabatic(gamma, hdot):
    assert lz_probability(gamma, hdot / 2)[0] <= lz_probability(gamma, hdot)[0]


@given(st.floats(1e-3, 3), st.floats(1e-2, 5))
def test_tfim_mapping_agrees_with_formula(gamma, hdot):
    params = LzParams.from_tfim(gamma, hdot)
    assert transition_probability(params) == pytest.approx(lz_probability(gamma, hdot)[0], rel=1e-12)


def test_hbar_rescales_exponent():
    assert lz_probability(1.0, 1.0, hbar=2.0)[0] == pytest.approx(lz_probability(1.0, 2.0)[0])


def test_numeric_oracle_batch():
    exponents = np.array([0.3, 1.0, 3.0])
    params = [LzParams.from_tfim(math.sqrt(2 * x / math.pi), 1.0) for x in exponents]
    np.testing.assert_allclose(lz_numeric_oracle(params), np.exp(-exponents), atol=1e-2)


def test_oracle_zero_coupling():
    assert lz_numeric_oracle(LzParams(0.0, -1.0, 1.0), t_edge=5.0, dt=0.01, check_convergence=False) == 1.0


def test_oracle_batch_shape():
    out = lz_numeric_oracle([LzParams(0.5, -1, 1), LzParams(0.2, 2, -2)], t_edge=20.0, dt=0.01,
                             check_convergence=False)
    assert out.shape == (2,)
    assert np.all((0 <= out) & (out <= 1))
