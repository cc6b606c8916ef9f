import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from degpd.errors import ConfigurationError, DataError
from degpd.splines import SmoothBasis, TermBasis, build_basis, difference_penalty, fit_basis


@pytest.fixture
def x():
    return np.random.default_rng(0).uniform(-2, 3, 400)


def test_partition_of_unity(x):
    block = build_basis(TermBasis("x", 10, centered=False), x)
    assert block.design.shape == (400, 10)
    assert np.allclose(block.design.sum(axis=1), 1.0, atol=1e-13)


@given(st.floats(-5, 5), st.floats(-5, 5))
def test_penalty_annihilates_affine(a, b):
    s = difference_penalty(10)
    beta = a + b * np.arange(10)
    assert abs(beta @ s @ beta) < 1e-9 * (1 + a * a + b * b)


def test_penalty_structure(x):
    block = build_basis(TermBasis("x", 10, centered=False), x)
    s = block.penalty
    assert s.shape == (10, 10)
    assert np.allclose(s, s.T)
    assert np.linalg.matrix_rank(difference_penalty(10)) == 8
    assert np.linalg.matrix_rank(s) == 8
    assert np.min(np.linalg.eigvalsh(s)) > -1e-10 * np.max(np.abs(s))


def test_centering_removes_one_column(x):
    block = build_basis(TermBasis("x", 10), x)
    assert block.design.shape == (400, 9)
    assert np.allclose(block.design.mean(axis=0), 0.0, atol=1e-12)
    # centred penalty keeps only the linear direction unpenalised
    assert np.linalg.matrix_rank(block.penalty) == 8


def test_too_few_distinct_values():
    with pytest.raises(ConfigurationError):
        fit_basis(TermBasis("x", 10), np.repeat([1.0, 2.0, 3.0], 20))
    with pytest.raises(ConfigurationError):
        TermBasis("x", 3)
    with pytest.raises(DataError):
        fit_basis(TermBasis("x", 5), np.array([1.0, np.nan, 2, 3, 4, 5]))


def test_linear_extrapolation_is_flagged(x):
    basis = fit_basis(TermBasis("x", 8), x)
    lo, hi = basis.knots[0], basis.knots[-1]
    inside = np.linspace(lo, hi, 5)
    outside = np.array([lo - 1.0, hi + 0.5, hi + 1.0])
    _, flags_in = basis.design(inside)
    design_out, flags_out = basis.design(outside)
    assert not flags_in.any() and flags_out.all()
    # the extension is linear beyond the upper knot
    d1 = design_out[1] - basis.design(np.array([hi]))[0][0]
    d2 = design_out[2] - design_out[1]
    assert np.allclose(d1, d2, atol=1e-10)


def test_basis_round_trip(x):
    basis = fit_basis(TermBasis("x", 7), x)
    back = SmoothBasis.from_dict(basis.to_dict())
    assert np.array_equal(back.design(x)[0], basis.design(x)[0])
    assert np.array_equal(back.penalty, basis.penalty)
