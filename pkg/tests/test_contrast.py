import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from weaknull.contrast import (
    anova_contrast,
    assemble_vector_contrast,
    complete_contrast,
    factorial_contrast,
    make_hypothesis,
    model_matrix,
    preset_contrast,
    split_vector_contrast,
    treatment_control_contrast,
    trend_contrast,
    validate_contrast,
)
from weaknull.errors import (
    BadDoses,
    CapExceeded,
    ContrastError,
    CrossEntryComparison,
    NotContrast,
    RankDeficient,
)


def test_validate_rejects_non_contrast():
    with pytest.raises(NotContrast):
        validate_contrast([[1, 0, 0]])


def test_validate_rejects_dependent_rows():
    with pytest.raises(RankDeficient):
        validate_contrast([[1, -1, 0], [2, -2, 0]])
    with pytest.raises(RankDeficient):
        validate_contrast([[1, -1, 0], [0, 1, -1], [1, 0, -1]])


def test_validate_tolerates_rounding():
    C = validate_contrast([[0.1, 0.2, -0.3]])
    assert C.shape == (1, 3)


def test_anova_contrast():
    np.testing.assert_array_equal(anova_contrast(3), [[1, -1, 0], [1, 0, -1]])


def test_complete_contrast_shapes():
    assert complete_contrast(anova_contrast(4)).shape == (0, 4)
    assert complete_contrast([[1, -1, 0, 0]]).shape == (2, 4)


@st.composite
def contrasts(draw):
    J = draw(st.integers(3, 7))
    m = draw(st.integers(1, J - 2))
    seed = draw(st.integers(0, 2**31))
    rng = np.random.default_rng(seed)
    C = rng.normal(size=(m, J))
    return C - C.mean(axis=1, keepdims=True)


@given(contrasts())
def test_completion_is_orthonormal_complement(C):
    m, J = C.shape
    Ct = complete_contrast(C)
    assert Ct.shape == (J - m - 1, J)
    np.testing.assert_allclose(Ct @ Ct.T, np.eye(J - m - 1), atol=1e-10)
    np.testing.assert_allclose(Ct @ C.T, 0, atol=1e-10)
    np.testing.assert_allclose(Ct @ np.ones(J), 0, atol=1e-10)
    stack = np.vstack([C, Ct, np.ones(J)])
    assert np.linalg.matrix_rank(stack) == J


def test_completion_is_deterministic():
    C = [[1.0, -1.0, 0.0, 0.0]]
    np.testing.assert_array_equal(complete_contrast(C), complete_contrast(C))


def test_model_matrix_2x2():
    G = model_matrix(2)
    np.testing.assert_array_equal(G.G, [[-1, -1, 1, 1], [-1, 1, -1, 1], [1, -1, -1, 1]])
    assert G.labels == ("F1", "F2", "F1:F2")


@pytest.mark.parametrize("K", [1, 2, 3, 4])
def test_model_matrix_orthogonal(K):
    G = model_matrix(K).G
    J = 2**K
    np.testing.assert_array_equal(G @ G.T, J * np.eye(J - 1))
    np.testing.assert_array_equal(G.sum(axis=1), 0)


def test_model_matrix_cap():
    with pytest.raises(CapExceeded):
        model_matrix(11)


def test_factorial_subset_rows():
    np.testing.assert_array_equal(factorial_contrast(2, [1, 2]), [[-1, -1, 1, 1], [-1, 1, -1, 1]])
    with pytest.raises(ContrastError):
        factorial_contrast(2, [4])


def test_treatment_control():
    np.testing.assert_array_equal(treatment_control_contrast(), [[1, -1]])
    with pytest.raises(ContrastError):
        treatment_control_contrast(3)


def test_trend_contrast():
    row = trend_contrast([1, 2, 3], [10, 10, 20])[0]
    # a_j - a_+ N_j / N with a_+ = 6, N = 40
    np.testing.assert_allclose(row, [1 - 1.5, 2 - 1.5, 3 - 3.0])


def test_trend_bad_doses():
    with pytest.raises(BadDoses):
        trend_contrast([1, 1, 1], [5, 5, 5])
    with pytest.raises(BadDoses):
        trend_contrast([1, 2], [5, 5, 5])


def test_preset_and_target():
    h = preset_contrast("anova", 3)
    assert h.m == 2 and h.J == 3
    np.testing.assert_array_equal(h.x, [0, 0])
    h2 = h.with_target([1, 2])
    np.testing.assert_array_equal(h2.x, [1, 2])
    with pytest.raises(ContrastError):
        h.with_target([1])
    with pytest.raises(ContrastError):
        preset_contrast("factorial", 3, K=2, subset=[1])


def test_one_sided_needs_single_row():
    with pytest.raises(ContrastError):
        make_hypothesis(anova_contrast(3), orientation="one_sided_ge")
    h = make_hypothesis([[1, -1, 0]], orientation="one_sided_ge")
    assert h.orientation == "one_sided_ge"


def test_vector_assembly_kronecker_layout():
    h = assemble_vector_contrast([([[1, -1]], [0.5]), np.zeros((0, 2))])
    # arm-major stacking (arm1 coord1, arm1 coord2, arm2 coord1, arm2 coord2)
    np.testing.assert_array_equal(h.C, [[1, 0, -1, 0]])
    assert h.d == 2 and h.m == 1
    np.testing.assert_array_equal(h.x, [0.5])


def test_split_round_trip():
    C = np.array([[1, 0, -1, 0], [0, 1, 0, -1]], dtype=float)
    h = split_vector_contrast(C, 2, [1.0, 2.0])
    np.testing.assert_array_equal(h.C, C)
    np.testing.assert_array_equal(h.x, [1, 2])


def test_cross_entry_comparison():
    with pytest.raises(CrossEntryComparison):
        split_vector_contrast([[1, 0, 0, -1]], 2)
