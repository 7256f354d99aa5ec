import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from noonphase.fringe import (
    CalibrationConstraintError,
    CalibrationParseError,
    CalibrationTable,
    FringeModel,
    MissingCalibrationError,
    Outcome,
    dump_calibration,
    load_calibration,
    log_prob,
    noon_overlap_oracle,
    prob_no,
    prob_yes,
)


@pytest.mark.parametrize(
    "model, theta, expected",
    [
        (FringeModel.ideal(1), 0.0, 1.0),
        (FringeModel.ideal(2), math.pi / 2, 0.0),
        (FringeModel(3, 0.5, 0.8), 0.0, 0.9),
        (FringeModel.ideal(6), math.pi / 6, 0.0),
    ],
)
def test_prob_yes_examples(model, theta, expected):
    assert prob_yes(model, theta) == pytest.approx(expected, abs=1e-15)


def test_ideal_constructor():
    m = FringeModel.ideal(4)
    assert (m.offset, m.contrast) == (0.5, 1.0)
    assert m.is_ideal


@pytest.mark.parametrize("args", [(0, 0.5, 1.0), (2, 0.5, 1.2), (2, 0.3, 0.7), (1, 0.5, -0.1), (1, 0.9, 0.4)])
def test_invalid_models_rejected(args):
    with pytest.raises(ValueError):
        FringeModel(*args)


@pytest.mark.parametrize("n, theta", [(1, math.pi), (4, math.pi / 4)])
def test_oracle_zeros(n, theta):
    assert noon_overlap_oracle(n, theta) == pytest.approx(0.0, abs=1e-15)


def test_oracle_n5():
    expected = math.cos(0.75) ** 2
    assert noon_overlap_oracle(5, 0.3) == pytest.approx(expected, abs=1e-12)
    assert prob_yes(FringeModel.ideal(5), 0.3) == pytest.approx(expected, abs=1e-12)


def test_oracle_ignores_cat_phase():
    for phase in (0.0, 0.7, -2.1):
        assert noon_overlap_oracle(3, 0.4, phase) == pytest.approx(noon_overlap_oracle(3, 0.4), abs=1e-14)


def test_oracle_matches_closed_form_on_random_phases():
    rng = np.random.default_rng(20240601)
    for n in range(1, 21):
        thetas = rng.uniform(-math.pi, math.pi, 1000)
        closed = prob_yes(FringeModel.ideal(n), thetas)
        oracle = np.array([noon_overlap_oracle(n, t) for t in thetas])
        assert np.max(np.abs(closed - oracle)) < 1e-12


models = st.builds(
    lambda n, c, a_frac: FringeModel(n, c / 2 + a_frac * (1 - c), c),
    st.integers(1, 40),
    st.floats(0, 1),
    st.floats(0, 1),
)
thetas = st.floats(-50, 50, allow_nan=False)


@given(models, thetas)
def test_yes_no_complementary(model, theta):
    assert prob_yes(model, theta) + prob_no(model, theta) == 1.0
    assert 0.0 <= prob_yes(model, theta) <= 1.0


@given(models, st.floats(-math.pi, math.pi))
def test_periodicity(model, theta):
    shifted = theta + 2 * math.pi / model.n_particles
    assert prob_yes(model, shifted) == pytest.approx(prob_yes(model, theta), abs=1e-12)


@given(st.integers(1, 12), st.floats(-math.pi, math.pi), st.floats(0.01, 0.98), st.floats(0.001, 0.01))
def test_contrast_monotone(n, theta, c, dc):
    if abs(math.cos(n * theta)) < 1e-6:
        return
    lo = abs(prob_yes(FringeModel(n, 0.5, c), theta) - 0.5)
    hi = abs(prob_yes(FringeModel(n, 0.5, c + dc), theta) - 0.5)
    assert hi > lo


@settings(max_examples=50)
@given(models, thetas)
def test_log_prob_consistent(model, theta):
    py = prob_yes(model, theta)
    ly = float(log_prob(model, Outcome.YES, theta))
    ln = float(log_prob(model, Outcome.NO, theta))
    assert math.exp(ly) == pytest.approx(py, abs=1e-12)
    assert math.exp(ln) == pytest.approx(1 - py, abs=1e-12)


def test_log_prob_exact_zero_is_minus_inf():
    assert log_prob(FringeModel.ideal(1), Outcome.NO, 0.0) == -math.inf
    assert log_prob(FringeModel.ideal(2), Outcome.YES, math.pi / 2) < -70


def test_load_round_trip():
    table = load_calibration(io.BytesIO(b"n,offset,contrast\n1,0.5,0.98\n"))
    assert len(table) == 1
    assert table[1] == FringeModel(1, 0.5, 0.98)
    assert load_calibration(dump_calibration(table)) == table


def test_dump_is_decimal_and_stable():
    table = CalibrationTable({1: (0.5, 0.00001), 3: (0.47, 0.83), 2: (0.5, 0.1 + 0.2)})
    text = dump_calibration(table)
    assert "e" not in text.lower().replace("offset", "").replace("contrast", "")
    assert load_calibration(text) == table
    assert dump_calibration(load_calibration(text)) == text


def test_constraint_violation_names_n():
    with pytest.raises(CalibrationConstraintError) as err:
        load_calibration("n,offset,contrast\n1,0.5,0.9\n2,0.5,1.2\n")
    assert err.value.n == 2
    assert "N=2" in str(err.value)


def test_empty_document_gives_empty_table():
    table = load_calibration(b"")
    assert len(table) == 0
    with pytest.raises(MissingCalibrationError):
        table[1]


@pytest.mark.parametrize(
    "doc",
    [
        "n,offset\n1,0.5\n",
        "n,contrast,offset\n1,1.0,0.5\n",
        "n,offset,contrast\n1,0.5,0.9\n1,0.5,0.8\n",
        "n,offset,contrast\n1,5e-1,0.9\n",
        "n,offset,contrast\n1,nan,0.9\n",
        "n,offset,contrast\nx,0.5,0.9\n",
        "n,offset,contrast\n1,0.5\n",
    ],
)
def test_parse_errors(doc):
    with pytest.raises(CalibrationParseError):
        load_calibration(doc)


def test_non_positive_n_is_a_constraint_error():
    with pytest.raises(CalibrationConstraintError) as err:
        load_calibration("n,offset,contrast\n0,0.5,0.9\n")
    assert err.value.n == 0


def test_comments_and_blank_lines_are_ignored():
    doc = "# fitted fringes\n\nn,offset,contrast\n# N=1\n1,0.5,0.9\n"
    assert list(load_calibration(doc)) == [1]


def test_missing_lookup_never_falls_back_to_ideal():
    table = CalibrationTable({2: (0.5, 0.9)})
    with pytest.raises(MissingCalibrationError):
        table.model(3)
