import pytest

from rbsim.errors import (
    ConfigError,
    ConstructionError,
    FitError,
    InvariantFailure,
    NumericalError,
    QuadratureError,
    RbsimError,
    ValidationError,
    exit_code_for,
)


@pytest.mark.parametrize(
    "exc, code",
    [
        (ConfigError("x"), 2),
        (NumericalError("x"), 3),
        (QuadratureError("x"), 3),
        (ConstructionError("x"), 3),
        (FitError("x"), 3),
        (ValidationError("x"), 4),
        (InvariantFailure("x"), 4),
        (RbsimError("x"), 1),
        (KeyError("x"), 1),
    ],
)
def test_exit_codes(exc, code):
    assert exit_code_for(exc) == code


def test_validation_error_is_a_value_error():
    with pytest.raises(ValueError):
        raise ValidationError("bad")


def test_fit_error_keeps_last_iterate():
    e = FitError("stuck", last_iterate=[1.0, 0.5, 0.1])
    assert e.last_iterate == [1.0, 0.5, 0.1]
    assert str(e) == "stuck"
