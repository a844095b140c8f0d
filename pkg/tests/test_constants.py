import pytest

from conic_ln.constants import structural_constants
from conic_ln.errors import ParameterError


@pytest.mark.parametrize("n", [3, 4, 5, 6])
def test_closed_form_identities(n):
    const = structural_constants(n)
    assert const.s * (const.s - 1.0) == const.kappa
    assert const.s == (n + 2) / 2.0
    assert const.beta == (n - 2) / 2.0
    assert const.S == (n - 2) / 2.0
    assert const.c_nl * const.p == pytest.approx(const.kappa, rel=1e-15)


@pytest.mark.parametrize(
    "n,beta,kappa,p",
    [
        (3, 0.5, 3.75, 5.0),
        (4, 1.0, 6.0, 3.0),
    ],
)
def test_known_values(n, beta, kappa, p):
    const = structural_constants(n)
    assert const.beta == beta
    assert const.kappa == kappa
    assert const.p == p


def test_rejects_low_dimension():
    with pytest.raises(ParameterError):
        structural_constants(2)
