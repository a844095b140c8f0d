from dataclasses import dataclass

from .errors import ParameterError


@dataclass(frozen=True)
class StructuralConstants:
    """
    Dimension-dependent constants of the Loewner-Nirenberg equation on a cone.

    Attributes:
        n: Ambient dimension.
        beta: (n-2)/2, the homogeneity of the cone solution.
        kappa: n(n+2)/4, coefficient of the singular potential.
        s: (n+2)/2, boundary decay power of eigenfunctions.
        S: (n-2)/2, the constant in the rho-equation.
        p: (n+2)/(n-2), the nonlinearity exponent.
        q: 4/(n-2), so that xi**q = rho**-2.
        c_nl: n(n-2)/4, the nonlinearity coefficient.
    """

    n: int
    beta: float
    kappa: float
    s: float
    S: float
    p: float
    q: float
    c_nl: float


def structural_constants(n: int) -> StructuralConstants:
    """
    Build the structural constants for dimension n.

    Args:
        n: Ambient dimension, at least 3.

    Returns:
        The constants; s*(s-1) == kappa and c_nl*p == kappa hold exactly in
        rational arithmetic.

    Raises:
        ParameterError: If n < 3.
    """
    if int(n) != n or n < 3:
        raise ParameterError(f"n must be an integer >= 3, got {n}")
    n = int(n)
    return StructuralConstants(
        n=n,
        beta=(n - 2) / 2.0,
        kappa=n * (n + 2) / 4.0,
        s=(n + 2) / 2.0,
        S=(n - 2) / 2.0,
        p=(n + 2) / (n - 2),
        q=4.0 / (n - 2),
        c_nl=n * (n - 2) / 4.0,
    )
