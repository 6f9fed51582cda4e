import numpy as np
import pytest

from frachardy.kernel import Params, hardy_constant


@pytest.fixture(scope="session")
def p15():
    return Params(3, 0.5, 1.5)


@pytest.fixture(scope="session")
def lambda_p16():
    return hardy_constant(Params(3, 0.5, 1.6))


def cos_bump(R=1.0):
    return lambda r: np.cos(0.5 * np.pi * np.minimum(r / R, 1.0)) ** 2
