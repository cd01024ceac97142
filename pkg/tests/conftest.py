import numpy as np
import pytest

from acms import assembly, coefficient, geometry
from acms.substructure import HarmonicExtender


class Problem:
    def __init__(self, n, r, spec, rho="constant:1", g=None):
        self.coarse = geometry.build_coarse_mesh(n)
        self.mesh = geometry.refine(self.coarse, r)
        self.field = coefficient.build_field(self.mesh, spec, rho)
        self.system = assembly.assemble(self.mesh, self.field, g)
        self._extender = None

    @property
    def extender(self):
        if self._extender is None:
            self._extender = HarmonicExtender(self.mesh, self.system)
        return self._extender


def sin_load(x, y):
    return 2 * np.pi ** 2 * np.sin(np.pi * x) * np.sin(np.pi * y)


@pytest.fixture(scope="session")
def identity_42():
    return Problem(4, 2, "constant:1", g=sin_load)


@pytest.fixture(scope="session")
def checker_42():
    return Problem(4, 2, "checkerboard:1:1000:7", g=sin_load)


@pytest.fixture(scope="session")
def identity_83():
    return Problem(8, 3, "constant:1", g=sin_load)
