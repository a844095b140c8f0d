import math
import os
import sys

import pytest

sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), "..", "src")))

from conic_ln.geometry.angular_grid import build_grid  # noqa: E402
from conic_ln.geometry.profile import solve_profile  # noqa: E402
from conic_ln.spectral.index_set import build_index_chain  # noqa: E402
from conic_ln.spectral.spectrum import compute_spectrum  # noqa: E402

# 軽量な共有フィクスチャ（重い計算はセッションで一度だけ）
HEMISPHERE = math.pi / 2.0
NODES = 160


@pytest.fixture(scope="session")
def hemisphere_profile():
    return solve_profile(build_grid(3, HEMISPHERE, NODES))


@pytest.fixture(scope="session")
def hemisphere_spectrum(hemisphere_profile):
    return compute_spectrum(hemisphere_profile, 5)


@pytest.fixture(scope="session")
def hemisphere_chain(hemisphere_spectrum):
    gammas = hemisphere_spectrum.gammas
    return build_index_chain(gammas, 3.0 * float(gammas[0]) + 0.5, 1e-8)


@pytest.fixture(scope="session")
def cap_profile():
    return solve_profile(build_grid(3, math.pi / 3.0, NODES))


@pytest.fixture(scope="session")
def cap_spectrum(cap_profile):
    return compute_spectrum(cap_profile, 5)


@pytest.fixture(scope="session")
def cap_chain(cap_spectrum):
    gammas = cap_spectrum.gammas
    return build_index_chain(gammas, 3.0 * float(gammas[0]) + 0.5, 1e-8)


@pytest.fixture
def indexset_config_text():
    return (
        '{"n": 3, "phi_max": 1.5707963267948966, "node_count": 64, '
        '"eigen_count": 4, "gammas_override": [1.0, 2.0], "cutoff": 4.0}'
    )
