import functools

import pytest

from nlkg_lab.bound_states import SandboxPotential, ground_state_closed_form, sandbox_depth_for_kbar
from nlkg_lab.fields import Grid1D
from nlkg_lab.linear_spectrum import BoostFrame, spectral_bundle


@functools.lru_cache(maxsize=None)
def bundle_for(kind, beta, half_width=25.0, n=512):
    g = Grid1D(half_width, n)
    src = ground_state_closed_form(3.0, g) if kind == "ground" else SandboxPotential(sandbox_depth_for_kbar(kind))
    return spectral_bundle(src, g, BoostFrame(beta))


@pytest.fixture(scope="session")
def bundles():
    return bundle_for
