import numpy as np
import pytest

from cpacontract.assembly import assemble
from cpacontract.cpa import CPAMetric
from cpacontract.solver import solve
from cpacontract.systems import parse_system
from cpacontract.triangulation import build_complex

TWO_PI = 2.0 * np.pi

LINEAR_1D_TEXT = "dim=1; period=6.283185307179586; f1 = -x1 + sin(t)"
OSC_2D_TEXT = ("dim=2; period=6.283185307179586; "
               "f1 = x2; f2 = -x1 - 2*x2 + sin(t)")
VDP_TEXT = "dim=2; period=1; f1 = x2; f2 = -x1 - x2*(x1^2 - 1)"


@pytest.fixture(scope="session")
def linear_1d():
    return parse_system(LINEAR_1D_TEXT)


@pytest.fixture(scope="session")
def osc_2d():
    return parse_system(OSC_2D_TEXT)


@pytest.fixture(scope="session")
def vdp():
    return parse_system(VDP_TEXT)


@pytest.fixture(scope="session")
def small_complex():
    """Unit cell on the cylinder, two triangles."""
    return build_complex([[[0.0, 1.0]]], T=1.0, K=0)


@pytest.fixture(scope="session")
def solved_linear(linear_1d):
    """Criterion-1 configuration solved at its first feasible level."""
    cx = build_complex([[[-2.0, 1.0]]], linear_1d.T, 5)
    problem, vmap = assemble(cx, linear_1d, 0.01, uniform_cd=True,
                             objective="min_c")
    sol = solve(problem)
    assert sol.status in ("Optimal", "Feasible")
    cpa = CPAMetric.from_solution(cx, sol.y, vmap)
    return {"sys": linear_1d, "cx": cx, "problem": problem, "vmap": vmap,
            "sol": sol, "cpa": cpa, "eps0": 0.01}
