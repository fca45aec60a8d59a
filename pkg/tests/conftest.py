import numpy as np
import pytest

from hdgz import mesh as hmesh
from hdgz.assembly import assemble_condensed, make_layout
from hdgz.materials import MaterialField, preset

# collected "ACCEPTANCE n PASS/FAIL" lines, printed in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def unit_square(n, diagonal="right", tag_rule=hmesh.all_dirichlet):
    return hmesh.build_structured((0.0, 0.0, 1.0, 1.0), n,
                                  diagonal=diagonal, tag_rule=tag_rule)


def small_system(preset_name="l1", n=2, k=1, dt=1e-2,
                 tag_rule=hmesh.all_dirichlet, bc=None):
    """(mesh, matfield, layout, system) on the unit square."""
    from hdgz.assembly import HOMOGENEOUS

    mesh = unit_square(n, tag_rule=tag_rule)
    matfield = MaterialField.uniform(preset(preset_name), mesh)
    layout = make_layout(mesh, matfield, k)
    system = assemble_condensed(mesh, matfield, layout, dt,
                                bc=bc if bc is not None else HOMOGENEOUS)
    return mesh, matfield, layout, system


def random_state(layout, system, seed=0):
    from hdgz.stepping import SystemState

    rng = np.random.default_rng(seed)
    return SystemState(t=0.0, step=0,
                       yv=rng.standard_normal(layout.n_volume),
                       lam=np.zeros(layout.n_skeleton))


@pytest.fixture(scope="session")
def l1_n2_k1():
    return small_system("l1", n=2, k=1, dt=1e-2)
