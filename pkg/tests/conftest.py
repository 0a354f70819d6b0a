import numpy as np
import pytest

from graphtaxis.graph import build_family, discretize
from graphtaxis.spectrum import assemble

# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def record_criterion():
    def record(number: int, passed: bool, detail: str) -> None:
        ACCEPTANCE[number] = (bool(passed), detail)

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def dumbbell():
    return build_family("dumbbell", [10, 5, 1])


@pytest.fixture(scope="session")
def tadpole_grid():
    g = build_family("tadpole", [10, 5])
    d = discretize(g, 0.1)
    return g, d, assemble(d)


def matching_matrix(graph, k: float) -> np.ndarray:
    """Vertex matching system for f_e(x) = A_e cos(kx) + B_e sin(kx).

    Rows: continuity between consecutive edge ends at each vertex and the
    sum of outgoing derivatives (scaled by 1/k). Singular exactly at the
    nonzero NK eigenvalues, with nullity equal to the multiplicity.
    """
    n_e = len(graph.edges)
    ends = {v: [] for v in graph.vertices}
    for i, e in enumerate(graph.edges):
        ends[e.tail].append((i, 0))
        ends[e.head].append((i, 1))
    rows = []
    for v, incident in ends.items():
        vals, ders = [], []
        for i, side in incident:
            val, der = np.zeros(2 * n_e), np.zeros(2 * n_e)
            kl = k * graph.edges[i].length
            if side == 0:
                val[2 * i] = 1.0
                der[2 * i + 1] = 1.0
            else:
                val[2 * i], val[2 * i + 1] = np.cos(kl), np.sin(kl)
                # outgoing direction at the head end is -x
                der[2 * i], der[2 * i + 1] = np.sin(kl), -np.cos(kl)
            vals.append(val)
            ders.append(der)
        rows.extend(vals[j] - vals[0] for j in range(1, len(vals)))
        rows.append(np.sum(ders, axis=0))
    return np.array(rows)


def nullity(graph, k: float, tol: float = 1e-7) -> int:
    s = np.linalg.svd(matching_matrix(graph, k), compute_uv=False)
    # entries are O(1), and the whole matrix vanishes on a circle at its eigenvalues
    return int(np.sum(s < tol * max(s.max(), 1.0)))
