import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", deadline=None, max_examples=40,
    suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def random_pd(rng, m, cond=10.0):
    X = rng.normal(size=(m, m)) + 1j * rng.normal(size=(m, m))
    Q, _ = np.linalg.qr(X)
    w = np.geomspace(1.0, cond, m)
    return (Q * w) @ Q.conj().T


def random_ratf(rng, m, r, ref=0):
    A = rng.normal(size=(m, r)) + 1j * rng.normal(size=(m, r))
    A[ref] = 1.0
    return A


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def solver_geometry():
    """Default 4-mic array, one source, grid and coherence used by solver tests."""
    from scfa.model import FrequencyGrid, Geometry, circular_array, coherence_stack, \
        distance_matrix
    from scfa.scene import default_sources
    geo = Geometry(circular_array(4, 0.02), default_sources(1), 0, 0.01)
    grid = FrequencyGrid()
    D = distance_matrix(geo)
    phi, _ = coherence_stack(D, grid)
    return grid, D, phi


def random_problem(rng, variant, r=1, B=4, k=64, n_sub=50, m=4):
    """Sampled data, constraints and a random feasible point for ``variant``.

    Returns ``(packing, P_hat, phi_k, constraints, x)``.
    """
    from scfa.cpsdm import FramePlan
    from scfa.model import model_cpsdm
    from scfa.solver import VariablePacking, build_constraints
    grid, D, phi = solver_geometry()
    phi_k = phi[k]
    A = random_ratf(rng, m, r)
    P = rng.uniform(0.2, 2.0, size=(B, r))
    gamma = rng.uniform(0.1, 1.0, size=B)
    P_true = model_cpsdm(A, P, gamma, [0.05], phi_k)
    L = np.linalg.cholesky(P_true)
    Z = (rng.normal(size=(B, m, n_sub)) + 1j * rng.normal(size=(B, m, n_sub))) / np.sqrt(2)
    Y = L @ Z
    P_hat = Y @ Y.conj().transpose(0, 2, 1) / n_sub
    pk = VariablePacking.for_variant(variant, m, r, B)
    cons = build_constraints(variant, pk, P_hat, phi_k, grid, FramePlan(), D)
    x = random_feasible(rng, pk, cons)
    return pk, P_hat, phi_k, cons, x


def random_feasible(rng, pk, cons):
    lo = np.where(np.isfinite(cons.lower), cons.lower, -2.0)
    hi = np.where(np.isfinite(cons.upper), cons.upper, 2.0)
    lo = np.maximum(lo, -2.0)
    hi = np.minimum(hi, 2.0)
    lo[pk.psd] = np.maximum(lo[pk.psd], 0.0)
    x = rng.uniform(lo, np.maximum(hi, lo))
    x[pk.psd] = np.maximum(x[pk.psd], 1e-3 * np.maximum(hi[pk.psd], 1e-12))
    x = cons.project(x)
    return x


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES = {}


def record_criterion(number, passed, detail, gated=True):
    status = "PASS" if passed else "FAIL"
    if not gated:
        status += " (soft, not gated)"
    line = f"criterion {number}: {status} - {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
