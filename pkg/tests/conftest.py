import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", deadline=None, max_examples=60,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large],
)
settings.load_profile("default")

# acceptance outcomes, echoed in the terminal summary so they survive output capture
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])


@pytest.fixture(scope="session", autouse=True)
def _warm_kernels():
    """Load or compile every numba kernel once so timings measure the algorithms."""
    from acng import build_cng, build_exact, CngParams, ExactBuildParams, PruneRule, KnnParams
    from acng.exact import verify_alpha_reducible, mutual_exclusion_violations
    from acng.eval import compute_ground_truth, sweep
    from acng.knn import nn_descent

    x = np.random.default_rng(0).random((60, 4)).astype(np.float32)
    g = build_exact(x, ExactBuildParams(PruneRule.shifted_scaled(1.1, 0.01)))
    verify_alpha_reducible(g, x, x[:3] + 1e-4, 0.01, 1.1)
    mutual_exclusion_violations(g, x, PruneRule.shifted_scaled(1.1, 0.01))
    gc, _ = build_cng(x, CngParams(knn=KnnParams(K=10), M=8, L=10, C=20), threads=1)
    nn_descent(x, KnnParams(K=5, iters=1))
    gt = compute_ground_truth(x, x[:3], 5)
    sweep(gc, x, x[:3], gt, 5, [5])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
