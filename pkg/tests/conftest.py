import numpy as np
import pytest

from parseq.core import DynamicsModel


def pytest_runtest_logreport(report):
    # one verdict line per acceptance criterion
    if report.when == "call" and "test_acceptance" in report.nodeid:
        name = report.nodeid.split("::")[-1].replace("test_", "", 1)
        verdict = "PASS" if report.passed else "FAIL"
        print(f"\nACCEPTANCE {name}: {verdict}")


class TanhNet(DynamicsModel):
    """Small input-driven tanh network used as a generic nonlinear fixture."""

    def __init__(self, W, inputs):
        self.W = np.asarray(W, dtype=np.float64)
        self.inputs = np.asarray(inputs, dtype=np.float64)

    def dim(self):
        return self.W.shape[0]

    def horizon(self):
        return self.inputs.shape[0]

    def step(self, t, s):
        return self.W @ np.tanh(s) + self.inputs[t - 1]

    def jacobian(self, t, s):
        return self.W * (1.0 - np.tanh(s) ** 2)[None, :]

    def step_all(self, prev):
        return np.tanh(prev) @ self.W.T + self.inputs[: len(prev)]

    def jacobian_all(self, prev):
        return self.W[None] * (1.0 - np.tanh(prev) ** 2)[:, None, :]


class ScalarLinear(DynamicsModel):
    """f(s) = w s, the hand-checkable scalar fixture."""

    def __init__(self, w, T):
        self.w = float(w)
        self._T = int(T)

    def dim(self):
        return 1

    def horizon(self):
        return self._T

    def step(self, t, s):
        return self.w * np.asarray(s, dtype=np.float64)

    def jacobian(self, t, s):
        return np.array([[self.w]])


def random_tanh_net(rng, D, T, scale=1.0):
    W = scale * rng.standard_normal((D, D)) / np.sqrt(D)
    U = 0.5 * rng.standard_normal((T, D))
    return TanhNet(W, U)


def fd_jacobian(model, t, s, h_scale=1e-6):
    """Central finite differences of step(t, .), the Jacobian oracle."""
    s = np.asarray(s, dtype=np.float64)
    D = s.shape[0]
    J = np.empty((D, D))
    for j in range(D):
        h = h_scale * (1.0 + abs(s[j]))
        e = np.zeros(D)
        e[j] = h
        J[:, j] = (model.step(t, s + e) - model.step(t, s - e)) / (2.0 * h)
    return J


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
