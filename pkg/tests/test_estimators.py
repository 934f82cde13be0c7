import numpy as np
import pytest
from sklearn.base import clone

from signbias.estimators import CompatibilityMetrics, EmpiricalKernelEstimator, KernelFlowEstimator
from signbias.exceptions import PreconditionError
from signbias.kernels import KernelSpec, kernel_tables
from signbias.metrics import compute_metrics
from signbias.pauli import build_model
from signbias.widths import spin_configurations


class TestKernelFlowEstimator:
    def test_fit_predict_score(self):
        h = build_model("tfim", 3, {"h": 1.0})
        est = KernelFlowEstimator(t_max=400.0, n_samples=2001).fit(h)
        assert est.ground_energy_ == pytest.approx(h.spectrum().ground_energy)
        assert est.predict([0.0])[0] == pytest.approx(est.trace_.energy[0])
        assert est.score() == pytest.approx(0.0, abs=1e-6)
        assert np.isfinite(est.t_overlap_)

    def test_params_round_trip(self):
        est = KernelFlowEstimator(depth=2, activation="erf")
        c = clone(est)
        assert c.get_params() == est.get_params()
        c.set_params(depth=3)
        assert c.depth == 3 and est.depth == 2

    def test_invalid_hyperparameter(self):
        with pytest.raises(PreconditionError):
            KernelFlowEstimator(depth=0).fit(build_model("tfim", 2))

    def test_rejects_matrix_input(self):
        with pytest.raises(PreconditionError):
            KernelFlowEstimator().fit(np.eye(4))


class TestCompatibilityMetrics:
    def test_transform_matches_functional_core(self):
        hs = [build_model("tfim", 3, {"h": h}) for h in (0.5, 1.0)]
        x = CompatibilityMetrics(activation="tanh").fit_transform(hs)
        ref = compute_metrics(hs[1], kernel_tables(KernelSpec(activation="tanh"), 3))
        np.testing.assert_allclose(x[1], [ref.m_theta, ref.n_theta, ref.m_k, ref.n_k])
        assert x.shape == (2, 4)

    def test_feature_names(self):
        names = CompatibilityMetrics().fit().get_feature_names_out()
        assert list(names) == ["m_theta", "n_theta", "m_k", "n_k"]


class TestEmpiricalKernelEstimator:
    def test_fit_transform(self):
        x = spin_configurations(2)
        est = EmpiricalKernelEstimator(width=64, n_samples=10).fit(x)
        np.testing.assert_allclose(est.transform(x[[2]]), est.ntk_[[2]])
        assert est.ck_.shape == (4, 4)

    def test_requires_all_configurations(self):
        with pytest.raises(ValueError):
            EmpiricalKernelEstimator().fit(spin_configurations(2)[:3])
