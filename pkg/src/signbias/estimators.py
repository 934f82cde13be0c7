"""scikit-learn style wrappers over the functional core.

The core functions take Hamiltonians and kernels rather than feature
matrices, so the wrappers follow the estimator conventions (constructor
hyperparameters, ``fit`` returning ``self``, trailing-underscore fitted
attributes, ``get_params``/``set_params``) without claiming the full
``X, y`` contract.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .flow import FlowConfig, convergence_time, integrate_flow
from .kernels import KernelSpec, kernel_tables
from .metrics import compute_metrics, eigensum_state
from .validation import (check_hamiltonian, check_positive_float, check_positive_int,
                         check_spin_configurations)
from .widths import empirical_kernels


class _KernelParams:
    """Shared architecture hyperparameters."""

    def _spec(self) -> KernelSpec:
        return KernelSpec(depth=check_positive_int(self.depth, "depth"), activation=self.activation,
                          weight_variance=check_positive_float(self.weight_variance, "weight_variance"),
                          bias_variance=check_positive_float(self.bias_variance, "bias_variance",
                                                             allow_zero=True),
                          zero_bias_init=bool(self.zero_bias_init))


class KernelFlowEstimator(_KernelParams, BaseEstimator):
    """Run the infinite-width flow on a Hamiltonian.

    Args:
        activation: Hidden activation.
        depth: Number of hidden layers.
        weight_variance: sigma_w^2.
        bias_variance: beta^2.
        zero_bias_init: Biases start at zero.
        t_max: Integration time.
        n_samples: Trace samples.
        threshold: Overlap threshold for ``t_overlap_``.
        C: Gap fraction for ``t_energy_``.
        psi0: ``eigensum`` or ``uniform`` initial state.
    """

    def __init__(self, activation="relu", depth=1, weight_variance=1.0, bias_variance=1.0,
                 zero_bias_init=True, t_max=50.0, n_samples=2001, threshold=0.95, C=4.0,
                 psi0="eigensum"):
        self.activation = activation
        self.depth = depth
        self.weight_variance = weight_variance
        self.bias_variance = bias_variance
        self.zero_bias_init = zero_bias_init
        self.t_max = t_max
        self.n_samples = n_samples
        self.threshold = threshold
        self.C = C
        self.psi0 = psi0

    def fit(self, h, y=None):
        h = check_hamiltonian(h)
        self.kernel_ = kernel_tables(self._spec(), h.n_qubits)
        if self.psi0 == "eigensum":
            psi0 = eigensum_state(h)
        elif self.psi0 == "uniform":
            psi0 = np.ones(h.dim)
        else:
            raise ValueError(f"psi0 must be 'eigensum' or 'uniform', got {self.psi0!r}")
        cfg = FlowConfig(t_max=check_positive_float(self.t_max, "t_max"),
                         n_samples=check_positive_int(self.n_samples, "n_samples", 2))
        self.trace_ = integrate_flow(h, self.kernel_, psi0, cfg)
        self.ground_energy_ = self.trace_.ground_energy
        self.t_overlap_ = convergence_time(self.trace_, "overlap", self.threshold, self.C)
        self.t_energy_ = convergence_time(self.trace_, "energy", self.threshold, self.C)
        return self

    def predict(self, times) -> np.ndarray:
        """Energy along the fitted trace, linearly interpolated at ``times``."""
        check_is_fitted(self, "trace_")
        return np.interp(np.asarray(times, dtype=float), self.trace_.times, self.trace_.energy)

    def score(self, h=None, y=None) -> float:
        """Negative final energy excess (higher is better)."""
        check_is_fitted(self, "trace_")
        return -float(self.trace_.excess[-1])


class CompatibilityMetrics(_KernelParams, TransformerMixin, BaseEstimator):
    """Map Hamiltonians to rows ``[M(H,Theta), N(H,Theta), M(H,K), N(H,K)]``.

    Args:
        activation: Hidden activation.
        depth: Number of hidden layers.
        weight_variance: sigma_w^2.
        bias_variance: beta^2.
        zero_bias_init: Biases start at zero.
        allow_degenerate: Use the ground-space projector for degenerate
            ground levels.
    """

    columns = ("m_theta", "n_theta", "m_k", "n_k")

    def __init__(self, activation="relu", depth=1, weight_variance=1.0, bias_variance=1.0,
                 zero_bias_init=True, allow_degenerate=False):
        self.activation = activation
        self.depth = depth
        self.weight_variance = weight_variance
        self.bias_variance = bias_variance
        self.zero_bias_init = zero_bias_init
        self.allow_degenerate = allow_degenerate

    def fit(self, hamiltonians=None, y=None):
        self.spec_ = self._spec()
        self.n_features_out_ = len(self.columns)
        return self

    def transform(self, hamiltonians) -> np.ndarray:
        check_is_fitted(self, "spec_")
        cache: dict[int, object] = {}
        rows = []
        for h in hamiltonians:
            h = check_hamiltonian(h)
            if h.n_qubits not in cache:
                cache[h.n_qubits] = kernel_tables(self.spec_, h.n_qubits)
            r = compute_metrics(h, cache[h.n_qubits], allow_degenerate=self.allow_degenerate)
            rows.append([getattr(r, c) for c in self.columns])
        return np.array(rows, dtype=float).reshape(-1, len(self.columns))

    def get_feature_names_out(self, input_features=None) -> np.ndarray:
        return np.array(self.columns, dtype=object)


class EmpiricalKernelEstimator(_KernelParams, BaseEstimator):
    """Finite-width NTK and CK averaged over initializations.

    ``fit`` takes the full set of spin configurations (2^N rows of +-1);
    ``transform`` returns the NTK rows for a subset of them.

    Args:
        activation: Hidden activation.
        depth: Number of hidden layers.
        weight_variance: sigma_w^2.
        bias_variance: beta^2.
        zero_bias_init: Biases start at zero.
        width: Hidden width.
        n_samples: Maximum number of initializations.
        target_rel_err: Stopping threshold on sector relative errors.
        seed: Base seed.
    """

    def __init__(self, activation="relu", depth=1, weight_variance=1.0, bias_variance=1.0,
                 zero_bias_init=True, width=1000, n_samples=200, target_rel_err=0.01, seed=0):
        self.activation = activation
        self.depth = depth
        self.weight_variance = weight_variance
        self.bias_variance = bias_variance
        self.zero_bias_init = zero_bias_init
        self.width = width
        self.n_samples = n_samples
        self.target_rel_err = target_rel_err
        self.seed = seed

    def fit(self, X, y=None):
        x = check_spin_configurations(X)
        n = x.shape[1]
        if x.shape[0] != 2 ** n:
            raise ValueError(f"expected all {2 ** n} configurations, got {x.shape[0]} rows")
        self.n_features_in_ = n
        self.estimate_ = empirical_kernels(
            self._spec(), check_positive_int(self.width, "width"), n,
            n_samples=check_positive_int(self.n_samples, "n_samples", 2),
            target_rel_err=self.target_rel_err, seed=self.seed)
        self.ntk_ = self.estimate_.theta_hat
        self.ck_ = self.estimate_.k_hat
        return self

    def transform(self, X) -> np.ndarray:
        check_is_fitted(self, "ntk_")
        x = check_spin_configurations(X, self.n_features_in_)
        bits = (x < 0).astype(int)
        idx = bits @ (1 << np.arange(self.n_features_in_ - 1, -1, -1))
        return self.ntk_[idx]
