"""Kernel density derivative estimation with unconstrained bandwidth matrices."""

from .estimator import KdeModel, kde, kde_deriv, kde_grid, psi_hat
from .gauss import cross_integral, dphi, eta, eta_short, nu
from .meanshift import (
    MeanShiftConfig,
    Partition,
    adjusted_rand_index,
    cluster,
    correct_insignificant,
    mean_shift_path,
    mean_shift_step,
)
from .mise import amise, exact_mise, ise, oracle_bandwidth
from .mixtures import NormalMixture, load_model, psi_exact, sample_cluster_model, sample_mixture
from .optimize import OptimizerConfig, pd_optimize
from .selectors import (
    SelectorConfig,
    SelectorResult,
    cv_criterion,
    cv_select,
    nr_bandwidth,
    pi_criterion,
    pi_select,
    scv_criterion,
    scv_select,
    select,
)

__version__ = "0.1.0"
