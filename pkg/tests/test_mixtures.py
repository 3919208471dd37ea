import json
import math

import numpy as np
import pytest

from kdde.mixtures import (
    ClusterModel,
    ModelConfigError,
    NormalMixture,
    broken_ring,
    four_crescent,
    load_model,
    mixture_deriv,
    mixture_deriv_batch,
    psi_exact,
    sample_cluster_model,
    sample_mixture,
)
from oracles import grid


def test_single_normal_psi4_closed_form():
    # ψ_4 = ∫ (f'')² for N(0,1) equals 3 / (8 sqrt(pi))
    f = NormalMixture.single([0.0], [[1.0]])
    assert np.isclose(psi_exact(f, 2)[0], 3 / (8 * math.sqrt(math.pi)), rtol=1e-13)
    assert np.isclose(psi_exact(f, 0)[0], 1 / (2 * math.sqrt(math.pi)), rtol=1e-13)


@pytest.mark.parametrize("r", [0, 1, 2])
def test_psi_exact_quadrature_2d(r):
    f = load_model("bimodal-2d")
    pts, w = grid(2, -6.0, 6.0, 241)
    dens = f.pdf(pts)
    vals = (mixture_deriv_batch(f, pts, 2 * r) * dens[:, None]).sum(axis=0) * w
    ref = psi_exact(f, r)
    np.testing.assert_allclose(ref, vals, rtol=1e-6, atol=1e-9 * np.abs(ref).max())


def test_psi_sign_pattern():
    # (-1)^r vec(I)^{⊗r}' ψ_{2r} = ∫ ||D^{⊗r} f||² > 0
    f = load_model("bimodal-2d")
    I = np.eye(2).ravel()
    for r in range(3):
        v = np.ones(1)
        for _ in range(r):
            v = np.kron(v, I)
        assert (-1) ** r * psi_exact(f, r) @ v > 0


def test_covariance_and_sampling():
    f = load_model("bimodal-2d")
    s = sample_mixture(f, 40_000, seed=3)
    np.testing.assert_allclose(np.cov(s.points.T), f.covariance(), atol=0.03)
    np.testing.assert_allclose(f.covariance(), [[2.5, 0], [0, 0.25]])
    assert set(np.unique(s.labels)) == {0, 1}


def test_sampling_is_deterministic():
    f = load_model("normal-2d")
    a, b = sample_mixture(f, 50, 11), sample_mixture(f, 50, 11)
    assert np.array_equal(a.points, b.points)
    assert not np.array_equal(a.points, sample_mixture(f, 50, 12).points)


def test_mixture_deriv_is_weighted_sum():
    f = load_model("bimodal-2d")
    x = np.array([0.2, -0.1])
    from kdde.gauss import dphi

    ref = sum(w * dphi(x - m, S, 2) for w, m, S in zip(f.weights, f.means, f.covs))
    np.testing.assert_allclose(mixture_deriv(f, x, 2), ref)


def test_convolve_shifts_covariances():
    f = load_model("bimodal-2d")
    g = f.convolve(0.1 * np.eye(2))
    np.testing.assert_allclose(g.covs - f.covs, 0.1 * np.eye(2)[None].repeat(2, 0))


@pytest.mark.parametrize("name", ["normal-2d", "bimodal-2d", "two-gaussians", "trimodal-iii", "quadrimodal"])
def test_builtin_mixtures_load(name):
    f = load_model(name)
    assert isinstance(f, NormalMixture)
    assert np.isclose(f.weights.sum(), 1.0)


@pytest.mark.parametrize("name", ["4-crescent", "broken-ring", "eye"])
def test_builtin_cluster_models(name):
    m = load_model(name)
    s = sample_cluster_model(m, 500, seed=1)
    assert s.points.shape == (500, 2)
    assert np.all(np.isfinite(s.points))
    assert s.labels.max() == len(m.components) - 1


def test_crescent_geometry():
    comp = four_crescent().components[0]
    comp.weight = 1.0
    m = ClusterModel("one", [comp])
    pts = sample_cluster_model(m, 4000, seed=2).points
    # C((-1, 1), 1, kappa=1): points near the unit circle about (-1, 1), below the centre
    rad = np.linalg.norm(pts - [-1, 1], axis=1)
    assert abs(np.median(rad) - 1.0) < 0.02
    assert np.mean(pts[:, 1] < 1) > 0.99


def test_broken_ring_weights():
    m = broken_ring()
    np.testing.assert_allclose(sorted(m.weights), [3 / 16] * 4 + [1 / 4])


def test_model_from_file_with_fractions(tmp_path):
    cfg = {"name": "t", "kind": "normal-mixture", "d": 1,
           "components": [{"weight": "1/3", "mean": [0], "cov": [[1]]},
                          {"weight": "2/3", "mean": [2], "cov": [["1/2"]]}]}
    p = tmp_path / "m.json"
    p.write_text(json.dumps(cfg))
    f = load_model(str(p))
    assert np.isclose(f.weights[0], 1 / 3) and np.isclose(f.covs[1, 0, 0], 0.5)


@pytest.mark.parametrize(
    "cfg",
    [
        {"components": [{"weight": 0.5, "mean": [0], "cov": [[1]]}]},
        {"components": [{"weight": 1.0, "mean": [0], "cov": [[-1]]}]},
        {"kind": "spline", "components": []},
        {"d": 2, "components": [{"weight": 1.0, "mean": [0], "cov": [[1]]}]},
    ],
)
def test_bad_configs(cfg):
    with pytest.raises((ModelConfigError, ValueError)):
        load_model(cfg)


def test_unknown_model():
    with pytest.raises(ModelConfigError):
        load_model("no-such-model")
