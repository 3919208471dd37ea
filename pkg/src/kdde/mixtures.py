"""Target densities: normal mixtures with closed-form oracles, and labeled cluster models."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from importlib import resources
from pathlib import Path

import numpy as np

from .gauss import EtaSeries, dphi_batch
from .tensor import as_spd


class ModelConfigError(ValueError):
    """Malformed or unknown model definition."""


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based generator (Philox) seeded with a 64-bit integer."""
    return np.random.Generator(np.random.Philox(int(seed) % 2**64))


def _num(v) -> float:
    """Accept plain numbers or exact fraction strings such as ``"3/16"``."""
    if isinstance(v, str):
        return float(Fraction(v))
    return float(v)


def _check_weights(weights: np.ndarray):
    if np.any(weights <= 0):
        raise ModelConfigError("mixture weights must be positive")
    if abs(weights.sum() - 1.0) > 1e-12:
        raise ModelConfigError(f"mixture weights sum to {weights.sum()!r}, not 1")


@dataclass
class LabeledSample:
    points: np.ndarray
    labels: np.ndarray
    seed: int


@dataclass
class NormalMixture:
    """Weighted sum of Gaussian components ``Σ_k w_k φ_{Σ_k}(x - μ_k)``."""

    weights: np.ndarray
    means: np.ndarray
    covs: np.ndarray
    name: str = "mixture"

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float).reshape(-1)
        k = self.weights.size
        self.means = np.asarray(self.means, dtype=float).reshape(k, -1)
        d = self.means.shape[1]
        covs = np.asarray(self.covs, dtype=float).reshape(k, d, d)
        self.covs = np.array([as_spd(c, f"covariance of component {i}") for i, c in enumerate(covs)])
        _check_weights(self.weights)

    @classmethod
    def single(cls, mean, cov, name: str = "normal") -> "NormalMixture":
        mean = np.atleast_1d(np.asarray(mean, dtype=float))
        return cls([1.0], mean[None], np.atleast_2d(cov)[None], name)

    @property
    def d(self) -> int:
        return self.means.shape[1]

    @property
    def k(self) -> int:
        return self.weights.size

    def covariance(self) -> np.ndarray:
        """Overall covariance of the mixture."""
        mu = self.weights @ self.means
        dev = self.means - mu
        return np.einsum("k,kij->ij", self.weights, self.covs) + np.einsum(
            "k,ki,kj->ij", self.weights, dev, dev
        )

    def pdf(self, x) -> np.ndarray:
        return mixture_deriv_batch(self, x, 0)[:, 0]

    def convolve(self, H) -> "NormalMixture":
        """The mixture convolved with ``φ_H`` (covariances shifted by ``H``)."""
        return NormalMixture(self.weights, self.means, self.covs + np.asarray(H), self.name)


def mixture_deriv_batch(f: NormalMixture, x, r: int) -> np.ndarray:
    X = np.asarray(x, dtype=float)
    X = X.reshape(-1, f.d) if X.ndim >= 1 and X.shape[-1] == f.d else X.reshape(-1, 1)
    if X.shape[1] != f.d:
        raise ValueError(f"points have dimension {X.shape[1]}, mixture has {f.d}")
    out = np.zeros((X.shape[0], f.d**r))
    for w, mu, S in zip(f.weights, f.means, f.covs):
        out += w * dphi_batch(X - mu, S, r)
    return out


def mixture_deriv(f: NormalMixture, x, r: int) -> np.ndarray:
    """``D^{⊗r} f(x) = Σ_k w_k D^{⊗r} φ_{Σ_k}(x - μ_k)``."""
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size != f.d:
        raise ValueError(f"point has dimension {x.size}, mixture has {f.d}")
    return mixture_deriv_batch(f, x[None], r)[0]


def psi_exact(f: NormalMixture, r: int) -> np.ndarray:
    """``ψ_{2r} = ∫ D^{⊗2r} f · f = Σ_{i,j} w_i w_j D^{⊗2r} φ_{Σ_i+Σ_j}(μ_i - μ_j)``."""
    out = np.zeros(f.d ** (2 * r))
    for i in range(f.k):
        for j in range(f.k):
            out += (
                f.weights[i]
                * f.weights[j]
                * dphi_batch(f.means[i] - f.means[j], f.covs[i] + f.covs[j], 2 * r)[0]
            )
    return out


def component_pair_sum(f: NormalMixture, g: NormalMixture, extra, A, B, r: int, s: int) -> float:
    """``Σ_{i,j} v_i w_j η_{2r,2s}(μ_i - ν_j; A, B, Σ_i + Γ_j + extra)``."""
    total = []
    for wi, mi, Si in zip(f.weights, f.means, f.covs):
        for wj, mj, Sj in zip(g.weights, g.means, g.covs):
            ser = EtaSeries(A, B, Si + Sj + extra, r, s)
            total.append(wi * wj * float(ser((mi - mj)[None])[0]))
    return math.fsum(total)


def sample_mixture(f: NormalMixture, n: int, seed: int) -> LabeledSample:
    """i.i.d. draws: component by weight, then a Gaussian draw; labels recorded."""
    if n < 1:
        raise ValueError("n must be positive")
    rng = make_rng(seed)
    labels = rng.choice(f.k, size=n, p=f.weights)
    z = rng.standard_normal((n, f.d))
    chol = np.linalg.cholesky(f.covs)
    pts = f.means[labels] + np.einsum("nij,nj->ni", chol[labels], z)
    return LabeledSample(pts, labels, int(seed))


# -- cluster models -----------------------------------------------------------------

@dataclass
class Component:
    """One generator in a cluster model.

    ``type`` is ``"normal"`` (fields ``mean``, ``cov``) or ``"crescent"``:
    ``X = O + R (radius cos Θ, (-1)^kappa radius sin Θ)' + U`` with
    ``Θ ~ N(angle_mean, angle_sd^2)``, ``U ~ N(0, noise_sd^2 I)`` and ``R`` a
    rotation by ``rotation_deg`` about ``O`` applied to the arc and noise.
    """

    weight: float
    type: str
    params: dict = field(default_factory=dict)


@dataclass
class ClusterModel:
    name: str
    components: list[Component]

    def __post_init__(self):
        _check_weights(np.array([c.weight for c in self.components]))
        for c in self.components:
            if c.type not in ("normal", "crescent"):
                raise ModelConfigError(f"unknown component type {c.type!r}")

    @property
    def weights(self) -> np.ndarray:
        return np.array([c.weight for c in self.components])

    def as_normal_mixture(self) -> NormalMixture | None:
        if all(c.type == "normal" for c in self.components):
            return NormalMixture(
                self.weights,
                [c.params["mean"] for c in self.components],
                [c.params["cov"] for c in self.components],
                self.name,
            )
        return None


def crescent(weight, center, radius, kappa, rotation_deg=0.0) -> Component:
    """``C(O, r, κ)``: mean angle π/2, angle sd π/6, noise sd r/20."""
    return Component(
        weight,
        "crescent",
        dict(
            center=list(map(float, center)),
            radius=float(radius),
            kappa=int(kappa),
            angle_mean=math.pi / 2,
            angle_sd=math.pi / 6,
            noise_sd=float(radius) / 20,
            rotation_deg=float(rotation_deg),
        ),
    )


def half_crescent(weight, theta) -> Component:
    """``HC(θ)``: unit radius about the origin, angle sd π/12, noise sd 1/20."""
    return Component(
        weight,
        "crescent",
        dict(
            center=[0.0, 0.0],
            radius=1.0,
            kappa=0,
            angle_mean=float(theta),
            angle_sd=math.pi / 12,
            noise_sd=1.0 / 20,
            rotation_deg=0.0,
        ),
    )


def normal_component(weight, mean, cov) -> Component:
    return Component(weight, "normal", dict(mean=np.asarray(mean, float), cov=np.asarray(cov, float)))


def _draw_component(c: Component, m: int, rng: np.random.Generator) -> np.ndarray:
    p = c.params
    if c.type == "normal":
        mean = np.asarray(p["mean"], float)
        chol = np.linalg.cholesky(as_spd(p["cov"]))
        return mean + rng.standard_normal((m, mean.size)) @ chol.T
    theta = rng.normal(p["angle_mean"], p["angle_sd"], size=m)
    noise = rng.normal(0.0, p["noise_sd"], size=(m, 2))
    rad = p["radius"]
    arc = np.column_stack([rad * np.cos(theta), (-1) ** p["kappa"] * rad * np.sin(theta)])
    offset = arc + noise
    rot = p.get("rotation_deg", 0.0)
    if rot:
        a = math.radians(rot)
        R = np.array([[math.cos(a), -math.sin(a)], [math.sin(a), math.cos(a)]])
        offset = offset @ R.T
    return np.asarray(p["center"], float) + offset


def sample_cluster_model(model: ClusterModel, n: int, seed: int) -> LabeledSample:
    """Draw ``n`` labeled points; the label is the generating component's index."""
    if n < 1:
        raise ValueError("n must be positive")
    rng = make_rng(seed)
    labels = rng.choice(len(model.components), size=n, p=model.weights)
    dims = {2 if c.type == "crescent" else len(c.params["mean"]) for c in model.components}
    if len(dims) != 1:
        raise ModelConfigError("components disagree on dimension")
    pts = np.zeros((n, dims.pop()))
    for k, comp in enumerate(model.components):
        idx = np.flatnonzero(labels == k)
        if idx.size:
            pts[idx] = _draw_component(comp, idx.size, rng)
    return LabeledSample(pts, labels, int(seed))


def four_crescent() -> ClusterModel:
    return ClusterModel(
        "4-crescent",
        [
            crescent(0.25, (-1, 1), 1, 1),
            crescent(0.25, (0, 0.5), 1, 0),
            crescent(0.25, (0, 0), 0.5, 1),
            crescent(0.25, (0.5, -0.5), 0.5, 0),
        ],
    )


def broken_ring() -> ClusterModel:
    return ClusterModel(
        "broken-ring",
        [normal_component(0.25, [0, 0], np.eye(2) / 25)]
        + [half_crescent(3 / 16, k * math.pi / 4) for k in (1, 3, 5, 7)],
    )


def eye() -> ClusterModel:
    # radius-1.5 crescents rotated by +90 degrees: (x, y) -> (-y, x)
    return ClusterModel(
        "eye",
        [
            normal_component(1 / 20, [0, 0], np.eye(2) / 25),
            crescent(1 / 8, (0, 0), 1, 0),
            crescent(1 / 8, (0, 0), 1, 1),
            crescent(7 / 20, (0, 0), 1.5, 0, rotation_deg=90),
            crescent(7 / 20, (0, 0), 1.5, 1, rotation_deg=90),
        ],
    )


BUILTIN_CLUSTER_MODELS = {"4-crescent": four_crescent, "broken-ring": broken_ring, "eye": eye}


# -- config files ---------------------------------------------------------------------

def mixture_from_dict(cfg: dict) -> NormalMixture:
    try:
        comps = cfg["components"]
        weights = [_num(c["weight"]) for c in comps]
        means = [[_num(v) for v in c["mean"]] for c in comps]
        covs = [[[_num(v) for v in row] for row in c["cov"]] for c in comps]
    except (KeyError, TypeError) as exc:
        raise ModelConfigError(f"malformed mixture definition: {exc}") from exc
    f = NormalMixture(weights, means, covs, cfg.get("name", "mixture"))
    if "d" in cfg and int(cfg["d"]) != f.d:
        raise ModelConfigError(f"declared d={cfg['d']} but components have d={f.d}")
    return f


def cluster_model_from_dict(cfg: dict) -> ClusterModel:
    comps = []
    for c in cfg.get("components", []):
        ctype = c.get("type", "normal")
        w = _num(c["weight"])
        if ctype == "normal":
            comps.append(
                normal_component(w, [_num(v) for v in c["mean"]], [[_num(v) for v in row] for row in c["cov"]])
            )
        elif ctype == "crescent":
            comp = crescent(w, [_num(v) for v in c["center"]], _num(c["radius"]), int(c["kappa"]),
                            _num(c.get("rotation_deg", 0.0)))
            for key in ("angle_mean", "angle_sd", "noise_sd"):
                if key in c:
                    comp.params[key] = _num(c[key])
            comps.append(comp)
        elif ctype == "half_crescent":
            comps.append(half_crescent(w, _num(c["theta"])))
        else:
            raise ModelConfigError(f"unknown component type {ctype!r}")
    return ClusterModel(cfg.get("name", "model"), comps)


def _builtin_config_path(name: str) -> Path | None:
    ref = resources.files("kdde") / "models" / f"{name}.json"
    return Path(str(ref)) if ref.is_file() else None


def load_model(spec: str | dict) -> NormalMixture | ClusterModel:
    """Resolve a model by built-in name, JSON file path, or already-parsed dict.

    JSON schema: ``{"name", "kind": "normal-mixture" | "crescent-mixture",
    "d", "components": [...]}``.  Normal components carry ``weight``, ``mean``
    and ``cov``; crescent components carry ``type: "crescent"``, ``center``,
    ``radius``, ``kappa`` and optional ``rotation_deg``, ``angle_mean``,
    ``angle_sd``, ``noise_sd``; ``type: "half_crescent"`` takes ``theta``.
    Numbers may be written as fraction strings (``"3/16"``).
    """
    if isinstance(spec, dict):
        cfg = spec
    elif spec in BUILTIN_CLUSTER_MODELS:
        return BUILTIN_CLUSTER_MODELS[spec]()
    else:
        path = _builtin_config_path(spec) or Path(spec)
        if not path.is_file():
            raise ModelConfigError(f"unknown model {spec!r}")
        cfg = json.loads(path.read_text())
    kind = cfg.get("kind", "normal-mixture")
    if kind == "normal-mixture":
        return mixture_from_dict(cfg)
    if kind == "crescent-mixture":
        return cluster_model_from_dict(cfg)
    raise ModelConfigError(f"unknown model kind {kind!r}")


def as_cluster_model(model: NormalMixture | ClusterModel) -> ClusterModel:
    if isinstance(model, ClusterModel):
        return model
    return ClusterModel(
        model.name,
        [normal_component(w, m, S) for w, m, S in zip(model.weights, model.means, model.covs)],
    )
