"""Binary linear classifiers, dummy baseline, and the one-vs-rest ensemble.

Training minimizes lam/2 * ||w||^2 + mean(loss) by per-example SGD with
per-epoch shuffling. Hinge uses the Pegasos step eta_t = 1/(lam*(t+1));
logistic uses a constant step for the first epoch, then 1/t decay. The
bias is unregularized; its hinge step is eta_t * lam = 1/(t+1), which
keeps the first updates bounded when lam is small.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import scipy.sparse as sp
from numba import njit

from . import SOA_LABELS
from .corpus import IntensityLevel
from .features import FeatureVector

log = logging.getLogger(__name__)

LOSSES = ("hinge", "logistic")


class DegenerateLabelsError(ValueError):
    pass


class DimensionMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    loss: str = "hinge"
    lam: float = 1e-3
    epochs: int = 20
    seed: int = 0
    eta0: float = 0.5  # logistic only

    def __post_init__(self) -> None:
        if self.loss not in LOSSES:
            raise ValueError(f"loss must be one of {LOSSES}")
        if self.lam <= 0:
            raise ValueError("lam must be positive")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")

    def sort_key(self) -> tuple:
        return (self.loss, self.lam, self.epochs, self.eta0)

    def to_dict(self) -> dict:
        return {
            "loss": self.loss,
            "lam": self.lam,
            "epochs": self.epochs,
            "seed": self.seed,
            "eta0": self.eta0,
        }


@dataclass
class LinearModel:
    weights: np.ndarray
    bias: float
    config: TrainConfig
    label_name: str
    objective_history: list[float] = field(default_factory=list)

    @property
    def dim(self) -> int:
        return int(self.weights.shape[0])


@dataclass(frozen=True)
class DummyModel:
    positive_rate: float
    seed: int

    def predict(self, n: int) -> np.ndarray:
        rng = np.random.default_rng(self.seed)
        return rng.random(n) < self.positive_rate


@dataclass
class EnsembleModel:
    soa_models: dict[str, LinearModel]
    intensity_model: LinearModel | None
    skipped: dict[str, str] = field(default_factory=dict)
    manifest: dict = field(default_factory=dict)

    def all_models(self) -> dict[str, LinearModel]:
        out = dict(self.soa_models)
        if self.intensity_model is not None:
            out["intensity"] = self.intensity_model
        return out


def combine_intensity_labels(level: IntensityLevel | int) -> int:
    """Collapse the 3-level intensity annotation to extreme-vs-not."""
    value = level.level if isinstance(level, IntensityLevel) else int(level)
    if value not in (0, 1, 2):
        raise ValueError(f"intensity level must be 0/1/2, got {value}")
    return 1 if value == 2 else 0


@njit(cache=True)
def _hinge_epoch(data, indices, indptr, y, perm, lam, v, s, b, t):
    n = indptr.shape[0] - 1
    for ii in range(n):
        i = perm[ii]
        eta = 1.0 / (lam * (t + 1.0))
        factor = 1.0 - eta * lam  # = t / (t + 1)
        if factor <= 0.0:
            s = 1.0
            for j in range(v.shape[0]):
                v[j] = 0.0
        else:
            s *= factor
        dot = 0.0
        for p in range(indptr[i], indptr[i + 1]):
            dot += v[indices[p]] * data[p]
        if y[i] * (s * dot + b) < 1.0:
            coef = eta * y[i] / s
            for p in range(indptr[i], indptr[i + 1]):
                v[indices[p]] += coef * data[p]
            b += y[i] / (t + 1.0)
        t += 1.0
    return s, b, t


@njit(cache=True)
def _logistic_epoch(data, indices, indptr, y, perm, lam, eta0, warm, v, s, b, t):
    n = indptr.shape[0] - 1
    for ii in range(n):
        i = perm[ii]
        if t < warm:
            eta = eta0
        else:
            eta = eta0 * warm / t
        factor = 1.0 - eta * lam
        if factor <= 0.0:
            s = 1.0
            for j in range(v.shape[0]):
                v[j] = 0.0
        else:
            s *= factor
        dot = 0.0
        for p in range(indptr[i], indptr[i + 1]):
            dot += v[indices[p]] * data[p]
        margin = y[i] * (s * dot + b)
        if margin > 35.0:
            sig = 0.0
        elif margin < -35.0:
            sig = 1.0
        else:
            sig = 1.0 / (1.0 + math.exp(margin))
        if sig != 0.0:
            coef = eta * y[i] * sig / s
            for p in range(indptr[i], indptr[i + 1]):
                v[indices[p]] += coef * data[p]
            b += eta * y[i] * sig
        t += 1.0
    return s, b, t


def hinge_objective(
    w: np.ndarray, b: float, X: sp.csr_matrix, y_pm: np.ndarray, lam: float
) -> float:
    margins = y_pm * (X @ w + b)
    return 0.5 * lam * float(w @ w) + float(np.mean(np.maximum(0.0, 1.0 - margins)))


def logistic_objective_grad(
    w: np.ndarray, b: float, X: sp.csr_matrix, y_pm: np.ndarray, lam: float
) -> tuple[float, np.ndarray, float]:
    """Full-batch logistic objective with its analytic gradient."""
    scores = X @ w + b
    margins = y_pm * scores
    obj = 0.5 * lam * float(w @ w) + float(np.mean(np.logaddexp(0.0, -margins)))
    # d/ds log(1 + e^{-ys}) = -y * sigma(-ys)
    sig = 1.0 / (1.0 + np.exp(np.clip(margins, -35.0, 35.0)))
    coef = -y_pm * sig / len(y_pm)
    grad_w = lam * w + np.asarray(X.T @ coef).ravel()
    grad_b = float(np.sum(coef))
    return obj, grad_w, grad_b


def train_linear(
    X: sp.csr_matrix,
    y: np.ndarray,
    config: TrainConfig,
    label_name: str = "",
    track_objective: bool = False,
) -> LinearModel:
    """Fit one binary linear model; y holds 0/1 (or boolean) targets."""
    y = np.asarray(y).astype(np.float64)
    n, dim = X.shape
    if n == 0 or y.shape[0] != n:
        raise ValueError("X and y sizes disagree")
    positives = int(np.sum(y > 0.5))
    if positives == 0 or positives == n:
        raise DegenerateLabelsError(
            f"degenerate label distribution for {label_name or 'target'}: "
            f"{positives}/{n} positives"
        )
    y_pm = np.where(y > 0.5, 1.0, -1.0)
    X = X.tocsr().astype(np.float64)
    rng = np.random.default_rng(config.seed)
    v = np.zeros(dim)
    s, b, t = 1.0, 0.0, 0.0
    history: list[float] = []
    if track_objective:
        history.append(_objective(config, v * s, b, X, y_pm))
    warm = float(n)
    for _ in range(config.epochs):
        perm = rng.permutation(n).astype(np.int64)
        if config.loss == "hinge":
            s, b, t = _hinge_epoch(
                X.data, X.indices, X.indptr, y_pm, perm, config.lam, v, s, b, t
            )
        else:
            s, b, t = _logistic_epoch(
                X.data, X.indices, X.indptr, y_pm, perm, config.lam,
                config.eta0, warm, v, s, b, t,
            )
        if track_objective:
            history.append(_objective(config, v * s, b, X, y_pm))
    return LinearModel(
        weights=v * s,
        bias=float(b),
        config=config,
        label_name=label_name,
        objective_history=history,
    )


def _objective(config, w, b, X, y_pm) -> float:
    if config.loss == "hinge":
        return hinge_objective(w, b, X, y_pm, config.lam)
    return logistic_objective_grad(w, b, X, y_pm, config.lam)[0]


def decision_scores(model: LinearModel, X: sp.csr_matrix) -> np.ndarray:
    if X.shape[1] != model.dim:
        raise DimensionMismatchError(
            f"model {model.label_name!r} expects dim {model.dim}, got {X.shape[1]}"
        )
    return np.asarray(X @ model.weights + model.bias).ravel()


def predict_matrix(model: LinearModel, X: sp.csr_matrix) -> np.ndarray:
    return decision_scores(model, X) > 0.0


def predict(model: LinearModel, x: FeatureVector | np.ndarray) -> tuple[bool, float]:
    """(label, raw score) for a single feature vector; label is score > 0."""
    if isinstance(x, FeatureVector):
        if x.total_dim != model.dim:
            raise DimensionMismatchError(
                f"model {model.label_name!r} expects dim {model.dim}, "
                f"got {x.total_dim}"
            )
        score = model.bias
        for idx, wgt in x.sparse:
            score += model.weights[idx] * wgt
        dense_start = model.dim - len(x.dense)
        score += float(model.weights[dense_start:] @ x.dense)
    else:
        vec = np.asarray(x, dtype=np.float64)
        if vec.shape[0] != model.dim:
            raise DimensionMismatchError(
                f"model {model.label_name!r} expects dim {model.dim}, "
                f"got {vec.shape[0]}"
            )
        score = float(model.weights @ vec + model.bias)
    return score > 0.0, float(score)


def predict_probability(score: float) -> float:
    """sigma(score); meaningful for logistic-loss models."""
    return 1.0 / (1.0 + math.exp(-score))


def train_dummy(y: np.ndarray, seed: int) -> DummyModel:
    """Stratified baseline drawing positives at the training prior."""
    y = np.asarray(y).astype(np.float64)
    if y.shape[0] == 0:
        raise ValueError("empty targets")
    return DummyModel(positive_rate=float(np.mean(y > 0.5)), seed=seed)


def train_ovr(
    X: sp.csr_matrix,
    soa_targets: Mapping[str, np.ndarray],
    intensity_levels: Sequence[int] | np.ndarray,
    config: TrainConfig | Mapping[str, TrainConfig],
    track_objective: bool = False,
) -> EnsembleModel:
    """One independent binary model per SOA plus the intensity model.

    A label with fewer than two positives (or no negatives) is skipped and
    reported; per-label seeds are offset from the base config seed so no
    two models share an SGD stream.
    """
    def config_for(name: str, offset: int) -> TrainConfig:
        base = config[name] if isinstance(config, Mapping) else config
        return replace(base, seed=base.seed + offset)

    soa_models: dict[str, LinearModel] = {}
    skipped: dict[str, str] = {}
    seeds: dict[str, int] = {}
    for offset, name in enumerate(SOA_LABELS):
        if name not in soa_targets:
            skipped[name] = "no targets provided"
            continue
        y = np.asarray(soa_targets[name]).astype(np.float64)
        positives = int(np.sum(y > 0.5))
        if positives < 2:
            skipped[name] = f"only {positives} positive examples"
            continue
        if positives == y.shape[0]:
            skipped[name] = "no negative examples"
            continue
        cfg = config_for(name, offset)
        soa_models[name] = train_linear(
            X, y, cfg, label_name=name, track_objective=track_objective
        )
        seeds[name] = cfg.seed

    intensity_model: LinearModel | None = None
    y_int = np.asarray(
        [combine_intensity_labels(v) for v in intensity_levels], dtype=np.float64
    )
    positives = int(np.sum(y_int > 0.5))
    if positives < 2 or positives == y_int.shape[0]:
        skipped["intensity"] = f"{positives}/{y_int.shape[0]} positives"
    else:
        cfg = config_for("intensity", len(SOA_LABELS))
        intensity_model = train_linear(
            X, y_int, cfg, label_name="intensity", track_objective=track_objective
        )
        seeds["intensity"] = cfg.seed

    if skipped:
        for name, reason in skipped.items():
            log.warning("skipped %s model: %s", name, reason)
    return EnsembleModel(
        soa_models=soa_models,
        intensity_model=intensity_model,
        skipped=skipped,
        manifest={
            "seeds": seeds,
            "configs": {
                name: model.config.to_dict()
                for name, model in {**soa_models, **(
                    {"intensity": intensity_model} if intensity_model else {}
                )}.items()
            },
            "n_examples": int(X.shape[0]),
            "dim": int(X.shape[1]),
        },
    )


def save_ensemble(ensemble: EnsembleModel, directory: str | Path) -> None:
    """Write per-label weight files plus a models.json descriptor."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    descriptor: dict = {"labels": {}, "skipped": ensemble.skipped, "manifest": ensemble.manifest}
    for name, model in ensemble.all_models().items():
        weight_file = f"weights_{name}.npy"
        np.save(directory / weight_file, model.weights)
        descriptor["labels"][name] = {
            "weights": weight_file,
            "bias": model.bias,
            "config": model.config.to_dict(),
            "dim": model.dim,
        }
    (directory / "models.json").write_text(
        json.dumps(descriptor, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def load_ensemble(directory: str | Path) -> EnsembleModel:
    directory = Path(directory)
    descriptor = json.loads((directory / "models.json").read_text(encoding="utf-8"))
    soa_models: dict[str, LinearModel] = {}
    intensity_model: LinearModel | None = None
    for name, entry in descriptor["labels"].items():
        model = LinearModel(
            weights=np.load(directory / entry["weights"]),
            bias=float(entry["bias"]),
            config=TrainConfig(**entry["config"]),
            label_name=name,
        )
        if name == "intensity":
            intensity_model = model
        else:
            soa_models[name] = model
    return EnsembleModel(
        soa_models=soa_models,
        intensity_model=intensity_model,
        skipped=dict(descriptor.get("skipped", {})),
        manifest=dict(descriptor.get("manifest", {})),
    )
