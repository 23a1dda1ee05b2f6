"""Meta-learner zoo: T-Learner, X-Learner variants, clipped DR-Learner, and
the robust X-Learner with inverse-variance aggregation."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .boosting import (
    BoostConfig,
    BoostedEnsemble,
    fit_boosted,
    fit_boosted_logistic,
    load_model,
    predict_proba,
    save_model,
)
from .datasets import CausalDataset, winsorize_outcomes
from .losses import GAMMA_WELSCH, SQUARED, HUBER, LossSpec, mad_scale

KIND_T = "t"
KIND_X = "x"
KIND_RX = "rx"
KIND_DR = "dr_clipped"
KIND_WINSORIZED_X = "winsorized_x"
LEARNER_KINDS = (KIND_T, KIND_X, KIND_RX, KIND_DR, KIND_WINSORIZED_X)

AGG_PROPENSITY = "propensity"
AGG_INVERSE_VARIANCE = "inverse_variance"
AGG_FIXED = "fixed"
AGG_KINDS = (AGG_PROPENSITY, AGG_INVERSE_VARIANCE, AGG_FIXED)

PROPENSITY_KNOWN = "known"
PROPENSITY_FITTED = "fitted"

PROPENSITY_CLIP = 0.01
VARIANCE_FLOOR = 1e-16

MANIFEST_VERSION = 1


class MetaLearnerError(ValueError):
    """Raised for invalid meta-learner specs or degenerate inputs."""


@dataclass(frozen=True)
class AggregationScheme:
    kind: str = AGG_INVERSE_VARIANCE
    g: float = 0.5

    def __post_init__(self):
        if self.kind not in AGG_KINDS:
            raise MetaLearnerError(f"unknown aggregation kind {self.kind!r}")
        if self.kind == AGG_FIXED and not 0.0 <= self.g <= 1.0:
            raise MetaLearnerError("fixed aggregation weight must lie in [0, 1]")


@dataclass(frozen=True)
class MetaLearnerSpec:
    kind: str = KIND_RX
    base_loss: LossSpec = field(default_factory=LossSpec)
    stage3_loss: LossSpec = field(default_factory=LossSpec)
    aggregation: AggregationScheme = field(default_factory=AggregationScheme)
    boost_config: BoostConfig = field(default_factory=BoostConfig)
    propensity: str = PROPENSITY_KNOWN
    propensity_value: Optional[float] = None  # None = observed treated fraction

    def __post_init__(self):
        if self.kind not in LEARNER_KINDS:
            raise MetaLearnerError(f"unknown learner kind {self.kind!r}")
        if self.kind == KIND_RX and (
            self.base_loss.kind != GAMMA_WELSCH or self.stage3_loss.kind != GAMMA_WELSCH
        ):
            raise MetaLearnerError("rx learner requires gamma_welsch base and stage-3 losses")
        if self.propensity not in (PROPENSITY_KNOWN, PROPENSITY_FITTED):
            raise MetaLearnerError(f"unknown propensity mode {self.propensity!r}")


def rx_spec(gamma: float = 0.2, boost_config: BoostConfig = BoostConfig()) -> MetaLearnerSpec:
    loss = LossSpec(kind=GAMMA_WELSCH, gamma=gamma)
    return MetaLearnerSpec(
        kind=KIND_RX, base_loss=loss, stage3_loss=loss,
        aggregation=AggregationScheme(AGG_INVERSE_VARIANCE), boost_config=boost_config,
    )


def mse_x_spec(boost_config: BoostConfig = BoostConfig()) -> MetaLearnerSpec:
    loss = LossSpec(kind=SQUARED)
    return MetaLearnerSpec(
        kind=KIND_X, base_loss=loss, stage3_loss=loss,
        aggregation=AggregationScheme(AGG_PROPENSITY), boost_config=boost_config,
    )


def huber_x_spec(boost_config: BoostConfig = BoostConfig()) -> MetaLearnerSpec:
    loss = LossSpec(kind=HUBER)
    return MetaLearnerSpec(
        kind=KIND_X, base_loss=loss, stage3_loss=loss,
        aggregation=AggregationScheme(AGG_PROPENSITY), boost_config=boost_config,
    )


def winsorized_x_spec(boost_config: BoostConfig = BoostConfig()) -> MetaLearnerSpec:
    loss = LossSpec(kind=SQUARED)
    return MetaLearnerSpec(
        kind=KIND_WINSORIZED_X, base_loss=loss, stage3_loss=loss,
        aggregation=AggregationScheme(AGG_PROPENSITY), boost_config=boost_config,
    )


def dr_clipped_spec(boost_config: BoostConfig = BoostConfig()) -> MetaLearnerSpec:
    loss = LossSpec(kind=SQUARED)
    return MetaLearnerSpec(
        kind=KIND_DR, base_loss=loss, stage3_loss=loss,
        aggregation=AggregationScheme(AGG_FIXED, g=1.0), boost_config=boost_config,
    )


def t_spec(boost_config: BoostConfig = BoostConfig(),
           loss: LossSpec = LossSpec(kind=SQUARED)) -> MetaLearnerSpec:
    return MetaLearnerSpec(
        kind=KIND_T, base_loss=loss, stage3_loss=loss,
        aggregation=AggregationScheme(AGG_FIXED, g=0.5), boost_config=boost_config,
    )


@dataclass
class FittedCate:
    """Fitted meta-learner: response models, CATE models, variances, propensity."""

    kind: str
    mu0: BoostedEnsemble
    mu1: BoostedEnsemble
    tau0: Optional[BoostedEnsemble] = None
    tau1: Optional[BoostedEnsemble] = None
    final_model: Optional[BoostedEnsemble] = None  # dr_clipped only
    arm_variance: tuple = (1.0, 1.0)
    propensity_constant: Optional[float] = None
    propensity_model: Optional[BoostedEnsemble] = None
    aggregation: AggregationScheme = field(default_factory=AggregationScheme)

    def propensity_at(self, X) -> np.ndarray:
        if self.propensity_model is not None:
            return predict_proba(self.propensity_model, X, clip=PROPENSITY_CLIP)
        p = self.propensity_constant if self.propensity_constant is not None else 0.5
        return np.full(np.asarray(X).shape[0], float(np.clip(p, PROPENSITY_CLIP, 1 - PROPENSITY_CLIP)))


def impute_pseudo_outcomes(mu0: BoostedEnsemble, mu1: BoostedEnsemble, data: CausalDataset):
    """Cross-imputed pseudo-outcomes: d1 = Y - mu0(X) on treated,
    d0 = mu1(X) - Y on control."""
    treated, control = data.treated_idx, data.control_idx
    if treated.size == 0 or control.size == 0:
        raise MetaLearnerError("both arms must be nonempty for imputation")
    d1 = data.outcome[treated] - mu0.predict(data.features[treated])
    d0 = mu1.predict(data.features[control]) - data.outcome[control]
    return d1, d0


def fit_propensity(data: CausalDataset, spec: MetaLearnerSpec):
    """Constant propensity (known randomization) or a boosted logistic fit.

    Returns (constant, model); exactly one of the pair is set.
    """
    if spec.propensity == PROPENSITY_KNOWN:
        if spec.propensity_value is not None:
            return float(spec.propensity_value), None
        if data.true_propensity is not None:
            return float(data.true_propensity), None
        return float(np.mean(data.treatment)), None
    model = fit_boosted_logistic(data.features, data.treatment.astype(float), spec.boost_config)
    return None, model


def estimate_arm_variance(tau_model: BoostedEnsemble, features, pseudo_outcomes) -> float:
    """Precision proxy: squared MAD scale of stage-3 residuals over arm size."""
    resid = np.asarray(pseudo_outcomes, dtype=float) - tau_model.predict(features)
    var = mad_scale(resid) ** 2 / resid.size
    return max(var, VARIANCE_FLOOR)


def _check_arms(data: CausalDataset, config: BoostConfig):
    for name, idx in (("treated", data.treated_idx), ("control", data.control_idx)):
        if idx.size == 0:
            raise MetaLearnerError(f"{name} arm is empty")
        if idx.size < config.min_samples_leaf:
            raise MetaLearnerError(
                f"{name} arm has only {idx.size} units "
                f"(min_samples_leaf = {config.min_samples_leaf})"
            )


def fit_meta(data: CausalDataset, spec: MetaLearnerSpec) -> FittedCate:
    """Fit a meta-learner end to end on one dataset."""
    cfg = spec.boost_config
    _check_arms(data, cfg)

    if spec.kind == KIND_WINSORIZED_X:
        data = winsorize_outcomes(data, 0.01, 0.99)

    treated, control = data.treated_idx, data.control_idx
    Xt, Xc = data.features[treated], data.features[control]
    mu0 = fit_boosted(Xc, data.outcome[control], spec.base_loss, cfg)
    mu1 = fit_boosted(Xt, data.outcome[treated], spec.base_loss, cfg)

    p_const, p_model = fit_propensity(data, spec)
    fitted = FittedCate(
        kind=spec.kind, mu0=mu0, mu1=mu1,
        propensity_constant=p_const, propensity_model=p_model,
        aggregation=spec.aggregation,
    )

    if spec.kind == KIND_T:
        return fitted

    if spec.kind == KIND_DR:
        pi = fitted.propensity_at(data.features)
        w = data.treatment.astype(float)
        mu_w = np.where(w == 1, mu1.predict(data.features), mu0.predict(data.features))
        phi = (
            mu1.predict(data.features)
            - mu0.predict(data.features)
            + (w - pi) / (pi * (1.0 - pi)) * (data.outcome - mu_w)
        )
        fitted.final_model = fit_boosted(data.features, phi, spec.stage3_loss, cfg)
        return fitted

    d1, d0 = impute_pseudo_outcomes(mu0, mu1, data)
    fitted.tau1 = fit_boosted(Xt, d1, spec.stage3_loss, cfg)
    fitted.tau0 = fit_boosted(Xc, d0, spec.stage3_loss, cfg)
    fitted.arm_variance = (
        estimate_arm_variance(fitted.tau0, Xc, d0),
        estimate_arm_variance(fitted.tau1, Xt, d1),
    )
    return fitted


def aggregation_weights(model: FittedCate, X) -> np.ndarray:
    """Per-unit weight g on tau0 (weight on tau1 is 1 - g)."""
    n = np.asarray(X).shape[0]
    agg = model.aggregation
    if agg.kind == AGG_FIXED:
        return np.full(n, agg.g)
    if agg.kind == AGG_PROPENSITY:
        return model.propensity_at(X)
    v0, v1 = model.arm_variance
    return np.full(n, (1.0 / v0) / (1.0 / v0 + 1.0 / v1))


def predict_cate(model: FittedCate, features) -> np.ndarray:
    X = np.asarray(features, dtype=float)
    if model.kind == KIND_T:
        return model.mu1.predict(X) - model.mu0.predict(X)
    if model.kind == KIND_DR:
        return model.final_model.predict(X)
    g = aggregation_weights(model, X)
    return g * model.tau0.predict(X) + (1.0 - g) * model.tau1.predict(X)


# --- bundle serialization ----------------------------------------------------

def save_meta(model: FittedCate, bundle_dir) -> None:
    """Persist a fitted meta-learner as a directory of model files + manifest."""
    os.makedirs(bundle_dir, exist_ok=True)
    parts = {"mu0": model.mu0, "mu1": model.mu1}
    for name in ("tau0", "tau1", "final_model", "propensity_model"):
        part = getattr(model, name)
        if part is not None:
            parts[name] = part
    for name, part in parts.items():
        save_model(part, os.path.join(bundle_dir, f"{name}.json"))
    manifest = {
        "manifest_version": MANIFEST_VERSION,
        "kind": model.kind,
        "parts": sorted(parts),
        "arm_variance": list(model.arm_variance),
        "propensity_constant": model.propensity_constant,
        "aggregation": {"kind": model.aggregation.kind, "g": model.aggregation.g},
    }
    with open(os.path.join(bundle_dir, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)


def load_meta(bundle_dir) -> FittedCate:
    manifest_path = os.path.join(bundle_dir, "manifest.json")
    try:
        with open(manifest_path, "r", encoding="utf-8") as fh:
            manifest = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise MetaLearnerError(f"{manifest_path}: cannot read manifest: {exc}") from None
    if manifest.get("manifest_version") != MANIFEST_VERSION:
        raise MetaLearnerError(
            f"{manifest_path}: unsupported manifest version {manifest.get('manifest_version')!r}"
        )
    loaded = {
        name: load_model(os.path.join(bundle_dir, f"{name}.json"))
        for name in manifest["parts"]
    }
    return FittedCate(
        kind=manifest["kind"],
        mu0=loaded["mu0"],
        mu1=loaded["mu1"],
        tau0=loaded.get("tau0"),
        tau1=loaded.get("tau1"),
        final_model=loaded.get("final_model"),
        propensity_model=loaded.get("propensity_model"),
        arm_variance=tuple(manifest["arm_variance"]),
        propensity_constant=manifest["propensity_constant"],
        aggregation=AggregationScheme(**manifest["aggregation"]),
    )
