"""Server-side aggregation strategies.

All strategies consume the round's ClientUpdates (sorted by client id)
and produce the global update G, which the round loop applies as
w <- w - step_scale * G. Adaptive strategies also carry persistent
moment state across rounds.

Strategies:
  fedavg       sample-count weighted mean of pseudo-gradients
  fedopt       server-side Adam / Adagrad / Yogi on the mean gradient,
               with the adaptive step sqrt(1-b2^r)/(1-b1^r)
  fedams       fedopt-adam with a running element-wise max in the
               denominator (AMSGrad-style stabilization)
  ewwa         element-wise adaptive weighting: per-client moments and
               bias-corrected contribution scores, turned into
               per-element proportions by a cross-client softmax
  fedadp       per-client scalar weights from the angle between each
               client's gradient and the round's mean gradient, smoothed
               across rounds and mapped through a Gompertz curve
  fedboosting  per-client scalar weights from a softmax over train
               accuracy times summed cross-validation accuracy
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import EmptyFederationError, StructureMismatchError
from .tensors import (
    ParameterSet,
    cross_client_softmax,
    flat_inner_product,
    l2_norm,
    mean,
    scale,
    zip_map,
)
from .training import ClientUpdate

log = logging.getLogger(__name__)

STRATEGIES = ("fedavg", "fedopt", "fedams", "ewwa", "fedadp", "fedboosting")
VARIANTS = ("adam", "adagrad", "yogi")


@dataclass(frozen=True)
class AggregatorConfig:
    strategy: str = "fedavg"
    variant: str = "adam"
    server_lr: float = 1.0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    adp_alpha: float = 5.0

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if not 0.0 <= self.beta1 < 1.0 or not 0.0 <= self.beta2 < 1.0:
            raise ValueError("beta1 and beta2 must lie in [0, 1)")
        if self.server_lr <= 0 or self.epsilon <= 0 or self.adp_alpha <= 0:
            raise ValueError("server_lr, epsilon, adp_alpha must be > 0")


@dataclass(frozen=True)
class AggregatorState:
    round: int
    m: ParameterSet
    v: ParameterSet
    v_max: ParameterSet
    smoothed_angles: dict = field(default_factory=dict)  # client_id -> angle


def initial_state(template: ParameterSet) -> AggregatorState:
    zeros = ParameterSet.zeros_like(template)
    return AggregatorState(round=0, m=zeros, v=zeros, v_max=zeros,
                           smoothed_angles={})


def _sorted(updates: list[ClientUpdate]) -> list[ClientUpdate]:
    if not updates:
        raise EmptyFederationError("no client updates")
    out = sorted(updates, key=lambda u: u.client_id)
    first = out[0].pseudo_gradient
    for u in out[1:]:
        first.check_structure(u.pseudo_gradient)
    return out


def _second_moment(variant: str, v_prev: ParameterSet, g: ParameterSet,
                   beta2: float) -> ParameterSet:
    if variant == "adam":
        return zip_map(v_prev, g, lambda v, gg: beta2 * v + (1 - beta2) * gg * gg)
    if variant == "adagrad":
        return zip_map(v_prev, g, lambda v, gg: v + gg * gg)
    # yogi: additive form keeps v >= 0 from zero init; sign(0) = 0
    return zip_map(
        v_prev, g,
        lambda v, gg: v - (1 - beta2) * gg * gg * np.sign(v - gg * gg),
    )


def fedavg_aggregate(updates: list[ClientUpdate]) -> ParameterSet:
    """Sample-count weighted mean of client pseudo-gradients."""
    updates = _sorted(updates)
    total = sum(u.num_samples for u in updates)
    acc = scale(updates[0].pseudo_gradient, updates[0].num_samples / total)
    for u in updates[1:]:
        acc = zip_map(acc, u.pseudo_gradient,
                      lambda a, g, w=u.num_samples / total: a + w * g)
    return acc


def adaptive_step_size(server_lr: float, beta1: float, beta2: float,
                       r: int) -> float:
    """Round-dependent step sqrt(1 - beta2^r) / (1 - beta1^r), scaled."""
    return server_lr * np.sqrt(1.0 - beta2 ** r) / (1.0 - beta1 ** r)


def fedopt_aggregate(updates: list[ClientUpdate], state: AggregatorState,
                     cfg: AggregatorConfig) -> tuple[ParameterSet, AggregatorState]:
    """Adaptive server optimizer on the uniform mean gradient."""
    updates = _sorted(updates)
    r = state.round + 1
    g_mean = mean([u.pseudo_gradient for u in updates])
    m = zip_map(state.m, g_mean, lambda mm, gg: cfg.beta1 * mm + (1 - cfg.beta1) * gg)
    v = _second_moment(cfg.variant, state.v, g_mean, cfg.beta2)
    eta = adaptive_step_size(cfg.server_lr, cfg.beta1, cfg.beta2, r)
    big_g = zip_map(m, v, lambda mm, vv: eta * mm / (np.sqrt(vv) + cfg.epsilon))
    return big_g, replace(state, round=r, m=m, v=v)


def fedams_aggregate(updates: list[ClientUpdate], state: AggregatorState,
                     cfg: AggregatorConfig) -> tuple[ParameterSet, AggregatorState]:
    """fedopt-adam with a max-stabilized denominator."""
    updates = _sorted(updates)
    r = state.round + 1
    g_mean = mean([u.pseudo_gradient for u in updates])
    m = zip_map(state.m, g_mean, lambda mm, gg: cfg.beta1 * mm + (1 - cfg.beta1) * gg)
    v = _second_moment("adam", state.v, g_mean, cfg.beta2)
    v_max = zip_map(state.v_max, v, np.maximum)
    eta = adaptive_step_size(cfg.server_lr, cfg.beta1, cfg.beta2, r)
    big_g = zip_map(m, v_max, lambda mm, vv: eta * mm / (np.sqrt(vv) + cfg.epsilon))
    return big_g, replace(state, round=r, m=m, v=v, v_max=v_max)


def ewwa_aggregate(updates: list[ClientUpdate], state: AggregatorState,
                   cfg: AggregatorConfig, return_proportions: bool = False):
    """Element-wise adaptive aggregation.

    Per client: moments from the shared previous state, bias correction,
    contribution score b = lr * m_hat / (sqrt(v_hat) + eps). A softmax
    across clients at every element yields per-element proportions, and
    G is the proportion-weighted sum of client gradients. The shared
    state advances to the uniform mean of the per-client moments.
    """
    updates = _sorted(updates)
    r = state.round + 1
    bc1 = 1.0 - cfg.beta1 ** r
    bc2 = 1.0 - cfg.beta2 ** r
    per_client_m: list[ParameterSet] = []
    per_client_v: list[ParameterSet] = []
    contributions: list[ParameterSet] = []
    for u in updates:
        g = u.pseudo_gradient
        m_c = zip_map(state.m, g, lambda mm, gg: cfg.beta1 * mm + (1 - cfg.beta1) * gg)
        v_c = _second_moment(cfg.variant, state.v, g, cfg.beta2)
        b_c = zip_map(
            m_c, v_c,
            lambda mm, vv: cfg.server_lr * (mm / bc1) / (np.sqrt(vv / bc2) + cfg.epsilon),
        )
        per_client_m.append(m_c)
        per_client_v.append(v_c)
        contributions.append(b_c)
    proportions = cross_client_softmax(contributions)
    acc = ParameterSet.zeros_like(state.m)
    for p, u in zip(proportions, updates):
        acc = zip_map(acc, zip_map(p, u.pseudo_gradient, np.multiply), np.add)
    new_state = replace(state, round=r, m=mean(per_client_m), v=mean(per_client_v))
    if return_proportions:
        return acc, new_state, proportions
    return acc, new_state


def gompertz_contribution(smoothed_angle: float, alpha: float) -> float:
    """Saturating angle-to-contribution map alpha*(1 - exp(-exp(alpha*(1-angle))))."""
    return alpha * (1.0 - 1.0 / np.exp(np.exp(alpha * (1.0 - smoothed_angle))))


def _scalar_softmax(values: np.ndarray) -> np.ndarray:
    e = np.exp(values - values.max())
    return e / e.sum()


def fedadp_aggregate(updates: list[ClientUpdate], state: AggregatorState,
                     cfg: AggregatorConfig, global_mean_grad: ParameterSet,
                     ) -> tuple[ParameterSet, AggregatorState]:
    """Angle-based per-client weighting with running-mean smoothing."""
    updates = _sorted(updates)
    r = state.round + 1
    norm_global = l2_norm(global_mean_grad)
    angles = {}
    for u in updates:
        norm_local = l2_norm(u.pseudo_gradient)
        if norm_global < 1e-300 or norm_local < 1e-300:
            log.warning("client %d: zero-norm gradient, neutral angle", u.client_id)
            theta = np.pi / 2.0
        else:
            cos = flat_inner_product(global_mean_grad, u.pseudo_gradient) / (
                norm_global * norm_local
            )
            theta = float(np.arccos(np.clip(cos, -1.0, 1.0)))
        prev = state.smoothed_angles.get(u.client_id)
        angles[u.client_id] = theta if prev is None else ((r - 1) * prev + theta) / r
    contribs = np.array([
        gompertz_contribution(angles[u.client_id], cfg.adp_alpha) for u in updates
    ])
    weights = _scalar_softmax(contribs)
    acc = scale(updates[0].pseudo_gradient, weights[0])
    for w, u in zip(weights[1:], updates[1:]):
        acc = zip_map(acc, u.pseudo_gradient, lambda a, g, w=w: a + w * g)
    return acc, replace(state, round=r, smoothed_angles=angles)


def fedboosting_aggregate(updates: list[ClientUpdate], cross_val: np.ndarray,
                          train_metrics: np.ndarray) -> ParameterSet:
    """Nested-softmax weighting from train accuracy and cross-validation.

    cross_val[i][j] is model i's validation accuracy on client j's
    held-out split; train_metrics[i] is client i's final train accuracy.
    """
    updates = _sorted(updates)
    c = len(updates)
    cross_val = np.asarray(cross_val, dtype=np.float64)
    train_metrics = np.asarray(train_metrics, dtype=np.float64)
    if cross_val.shape != (c, c):
        raise StructureMismatchError(
            f"cross_val shape {cross_val.shape}, expected {(c, c)}"
        )
    if train_metrics.shape != (c,):
        raise StructureMismatchError(
            f"train_metrics shape {train_metrics.shape}, expected {(c,)}"
        )
    s = _scalar_softmax(train_metrics)
    off_diag_sums = cross_val.sum(axis=1) - np.diag(cross_val)
    weights = _scalar_softmax(s * off_diag_sums)
    acc = scale(updates[0].pseudo_gradient, weights[0])
    for w, u in zip(weights[1:], updates[1:]):
        acc = zip_map(acc, u.pseudo_gradient, lambda a, g, w=w: a + w * g)
    return acc
