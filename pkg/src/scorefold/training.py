"""Denoising score matching training for :class:`PairwiseScoreNet`."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .conditioning import DEFAULT_PE_WIDTH, expected_distance_weights, far_probability_weights
from .errors import ConfigError, InvalidInputError, TrainingError
from .geometry import distance_matrix
from .net import Adam, PairwiseScoreNet
from .noise import NoiseSchedule, geometric_schedule
from .score import chain_rule_backward, chain_rule_gradients

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    epochs: int = 200
    batch: int = 8
    lr: float = 1e-4
    crop: int | None = 32
    seed: int = 0
    repeats: int = 1  # draws per structure per epoch
    schedule: NoiseSchedule = field(default_factory=geometric_schedule)


@dataclass
class TrainResult:
    net: PairwiseScoreNet
    train_losses: list
    valid_losses: list
    best_epoch: int


def make_net(width=32, blocks=2, seed=0, pe_width=DEFAULT_PE_WIDTH) -> PairwiseScoreNet:
    """Score network sized for assembled bundles, with its distance and gate skips
    initialised from the distance-histogram layout."""
    prior = expected_distance_weights(pe_width)
    return PairwiseScoreNet(len(prior), width=width, blocks=blocks, seed=seed,
                            distance_prior=prior, gate_prior=far_probability_weights(pe_width))


def sample_loss_and_grad(net, X, features, sigma, noise, need_grad=True):
    """Loss sigma^2/2 ||G - (X - X~)/sigma^2||^2 for one draw and its parameter gradient."""
    X_tilde = X + sigma * noise
    cond = net.project_conditioning(features)
    H, cache = net.forward(distance_matrix(X_tilde), cond, sigma, features=features)
    resid = chain_rule_gradients(H, X_tilde) - (X - X_tilde) / sigma ** 2
    loss = 0.5 * sigma ** 2 * float((resid ** 2).sum())
    if not need_grad:
        return loss, None
    dH = chain_rule_backward(sigma ** 2 * resid, X_tilde)
    return loss, net.backward(cache, dH)


def random_crop(structure, bundle, crop, rng):
    L = len(structure)
    if crop is None or crop >= L:
        return structure.coords, bundle
    start = int(rng.integers(L - crop + 1))
    return structure.coords[start:start + crop], bundle.crop(start, crop)


def draw(item, schedule, crop, rng):
    """One training draw: crop window, level index and unit noise."""
    structure, bundle = item
    X, sub = random_crop(structure, bundle, crop, rng)
    k = int(rng.integers(len(schedule)))
    noise = rng.standard_normal(X.shape)
    return X, sub, k, noise


def batch_loss_and_grad(net, draws, schedule, need_grad=True):
    total, grads = 0.0, None
    for X, bundle, k, noise in draws:
        loss, g = sample_loss_and_grad(net, X, bundle.features(), schedule[k], noise, need_grad)
        total += loss
        if need_grad:
            grads = g if grads is None else {n: grads[n] + g[n] for n in grads}
    n = len(draws)
    if need_grad:
        grads = {k: v / n for k, v in grads.items()}
    return total / n, grads


def evaluate_loss(net, dataset, schedule, seed, repeats=1, crop=None):
    """Mean DSM loss over fixed draws (same draws for the same seed)."""
    rng = np.random.default_rng(seed)
    draws = [draw(item, schedule, crop, rng) for item in dataset for _ in range(repeats)]
    return batch_loss_and_grad(net, draws, schedule, need_grad=False)[0]


def train(net, dataset, config: TrainConfig, valid=None, callback=None) -> TrainResult:
    """Minimise the DSM loss with Adam.

    ``dataset`` and ``valid`` are lists of ``(Structure, ConditioningBundle)``.
    When ``valid`` is given, the returned net carries the parameters of the
    epoch with the lowest validation loss; otherwise those of the last epoch.
    """
    if not dataset:
        raise InvalidInputError("training set is empty")
    if config.crop is not None and config.crop > min(len(s) for s, _ in dataset):
        raise ConfigError(f"crop {config.crop} exceeds the shortest training structure")
    if config.epochs < 0 or config.batch < 1 or config.lr < 0 or config.repeats < 1:
        raise ConfigError("epochs >= 0, batch >= 1, lr >= 0 and repeats >= 1 are required")
    schedule = config.schedule
    rng = np.random.default_rng(config.seed)
    opt = Adam(net.params, lr=config.lr)
    train_losses, valid_losses = [], []
    best_loss, best_params, best_epoch = np.inf, None, -1
    items = [item for item in dataset for _ in range(config.repeats)]
    for epoch in range(config.epochs):
        order = rng.permutation(len(items))
        losses = []
        for start in range(0, len(order), config.batch):
            draws = [draw(items[i], schedule, config.crop, rng) for i in order[start:start + config.batch]]
            # divergence is detected and reported just below
            with np.errstate(over="ignore", invalid="ignore"):
                loss, grads = batch_loss_and_grad(net, draws, schedule)
            if not np.isfinite(loss) or not all(np.isfinite(g).all() for g in grads.values()):
                raise TrainingError("loss diverged", epoch)
            opt.step(net.params, grads)
            losses.append(loss * len(draws))
        epoch_loss = sum(losses) / len(items)
        train_losses.append(epoch_loss)
        if valid:
            with np.errstate(over="ignore", invalid="ignore"):
                vloss = evaluate_loss(net, valid, schedule, seed=config.seed + 1_000_003, crop=config.crop)
            if not np.isfinite(vloss):
                raise TrainingError("validation loss diverged", epoch)
            valid_losses.append(vloss)
            if vloss < best_loss:
                best_loss, best_epoch = vloss, epoch
                best_params = {k: v.copy() for k, v in net.params.items()}
        log.debug("epoch %d train %.4f valid %s", epoch, epoch_loss, valid_losses[-1] if valid else "-")
        if callback is not None:
            callback(epoch, net, epoch_loss)
    if best_params is not None:
        net.params = best_params
    else:
        best_epoch = config.epochs - 1
    return TrainResult(net, train_losses, valid_losses, best_epoch)
