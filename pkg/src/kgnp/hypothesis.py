"""Latent-hypothesis encoder: labeled subgraph embeddings -> Gaussian over z.

Each (embedding, label) pair maps through a small MLP to a context vector;
the mean of all context vectors feeds a shared relu trunk with separate
linear heads for the mean and for the scale, the latter squashed into
[0.1, 1.0) so the reparameterized sample never degenerates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .encoder import SubgraphEmbedding
from .errors import DataError


@dataclass
class HypothesisParams:
    context_w1: Tensor
    context_b1: Tensor
    context_w2: Tensor
    context_b2: Tensor
    trunk_w: Tensor
    trunk_b: Tensor
    mu_w: Tensor
    mu_b: Tensor
    sigma_w: Tensor
    sigma_b: Tensor


@dataclass
class HypothesisDistribution:
    """Diagonal Gaussian over the latent hypothesis; ``source`` records its conditioning."""
    mu: Tensor
    sigma: Tensor
    source: str  # "prior" (support only) or "posterior" (support + labeled queries)


@dataclass
class HypothesisSample:
    z: Tensor
    epsilon: np.ndarray


def context_repr(emb: SubgraphEmbedding, label: int, params: HypothesisParams) -> Tensor:
    """Single-hidden-layer MLP over the embedding with its 0/1 label appended."""
    if label not in (0, 1):
        raise DataError(f"label must be 0 or 1, got {label!r}")
    x = ad.concat([emb.vector, ad.constant(np.array([float(label)]))])
    hidden = ad.relu(ad.linear(x, params.context_w1, params.context_b1))
    return ad.linear(hidden, params.context_w2, params.context_b2)


def aggregate(contexts: list[Tensor]) -> Tensor:
    """Arithmetic mean; permutation-invariant up to float associativity."""
    if not contexts:
        raise DataError("cannot aggregate an empty context set")
    return ad.sum_tensors(contexts) * (1.0 / len(contexts))


def distribution_params(zbar: Tensor, params: HypothesisParams, source: str) -> HypothesisDistribution:
    """Shared relu trunk, then mean head and a scale head squashed to [0.1, 1.0)."""
    hidden = ad.relu(ad.linear(zbar, params.trunk_w, params.trunk_b))
    mu = ad.linear(hidden, params.mu_w, params.mu_b)
    sigma = ad.sigmoid(ad.linear(hidden, params.sigma_w, params.sigma_b)) * 0.9 + 0.1
    return HypothesisDistribution(mu, sigma, source)


def sample_hypothesis(dist: HypothesisDistribution, rng=None, eps=None) -> HypothesisSample:
    """Reparameterized draw z = mu + sigma * eps; eps = 0 gives the mean exactly."""
    z = ad.gaussian_reparam(dist.mu, dist.sigma, rng=rng, eps=eps)
    return HypothesisSample(z, z.eps)


def encode_hypothesis(labeled: list[tuple[SubgraphEmbedding, int]],
                      params: HypothesisParams, mode: str) -> HypothesisDistribution:
    """Full pipeline context_repr -> aggregate -> distribution_params.

    ``mode`` is "prior" for support + support-negatives only, "posterior"
    when labeled query pairs are included as well.
    """
    if mode not in ("prior", "posterior"):
        raise DataError(f"mode must be 'prior' or 'posterior', got {mode!r}")
    if not labeled:
        raise DataError("encode_hypothesis needs at least one labeled embedding")
    contexts = [context_repr(emb, label, params) for emb, label in labeled]
    return distribution_params(aggregate(contexts), params, mode)
