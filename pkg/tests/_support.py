"""Shared builders for small end-to-end instances."""

import numpy as np

from dagc.autodiff import Tensor
from dagc.graph import SparseAdjacency, normalize_adjacency
from dagc.losses import Hyperparams, model_loss
from dagc.model import ModelConfig, ModelParams, forward, init_params, target_distribution_p
from dagc.losses import pseudo_labels


def random_graph(rng, n, p=0.3):
    dense = np.triu(rng.random((n, n)) < p, 1)
    u, v = np.nonzero(dense)
    return SparseAdjacency.from_edges(n, u, v)


def small_instance(seed=0, n=12, d=5, k=3, dims=(6, 5, 8, 4), **cfg):
    """Random features, graph operator and parameters (centroids randomised too)."""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, d))
    op = normalize_adjacency(random_graph(rng, n))
    config = ModelConfig(n_input=d, n_clusters=k, dims=dims, **cfg)
    params = init_params(config, rng)
    params = params.replace(mu=rng.standard_normal((k, dims[-1])))
    # nonzero biases so every code path carries a gradient
    params = params.replace(**{name: 0.1 * rng.standard_normal(params[name].shape) for name in params.names() if name.endswith(".b")})
    return x, op, params


def frozen_loss_fn(x, op, params: ModelParams, hp: Hyperparams):
    """Total loss as a function of all parameter tensors, with P, the mask and
    pseudo-labels frozen at the base point (they are detached or piecewise)."""
    base = forward(params, x, op)
    p = target_distribution_p(base.z)
    labels, mask = pseudo_labels(base.z, hp.r)
    names = params.names()

    def f(*tensors):
        ps = ModelParams(params.config, dict(zip(names, tensors)))
        total, _ = model_loss(forward(ps, x, op), x, hp, p=p, mask=mask, labels=labels)
        return total

    return f, [Tensor(params[name].data) for name in names], mask
