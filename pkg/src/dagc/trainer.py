"""K-means initialization, auto-encoder pretraining and joint training."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Tensor
from .errors import DegenerateInputError, DivergenceError, ParameterError
from .graph import SparseAdjacency, normalize_adjacency
from .losses import Hyperparams, LossBreakdown, model_loss, reconstruction_loss
from .metrics import evaluate
from .model import DEFAULT_DIMS, ModelConfig, ModelParams, dae_forward, forward, init_params, predict_labels

log = logging.getLogger(__name__)

ALTERNATE_LR = 1e-4


@dataclass(frozen=True)
class TrainConfig:
    n_clusters: int
    dims: tuple[int, ...] = DEFAULT_DIMS
    pretrain_epochs: int = 30
    pretrain_lr: float = 1e-3
    joint_iterations: int = 200
    joint_lr: float = 1e-3
    batch_size: int = 256
    seed: int = 0
    hyper: Hyperparams = field(default_factory=Hyperparams)
    hwf_attention: bool = True
    swf_attention: bool = True
    dwf: bool = True
    detach_q: bool = False

    def __post_init__(self):
        counts = (self.n_clusters, self.pretrain_epochs, self.joint_iterations, self.batch_size)
        if min(counts) < 1:
            raise ParameterError("cluster count, epochs, iterations and batch size must be >= 1")
        if self.pretrain_lr <= 0 or self.joint_lr <= 0:
            raise ParameterError("learning rates must be positive")

    def model_config(self, n_input: int) -> ModelConfig:
        return ModelConfig(
            n_input=n_input,
            n_clusters=self.n_clusters,
            dims=self.dims,
            alpha=self.hyper.alpha,
            hwf_attention=self.hwf_attention,
            swf_attention=self.swf_attention,
            dwf=self.dwf,
            detach_q=self.detach_q,
        )


@dataclass
class IterationRecord:
    iteration: int
    losses: LossBreakdown
    metrics: dict[str, float] | None = None


@dataclass
class ClusteringReport:
    labels: np.ndarray
    log: list[IterationRecord]
    metrics: dict[str, float] | None = None
    pretrain_losses: list[float] = field(default_factory=list)


# ---------------------------------------------------------------------------
# k-means


def _sq_dists(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    diff = points[:, None, :] - centroids[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def _kmeans_pp(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    chosen = [int(rng.integers(n))]
    closest = _sq_dists(points, points[chosen]).min(axis=1)
    for _ in range(1, k):
        total = closest.sum()
        if not np.isfinite(total):
            raise DegenerateInputError("k-means distances overflow")
        if total > 0:
            idx = int(rng.choice(n, p=closest / total))
        else:
            idx = int(rng.integers(n))
        chosen.append(idx)
        closest = np.minimum(closest, _sq_dists(points, points[[idx]])[:, 0])
    return points[chosen].copy()


def lloyd(points, k: int, seed=0, max_iter: int = 300, tol: float = 1e-4):
    """k-means++ seeding followed by Lloyd iterations.

    ``seed`` is an int or a ``numpy.random.Generator``. Returns
    ``(centroids, labels, inertia_history)``; the history holds the inertia
    after every assignment step.
    """
    points = np.asarray(points, dtype=np.float64)
    n = points.shape[0]
    if not 1 <= k <= n:
        raise ParameterError(f"k-means needs 1 <= k <= n (k={k}, n={n})")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    centroids = _kmeans_pp(points, k, rng)
    history = []
    for _ in range(max_iter):
        dist = _sq_dists(points, centroids)
        labels = dist.argmin(axis=1)
        sizes = np.bincount(labels, minlength=k)
        if np.any(sizes == 0):
            # move each empty centroid onto the point currently farthest from its centroid
            own = dist[np.arange(n), labels]
            taken = set()
            for j in np.flatnonzero(sizes == 0):
                for idx in np.argsort(-own, kind="stable"):
                    if idx not in taken:
                        break
                taken.add(int(idx))
                centroids[j] = points[idx]
                own[idx] = 0.0
            dist = _sq_dists(points, centroids)
            labels = dist.argmin(axis=1)
        history.append(float(dist[np.arange(n), labels].sum()))
        new = centroids.copy()
        for j in range(k):
            members = labels == j
            if members.any():
                new[j] = points[members].mean(axis=0)
        shift = np.sqrt(((new - centroids) ** 2).sum(axis=1)).max()
        centroids = new
        if shift < tol:
            break
    dist = _sq_dists(points, centroids)
    labels = dist.argmin(axis=1)
    history.append(float(dist[np.arange(n), labels].sum()))
    return centroids, labels, history


def kmeans(points, k: int, seed: int = 0, n_init: int = 10) -> tuple[np.ndarray, np.ndarray]:
    """Best of ``n_init`` seeded Lloyd runs by final inertia (earliest run on ties)."""
    points = np.asarray(points, dtype=np.float64)
    if not np.all(np.isfinite(points)):
        raise DegenerateInputError("k-means input contains non-finite values")
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(n_init):
        centroids, labels, history = lloyd(points, k, rng)
        if best is None or history[-1] < best[2]:
            best = (centroids, labels, history[-1])
    return best[0], best[1]


# ---------------------------------------------------------------------------
# optimizer


@dataclass
class OptimizerState:
    first: dict[str, np.ndarray] = field(default_factory=dict)
    second: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0


def optimizer_step(
    state: OptimizerState,
    params: ModelParams,
    grads: dict[str, np.ndarray],
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> ModelParams:
    """One bias-corrected adaptive-moment update of the parameters in ``grads``."""
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise DivergenceError(f"non-finite gradient for {name}", state.step)
    state.step += 1
    t = state.step
    step_size = lr / (1 - beta1**t)
    bias2 = np.sqrt(1 - beta2**t)
    updates = {}
    for name, g in grads.items():
        m = state.first.get(name)
        v = state.second.get(name)
        if m is None:
            m = state.first[name] = np.zeros_like(g)
            v = state.second[name] = np.zeros_like(g)
        m *= beta1
        m += (1 - beta1) * g
        v *= beta2
        v += (1 - beta2) * (g * g)
        denom = np.sqrt(v)
        denom /= bias2
        denom += eps
        step = m / denom
        step *= step_size
        updates[name] = params[name].data - step
    return params.replace(**updates)


def _gradients(tape: Tape, loss: Tensor, params: ModelParams, names) -> dict[str, np.ndarray]:
    leaves = [params[n] for n in names]
    gmap = tape.backward(loss, wrt=leaves)
    return {n: gmap[params[n]] for n in names}


# ---------------------------------------------------------------------------
# training phases


def pretrain_dae(config: TrainConfig, x, params: ModelParams | None = None, rng=None):
    """Mini-batch reconstruction training of the auto-encoder weights.

    Returns ``(params, epoch_losses)`` where ``epoch_losses[0]`` is the
    full-data reconstruction loss before training and each later entry the
    loss after an epoch.
    """
    x = np.asarray(x.data if isinstance(x, Tensor) else x, dtype=np.float64)
    n = x.shape[0]
    rng = rng if rng is not None else np.random.default_rng(config.seed)
    if params is None:
        params = init_params(config.model_config(x.shape[1]), rng)
    names = params.config.dae_names()
    opt = OptimizerState()

    def full_loss(p):
        _, x_hat = dae_forward(p, x)
        return reconstruction_loss(x, x_hat).item()

    losses = [full_loss(params)]
    for epoch in range(config.pretrain_epochs):
        order = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            batch = x[order[start : start + config.batch_size]]
            tracked = params.leaves(names)
            with Tape() as tape:
                _, x_hat = dae_forward(tracked, batch)
                loss = reconstruction_loss(batch, x_hat)
            if not np.isfinite(loss.item()):
                raise DivergenceError("non-finite reconstruction loss during pretraining", epoch)
            params = optimizer_step(opt, params, _gradients(tape, loss, tracked, names), config.pretrain_lr)
        losses.append(full_loss(params))
        log.debug("pretrain epoch %d loss %.6g", epoch + 1, losses[-1])
    return params, losses


def init_centroids(params: ModelParams, x, seed: int) -> ModelParams:
    hs, _ = dae_forward(params, x)
    h = hs[-1].data
    try:
        centroids, _ = kmeans(h, params.config.n_clusters, seed)
    except DegenerateInputError as exc:
        raise DivergenceError(f"auto-encoder features unusable for k-means ({exc})", 0) from None
    return params.replace(mu=centroids)


def train_joint(
    config: TrainConfig,
    x,
    graph: SparseAdjacency,
    params: ModelParams,
    truth=None,
    on_iteration=None,
) -> tuple[ModelParams, ClusteringReport]:
    """Full-graph joint optimization of every parameter.

    ``graph`` may be a raw adjacency or an already normalized operator.
    ``params`` should carry pretrained auto-encoder weights; the centroids are
    initialized here by k-means on the bottleneck features.
    """
    from .graph import PropagationOperator

    x = np.asarray(x.data if isinstance(x, Tensor) else x, dtype=np.float64)
    op = graph if isinstance(graph, PropagationOperator) else normalize_adjacency(graph)
    xt = Tensor(x)
    hp = config.hyper
    params = init_centroids(params, xt, config.seed)
    names = params.names()
    opt = OptimizerState()
    history = []
    for it in range(1, config.joint_iterations + 1):
        tracked = params.leaves(names)
        try:
            with Tape() as tape:
                state = forward(tracked, xt, op)
                loss, parts = model_loss(state, xt, hp)
        except DegenerateInputError as exc:
            raise DivergenceError(str(exc), it) from None
        if not np.isfinite(parts.total):
            raise DivergenceError("non-finite loss", it)
        record = IterationRecord(it, parts)
        if truth is not None:
            record.metrics = evaluate(truth, predict_labels(state.f))
        history.append(record)
        if on_iteration is not None:
            on_iteration(record)
        try:
            params = optimizer_step(opt, params, _gradients(tape, loss, tracked, names), config.joint_lr)
        except DivergenceError as exc:
            raise DivergenceError(str(exc).split(": ", 1)[-1], it) from None
    final = forward(params, xt, op)
    labels = predict_labels(final.f)
    metrics = evaluate(truth, labels) if truth is not None else None
    return params, ClusteringReport(labels=labels, log=history, metrics=metrics)


def run_pipeline(config: TrainConfig, x, graph: SparseAdjacency, truth=None):
    """Pretrain the auto-encoder, then train jointly. Returns ``(params, report)``."""
    x = np.asarray(x, dtype=np.float64)
    rng = np.random.default_rng(config.seed)
    params = init_params(config.model_config(x.shape[1]), rng)
    params, pre_losses = pretrain_dae(config, x, params, rng)
    params, report = train_joint(config, x, graph, params, truth)
    report.pretrain_losses = pre_losses
    return params, report
