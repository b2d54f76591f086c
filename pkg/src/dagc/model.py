"""Auto-encoder, attention-fused GCN and the four assignment distributions."""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ParseError, ShapeError
from .graph import SparseAdjacency, spmm

DEFAULT_DIMS = (500, 500, 2000, 10)
LRELU_SLOPE = 0.2
CHECKPOINT_MAGIC = b"DAGC"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ModelConfig:
    """Architecture and ablation switches.

    ``hwf_attention`` / ``swf_attention`` off replace the learned attention by
    fixed equal weights; ``dwf`` off makes the final distribution equal ``Z``.
    """

    n_input: int
    n_clusters: int
    dims: tuple[int, ...] = DEFAULT_DIMS
    alpha: float = 1.0
    slope: float = LRELU_SLOPE
    hwf_attention: bool = True
    swf_attention: bool = True
    dwf: bool = True
    detach_q: bool = False

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        if self.n_input < 1 or self.n_clusters < 1 or not self.dims or min(self.dims) < 1:
            raise ValueError("dimensions must be positive")

    @property
    def depth(self) -> int:
        return len(self.dims)

    @property
    def gcn_widths(self) -> tuple[int, ...]:
        """Widths of Z_1 .. Z_{l+1}; the extra last layer repeats d_l."""
        return self.dims + (self.dims[-1],)

    @property
    def fused_width(self) -> int:
        return sum(self.gcn_widths)

    def param_shapes(self) -> list[tuple[str, tuple[int, int]]]:
        """Every learnable tensor in checkpoint order."""
        d = self.dims
        l = self.depth
        k = self.n_clusters
        enc_in = (self.n_input,) + d
        dec = tuple(reversed(d)) + (self.n_input,)
        shapes = []
        for i in range(l):
            shapes.append((f"enc{i + 1}.w", (enc_in[i], enc_in[i + 1])))
            shapes.append((f"enc{i + 1}.b", (1, enc_in[i + 1])))
        for i in range(l):
            shapes.append((f"dec{i + 1}.w", (dec[i], dec[i + 1])))
            shapes.append((f"dec{i + 1}.b", (1, dec[i + 1])))
        gcn_in = (self.n_input,) + d
        gcn_out = self.gcn_widths
        for i in range(l + 1):
            shapes.append((f"gcn{i}.w", (gcn_in[i], gcn_out[i])))
        for i in range(l):
            shapes.append((f"hwf{i + 1}.w", (2 * d[i], 2)))
        shapes.append(("swf.w", (self.fused_width, l + 1)))
        shapes.append(("proj.w", (self.fused_width, k)))
        shapes.append(("dwf.w", (2 * k, 2)))
        shapes.append(("mu", (k, d[-1])))
        return shapes

    def dae_names(self) -> list[str]:
        return [name for name, _ in self.param_shapes() if name.startswith(("enc", "dec"))]


class ModelParams:
    """Ordered collection of learnable tensors."""

    def __init__(self, config: ModelConfig, tensors: dict[str, Tensor]):
        expected = config.param_shapes()
        for name, shape in expected:
            if name not in tensors:
                raise ShapeError(f"missing parameter {name}")
            if tensors[name].shape != shape:
                raise ShapeError(f"parameter {name} has shape {tensors[name].shape}, expected {shape}")
        self.config = config
        self.tensors = {name: tensors[name] for name, _ in expected}

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def names(self) -> list[str]:
        return list(self.tensors)

    def leaves(self, names=None) -> "ModelParams":
        """Copy whose tensors are fresh gradient-tracking leaves."""
        names = set(self.tensors if names is None else names)
        return ModelParams(
            self.config,
            {k: Tensor._wrap(t.data) if k not in names else _leaf(t.data) for k, t in self.tensors.items()},
        )

    def replace(self, **updates: np.ndarray) -> "ModelParams":
        new = dict(self.tensors)
        for name, arr in updates.items():
            new[name] = Tensor(arr)
        return ModelParams(self.config, new)

    def arrays(self) -> dict[str, np.ndarray]:
        return {k: t.data for k, t in self.tensors.items()}


def _leaf(arr) -> Tensor:
    t = Tensor._wrap(arr)
    t.requires_grad = True
    return t


def init_params(config: ModelConfig, seed: int | np.random.Generator = 0) -> ModelParams:
    """Glorot-uniform weights, zero biases, zero centroids."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    tensors = {}
    for name, (r, c) in config.param_shapes():
        if name.endswith(".b") or name == "mu":
            tensors[name] = Tensor(np.zeros((r, c)))
        else:
            bound = np.sqrt(6.0 / (r + c))
            tensors[name] = Tensor(rng.uniform(-bound, bound, size=(r, c)))
    return ModelParams(config, tensors)


@dataclass
class ForwardState:
    hs: list[Tensor]
    x_hat: Tensor
    zs: list[Tensor]
    ms: list[Tensor]
    u: Tensor
    z: Tensor
    q: Tensor
    v: Tensor | None
    f: Tensor
    p: np.ndarray | None = None
    extras: dict = field(default_factory=dict)

    @property
    def h(self) -> Tensor:
        return self.hs[-1]


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def dae_forward(params: ModelParams, x) -> tuple[list[Tensor], Tensor]:
    """Encoder activations H_1..H_l and the reconstruction.

    Every layer uses ReLU except the final decoder layer, which is linear.
    """
    x = _as_tensor(x)
    cfg = params.config
    if x.cols != cfg.n_input:
        raise ShapeError(f"input has {x.cols} features, model expects {cfg.n_input}")
    hs = []
    h = x
    for i in range(1, cfg.depth + 1):
        h = ad.relu(ad.add_row(ad.matmul(h, params[f"enc{i}.w"]), params[f"enc{i}.b"]))
        hs.append(h)
    out = h
    for i in range(1, cfg.depth + 1):
        out = ad.add_row(ad.matmul(out, params[f"dec{i}.w"]), params[f"dec{i}.b"])
        if i < cfg.depth:
            out = ad.relu(out)
    return hs, out


def attention_weights(parts: list[Tensor], w: Tensor, slope: float) -> Tensor:
    """Row-wise softmax followed by l2 normalization of LReLU([parts] W)."""
    logits = ad.leaky_relu(ad.matmul(ad.concat_cols(parts), w), slope)
    return ad.row_l2_normalize(ad.row_softmax(logits))


def weighted_sum(weights: Tensor, parts: list[Tensor]) -> Tensor:
    out = None
    for j, part in enumerate(parts):
        term = ad.col_broadcast_scale(ad.slice_cols(weights, j, j + 1), part)
        out = term if out is None else ad.add(out, term)
    return out


def _fixed_weights(n: int, count: int, value: float) -> Tensor:
    return Tensor(np.full((n, count), value))


def hwf_fuse(params: ModelParams, z: Tensor, h: Tensor, i: int) -> tuple[Tensor, Tensor]:
    """Blend GCN feature ``z`` and auto-encoder feature ``h`` of layer ``i``."""
    if z.shape != h.shape:
        raise ShapeError(f"hwf_fuse: GCN feature {z.shape} and DAE feature {h.shape} differ")
    cfg = params.config
    if cfg.hwf_attention:
        m = attention_weights([z, h], params[f"hwf{i}.w"], cfg.slope)
    else:
        m = _fixed_weights(z.rows, 2, 0.5)
    return weighted_sum(m, [z, h]), m


def gcn_layer(op: SparseAdjacency, z: Tensor, w: Tensor, slope: float = LRELU_SLOPE) -> Tensor:
    if z.cols != w.rows:
        raise ShapeError(f"gcn_layer: features {z.shape} do not fit weight {w.shape}")
    # (op z) W and op (z W) are equal; multiply by W first when it narrows.
    if w.cols < w.rows:
        return ad.leaky_relu(spmm(op, ad.matmul(z, w)), slope)
    return ad.leaky_relu(ad.matmul(spmm(op, z), w), slope)


def swf_fuse(params: ModelParams, zs: list[Tensor], op: SparseAdjacency) -> tuple[Tensor, Tensor]:
    """Attention-weighted multi-scale concatenation projected to k clusters."""
    cfg = params.config
    widths = tuple(z.cols for z in zs)
    if widths != cfg.gcn_widths:
        raise ShapeError(f"swf_fuse: feature widths {widths} do not match {cfg.gcn_widths}")
    if cfg.swf_attention:
        u = attention_weights(zs, params["swf.w"], cfg.slope)
    else:
        u = _fixed_weights(zs[0].rows, len(zs), 1.0 / len(zs))
    scaled = [ad.col_broadcast_scale(ad.slice_cols(u, j, j + 1), z) for j, z in enumerate(zs)]
    fused = ad.concat_cols(scaled)
    z = ad.row_softmax(spmm(op, ad.matmul(fused, params["proj.w"])))
    return z, u


def soft_assignment_q(h: Tensor, mu: Tensor, alpha: float = 1.0) -> Tensor:
    """Student's t similarity between embeddings and centroids, rows normalized."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    dist = ad.pairwise_sq_dist(h, mu)
    kernel = ad.power(ad.add_scalar(ad.scale(dist, 1.0 / alpha), 1.0), -(alpha + 1.0) / 2.0)
    return ad.row_normalize(kernel)


def target_distribution_p(z) -> np.ndarray:
    """Sharpened, cluster-frequency-normalized target; never differentiated."""
    z = z.data if isinstance(z, Tensor) else np.asarray(z, dtype=np.float64)
    freq = np.maximum(z.sum(axis=0), ad.LOG_FLOOR)
    weight = z * z / freq
    return weight / weight.sum(axis=1, keepdims=True)


def dwf_fuse(params: ModelParams, z: Tensor, q: Tensor) -> tuple[Tensor, Tensor]:
    if z.shape != q.shape:
        raise ShapeError(f"dwf_fuse: distributions {z.shape} and {q.shape} differ")
    v = attention_weights([z, q], params["dwf.w"], params.config.slope)
    return ad.row_softmax(weighted_sum(v, [z, q])), v


def predict_labels(f) -> np.ndarray:
    """Row-wise argmax; ``np.argmax`` keeps the first maximal column on ties."""
    f = f.data if isinstance(f, Tensor) else np.asarray(f)
    return np.argmax(f, axis=1).astype(np.int64)


def forward(params: ModelParams, x, op: SparseAdjacency) -> ForwardState:
    cfg = params.config
    x = _as_tensor(x)
    if op.n != x.rows:
        raise ShapeError(f"graph has {op.n} nodes, features have {x.rows} rows")
    hs, x_hat = dae_forward(params, x)
    zs = [gcn_layer(op, x, params["gcn0.w"], cfg.slope)]
    ms = []
    for i in range(1, cfg.depth + 1):
        fused, m = hwf_fuse(params, zs[-1], hs[i - 1], i)
        ms.append(m)
        zs.append(gcn_layer(op, fused, params[f"gcn{i}.w"], cfg.slope))
    z, u = swf_fuse(params, zs, op)
    h = hs[-1].detach() if cfg.detach_q else hs[-1]
    mu = params["mu"].detach() if cfg.detach_q else params["mu"]
    q = soft_assignment_q(h, mu, cfg.alpha)
    if cfg.dwf:
        f, v = dwf_fuse(params, z, q)
    else:
        f, v = z, None
    return ForwardState(hs=hs, x_hat=x_hat, zs=zs, ms=ms, u=u, z=z, q=q, v=v, f=f)


# ---------------------------------------------------------------------------
# checkpoints: magic, u32 version, u32 count + u64 dims [n_input, d_1..d_l, k],
# then each tensor as u64 rows, u64 cols, row-major little-endian f64


def save_checkpoint(params: ModelParams, path) -> None:
    cfg = params.config
    dims = (cfg.n_input,) + cfg.dims + (cfg.n_clusters,)
    chunks = [CHECKPOINT_MAGIC, struct.pack("<II", CHECKPOINT_VERSION, len(dims))]
    chunks.append(struct.pack(f"<{len(dims)}Q", *dims))
    for name in params.names():
        arr = params[name].data
        chunks.append(struct.pack("<QQ", *arr.shape))
        chunks.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    Path(path).write_bytes(b"".join(chunks))


def load_checkpoint(path, **config_overrides) -> ModelParams:
    raw = Path(path).read_bytes()
    if raw[:4] != CHECKPOINT_MAGIC:
        raise ParseError("not a DAGC checkpoint (bad magic)")
    version, count = struct.unpack_from("<II", raw, 4)
    if version != CHECKPOINT_VERSION:
        raise ParseError(f"unsupported checkpoint version {version}")
    offset = 12
    dims = struct.unpack_from(f"<{count}Q", raw, offset)
    offset += 8 * count
    cfg = ModelConfig(n_input=dims[0], dims=dims[1:-1], n_clusters=dims[-1], **config_overrides)
    tensors = {}
    for name, shape in cfg.param_shapes():
        rows, cols = struct.unpack_from("<QQ", raw, offset)
        offset += 16
        if (rows, cols) != shape:
            raise ParseError(f"tensor {name} stored as {(rows, cols)}, expected {shape}")
        size = rows * cols * 8
        tensors[name] = Tensor(np.frombuffer(raw, dtype="<f8", count=rows * cols, offset=offset).reshape(shape))
        offset += size
    if offset != len(raw):
        raise ParseError("trailing bytes after last tensor")
    return ModelParams(cfg, tensors)
