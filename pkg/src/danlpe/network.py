"""Feature extractor, label classifier and domain classifier in plain numpy.

The three blocks are small ReLU MLPs::

    x --F--> h --C--> class logits
               \\
                --D--> domain logits   (gradient reversed into F)

Backpropagation is written out by hand.  Domain labels are 0 for source rows
and 1 for target rows.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

BLOCKS = ("F", "C", "D")


@dataclass
class NetworkParameters:
    """Weights of the F, C and D blocks.

    ``layers[name]`` is a list of ``(W, b)`` pairs with ``W`` shaped
    ``(fan_in, fan_out)``.  Every layer except the last of C and D is
    followed by ReLU and dropout; all F layers are hidden layers.
    """

    layers: dict[str, list[tuple[np.ndarray, np.ndarray]]]
    dropout_rate: float = 0.0

    def __post_init__(self):
        if not 0 <= self.dropout_rate < 1:
            raise ValueError("dropout_rate must lie in [0, 1)")
        for name in BLOCKS:
            self.layers.setdefault(name, [])
        if not self.layers["C"] or not self.layers["D"]:
            raise ValueError("C and D need at least an output layer")
        feat = self.feature_dim
        for name in ("C", "D"):
            prev = feat
            for W, b in self.layers[name]:
                if W.shape[0] != prev or b.shape != (W.shape[1],):
                    raise ValueError(f"inconsistent layer shapes in block {name}")
                prev = W.shape[1]
        prev = self.input_dim
        for W, b in self.layers["F"]:
            if W.shape[0] != prev or b.shape != (W.shape[1],):
                raise ValueError("inconsistent layer shapes in block F")
            prev = W.shape[1]

    @property
    def input_dim(self) -> int:
        first = self.layers["F"] or self.layers["C"]
        return first[0][0].shape[0]

    @property
    def feature_dim(self) -> int:
        if self.layers["F"]:
            return self.layers["F"][-1][0].shape[1]
        return self.layers["C"][0][0].shape[0]

    @property
    def n_classes(self) -> int:
        return self.layers["C"][-1][0].shape[1]

    @property
    def dims(self) -> dict[str, list[int]]:
        out = {}
        for name in BLOCKS:
            ls = self.layers[name]
            out[name] = [W.shape[0] for W, _ in ls] + ([ls[-1][0].shape[1]] if ls else [])
        return out

    def arrays(self) -> list[np.ndarray]:
        """All weight and bias arrays in a fixed order (F, C, D; W before b)."""
        return [a for name in BLOCKS for pair in self.layers[name] for a in pair]

    def like(self, arrays) -> NetworkParameters:
        """New parameters with this structure and the given arrays."""
        it = iter(arrays)
        layers = {name: [(next(it), next(it)) for _ in self.layers[name]] for name in BLOCKS}
        return NetworkParameters(layers, self.dropout_rate)

    def copy(self) -> NetworkParameters:
        return self.like(a.copy() for a in self.arrays())

    def zeros_like(self) -> NetworkParameters:
        return self.like(np.zeros_like(a) for a in self.arrays())


def init_network(
    input_dim: int,
    n_classes: int,
    feature_dims=(32,),
    class_dims=(32,),
    domain_dims=(32,),
    dropout_rate: float = 0.0,
    seed: int | np.random.Generator = 0,
) -> NetworkParameters:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialisation, seeded."""
    rng = np.random.default_rng(seed)

    def dense(fan_in, fan_out):
        bound = 1.0 / np.sqrt(fan_in)
        return (rng.uniform(-bound, bound, size=(fan_in, fan_out)),
                rng.uniform(-bound, bound, size=fan_out))

    def stack(sizes):
        return [dense(a, b) for a, b in zip(sizes[:-1], sizes[1:])]

    feat = [input_dim, *feature_dims]
    layers = {
        "F": stack(feat),
        "C": stack([feat[-1], *class_dims, n_classes]),
        "D": stack([feat[-1], *domain_dims, 2]),
    }
    return NetworkParameters(layers, dropout_rate)


@dataclass
class ForwardCache:
    params: NetworkParameters
    # per block: list of (layer input, pre-activation, dropout mask or None)
    trace: dict[str, list[tuple]] = field(default_factory=dict)


def _run_block(layers, x, hidden_last, rate, rng, trace):
    h = x
    n = len(layers)
    for idx, (W, b) in enumerate(layers):
        z = h @ W + b
        if idx < n - 1 or hidden_last:
            a = np.maximum(z, 0.0)
            mask = None
            if rng is not None and rate > 0:
                mask = (rng.random(a.shape) >= rate) / (1.0 - rate)
                a = a * mask
            trace.append((h, z, mask))
            h = a
        else:
            trace.append((h, z, None))
            h = z
    return h


def forward(params: NetworkParameters, inputs, mode: str = "eval", rng=None):
    """Run all three blocks.

    ``mode="train"`` applies inverted dropout drawn from ``rng`` (a seed or a
    ``numpy.random.Generator``); ``mode="eval"`` is deterministic.

    Returns ``(features, class_logits, domain_logits, cache)``.
    """
    x = np.asarray(inputs, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.input_dim:
        raise ValueError(f"expected inputs of width {params.input_dim}, got shape {x.shape}")
    if mode not in ("train", "eval"):
        raise ValueError(f"unknown mode {mode!r}")
    gen = None
    if mode == "train" and params.dropout_rate > 0:
        gen = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    cache = ForwardCache(params, {name: [] for name in BLOCKS})
    rate = params.dropout_rate
    h = _run_block(params.layers["F"], x, True, rate, gen, cache.trace["F"])
    class_logits = _run_block(params.layers["C"], h, False, rate, gen, cache.trace["C"])
    domain_logits = _run_block(params.layers["D"], h, False, rate, gen, cache.trace["D"])
    return h, class_logits, domain_logits, cache


def predict(params: NetworkParameters, inputs, batch_size: int = 8192) -> np.ndarray:
    """Hard class predictions in eval mode."""
    x = np.asarray(inputs, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.input_dim:
        raise ValueError(f"expected inputs of width {params.input_dim}, got shape {x.shape}")
    out = []
    for s in range(0, len(x), batch_size):
        h = _run_block(params.layers["F"], x[s:s + batch_size], True, 0.0, None, [])
        logits = _run_block(params.layers["C"], h, False, 0.0, None, [])
        out.append(np.argmax(logits, axis=1))
    return np.concatenate(out) if out else np.zeros(0, dtype=np.int64)


def _backprop(layers, trace, grad_out, output_linear):
    """Backpropagate through one block; returns (input gradient, [(dW, db)])."""
    g = grad_out
    n = len(layers)
    pair_grads = [None] * n
    for idx in range(n - 1, -1, -1):
        W, _ = layers[idx]
        h, z, mask = trace[idx]
        if not (output_linear and idx == n - 1):
            if mask is not None:
                g = g * mask
            g = g * (z > 0)
        pair_grads[idx] = (h.T @ g, g.sum(axis=0))
        g = g @ W.T
    return g, pair_grads


def backward_with_reversal(cache: ForwardCache, params: NetworkParameters,
                           grad_class_logits, grad_domain_logits,
                           lambda_D: float) -> NetworkParameters:
    """Parameter gradients for a forward pass.

    C receives the class-loss gradient, D the domain-loss gradient and F the
    class gradient minus ``lambda_D`` times the domain gradient arriving at
    the F/D boundary.
    """
    if cache.params is not params:
        raise ValueError("stale cache: parameters changed since the forward pass")
    trace = cache.trace
    d_feat_c, c_grads = _backprop(params.layers["C"], trace["C"], grad_class_logits, True)
    d_feat_d, d_grads = _backprop(params.layers["D"], trace["D"], grad_domain_logits, True)
    d_feat = reverse_gradient(d_feat_c, d_feat_d, lambda_D)
    if params.layers["F"]:
        _, f_grads = _backprop(params.layers["F"], trace["F"], d_feat, False)
    else:
        f_grads = []
    return NetworkParameters({"F": f_grads, "C": c_grads, "D": d_grads}, params.dropout_rate)


def reverse_gradient(d_feat_class, d_feat_domain, lambda_D: float) -> np.ndarray:
    """Gradient reaching F: class branch as is, domain branch negated and scaled."""
    return d_feat_class - lambda_D * d_feat_domain


def _log_softmax(logits):
    z = logits - logits.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def _cross_entropy(logits, targets):
    """Per-sample cross-entropy and its gradient w.r.t. the logits."""
    logp = _log_softmax(logits)
    rows = np.arange(len(targets))
    per_sample = -logp[rows, targets]
    grad = np.exp(logp)
    grad[rows, targets] -= 1.0
    return per_sample, grad


def class_loss(class_logits, labels, class_weights=None, return_grad: bool = False):
    """Mean cross-entropy of the label classifier.

    With ``class_weights`` each sample counts ``class_weights[label]`` times
    and the mean is taken over the total weight.
    """
    logits = np.asarray(class_logits, dtype=np.float64)
    y = np.asarray(labels)
    if logits.ndim != 2 or logits.shape[0] != y.shape[0]:
        raise ValueError("class logits rows must match the number of labels")
    L = logits.shape[1]
    if y.size and (y.min() < 0 or y.max() >= L):
        raise ValueError(f"label outside [0, {L})")
    if class_weights is None:
        sw = np.ones(len(y))
    else:
        cw = np.asarray(class_weights, dtype=np.float64)
        if cw.shape != (L,) or cw.min() < 0:
            raise ValueError("class_weights must be a non-negative vector of length L")
        sw = cw[y]
    per_sample, grad = _cross_entropy(logits, y)
    total = sw.sum()
    loss = float(sw @ per_sample / total)
    if not return_grad:
        return loss
    return loss, grad * (sw / total)[:, None]


def inverse_frequency_weights(labels, L: int) -> np.ndarray:
    """Class weights inversely proportional to class frequency (mean weight 1 per sample)."""
    counts = np.bincount(np.asarray(labels), minlength=L).astype(np.float64)
    w = np.zeros(L)
    seen = counts > 0
    w[seen] = len(labels) / (seen.sum() * counts[seen])
    return w


@dataclass(frozen=True)
class BatchWeights:
    w: np.ndarray
    norm: float

    @property
    def normalized(self) -> np.ndarray:
        return self.w / self.norm


def batch_weights(labels_P, gamma, source_prior_tilde) -> BatchWeights:
    """Per-sample source weights ``gamma[y] / prior[y]`` and their batch mean."""
    g = np.asarray(gamma, dtype=np.float64)
    a = np.asarray(source_prior_tilde, dtype=np.float64)
    if g.shape != a.shape:
        raise ValueError("gamma and source prior differ in length")
    if np.any(a <= 0):
        raise ValueError("source prior has a zero class; importance weights undefined")
    if np.any(g <= 0):
        raise ValueError("gamma has a non-positive entry")
    w = (g / a)[np.asarray(labels_P)]
    return BatchWeights(w, float(w.mean()))


def _domain_terms(domain_logits_P, domain_logits_Q):
    lp = np.asarray(domain_logits_P, dtype=np.float64)
    lq = np.asarray(domain_logits_Q, dtype=np.float64)
    if lp.shape != lq.shape or lp.ndim != 2 or lp.shape[1] != 2:
        raise ValueError("source and target halves must be equal-sized (n, 2) logit arrays")
    cp, gp = _cross_entropy(lp, np.zeros(len(lp), dtype=np.int64))
    cq, gq = _cross_entropy(lq, np.ones(len(lq), dtype=np.int64))
    return cp, gp, cq, gq


def domain_loss(domain_logits_P, domain_logits_Q, return_grad: bool = False):
    """Unweighted domain loss: summed cross-entropy of both halves over the half size."""
    cp, gp, cq, gq = _domain_terms(domain_logits_P, domain_logits_Q)
    half = len(cp)
    loss = float((cp.sum() + cq.sum()) / half)
    if not return_grad:
        return loss
    return loss, gp / half, gq / half


def domain_loss_reweighted(domain_logits_P, labels_P, domain_logits_Q, gamma,
                           source_prior_tilde, return_grad: bool = False):
    """Domain loss with source samples reweighted by ``gamma / prior``.

    Source weights are divided by their batch mean, so when ``gamma`` equals
    the source prior every weight is exactly 1 and the result coincides with
    :func:`domain_loss`.
    """
    cp, gp, cq, gq = _domain_terms(domain_logits_P, domain_logits_Q)
    bw = batch_weights(labels_P, gamma, source_prior_tilde)
    wn = bw.normalized
    half = len(cp)
    loss = float((wn @ cp + cq.sum()) / half)
    if not return_grad:
        return loss
    return loss, gp * (wn / half)[:, None], gq / half


@dataclass
class OptimizerState:
    first_moment: list[np.ndarray]
    second_moment: list[np.ndarray]
    step: int = 0
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def for_params(cls, params: NetworkParameters, lr: float = 1e-4, **kw) -> OptimizerState:
        arrays = params.arrays()
        return cls([np.zeros_like(a) for a in arrays], [np.zeros_like(a) for a in arrays], 0, lr, **kw)


def optimizer_step(params: NetworkParameters, grads: NetworkParameters, state: OptimizerState):
    """One Adam update with bias correction; returns new params and state."""
    p_arrays, g_arrays = params.arrays(), grads.arrays()
    if len(p_arrays) != len(g_arrays) or any(p.shape != g.shape for p, g in zip(p_arrays, g_arrays)):
        raise ValueError("gradient shapes do not match parameters")
    if len(state.first_moment) != len(p_arrays):
        raise ValueError("optimizer state does not match parameters")
    for g in g_arrays:
        if not np.all(np.isfinite(g)):
            raise FloatingPointError("diverged: non-finite gradient")
    t = state.step + 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1 ** t
    bc2 = 1.0 - b2 ** t
    new_p, new_m, new_v = [], [], []
    for p, g, m, v in zip(p_arrays, g_arrays, state.first_moment, state.second_moment):
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * (g * g)
        new_p.append(p - state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.epsilon))
        new_m.append(m)
        new_v.append(v)
    new_state = OptimizerState(new_m, new_v, t, state.lr, b1, b2, state.epsilon)
    return params.like(new_p), new_state


CHECKPOINT_MAGIC = b"DANLPECK"
CHECKPOINT_VERSION = 1


def save_checkpoint(params: NetworkParameters, path, meta: dict | None = None) -> None:
    """Write parameters in the versioned binary checkpoint format.

    Layout: 8-byte magic, uint32 version, uint32 header length, UTF-8 JSON
    header (dims, dropout rate, free-form ``meta``), then every array of
    :meth:`NetworkParameters.arrays` as row-major little-endian float64.
    """
    header = {
        "dims": params.dims,
        "dropout_rate": params.dropout_rate,
        "meta": meta or {},
    }
    hb = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<II", CHECKPOINT_VERSION, len(hb)))
        fh.write(hb)
        for a in params.arrays():
            fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def load_checkpoint(path) -> tuple[NetworkParameters, dict]:
    data = Path(path).read_bytes()
    if data[:8] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a checkpoint file")
    version, hlen = struct.unpack("<II", data[8:16])
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    header = json.loads(data[16:16 + hlen])
    offset = 16 + hlen
    layers = {}
    for name in BLOCKS:
        dims = header["dims"][name]
        pairs = []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            arrays = []
            for shape in ((fan_in, fan_out), (fan_out,)):
                nbytes = 8 * int(np.prod(shape))
                if offset + nbytes > len(data):
                    raise ValueError(f"{path}: truncated checkpoint")
                arrays.append(np.frombuffer(data, "<f8", int(np.prod(shape)), offset)
                              .reshape(shape).astype(np.float64))
                offset += nbytes
            pairs.append(tuple(arrays))
        layers[name] = pairs
    if offset != len(data):
        raise ValueError(f"{path}: trailing bytes in checkpoint")
    return NetworkParameters(layers, header["dropout_rate"]), header["meta"]
