"""State space duality kernels and the SA / CA pathway attention.

A single-head SSD layer with scalar decay ``a_t`` in (0, 1] can be written
three ways, all producing the same output ``y[T, P]``:

* recurrence: ``h_t = a_t h_{t-1} + k_t v_t^T`` (state ``N x P``),
  ``y_t = h_t^T q_t``;
* quadratic (masked attention): ``y = (L * (Q K^T)) V`` where
  ``L[i, j] = prod(a[j+1..i])`` below the diagonal and 0 above;
* chunked: the quadratic form inside fixed-size chunks plus a recurrent state
  carried across chunk boundaries. Linear in ``T`` for a fixed chunk size.

Keys play the role of the SSM input matrix ``B`` and queries the readout
matrix ``C``. Queries and keys are shared by all heads (one group); each head
has its own value slice and decay sequence.

All kernels compute in float64 and return float32.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ssd_pulse.errors import ShapeError
from ssd_pulse.tensor_core import DTYPE, as_tensor, matmul


@dataclass(frozen=True)
class SsdConfig:
    d_model: int = 64
    d_state: int = 64
    d_head: int = 16
    n_heads: int = 4
    chunk_size: int = 16

    def __post_init__(self):
        for name in ("d_model", "d_state", "d_head", "n_heads", "chunk_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"SsdConfig.{name} must be >= 1")
        if self.d_model != self.n_heads * self.d_head:
            raise ValueError(
                f"SsdConfig: d_model={self.d_model} must equal n_heads*d_head={self.n_heads * self.d_head}"
            )


@dataclass
class SsdBlockParams:
    """Projection and decay parameters of one SSD block.

    ``w_q``/``w_k`` map tokens to the shared ``d_state`` query/key space,
    ``w_v``/``w_out`` are ``d_model x d_model`` and ``w_dt`` produces one
    step size per head.
    """

    w_q: np.ndarray
    w_k: np.ndarray
    w_v: np.ndarray
    w_out: np.ndarray
    w_dt: np.ndarray
    a_log: np.ndarray
    dt_bias: np.ndarray

    def check(self, config: SsdConfig) -> None:
        expected = {
            "w_q": (config.d_model, config.d_state),
            "w_k": (config.d_model, config.d_state),
            "w_v": (config.d_model, config.d_model),
            "w_out": (config.d_model, config.d_model),
            "w_dt": (config.d_model, config.n_heads),
            "a_log": (config.n_heads,),
            "dt_bias": (config.n_heads,),
        }
        for name, shape in expected.items():
            got = np.shape(getattr(self, name))
            if got != shape:
                raise ShapeError(f"SsdBlockParams.{name}: expected {shape}, got {got}")

    def infer_config(self, chunk_size: int = 16) -> SsdConfig:
        d_model, d_state = np.shape(self.w_q)
        n_heads = np.shape(self.a_log)[0]
        return SsdConfig(d_model, d_state, d_model // n_heads, n_heads, chunk_size)

    def copy(self) -> "SsdBlockParams":
        return SsdBlockParams(**{k: np.array(v, copy=True) for k, v in vars(self).items()})


@dataclass(frozen=True)
class PathwayInputs:
    """Per-head queries ``[H, T, N]``, keys ``[H, T, N]``, values ``[H, T, P]`` and decay ``[H, T]``."""

    q: np.ndarray
    k: np.ndarray
    v: np.ndarray
    decay: np.ndarray

    def __post_init__(self):
        q = as_tensor(self.q, ndim=3, name="q")
        k = as_tensor(self.k, ndim=3, name="k")
        v = as_tensor(self.v, ndim=3, name="v")
        a = as_tensor(self.decay, ndim=2, name="decay")
        h, t, n = q.shape
        if k.shape != (h, t, n):
            raise ShapeError(f"keys {k.shape} must match queries {q.shape}")
        if v.shape[:2] != (h, t):
            raise ShapeError(f"values {v.shape} must share heads/steps with queries {q.shape}")
        if a.shape != (h, t):
            raise ShapeError(f"decay {a.shape} must be [heads, steps] = {(h, t)}")
        if np.any(a < 0) or np.any(a > 1) or np.any(np.isnan(a)):
            raise ValueError("decay entries must lie in [0, 1]")
        for name, arr in (("q", q), ("k", k), ("v", v), ("decay", a)):
            object.__setattr__(self, name, arr)

    @property
    def n_heads(self) -> int:
        return self.q.shape[0]

    @property
    def length(self) -> int:
        return self.q.shape[1]


def _log_decay(a: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(a.astype(np.float64))


def _segsum(log_a: np.ndarray) -> np.ndarray:
    """``out[..., i, j] = sum(log_a[..., j+1:i+1])`` for ``i >= j``, ``-inf`` above the diagonal.

    Built by a masked cumulative sum rather than differences of a prefix sum,
    so zero decays (``-inf``) never produce ``inf - inf``.
    """
    t = log_a.shape[-1]
    strict = np.tril(np.ones((t, t), dtype=bool), k=-1)
    rows = np.where(strict, log_a[..., :, None], 0.0)
    seg = np.cumsum(rows, axis=-2)
    return np.where(np.tril(np.ones((t, t), dtype=bool)), seg, -np.inf)


def build_mask_L(decay, h: int) -> np.ndarray:
    """Lower-triangular 1-semiseparable mask of head ``h``: ``L[i, j] = prod(a[h, j+1..i])``."""
    a = as_tensor(decay, ndim=2, name="decay")
    if not 0 <= h < a.shape[0]:
        raise IndexError(f"head index {h} out of range for {a.shape[0]} heads")
    return np.exp(_segsum(_log_decay(a[h]))).astype(DTYPE)


def ssm_recurrence_scan(inputs: PathwayInputs) -> np.ndarray:
    """Sequential left-to-right scan; returns ``[H, T, P]``."""
    q = inputs.q.astype(np.float64)
    k = inputs.k.astype(np.float64)
    v = inputs.v.astype(np.float64)
    a = inputs.decay.astype(np.float64)
    h, t, n = q.shape
    state = np.zeros((h, n, v.shape[-1]))
    y = np.empty((h, t, v.shape[-1]))
    for step in range(t):
        state = a[:, step, None, None] * state + k[:, step, :, None] * v[:, step, None, :]
        y[:, step] = np.einsum("hn,hnp->hp", q[:, step], state)
    return y.astype(DTYPE)


def ssd_quadratic(inputs: PathwayInputs) -> np.ndarray:
    """Masked-attention form ``(L * Q K^T) V`` per head; O(T^2) memory and time."""
    q = inputs.q.astype(np.float64)
    k = inputs.k.astype(np.float64)
    v = inputs.v.astype(np.float64)
    log_a = _log_decay(inputs.decay)
    out = np.empty(v.shape)
    for head in range(inputs.n_heads):
        mask = np.exp(_segsum(log_a[head]))
        scores = q[head] @ k[head].T
        out[head] = (mask * scores) @ v[head]
    return out.astype(DTYPE)


def ssd_chunked(inputs: PathwayInputs, chunk_size: int = 16, block_chunks: int = 16) -> np.ndarray:
    """Block-decomposed SSD: quadratic within chunks, recurrent state between them.

    The last chunk may be short; it is padded with unit decay and zero
    queries/keys/values, which cannot influence earlier outputs. Chunks are
    processed ``block_chunks`` at a time so temporaries stay a fixed size and
    the cost per step does not grow with the sequence length.
    """
    if chunk_size < 1:
        raise ValueError(f"chunk_size must be >= 1, got {chunk_size}")
    if block_chunks < 1:
        raise ValueError(f"block_chunks must be >= 1, got {block_chunks}")
    h, t, n = inputs.q.shape
    p = inputs.v.shape[-1]
    cs = min(chunk_size, t)
    nc = -(-t // cs)
    pad = nc * cs - t

    def chunks(x):
        x = np.asarray(x, dtype=np.float64)
        if pad:
            widths = [(0, 0), (0, pad)] + [(0, 0)] * (x.ndim - 2)
            x = np.pad(x, widths)
        return x.reshape(h, nc, cs, *x.shape[2:])

    q_all = chunks(inputs.q)
    k_all = chunks(inputs.k)
    v_all = chunks(inputs.v)
    log_a_all = chunks(_log_decay(inputs.decay))  # [H, nc, cs]; pad is log 1 = 0

    y = np.empty((h, nc, cs, p))
    state = np.zeros((h, n * p))  # state entering the current block
    for b0 in range(0, nc, block_chunks):
        sl = slice(b0, min(b0 + block_chunks, nc))
        q, k, v, log_a = q_all[:, sl], k_all[:, sl], v_all[:, sl], log_a_all[:, sl]
        nb = log_a.shape[1]

        # within-chunk quadratic term
        seg = _segsum(log_a)  # [H, nb, cs, cs]
        kt = np.swapaxes(k, -1, -2)
        yb = (np.exp(seg) * (q @ kt)) @ v

        # each chunk's own contribution to the state at its last step
        decay_to_end = np.exp(seg[..., -1, :])  # [H, nb, cs]
        chunk_states = (kt @ (v * decay_to_end[..., None])).reshape(h, nb, n * p)
        prefix = np.cumsum(log_a, axis=-1)  # within-chunk prefix, last entry is the chunk prefix

        # state at the end of every chunk in the block, then shift by one to get entering states
        ends = np.exp(_segsum(prefix[..., -1])) @ chunk_states
        ends += np.exp(np.cumsum(prefix[..., -1], axis=-1))[..., None] * state[:, None, :]
        entering = np.concatenate([state[:, None, :], ends[:, :-1]], axis=1)

        yb += (q * np.exp(prefix)[..., None]) @ entering.reshape(h, nb, n, p)
        y[:, sl] = yb
        state = ends[:, -1]

    return y.reshape(h, nc * cs, p)[:, :t].astype(DTYPE)


def softmax_attention_reference(q, k, v, causal: bool = False) -> np.ndarray:
    """``softmax(Q K^T / sqrt(d)) V`` for ``[T, d]`` inputs. Contrast baseline only."""
    q = as_tensor(q, ndim=2, name="q").astype(np.float64)
    k = as_tensor(k, ndim=2, name="k").astype(np.float64)
    v = as_tensor(v, ndim=2, name="v").astype(np.float64)
    if q.shape[1] != k.shape[1] or k.shape[0] != v.shape[0]:
        raise ShapeError(f"attention shapes disagree: q {q.shape}, k {k.shape}, v {v.shape}")
    scores = (q @ k.T) / np.sqrt(k.shape[1])
    if causal:
        if q.shape[0] != k.shape[0]:
            raise ShapeError("causal attention needs equal query and key lengths")
        scores = np.where(np.tril(np.ones(scores.shape, dtype=bool)), scores, -np.inf)
    scores = scores - scores.max(axis=1, keepdims=True)
    w = np.exp(scores)
    w /= w.sum(axis=1, keepdims=True)
    return (w @ v).astype(DTYPE)


def compute_decay(x, params: SsdBlockParams) -> np.ndarray:
    """Per-head decay ``exp(-softplus(dt_bias + x @ w_dt) * exp(a_log))``, shape ``[H, T]``."""
    dt = matmul(x, params.w_dt).astype(np.float64) + np.asarray(params.dt_bias, dtype=np.float64)
    step = np.logaddexp(0.0, dt)
    rate = np.exp(np.asarray(params.a_log, dtype=np.float64))
    return np.exp(-step * rate).T.astype(DTYPE)


def project_inputs(x, params: SsdBlockParams, q_shared=None) -> PathwayInputs:
    """Project tokens ``x[T, d_model]`` to per-head SSD inputs.

    When ``q_shared`` (``[H, T, N]``) is given it replaces the block's own
    queries; this is how the CA pathway reads the SA pathway's queries.
    """
    x = as_tensor(x, ndim=2, name="tokens")
    cfg = params.infer_config()
    params.check(cfg)
    if x.shape[1] != cfg.d_model:
        raise ShapeError(f"tokens {x.shape} do not match d_model={cfg.d_model}")
    t = x.shape[0]
    k = np.repeat(matmul(x, params.w_k)[None], cfg.n_heads, axis=0)
    v = matmul(x, params.w_v).reshape(t, cfg.n_heads, cfg.d_head).transpose(1, 0, 2)
    if q_shared is None:
        q = np.repeat(matmul(x, params.w_q)[None], cfg.n_heads, axis=0)
    else:
        q = as_tensor(q_shared, ndim=3, name="shared queries")
        if q.shape != k.shape:
            raise ShapeError(f"shared queries {q.shape} do not match keys {k.shape} of the CA tokens")
    return PathwayInputs(q, k, v, compute_decay(x, params))


def _merge_heads(y: np.ndarray, params: SsdBlockParams) -> np.ndarray:
    h, t, p = y.shape
    return matmul(y.transpose(1, 0, 2).reshape(t, h * p), params.w_out)


def sa_pathway(x, params: SsdBlockParams, chunk_size: int = 16) -> tuple[np.ndarray, np.ndarray]:
    """Self-attention SSD over ``x[T, d_model]``.

    Returns the output tokens ``[T, d_model]`` and the queries ``[H, T, N]``
    for the CA pathway.
    """
    inputs = project_inputs(x, params)
    return _merge_heads(ssd_chunked(inputs, chunk_size), params), inputs.q


def ca_pathway(x_c, q_shared, params: SsdBlockParams, chunk_size: int = 16) -> np.ndarray:
    """Cross-attention SSD: the SA pathway's queries against this pathway's keys, values and decay."""
    inputs = project_inputs(x_c, params, q_shared=q_shared)
    return _merge_heads(ssd_chunked(inputs, chunk_size), params)
