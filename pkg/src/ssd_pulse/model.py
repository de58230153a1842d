"""Dual-pathway forward model, weight initialisation and checkpoint I/O.

``forward`` runs the shared frame stem, then two SSD pathways over four
multi-temporal views. The CA pathway reuses the SA pathway's queries for the
aligned segment. Each pathway's views are averaged and passed through its own
FDF block. ``concat(CA, SA)`` on channels feeds a 2-channel temporal conv
whose outputs are interleaved into one waveform of length ``2 * (T // 2)``.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from ssd_pulse.dsp import HR_BAND, BvpSignal
from ssd_pulse.errors import (
    CheckpointFormatError,
    CheckpointShapeError,
    CheckpointVersionError,
    ShapeError,
    TensorFormatError,
)
from ssd_pulse.ssd import SsdBlockParams, SsdConfig, ca_pathway, sa_pathway
from ssd_pulse.stem import StemBlockParams, StemParams, VideoClip, frame_stem_forward
from ssd_pulse.temporal import FdfParams, fdf_forward, multi_temporal_views, recombine_views
from ssd_pulse.tensor_core import DTYPE, atomic_write_bytes, conv1d, decode_ptnsr, encode_ptnsr

CHECKPOINT_FORMAT = "ssd-pulse-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class PhysMambaConfig:
    d_model: int = 64
    d_state: int = 64
    d_head: int = 16
    n_heads: int = 4
    chunk_size: int = 16
    clip_len: int = 160
    height: int = 128
    width: int = 128
    hr_band: tuple[float, float] = HR_BAND
    stem_width: int = 16
    stem_kernel: int = 7
    stage1_pool: int = 4
    attn_kernel: int = 5
    predictor_kernel: int = 3
    mask_sigmoid: bool = True
    bn_eps: float = 1e-5

    def __post_init__(self):
        self.ssd_config  # validates head/model dims
        object.__setattr__(self, "hr_band", tuple(float(f) for f in self.hr_band))
        if self.predictor_kernel % 2 == 0 or self.stem_kernel % 2 == 0 or self.attn_kernel % 2 == 0:
            raise ValueError("conv kernel sizes must be odd")

    @property
    def ssd_config(self) -> SsdConfig:
        return SsdConfig(self.d_model, self.d_state, self.d_head, self.n_heads, self.chunk_size)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["hr_band"] = list(self.hr_band)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PhysMambaConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class PhysMambaWeights:
    stem: StemParams
    sa_block: SsdBlockParams
    ca_block: SsdBlockParams
    fdf_sa: FdfParams
    fdf_ca: FdfParams
    predictor: np.ndarray  # [2, 2C, k]

    def named_tensors(self) -> dict[str, np.ndarray]:
        out = {}
        for stage in ("stage1_rgb", "stage1_diff", "stage2"):
            block = getattr(self.stem, stage)
            for f in ("kernel", "bn_mean", "bn_var", "bn_gamma", "bn_beta"):
                out[f"stem.{stage}.{f}"] = getattr(block, f)
        out["stem.attn_conv"] = self.stem.attn_conv
        for name in ("sa_block", "ca_block"):
            for f in dataclasses.fields(SsdBlockParams):
                out[f"{name}.{f.name}"] = getattr(getattr(self, name), f.name)
        for name in ("fdf_sa", "fdf_ca"):
            out[f"{name}.w_re"] = getattr(self, name).w_re
            out[f"{name}.w_im"] = getattr(self, name).w_im
        out["predictor"] = self.predictor
        return out

    @classmethod
    def from_named(cls, config: PhysMambaConfig, tensors: dict[str, np.ndarray]) -> "PhysMambaWeights":
        t = tensors

        def block(stage, pool):
            return StemBlockParams(
                *(t[f"stem.{stage}.{f}"] for f in ("kernel", "bn_mean", "bn_var", "bn_gamma", "bn_beta")),
                pool=pool,
                eps=config.bn_eps,
            )

        stem = StemParams(
            block("stage1_rgb", config.stage1_pool),
            block("stage1_diff", config.stage1_pool),
            block("stage2", 2),
            t["stem.attn_conv"],
        )
        ssd = {
            name: SsdBlockParams(**{f.name: t[f"{name}.{f.name}"] for f in dataclasses.fields(SsdBlockParams)})
            for name in ("sa_block", "ca_block")
        }
        fdf = {name: FdfParams(t[f"{name}.w_re"], t[f"{name}.w_im"]) for name in ("fdf_sa", "fdf_ca")}
        return cls(stem, ssd["sa_block"], ssd["ca_block"], fdf["fdf_sa"], fdf["fdf_ca"], t["predictor"])


def expected_shapes(config: PhysMambaConfig) -> dict[str, tuple[int, ...]]:
    c, s, k = config.d_model, config.stem_width, config.stem_kernel
    shapes: dict[str, tuple[int, ...]] = {}
    for stage, c_in, c_out in (("stage1_rgb", 3, s), ("stage1_diff", 3, s), ("stage2", s, c)):
        shapes[f"stem.{stage}.kernel"] = (c_out, c_in, k, k)
        for f in ("bn_mean", "bn_var", "bn_gamma", "bn_beta"):
            shapes[f"stem.{stage}.{f}"] = (c_out,)
    shapes["stem.attn_conv"] = (1, c, config.attn_kernel, config.attn_kernel)
    for name in ("sa_block", "ca_block"):
        shapes[f"{name}.w_q"] = (c, config.d_state)
        shapes[f"{name}.w_k"] = (c, config.d_state)
        shapes[f"{name}.w_v"] = (c, c)
        shapes[f"{name}.w_out"] = (c, c)
        shapes[f"{name}.w_dt"] = (c, config.n_heads)
        shapes[f"{name}.a_log"] = (config.n_heads,)
        shapes[f"{name}.dt_bias"] = (config.n_heads,)
    for name in ("fdf_sa", "fdf_ca"):
        shapes[f"{name}.w_re"] = (c, c)
        shapes[f"{name}.w_im"] = (c, c)
    shapes["predictor"] = (2, 2 * c, config.predictor_kernel)
    return shapes


def fan_in(name: str, shape: tuple[int, ...]) -> int | None:
    """Fan-in of a weight matrix/kernel; ``None`` for vectors."""
    if len(shape) < 2:
        return None
    if name == "predictor" or name.endswith("kernel") or name.endswith("attn_conv"):
        return int(np.prod(shape[1:]))
    return shape[0]


def init_weights(config: PhysMambaConfig, seed: int = 0) -> PhysMambaWeights:
    """Seeded uniform init with bound ``1/sqrt(fan_in)``; BN statistics mean 0 / var 1.

    Decay parameters follow the usual scalar-SSD ranges: ``exp(a_log)`` in
    [1, 16] and ``softplus(dt_bias)`` log-uniform in [1e-3, 1e-1].
    """
    rng = np.random.default_rng(seed)
    tensors = {}
    for name, shape in expected_shapes(config).items():
        fi = fan_in(name, shape)
        if fi is not None:
            bound = 1.0 / np.sqrt(fi)
            tensors[name] = rng.uniform(-bound, bound, size=shape).astype(DTYPE)
        elif name.endswith("bn_var") or name.endswith("bn_gamma"):
            tensors[name] = np.ones(shape, dtype=DTYPE)
        elif name.endswith(("bn_mean", "bn_beta")):
            tensors[name] = np.zeros(shape, dtype=DTYPE)
        elif name.endswith("a_log"):
            tensors[name] = np.log(rng.uniform(1.0, 16.0, size=shape)).astype(DTYPE)
        elif name.endswith("dt_bias"):
            dt = np.exp(rng.uniform(np.log(1e-3), np.log(1e-1), size=shape))
            tensors[name] = (dt + np.log(-np.expm1(-dt))).astype(DTYPE)
        else:
            raise AssertionError(f"no init rule for {name}")
    return PhysMambaWeights.from_named(config, tensors)


def zero_weights(config: PhysMambaConfig) -> PhysMambaWeights:
    """All weights zero except BN variances (1) so normalisation stays finite."""
    tensors = {
        name: (np.ones if name.endswith("bn_var") else np.zeros)(shape, dtype=DTYPE)
        for name, shape in expected_shapes(config).items()
    }
    return PhysMambaWeights.from_named(config, tensors)


def check_weights(weights: PhysMambaWeights, config: PhysMambaConfig) -> None:
    named = weights.named_tensors()
    for name, shape in expected_shapes(config).items():
        if np.shape(named[name]) != shape:
            raise ShapeError(f"weight {name}: expected {shape}, got {np.shape(named[name])}")


class ForwardTrace(NamedTuple):
    tokens: np.ndarray  # [T', C] shared stem output
    x_sa: np.ndarray  # [T', C] SA pathway after FDF
    x_ca: np.ndarray  # [T', C] CA pathway after FDF
    fusion: np.ndarray  # [T', 2C] = concat(CA, SA)
    predictor_out: np.ndarray  # [2, T']
    signal: BvpSignal


def run_pathways(tokens, weights: PhysMambaWeights, config: PhysMambaConfig) -> tuple[np.ndarray, np.ndarray]:
    """SA and CA pathways over the multi-temporal views, before FDF."""
    views = multi_temporal_views(tokens)
    queries: dict[tuple[int, int], np.ndarray] = {}

    def sa(k, i, seg):
        out, q = sa_pathway(seg, weights.sa_block, config.chunk_size)
        queries[(k, i)] = q
        return out

    def ca(k, i, seg):
        return ca_pathway(seg, queries[(k, i)], weights.ca_block, config.chunk_size)

    sa_views = views.map_segments(sa)
    ca_views = views.map_segments(ca)
    return recombine_views(sa_views), recombine_views(ca_views)


def interleave(channels: np.ndarray) -> np.ndarray:
    """``[2, T']`` to ``[2T']`` with ``out[2t] = ch0[t]``, ``out[2t+1] = ch1[t]``."""
    return np.ascontiguousarray(channels.T).reshape(-1)


def forward_trace(clip: VideoClip, weights: PhysMambaWeights, config: PhysMambaConfig) -> ForwardTrace:
    clip.validate_for_stem()
    if clip.data.shape[2:] != (config.height, config.width):
        raise ShapeError(f"clip is {clip.data.shape[2:]} but config expects {(config.height, config.width)}")
    check_weights(weights, config)
    tokens = frame_stem_forward(clip, weights.stem, sigmoid=config.mask_sigmoid)
    sa, ca = run_pathways(tokens, weights, config)
    x_sa = fdf_forward(sa, weights.fdf_sa)
    x_ca = fdf_forward(ca, weights.fdf_ca)
    fusion = np.concatenate([x_ca, x_sa], axis=1)
    pred = conv1d(fusion.T, weights.predictor, padding=config.predictor_kernel // 2)
    signal = BvpSignal(interleave(pred).astype(DTYPE), clip.fps)
    return ForwardTrace(tokens, x_sa, x_ca, fusion, pred, signal)


def forward(clip: VideoClip, weights: PhysMambaWeights, config: PhysMambaConfig) -> BvpSignal:
    """Predicted waveform for ``clip``, sampled at ``clip.fps``."""
    return forward_trace(clip, weights, config).signal


def _sha256(blob: bytes) -> str:
    return hashlib.sha256(blob).hexdigest()


def save_checkpoint(weights: PhysMambaWeights, path: str | os.PathLike, config: PhysMambaConfig) -> None:
    """Write ``manifest.json`` plus one PTNSR blob per tensor into directory ``path``."""
    check_weights(weights, config)
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    index = []
    for name, arr in weights.named_tensors().items():
        blob = encode_ptnsr(arr)
        fname = f"{name}.ptnsr"
        atomic_write_bytes(root / fname, blob)
        index.append({"name": name, "file": fname, "shape": list(np.shape(arr)), "sha256": _sha256(blob)})
    manifest = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "config": config.to_dict(),
        "tensors": index,
    }
    atomic_write_bytes(root / "manifest.json", (json.dumps(manifest, indent=2) + "\n").encode())


def load_checkpoint(path: str | os.PathLike) -> tuple[PhysMambaWeights, PhysMambaConfig]:
    root = Path(path)
    try:
        manifest = json.loads((root / "manifest.json").read_text())
    except FileNotFoundError:
        raise
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CheckpointFormatError(f"unreadable manifest: {exc}") from exc
    if manifest.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointFormatError(f"not a checkpoint manifest (format={manifest.get('format')!r})")
    if manifest.get("version") != CHECKPOINT_VERSION:
        raise CheckpointVersionError(f"checkpoint version {manifest.get('version')} unsupported (need {CHECKPOINT_VERSION})")
    try:
        config = PhysMambaConfig.from_dict(manifest["config"])
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointFormatError(f"bad config in manifest: {exc}") from exc

    expected = expected_shapes(config)
    entries = manifest.get("tensors", [])
    names = [e["name"] for e in entries]
    if sorted(names) != sorted(expected) or len(set(names)) != len(names):
        raise CheckpointShapeError(
            f"tensor set mismatch: missing {sorted(set(expected) - set(names))}, "
            f"unexpected {sorted(set(names) - set(expected))}"
        )
    tensors = {}
    for e in entries:
        blob = (root / e["file"]).read_bytes()
        if _sha256(blob) != e.get("sha256"):
            raise CheckpointFormatError(f"content hash mismatch for {e['name']}")
        try:
            arr = decode_ptnsr(blob)
        except TensorFormatError as exc:
            raise CheckpointFormatError(f"{e['name']}: {exc}") from exc
        if arr.shape != tuple(expected[e["name"]]):
            raise CheckpointShapeError(f"{e['name']}: shape {arr.shape} disagrees with config {expected[e['name']]}")
        tensors[e["name"]] = arr
    return PhysMambaWeights.from_named(config, tensors), config
