"""Stacked sparse denoising autoencoders for patch enhancement.

Builds the integrated enhancer (one stack trained on jointly darkened and
noisy patches) and the staged variant (a contrast stage trained on
darkened-only data feeding a denoise stage trained on noisy-only data) on
top of the nn engine: greedy layer-wise pretraining of each
encoder/decoder pair, assembly of the unrolled network with decoder weights
transposed from the encoders, end-to-end finetuning, and a self-describing
binary model format.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .nn import (
    DenseLayer,
    LossConfig,
    Network,
    SgdSchedule,
    init_network,
    sgd_train,
    ssda_loss,
)
from .rng import child_key

ROLES = ("integrated", "contrast_stage", "denoise_stage")

TAG_DA = 21
TAG_FINETUNE = 22
TAG_CONTRAST = 23
TAG_DENOISE = 24

MODEL_MAGIC = b"SSDA"
MODEL_VERSION = 1
_ROLE_CODES = {"integrated": 0, "contrast_stage": 1, "denoise_stage": 2}
_ROLE_NAMES = {v: k for k, v in _ROLE_CODES.items()}
_ACT_CODES = {"sigmoid": 0, "identity": 1}
_ACT_NAMES = {v: k for k, v in _ACT_CODES.items()}


class ModelFormatError(Exception):
    """Model file cannot be parsed; offset is the failing byte position."""

    def __init__(self, message, offset=None):
        super().__init__(message)
        self.offset = offset


@dataclass
class SSDAModel:
    """Unrolled encoder/decoder stack operating on flattened square patches."""

    network: Network
    patch_side: int = 17
    role: str = "integrated"
    training_meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"unknown role {self.role!r}")
        dims = self.network.dims
        if len(self.network.layers) % 2 != 0:
            raise ValueError("model must hold an even number of layers")
        if list(dims) != list(dims[::-1]):
            raise ValueError(f"layer dimensions {dims} are not mirror-symmetric")
        if dims[0] != self.patch_side ** 2:
            raise ValueError(
                f"input dim {dims[0]} does not equal patch_side^2 "
                f"({self.patch_side}^2)"
            )

    @property
    def dims(self):
        return self.network.dims

    def infer(self, patches: np.ndarray) -> np.ndarray:
        """Enhanced patches for a vector or a (n, patch_side^2) batch."""
        return self.network.output(patches)


@dataclass
class StagedModel:
    """Contrast stage followed by a denoise stage, applied in series."""

    contrast: SSDAModel
    denoise: SSDAModel

    def __post_init__(self):
        if self.contrast.role != "contrast_stage":
            raise ValueError("first stage must have role contrast_stage")
        if self.denoise.role != "denoise_stage":
            raise ValueError("second stage must have role denoise_stage")
        if self.contrast.patch_side != self.denoise.patch_side:
            raise ValueError("stages must share patch_side")

    @property
    def patch_side(self) -> int:
        return self.contrast.patch_side

    def infer(self, patches: np.ndarray) -> np.ndarray:
        return self.denoise.infer(self.contrast.infer(patches))


def infer_patch(model, patch: np.ndarray) -> np.ndarray:
    """Enhance one flattened patch with values in [0, 1]."""
    p = np.asarray(patch, dtype=np.float64)
    expected = model.patch_side ** 2
    if p.shape != (expected,):
        raise ValueError(f"patch must have shape ({expected},), got {p.shape}")
    if p.min() < 0.0 or p.max() > 1.0:
        raise ValueError("patch values must lie in [0, 1]")
    return model.infer(p)


def pretrain_da(clean_inputs, corrupted_inputs, hidden_dim: int,
                cfg: LossConfig, schedule: SgdSchedule, seed,
                valid_clean=None, valid_corrupted=None, on_epoch=None):
    """Train one denoising autoencoder, returning (encoder, decoder).

    The pair is initialized fresh (Glorot weights, zero biases) and trained
    with the sparsity-regularized loss to map corrupted inputs to clean
    targets. Validation losses in the epoch history default to the training
    set when no validation split is given. on_epoch, when set, receives each
    EpochStats as training progresses.
    """
    clean = np.asarray(clean_inputs, dtype=np.float64)
    corrupted = np.asarray(corrupted_inputs, dtype=np.float64)
    if clean.shape != corrupted.shape:
        raise ValueError(
            f"clean {clean.shape} and corrupted {corrupted.shape} shapes differ"
        )
    vy = clean if valid_clean is None else np.asarray(valid_clean, float)
    vx = corrupted if valid_corrupted is None else np.asarray(valid_corrupted, float)
    net = init_network((corrupted.shape[1], hidden_dim, corrupted.shape[1]), seed)
    _, history = sgd_train(net, clean, corrupted, vy, vx, "da", cfg, schedule, seed)
    if on_epoch is not None:
        for stats in history:
            on_epoch(stats)
    return net.layers[0], net.layers[1]


def assemble_ssda(encoders, patch_side: int, role="integrated") -> SSDAModel:
    """Unroll trained encoders into the full stack.

    Decoder k mirrors encoder L+1-k: its weight matrix is the transpose of
    that encoder's weights and its biases start at zero.
    """
    enc_layers = [e.copy() for e in encoders]
    dec_layers = [
        DenseLayer(e.weights.T.copy(), np.zeros(e.in_dim), "sigmoid")
        for e in reversed(encoders)
    ]
    return SSDAModel(Network(enc_layers + dec_layers), patch_side=patch_side,
                     role=role)


def _broadcast(value, n, kind):
    if isinstance(value, (list, tuple)) and value and isinstance(
            value[0], (LossConfig, SgdSchedule)):
        if len(value) != n:
            raise ValueError(f"need {n} {kind}, got {len(value)}")
        return list(value)
    return [value] * n


def _patch_side_for(input_dim: int) -> int:
    side = math.isqrt(input_dim)
    if side * side != input_dim:
        raise ValueError(f"input dim {input_dim} is not a perfect square")
    return side


def build_llnet(train_pairs, valid_pairs, arch=(289, 867, 578, 289),
                da_cfgs=None, da_schedules=None, finetune_schedule=None,
                finetune_lam=1e-4, seed=0, role="integrated",
                deep_targets="denoise", on_epoch=None,
                corpus_fingerprint=None) -> SSDAModel:
    """Greedy layer-wise pretraining, assembly, and finetuning.

    train_pairs and valid_pairs are (corrupted, clean) arrays of flattened
    patches. arch lists the input dim followed by the hidden dim of each DA.
    Representations for DA k > 1 are the activations of the already-trained
    encoders applied to the corpus; deep_targets chooses what those DAs
    reconstruct: "denoise" (corrupted-representation to
    clean-representation) or "autoencode" (clean to clean). After assembly
    the whole stack is finetuned end to end. on_epoch, when given, is called
    with (phase, EpochStats) for every epoch of every phase.
    """
    x_tr, y_tr = (np.asarray(a, dtype=np.float64) for a in train_pairs)
    x_va, y_va = (np.asarray(a, dtype=np.float64) for a in valid_pairs)
    if x_tr.shape[1] != arch[0]:
        raise ValueError(f"patch dim {x_tr.shape[1]} does not match arch {arch}")
    if deep_targets not in ("denoise", "autoencode"):
        raise ValueError("deep_targets must be 'denoise' or 'autoencode'")
    patch_side = _patch_side_for(arch[0])
    n_da = len(arch) - 1
    cfgs = _broadcast(da_cfgs if da_cfgs is not None else LossConfig(), n_da,
                      "loss configs")
    schedules = _broadcast(
        da_schedules if da_schedules is not None else SgdSchedule(), n_da,
        "schedules")
    if finetune_schedule is None:
        finetune_schedule = SgdSchedule(stages=[(200, 0.1), (None, 0.01)])

    encoders = []
    cur_tr_x, cur_tr_y = x_tr, y_tr
    cur_va_x, cur_va_y = x_va, y_va
    for k, hidden in enumerate(arch[1:]):
        phase = f"pretrain_da{k + 1}"
        cb = None
        if on_epoch is not None:
            cb = lambda stats, _p=phase: on_epoch(_p, stats)
        enc, _ = pretrain_da(cur_tr_y, cur_tr_x, hidden, cfgs[k], schedules[k],
                             seed=child_key(seed, TAG_DA, k),
                             valid_clean=cur_va_y, valid_corrupted=cur_va_x,
                             on_epoch=cb)
        encoders.append(enc)
        if deep_targets == "denoise":
            cur_tr_x, cur_tr_y = enc.apply(cur_tr_x), enc.apply(cur_tr_y)
            cur_va_x, cur_va_y = enc.apply(cur_va_x), enc.apply(cur_va_y)
        else:
            h_tr = enc.apply(cur_tr_y)
            h_va = enc.apply(cur_va_y)
            cur_tr_x = cur_tr_y = h_tr
            cur_va_x = cur_va_y = h_va

    model = assemble_ssda(encoders, patch_side, role)
    net = model.network
    valid_before = ssda_loss(y_va, x_va, net, finetune_lam)
    _, history = sgd_train(net, y_tr, x_tr, y_va, x_va, "ssda",
                           LossConfig(lam=finetune_lam, beta=0.0),
                           finetune_schedule, seed=child_key(seed, TAG_FINETUNE))
    if on_epoch is not None:
        for stats in history:
            on_epoch("finetune", stats)
    model.training_meta = {
        "seed": list(child_key(seed)),
        "arch": list(arch),
        "role": role,
        "deep_targets": deep_targets,
        "corpus_fingerprint": corpus_fingerprint,
        "valid_loss_pre_finetune": valid_before,
        "valid_loss_final": history[-1].valid_loss if history else valid_before,
    }
    return model


def build_sllnet(dark_train, dark_valid, noise_train, noise_valid,
                 arch=(289, 867, 578, 289), da_cfgs=None, da_schedules=None,
                 finetune_schedule=None, finetune_lam=1e-4, seed=0,
                 deep_targets="denoise", on_epoch=None,
                 corpus_fingerprints=(None, None)) -> StagedModel:
    """Train the two stages independently and wire them in series.

    The contrast stage is trained on darkened-only pairs, the denoise stage
    on noisy-only pairs; both use the same architecture and schedules.
    on_epoch phases are prefixed with "contrast." and "denoise.".
    """
    def stage_cb(prefix):
        if on_epoch is None:
            return None
        return lambda phase, stats: on_epoch(prefix + phase, stats)

    contrast = build_llnet(dark_train, dark_valid, arch, da_cfgs, da_schedules,
                           finetune_schedule, finetune_lam,
                           seed=child_key(seed, TAG_CONTRAST),
                           role="contrast_stage", deep_targets=deep_targets,
                           on_epoch=stage_cb("contrast."),
                           corpus_fingerprint=corpus_fingerprints[0])
    denoise = build_llnet(noise_train, noise_valid, arch, da_cfgs, da_schedules,
                          finetune_schedule, finetune_lam,
                          seed=child_key(seed, TAG_DENOISE),
                          role="denoise_stage", deep_targets=deep_targets,
                          on_epoch=stage_cb("denoise."),
                          corpus_fingerprint=corpus_fingerprints[1])
    return StagedModel(contrast, denoise)


def _record_bytes(model: SSDAModel) -> bytes:
    dims = model.network.dims
    parts = [
        MODEL_MAGIC,
        struct.pack("<I", MODEL_VERSION),
        struct.pack("<B", _ROLE_CODES[model.role]),
        struct.pack("<I", model.patch_side),
        struct.pack("<I", len(model.network.layers)),
        struct.pack(f"<{len(dims)}I", *dims),
        bytes(_ACT_CODES[l.activation] for l in model.network.layers),
    ]
    for layer in model.network.layers:
        parts.append(np.ascontiguousarray(layer.weights, dtype="<f8").tobytes())
        parts.append(np.ascontiguousarray(layer.biases, dtype="<f8").tobytes())
    meta = json.dumps(model.training_meta, sort_keys=True).encode("utf-8")
    parts.append(struct.pack("<I", len(meta)))
    parts.append(meta)
    return b"".join(parts)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise ModelFormatError(
                f"truncated model file: needed {n} bytes for {what} "
                f"at offset {self.pos}", offset=self.pos)
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def u32(self, what: str) -> int:
        return struct.unpack("<I", self.take(4, what))[0]

    def u8(self, what: str) -> int:
        return self.take(1, what)[0]

    @property
    def exhausted(self) -> bool:
        return self.pos >= len(self.data)


def _read_record(r: _Reader) -> SSDAModel:
    start = r.pos
    magic = r.take(4, "magic")
    if magic != MODEL_MAGIC:
        raise ModelFormatError(
            f"bad magic {magic!r} at offset {start}", offset=start)
    version = r.u32("version")
    if version != MODEL_VERSION:
        raise ModelFormatError(
            f"unsupported model version {version} at offset {start + 4}",
            offset=start + 4)
    role_code = r.u8("role")
    if role_code not in _ROLE_NAMES:
        raise ModelFormatError(
            f"unknown role code {role_code} at offset {r.pos - 1}",
            offset=r.pos - 1)
    patch_side = r.u32("patch_side")
    n_layers = r.u32("layer count")
    if n_layers == 0 or n_layers > 64:
        raise ModelFormatError(
            f"implausible layer count {n_layers} at offset {r.pos - 4}",
            offset=r.pos - 4)
    dims = [r.u32("dims") for _ in range(n_layers + 1)]
    acts = []
    for _ in range(n_layers):
        code = r.u8("activation code")
        if code not in _ACT_NAMES:
            raise ModelFormatError(
                f"unknown activation code {code} at offset {r.pos - 1}",
                offset=r.pos - 1)
        acts.append(_ACT_NAMES[code])
    layers = []
    for k in range(n_layers):
        out_dim, in_dim = dims[k + 1], dims[k]
        w = np.frombuffer(
            r.take(out_dim * in_dim * 8, f"layer {k} weights"), dtype="<f8"
        ).reshape(out_dim, in_dim).astype(np.float64)
        b = np.frombuffer(
            r.take(out_dim * 8, f"layer {k} biases"), dtype="<f8"
        ).astype(np.float64)
        layers.append(DenseLayer(w, b, acts[k]))
    meta_len = r.u32("metadata length")
    meta_raw = r.take(meta_len, "metadata")
    try:
        meta = json.loads(meta_raw.decode("utf-8")) if meta_len else {}
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ModelFormatError(
            f"bad metadata block at offset {r.pos - meta_len}: {exc}",
            offset=r.pos - meta_len)
    try:
        return SSDAModel(Network(layers), patch_side=patch_side,
                         role=_ROLE_NAMES[role_code], training_meta=meta)
    except ValueError as exc:
        raise ModelFormatError(
            f"inconsistent model record starting at offset {start}: {exc}",
            offset=start)


def save_model(model, path):
    """Write a model (single stack or staged pair) to path atomically."""
    from .fileutil import atomic_write_bytes

    if isinstance(model, StagedModel):
        payload = _record_bytes(model.contrast) + _record_bytes(model.denoise)
    else:
        payload = _record_bytes(model)
    atomic_write_bytes(path, payload)


def load_model(path):
    """Read a model file; one record loads as SSDAModel, two as StagedModel."""
    with open(path, "rb") as f:
        data = f.read()
    r = _Reader(data)
    records = [_read_record(r)]
    if not r.exhausted:
        records.append(_read_record(r))
    if not r.exhausted:
        raise ModelFormatError(
            f"trailing data after second record at offset {r.pos}", offset=r.pos)
    if len(records) == 1:
        return records[0]
    try:
        return StagedModel(records[0], records[1])
    except ValueError as exc:
        raise ModelFormatError(f"invalid staged pair: {exc}")
