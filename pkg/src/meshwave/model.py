"""Descriptor-learning network: architecture grammar, forward/backward,
operator construction, and checkpoint IO.

A model is a stack of multiscale operator-convolution layers followed by
affine layers, described by an architecture string such as

    MGCONV96(16)+MGCONV96(16)+MGCONV128(16)+FC256

Per-shape operators are supplied as a dict keyed by scale index: for the
wavelet network these are transposed L1-normalized wavelet matrices; the
Chebyshev baseline plugs in polynomial operators through the same interface.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import layers
from .errors import DataError
from .filters import FilterBank, select_scales
from .spectral import SpectralBasis
from .wavelets import wavelet_matrix

DEFAULT_ARCHITECTURE = (
    "MGCONV96(16)+MGCONV96(16)+MGCONV96(16)+MGCONV96(16)+MGCONV96(16)"
    "+MGCONV128(16)+FC256"
)
DEFAULT_INPUT_DIM = 128

_CONV_RE = re.compile(r"^MGCONV(\d+)\((\d+)\)$")
_FC_RE = re.compile(r"^FC(\d+)$")

_CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class LayerSpec:
    kind: str  # "conv" or "fc"
    out_dim: int
    n_scales: int = 0


def parse_architecture(text: str) -> list:
    specs = []
    for term in text.strip().split("+"):
        term = term.strip()
        m = _CONV_RE.match(term)
        if m:
            out, ns = int(m.group(1)), int(m.group(2))
            if out < 1 or ns < 1:
                raise DataError(f"bad layer sizes in {term!r}")
            specs.append(LayerSpec("conv", out, ns))
            continue
        m = _FC_RE.match(term)
        if m:
            out = int(m.group(1))
            if out < 1:
                raise DataError(f"bad layer size in {term!r}")
            specs.append(LayerSpec("fc", out))
            continue
        raise DataError(f"cannot parse architecture term {term!r}")
    if not specs:
        raise DataError("empty architecture string")
    return specs


def format_architecture(specs) -> str:
    parts = []
    for s in specs:
        if s.kind == "conv":
            parts.append(f"MGCONV{s.out_dim}({s.n_scales})")
        else:
            parts.append(f"FC{s.out_dim}")
    return "+".join(parts)


@dataclass
class Model:
    kind: str  # "mgcn" or "chebyshev"
    specs: list
    input_dim: int
    scale_sets: list  # per conv layer, operator keys
    params: dict = field(default_factory=dict)
    head_dim: Optional[int] = None

    @property
    def architecture(self) -> str:
        return format_architecture(self.specs)

    @property
    def output_dim(self) -> int:
        return self.specs[-1].out_dim


def _scale_set_for(kind: str, n_scales: int) -> list:
    if kind == "chebyshev":
        # polynomial order in place of a wavelet scale set
        return list(range(n_scales))
    return [int(s) for s in select_scales(32 * n_scales)]


def _glorot(rng, shape):
    bound = np.sqrt(6.0 / (shape[0] + shape[1]))
    return rng.uniform(-bound, bound, size=shape)


def build_model(
    architecture: str = DEFAULT_ARCHITECTURE,
    input_dim: int = DEFAULT_INPUT_DIM,
    kind: str = "mgcn",
    head_dim: Optional[int] = None,
    seed: int = 0,
) -> Model:
    if kind not in ("mgcn", "chebyshev"):
        raise DataError(f"unknown model kind {kind!r}")
    specs = parse_architecture(architecture)
    scale_sets = [_scale_set_for(kind, s.n_scales) for s in specs if s.kind == "conv"]
    rng = np.random.default_rng(seed)
    params = {}
    dim = input_dim
    conv_i = 0
    for li, spec in enumerate(specs):
        if spec.kind == "conv":
            for j in range(spec.n_scales):
                params[f"conv{li}.w{j}"] = _glorot(rng, (dim, spec.out_dim))
            conv_i += 1
        else:
            params[f"fc{li}.w"] = _glorot(rng, (dim, spec.out_dim))
            params[f"fc{li}.b"] = np.zeros(spec.out_dim)
        dim = spec.out_dim
    if head_dim is not None:
        params["head.w"] = _glorot(rng, (dim, head_dim))
        params["head.b"] = np.zeros(head_dim)
    return Model(kind, specs, input_dim, scale_sets, params, head_dim)


def required_operator_keys(model: Model) -> list:
    keys = set()
    for s in model.scale_sets:
        keys.update(s)
    return sorted(keys)


def build_wavelet_operators(
    basis: SpectralBasis, bank: FilterBank, keys
) -> dict:
    """{scale index: transposed L1-normalized wavelet matrix}."""
    ops = {}
    for s in keys:
        psi = wavelet_matrix(basis, bank, int(s))
        ops[int(s)] = np.ascontiguousarray(layers.normalize_wavelet_columns(psi).T)
    return ops


def _layer_ops(model: Model, conv_i: int, shape_ops: dict) -> list:
    try:
        return [shape_ops[s] for s in model.scale_sets[conv_i]]
    except KeyError as exc:
        raise DataError(f"missing operator for scale index {exc.args[0]}") from None


def forward(model: Model, x: np.ndarray, shape_ops: dict):
    """Run the stack; returns (descriptors, caches) for backward."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.input_dim:
        raise DataError(
            f"expected input of shape (n, {model.input_dim}), got {x.shape}"
        )
    caches = []
    conv_i = 0
    for li, spec in enumerate(model.specs):
        if spec.kind == "conv":
            ws = [model.params[f"conv{li}.w{j}"] for j in range(spec.n_scales)]
            x, cache = layers.conv_forward(x, ws, _layer_ops(model, conv_i, shape_ops))
            conv_i += 1
        else:
            x, cache = layers.affine_forward(
                x, model.params[f"fc{li}.w"], model.params[f"fc{li}.b"]
            )
        caches.append(cache)
    return x, caches


def backward(model: Model, caches, dout: np.ndarray, shape_ops: dict):
    """Gradients of every parameter plus the input, given d(output)."""
    grads = {}
    dx = dout
    conv_i = len(model.scale_sets)
    for li in range(len(model.specs) - 1, -1, -1):
        spec = model.specs[li]
        if spec.kind == "conv":
            conv_i -= 1
            ws = [model.params[f"conv{li}.w{j}"] for j in range(spec.n_scales)]
            dx, dws = layers.conv_backward(
                caches[li], dx, ws, _layer_ops(model, conv_i, shape_ops)
            )
            for j, dw in enumerate(dws):
                grads[f"conv{li}.w{j}"] = dw
        else:
            dx, dw, db = layers.affine_backward(
                caches[li], dx, model.params[f"fc{li}.w"]
            )
            grads[f"fc{li}.w"] = dw
            grads[f"fc{li}.b"] = db
    return dx, grads


def head_forward(model: Model, desc: np.ndarray):
    if model.head_dim is None:
        raise DataError("model has no classification head")
    return layers.affine_forward(desc, model.params["head.w"], model.params["head.b"])


def head_backward(model: Model, cache, dlogits: np.ndarray):
    dx, dw, db = layers.affine_backward(cache, dlogits, model.params["head.w"])
    return dx, {"head.w": dw, "head.b": db}


def save_checkpoint(
    path,
    model: Model,
    opt_state: Optional[dict] = None,
    rng_state: Optional[dict] = None,
    metadata: Optional[dict] = None,
):
    meta = {
        "format_version": _CHECKPOINT_VERSION,
        "kind": model.kind,
        "architecture": model.architecture,
        "input_dim": model.input_dim,
        "scale_sets": model.scale_sets,
        "head_dim": model.head_dim,
        "metadata": metadata or {},
        "rng_state": rng_state,
    }
    arrays = {"__meta__": np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8)}
    for name, arr in model.params.items():
        arrays[f"param/{name}"] = arr
    if opt_state is not None:
        arrays["opt/step"] = np.asarray(opt_state["step"], dtype=np.int64)
        for name, arr in opt_state["m"].items():
            arrays[f"opt/m/{name}"] = arr
        for name, arr in opt_state["v"].items():
            arrays[f"opt/v/{name}"] = arr
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_checkpoint(path):
    """Returns (model, opt_state, rng_state, metadata)."""
    try:
        data = np.load(path)
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot read checkpoint {path}: {exc}") from None
    if "__meta__" not in data.files:
        raise DataError(f"{path}: not a checkpoint file")
    meta = json.loads(bytes(data["__meta__"]).decode())
    if meta.get("format_version") != _CHECKPOINT_VERSION:
        raise DataError(
            f"{path}: unsupported checkpoint version {meta.get('format_version')}"
        )
    specs = parse_architecture(meta["architecture"])
    params = {}
    for key in data.files:
        if key.startswith("param/"):
            params[key[len("param/") :]] = data[key]
    model = Model(
        meta["kind"],
        specs,
        int(meta["input_dim"]),
        [list(map(int, s)) for s in meta["scale_sets"]],
        params,
        meta["head_dim"],
    )
    opt_state = None
    if "opt/step" in data.files:
        opt_state = {
            "step": int(data["opt/step"]),
            "m": {
                k[len("opt/m/") :]: data[k]
                for k in data.files
                if k.startswith("opt/m/")
            },
            "v": {
                k[len("opt/v/") :]: data[k]
                for k in data.files
                if k.startswith("opt/v/")
            },
        }
    return model, opt_state, meta.get("rng_state"), meta.get("metadata", {})
