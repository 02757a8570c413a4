"""On-disk formats: dataset files and training checkpoints.

Dataset file (``.inplds``), all integers little-endian::

    bytes 0..7    magic  b"INPLDS\\x00\\x01"
    bytes 8..15   uint64 header length H
    next H bytes  UTF-8 JSON header (sorted keys, no whitespace)
    then          the blocks listed in header["blocks"], in order, each
                  row-major with the stated dtype and shape

The header carries ``format_version``, ``K``, ``dim``, ``counts`` and
``meta`` (long-tail spec, mixture, seed and, when present, OOD injection
parameters). Blocks are ``labeled_x`` (float64), ``labeled_y`` (int64),
``unlabeled_x``, ``unlabeled_y`` (hidden labels, -1 = OOD), ``test_x``,
``test_y``.

Checkpoints are ``.npz`` archives: arrays for parameters, EMA parameters,
optimizer buffers, prior and sampler permutations, plus a JSON ``header``
entry holding scalars, RNG states and the metric records so far.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .data import SSLDataset
from .losses import PriorTracker
from .numerics import MlpParams, OptimizerState

DATASET_MAGIC = b"INPLDS\x00\x01"
DATASET_VERSION = 1
CHECKPOINT_VERSION = 1

_BLOCKS = (
    ("labeled_x", "<f8"),
    ("labeled_y", "<i8"),
    ("unlabeled_x", "<f8"),
    ("unlabeled_y", "<i8"),
    ("test_x", "<f8"),
    ("test_y", "<i8"),
)


class FormatError(ValueError):
    pass


def _dumps(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def dataset_bytes(ds):
    blocks = []
    payload = []
    for name, dtype in _BLOCKS:
        arr = np.ascontiguousarray(getattr(ds, name), dtype=dtype)
        blocks.append({"name": name, "dtype": dtype, "shape": list(arr.shape)})
        payload.append(arr.tobytes(order="C"))
    header = {
        "format_version": DATASET_VERSION,
        "K": int(ds.K),
        "dim": int(ds.dim),
        "counts": {
            "labeled": [int(c) for c in ds.labeled_counts],
            "unlabeled": [int(c) for c in ds.unlabeled_counts],
        },
        "meta": ds.meta,
        "blocks": blocks,
    }
    head = _dumps(header).encode("utf-8")
    return DATASET_MAGIC + struct.pack("<Q", len(head)) + head + b"".join(payload)


def write_dataset(path, ds):
    data = dataset_bytes(ds)
    with open(path, "wb") as fh:
        fh.write(data)
    return path


def read_dataset(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:8] != DATASET_MAGIC:
        raise FormatError(f"{path}: not a dataset file")
    (hlen,) = struct.unpack("<Q", raw[8:16])
    header = json.loads(raw[16 : 16 + hlen].decode("utf-8"))
    if header.get("format_version") != DATASET_VERSION:
        raise FormatError(f"{path}: unsupported dataset version {header.get('format_version')}")
    offset = 16 + hlen
    arrays = {}
    for block in header["blocks"]:
        dtype = np.dtype(block["dtype"])
        n = int(np.prod(block["shape"], dtype=np.int64))
        size = n * dtype.itemsize
        if offset + size > len(raw):
            raise FormatError(f"{path}: truncated block {block['name']}")
        arrays[block["name"]] = np.frombuffer(raw, dtype, n, offset).reshape(block["shape"]).copy()
        offset += size
    if offset != len(raw):
        raise FormatError(f"{path}: {len(raw) - offset} trailing bytes")
    return SSLDataset(
        labeled_x=arrays["labeled_x"],
        labeled_y=arrays["labeled_y"],
        unlabeled_x=arrays["unlabeled_x"],
        unlabeled_y=arrays["unlabeled_y"],
        test_x=arrays["test_x"],
        test_y=arrays["test_y"],
        K=header["K"],
        labeled_counts=np.asarray(header["counts"]["labeled"], dtype=np.int64),
        unlabeled_counts=np.asarray(header["counts"]["unlabeled"], dtype=np.int64),
        meta=header["meta"],
    )


# -- checkpoints -------------------------------------------------------------


def save_checkpoint(path, state):
    arrays = {}
    for i, a in enumerate(state.params.arrays()):
        arrays[f"param_{i}"] = a
    for i, a in enumerate(state.ema.arrays()):
        arrays[f"ema_{i}"] = a
    for s, slot in enumerate(state.opt.buffers):
        for i, a in enumerate(slot):
            arrays[f"opt_{s}_{i}"] = a
    arrays["prior"] = state.prior.p
    for name, sampler in state.samplers.items():
        arrays[f"perm_{name}"] = sampler.perm
    opt = state.opt
    header = {
        "version": CHECKPOINT_VERSION,
        "iteration": state.iteration,
        "n_params": len(state.params.arrays()),
        "activation": state.params.activation,
        "optimizer": {
            "kind": opt.kind, "lr": opt.lr, "momentum": opt.momentum,
            "nesterov": opt.nesterov, "beta1": opt.beta1, "beta2": opt.beta2,
            "eps": opt.eps, "weight_decay": opt.weight_decay, "step": opt.step,
            "slots": len(opt.buffers),
        },
        "prior": {"momentum": state.prior.momentum, "lambda_m": state.prior.lambda_m},
        "rngs": {name: rng.bit_generator.state for name, rng in state.rngs.items()},
        "samplers": {name: {"n": s.n, "pos": s.pos} for name, s in state.samplers.items()},
        "ood_cum": state.ood_cum,
        "loss_sums": state.loss_sums,
        "records": state.records,
    }
    arrays["header"] = np.frombuffer(_dumps(header).encode("utf-8"), dtype=np.uint8)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)
    return path


def load_checkpoint(path):
    from .trainer import EpochSampler, TrainState

    with np.load(path) as z:
        header = json.loads(bytes(z["header"]).decode("utf-8"))
        if header.get("version") != CHECKPOINT_VERSION:
            raise FormatError(f"{path}: unsupported checkpoint version {header.get('version')}")
        n = header["n_params"]
        act = header["activation"]
        params = MlpParams.from_arrays([z[f"param_{i}"] for i in range(n)], act)
        ema = MlpParams.from_arrays([z[f"ema_{i}"] for i in range(n)], act)
        o = dict(header["optimizer"])
        slots = o.pop("slots")
        buffers = [[z[f"opt_{s}_{i}"] for i in range(n)] for s in range(slots)]
        opt = OptimizerState(buffers=buffers, **o)
        prior = PriorTracker(z["prior"].copy(), **header["prior"])
        rngs = {}
        for name, st in header["rngs"].items():
            bg = getattr(np.random, st["bit_generator"])()
            bg.state = st
            rngs[name] = np.random.Generator(bg)
        rng_for = {"l": "sample_l", "u": "sample_u"}
        samplers = {}
        for name, s in header["samplers"].items():
            sampler = EpochSampler.__new__(EpochSampler)
            sampler.n, sampler.pos = s["n"], s["pos"]
            sampler.perm = z[f"perm_{name}"].copy()
            sampler.rng = rngs[rng_for[name]]
            samplers[name] = sampler
    return TrainState(
        iteration=header["iteration"],
        params=params,
        opt=opt,
        ema=ema,
        prior=prior,
        rngs=rngs,
        samplers=samplers,
        ood_cum=header["ood_cum"],
        loss_sums=header["loss_sums"],
        records=header["records"],
    )
