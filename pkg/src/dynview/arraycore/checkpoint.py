"""Binary checkpoint format.

Layout: magic string "GRVS1", a little-endian uint64 header length, a UTF-8
JSON header (parameter names + shapes, hyper-parameters, Adam state
metadata), then raw little-endian float32 payloads in header order. When
optimizer state is saved, each parameter's first/second-moment buffers
follow the weights block, in the same name order.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from ..errors import DataError
from .tensor import Tensor
from .optim import AdamState

MAGIC = b"GRVS1"


def save_checkpoint(path, params: dict, hyper: dict, adam: AdamState | None = None):
    names = list(params.keys())
    header = {
        "params": [{"name": n, "shape": list(params[n].shape)} for n in names],
        "hyper": hyper,
        "adam": None,
    }
    if adam is not None:
        header["adam"] = {"lr": adam.lr, "beta1": adam.beta1, "beta2": adam.beta2,
                          "eps": adam.eps, "step": adam.step}
    hjson = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<Q", len(hjson)))
        f.write(hjson)
        for n in names:
            f.write(params[n].data.astype("<f4").tobytes())
        if adam is not None:
            for buf in (adam.m, adam.v):
                for n in names:
                    f.write(np.asarray(buf.get(n, np.zeros(params[n].shape)))
                            .astype("<f4").tobytes())


def load_checkpoint(path):
    """Returns (params: name -> Tensor, hyper: dict, adam: AdamState | None)."""
    with open(path, "rb") as f:
        if f.read(len(MAGIC)) != MAGIC:
            raise DataError(f"{path}: bad magic, not a checkpoint")
        (hlen,) = struct.unpack("<Q", f.read(8))
        header = json.loads(f.read(hlen).decode("utf-8"))
        params = {}
        for entry in header["params"]:
            shape = tuple(entry["shape"])
            n = int(np.prod(shape)) if shape else 1
            raw = f.read(4 * n)
            if len(raw) != 4 * n:
                raise DataError(f"{path}: truncated payload for {entry['name']}")
            arr = np.frombuffer(raw, dtype="<f4").reshape(shape).astype(np.float32)
            params[entry["name"]] = Tensor(arr, requires_grad=True, name=entry["name"])
        adam = None
        if header.get("adam"):
            meta = header["adam"]
            adam = AdamState(lr=meta["lr"], beta1=meta["beta1"], beta2=meta["beta2"],
                             eps=meta["eps"], step=meta["step"])
            for buf in (adam.m, adam.v):
                for entry in header["params"]:
                    shape = tuple(entry["shape"])
                    n = int(np.prod(shape)) if shape else 1
                    raw = f.read(4 * n)
                    if len(raw) != 4 * n:
                        raise DataError(f"{path}: truncated optimizer payload")
                    buf[entry["name"]] = np.frombuffer(raw, dtype="<f4") \
                        .reshape(shape).astype(np.float32)
    return params, header["hyper"], adam
