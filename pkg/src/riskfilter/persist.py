"""Versioned flat binary container for value models and policies.

Layout (all integers little-endian, arrays row-major float64):

    bytes 0-3   magic  b"RFC1"
    bytes 4-7   uint32 format version (currently 1)
    bytes 8-11  uint32 record count
    per record:
        uint32  name length, then the UTF-8 name
        uint8   kind: 0 = float64 array, 1 = UTF-8 string
        arrays:  uint32 ndim, ndim * uint64 shape, data as float64
        strings: uint32 byte length, then the bytes

A value-model file stores the layer sizes, normalization statistics,
discount/horizon metadata and weight matrices; a policy file stores the
gain matrix, reference state, and action-space description.  Files are
independent of the barrier threshold, which stays a runtime parameter.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import ContractViolationError, MissingModelError
from .policies import Policy
from .value import ValueModel

MAGIC = b"RFC1"
VERSION = 1

_KIND_ARRAY = 0
_KIND_STRING = 1


def write_container(path, records: dict) -> None:
    """Write named records (float arrays or strings) to ``path``."""
    chunks = [MAGIC, struct.pack("<II", VERSION, len(records))]
    for name, value in records.items():
        encoded = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(encoded)))
        chunks.append(encoded)
        if isinstance(value, str):
            data = value.encode("utf-8")
            chunks.append(struct.pack("<BI", _KIND_STRING, len(data)))
            chunks.append(data)
        else:
            arr = np.ascontiguousarray(np.asarray(value, dtype="<f8"))
            chunks.append(struct.pack("<BI", _KIND_ARRAY, arr.ndim))
            chunks.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
            chunks.append(arr.tobytes())
    Path(path).write_bytes(b"".join(chunks))


def read_container(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise MissingModelError(f"model file not found: {path}")
    buf = path.read_bytes()
    if buf[:4] != MAGIC:
        raise ContractViolationError(f"{path} is not a model container (bad magic)")
    version, count = struct.unpack_from("<II", buf, 4)
    if version != VERSION:
        raise ContractViolationError(f"unsupported container version {version}")
    offset = 12
    records = {}
    for _ in range(count):
        (name_len,) = struct.unpack_from("<I", buf, offset)
        offset += 4
        name = buf[offset:offset + name_len].decode("utf-8")
        offset += name_len
        kind, head = struct.unpack_from("<BI", buf, offset)
        offset += 5
        if kind == _KIND_STRING:
            records[name] = buf[offset:offset + head].decode("utf-8")
            offset += head
        elif kind == _KIND_ARRAY:
            shape = struct.unpack_from(f"<{head}Q", buf, offset)
            offset += 8 * head
            n = int(np.prod(shape)) if head else 1
            arr = np.frombuffer(buf, dtype="<f8", count=n, offset=offset).reshape(shape)
            records[name] = arr.copy()
            offset += 8 * n
        else:
            raise ContractViolationError(f"unknown record kind {kind} in {path}")
    return records


def save_value_model(model: ValueModel, path) -> None:
    records = {
        "type": "value_model",
        "layer_sizes": np.array(model.layer_sizes, dtype=float),
        "x_mean": model.x_mean,
        "x_scale": model.x_scale,
        "y_stats": np.array([model.y_mean, model.y_scale]),
        "meta": np.array([model.gamma, float(model.horizon),
                          float(model.train_seed), model.final_mse]),
    }
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        records[f"w{i}"] = w
        records[f"b{i}"] = b
    write_container(path, records)


def load_value_model(path) -> ValueModel:
    rec = read_container(path)
    if rec.get("type") != "value_model":
        raise ContractViolationError(f"{path} does not hold a value model")
    sizes = tuple(int(s) for s in rec["layer_sizes"])
    n_layers = len(sizes) - 1
    weights = tuple(rec[f"w{i}"] for i in range(n_layers))
    biases = tuple(rec[f"b{i}"].ravel() for i in range(n_layers))
    y_mean, y_scale = rec["y_stats"]
    gamma, horizon, train_seed, final_mse = rec["meta"]
    return ValueModel(
        layer_sizes=sizes,
        weights=weights,
        biases=biases,
        x_mean=rec["x_mean"].ravel(),
        x_scale=rec["x_scale"].ravel(),
        y_mean=float(y_mean),
        y_scale=float(y_scale),
        gamma=float(gamma),
        horizon=int(horizon),
        train_seed=int(train_seed),
        final_mse=float(final_mse),
    )


def save_policy(policy: Policy, path) -> None:
    records = {
        "type": "policy",
        "kind": policy.kind,
        "gains": policy.gains,
        "x_ref": policy.x_ref,
        "action_dims": np.array(policy.action_dims, dtype=float),
        "action_box": np.array([policy.action_low, policy.action_high]),
    }
    if policy.setpoints is not None:
        records["setpoints"] = policy.setpoints
    if policy.table_breaks is not None:
        records["table_breaks"] = policy.table_breaks
        records["table_values"] = policy.table_values
    write_container(path, records)


def load_policy(path) -> Policy:
    rec = read_container(path)
    if rec.get("type") != "policy":
        raise ContractViolationError(f"{path} does not hold a policy")
    low, high = rec["action_box"]
    return Policy(
        kind=rec["kind"],
        gains=rec["gains"],
        x_ref=rec["x_ref"].ravel(),
        action_dims=tuple(int(d) for d in rec["action_dims"]),
        action_low=float(low),
        action_high=float(high),
        setpoints=rec.get("setpoints"),
        table_breaks=rec.get("table_breaks"),
        table_values=rec.get("table_values"),
    )
