"""ENFMDL01 model container.

Layout: 8-byte magic, uint32 format version, uint32 header length, a JSON
header, then raw little-endian array blobs. The header lists every blob with
its dtype, shape and byte offset, grouped into named sections (``weights``,
``trees``, ...). Output is byte-stable for identical models.
"""

import json
import struct
from pathlib import Path

import numpy as np

MODEL_MAGIC = b"ENFMDL01"
FORMAT_VERSION = 1
_HEAD = struct.Struct("<8sII")


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.generic):
        return value.item()
    if hasattr(value, "to_dict"):
        return value.to_dict()
    return value


def save_container(path, header, sections):
    """Write ``sections``: ``{section: {name: ndarray}}`` plus a JSON-able header."""
    blobs, index, offset = [], [], 0
    for section in sorted(sections):
        for name in sorted(sections[section]):
            arr = np.ascontiguousarray(sections[section][name])
            arr = arr.astype(arr.dtype.newbyteorder("<"), copy=False)
            raw = arr.tobytes()
            index.append({"section": section, "name": name, "dtype": arr.dtype.str,
                          "shape": list(arr.shape), "offset": offset, "nbytes": len(raw)})
            blobs.append(raw)
            offset += len(raw)
    head = json.dumps({**_jsonable(header), "arrays": index}, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(_HEAD.pack(MODEL_MAGIC, FORMAT_VERSION, len(head)))
        fh.write(head)
        for raw in blobs:
            fh.write(raw)


def load_container(path):
    raw = Path(path).read_bytes()
    if len(raw) < _HEAD.size:
        raise OSError(f"{path}: truncated model file")
    magic, version, head_len = _HEAD.unpack_from(raw)
    if magic != MODEL_MAGIC:
        raise OSError(f"{path}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise OSError(f"{path}: unsupported model format version {version}")
    header = json.loads(raw[_HEAD.size:_HEAD.size + head_len])
    base = _HEAD.size + head_len
    sections = {}
    for item in header.pop("arrays"):
        arr = np.frombuffer(raw, dtype=np.dtype(item["dtype"]), count=int(np.prod(item["shape"])),
                            offset=base + item["offset"]).reshape(item["shape"]).copy()
        sections.setdefault(item["section"], {})[item["name"]] = arr
    return header, sections


_REGISTRY = {}


def register(cls):
    _REGISTRY[cls.family] = cls
    return cls


def save_model(model, path):
    meta, sections = model._export()
    header = {"family": model.family, "params": model.get_params(deep=False), "meta": meta}
    save_container(path, header, sections)


def load_model(path):
    header, sections = load_container(path)
    try:
        cls = _REGISTRY[header["family"]]
    except KeyError:
        raise OSError(f"{path}: unknown model family {header.get('family')!r}") from None
    model = cls(**header["params"])
    model._import(header["meta"], sections)
    return model
