"""Model checkpoints: a zip container with a JSON header and one .npy member per array.

Member timestamps are pinned and members are stored uncompressed in a fixed order, so
save -> load -> save reproduces the same bytes.
"""

from __future__ import annotations

import io
import json
import zipfile

import numpy as np

from ..errors import SchemaError
from .model import ModelConfig, PnaModel

FORMAT = "relgraph-pna-checkpoint"
VERSION = 1
_EPOCH = (1980, 1, 1, 0, 0, 0)


def _member(zf: zipfile.ZipFile, name: str, data: bytes):
    info = zipfile.ZipInfo(name, date_time=_EPOCH)
    info.compress_type = zipfile.ZIP_STORED
    info.external_attr = 0o644 << 16
    zf.writestr(info, data)


def checkpoint_bytes(model: PnaModel) -> bytes:
    state = model.state()
    header = {
        "format": FORMAT,
        "version": VERSION,
        "config": model.config.to_dict(),
        "target_shift": model.target_shift,
        "target_scale": model.target_scale,
        "arrays": list(state),
    }
    buf = io.BytesIO()
    with zipfile.ZipFile(buf, "w") as zf:
        _member(zf, "header.json", json.dumps(header, indent=2, sort_keys=True).encode())
        for name, arr in state.items():
            npy = io.BytesIO()
            np.lib.format.write_array(npy, np.ascontiguousarray(arr, dtype="<f8"), allow_pickle=False)
            _member(zf, f"{name}.npy", npy.getvalue())
    return buf.getvalue()


def save_checkpoint(model: PnaModel, path) -> None:
    with open(path, "wb") as fh:
        fh.write(checkpoint_bytes(model))


def load_checkpoint(path) -> PnaModel:
    try:
        zf = zipfile.ZipFile(path)
    except zipfile.BadZipFile:
        raise SchemaError(str(path), "not a checkpoint container") from None
    with zf:
        try:
            header = json.loads(zf.read("header.json"))
        except KeyError:
            raise SchemaError(f"{path}:header.json", "missing") from None
        if header.get("format") != FORMAT:
            raise SchemaError(f"{path}:header.json.format", "unrecognized format")
        if header.get("version") != VERSION:
            raise SchemaError(f"{path}:header.json.version", f"unsupported version {header.get('version')}")
        model = PnaModel(ModelConfig(**header["config"]))
        state = {}
        for name in header["arrays"]:
            with zf.open(f"{name}.npy") as fh:
                state[name] = np.lib.format.read_array(io.BytesIO(fh.read()), allow_pickle=False)
    model.load_state(state)
    model.target_shift = float(header["target_shift"])
    model.target_scale = float(header["target_scale"])
    return model
