"""Byte-reproducible ``.npz`` archives with an embedded JSON header.

``numpy.savez`` stamps zip members with the wall-clock time, so two saves of
identical arrays differ on disk. These helpers pin the member timestamps and
store a ``meta.json`` member carrying a format tag.
"""

from __future__ import annotations

import io
import json
import zipfile
from pathlib import Path

import numpy as np

from .errors import ValidationError

_EPOCH = (1980, 1, 1, 0, 0, 0)


def _member(name: str) -> zipfile.ZipInfo:
    info = zipfile.ZipInfo(name, date_time=_EPOCH)
    info.compress_type = zipfile.ZIP_DEFLATED
    info.external_attr = 0o644 << 16
    return info


def save_archive(path, fmt: str, meta: dict, arrays: dict[str, np.ndarray]) -> Path:
    path = Path(path)
    header = json.dumps({"format": fmt, **meta}, sort_keys=True, indent=1)
    with zipfile.ZipFile(path, "w") as zf:
        zf.writestr(_member("meta.json"), header)
        for name in sorted(arrays):
            buf = io.BytesIO()
            np.lib.format.write_array(buf, np.ascontiguousarray(arrays[name]), allow_pickle=False)
            zf.writestr(_member(f"{name}.npy"), buf.getvalue())
    return path


def load_archive(path, fmt: str) -> tuple[dict, dict[str, np.ndarray]]:
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"{path} does not exist")
    try:
        with zipfile.ZipFile(path) as zf:
            meta = json.loads(zf.read("meta.json"))
            arrays = {
                name[: -len(".npy")]: np.lib.format.read_array(io.BytesIO(zf.read(name)), allow_pickle=False)
                for name in zf.namelist()
                if name.endswith(".npy")
            }
    except (zipfile.BadZipFile, KeyError, json.JSONDecodeError) as exc:
        raise ValidationError(f"{path} is not a readable archive: {exc}") from exc
    found = meta.pop("format", None)
    if found != fmt:
        raise ValidationError(f"{path}: expected format {fmt!r}, found {found!r}")
    return meta, arrays
