"""Named-array container files.

A container is an uncompressed zip archive with one ``.npy`` member per array
plus a ``__meta__.json`` member holding the format name, version, free-form
metadata and a SHA-256 digest of every array. Member timestamps are fixed so
identical contents produce byte-identical files.

Layout::

    __meta__.json        {"format": str, "version": int, "meta": {...},
                          "arrays": {name: {"shape": [...], "dtype": str, "sha256": str}}}
    <name>.npy           one per array, standard numpy .npy encoding
"""

import hashlib
import io
import json
import zipfile
from pathlib import Path

import numpy as np

_EPOCH = (1980, 1, 1, 0, 0, 0)
_META = "__meta__.json"


class ContainerError(Exception):
    """Raised for unreadable, corrupt or mismatched container files."""


def _digest(arr):
    return hashlib.sha256(np.ascontiguousarray(arr).tobytes()).hexdigest()


def save_arrays(path, arrays, *, fmt, version, meta=None):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    index = {}
    payload = {}
    for name in sorted(arrays):
        arr = np.asarray(arrays[name])
        buf = io.BytesIO()
        np.lib.format.write_array(buf, arr, allow_pickle=False)
        payload[name] = buf.getvalue()
        index[name] = {"shape": list(arr.shape), "dtype": arr.dtype.str, "sha256": _digest(arr)}
    header = {"format": fmt, "version": version, "meta": meta or {}, "arrays": index}
    tmp = path.with_name(path.name + ".tmp")
    with zipfile.ZipFile(tmp, "w", compression=zipfile.ZIP_STORED) as zf:
        info = zipfile.ZipInfo(_META, date_time=_EPOCH)
        zf.writestr(info, json.dumps(header, sort_keys=True, indent=1))
        for name, blob in payload.items():
            zf.writestr(zipfile.ZipInfo(name + ".npy", date_time=_EPOCH), blob)
    tmp.replace(path)


def load_arrays(path, *, fmt, version):
    """Load ``(arrays, meta)`` and verify format, version and digests."""
    path = Path(path)
    if not path.exists():
        raise ContainerError(f"{path}: no such file")
    try:
        with zipfile.ZipFile(path) as zf:
            header = json.loads(zf.read(_META))
            arrays = {}
            for name, info in header["arrays"].items():
                arr = np.lib.format.read_array(io.BytesIO(zf.read(name + ".npy")), allow_pickle=False)
                if _digest(arr) != info["sha256"] or list(arr.shape) != info["shape"]:
                    raise ContainerError(f"{path}: array {name!r} failed integrity check")
                arrays[name] = arr
    except ContainerError:
        raise
    except (zipfile.BadZipFile, KeyError, ValueError, OSError, EOFError) as exc:
        raise ContainerError(f"{path}: corrupt container ({exc})") from exc
    if header.get("format") != fmt:
        raise ContainerError(f"{path}: expected format {fmt!r}, found {header.get('format')!r}")
    if header.get("version") != version:
        raise ContainerError(f"{path}: unsupported {fmt} version {header.get('version')} (expected {version})")
    return arrays, header.get("meta", {})
