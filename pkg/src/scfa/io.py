"""On-disk bundles: JSON manifests, raw little-endian float32 arrays with
JSON sidecars, and raw interleaved float32 PCM input.

An array ``name`` is stored as ``name.f32`` (row-major, little-endian
float32; complex arrays get a trailing axis of length 2 holding real and
imaginary parts) next to ``name.json`` giving the logical shape and dtype.
"""

import hashlib
import json
import os

import numpy as np

from .errors import ConfigurationError, CoverageError

SCHEMA_VERSION = 1
_LE_F32 = np.dtype("<f4")


def canonical_json(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def config_hash(obj):
    return hashlib.sha256(canonical_json(obj).encode()).hexdigest()


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, sort_keys=True, indent=2)
        fh.write("\n")


def read_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise CoverageError(f"cannot read {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}: invalid JSON ({exc})") from None


def write_array(directory, name, arr):
    arr = np.asarray(arr)
    is_complex = np.iscomplexobj(arr)
    data = np.stack([arr.real, arr.imag], axis=-1) if is_complex else arr
    np.ascontiguousarray(data, dtype=_LE_F32).tofile(os.path.join(directory, name + ".f32"))
    write_json(os.path.join(directory, name + ".json"),
               {"shape": list(arr.shape), "dtype": "complex64" if is_complex else "float32",
                "byte_order": "little"})


def has_array(directory, name):
    return os.path.exists(os.path.join(directory, name + ".json"))


def read_array(directory, name):
    meta_path = os.path.join(directory, name + ".json")
    if not os.path.exists(meta_path):
        raise CoverageError(f"array {name!r} missing from {directory}")
    meta = read_json(meta_path)
    shape = tuple(meta["shape"])
    raw = np.fromfile(os.path.join(directory, name + ".f32"), dtype=_LE_F32)
    if meta["dtype"] == "complex64":
        expected = int(np.prod(shape, dtype=np.int64)) * 2
        if raw.size != expected:
            raise ConfigurationError(f"{name}: {raw.size} values, expected {expected}")
        raw = raw.reshape(shape + (2,)).astype(float)
        return raw[..., 0] + 1j * raw[..., 1]
    if meta["dtype"] != "float32":
        raise ConfigurationError(f"{name}: unsupported dtype {meta['dtype']!r}")
    if raw.size != int(np.prod(shape, dtype=np.int64)):
        raise ConfigurationError(f"{name}: size does not match shape {shape}")
    return raw.reshape(shape).astype(float)


def read_pcm(path, sidecar_path):
    """Interleaved float32 PCM plus a JSON sidecar with ``sampling_rate`` and
    ``channels``; returns (channels, samples) and the sampling rate."""
    meta = read_json(sidecar_path)
    try:
        rate = float(meta["sampling_rate"])
        channels = int(meta["channels"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigurationError(f"{sidecar_path}: needs sampling_rate and channels ({exc})") \
            from None
    order = "<" if meta.get("byte_order", "little") == "little" else ">"
    raw = np.fromfile(path, dtype=np.dtype(order + "f4"))
    if channels < 1 or raw.size % channels:
        raise ConfigurationError(f"{path}: {raw.size} samples not divisible by {channels} channels")
    return raw.reshape(-1, channels).T.astype(float), rate


def write_pcm(path, sidecar_path, signal, rate):
    signal = np.atleast_2d(np.asarray(signal))
    np.ascontiguousarray(signal.T, dtype=_LE_F32).tofile(path)
    write_json(sidecar_path, {"sampling_rate": rate, "channels": signal.shape[0],
                              "byte_order": "little"})
