"""Model files: JSON with every float stored as ``float.hex`` so round trips are exact."""
from __future__ import annotations

import json

import numpy as np

from .exceptions import ModelFormatError, ModelVersionError

FORMAT = "ctflow-model"
VERSION = 1


def hexlist(a):
    a = np.asarray(a, dtype=float)
    if a.ndim == 0:
        return float(a).hex()
    return [hexlist(v) for v in a] if a.ndim > 1 else [float(v).hex() for v in a]


def unhex(obj, dtype=float):
    def conv(v):
        if isinstance(v, list):
            return [conv(u) for u in v]
        return float.fromhex(v)
    return np.array(conv(obj), dtype=dtype)


def dump(payload: dict, path) -> None:
    doc = {"format": FORMAT, "version": VERSION, **payload}
    text = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    with open(path, "w") as fh:
        fh.write(text)
        fh.write("\n")


def load(path) -> dict:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as e:
        raise ModelFormatError(f"{path}: not a valid model file ({e.msg} at char {e.pos})") from None
    except UnicodeDecodeError:
        raise ModelFormatError(f"{path}: not a text model file") from None
    if not isinstance(doc, dict) or doc.get("format") != FORMAT:
        raise ModelFormatError(f"{path}: missing '{FORMAT}' header")
    version = doc.get("version")
    if not isinstance(version, int):
        raise ModelFormatError(f"{path}: bad version field {version!r}")
    if version > VERSION:
        raise ModelVersionError(f"{path}: written by format version {version}, "
                                f"this build reads up to {VERSION}")
    return doc


def guarded(fn, doc, path="model"):
    """Run a decoder, turning missing keys and bad values into ModelFormatError."""
    try:
        return fn(doc)
    except (KeyError, TypeError, ValueError, IndexError) as e:
        raise ModelFormatError(f"{path}: malformed model content ({type(e).__name__}: {e})") from None
