"""On-disk formats shared across pipeline stages.

Dense feature matrices use a flat little-endian float32 blob plus a JSON
sidecar carrying the shape, the row-id listing and its hash, the
producing config, and the seed.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np
import scipy.sparse as sp


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def config_hash(obj) -> str:
    return hashlib.sha256(canonical_json(obj).encode("utf-8")).hexdigest()[:16]


def ids_hash(ids: list[str]) -> str:
    return hashlib.sha256("\n".join(ids).encode("utf-8")).hexdigest()[:16]


def file_hash(path: str | Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()[:16]


def save_embeddings(
    prefix: str | Path,
    ids: list[str],
    matrix: np.ndarray,
    meta: dict | None = None,
) -> None:
    prefix = Path(prefix)
    arr = np.ascontiguousarray(matrix, dtype="<f4")
    prefix.with_suffix(".bin").write_bytes(arr.tobytes())
    sidecar = {
        "shape": list(arr.shape),
        "dtype": "<f4",
        "ids": list(ids),
        "ids_sha256": ids_hash(list(ids)),
        **(meta or {}),
    }
    prefix.with_suffix(".json").write_text(
        json.dumps(sidecar, sort_keys=True), "utf-8"
    )


def load_embeddings(prefix: str | Path) -> tuple[list[str], np.ndarray, dict]:
    prefix = Path(prefix)
    sidecar = json.loads(prefix.with_suffix(".json").read_text("utf-8"))
    shape = tuple(sidecar["shape"])
    blob = np.frombuffer(prefix.with_suffix(".bin").read_bytes(), dtype="<f4")
    matrix = blob.reshape(shape).astype(np.float64)
    ids = list(sidecar["ids"])
    if ids_hash(ids) != sidecar["ids_sha256"]:
        raise ValueError(f"id listing hash mismatch in {prefix}")
    return ids, matrix, sidecar


def save_sparse(path: str | Path, matrix: sp.csr_matrix) -> None:
    sp.save_npz(str(path), matrix.tocsr())


def load_sparse(path: str | Path) -> sp.csr_matrix:
    return sp.load_npz(str(path)).tocsr()


def write_json(path: str | Path, doc: dict) -> None:
    Path(path).write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n", "utf-8")


def read_json(path: str | Path) -> dict:
    return json.loads(Path(path).read_text("utf-8"))
