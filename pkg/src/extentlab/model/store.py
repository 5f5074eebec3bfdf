"""Posterior draw store and its on-disk formats.

Binary layout (little endian)::

    magic     8 bytes   b"XLPOST\\0\\0"
    version   u32
    n_draws   u64
    n_scalar  u64
    meta_len  u64       length of the UTF-8 JSON metadata block
    meta      bytes     {"layout": [[name, shape], ...], "chain": [...], "manifest": {...}}
    draws     f64[n_draws, n_scalar], row-major
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .params import ModelParameters

MAGIC = b"XLPOST\0\0"
VERSION = 1
_HEAD = struct.Struct("<8sIQQQ")


class StoreFormatError(ValueError):
    pass


@dataclass(eq=False)
class PosteriorStore:
    draws: np.ndarray                       # (n_draws, n_scalar)
    layout: list
    chain: np.ndarray                       # chain id of each draw
    manifest: dict = field(default_factory=dict)

    def __post_init__(self):
        self.draws = np.atleast_2d(np.asarray(self.draws, dtype=np.float64))
        self.chain = np.asarray(self.chain, dtype=np.int64)
        self.layout = [(str(n), tuple(int(x) for x in s)) for n, s in self.layout]
        if self.chain.shape != (self.draws.shape[0],):
            raise ValueError("one chain id per draw required")

    @classmethod
    def from_params(cls, params: list[ModelParameters], chain, manifest=None):
        if not params:
            raise ValueError("empty store")
        layout = params[0].layout()
        return cls(np.stack([p.to_vector() for p in params]), layout, chain, dict(manifest or {}))

    def __len__(self) -> int:
        return self.draws.shape[0]

    def __getitem__(self, k: int) -> ModelParameters:
        return ModelParameters.from_vector(self.draws[k], self.layout)

    def __iter__(self):
        for k in range(len(self)):
            yield self[k]

    @property
    def n_chains(self) -> int:
        return int(np.unique(self.chain).size)

    def scalar_names(self) -> list[str]:
        names = []
        for name, shape in self.layout:
            if not shape:
                names.append(name)
            else:
                names.extend(f"{name}[{','.join(map(str, idx))}]" for idx in np.ndindex(*shape))
        return names

    def column(self, name: str) -> np.ndarray:
        """Draws of one scalar, by flat name such as ``alpha`` or ``z_rho[2]``."""
        return self.draws[:, self.scalar_names().index(name)]

    def by_chain(self, name: str) -> np.ndarray:
        """``(n_chains, draws_per_chain)`` array of one scalar."""
        col = self.column(name)
        ids = np.unique(self.chain)
        return np.stack([col[self.chain == c] for c in ids])

    def check(self) -> None:
        for p in self:
            p.check()

    def digest(self) -> str:
        return hashlib.sha256(self.to_bytes()).hexdigest()

    # -- persistence --------------------------------------------------------
    def to_bytes(self) -> bytes:
        meta = json.dumps({"layout": self.layout, "chain": self.chain.tolist(), "manifest": self.manifest},
                          sort_keys=True).encode("utf-8")
        head = _HEAD.pack(MAGIC, VERSION, self.draws.shape[0], self.draws.shape[1], len(meta))
        return head + meta + np.ascontiguousarray(self.draws, dtype="<f8").tobytes()

    def save(self, path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def from_bytes(cls, raw: bytes) -> "PosteriorStore":
        if len(raw) < _HEAD.size:
            raise StoreFormatError("truncated posterior store header")
        magic, version, n_draws, n_scalar, meta_len = _HEAD.unpack_from(raw)
        if magic != MAGIC:
            raise StoreFormatError("not a posterior store file")
        if version != VERSION:
            raise StoreFormatError(f"unsupported posterior store version {version}")
        start = _HEAD.size + meta_len
        meta = json.loads(raw[_HEAD.size:start].decode("utf-8"))
        body = raw[start:]
        if len(body) != 8 * n_draws * n_scalar:
            raise StoreFormatError("posterior store body has the wrong size")
        draws = np.frombuffer(body, dtype="<f8").reshape(n_draws, n_scalar).astype(np.float64)
        return cls(draws, meta["layout"], meta["chain"], meta["manifest"])

    @classmethod
    def load(cls, path) -> "PosteriorStore":
        return cls.from_bytes(Path(path).read_bytes())

    def to_csv(self, path=None) -> str:
        """One row per draw, one column per scalar (full float precision)."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["draw", "chain"] + self.scalar_names())
        for k in range(len(self)):
            w.writerow([k, int(self.chain[k])] + [repr(float(x)) for x in self.draws[k]])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    def thinned_indices(self, B: int, replace: bool = False) -> np.ndarray:
        """``B`` evenly spaced draw indices spanning the store.

        With ``replace`` a ``B`` larger than the store reuses draws, still
        evenly spaced, so each draw appears ``floor(B/n)`` or ``ceil(B/n)`` times.
        """
        if len(self) == 0:
            raise ValueError("empty posterior store")
        if B < 1:
            raise ValueError("B must be >= 1")
        if B > len(self) and not replace:
            raise ValueError(f"B={B} exceeds the {len(self)} available draws")
        return np.floor(np.arange(B) * (len(self) / B)).astype(np.int64)
