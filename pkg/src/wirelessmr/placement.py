"""Map phase: synthetic files, batch placement, function assignment and IVs.

Also holds the Reduce phase and the centralized oracle it is checked against.
Map and reduce functions are keyed BLAKE2b digests, so any node that holds a
file computes bit-identical intermediate values (IVs) for it.
"""

from __future__ import annotations

import hashlib
from fractions import Fraction
from dataclasses import dataclass
from typing import Dict, List, Mapping, Sequence, Tuple

import numpy as np

from . import bits
from .model import NodeSubset, SystemConfig, enumerate_subsets

__all__ = [
    "FunctionAssignment",
    "MissingIVError",
    "Placement",
    "RequiredSet",
    "assign_files",
    "assign_functions",
    "centralized_reduce",
    "generate_files",
    "map_iv",
    "map_phase",
    "reduce_phase",
    "required_ivs",
]

IvKey = Tuple[int, int]  # (function q, file n)
IvStore = Dict[IvKey, bytes]


class MissingIVError(LookupError):
    def __init__(self, node: int, q: int, n: int):
        self.node, self.q, self.n = node, q, n
        super().__init__(f"node {node} is missing IV a_({q},{n})")


@dataclass(frozen=True)
class Placement:
    files_of: Dict[int, Tuple[int, ...]]
    batch_of: Dict[NodeSubset, Tuple[int, ...]]
    subset_of_file: Dict[int, NodeSubset]

    def holders(self, n: int) -> NodeSubset:
        """Nodes that store file ``n``."""
        return self.subset_of_file[n]


@dataclass(frozen=True)
class FunctionAssignment:
    functions_of: Dict[int, Tuple[int, ...]]

    def owner(self, q: int) -> int:
        for node, funcs in self.functions_of.items():
            if q in funcs:
                return node
        raise KeyError(q)


@dataclass(frozen=True)
class RequiredSet:
    needs: Dict[int, frozenset]

    def __getitem__(self, node: int) -> frozenset:
        return self.needs[node]

    def total(self) -> int:
        return sum(len(v) for v in self.needs.values())


def generate_files(cfg: SystemConfig) -> List[bytes]:
    """N files of exactly L bits each, drawn from a generator seeded by ``cfg.seed``."""
    rng = np.random.default_rng([cfg.seed, 0xF11E])
    size = bits.nbytes(cfg.L)
    pad = 8 * size - cfg.L
    files = []
    for _ in range(cfg.N):
        raw = bytearray(rng.integers(0, 256, size=size, dtype=np.uint8).tobytes())
        if pad:
            raw[-1] &= (0xFF << pad) & 0xFF
        files.append(bytes(raw))
    return files


def assign_files(cfg: SystemConfig) -> Placement:
    """Split files into C(K, mu K) batches of eta; node k stores batch S iff k in S."""
    batch_of: Dict[NodeSubset, Tuple[int, ...]] = {}
    subset_of_file: Dict[int, NodeSubset] = {}
    n = 1
    for subset in enumerate_subsets(cfg.K, cfg.r):
        batch = tuple(range(n, n + cfg.eta))
        batch_of[subset] = batch
        for f in batch:
            subset_of_file[f] = subset
        n += cfg.eta
    files_of = {
        k: tuple(f for f in range(1, cfg.N + 1) if k in subset_of_file[f])
        for k in range(1, cfg.K + 1)
    }
    return Placement(files_of=files_of, batch_of=batch_of, subset_of_file=subset_of_file)


def assign_functions(cfg: SystemConfig) -> FunctionAssignment:
    per = cfg.Q // cfg.K
    return FunctionAssignment(
        {k: tuple(range((k - 1) * per + 1, k * per + 1)) for k in range(1, cfg.K + 1)}
    )


def _digest(key: bytes, parts: Sequence[bytes], nbits: int) -> bytes:
    out = b""
    counter = 0
    while len(out) < bits.nbytes(nbits):
        h = hashlib.blake2b(key=key, digest_size=64)
        h.update(counter.to_bytes(4, "big"))
        for p in parts:
            h.update(len(p).to_bytes(8, "big"))
            h.update(p)
        out += h.digest()
        counter += 1
    size = bits.nbytes(nbits)
    return bits.from_int(int.from_bytes(out[:size], "big") >> (8 * size - nbits), nbits)


def map_iv(q: int, n: int, file_bytes: bytes, F: int) -> bytes:
    """The map function g_{q,n}: an F-bit keyed digest of (q, n, w_n)."""
    return _digest(b"map", (q.to_bytes(8, "big"), n.to_bytes(8, "big"), file_bytes), F)


def map_phase(cfg: SystemConfig, placement: Placement, files: Sequence[bytes]) -> Dict[int, IvStore]:
    """Each node computes a_{q,n} for every function q and every stored file n."""
    stores: Dict[int, IvStore] = {}
    for k, mine in placement.files_of.items():
        stores[k] = {
            (q, n): map_iv(q, n, files[n - 1], cfg.F)
            for n in mine
            for q in range(1, cfg.Q + 1)
        }
    return stores


def all_ivs(cfg: SystemConfig, files: Sequence[bytes]) -> IvStore:
    """Every IV of the system, as a single node holding all files would compute them."""
    return {
        (q, n): map_iv(q, n, files[n - 1], cfg.F)
        for n in range(1, cfg.N + 1)
        for q in range(1, cfg.Q + 1)
    }


def required_ivs(cfg: SystemConfig, placement: Placement, assignment: FunctionAssignment) -> RequiredSet:
    needs = {}
    for k in range(1, cfg.K + 1):
        stored = set(placement.files_of[k])
        needs[k] = frozenset(
            (q, n)
            for q in assignment.functions_of[k]
            for n in range(1, cfg.N + 1)
            if n not in stored
        )
    return RequiredSet(needs)


def reduce_iv(q: int, ivs: Sequence[bytes], B: int) -> bytes:
    """The reduce function h_q: a B-bit digest of the N IVs in file order."""
    return _digest(b"reduce", (q.to_bytes(8, "big"), *ivs), B)


def reduce_phase(
    node: int,
    cfg: SystemConfig,
    assignment: FunctionAssignment,
    local: Mapping[IvKey, bytes],
    received: Mapping[IvKey, bytes],
) -> Dict[int, bytes]:
    outputs = {}
    for q in assignment.functions_of[node]:
        ivs = []
        for n in range(1, cfg.N + 1):
            iv = local.get((q, n))
            if iv is None:
                iv = received.get((q, n))
            if iv is None:
                raise MissingIVError(node, q, n)
            ivs.append(iv)
        outputs[q] = reduce_iv(q, ivs, cfg.B)
    return outputs


def centralized_reduce(cfg: SystemConfig, files: Sequence[bytes]) -> Dict[int, bytes]:
    ivs = all_ivs(cfg, files)
    return {
        q: reduce_iv(q, [ivs[(q, n)] for n in range(1, cfg.N + 1)], cfg.B)
        for q in range(1, cfg.Q + 1)
    }


def computation_load(cfg: SystemConfig, placement: Placement):
    """Total computed IVs over distinct IVs, as an exact Fraction."""
    total = sum(len(files) * cfg.Q for files in placement.files_of.values())
    return Fraction(total, cfg.N * cfg.Q)
