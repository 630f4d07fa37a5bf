"""Shuffle phase: sub-IV layouts, block schedules and their signal-level execution.

Three schemes are supported:

* ``cm`` - coded multicasting. One node per block sends the XOR of mu*K
  sub-IVs, each addressed to a different receiver that already knows the rest.
* ``zf`` - one-shot cooperative zero-forcing. Two disjoint clusters transmit
  precoded private streams to each other at the same time (full duplex).
* ``sp`` - superposition. A ZF exchange at power P^alpha plus one XOR
  message at power P - P^alpha; every listener decodes the XOR first and
  cancels it before decoding its private stream.

Byte transport is genie-aided: a stream delivers an exact copy of its payload
whenever the block lasts long enough for its achieved rate to carry the
sub-IV's (rational) bit length.
"""

from __future__ import annotations

import itertools
import json
import math
from collections import defaultdict
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from . import bits
from .channel import (
    ChannelState,
    SingularChannel,
    draw_channel,
    rate,
    sinr_common_then_sic,
    sinr_private,
    zf_precoder,
)
from .model import NodeSubset, SystemConfig, enumerate_subsets
from .placement import (
    FunctionAssignment,
    IvStore,
    Placement,
    RequiredSet,
    all_ivs,
    assign_files,
    assign_functions,
    generate_files,
    map_phase,
    required_ivs,
)

__all__ = [
    "Block",
    "BlockOutcome",
    "BlockPlan",
    "CommonMessage",
    "DeliveryReport",
    "Kind",
    "PartSpec",
    "PlanError",
    "PrivateExchange",
    "Scheme",
    "ShuffleResult",
    "SubIvId",
    "SubIvLayout",
    "System",
    "check_plan",
    "plan_coverage",
    "prepare_system",
    "reassemble",
    "run_shuffle",
    "schedule",
    "schedule_cm",
    "schedule_sp",
    "schedule_zf",
    "simulate_block",
    "split_ivs",
    "verify_delivery",
]


class Scheme(str, Enum):
    CM = "cm"
    ZF = "zf"
    SP = "sp"


class Kind(str, Enum):
    COMMON = "common"
    PRIVATE = "private"


class PlanError(AssertionError):
    """A plan breaks a structural rule (coverage or who-knows-what)."""


@dataclass(frozen=True, order=True)
class SubIvId:
    q: int
    n: int
    part: int
    kind: Kind
    bits: Fraction

    @property
    def iv(self) -> Tuple[int, int]:
        return (self.q, self.n)

    def __str__(self):
        return f"a({self.q},{self.n})#{self.part}"


@dataclass(frozen=True)
class PartSpec:
    part: int
    kind: Kind
    bits: Fraction  # target length used for duration accounting
    start: int  # integer bit range [start, start + length) inside the IV
    length: int


@dataclass(frozen=True)
class SubIvLayout:
    scheme: Scheme
    F: int
    parts: Tuple[PartSpec, ...]

    @property
    def common(self) -> Tuple[PartSpec, ...]:
        return tuple(p for p in self.parts if p.kind is Kind.COMMON)

    @property
    def private(self) -> Tuple[PartSpec, ...]:
        return tuple(p for p in self.parts if p.kind is Kind.PRIVATE)

    def spec(self, part: int) -> PartSpec:
        for p in self.parts:
            if p.part == part:
                return p
        raise KeyError(part)

    def sub_iv(self, q: int, n: int, part: int) -> SubIvId:
        p = self.spec(part)
        return SubIvId(q, n, part, p.kind, p.bits)

    def ids_for(self, q: int, n: int) -> List[SubIvId]:
        return [SubIvId(q, n, p.part, p.kind, p.bits) for p in self.parts]

    def describe(self) -> str:
        """Human summary such as ``2x0.1F + 4x0.2F``."""
        groups: List[Tuple[int, Fraction]] = []
        for p in self.parts:
            frac = p.bits / self.F
            if groups and groups[-1][1] == frac:
                groups[-1] = (groups[-1][0] + 1, frac)
            else:
                groups.append((1, frac))
        return " + ".join(f"{count}x{_fmt_frac(frac)}F" for count, frac in groups) or "(empty)"


def _fmt_frac(frac: Fraction) -> str:
    as_float = float(frac)
    return f"{as_float:g}" if Fraction(repr(as_float)) == frac else str(frac)


def _sp_lengths(cfg: SystemConfig) -> Tuple[Fraction, Fraction]:
    alpha = Fraction(cfg.alpha)
    streams = min(cfg.K, 2 * cfg.r)
    denom = (1 - alpha) * cfg.r + alpha * streams
    return cfg.F * (1 - alpha) / denom, cfg.F * alpha / denom


def split_ivs(scheme: Scheme, cfg: SystemConfig) -> SubIvLayout:
    """How each IV is cut into sub-IVs under ``scheme``.

    Zero-length parts (the common parts at alpha = 1, the private parts at
    alpha = 0) are left out of the layout altogether.
    """
    scheme = Scheme(scheme)
    r, streams = cfg.r, min(cfg.K, 2 * cfg.r)
    if scheme is Scheme.CM:
        targets = [(i, Kind.COMMON, Fraction(cfg.F, r)) for i in range(1, r + 1)]
    elif scheme is Scheme.ZF:
        targets = [(i, Kind.PRIVATE, Fraction(cfg.F, streams)) for i in range(1, streams + 1)]
    else:
        f_c, f_s = _sp_lengths(cfg)
        targets = []
        if f_c > 0:
            targets += [(i, Kind.COMMON, f_c) for i in range(1, r + 1)]
        if f_s > 0:
            targets += [(r + i, Kind.PRIVATE, f_s) for i in range(1, streams + 1)]
    parts = []
    cum = Fraction(0)
    for part, kind, target in targets:
        start = math.ceil(cum)
        cum += target
        parts.append(PartSpec(part, kind, target, start, math.ceil(cum) - start))
    assert cum == cfg.F, "sub-IV lengths must add up to F"
    return SubIvLayout(scheme, cfg.F, tuple(parts))


@dataclass(frozen=True)
class CommonMessage:
    """XOR multicast; ``components[i]`` is addressed to ``receivers[i]``."""

    tx: int
    receivers: NodeSubset
    components: Tuple[SubIvId, ...]


@dataclass(frozen=True)
class PrivateExchange:
    """Two clusters precoding one stream to each node of the other cluster."""

    cluster_a: NodeSubset
    cluster_b: NodeSubset
    streams: Tuple[Tuple[int, SubIvId], ...]

    @property
    def stream_map(self) -> Dict[int, SubIvId]:
        return dict(self.streams)

    def senders(self, receiver: int) -> NodeSubset:
        return self.cluster_b if receiver in self.cluster_a else self.cluster_a


@dataclass(frozen=True)
class Block:
    scheme: Scheme
    common: Optional[CommonMessage] = None
    private: Optional[PrivateExchange] = None

    def active_nodes(self) -> NodeSubset:
        nodes = set()
        if self.common is not None:
            nodes.add(self.common.tx)
        if self.private is not None:
            nodes.update(self.private.cluster_a)
            nodes.update(self.private.cluster_b)
        return tuple(sorted(nodes))

    def deliveries(self) -> List[Tuple[int, SubIvId]]:
        out = []
        if self.common is not None:
            out += list(zip(self.common.receivers, self.common.components))
        if self.private is not None:
            out += list(self.private.streams)
        return out


@dataclass(frozen=True)
class BlockPlan:
    scheme: Scheme
    layout: SubIvLayout
    blocks: Tuple[Block, ...]
    metadata: Dict[str, object] = field(default_factory=dict)

    def __len__(self):
        return len(self.blocks)

    def to_text(self) -> str:
        """One JSON record per line: a header, then one record per block."""
        header = {
            "scheme": self.scheme.value,
            "F": self.layout.F,
            "layout": [[p.part, p.kind.value, str(p.bits), p.start, p.length] for p in self.layout.parts],
            "blocks": len(self.blocks),
            "metadata": self.metadata,
        }
        lines = [json.dumps(header, sort_keys=True)]
        for i, block in enumerate(self.blocks, 1):
            rec: Dict[str, object] = {"block": i, "scheme": block.scheme.value}
            if block.common is not None:
                c = block.common
                rec["common"] = {
                    "tx": c.tx,
                    "rx": list(c.receivers),
                    "xor": [[s.q, s.n, s.part] for s in c.components],
                }
            if block.private is not None:
                x = block.private
                rec["private"] = {
                    "a": list(x.cluster_a),
                    "b": list(x.cluster_b),
                    "streams": [[rx, s.q, s.n, s.part] for rx, s in x.streams],
                }
            lines.append(json.dumps(rec, sort_keys=True))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "BlockPlan":
        records = [json.loads(line) for line in text.splitlines() if line.strip()]
        header, body = records[0], records[1:]
        scheme = Scheme(header["scheme"])
        layout = SubIvLayout(
            scheme,
            header["F"],
            tuple(PartSpec(p, Kind(k), Fraction(b), s, n) for p, k, b, s, n in header["layout"]),
        )
        blocks = []
        for rec in body:
            common = private = None
            if "common" in rec:
                c = rec["common"]
                common = CommonMessage(
                    c["tx"], tuple(c["rx"]), tuple(layout.sub_iv(q, n, p) for q, n, p in c["xor"])
                )
            if "private" in rec:
                x = rec["private"]
                private = PrivateExchange(
                    tuple(x["a"]),
                    tuple(x["b"]),
                    tuple((rx, layout.sub_iv(q, n, p)) for rx, q, n, p in x["streams"]),
                )
            blocks.append(Block(Scheme(rec["scheme"]), common, private))
        if len(blocks) != header["blocks"]:
            raise ValueError("block count does not match header")
        return cls(scheme, layout, tuple(blocks), header.get("metadata", {}))


# -- scheduling ---------------------------------------------------------------


def _xor_messages(
    cfg: SystemConfig,
    placement: Placement,
    assignment: FunctionAssignment,
    layout: SubIvLayout,
) -> List[CommonMessage]:
    r = cfg.r
    parts = [p.part for p in layout.common]
    if r >= cfg.K or not parts:
        return []
    messages = []
    for group in enumerate_subsets(cfg.K, r + 1):
        # IVs wanted by k that every other member of the group can compute
        wanted = {}
        for k in group:
            others = tuple(x for x in group if x != k)
            wanted[k] = [
                (q, n) for n in placement.batch_of[others] for q in assignment.functions_of[k]
            ]
        for t in group:
            receivers = tuple(k for k in group if k != t)
            queues = []
            for k in receivers:
                others = tuple(x for x in group if x != k)
                part = parts[others.index(t)]
                queues.append([layout.sub_iv(q, n, part) for q, n in wanted[k]])
            for components in zip(*queues):
                messages.append(CommonMessage(t, receivers, tuple(components)))
    return messages


def _cluster_pairs(K: int, m: int) -> List[Tuple[NodeSubset, NodeSubset]]:
    """Unordered pairs of disjoint m-subsets, in lexicographic order."""
    pairs = []
    for a_side in itertools.combinations(range(1, K + 1), m):
        rest = [x for x in range(1, K + 1) if x not in a_side]
        for b_side in itertools.combinations(rest, m):
            if a_side < b_side:
                pairs.append((a_side, b_side))
    return pairs


def _block_counts(cfg: SystemConfig, pairs, demand: Dict[Tuple[int, NodeSubset], int]):
    """Fewest ZF blocks able to carry every private demand.

    Integer program over the number of blocks ``x`` per cluster pair and the
    flow ``f[b, T, A]`` of receiver b's items held by batch T and sent by
    cluster ``A`` (a subset of T).  A receiver gets one stream per block.
    Returns ``(x, f)`` as dicts.
    """
    from scipy.optimize import Bounds, LinearConstraint, milp
    from scipy.sparse import lil_matrix

    m = cfg.cluster_size
    flows = [
        (b, holders, a_side)
        for (b, holders) in sorted(demand)
        for a_side in itertools.combinations(holders, m)
    ]
    nx_, nf = len(pairs), len(flows)
    rows_eq = {key: i for i, key in enumerate(sorted(demand))}
    slot_keys = sorted({(b, a_side) for b, _, a_side in flows})
    rows_cap = {key: i for i, key in enumerate(slot_keys)}

    eq = lil_matrix((len(rows_eq), nx_ + nf))
    cap = lil_matrix((len(rows_cap), nx_ + nf))
    for j, (b, holders, a_side) in enumerate(flows):
        eq[rows_eq[(b, holders)], nx_ + j] = 1
        cap[rows_cap[(b, a_side)], nx_ + j] = 1
    for i, (a_side, b_side) in enumerate(pairs):
        for tx, rx in ((a_side, b_side), (b_side, a_side)):
            for b in rx:
                row = rows_cap.get((b, tx))
                if row is not None:
                    cap[row, i] = -1
    rhs = np.array([demand[key] for key in sorted(demand)], dtype=float)
    cost = np.concatenate([np.ones(nx_), np.zeros(nf)])
    res = milp(
        cost,
        constraints=[
            LinearConstraint(eq.tocsr(), rhs, rhs),
            LinearConstraint(cap.tocsr(), -np.inf, 0),
        ],
        integrality=np.ones(nx_ + nf),
        bounds=Bounds(0, np.inf),
        options={"time_limit": 60.0},
    )
    if res.x is None:
        raise PlanError(f"no ZF block assignment found: {res.message}")
    sol = np.rint(res.x).astype(int)
    x = {pairs[i]: int(sol[i]) for i in range(nx_) if sol[i]}
    f = {flows[j]: int(sol[nx_ + j]) for j in range(nf) if sol[nx_ + j]}
    return x, f


def _zf_exchanges(
    cfg: SystemConfig,
    placement: Placement,
    assignment: FunctionAssignment,
    layout: SubIvLayout,
) -> List[PrivateExchange]:
    m = cfg.cluster_size
    parts = [p.part for p in layout.private]
    if cfg.r >= cfg.K or not parts or m < 1:
        return []
    items: Dict[Tuple[int, NodeSubset], List[SubIvId]] = {}
    for b in range(1, cfg.K + 1):
        for holders in enumerate_subsets(cfg.K, cfg.r):
            if b not in holders:
                items[(b, holders)] = [
                    layout.sub_iv(q, n, part)
                    for n in placement.batch_of[holders]
                    for q in assignment.functions_of[b]
                    for part in parts
                ]
    pairs = _cluster_pairs(cfg.K, m)
    counts, flow = _block_counts(cfg, pairs, {key: len(v) for key, v in items.items()})

    # items each receiver expects from each sending cluster, in batch order
    by_sender: Dict[Tuple[int, NodeSubset], List[SubIvId]] = defaultdict(list)
    cursor = {key: 0 for key in items}
    for (b, holders, a_side), amount in sorted(flow.items()):
        start = cursor[(b, holders)]
        by_sender[(b, a_side)].extend(items[(b, holders)][start : start + amount])
        cursor[(b, holders)] = start + amount

    exchanges = []
    for a_side, b_side in pairs:
        for _ in range(counts.get((a_side, b_side), 0)):
            streams = []
            for tx, rx in ((a_side, b_side), (b_side, a_side)):
                for b in rx:
                    queue = by_sender.get((b, tx))
                    if queue:
                        streams.append((b, queue.pop(0)))
            exchanges.append(PrivateExchange(a_side, b_side, tuple(sorted(streams))))
    return exchanges


def check_plan(plan: BlockPlan, placement: Placement, assignment: FunctionAssignment) -> None:
    """Assert every XOR is cancellable and every private stream is cluster-known."""
    owner = {q: k for k, fs in assignment.functions_of.items() for q in fs}
    for i, block in enumerate(plan.blocks, 1):
        c = block.common
        if c is not None:
            for rx, sid in zip(c.receivers, c.components):
                if owner[sid.q] != rx:
                    raise PlanError(f"block {i}: {sid} is not wanted by node {rx}")
                if c.tx not in placement.holders(sid.n):
                    raise PlanError(f"block {i}: tx {c.tx} cannot compute {sid}")
                for other in c.receivers:
                    if other != rx and other not in placement.holders(sid.n):
                        raise PlanError(f"block {i}: node {other} cannot cancel {sid}")
        x = block.private
        if x is not None:
            if set(x.cluster_a) & set(x.cluster_b):
                raise PlanError(f"block {i}: clusters overlap")
            if len(x.cluster_a) != len(x.cluster_b):
                raise PlanError(f"block {i}: cluster sizes differ")
            for rx, sid in x.streams:
                if owner[sid.q] != rx:
                    raise PlanError(f"block {i}: {sid} is not wanted by node {rx}")
                for sender in x.senders(rx):
                    if sender not in placement.holders(sid.n):
                        raise PlanError(f"block {i}: cluster member {sender} cannot compute {sid}")


def plan_coverage(plan: BlockPlan, required: RequiredSet) -> Tuple[list, list, list]:
    """Return ``(missing, duplicates, unexpected)`` lists of ``(node, SubIvId)``."""
    wanted = {
        (k, sid) for k, needs in required.needs.items() for q, n in needs for sid in plan.layout.ids_for(q, n)
    }
    seen = set()
    duplicates, unexpected = [], []
    for block in plan.blocks:
        for item in block.deliveries():
            if item in seen:
                duplicates.append(item)
            elif item not in wanted:
                unexpected.append(item)
            seen.add(item)
    return sorted(wanted - seen), duplicates, unexpected


def _finish(plan: BlockPlan, placement, assignment, required) -> BlockPlan:
    check_plan(plan, placement, assignment)
    if required is not None:
        missing, dup, extra = plan_coverage(plan, required)
        if missing or dup or extra:
            raise PlanError(
                f"{plan.scheme.value} plan coverage broken: {len(missing)} missing, "
                f"{len(dup)} duplicate, {len(extra)} unexpected"
            )
    return plan


def schedule_cm(cfg, placement, assignment, required=None) -> BlockPlan:
    layout = split_ivs(Scheme.CM, cfg)
    blocks = tuple(Block(Scheme.CM, common=m) for m in _xor_messages(cfg, placement, assignment, layout))
    return _finish(BlockPlan(Scheme.CM, layout, blocks), placement, assignment, required)


def schedule_zf(cfg, placement, assignment, required=None) -> BlockPlan:
    layout = split_ivs(Scheme.ZF, cfg)
    blocks = tuple(Block(Scheme.ZF, private=x) for x in _zf_exchanges(cfg, placement, assignment, layout))
    meta = {"odd_k": bool(cfg.K % 2 and 2 * cfg.r > cfg.K)}
    return _finish(BlockPlan(Scheme.ZF, layout, blocks, meta), placement, assignment, required)


def _pair_messages(messages: List[CommonMessage], exchanges: List[PrivateExchange]) -> Dict[int, int]:
    """Map exchange index -> message index, each common tx active in its exchange."""
    pending: Dict[int, List[int]] = defaultdict(list)
    for i, msg in enumerate(messages):
        pending[msg.tx].append(i)
    pairing: Dict[int, int] = {}
    last = 0
    for j, x in enumerate(exchanges):
        active = sorted(set(x.cluster_a) | set(x.cluster_b))
        order = [k for k in active if k > last] + [k for k in active if k <= last]
        for k in order:
            if pending[k]:
                pairing[j] = pending[k].pop(0)
                last = k
                break
    if len(pairing) == min(len(messages), len(exchanges)):
        return pairing
    # greedy left work on the table; fall back to a maximum bipartite matching
    import networkx as nx

    graph = nx.Graph()
    left = [("x", j) for j in range(len(exchanges))]
    graph.add_nodes_from(left, bipartite=0)
    graph.add_nodes_from((("m", i) for i in range(len(messages))), bipartite=1)
    for j, x in enumerate(exchanges):
        active = set(x.cluster_a) | set(x.cluster_b)
        for i, msg in enumerate(messages):
            if msg.tx in active:
                graph.add_edge(("x", j), ("m", i))
    matching = nx.bipartite.hopcroft_karp_matching(graph, top_nodes=left)
    best = {j: matching[("x", j)][1] for j in range(len(exchanges)) if ("x", j) in matching}
    return best if len(best) > len(pairing) else pairing


def schedule_sp(cfg, placement, assignment, required=None) -> BlockPlan:
    layout = split_ivs(Scheme.SP, cfg)
    messages = _xor_messages(cfg, placement, assignment, layout)
    exchanges = _zf_exchanges(cfg, placement, assignment, layout)
    pairing = _pair_messages(messages, exchanges)
    blocks = [Block(Scheme.SP, messages[pairing[j]] if j in pairing else None, x) for j, x in enumerate(exchanges)]
    used = set(pairing.values())
    extra = [Block(Scheme.SP, common=m) for i, m in enumerate(messages) if i not in used]
    meta = {
        "odd_k": bool(cfg.K % 2 and 2 * cfg.r > cfg.K),
        "extra_common_blocks": len(extra) if exchanges else 0,
        "private_only_blocks": len(exchanges) - len(pairing),
    }
    plan = BlockPlan(Scheme.SP, layout, tuple(blocks + extra), meta)
    return _finish(plan, placement, assignment, required)


_SCHEDULERS = {Scheme.CM: schedule_cm, Scheme.ZF: schedule_zf, Scheme.SP: schedule_sp}


def schedule(scheme, cfg, placement, assignment, required=None) -> BlockPlan:
    return _SCHEDULERS[Scheme(scheme)](cfg, placement, assignment, required)


# -- execution ----------------------------------------------------------------


def _part_bytes(store: Mapping, sid: SubIvId, layout: SubIvLayout, node: int) -> bytes:
    iv = store.get(sid.iv)
    if iv is None:
        raise PlanError(f"node {node} does not hold IV a({sid.q},{sid.n})")
    spec = layout.spec(sid.part)
    return bits.slice_bits(iv, layout.F, spec.start, spec.length)


@dataclass
class BlockOutcome:
    delivered: Dict[int, List[Tuple[SubIvId, bytes]]]
    rates: Dict[str, float]
    duration: float
    feasible: bool
    tx_power: Dict[int, float]


def simulate_block(
    block: Block,
    layout: SubIvLayout,
    channel: Optional[ChannelState],
    stores: Mapping[int, IvStore],
    cfg: SystemConfig,
    *,
    oracle: bool = False,
    base: float = 2.0,
    noise: float = 1.0,
) -> BlockOutcome:
    """Encode, transmit and decode one block.

    In oracle mode no channel is used: payloads are delivered exactly and the
    rates are the high-SNR values log P, (1 - alpha) log P and alpha log P.
    """
    P, alpha = cfg.P, float(cfg.alpha)
    c, x = block.common, block.private
    superposed = c is not None and x is not None and len(x.streams) > 0
    common_power = P - P**alpha if superposed else P
    private_power = P**alpha if superposed else P

    delivered: Dict[int, List[Tuple[SubIvId, bytes]]] = defaultdict(list)
    if c is not None:
        payload = bits.xor_bytes(*(_part_bytes(stores[c.tx], s, layout, c.tx) for s in c.components))
        for i, (rx, sid) in enumerate(zip(c.receivers, c.components)):
            known = [_part_bytes(stores[rx], s, layout, rx) for j, s in enumerate(c.components) if j != i]
            own = bits.xor_bytes(payload, *known)[: bits.nbytes(layout.spec(sid.part).length)]
            delivered[rx].append((sid, own))
    if x is not None:
        for rx, sid in x.streams:
            copies = {_part_bytes(stores[s], sid, layout, s) for s in x.senders(rx)}
            if len(copies) != 1:
                raise PlanError(f"cluster members disagree on {sid}")
            delivered[rx].append((sid, copies.pop()))

    tx_power: Dict[int, float] = defaultdict(float)
    log_p = math.log(P) / math.log(base)
    common_rate: Optional[float] = None
    private_rates: Dict[int, float] = {}
    if oracle:
        if c is not None:
            common_rate = (1 - alpha) * log_p if superposed else log_p
            tx_power[c.tx] += common_power
        if x is not None:
            for rx, _ in x.streams:
                private_rates[rx] = alpha * log_p
            for node in x.cluster_a + x.cluster_b:
                tx_power[node] += private_power
    else:
        precoders = []
        if x is not None:
            wanted = x.stream_map
            for senders, listeners in ((x.cluster_a, x.cluster_b), (x.cluster_b, x.cluster_a)):
                active = [rx in wanted for rx in listeners]
                if not any(active):
                    continue
                pc = zf_precoder(
                    channel.sub(listeners, senders, estimated=True), private_power, senders, listeners, active
                )
                precoders.append(pc)
                for node, pw in zip(senders, pc.tx_power()):
                    tx_power[node] += pw
        if c is not None:
            tx_power[c.tx] += common_power
            decoders = set(c.receivers) | {rx for rx, _ in (x.streams if x is not None else ())}
            sinr_c, sinr_p = sinr_common_then_sic(channel, c.tx, common_power, sorted(decoders), precoders, noise)
            common_rate = min(float(rate(v, base)) for v in sinr_c.values())
        else:
            sinr_p = {}
            for pc in precoders:
                sinr_p.update(sinr_private(channel, pc, noise))
        private_rates = {rx: float(rate(v, base)) for rx, v in sinr_p.items()}

    rates: Dict[str, float] = {}
    needs: List[Tuple[float, float]] = []
    if c is not None:
        rates[f"common:{c.tx}"] = common_rate
        needs.append((float(max(s.bits for s in c.components)), common_rate))
    if x is not None:
        for rx, sid in x.streams:
            rates[f"private:{rx}"] = private_rates[rx]
            needs.append((float(sid.bits), private_rates[rx]))
    duration = 0.0
    feasible = True
    for nbits, r in needs:
        if nbits <= 0:
            continue
        if not r > 0:
            feasible = False
            duration = math.inf
            continue
        duration = max(duration, nbits / r)
    return BlockOutcome(
        # the oracle genie delivers even when the ideal rate is zero (ZF at alpha = 0)
        delivered=dict(delivered) if feasible or oracle else {},
        rates=rates,
        duration=duration,
        feasible=feasible,
        tx_power=dict(tx_power),
    )


@dataclass
class DeliveryReport:
    missing: List[Tuple[int, SubIvId]] = field(default_factory=list)
    duplicates: List[Tuple[int, SubIvId]] = field(default_factory=list)
    corrupted: List[Tuple[int, SubIvId]] = field(default_factory=list)
    unexpected: List[Tuple[int, SubIvId]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not (self.missing or self.duplicates or self.corrupted or self.unexpected)

    def lines(self) -> List[str]:
        out = []
        for label in ("missing", "duplicates", "corrupted", "unexpected"):
            for node, sid in getattr(self, label):
                out.append(f"{label}: node {node} {sid}")
        return out


@dataclass
class ShuffleResult:
    total_duration: float
    per_block: List[BlockOutcome]
    delivered: Dict[int, List[Tuple[SubIvId, bytes]]]
    success: bool = False
    report: Optional[DeliveryReport] = None
    redraws: int = 0


def verify_delivery(
    result: ShuffleResult,
    required: RequiredSet,
    layout: SubIvLayout,
    reference: Mapping[Tuple[int, int], bytes],
) -> DeliveryReport:
    """Check coverage and byte equality against the sender-side IVs."""
    report = DeliveryReport()
    for node, needs in sorted(required.needs.items()):
        wanted = {sid for q, n in needs for sid in layout.ids_for(q, n)}
        seen = set()
        for sid, payload in result.delivered.get(node, []):
            if sid not in wanted:
                report.unexpected.append((node, sid))
                continue
            if sid in seen:
                report.duplicates.append((node, sid))
                continue
            seen.add(sid)
            if payload != _part_bytes(reference, sid, layout, 0):
                report.corrupted.append((node, sid))
        report.missing.extend((node, sid) for sid in sorted(wanted - seen))
    return report


def reassemble(parts: Sequence[Tuple[SubIvId, bytes]], layout: SubIvLayout) -> Dict[Tuple[int, int], bytes]:
    """Rebuild every IV whose sub-IVs are all present; incomplete IVs are dropped."""
    by_iv: Dict[Tuple[int, int], Dict[int, bytes]] = defaultdict(dict)
    for sid, payload in parts:
        by_iv[sid.iv].setdefault(sid.part, payload)
    out = {}
    ordered = sorted(layout.parts, key=lambda p: p.start)
    for key, got in by_iv.items():
        if all(p.part in got for p in ordered):
            data, total = bits.concat_bits((got[p.part], p.length) for p in ordered)
            assert total == layout.F
            out[key] = data
    return out


def run_shuffle(
    plan: BlockPlan,
    cfg: SystemConfig,
    stores: Mapping[int, IvStore],
    rng: Optional[np.random.Generator] = None,
    required: Optional[RequiredSet] = None,
    reference: Optional[Mapping[Tuple[int, int], bytes]] = None,
    *,
    oracle: bool = False,
    base: float = 2.0,
    max_redraws: int = 100,
) -> ShuffleResult:
    """Execute ``plan`` block by block, one independent channel draw per block."""
    if not oracle and rng is None:
        raise ValueError("a random generator is required outside oracle mode")
    outcomes = []
    delivered: Dict[int, List[Tuple[SubIvId, bytes]]] = defaultdict(list)
    redraws = 0
    for block in plan.blocks:
        for _ in range(max_redraws):
            channel = None if oracle else draw_channel(cfg, rng)
            try:
                outcome = simulate_block(block, plan.layout, channel, stores, cfg, oracle=oracle, base=base)
                break
            except SingularChannel:
                redraws += 1
        else:
            raise SingularChannel(f"no invertible channel after {max_redraws} draws")
        outcomes.append(outcome)
        for node, items in outcome.delivered.items():
            delivered[node].extend(items)
    result = ShuffleResult(
        total_duration=math.fsum(o.duration for o in outcomes),
        per_block=outcomes,
        delivered=dict(delivered),
        redraws=redraws,
    )
    if required is not None:
        if reference is None:
            reference = {}
            for store in stores.values():
                reference.update(store)
        result.report = verify_delivery(result, required, plan.layout, reference)
        result.success = result.report.ok and (oracle or all(o.feasible for o in outcomes))
    return result


@dataclass
class System:
    """Everything the Shuffle phase needs, built once per config and scheme."""

    cfg: SystemConfig
    files: List[bytes]
    placement: Placement
    assignment: FunctionAssignment
    stores: Dict[int, IvStore]
    required: RequiredSet
    reference: Dict[Tuple[int, int], bytes]
    plan: BlockPlan

    def shuffle(self, rng=None, *, oracle=False, base=2.0, cfg: Optional[SystemConfig] = None) -> ShuffleResult:
        """Run the plan; ``cfg`` may override physical-layer values such as P."""
        return run_shuffle(
            self.plan, cfg or self.cfg, self.stores, rng, self.required, self.reference, oracle=oracle, base=base
        )


def prepare_system(cfg: SystemConfig, scheme, plan: Optional[BlockPlan] = None) -> System:
    files = generate_files(cfg)
    placement = assign_files(cfg)
    assignment = assign_functions(cfg)
    required = required_ivs(cfg, placement, assignment)
    if plan is None:
        plan = schedule(scheme, cfg, placement, assignment, required)
    return System(
        cfg=cfg,
        files=files,
        placement=placement,
        assignment=assignment,
        stores=map_phase(cfg, placement, files),
        required=required,
        reference=all_ivs(cfg, files),
        plan=plan,
    )
