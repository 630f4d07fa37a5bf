"""Physical layer: Rayleigh block fading, outdated CSI, ZF precoding and SINRs.

Channel matrices are indexed ``h[k-1, i-1]`` for the gain from transmitter
``k`` to receiver ``i``. The diagonal is unused (full-duplex nodes never hear
themselves) and is kept at zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, Optional, Sequence, Tuple

import numpy as np

from .model import NodeSubset, SystemConfig

__all__ = [
    "COND_LIMIT",
    "ChannelState",
    "Precoder",
    "SingularChannel",
    "draw_channel",
    "rate",
    "sinr_common_then_sic",
    "sinr_private",
    "zf_precoder",
]

COND_LIMIT = 1e12


class SingularChannel(ArithmeticError):
    """The estimated cluster channel is too ill-conditioned to invert."""


@dataclass(frozen=True)
class ChannelState:
    h: np.ndarray
    h_hat: np.ndarray
    alpha: float
    P: float

    @property
    def K(self) -> int:
        return self.h.shape[0]

    def gain(self, tx: int, rx: int) -> complex:
        return self.h[tx - 1, rx - 1]

    def sub(self, receivers: Sequence[int], transmitters: Sequence[int], estimated: bool = False) -> np.ndarray:
        """Receivers x transmitters block of the true (or estimated) channel."""
        mat = self.h_hat if estimated else self.h
        tx = np.asarray(transmitters) - 1
        rx = np.asarray(receivers) - 1
        return mat[np.ix_(tx, rx)].T


def _cn(rng: np.random.Generator, shape) -> np.ndarray:
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2.0)


def draw_channel(cfg: SystemConfig, rng: np.random.Generator, perfect_csi: bool = False) -> ChannelState:
    """Draw h ~ CN(0, 1) and an estimate with error variance exactly P^-alpha."""
    K = cfg.K
    h = _cn(rng, (K, K))
    err = _cn(rng, (K, K)) * math.sqrt(cfg.P ** -float(cfg.alpha))
    np.fill_diagonal(h, 0.0)
    np.fill_diagonal(err, 0.0)
    h_hat = h.copy() if perfect_csi else h + err
    return ChannelState(h=h, h_hat=h_hat, alpha=float(cfg.alpha), P=cfg.P)


@dataclass(frozen=True)
class Precoder:
    """Cooperative ZF precoder of one cluster; ``W`` is transmitters x streams."""

    transmitters: NodeSubset
    receivers: NodeSubset
    W: np.ndarray
    power_per_stream: float
    active: np.ndarray = field(default=None)

    def tx_power(self) -> np.ndarray:
        """Radiated power of each transmitter."""
        return (np.abs(self.W) ** 2).sum(axis=1) * self.power_per_stream


def zf_precoder(
    h_hat_sub: np.ndarray,
    node_power: float,
    transmitters: NodeSubset = (),
    receivers: NodeSubset = (),
    active: Optional[Iterable[bool]] = None,
) -> Precoder:
    """Invert the estimated receivers x transmitters block.

    The inverse is scaled by one scalar so the busiest transmitter radiates
    exactly ``node_power``; streams marked inactive get zero weight.
    """
    h_hat_sub = np.atleast_2d(np.asarray(h_hat_sub, dtype=complex))
    m, n = h_hat_sub.shape
    if m != n or m < 1:
        raise ValueError(f"ZF needs a square block, got {m}x{n}")
    cond = np.linalg.cond(h_hat_sub)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise SingularChannel(f"condition number {cond:.3g} exceeds {COND_LIMIT:g}")
    W = np.linalg.inv(h_hat_sub)
    mask = np.ones(m, dtype=bool) if active is None else np.asarray(list(active), dtype=bool)
    W[:, ~mask] = 0.0
    peak = (np.abs(W) ** 2).sum(axis=1).max()
    if peak > 0:
        W = W / math.sqrt(peak)
    return Precoder(
        transmitters=tuple(transmitters),
        receivers=tuple(receivers),
        W=W,
        power_per_stream=float(node_power),
        active=mask,
    )


def _received(channel: ChannelState, precoder: Precoder, rx: int) -> np.ndarray:
    """Complex gain of every stream of ``precoder`` as seen at node ``rx``."""
    row = channel.h[np.asarray(precoder.transmitters) - 1, rx - 1]
    return row @ precoder.W


def sinr_private(channel: ChannelState, precoder: Precoder, noise: float = 1.0) -> Dict[int, float]:
    """SINR of each active stream at its receiver, measured on the true channel.

    Signals from the receiver's own cluster are known and subtracted, so only
    the opposite cluster's cross-stream leakage counts as interference.
    """
    p = precoder.power_per_stream
    out = {}
    for j, rx in enumerate(precoder.receivers):
        if not precoder.active[j]:
            continue
        g = np.abs(_received(channel, precoder, rx)) ** 2 * p
        g[~precoder.active] = 0.0
        desired = g[j]
        out[rx] = desired / (noise + g.sum() - desired)
    return out


def sinr_common_then_sic(
    channel: ChannelState,
    common_tx: int,
    common_power: float,
    decoders: Iterable[int],
    precoders: Sequence[Precoder],
    noise: float = 1.0,
) -> Tuple[Dict[int, float], Dict[int, float]]:
    """Common-message SINR at each decoder, then private SINRs after SIC.

    While decoding the common message a node treats every private stream it
    cannot rebuild as noise; streams sent by its own cluster are known.
    """
    common = {}
    for rx in decoders:
        if rx == common_tx:
            continue
        interference = 0.0
        for pc in precoders:
            if rx in pc.transmitters:
                continue
            g = np.abs(_received(channel, pc, rx)) ** 2 * pc.power_per_stream
            interference += g[pc.active].sum()
        desired = abs(channel.gain(common_tx, rx)) ** 2 * common_power
        common[rx] = desired / (noise + interference)
    private = {}
    for pc in precoders:
        private.update(sinr_private(channel, pc, noise))
    return common, private


def rate(sinr, base: float = 2.0):
    """Achievable rate log_base(1 + sinr) per channel use."""
    return np.log1p(sinr) / math.log(base)
