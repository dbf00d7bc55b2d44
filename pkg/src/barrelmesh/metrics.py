"""Delivery, load-balance, and power summaries over simulation results.

Power uses a three-state duty-cycle model: a node's mean current is the
time-weighted blend of its transmit, listen, and sleep currents. Network
mean current is the same blend applied to the network-mean state fractions,
which equals the mean of the per-node currents; both forms are computed and
kept consistent.
"""
from __future__ import annotations

import csv
import statistics
from dataclasses import dataclass
from typing import Optional

from .sim_engine import SimResult

STATE_SUM_TOL = 1e-6


@dataclass(frozen=True)
class PowerProfile:
    """Radio current draw per state, in mA."""

    i_tx_ma: float = 10.0
    i_listen_ma: float = 6.0
    i_sleep_ma: float = 0.003


def network_pdr(result: SimResult) -> Optional[float]:
    """Unique packets at the sink over packets offered, in percent.

    None when nothing was offered (a sink-only or zero-length scenario has
    no meaningful delivery ratio).
    """
    sent = sum(result.app_sent)
    if sent == 0:
        return None
    return 100.0 * sum(result.delivered_by_source) / sent


def per_node_pdr(result: SimResult) -> list[Optional[float]]:
    """Delivery percentage per node; None for nodes that offered nothing
    (including the sink)."""
    out: list[Optional[float]] = []
    for sent, delivered in zip(result.app_sent, result.delivered_by_source):
        out.append(100.0 * delivered / sent if sent else None)
    return out


def relay_load_stats(result: SimResult) -> dict:
    """Forwarding-load balance over the relay set.

    loads are forwarded-frame counts per relay, in relay-id order. cv is
    the coefficient of variation (population stdev over mean), defined as
    0.0 when every relay carried the same load (for a zero mean that is the
    natural continuation: perfectly even). No relays: every field is None.
    """
    loads = [result.relayed_count[r] for r in result.relays]
    if not loads:
        return {"loads": [], "mean": None, "stdev": None, "cv": None}
    mean = statistics.fmean(loads)
    stdev = statistics.pstdev(loads)
    if max(loads) == min(loads):
        cv = 0.0
    else:
        cv = stdev / mean
    return {"loads": loads, "mean": mean, "stdev": stdev, "cv": cv}


def node_current_ma(
    t_tx: float, t_listen: float, t_sleep: float, profile: PowerProfile
) -> float:
    """Mean current of one node from its state-time fractions."""
    total = t_tx + t_listen + t_sleep
    if abs(total - 1.0) > STATE_SUM_TOL:
        raise ValueError(f"state fractions sum to {total}, expected 1")
    return t_tx * profile.i_tx_ma + t_listen * profile.i_listen_ma + t_sleep * profile.i_sleep_ma


def per_node_current_ma(result: SimResult, profile: PowerProfile) -> list[float]:
    return [
        node_current_ma(tx, li, sl, profile)
        for tx, li, sl in zip(result.t_tx_frac, result.t_listen_frac, result.t_sleep_frac)
    ]


def network_current_ma(result: SimResult, profile: PowerProfile) -> float:
    """Blend of the network-mean state fractions; equals the mean of the
    per-node currents because the blend is linear."""
    n = len(result.t_tx_frac)
    mean_tx = sum(result.t_tx_frac) / n
    mean_listen = sum(result.t_listen_frac) / n
    mean_sleep = sum(result.t_sleep_frac) / n
    return node_current_ma(mean_tx, mean_listen, mean_sleep, profile)


def mean_relay_current_ma(result: SimResult, profile: PowerProfile) -> Optional[float]:
    """Mean current over relay nodes only; None when there are none."""
    if not result.relays:
        return None
    currents = per_node_current_ma(result, profile)
    return statistics.fmean(currents[r] for r in result.relays)


def summarize(result: SimResult, profile: Optional[PowerProfile] = None) -> dict:
    """Flat summary of one run, ready for a CSV row."""
    profile = profile or PowerProfile()
    load = relay_load_stats(result)
    return {
        "seed": result.seed,
        "sim_time_s": result.sim_time_us / 1e6,
        "n_relays": len(result.relays),
        "app_sent": sum(result.app_sent),
        "delivered": sum(result.delivered_by_source),
        "pdr_pct": network_pdr(result),
        "relay_load_mean": load["mean"],
        "relay_load_cv": load["cv"],
        "net_transmissions": sum(result.net_transmissions),
        "mean_current_ma": network_current_ma(result, profile),
        "mean_relay_current_ma": mean_relay_current_ma(result, profile),
        "max_hops": result.max_hops,
    }


_NODE_FIELDS = [
    "node",
    "is_relay",
    "app_sent",
    "delivered",
    "pdr_pct",
    "net_transmissions",
    "relayed",
    "t_tx",
    "t_listen",
    "t_sleep",
    "current_ma",
]


def write_node_csv(result: SimResult, profile: PowerProfile, path) -> None:
    """Per-node breakdown of one run."""
    pdrs = per_node_pdr(result)
    currents = per_node_current_ma(result, profile)
    relay_set = set(result.relays)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_NODE_FIELDS)
        for i in range(len(result.app_sent)):
            writer.writerow(
                [
                    i,
                    int(i in relay_set),
                    result.app_sent[i],
                    result.delivered_by_source[i],
                    "" if pdrs[i] is None else repr(pdrs[i]),
                    result.net_transmissions[i],
                    result.relayed_count[i],
                    repr(result.t_tx_frac[i]),
                    repr(result.t_listen_frac[i]),
                    repr(result.t_sleep_frac[i]),
                    repr(currents[i]),
                ]
            )
