"""Monte Carlo simulation of the N-hop FCFS relay chain with per-link
erasures, fed by a Poisson source or by the access-procedure departure
process, plus exact sawtooth integration of the age of information.

Each node is a single exponential server with an infinite buffer.  The
per-packet times come from the FCFS waiting-time recursion evaluated as a
vectorized running-minimum scan, which reproduces the event-driven sample
path exactly: a packet starts service when both it and the server are
ready, and a dropped packet still consumes service at every node up to
and including the link that erased it.
"""
from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import ra_sim
from .scenario import BackhaulConfig, RaConfig, backhauling_preset


@dataclass(frozen=True)
class ArrivalStream:
    """Packets entering the chain: queue arrival times plus the generation
    times that the age metric is anchored to (they differ when the access
    procedure sits in front)."""

    arrival_times: np.ndarray
    gen_times: np.ndarray

    def __post_init__(self):
        if len(self.arrival_times) != len(self.gen_times):
            raise ValueError("arrival and generation vectors must align")
        if np.any(np.diff(self.arrival_times) < 0):
            raise ValueError("arrival times must be sorted")

    def __len__(self):
        return len(self.arrival_times)


def poisson_stream(rate: float, n_packets: int, rng) -> ArrivalStream:
    gaps = rng.exponential(1.0 / rate, size=n_packets)
    times = np.cumsum(gaps)
    return ArrivalStream(arrival_times=times, gen_times=times.copy())


@dataclass
class NodeTrace:
    """Per-node per-packet times, aligned with ``packet_index``."""

    packet_index: np.ndarray
    arrivals: np.ndarray
    starts: np.ndarray
    departures: np.ndarray


@dataclass
class NetworkTrace:
    config: BackhaulConfig
    gen_times: np.ndarray        # all offered packets
    nodes: list                  # NodeTrace per hop
    drop_node: np.ndarray        # 1-based dropping node; 0 = delivered
    delivered_index: np.ndarray
    delivery_times: np.ndarray
    offered_arrivals: np.ndarray | None = None

    @property
    def n_offered(self) -> int:
        return len(self.gen_times)

    @property
    def n_delivered(self) -> int:
        return len(self.delivered_index)

    @property
    def delivered_fraction(self) -> float:
        return self.n_delivered / self.n_offered if self.n_offered else float("nan")


@dataclass(frozen=True)
class AoiSummary:
    time_average_aoi: float
    mean_system_time: float
    delivered_fraction: float
    peak_aoi_mean: float
    n_delivered: int


def _fcfs_waits(arrivals: np.ndarray, services: np.ndarray) -> np.ndarray:
    """Waiting times of an FCFS single server via the Lindley recursion
    W_i = max(0, W_{i-1} + S_{i-1} - Y_i), computed as a prefix scan."""
    n = len(arrivals)
    x = np.empty(n)
    x[0] = 0.0
    x[1:] = services[:-1] - np.diff(arrivals)
    v = np.cumsum(x)
    return v - np.minimum.accumulate(v)


def _fcfs_finite_buffer(arrivals, services, capacity):
    """Scalar FCFS pass with at most ``capacity`` packets in the node.

    Returns (accepted mask, starts, departures) for the accepted packets.
    Arrivals that find the node full are lost before consuming service.
    """
    from collections import deque
    in_node = deque()
    accepted = np.zeros(len(arrivals), dtype=bool)
    starts, departures = [], []
    busy_until = 0.0
    for i, (a, s) in enumerate(zip(arrivals, services)):
        while in_node and in_node[0] <= a:
            in_node.popleft()
        if len(in_node) >= capacity:
            continue
        start = max(a, busy_until)
        dep = start + s
        in_node.append(dep)
        busy_until = dep
        accepted[i] = True
        starts.append(start)
        departures.append(dep)
    return accepted, np.array(starts), np.array(departures)


def run(stream: ArrivalStream, cfg: BackhaulConfig, seed) -> NetworkTrace:
    """Push a packet stream through the chain; returns the full trace."""
    rng = np.random.default_rng(seed)
    n = len(stream)
    drop_node = np.zeros(n, dtype=np.int64)
    nodes = []
    if n == 0:
        return NetworkTrace(cfg, stream.gen_times.copy(), nodes, drop_node,
                            np.empty(0, dtype=np.int64), np.empty(0),
                            stream.arrival_times.copy())
    alive = np.arange(n)
    arrivals = stream.arrival_times.copy()
    for node in range(cfg.hops):
        k = len(arrivals)
        services = rng.exponential(1.0 / cfg.service_rates[node], size=k)
        if k == 0:
            nodes.append(NodeTrace(alive, arrivals, arrivals, arrivals))
            continue
        if cfg.buffer_size is None:
            waits = _fcfs_waits(arrivals, services)
            starts = arrivals + waits
            departures = starts + services
        else:
            accepted, starts, departures = _fcfs_finite_buffer(
                arrivals, services, cfg.buffer_size)
            drop_node[alive[~accepted]] = node + 1
            alive = alive[accepted]
            arrivals = arrivals[accepted]
            k = len(arrivals)
        nodes.append(NodeTrace(packet_index=alive, arrivals=arrivals,
                               starts=starts, departures=departures))
        eps = cfg.link_erasures[node]
        if eps > 0.0 and k:
            survive = rng.random(k) >= eps
            drop_node[alive[~survive]] = node + 1
            alive = alive[survive]
            arrivals = departures[survive]
        else:
            arrivals = departures
    return NetworkTrace(cfg, stream.gen_times.copy(), nodes, drop_node,
                        delivered_index=alive, delivery_times=arrivals,
                        offered_arrivals=stream.arrival_times.copy())


def with_propagation_offset(trace: NetworkTrace, per_hop: float) -> NetworkTrace:
    """Reporting-level variant with a constant per-hop propagation delay.

    Every delivery shifts by hops x offset; queueing inside the chain is
    untouched (the inter-node links carry no queueing of their own), so
    the delay and age summaries both shift by exactly that constant.
    """
    return NetworkTrace(trace.config, trace.gen_times, trace.nodes,
                        trace.drop_node, trace.delivered_index,
                        trace.delivery_times + trace.config.hops * per_hop,
                        trace.offered_arrivals)


def mean_system_time(trace: NetworkTrace) -> float:
    """Mean generation-to-delivery time over delivered packets only."""
    if trace.n_delivered == 0:
        raise ValueError("no delivered packet; mean system time undefined")
    return float(np.mean(trace.delivery_times
                         - trace.gen_times[trace.delivered_index]))


def _fresh_deliveries(gen: np.ndarray, deliv: np.ndarray):
    """Drop stale deliveries: an update older than the freshest one already
    delivered never resets the age (cannot happen under per-node FCFS, but
    the integrator stays correct for reordered inputs)."""
    keep = np.ones(len(gen), dtype=bool)
    if len(gen) > 1:
        keep[1:] = gen[1:] > np.maximum.accumulate(gen)[:-1]
    return gen[keep], deliv[keep]


def _sawtooth_stats(anchor_t: np.ndarray, anchor_age: np.ndarray,
                    start: float, end: float):
    """Integrate a sawtooth described by reset anchors over [start, end].

    The age equals ``anchor_age[j] + (t - anchor_t[j])`` between anchor j
    and anchor j+1.  ``start`` must be >= anchor_t[0].  Returns
    (area, peak_sum, peak_count); peaks are the pre-reset ages of anchors
    strictly inside the window.
    """
    j0 = int(np.searchsorted(anchor_t, start, side="right")) - 1
    jend = int(np.searchsorted(anchor_t, end, side="right"))
    t = anchor_t[j0:jend].copy()
    a = anchor_age[j0:jend].copy()
    a[0] += start - t[0]          # age already accrued at the window start
    t[0] = start
    seg = np.empty(len(t))
    seg[:-1] = np.diff(t)
    seg[-1] = end - t[-1]
    area = float(np.sum(a * seg + 0.5 * seg ** 2))
    peaks = a[:-1] + seg[:-1]     # age just before each in-window reset
    return area, float(np.sum(peaks)), int(len(peaks))


def average_aoi(trace: NetworkTrace, horizon: float | None = None,
                origin: str = "first_delivery",
                warmup_fraction: float = 0.0) -> AoiSummary:
    """Exact time-average of the sawtooth age at the destination.

    origin="first_delivery" starts the clock at the first delivery, whose
    post-reset age is that update's system time; origin="zero" observes
    the system from t=0 with zero initial age.  ``warmup_fraction`` drops
    the leading share of the observation window first (steady-state
    summaries).  ``horizon`` extends the window past the last delivery;
    by default it ends there.
    """
    if trace.n_delivered < 2:
        raise ValueError("need at least two deliveries for an age average")
    if origin not in ("first_delivery", "zero"):
        raise ValueError(f"unknown origin {origin!r}")
    gen, deliv = _fresh_deliveries(trace.gen_times[trace.delivered_index],
                                   trace.delivery_times)
    end = float(deliv[-1]) if horizon is None else float(horizon)
    if origin == "zero":
        anchor_t = np.concatenate(([0.0], deliv))
        anchor_age = np.concatenate(([0.0], deliv - gen))
        t0 = 0.0
    else:
        anchor_t = deliv
        anchor_age = deliv - gen
        t0 = float(deliv[0])
    start = t0 + warmup_fraction * (end - t0)
    if origin == "first_delivery" and warmup_fraction > 0.0:
        # restart cleanly at the first delivery past the warm-up
        i0 = int(np.searchsorted(deliv, start))
        if i0 >= len(deliv) - 1:
            raise ValueError("warm-up discards all deliveries")
        anchor_t, anchor_age = deliv[i0:], (deliv - gen)[i0:]
        start = float(deliv[i0])
    duration = end - start
    if duration <= 0:
        raise ValueError("empty observation window")
    area, peak_sum, peak_n = _sawtooth_stats(anchor_t, anchor_age, start, end)
    return AoiSummary(
        time_average_aoi=area / duration,
        mean_system_time=mean_system_time(trace),
        delivered_fraction=trace.delivered_fraction,
        peak_aoi_mean=peak_sum / peak_n if peak_n else float("nan"),
        n_delivered=trace.n_delivered,
    )


def export_packets_csv(trace: NetworkTrace, path):
    """Per-packet rows in the same columnar family as the access traces."""
    delivered_at = {int(i): t for i, t in zip(trace.delivered_index,
                                              trace.delivery_times)}
    offered = (trace.offered_arrivals if trace.offered_arrivals is not None
               else trace.gen_times)
    with open(path, "w", newline="") as fh:
        fh.write("# leoiot-trace v1 backhaul packets\n")
        w = csv.writer(fh)
        w.writerow(["packet", "gen_time", "queue_arrival", "delivery_time",
                    "drop_node"])
        for i, g in enumerate(trace.gen_times):
            t = delivered_at.get(i)
            w.writerow([i, f"{g:.6f}", f"{offered[i]:.6f}",
                        "" if t is None else f"{t:.6f}",
                        int(trace.drop_node[i])])


# ---------------------------------------------------------------------------
# Load sweep with optional random-access feeding
# ---------------------------------------------------------------------------

MODES = ("no-ra", "ra-a1", "ra-a10")
_MODE_ID = {m: i for i, m in enumerate(MODES)}


@dataclass(frozen=True)
class RaFeedSettings:
    """How the access procedure feeds the relay chain.

    The access channel runs on a millisecond clock while the chain uses
    abstract service units, so the departure process of the simulated
    procedure is rescaled in time until its mean rate equals the target
    load rho (the x-axis of the load sweeps is the arrival rate at the
    first relay).  Under that rescaling the handshake latency of an update
    shrinks or grows together with the unit; a congested access channel
    (many collisions, many retries) therefore dominates the end-to-end
    delay at low loads, while a single-attempt lightly loaded channel is
    invisible next to the queueing delays.

    ``a1_rate_per_s`` keeps the one-attempt feed far below the channel
    capacity so its ms-scale handshake stays negligible on the unit
    timescale; ``a10_rate_per_s`` drives the ten-attempt feed into heavy
    contention.  Both are plain offered rates for ``ra_sim.run``.
    """

    config: RaConfig = None
    a1_rate_per_s: float = 0.25
    a10_rate_per_s: float = 275.0

    def __post_init__(self):
        if self.config is None:
            object.__setattr__(self, "config",
                               backhauling_preset().ground_ra)


@dataclass(frozen=True)
class SweepRow:
    mode: str
    rho: float
    hops: int
    link_erasure: float
    replication: int
    n_offered: int
    n_delivered: int
    delivered_fraction: float
    mean_system_time: float
    mean_aoi: float
    peak_aoi_mean: float
    ra_success_prob: float | None   # None for the no-ra mode


def _feed_seed(master_seed: int, mode: str, rho: float, replication: int):
    return np.random.SeedSequence(
        (master_seed, 0xFEED, _MODE_ID[mode], int(round(rho * 1e6)), replication))


def _net_seed(master_seed: int, mode: str, rho: float, hops: int,
              link_erasure: float, replication: int):
    return np.random.SeedSequence(
        (master_seed, 0x9E7, _MODE_ID[mode], int(round(rho * 1e6)), hops,
         int(round(link_erasure * 1e6)), replication))


def ra_departure_stream(mode: str, rho: float, n_packets: int, seed,
                        feed: RaFeedSettings):
    """Departure process of the access stage, rescaled to arrival rate rho.

    Returns (stream, ra_success_prob).  Times are in chain units; the
    generation times keep the (rescaled) handshake latency in front of
    the queueing network.
    """
    attempts = 1 if mode == "ra-a1" else 10
    rate = feed.a1_rate_per_s if mode == "ra-a1" else feed.a10_rate_per_s
    cfg = replace(feed.config, max_attempts=attempts)
    # expected delivered rate per ms, used only to size the horizon
    lam_rao = rate / 1000.0 * cfg.rao_period
    per_attempt = math.exp(-lam_rao / cfg.preambles) * (1.0 - cfg.erasure_prob)
    guess = rate / 1000.0 * (per_attempt if attempts == 1 else 0.85)
    horizon = n_packets / guess * 1.3
    trace = None
    for _ in range(4):
        trace = ra_sim.run(cfg, rate, horizon, np.random.default_rng(seed))
        if trace.success_count >= n_packets:
            break
        horizon *= 1.7
    if trace.success_count < n_packets:
        raise RuntimeError(
            f"RA feed produced {trace.success_count} < {n_packets} departures")
    dep_ms = trace.departures[:n_packets]
    successes = sorted((r for r in trace.records if r.outcome == "success"),
                       key=lambda r: r.departure_time)[:n_packets]
    gen_ms = np.array([r.gen_time for r in successes])
    rate_ms = n_packets / float(dep_ms[-1])
    scale = rate_ms / rho            # chain units per millisecond
    return (ArrivalStream(arrival_times=dep_ms * scale, gen_times=gen_ms * scale),
            trace.success_probability)


def run_point(mode: str, rho: float, hops: int, link_erasure: float,
              replication: int, master_seed: int, n_packets: int,
              feed: RaFeedSettings | None = None,
              warmup_fraction: float = 0.05) -> SweepRow:
    """One sweep cell: build the arrival stream, run the chain, summarize."""
    feed = feed or RaFeedSettings()
    ra_p = None
    if mode == "no-ra":
        rng = np.random.default_rng(_feed_seed(master_seed, mode, rho,
                                               replication))
        stream = poisson_stream(rho, n_packets, rng)
    elif mode in ("ra-a1", "ra-a10"):
        stream, ra_p = ra_departure_stream(
            mode, rho, n_packets,
            _feed_seed(master_seed, mode, rho, replication), feed)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    cfg = BackhaulConfig.uniform(hops, 1.0, link_erasure)
    trace = run(stream, cfg, _net_seed(master_seed, mode, rho, hops,
                                       link_erasure, replication))
    summary = average_aoi(trace, warmup_fraction=warmup_fraction)
    return SweepRow(
        mode=mode, rho=rho, hops=hops, link_erasure=link_erasure,
        replication=replication, n_offered=trace.n_offered,
        n_delivered=trace.n_delivered,
        delivered_fraction=summary.delivered_fraction,
        mean_system_time=summary.mean_system_time,
        mean_aoi=summary.time_average_aoi,
        peak_aoi_mean=summary.peak_aoi_mean,
        ra_success_prob=ra_p)


def _run_point_args(args):
    return run_point(*args)


def sweep(rhos, hops_list, erasures, modes, replications: int,
          master_seed: int, n_packets: int = 100_000,
          feed: RaFeedSettings | None = None, workers: int = 1,
          warmup_fraction: float = 0.05):
    """Cross product of the grid, deterministically seeded per cell.

    The result order and content depend only on the grid and the master
    seed, never on the worker count.
    """
    tasks = [(m, rho, n, e, rep, master_seed, n_packets, feed, warmup_fraction)
             for m in modes for rho in rhos for n in hops_list
             for e in erasures for rep in range(replications)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_run_point_args, tasks, chunksize=1))
    else:
        rows = [run_point(*t) for t in tasks]
    rows.sort(key=lambda r: (r.mode, r.rho, r.hops, r.link_erasure,
                             r.replication))
    return rows
