"""Discrete-event mesh simulator: virtual cut-through switching at message
granularity under XY routing.

Each (router, input port) channel is a FIFO queue with a single server. A
message drawn with exponential length L occupies every channel on its path
for L/mu in turn: the whole body follows the header hop by hop, but a channel
serves one message at a time, so the zero-load latency of a path with d link
hops is (d+1) * L/mu including the source injection service. Buffers are
infinite; saturation is detected statistically from the latency trend, not
from overflow.

Runs are deterministic for a given (config, seed): the event queue breaks
time ties by insertion order and all randomness flows from one seeded
generator.
"""

from __future__ import annotations

import csv
import math
import random
from bisect import bisect_left
from collections import deque
from dataclasses import dataclass
from heapq import heappop, heappush
from typing import IO, Sequence

import numpy as np

from .errors import InvalidConfigError, UnstableError
from .mesh import Coord, Placement
from .queueing import PAPER, packet_delay_inspector
from .routing import Port, path_channels
from .traffic import TrafficSpec, resolve

# t critical values (two-sided 95%) for small seed counts, df 1..9
_T95 = {1: 12.706, 2: 4.303, 3: 3.182, 4: 2.776, 5: 2.571,
        6: 2.447, 7: 2.365, 8: 2.306, 9: 2.262}

SATURATION_TREND_RATIO = 1.5


@dataclass(frozen=True)
class SimConfig:
    """One simulation run: placement, traffic, message budget and seed.

    ``mu`` is the router service rate in packets per time unit; a message of
    L packets occupies a channel for L/mu. Defaults give mean message size 10
    and mu 10, i.e. one mean message service per time unit per channel.
    """

    placement: Placement
    traffic: TrafficSpec
    mean_message_size: float = 10.0
    mu: float = 10.0
    messages: int = 100_000
    warmup_frac: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.messages <= 0:
            raise InvalidConfigError("message budget must be > 0")
        if self.mu <= 0:
            raise InvalidConfigError("service rate mu must be > 0")
        if self.mean_message_size <= 0:
            raise InvalidConfigError("mean message size must be > 0")
        if not 0.0 <= self.warmup_frac < 1.0:
            raise InvalidConfigError("warmup fraction must lie in [0, 1)")


@dataclass
class ChannelStats:
    """Post-warmup statistics for one (router, input port) channel."""

    arrivals: int = 0
    completions: int = 0
    mean_service: float = 0.0
    utilization: float = 0.0
    throughput: float = 0.0
    mean_queue_len: float = 0.0
    mean_response: float = 0.0


@dataclass
class SimStats:
    """Run outcome: per-channel metrics plus global message latency."""

    channels: dict[tuple[Coord, Port], ChannelStats]
    flow_latency: dict[tuple[Coord, Coord], float]
    mean_latency: float
    ci95: float
    latency_samples: int
    messages_generated: int
    messages_completed: int
    derived_generated: int
    derived_completed: int
    saturated: bool
    duration: float
    window: float

    def to_json_dict(self) -> dict:
        return {
            "mean_latency": self.mean_latency,
            "ci95": self.ci95,
            "latency_samples": self.latency_samples,
            "messages_generated": self.messages_generated,
            "messages_completed": self.messages_completed,
            "derived_generated": self.derived_generated,
            "derived_completed": self.derived_completed,
            "saturated": self.saturated,
            "duration": self.duration,
            "window": self.window,
            "channels": [
                {
                    "x": coord.x, "y": coord.y, "port": port.value,
                    "arrivals": st.arrivals, "completions": st.completions,
                    "mean_service": st.mean_service,
                    "utilization": st.utilization,
                    "throughput": st.throughput,
                    "mean_queue_len": st.mean_queue_len,
                    "mean_response": st.mean_response,
                }
                for (coord, port), st in sorted(
                    self.channels.items(),
                    key=lambda kv: (kv[0][0].y, kv[0][0].x, kv[0][1].value),
                )
            ],
            "flows": [
                {"src_x": src.x, "src_y": src.y, "dst_x": dst.x, "dst_y": dst.y,
                 "mean_latency": latency}
                for (src, dst), latency in sorted(
                    self.flow_latency.items(),
                    key=lambda kv: (kv[0][0].y, kv[0][0].x, kv[0][1].y, kv[0][1].x),
                )
            ],
        }


class _Channel:
    __slots__ = ("queue", "last_t", "area", "busy", "arrivals", "completions",
                 "resp_sum", "svc_sum")

    def __init__(self):
        self.queue: deque = deque()
        self.last_t = 0.0
        self.area = 0.0
        self.busy = 0.0
        self.arrivals = 0
        self.completions = 0
        self.resp_sum = 0.0
        self.svc_sum = 0.0


class _Message:
    __slots__ = ("path", "hop", "svc", "origin", "src", "dst", "primary")

    def __init__(self, path, svc, origin, src, dst, primary):
        self.path = path
        self.hop = 0
        self.svc = svc
        self.origin = origin
        self.src = src
        self.dst = dst
        self.primary = primary


def run_sim(config: SimConfig) -> SimStats:
    """Simulate the configured workload to completion and collect statistics.

    Cores inject primary messages at rate lambda_g * miss_l1 with destinations
    drawn from the access matrix. When memory controllers exist, a delivered
    request spawns a controller leg with probability miss_l2; replies are
    generated when the traffic spec asks for them. Statistics start after the
    warmup fraction of the primary budget has been generated.
    """
    placement = config.placement
    spec = config.traffic
    r = resolve(placement, spec)
    rng = random.Random(config.seed)
    mu = config.mu

    inj = r.lam * spec.miss_l1
    active_cores = [i for i in range(len(r.cores)) if inj[i] > 0.0]
    if not active_cores and config.messages > 0:
        raise InvalidConfigError("no core has a positive injection rate")

    # Cumulative access rows for destination sampling.
    cum_p = [list(np.cumsum(r.p[i])) for i in range(len(r.cores))]
    cum_q = [list(np.cumsum(r.q[j])) for j in range(len(r.caches))] if r.q is not None else None
    cache_index = {cache: j for j, cache in enumerate(r.caches)}

    channels: dict[tuple[Coord, Port], _Channel] = {}
    path_cache: dict[tuple[Coord, Coord], list[_Channel]] = {}

    def path_of(src: Coord, dst: Coord) -> list[_Channel]:
        cached = path_cache.get((src, dst))
        if cached is None:
            cached = [channels.setdefault(key, _Channel())
                      for key in path_channels(src, dst)]
            path_cache[(src, dst)] = cached
        return cached

    warmup_count = int(config.warmup_frac * config.messages)
    stats_start = 0.0 if warmup_count == 0 else math.inf

    heap: list = []
    seq = 0

    def push(t: float, kind: int, payload) -> None:
        nonlocal seq
        heappush(heap, (t, seq, kind, payload))
        seq += 1

    def draw_length() -> float:
        return max(1.0, round(rng.expovariate(1.0 / config.mean_message_size)))

    generated = 0
    completed = 0
    derived_generated = 0
    derived_completed = 0
    latencies: list[float] = []
    flow_sums: dict[tuple[Coord, Coord], list] = {}

    def update_clock(ch: _Channel, t: float) -> None:
        if t > stats_start:
            dt = t - max(ch.last_t, stats_start)
            n = len(ch.queue)
            ch.area += n * dt
            if n:
                ch.busy += dt
        ch.last_t = t

    def arrive(msg: _Message, t: float) -> None:
        ch = msg.path[msg.hop]
        update_clock(ch, t)
        if t >= stats_start:
            ch.arrivals += 1
        ch.queue.append((msg, t))
        if len(ch.queue) == 1:
            push(t + msg.svc, 1, ch)

    def spawn(src: Coord, dst: Coord, t: float) -> _Message:
        length = draw_length()
        msg = _Message(path_of(src, dst), length / mu, t, src, dst, False)
        arrive(msg, t)
        return msg

    # Seed one generation event per active core.
    for i in active_cores:
        push(rng.expovariate(inj[i]), 0, i)

    while heap:
        t, _, kind, payload = heappop(heap)
        if kind == 0:
            i = payload
            if generated >= config.messages:
                continue
            generated += 1
            if generated == warmup_count and math.isinf(stats_start):
                stats_start = t
            if generated < config.messages:
                push(t + rng.expovariate(inj[i]), 0, i)
            j = bisect_left(cum_p[i], rng.random())
            j = min(j, len(r.caches) - 1)
            src, dst = r.cores[i], r.caches[j]
            length = draw_length()
            msg = _Message(path_of(src, dst), length / mu, t, src, dst, True)
            arrive(msg, t)
        else:
            ch: _Channel = payload
            update_clock(ch, t)
            msg, arr_t = ch.queue.popleft()
            if arr_t >= stats_start:
                ch.completions += 1
                ch.resp_sum += t - arr_t
                ch.svc_sum += msg.svc
            if ch.queue:
                head, _ = ch.queue[0]
                push(t + head.svc, 1, ch)
            msg.hop += 1
            if msg.hop < len(msg.path):
                arrive(msg, t)
                continue
            # Delivered.
            if msg.primary:
                completed += 1
            else:
                derived_completed += 1
            if msg.origin >= stats_start:
                latencies.append(t - msg.origin)
                agg = flow_sums.setdefault((msg.src, msg.dst), [0, 0.0])
                agg[0] += 1
                agg[1] += t - msg.origin
            if msg.primary:
                j = cache_index[msg.dst]
                if cum_q is not None and spec.miss_l2 > 0.0 and rng.random() < spec.miss_l2:
                    k = min(bisect_left(cum_q[j], rng.random()), len(r.mcs) - 1)
                    spawn(msg.dst, r.mcs[k], t)
                    derived_generated += 1
                if spec.model_replies:
                    spawn(msg.dst, msg.src, t)
                    derived_generated += 1

    end_t = 0.0
    for ch in channels.values():
        end_t = max(end_t, ch.last_t)
    if math.isinf(stats_start):
        stats_start = end_t
    window = max(end_t - stats_start, 0.0)

    channel_stats: dict[tuple[Coord, Port], ChannelStats] = {}
    for key, ch in channels.items():
        update_clock(ch, end_t)
        st = ChannelStats(arrivals=ch.arrivals, completions=ch.completions)
        if window > 0:
            st.utilization = ch.busy / window
            st.throughput = ch.completions / window
            st.mean_queue_len = ch.area / window
        if ch.completions:
            st.mean_service = ch.svc_sum / ch.completions
            st.mean_response = ch.resp_sum / ch.completions
        channel_stats[key] = st

    lat = np.asarray(latencies)
    mean_latency = float(lat.mean()) if lat.size else 0.0
    ci95 = float(1.96 * lat.std(ddof=1) / math.sqrt(lat.size)) if lat.size > 1 else 0.0
    saturated = False
    if lat.size >= 20:
        half = lat.size // 2
        first, second = lat[:half].mean(), lat[half:].mean()
        saturated = bool(second > SATURATION_TREND_RATIO * first)

    return SimStats(
        channels=channel_stats,
        flow_latency={k: s / n for k, (n, s) in flow_sums.items()},
        mean_latency=mean_latency,
        ci95=ci95,
        latency_samples=int(lat.size),
        messages_generated=generated,
        messages_completed=completed,
        derived_generated=derived_generated,
        derived_completed=derived_completed,
        saturated=saturated,
        duration=end_t,
        window=window,
    )


@dataclass(frozen=True)
class SweepRow:
    family: str
    lambda_g: float
    seed: int
    mean_latency: float
    ci95: float
    saturated: bool


def _sweep_cell(args) -> SweepRow:
    label, rate, cfg = args
    stats = run_sim(cfg)
    return SweepRow(label, rate, cfg.seed, stats.mean_latency,
                    stats.ci95, stats.saturated)


def sweep_latency(placements: Sequence[tuple[str, Placement]],
                  rates: Sequence[float],
                  base: SimConfig,
                  seeds: Sequence[int] = (0, 1, 2),
                  jobs: int = 1) -> list[SweepRow]:
    """Full factorial latency sweep: placements x rates x seeds.

    All placements must share the base config's grid so the total service
    rate is identical across compared configurations. Cells are independent
    runs; with jobs > 1 they execute in parallel and the row order (keyed by
    placement, rate, seed) is the same regardless of worker count.
    """
    grid = base.placement.grid
    for label, p in placements:
        if p.grid != grid:
            raise InvalidConfigError(f"placement {label!r} is not on the base grid")
    cells = [
        (label, rate, SimConfig(
            placement=placement,
            traffic=base.traffic.with_rate(rate),
            mean_message_size=base.mean_message_size,
            mu=base.mu,
            messages=base.messages,
            warmup_frac=base.warmup_frac,
            seed=seed,
        ))
        for label, placement in placements
        for rate in rates
        for seed in seeds
    ]
    if jobs <= 1:
        return [_sweep_cell(c) for c in cells]
    from concurrent.futures import ProcessPoolExecutor

    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_sweep_cell, cells))


@dataclass(frozen=True)
class SweepCell:
    mean_latency: float
    ci95: float
    n_seeds: int
    runs_saturated: int


def aggregate_sweep(rows: Sequence[SweepRow]) -> dict[tuple[str, float], SweepCell]:
    """Collapse sweep rows over seeds: mean of per-seed means with a
    t-distribution 95% confidence half-width."""
    groups: dict[tuple[str, float], list[SweepRow]] = {}
    for row in rows:
        groups.setdefault((row.family, row.lambda_g), []).append(row)
    cells = {}
    for key, rs in groups.items():
        means = np.array([r.mean_latency for r in rs])
        n = means.size
        if n > 1:
            ci = float(_T95.get(n - 1, 1.96) * means.std(ddof=1) / math.sqrt(n))
        else:
            ci = rs[0].ci95
        cells[key] = SweepCell(float(means.mean()), ci, n,
                               sum(1 for r in rs if r.saturated))
    return cells


def write_sweep_csv(rows: Sequence[SweepRow], out: IO[str]) -> None:
    w = csv.writer(out)
    w.writerow(["family", "lambda_g", "seed", "mean_latency", "ci95", "saturated"])
    for row in rows:
        w.writerow([row.family, repr(row.lambda_g), row.seed,
                    repr(row.mean_latency), repr(row.ci95), int(row.saturated)])


@dataclass
class CompareReport:
    """Per-channel relative error of the analytical response time against a
    simulation of the same configuration."""

    rows: list[tuple[Coord, Port, float, float, float]]
    max_rel_err: float
    mean_rel_err: float
    analytical_available: bool
    detail: str = ""

    def write_csv(self, out: IO[str]) -> None:
        w = csv.writer(out)
        w.writerow(["x", "y", "channel", "sim_rt", "analytical_rt", "rel_err"])
        for coord, port, sim_rt, ana_rt, err in self.rows:
            w.writerow([coord.x, coord.y, port.value, repr(sim_rt),
                        repr(ana_rt), repr(err)])


def compare_to_analytical(config: SimConfig, queue_mode: str = PAPER,
                          min_completions: int = 100) -> CompareReport:
    """Run the simulator and the packet delay inspector on one configuration
    and tabulate per-channel response-time deltas.

    Channels with fewer than ``min_completions`` post-warmup completions are
    skipped (their sample means carry no signal). An unstable analytical
    fixed point is reported, not raised; simulated values are still returned.
    """
    sim = run_sim(config)
    es = config.mean_message_size / config.mu
    spec = config.traffic
    analytic_spec = TrafficSpec(
        lambda_g=spec.lambda_g,
        hit_l1=spec.hit_l1,
        miss_l2=spec.miss_l2,
        p=spec.p,
        latency_l1=spec.latency_l1,
        svc=type(spec.svc)(mean_service=es, scv=spec.svc.scv),
        arrival_scv=spec.arrival_scv,
        model_replies=spec.model_replies,
        mem_fixed_latency=spec.mem_fixed_latency,
    )
    try:
        report = packet_delay_inspector(config.placement, analytic_spec, mode=queue_mode)
    except UnstableError as exc:
        rows = [
            (coord, port, st.mean_response, math.nan, math.nan)
            for (coord, port), st in sorted(
                sim.channels.items(), key=lambda kv: (kv[0][0].y, kv[0][0].x, kv[0][1].value)
            )
            if st.completions >= min_completions
        ]
        return CompareReport(rows, math.nan, math.nan, False,
                             detail=f"analytical unavailable: {exc}")

    rows = []
    errs = []
    for (coord, port), st in sorted(
        sim.channels.items(), key=lambda kv: (kv[0][0].y, kv[0][0].x, kv[0][1].value)
    ):
        if st.completions < min_completions:
            continue
        ana_rt = report.rt_of(coord, port)
        err = abs(ana_rt - st.mean_response) / st.mean_response
        rows.append((coord, port, st.mean_response, ana_rt, err))
        errs.append(err)
    if not errs:
        return CompareReport(rows, math.nan, math.nan, True,
                             detail="no channel met the completion threshold")
    return CompareReport(rows, float(max(errs)), float(np.mean(errs)), True)
