"""Expected-latency objective for a placement: low-traffic hop model and
high-traffic router-response-time model.

Per core the total decomposes as

    latency_l1 + l2_term * miss_l1 + mem_term * miss_l1 * miss_l2

where the L2 and memory terms are probability-weighted network transit
times. In LOW mode a core->cache transit costs manhattan-distance hops, each
hop worth one mean service time. In HIGH mode every hop is replaced by the
modeled response time of the router the message hops into, so the two modes
coincide exactly in the zero-load limit. (The delay inspector's per-flow
delays additionally charge the source injection channel; the objective
charges the link hops only, matching the low-traffic hop count.)
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from typing import IO

from .errors import NoCachesError, NoMemControllersError
from .mesh import Coord, Placement, manhattan
from .queueing import PAPER, DelayReport, packet_delay_inspector
from .routing import path_channels
from .traffic import ResolvedTraffic, TrafficSpec, resolve


class Mode(Enum):
    LOW = "low"
    HIGH = "high"


@dataclass(frozen=True)
class CoreLatency:
    core: Coord
    l2_term: float
    mem_term: float
    total: float


@dataclass
class LatencyReport:
    """Per-core expected latencies and the summed global objective."""

    mode: Mode
    per_core: list[CoreLatency]
    objective_value: float
    spec: TrafficSpec

    @property
    def l2_sum(self) -> float:
        return sum(c.l2_term for c in self.per_core)

    @property
    def mem_sum(self) -> float:
        return sum(c.mem_term for c in self.per_core)

    def to_json_dict(self) -> dict:
        return {
            "mode": self.mode.value,
            "objective": self.objective_value,
            "per_core": [
                {"x": c.core.x, "y": c.core.y, "l2_term": c.l2_term,
                 "mem_term": c.mem_term, "total": c.total}
                for c in self.per_core
            ],
            "parameters": {
                "lambda_g": self.spec.lambda_g,
                "hit_l1": self.spec.hit_l1,
                "miss_l2": self.spec.miss_l2,
                "latency_l1": self.spec.latency_l1,
                "mean_service": self.spec.svc.mean_service,
                "service_scv": self.spec.svc.scv,
                "arrival_scv": self.spec.arrival_scv,
                "mem_fixed_latency": self.spec.mem_fixed_latency,
                "model_replies": self.spec.model_replies,
            },
        }

    def write_json(self, out: IO[str]) -> None:
        json.dump(self.to_json_dict(), out, indent=2)
        out.write("\n")


def low_traffic_l2_latency(core: Coord, placement: Placement, spec: TrafficSpec,
                           resolved: ResolvedTraffic | None = None) -> float:
    """Probability-weighted Manhattan distance from one core to all caches."""
    r = resolved if resolved is not None else resolve(placement, spec)
    if not r.caches:
        raise NoCachesError("placement has no caches")
    i = r.cores.index(core)
    return float(sum(r.p[i, j] * manhattan(core, cache)
                     for j, cache in enumerate(r.caches)))


def low_traffic_mem_latency(placement: Placement, spec: TrafficSpec,
                            core: Coord | None = None,
                            resolved: ResolvedTraffic | None = None) -> float:
    """Expected cache-to-memory-controller distance plus the fixed off-chip
    access time.

    The expectation nests over caches (weighted by the core's access row, or
    the cache average when no core is given) and over the nearest-controller
    assignment.
    """
    r = resolved if resolved is not None else resolve(placement, spec)
    if r.q is None:
        raise NoMemControllersError("placement has no memory controllers")
    per_cache = [
        sum(r.q[j, k] * manhattan(cache, mc) for k, mc in enumerate(r.mcs))
        for j, cache in enumerate(r.caches)
    ]
    if core is None:
        weights = [1.0 / len(r.caches)] * len(r.caches)
    else:
        i = r.cores.index(core)
        weights = [float(r.p[i, j]) for j in range(len(r.caches))]
    return float(sum(w * d for w, d in zip(weights, per_cache))) + spec.mem_fixed_latency


def _transit_sum(report: DelayReport, src: Coord, dst: Coord) -> float:
    # Response-time sum over the d routers entered via links (the injection
    # channel at src is excluded; LOW mode counts the same d hops).
    return sum(report.rt_of(router, port)
               for router, port in path_channels(src, dst)[1:])


def objective(placement: Placement, spec: TrafficSpec, mode: Mode = Mode.LOW,
              queue_mode: str = PAPER) -> LatencyReport:
    """Evaluate the placement objective: sum over cores of expected latency.

    LOW mode scales hop counts by E{S}; HIGH mode prices each hop at the
    traversed router's modeled response time and therefore requires a stable
    queueing fixed point. The memory term is included only when the placement
    has memory controllers.
    """
    r = resolve(placement, spec)
    es = spec.svc.mean_service
    miss1 = spec.miss_l1
    miss2 = spec.miss_l2
    report = None
    if mode is Mode.HIGH:
        report = packet_delay_inspector(placement, spec, mode=queue_mode, resolved=r)

    per_cache_mem = None
    if r.q is not None:
        if mode is Mode.HIGH:
            per_cache_mem = [
                sum(r.q[j, k] * _transit_sum(report, cache, mc)
                    for k, mc in enumerate(r.mcs))
                for j, cache in enumerate(r.caches)
            ]
        else:
            per_cache_mem = [
                es * sum(r.q[j, k] * manhattan(cache, mc) for k, mc in enumerate(r.mcs))
                for j, cache in enumerate(r.caches)
            ]

    per_core = []
    for i, core in enumerate(r.cores):
        if mode is Mode.HIGH:
            l2 = sum(float(r.p[i, j]) * _transit_sum(report, core, cache)
                     for j, cache in enumerate(r.caches))
        else:
            l2 = es * sum(float(r.p[i, j]) * manhattan(core, cache)
                          for j, cache in enumerate(r.caches))
        mem = 0.0
        if per_cache_mem is not None:
            mem = sum(float(r.p[i, j]) * per_cache_mem[j]
                      for j in range(len(r.caches))) + spec.mem_fixed_latency
        total = spec.latency_l1 + l2 * miss1 + mem * miss1 * miss2
        per_core.append(CoreLatency(core, float(l2), float(mem), float(total)))

    return LatencyReport(
        mode=mode,
        per_core=per_core,
        objective_value=float(sum(c.total for c in per_core)),
        spec=spec,
    )
