"""Static XY routing and steady-state channel arrival rates.

Rates are derived by superposing flow rates along their dimension-ordered
paths, ignoring contention; the queueing module layers contention on top.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from enum import Enum
from typing import IO, Iterable

from .errors import OutOfBoundsError
from .mesh import Coord, MeshGrid, Placement, manhattan
from .traffic import ResolvedTraffic, TrafficSpec, resolve


class Port(Enum):
    """Router ports: four mesh directions plus the local injection/ejection
    port. Local ports carry rates like physical ones so endpoint queueing can
    be modeled or excluded uniformly."""

    NORTH = "N"
    SOUTH = "S"
    EAST = "E"
    WEST = "W"
    LOCAL = "L"

    @property
    def delta(self) -> tuple[int, int]:
        return _DELTA[self]

    @property
    def opposite(self) -> "Port":
        return _OPPOSITE[self]


_DELTA = {
    Port.NORTH: (0, -1),
    Port.SOUTH: (0, 1),
    Port.EAST: (1, 0),
    Port.WEST: (-1, 0),
    Port.LOCAL: (0, 0),
}
_OPPOSITE = {
    Port.NORTH: Port.SOUTH,
    Port.SOUTH: Port.NORTH,
    Port.EAST: Port.WEST,
    Port.WEST: Port.EAST,
    Port.LOCAL: Port.LOCAL,
}

PORT_ORDER = (Port.NORTH, Port.SOUTH, Port.EAST, Port.WEST, Port.LOCAL)


class FlowKind(Enum):
    CORE_TO_CACHE = "core-to-cache"
    CACHE_TO_MC = "cache-to-mc"
    REPLY = "reply"


@dataclass(frozen=True)
class Flow:
    src: Coord
    dst: Coord
    rate: float
    kind: FlowKind


def xy_route(src: Coord, dst: Coord) -> list[tuple[Coord, Port]]:
    """Dimension-ordered path: (router, output port) pairs from src to dst.

    Moves east/west along the source row to the destination column, then
    north/south; the final entry delivers on the local port. Path length is
    manhattan(src, dst) + 1 routers, both endpoints included.
    """
    path = []
    x, y = src.x, src.y
    step_x = Port.EAST if dst.x > x else Port.WEST
    while x != dst.x:
        path.append((Coord(x, y), step_x))
        x += step_x.delta[0]
    step_y = Port.SOUTH if dst.y > y else Port.NORTH
    while y != dst.y:
        path.append((Coord(x, y), step_y))
        y += step_y.delta[1]
    path.append((dst, Port.LOCAL))
    return path


def path_channels(src: Coord, dst: Coord) -> list[tuple[Coord, Port]]:
    """Input channels traversed along the XY path: (router, input port).

    The source router is entered through its local injection port; every
    later router through the port facing the previous hop.
    """
    hops = xy_route(src, dst)
    channels = [(src, Port.LOCAL)]
    for (router, out), (nxt, _) in zip(hops, hops[1:]):
        channels.append((nxt, out.opposite))
    return channels


def valid_in_ports(grid: MeshGrid, router: Coord) -> list[Port]:
    """Input ports that exist at a router (edge routers lack out-of-grid
    ports), in fixed enumeration order."""
    ports = []
    for port in PORT_ORDER:
        if port is Port.LOCAL:
            ports.append(port)
            continue
        dx, dy = port.delta
        if grid.contains(Coord(router.x + dx, router.y + dy)):
            ports.append(port)
    return ports


def build_flows(placement: Placement, spec: TrafficSpec,
                resolved: ResolvedTraffic | None = None) -> list[Flow]:
    """Flow set induced by a placement and traffic spec.

    Core i sends to cache j at rate lambda_i * miss_l1 * p_ij. When memory
    controllers are present, cache j forwards its aggregate misses to
    controller k at the miss_l2-scaled rate weighted by the nearest-controller
    split q_jk. Reply flows (reverse direction, equal rate) appear only when
    spec.model_replies is set. Zero-probability pairs yield no flow.
    """
    r = resolved if resolved is not None else resolve(placement, spec)
    miss1 = spec.miss_l1
    flows = []
    for i, core in enumerate(r.cores):
        for j, cache in enumerate(r.caches):
            rate = float(r.lam[i]) * miss1 * float(r.p[i, j])
            if rate > 0.0:
                flows.append(Flow(core, cache, rate, FlowKind.CORE_TO_CACHE))
    if r.q is not None and spec.miss_l2 > 0.0:
        cache_ingress = (r.lam * miss1) @ r.p  # aggregate request rate per cache
        for j, cache in enumerate(r.caches):
            for k, mc in enumerate(r.mcs):
                rate = float(cache_ingress[j]) * spec.miss_l2 * float(r.q[j, k])
                if rate > 0.0:
                    flows.append(Flow(cache, mc, rate, FlowKind.CACHE_TO_MC))
    if spec.model_replies:
        flows += [Flow(f.dst, f.src, f.rate, FlowKind.REPLY) for f in list(flows)]
    return flows


@dataclass
class ChannelLoadMap:
    """Steady-state arrival rates per input channel and per turn.

    ``in_rates[(router, in_port)]`` aggregates every flow entering the router
    through that port; ``turn_rates[(router, in_port, out_port)]`` splits the
    same traffic by output. Flow conservation holds exactly by construction.
    """

    grid: MeshGrid
    in_rates: dict[tuple[Coord, Port], float] = field(default_factory=dict)
    turn_rates: dict[tuple[Coord, Port, Port], float] = field(default_factory=dict)

    def in_rate(self, router: Coord, port: Port) -> float:
        return self.in_rates.get((router, port), 0.0)

    def turn_rate(self, router: Coord, in_port: Port, out_port: Port) -> float:
        return self.turn_rates.get((router, in_port, out_port), 0.0)

    def write_csv(self, out: IO[str]) -> None:
        w = csv.writer(out)
        w.writerow(["router_x", "router_y", "in_port", "out_port", "rate"])
        for (router, in_port, out_port), rate in sorted(
            self.turn_rates.items(),
            key=lambda kv: (kv[0][0].y, kv[0][0].x, kv[0][1].value, kv[0][2].value),
        ):
            w.writerow([router.x, router.y, in_port.value, out_port.value, repr(rate)])


def derive_channel_rates(flows: Iterable[Flow], grid: MeshGrid) -> ChannelLoadMap:
    """Superpose flow rates along their XY paths into per-channel loads.

    Flows are processed in a canonical order so the floating-point sums are
    identical no matter how the caller ordered them.
    """
    loads = ChannelLoadMap(grid)
    ordered = sorted(flows, key=lambda f: (f.src, f.dst, f.kind.value, f.rate))
    for f in ordered:
        if not grid.contains(f.src) or not grid.contains(f.dst):
            raise OutOfBoundsError(f"flow {f.src}->{f.dst} leaves the grid")
        if f.rate == 0.0:
            continue
        hops = xy_route(f.src, f.dst)
        in_port = Port.LOCAL
        for router, out_port in hops:
            key = (router, in_port)
            loads.in_rates[key] = loads.in_rates.get(key, 0.0) + f.rate
            tkey = (router, in_port, out_port)
            loads.turn_rates[tkey] = loads.turn_rates.get(tkey, 0.0) + f.rate
            in_port = out_port.opposite
    return loads
