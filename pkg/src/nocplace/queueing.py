"""Per-router response-time model: contention matrix, effective utilization,
waiting time, and end-to-end packet delays.

The model treats every input channel of a router as a queue whose effective
utilization is inflated by cross-channel contention. Contention between
channels i and j is accumulated per shared output port using the M/G/1-style
head/position probability Pr = 1 - exp(-lambda_turn * E{S}), the closed form
sum_{m>=1} m x^m = x/(1-x)^2, and queue lengths closed through Little's law
by a damped fixed point.

Two waiting-time variants ship. "paper" evaluates
W = ((Ca^2+Cs^2)/2) * E{S} / (1 - rho_e), which at unit SCVs equals the M/M/1
response time, so in this mode the per-channel response time is that value
(floored at E{S}). "standard" is textbook Kingman: the same expression scaled
by rho_e, used as a pure waiting time on top of E{S}. The two modes produce
identical response times whenever (Ca^2+Cs^2)/2 = 1, which covers the default
Poisson-arrival / exponential-service configuration.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import IO

import numpy as np

from .errors import (
    DimensionMismatchError,
    NonConvergentError,
    UnstableError,
)
from .mesh import Coord, Placement
from .routing import (
    ChannelLoadMap,
    Flow,
    Port,
    build_flows,
    derive_channel_rates,
    path_channels,
    valid_in_ports,
)
from .traffic import ResolvedTraffic, ServiceSpec, TrafficSpec, resolve

PAPER = "paper"
STANDARD = "standard"

FIXED_POINT_TOL = 1e-8
FIXED_POINT_MAX_ITER = 500
FIXED_POINT_DAMPING = 0.5


def mm1_response(lam: float, mu: float) -> float:
    """Mean response time of an M/M/1 queue: 1/(mu - lambda)."""
    if lam < 0 or mu <= 0:
        raise UnstableError(f"rates out of range: lambda={lam}, mu={mu}")
    if lam >= mu:
        raise UnstableError(f"unstable queue: lambda={lam} >= mu={mu}")
    return 1.0 / (mu - lam)


def kingman_wait(rho_e: float, ca2: float, cs2: float, es: float,
                 mode: str = PAPER) -> float:
    """Approximate waiting time from effective utilization and variability.

    PAPER mode returns ((Ca^2+Cs^2)/2) * E{S} / (1-rho_e) as written; STANDARD
    multiplies by rho_e, the textbook G/G/1 heavy-traffic form.
    """
    if mode not in (PAPER, STANDARD):
        raise ValueError(f"unknown waiting-time mode {mode!r}")
    if rho_e < 0 or rho_e >= 1.0:
        raise UnstableError(f"effective utilization {rho_e} outside [0, 1)")
    if ca2 < 0 or cs2 < 0 or es <= 0:
        raise UnstableError("SCVs must be >= 0 and E{S} > 0")
    base = 0.5 * (ca2 + cs2) * es / (1.0 - rho_e)
    return base if mode == PAPER else rho_e * base


def effective_utilization(lam, contention, es) -> np.ndarray:
    """Per-channel effective utilization: row sums of diag(lam) C diag(E{S}).

    Row i aggregates the service demand channel i suffers from every channel
    j; the identity contention matrix reduces to the plain lambda * E{S}.
    """
    lam = np.asarray(lam, dtype=float)
    c = np.asarray(contention, dtype=float)
    es = np.asarray(es, dtype=float)
    if es.ndim == 0:
        es = np.full(lam.shape, float(es))
    n = lam.shape[0]
    if c.shape != (n, n) or es.shape != (n,):
        raise DimensionMismatchError(
            f"lambda has {n} channels, C is {c.shape}, E{{S}} is {es.shape}"
        )
    return lam * (c @ es)


@dataclass
class RouterLoads:
    """One router's channel arrival rates: lam[i] per input channel and
    turns[i][k] per (input channel, output port)."""

    router: Coord
    ports: tuple[Port, ...]
    out_ports: tuple[Port, ...]
    lam: np.ndarray
    turns: np.ndarray


def router_loads(loads: ChannelLoadMap, router: Coord) -> RouterLoads:
    ports = tuple(valid_in_ports(loads.grid, router))
    outs = ports  # same port set acts as outputs (local = ejection)
    lam = np.array([loads.in_rate(router, p) for p in ports])
    turns = np.array(
        [[loads.turn_rate(router, p, o) for o in outs] for p in ports]
    )
    return RouterLoads(router, ports, outs, lam, turns)


@dataclass
class RouterQueueModel:
    """Solved queue model for one router.

    Vectors are indexed like ``ports``. ``contention`` carries unit diagonal
    (self service occupancy) plus the cross-channel terms; ``queue_len`` is
    the Little's-law queue length lambda * W_q at the fixed point.
    """

    router: Coord
    ports: tuple[Port, ...]
    lam: np.ndarray
    svc: ServiceSpec
    contention: np.ndarray
    rho_e: np.ndarray
    residual: np.ndarray
    wq: np.ndarray
    rt: np.ndarray
    queue_len: np.ndarray

    def rt_of(self, port: Port) -> float:
        return float(self.rt[self.ports.index(port)])

    def weighted_rt(self) -> float:
        """Arrival-rate-weighted mean response time over the router's
        channels; E{S} for an idle router."""
        total = float(self.lam.sum())
        if total <= 0.0:
            return self.svc.mean_service
        return float(self.lam @ self.rt) / total


def _contention_rhs(lam: np.ndarray, turns: np.ndarray, es: np.ndarray) -> np.ndarray:
    # rhs[i][j] = rho_i * sum_k Pr(turn_ik at head) * x_jk/(1-x_jk)^2 with
    # x_jk = rho_j * (1 - exp(-turn_jk * E{S_j})), accumulated over the
    # outputs both channels drive.
    rho = lam * es
    head = 1.0 - np.exp(-turns * es[:, None])
    x = rho[:, None] * head
    series = x / (1.0 - x) ** 2
    return rho[:, None] * (head @ series.T)


def solve_router(rl: RouterLoads, svc: ServiceSpec, ca2: float = 1.0,
                 mode: str = PAPER) -> RouterQueueModel:
    """Run the per-router contention fixed point and return the solved model.

    Raises UnstableError when any channel's (effective) utilization reaches 1
    and NonConvergentError when the queue-length iteration does not settle.
    """
    n = len(rl.ports)
    lam = rl.lam.astype(float)
    es = np.full(n, svc.mean_service)
    rho = lam * es
    _check_stable(rho, rl, "utilization")

    rhs = _contention_rhs(lam, rl.turns, es)
    c = np.eye(n)
    rho_e = rho.copy()
    wq = np.array([kingman_wait(r, ca2, svc.scv, svc.mean_service, mode) for r in rho_e])
    nq = lam * wq
    for _ in range(FIXED_POINT_MAX_ITER):
        with np.errstate(divide="ignore", invalid="ignore"):
            c = np.where(nq[None, :] > 0.0, rhs / nq[None, :], 0.0)
        np.fill_diagonal(c, 1.0)
        rho_e = effective_utilization(lam, c, es)
        _check_stable(rho_e, rl, "effective utilization")
        wq = np.array(
            [kingman_wait(r, ca2, svc.scv, svc.mean_service, mode) for r in rho_e]
        )
        nq_next = lam * wq
        delta = float(np.max(np.abs(nq_next - nq))) if n else 0.0
        nq = (1.0 - FIXED_POINT_DAMPING) * nq + FIXED_POINT_DAMPING * nq_next
        if delta < FIXED_POINT_TOL:
            break
    else:
        raise NonConvergentError(
            f"contention fixed point at router {rl.router} did not converge "
            f"within {FIXED_POINT_MAX_ITER} iterations"
        )

    residual = np.full(n, 0.5 * (ca2 + svc.scv) * svc.mean_service)
    if mode == PAPER:
        rt = np.maximum(wq, svc.mean_service)
    else:
        rt = svc.mean_service + wq
    return RouterQueueModel(
        router=rl.router,
        ports=rl.ports,
        lam=lam,
        svc=svc,
        contention=c,
        rho_e=rho_e,
        residual=residual,
        wq=wq,
        rt=rt,
        queue_len=lam * wq,
    )


def _check_stable(rho: np.ndarray, rl: RouterLoads, label: str) -> None:
    if rho.size and float(rho.max()) >= 1.0:
        i = int(rho.argmax())
        raise UnstableError(
            f"{label} {rho[i]:.4f} >= 1 at router {rl.router} channel {rl.ports[i].value}",
            router=rl.router,
            channel=rl.ports[i],
        )


def contention_matrix(rl: RouterLoads, svc: ServiceSpec, ca2: float = 1.0,
                      mode: str = PAPER) -> np.ndarray:
    """Contention matrix of one router at the solved fixed point."""
    return solve_router(rl, svc, ca2, mode).contention


@dataclass
class DelayReport:
    """Inspector output: solved per-router models plus per-flow path delays.

    A flow's delay sums the response time of the input channel it traverses
    at every router on its XY path, source injection channel included, so the
    zero-load limit is (manhattan + 1) * E{S}.
    """

    mode: str
    routers: dict[Coord, RouterQueueModel]
    flow_delays: list[tuple[Flow, float]]

    def rt_of(self, router: Coord, port: Port) -> float:
        return self.routers[router].rt_of(port)

    def write_router_csv(self, out: IO[str]) -> None:
        w = csv.writer(out)
        w.writerow(["x", "y", "channel", "lambda", "rho_e", "wq", "rt", "queue_len"])
        for coord in sorted(self.routers, key=lambda c: (c.y, c.x)):
            m = self.routers[coord]
            for i, port in enumerate(m.ports):
                w.writerow([
                    coord.x, coord.y, port.value,
                    repr(float(m.lam[i])), repr(float(m.rho_e[i])),
                    repr(float(m.wq[i])), repr(float(m.rt[i])),
                    repr(float(m.queue_len[i])),
                ])

    def write_flow_csv(self, out: IO[str]) -> None:
        w = csv.writer(out)
        w.writerow(["src_x", "src_y", "dst_x", "dst_y", "rate", "delay"])
        for flow, delay in self.flow_delays:
            w.writerow([flow.src.x, flow.src.y, flow.dst.x, flow.dst.y,
                        repr(flow.rate), repr(delay)])


def packet_delay_inspector(placement: Placement, spec: TrafficSpec,
                           mode: str = PAPER,
                           resolved: ResolvedTraffic | None = None) -> DelayReport:
    """End-to-end delay model: flows -> channel rates -> per-router contention
    fixed points -> per-flow path delays.

    Raises UnstableError naming the first saturated router when the offered
    load cannot be served.
    """
    r = resolved if resolved is not None else resolve(placement, spec)
    flows = build_flows(placement, spec, resolved=r)
    loads = derive_channel_rates(flows, placement.grid)
    routers: dict[Coord, RouterQueueModel] = {}
    for coord in placement.grid.tiles():
        routers[coord] = solve_router(
            router_loads(loads, coord), spec.svc, spec.arrival_scv, mode
        )
    flow_delays = []
    for flow in flows:
        delay = sum(
            routers[router].rt_of(port)
            for router, port in path_channels(flow.src, flow.dst)
        )
        flow_delays.append((flow, delay))
    return DelayReport(mode=mode, routers=routers, flow_delays=flow_delays)
