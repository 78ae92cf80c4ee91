"""Discrete-event simulation of the open queueing-network testbed.

Single-server FIFO stations with unbounded queues, gamma interarrival and
service times, and Bernoulli routing.  The output of one replication is the
time-average number of customers in the system over the measurement window,
computed exactly from the piecewise-constant sample path.  An analytic
Jackson-network oracle provides the exponential-case ground truth, the
stability classification, and the undefined-topology check.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import SingularTraffic
from .input_models import Bernoulli, Gamma, InputModelSet, Layout, unstack

EXIT = -1
_NO_ROUTING = -2

# Buffer head-room for pre-drawn variates: expected event counts times this
# factor, plus a flat pad.  Exhaustion triggers a retry with doubled buffers.
_BUFFER_FACTOR = 3.0
_BUFFER_PAD = 200
_MAX_BUFFER_RETRIES = 8


@dataclass(frozen=True)
class NetworkTopology:
    """Station wiring: who receives external arrivals, who serves, who routes.

    ``routing[j]`` is either None (station j sends finished customers to the
    exit) or a triple ``(dest_on_success, dest_on_failure, process_index)``
    where destinations are 0-based station indices or ``EXIT`` and the process
    index points at a Bernoulli input process whose draw selects the route.
    """

    n_stations: int
    arrival_station: int
    arrival_process: int
    service_processes: tuple[int, ...]
    routing: tuple[tuple[int, int, int] | None, ...]

    def __post_init__(self):
        if len(self.service_processes) != self.n_stations:
            raise ValueError("one service process per station required")
        if len(self.routing) != self.n_stations:
            raise ValueError("one routing entry per station required")
        if not 0 <= self.arrival_station < self.n_stations:
            raise ValueError("arrival station out of range")
        for entry in self.routing:
            if entry is None:
                continue
            succ, fail, _ = entry
            for dest in (succ, fail):
                if dest != EXIT and not 0 <= dest < self.n_stations:
                    raise ValueError(f"routing destination {dest} out of range")

    def routing_processes(self) -> tuple[int, ...]:
        return tuple(entry[2] for entry in self.routing if entry is not None)


def default_topology() -> NetworkTopology:
    """Four-station network driven by 8 input processes (5 gamma, 3 Bernoulli).

    Arrivals enter station 1; station 1 routes to {2, 3}, station 2 to {3, 4},
    station 3 to {4, 2} (success reaching station 4), station 4 exits.
    Process order: arrival, four services, three routing probabilities.
    """
    return NetworkTopology(
        n_stations=4,
        arrival_station=0,
        arrival_process=0,
        service_processes=(1, 2, 3, 4),
        routing=(
            (1, 2, 5),   # station 1: success -> station 2, failure -> station 3
            (2, 3, 6),   # station 2: success -> station 3, failure -> station 4
            (3, 1, 7),   # station 3: success -> station 4, failure -> station 2
            None,        # station 4: exit
        ),
    )


def testbed_models() -> InputModelSet:
    """True input distributions of the empirical testbed (d = 13)."""
    return InputModelSet(
        models=(
            Gamma(1.0, 0.25),
            Gamma(1.0, 0.2),
            Gamma(1.0, 0.2),
            Gamma(1.0, 0.2),
            Gamma(1.0, 0.2),
            Bernoulli(0.5),
            Bernoulli(0.5),
            Bernoulli(0.75),
        ),
        labels=("arrival", "s1", "s2", "s3", "s4", "p1", "p2", "p3"),
    )


@dataclass(frozen=True)
class SimProtocol:
    """Warm-up, measurement window, and loaded initial state."""

    warmup: float = 200.0
    run_length: float = 20.0
    initial_counts: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.warmup < 0 or self.run_length <= 0:
            raise ValueError("warmup must be >= 0 and run_length > 0")


def _moment_means(topology: NetworkTopology, x: np.ndarray, layout: Layout):
    blocks = unstack(x, layout)
    arr_mean = blocks[topology.arrival_process][0]
    svc_means = np.array([blocks[i][0] for i in topology.service_processes])
    route_p = {}
    for j, entry in enumerate(topology.routing):
        if entry is not None:
            route_p[j] = blocks[entry[2]][0]
    return arr_mean, svc_means, route_p


def routing_matrix(
    topology: NetworkTopology, x: np.ndarray, layout: Layout
) -> np.ndarray:
    """Station-to-station routing probabilities implied by the moment vector."""
    _, _, route_p = _moment_means(topology, x, layout)
    J = topology.n_stations
    R = np.zeros((J, J))
    for j, entry in enumerate(topology.routing):
        if entry is None:
            continue
        succ, fail, _ = entry
        p = route_p[j]
        if succ != EXIT:
            R[j, succ] += p
        if fail != EXIT:
            R[j, fail] += 1.0 - p
    return R


@dataclass(frozen=True)
class OracleResult:
    arrival_rates: np.ndarray
    utilizations: np.ndarray
    stable: bool
    expected_number: float | None


def jackson_oracle(
    topology: NetworkTopology, x: np.ndarray, layout: Layout
) -> OracleResult:
    """Steady-state expected number in system under exponential-equivalent rates.

    Solves the traffic equations lambda = a + R^T lambda with rates 1/mean;
    if every station has utilization below 1 the product-form total
    sum rho_i / (1 - rho_i) applies, otherwise the system is unstable.
    """
    arr_mean, svc_means, _ = _moment_means(topology, x, layout)
    J = topology.n_stations
    external = np.zeros(J)
    external[topology.arrival_station] = 1.0 / arr_mean
    R = routing_matrix(topology, x, layout)
    A = np.eye(J) - R.T
    try:
        lam = np.linalg.solve(A, external)
    except np.linalg.LinAlgError as exc:
        raise SingularTraffic("traffic equations are singular") from exc
    if not np.all(np.isfinite(lam)):
        raise SingularTraffic("traffic equations produced non-finite rates")
    rho = lam * svc_means
    stable = bool(np.all(rho < 1.0))
    expected = float(np.sum(rho / (1.0 - rho))) if stable else None
    return OracleResult(lam, rho, stable, expected)


def is_defined(topology: NetworkTopology, x: np.ndarray, layout: Layout) -> bool:
    """True iff the exit is reachable from the arrival station along routes
    that have strictly positive probability under x."""
    _, _, route_p = _moment_means(topology, x, layout)
    seen = {topology.arrival_station}
    frontier = [topology.arrival_station]
    while frontier:
        j = frontier.pop()
        entry = topology.routing[j]
        if entry is None:
            return True
        succ, fail, _ = entry
        p = route_p[j]
        for dest, prob in ((succ, p), (fail, 1.0 - p)):
            if prob <= 0.0:
                continue
            if dest == EXIT:
                return True
            if dest not in seen:
                seen.add(dest)
                frontier.append(dest)
    return False


def is_unstable(topology: NetworkTopology, x: np.ndarray, layout: Layout) -> bool:
    """True iff the traffic solve classifies some station at utilization >= 1."""
    return not jackson_oracle(topology, x, layout).stable


def loaded_start(topology: NetworkTopology, models: InputModelSet) -> tuple[int, ...]:
    """Per-station initial counts: rounded steady-state expected queue sizes."""
    oracle = jackson_oracle(topology, models.moment_vector(), models.layout)
    if not oracle.stable:
        raise ValueError("loaded start requires a stable configuration")
    rho = oracle.utilizations
    return tuple(int(np.rint(r / (1.0 - r))) for r in rho)


@njit(cache=True)
def _network_kernel(
    interarrivals,
    services,
    route_u,
    succ,
    fail,
    p,
    init_counts,
    arrival_station,
    warmup,
    run_length,
    trace_t,
    trace_station,
    trace_dest,
):
    """Event loop over pre-drawn variates.

    Returns (time-average count over the window, status, trace length) where
    status 0 is success and 1/2/3 flag exhaustion of the interarrival, service
    or routing buffer.  Ties are broken departures-first, then by station
    index.  Trace arrays with capacity 0 disable event recording; recorded
    destinations use -1 for the exit and -9 for an external arrival.
    """
    J = init_counts.shape[0]
    counts = init_counts.copy()
    svc_ptr = np.zeros(J, np.int64)
    route_ptr = np.zeros(J, np.int64)
    dep = np.full(J, np.inf)
    n_svc = services.shape[1]
    n_route = route_u.shape[1]
    trace_cap = trace_t.shape[0]
    n_trace = 0
    t = 0.0
    t_end = warmup + run_length
    total = 0
    for j in range(J):
        total += counts[j]
        if counts[j] > 0:
            if svc_ptr[j] >= n_svc:
                return 0.0, 2, n_trace
            dep[j] = t + services[j, svc_ptr[j]]
            svc_ptr[j] += 1
    if interarrivals.shape[0] == 0:
        next_arr = np.inf
        ia_ptr = 0
    else:
        next_arr = interarrivals[0]
        ia_ptr = 1
    area = 0.0
    while True:
        jmin = -1
        dep_min = np.inf
        for j in range(J):
            if dep[j] < dep_min:
                dep_min = dep[j]
                jmin = j
        te = dep_min if dep_min <= next_arr else next_arr
        lo = t if t > warmup else warmup
        hi = te if te < t_end else t_end
        if hi > lo:
            area += (hi - lo) * total
        if te >= t_end:
            return area / run_length, 0, n_trace
        t = te
        if dep_min <= next_arr:
            j = jmin
            counts[j] -= 1
            s = succ[j]
            if s == _NO_ROUTING:
                dest = EXIT
            else:
                if route_ptr[j] >= n_route:
                    return 0.0, 3, n_trace
                dest = s if route_u[j, route_ptr[j]] < p[j] else fail[j]
                route_ptr[j] += 1
            if n_trace < trace_cap:
                trace_t[n_trace] = t
                trace_station[n_trace] = j
                trace_dest[n_trace] = dest
                n_trace += 1
            if dest >= 0:
                counts[dest] += 1
                if counts[dest] == 1:
                    if svc_ptr[dest] >= n_svc:
                        return 0.0, 2, n_trace
                    dep[dest] = t + services[dest, svc_ptr[dest]]
                    svc_ptr[dest] += 1
            else:
                total -= 1
            if counts[j] > 0:
                if svc_ptr[j] >= n_svc:
                    return 0.0, 2, n_trace
                dep[j] = t + services[j, svc_ptr[j]]
                svc_ptr[j] += 1
            else:
                dep[j] = np.inf
        else:
            a = arrival_station
            counts[a] += 1
            total += 1
            if n_trace < trace_cap:
                trace_t[n_trace] = t
                trace_station[n_trace] = a
                trace_dest[n_trace] = -9
                n_trace += 1
            if counts[a] == 1:
                if svc_ptr[a] >= n_svc:
                    return 0.0, 2, n_trace
                dep[a] = t + services[a, svc_ptr[a]]
                svc_ptr[a] += 1
            if ia_ptr >= interarrivals.shape[0]:
                return 0.0, 1, n_trace
            next_arr = t + interarrivals[ia_ptr]
            ia_ptr += 1


def _routing_arrays(topology: NetworkTopology, models: InputModelSet):
    J = topology.n_stations
    succ = np.full(J, _NO_ROUTING, dtype=np.int64)
    fail = np.full(J, _NO_ROUTING, dtype=np.int64)
    p = np.zeros(J)
    for j, entry in enumerate(topology.routing):
        if entry is None:
            continue
        succ[j], fail[j] = entry[0], entry[1]
        p[j] = models.models[entry[2]].p
    return succ, fail, p


def simulate(
    topology: NetworkTopology,
    models: InputModelSet,
    protocol: SimProtocol,
    rng: np.random.Generator,
    trace_path=None,
) -> float:
    """One replication: the time-average number in system over the window."""
    horizon = protocol.warmup + protocol.run_length
    arr_model = models.models[topology.arrival_process]
    svc_models = [models.models[i] for i in topology.service_processes]
    succ, fail, p = _routing_arrays(topology, models)
    if protocol.initial_counts is not None:
        init = np.asarray(protocol.initial_counts, dtype=np.int64)
        if init.shape != (topology.n_stations,):
            raise ValueError("initial_counts must have one entry per station")
    else:
        init = np.zeros(topology.n_stations, dtype=np.int64)

    factor = _BUFFER_FACTOR
    for _ in range(_MAX_BUFFER_RETRIES):
        n_arr = int(horizon / arr_model.moments()[0] * factor) + _BUFFER_PAD
        n_svc = max(
            int(horizon / m.moments()[0] * factor) + _BUFFER_PAD for m in svc_models
        )
        interarrivals = arr_model.sample(n_arr, rng)
        services = np.empty((topology.n_stations, n_svc))
        for j, model in enumerate(svc_models):
            services[j] = model.sample(n_svc, rng)
        route_u = rng.random((topology.n_stations, n_svc))
        if trace_path is None:
            cap = 0
        else:
            cap = n_arr + topology.n_stations * n_svc
        trace_t = np.empty(cap)
        trace_station = np.empty(cap, dtype=np.int64)
        trace_dest = np.empty(cap, dtype=np.int64)
        y, status, n_trace = _network_kernel(
            interarrivals,
            services,
            route_u,
            succ,
            fail,
            p,
            init,
            topology.arrival_station,
            protocol.warmup,
            protocol.run_length,
            trace_t,
            trace_station,
            trace_dest,
        )
        if status == 0:
            if trace_path is not None:
                _write_trace(trace_path, trace_t, trace_station, trace_dest, n_trace)
            return float(y)
        factor *= 2.0
    raise RuntimeError("variate buffers exhausted repeatedly; runaway dynamics?")


def _write_trace(path, trace_t, trace_station, trace_dest, n_trace) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["time", "event", "station", "destination"])
        for i in range(n_trace):
            kind = "arrival" if trace_dest[i] == -9 else "departure"
            dest = "" if trace_dest[i] == -9 else int(trace_dest[i])
            writer.writerow([repr(float(trace_t[i])), kind, int(trace_station[i]), dest])


def replicate(
    topology: NetworkTopology,
    models: InputModelSet,
    protocol: SimProtocol,
    n: int,
    rng: np.random.Generator,
) -> tuple[float, float, int]:
    """n independent replications: sample mean, sample variance (ddof=1), n."""
    if n < 2:
        raise ValueError("at least 2 replications required")
    ys = np.array([simulate(topology, models, protocol, rng) for _ in range(n)])
    return float(ys.mean()), float(ys.var(ddof=1)), n
