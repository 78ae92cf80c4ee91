"""Declarative experiment configuration (TOML) and its schema validation.

Stations in the config file are 1-based; destination 0 means the exit.
"""
from __future__ import annotations

import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import sk, uq
from .errors import ConfigError
from .harness import ExperimentGrid
from .input_models import (
    Bernoulli,
    Gamma,
    InputModelSet,
    RealWorldDataset,
    sample_dataset,
)
from .queueing import EXIT, NetworkTopology, SimProtocol, loaded_start

_TOP_KEYS = {
    "seed",
    "out_dir",
    "workers",
    "process",
    "topology",
    "protocol",
    "uq",
    "grid",
    "sensitivity",
}
_PROCESS_KEYS = {"label", "family", "shape", "scale", "p", "m", "data_file"}
_TOPOLOGY_KEYS = {"stations", "arrival_station", "arrival_process", "service_processes", "route"}
_ROUTE_KEYS = {"station", "on_success", "on_failure", "process"}
_PROTOCOL_KEYS = {"warmup", "run_length", "loaded_start", "initial_counts"}
_UQ_KEYS = {"alpha", "B", "q", "k", "N", "reject_undefined", "sk_starts"}
_GRID_KEYS = {"m", "k", "n", "R", "B"}
_SENSITIVITY_KEYS = {"m", "k", "n", "R"}


def _check_keys(table: dict, allowed: set, where: str) -> None:
    unknown = set(table) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {sorted(unknown)}")


@dataclass
class RunConfig:
    """Fully validated experiment configuration."""

    models: InputModelSet
    m_sizes: tuple[int, ...]
    data_files: tuple[str | None, ...]
    topology: NetworkTopology
    protocol: SimProtocol
    uq: uq.UQConfig
    grid: ExperimentGrid
    sensitivity_cell: tuple[int, int, int]
    sensitivity_R: int
    seed: int
    out_dir: Path
    workers: int

    def dataset(self, rng: np.random.Generator) -> RealWorldDataset:
        """Real-world data: from files when given, otherwise synthetic."""
        if any(f is not None for f in self.data_files):
            if not all(f is not None for f in self.data_files):
                raise ConfigError("either all processes or none must have data_file")
            samples = tuple(
                np.loadtxt(f, ndmin=1, dtype=float) for f in self.data_files
            )
            return RealWorldDataset(samples, self.models.layout)
        return sample_dataset(self.models, self.m_sizes, rng)


def _parse_process(table: dict, index: int):
    where = f"process #{index + 1}"
    _check_keys(table, _PROCESS_KEYS, where)
    try:
        label = table["label"]
        family = table["family"]
        m = int(table.get("m", 0))
        if family == "gamma":
            model = Gamma(float(table["shape"]), float(table["scale"]))
        elif family == "bernoulli":
            model = Bernoulli(float(table["p"]))
        else:
            raise ConfigError(f"{where}: unknown family {family!r}")
    except KeyError as exc:
        raise ConfigError(f"{where}: missing key {exc}") from None
    return label, model, m, table.get("data_file")


def _station_index(value: int, where: str, n_stations: int) -> int:
    if value == 0:
        return EXIT
    if not 1 <= value <= n_stations:
        raise ConfigError(f"{where}: station {value} out of range 1..{n_stations}")
    return value - 1


def _parse_topology(table: dict, labels: tuple[str, ...]) -> NetworkTopology:
    _check_keys(table, _TOPOLOGY_KEYS, "topology")

    def process_index(name: str, where: str) -> int:
        try:
            return labels.index(name)
        except ValueError:
            raise ConfigError(f"{where}: unknown process label {name!r}") from None

    try:
        n_stations = int(table["stations"])
        arrival_station = int(table["arrival_station"])
        arrival_process = process_index(table["arrival_process"], "topology")
        services = tuple(
            process_index(name, "topology.service_processes")
            for name in table["service_processes"]
        )
    except KeyError as exc:
        raise ConfigError(f"topology: missing key {exc}") from None
    routing: list = [None] * n_stations
    for i, route in enumerate(table.get("route", [])):
        where = f"topology.route #{i + 1}"
        _check_keys(route, _ROUTE_KEYS, where)
        try:
            station = route["station"]
            if not 1 <= station <= n_stations:
                raise ConfigError(f"{where}: station {station} out of range")
            routing[station - 1] = (
                _station_index(int(route["on_success"]), where, n_stations),
                _station_index(int(route["on_failure"]), where, n_stations),
                process_index(route["process"], where),
            )
        except KeyError as exc:
            raise ConfigError(f"{where}: missing key {exc}") from None
    try:
        return NetworkTopology(
            n_stations=n_stations,
            arrival_station=_station_index(arrival_station, "topology", n_stations),
            arrival_process=arrival_process,
            service_processes=services,
            routing=tuple(routing),
        )
    except ValueError as exc:
        raise ConfigError(f"topology: {exc}") from None


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML in {path}: {exc}") from None
    _check_keys(raw, _TOP_KEYS, "top level")

    processes = raw.get("process", [])
    if not processes:
        raise ConfigError("at least one [[process]] block is required")
    parsed = [_parse_process(t, i) for i, t in enumerate(processes)]
    labels = tuple(p[0] for p in parsed)
    if len(set(labels)) != len(labels):
        raise ConfigError("process labels must be unique")
    models = InputModelSet(tuple(p[1] for p in parsed), labels)
    m_sizes = tuple(p[2] for p in parsed)
    data_files = tuple(p[3] for p in parsed)

    if "topology" not in raw:
        raise ConfigError("a [topology] table is required")
    topology = _parse_topology(raw["topology"], labels)

    proto_table = raw.get("protocol", {})
    _check_keys(proto_table, _PROTOCOL_KEYS, "protocol")
    initial_counts = proto_table.get("initial_counts")
    if initial_counts is None and proto_table.get("loaded_start", True):
        try:
            initial_counts = loaded_start(topology, models)
        except ValueError:
            initial_counts = None  # unstable truth: no steady state to load
    protocol = SimProtocol(
        warmup=float(proto_table.get("warmup", 200.0)),
        run_length=float(proto_table.get("run_length", 20.0)),
        initial_counts=tuple(initial_counts) if initial_counts is not None else None,
    )

    uq_table = raw.get("uq", {})
    _check_keys(uq_table, _UQ_KEYS, "uq")
    try:
        uq_config = uq.UQConfig(
            alpha=float(uq_table.get("alpha", 0.05)),
            B=int(uq_table.get("B", 2000)),
            q=float(uq_table.get("q", 0.99)),
            k=int(uq_table.get("k", 20)),
            N=int(uq_table.get("N", 200)),
            reject_undefined=bool(uq_table.get("reject_undefined", True)),
            seed=int(raw.get("seed", 0)),
            sk_fit=sk.SKFitConfig(n_starts=int(uq_table.get("sk_starts", 10))),
        )
    except ValueError as exc:
        raise ConfigError(f"uq: {exc}") from None

    grid_table = raw.get("grid", {})
    _check_keys(grid_table, _GRID_KEYS, "grid")
    grid = ExperimentGrid(
        m_levels=tuple(int(v) for v in grid_table.get("m", (50, 500, 5000))),
        k_levels=tuple(int(v) for v in grid_table.get("k", (20, 40, 80, 130))),
        n_levels=tuple(int(v) for v in grid_table.get("n", (10, 50, 100))),
        R=int(grid_table.get("R", 1000)),
        base_seed=int(raw.get("seed", 0)),
    )

    sens_table = raw.get("sensitivity", {})
    _check_keys(sens_table, _SENSITIVITY_KEYS, "sensitivity")
    cell = (
        int(sens_table.get("m", 500)),
        int(sens_table.get("k", 40)),
        int(sens_table.get("n", 50)),
    )

    return RunConfig(
        models=models,
        m_sizes=m_sizes,
        data_files=data_files,
        topology=topology,
        protocol=protocol,
        uq=uq_config,
        grid=grid,
        sensitivity_cell=cell,
        sensitivity_R=int(sens_table.get("R", 1000)),
        seed=int(raw.get("seed", 0)),
        out_dir=Path(raw.get("out_dir", ".")),
        workers=int(raw.get("workers", 1)),
    )
