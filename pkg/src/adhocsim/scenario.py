"""Scenario configuration, network assembly and single-run execution."""

from __future__ import annotations

import dataclasses
import itertools
from dataclasses import dataclass, field, fields

from .engine import Engine
from .mac import Mac, MacConfig, Medium, mac_preset
from .mobility import HighwayConfig, HighwayMobility, Mobility, RandomWaypoint, StaticPlacement
from .phy import NAKAGAMI, UNIT_DISK, ChannelModel, perfect_channel
from .routing import PROTOCOLS
from .traffic import CbrFlow, CbrSource, MetricsLedger, e2ed, nrl, spawn_flows, throughput

WAYPOINT = "waypoint"
HIGHWAY = "highway"
STATIC = "static"

# per-MAC defaults: 802.11 -> MANET, 802.11p -> VANET
MAC_DEFAULTS = {
    "80211": {"mobility": WAYPOINT, "range": 250.0, "nakagami_m": 1.0},
    "80211p": {"mobility": HIGHWAY, "range": 300.0, "nakagami_m": 3.0},
}

CSV_HEADER = ("scenario_id,protocol,mac,nodes,speed_mps,seed,sim_time_s,"
              "data_sent,data_delivered,pdr,throughput_bps,e2ed_ms,nrl")


class ConfigError(ValueError):
    """Invalid scenario configuration; ``field`` names the offending key."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass
class ScenarioConfig:
    protocol: str = "aodv"
    mac: str = "80211"
    nodes: int = 25
    speed: float = 2.0
    sim_time: float = 900.0
    seed: int = 1
    flows: int = 10
    mobility: str | None = None
    warmup: float = 50.0
    packet_size: int = 512
    packet_interval: float = 0.03
    flow_start_window: float = 10.0
    field_width: float = 1000.0
    field_height: float = 1000.0
    pause: float = 0.0
    road_length: float = 1000.0
    lanes_per_direction: int = 2
    speed_jitter: float = 0.0
    propagation: str = NAKAGAMI
    range: float | None = None
    nakagami_m: float | None = None
    path_loss: float = 2.0
    data_rate: float = 2_000_000.0
    collisions: bool = True
    geometry_step: float = 0.1
    overrides: dict = field(default_factory=dict)

    def validate(self) -> ScenarioConfig:
        if self.protocol not in PROTOCOLS:
            raise ConfigError("protocol", f"unknown protocol {self.protocol!r}")
        if self.mac not in MAC_DEFAULTS:
            raise ConfigError("mac", f"unknown MAC preset {self.mac!r}")
        if self.nodes < 2:
            raise ConfigError("nodes", "need at least 2 nodes")
        if not self.speed > 0:
            raise ConfigError("speed", "speed must be positive")
        if self.warmup < 0:
            raise ConfigError("warmup", "warm-up must be non-negative")
        if not self.sim_time > self.warmup:
            raise ConfigError("sim_time", "sim_time must exceed the warm-up period")
        if self.seed < 0 or self.seed >= 2 ** 64:
            raise ConfigError("seed", "seed must be a 64-bit unsigned integer")
        if self.flows < 0 or self.flows > self.nodes * (self.nodes - 1):
            raise ConfigError("flows", f"cannot place {self.flows} flows on {self.nodes} nodes")
        if self.resolved_mobility not in (WAYPOINT, HIGHWAY, STATIC):
            raise ConfigError("mobility", f"unknown mobility model {self.mobility!r}")
        if self.propagation not in (UNIT_DISK, NAKAGAMI):
            raise ConfigError("propagation", f"unknown propagation model {self.propagation!r}")
        if self.packet_size <= 0:
            raise ConfigError("packet_size", "must be positive")
        if self.packet_interval <= 0:
            raise ConfigError("packet_interval", "must be positive")
        if self.geometry_step < 0:
            raise ConfigError("geometry_step", "must be non-negative")
        for key, value in (("range", self.range), ("nakagami_m", self.nakagami_m)):
            if value is not None and value <= 0:
                raise ConfigError(key, "must be positive")
        for key in self.overrides:
            scope, _, name = key.partition(".")
            if scope not in ("aodv", "dsr", "fsr", "mac"):
                raise ConfigError(key, "unknown override scope")
            try:
                self._override_target(scope, name)
            except KeyError:
                raise ConfigError(key, "unknown parameter") from None
        try:
            self.channel_model()
            self.mac_config()
            self.protocol_config()
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError("overrides", str(exc)) from None
        return self

    # -- derived components --------------------------------------------------
    @property
    def resolved_mobility(self) -> str:
        return self.mobility or MAC_DEFAULTS[self.mac]["mobility"]

    @property
    def scenario_id(self) -> str:
        return f"{self.protocol}-{self.mac}-n{self.nodes}-v{self.speed:g}-s{self.seed}"

    def channel_model(self) -> ChannelModel:
        d = MAC_DEFAULTS[self.mac]
        return ChannelModel(
            propagation=self.propagation,
            range=self.range if self.range is not None else d["range"],
            m=self.nakagami_m if self.nakagami_m is not None else d["nakagami_m"],
            path_loss=self.path_loss,
            data_rate=self.data_rate,
            collisions=self.collisions,
        )

    def _override_target(self, scope: str, name: str):
        if scope == "mac":
            base = mac_preset(self.mac)
        else:
            family = self.protocol.removeprefix("mod-")
            base = PROTOCOLS[self.protocol][1] if family == scope else PROTOCOLS[scope][1]
        ftypes = {f.name: f.type for f in fields(base)}
        if name not in ftypes:
            raise KeyError(name)
        return base, ftypes[name]

    def _apply(self, scope: str, base):
        changes = {}
        for key, raw in self.overrides.items():
            sc, _, name = key.partition(".")
            if sc != scope:
                continue
            _, ftype = self._override_target(sc, name)
            changes[name] = _coerce(ftype, raw, key)
        return dataclasses.replace(base, **changes) if changes else base

    def mac_config(self) -> MacConfig:
        return self._apply("mac", mac_preset(self.mac))

    def protocol_config(self):
        family = self.protocol.removeprefix("mod-")
        return self._apply(family, PROTOCOLS[self.protocol][1])

    # -- config file -----------------------------------------------------------
    def to_text(self) -> str:
        lines = [f"# scenario {self.scenario_id}"]
        for f in fields(self):
            if f.name == "overrides":
                continue
            lines.append(f"{f.name} = {_fmt(getattr(self, f.name))}")
        for key in sorted(self.overrides):
            lines.append(f"{key} = {self.overrides[key]}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> ScenarioConfig:
        return cls.from_mapping(parse_kv(text))

    @classmethod
    def from_mapping(cls, mapping: dict[str, str]) -> ScenarioConfig:
        types = {f.name: f.type for f in fields(cls) if f.name != "overrides"}
        kwargs, overrides = {}, {}
        for key, raw in mapping.items():
            if "." in key:
                overrides[key] = str(raw).strip()
            elif key in types:
                kwargs[key] = _coerce(types[key], raw, key)
            else:
                raise ConfigError(key, "unknown configuration key")
        return cls(**kwargs, overrides=overrides)


def parse_kv(text: str) -> dict[str, str]:
    """Parse flat ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", f"expected 'key = value', got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}", "empty key")
        out[key] = value
    return out


def _fmt(value) -> str:
    if value is None:
        return "auto"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _coerce(ftype, raw, key: str):
    if not isinstance(raw, str):
        return raw
    text = raw.strip()
    t = ftype if isinstance(ftype, str) else getattr(ftype, "__name__", str(ftype))
    optional = "None" in t
    if optional and text.lower() in ("auto", "none", ""):
        return None
    try:
        if t.startswith("bool"):
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if t.startswith("int"):
            return int(text)
        if t.startswith("float"):
            return float(text)
        return text
    except ValueError:
        raise ConfigError(key, f"cannot parse {raw!r} as {t}") from None


@dataclass
class ResultRow:
    scenario_id: str
    protocol: str
    mac: str
    nodes: int
    speed_mps: float
    seed: int
    sim_time_s: float
    data_sent: int | None = None
    data_delivered: int | None = None
    pdr: float | None = None
    throughput_bps: float | None = None
    e2ed_ms: float | None = None
    nrl: float | None = None
    status: str = "ok"

    def csv_fields(self) -> list[str]:
        vals = [self.scenario_id, self.protocol, self.mac, self.nodes, self.speed_mps, self.seed,
                self.sim_time_s, self.data_sent, self.data_delivered, self.pdr,
                self.throughput_bps, self.e2ed_ms, self.nrl]
        return ["" if v is None else (repr(v) if isinstance(v, float) else str(v)) for v in vals]

    @property
    def sort_key(self):
        return (self.protocol, self.mac, self.nodes, self.speed_mps, self.seed)


class Network:
    """Engine, mobility, medium, MACs, routing agents and traffic for one run."""

    def __init__(self, engine: Engine, mobility: Mobility, channel: ChannelModel,
                 mac_config: MacConfig, protocol: str, protocol_config=None,
                 ledger: MetricsLedger | None = None, geometry_step: float = 0.1):
        self.engine = engine
        self.mobility = mobility
        self.channel = channel
        self.ledger = ledger or MetricsLedger()
        self.protocol = protocol
        agent_cls, preset = PROTOCOLS[protocol]
        self.protocol_config = protocol_config or preset
        self.medium = Medium(engine, mobility, channel, engine.stream("channel"),
                             on_control_tx=lambda: self.ledger.record_control(engine.now),
                             geometry_step=geometry_step)
        n = mobility.n
        self.macs = [Mac(i, engine, self.medium, mac_config, engine.node_stream("mac", i))
                     for i in range(n)]
        self.agents = [agent_cls(i, engine, self.macs[i], self.ledger,
                                 engine.node_stream("routing", i), self.protocol_config)
                       for i in range(n)]
        self.sources: list[CbrSource] = []
        self._uids = itertools.count()
        self._started = False

    def add_flow(self, flow: CbrFlow) -> CbrSource:
        src = CbrSource(self.engine, flow, len(self.sources), self.agents[flow.src],
                        self.ledger, self._uids)
        self.sources.append(src)
        if self._started:
            src.start()
        return src

    def start(self) -> None:
        if self._started:
            return
        self._started = True
        for a in self.agents:
            a.start()
        for s in self.sources:
            s.start()

    def run(self, t_end: float) -> int:
        self.start()
        return self.engine.run_until(t_end)


def build_mobility(config: ScenarioConfig, engine: Engine) -> Mobility:
    n = config.nodes
    kind = config.resolved_mobility
    if kind == WAYPOINT:
        streams = [engine.node_stream("mobility", i) for i in range(n)]
        return RandomWaypoint(n, config.field_width, config.field_height, config.speed,
                              streams, pause=config.pause)
    if kind == HIGHWAY:
        lanes = 2 * config.lanes_per_direction
        # arrival rate giving the same per-lane density as the fixed population
        lam = (n / lanes) * config.speed / config.road_length
        hw = HighwayConfig(road_length=config.road_length,
                           lanes_per_direction=config.lanes_per_direction,
                           arrival_rate=lam, speed=config.speed, speed_jitter=config.speed_jitter)
        streams = [engine.node_stream("mobility", i) for i in range(n)]
        return HighwayMobility(n, hw, streams)
    rng = engine.stream("topology")
    coords = [(rng.uniform(0, config.field_width), rng.uniform(0, config.field_height))
              for _ in range(n)]
    return StaticPlacement(coords)


def build_network(config: ScenarioConfig, trace: bool = False) -> Network:
    config.validate()
    engine = Engine(config.seed, trace=trace)
    mobility = build_mobility(config, engine)
    ledger = MetricsLedger(warmup=config.warmup)
    net = Network(engine, mobility, config.channel_model(), config.mac_config(),
                  config.protocol, config.protocol_config(), ledger,
                  geometry_step=config.geometry_step)
    for f in spawn_flows(config.flows, range(config.nodes), engine.stream("traffic"),
                         start_window=config.flow_start_window, interval=config.packet_interval,
                         payload=config.packet_size, stop=config.sim_time):
        net.add_flow(f)
    return net


def static_network(coords, protocol: str, protocol_config=None, channel: ChannelModel | None = None,
                   seed: int = 1, mac: str = "80211", warmup: float = 0.0,
                   geometry_step: float = 0.0) -> Network:
    """Network over fixed node positions, perfect unit-disk channel by default."""
    engine = Engine(seed)
    return Network(engine, StaticPlacement(coords), channel or perfect_channel(),
                   mac_preset(mac), protocol, protocol_config, MetricsLedger(warmup=warmup),
                   geometry_step=geometry_step)


def row_from_ledger(config: ScenarioConfig, ledger: MetricsLedger) -> ResultRow:
    sent, delivered = ledger.data_sent, ledger.data_delivered
    return ResultRow(
        scenario_id=config.scenario_id,
        protocol=config.protocol,
        mac=config.mac,
        nodes=config.nodes,
        speed_mps=float(config.speed),
        seed=config.seed,
        sim_time_s=float(config.sim_time),
        data_sent=sent,
        data_delivered=delivered,
        pdr=(delivered / sent) if sent else None,
        throughput_bps=throughput(ledger, config.sim_time - config.warmup),
        e2ed_ms=e2ed(ledger),
        nrl=nrl(ledger),
    )


def simulate(config: ScenarioConfig, trace: bool = False) -> tuple[ResultRow, Network]:
    net = build_network(config, trace=trace)
    net.run(config.sim_time)
    return row_from_ledger(config, net.ledger), net


def run_scenario(config: ScenarioConfig) -> ResultRow:
    return simulate(config)[0]


def audit(config: ScenarioConfig, row: ResultRow, dump: dict) -> bool:
    """Recompute a row's metrics from a ledger dump and compare exactly."""
    lat = dump["latencies"]
    duration = config.sim_time - config.warmup
    sent, delivered = dump["data_sent"], dump["data_delivered"]
    checks = [
        row.data_sent == sent,
        row.data_delivered == delivered,
        row.pdr == ((delivered / sent) if sent else None),
        row.throughput_bps == dump["delivered_bytes"] * 8 / duration,
        row.e2ed_ms == (1000.0 * sum(d - s for _, s, d in lat) / len(lat) if lat else None),
        row.nrl == (dump["control_tx"] / delivered if delivered else None),
    ]
    return all(checks)

