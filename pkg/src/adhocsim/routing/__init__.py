from .aodv import AODV_PRESETS, AodvAgent, AodvConfig, next_ttl, ring_sequence
from .base import RoutingAgent, SendBuffer
from .dsr import DSR_PRESETS, DsrAgent, DsrConfig, RouteCache
from .fsr import FSR_PRESETS, FsrAgent, FsrConfig

PROTOCOLS = {
    "aodv": (AodvAgent, AODV_PRESETS["aodv"]),
    "mod-aodv": (AodvAgent, AODV_PRESETS["mod-aodv"]),
    "dsr": (DsrAgent, DSR_PRESETS["dsr"]),
    "mod-dsr": (DsrAgent, DSR_PRESETS["mod-dsr"]),
    "fsr": (FsrAgent, FSR_PRESETS["fsr"]),
    "mod-fsr": (FsrAgent, FSR_PRESETS["mod-fsr"]),
}

__all__ = [
    "PROTOCOLS", "RoutingAgent", "SendBuffer",
    "AodvAgent", "AodvConfig", "next_ttl", "ring_sequence",
    "DsrAgent", "DsrConfig", "RouteCache",
    "FsrAgent", "FsrConfig",
]
