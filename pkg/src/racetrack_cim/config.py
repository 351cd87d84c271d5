"""Device geometry configuration.

Geometry is read from a JSON object validated against :data:`DEVICE_SCHEMA`::

    {
      "domains_per_wire": 32,      # D, data domains per nanowire: 16, 32 or 64
      "trd": 7,                    # transverse-read distance (domains, inclusive of both APs)
      "row_bits": 512,             # nanowires per DBC (tile width)
      "tile_rows": 512,            # tile height, in rows
      "dbcs_per_subarray": 16,
      "overhead_domains": null     # per end; null selects D - 1
    }

Any key may be overridden from the environment with ``RTCIM_<KEY>`` (upper
case), e.g. ``RTCIM_DOMAINS_PER_WIRE=64``.
"""
from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import jsonschema

ENV_PREFIX = "RTCIM_"

DEVICE_SCHEMA = {
    "type": "object",
    "properties": {
        "domains_per_wire": {"enum": [16, 32, 64]},
        "trd": {"type": "integer", "minimum": 2, "maximum": 7},
        "row_bits": {"const": 512},
        "tile_rows": {"type": "integer", "minimum": 1},
        "dbcs_per_subarray": {"type": "integer", "minimum": 1},
        "overhead_domains": {"type": ["integer", "null"], "minimum": 0},
    },
    "additionalProperties": False,
}


@dataclass(frozen=True)
class DeviceConfig:
    domains_per_wire: int = 32
    trd: int = 7
    row_bits: int = 512
    tile_rows: int = 512
    dbcs_per_subarray: int = 16
    overhead_domains: int | None = None

    def __post_init__(self):
        jsonschema.validate(asdict(self), DEVICE_SCHEMA)
        if self.trd > self.domains_per_wire:
            raise ValueError("trd cannot exceed the number of data domains")

    @property
    def overhead(self) -> int:
        if self.overhead_domains is None:
            return self.domains_per_wire - 1
        return self.overhead_domains

    @classmethod
    def from_dict(cls, data: dict) -> "DeviceConfig":
        jsonschema.validate(data, DEVICE_SCHEMA)
        return cls(**data)

    def to_dict(self) -> dict:
        return asdict(self)


def _env_overrides(environ) -> dict:
    out = {}
    for f in fields(DeviceConfig):
        raw = environ.get(ENV_PREFIX + f.name.upper())
        if raw is not None:
            out[f.name] = None if raw.lower() == "null" else int(raw)
    return out


def load_config(path: str | os.PathLike | None = None, environ=None) -> DeviceConfig:
    """Load a :class:`DeviceConfig` from JSON (or defaults), then apply env overrides."""
    data: dict = {}
    if path is not None:
        data = json.loads(Path(path).read_text())
        jsonschema.validate(data, DEVICE_SCHEMA)
    data.update(_env_overrides(os.environ if environ is None else environ))
    return DeviceConfig.from_dict(data)
