"""Scenario parameters, policy names and the configuration error type."""

from __future__ import annotations

import enum
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Any, Mapping


class ConfigError(ValueError):
    """Raised for any invalid or infeasible scenario parameterisation."""


class RoutingPolicy(str, enum.Enum):
    PRP = "PRP"
    NRRP = "NRRP"
    MDRON = "MDRON"
    MDRWON = "MDRWON"

    @property
    def no_revisit(self) -> bool:
        return self in (RoutingPolicy.NRRP, RoutingPolicy.MDRWON)

    @property
    def multi_domain(self) -> bool:
        return self in (RoutingPolicy.MDRON, RoutingPolicy.MDRWON)

    @classmethod
    def parse(cls, value: "str | RoutingPolicy") -> "RoutingPolicy":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().upper())
        except ValueError:
            raise ConfigError(f"unknown routing policy {value!r}") from None


ALL_POLICIES: tuple[RoutingPolicy, ...] = tuple(RoutingPolicy)


@dataclass(frozen=True)
class CodingParams:
    """Share-split parameters: ``n`` shares per message, any ``k`` reconstruct."""

    n: int = 4
    k: int = 3

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ConfigError(f"n must be >= 1, got {self.n}")
        if not 1 <= self.k <= self.n:
            raise ConfigError(f"need 1 <= k <= n, got n={self.n}, k={self.k}")

    @classmethod
    def parse(cls, text: str) -> "CodingParams":
        try:
            n, k = (int(part) for part in text.split(":"))
        except ValueError:
            raise ConfigError(f"shares must look like n:k, got {text!r}") from None
        return cls(n, k)

    def __str__(self) -> str:
        return f"{self.n}:{self.k}"


@dataclass(frozen=True)
class ScenarioConfig:
    """Full parameterisation of one experiment cell.

    Defaults reproduce the reference setup: 250 nodes on a 100 m x 100 m
    field, 50 m radio range, four domains, 50 runs of 1500 one-second rounds.
    A period of ``0`` disables elections or reshuffles after setup.
    """

    num_nodes: int = 250
    area: tuple[float, float] = (100.0, 100.0)
    range: float = 50.0
    num_domains: int = 4
    policy: RoutingPolicy = RoutingPolicy.MDRWON
    coding: CodingParams = field(default_factory=CodingParams)
    counter: int = 10
    compromise_fraction: float = 0.0
    election_period: int = 5
    reshuffle_period: int = 10
    messages_per_run: int = 100
    runs: int = 50
    sim_rounds: int = 1500
    seed: int = 0
    strict_special_links: bool = False
    battery_range: tuple[int, int] = (100, 1000)
    payload_units: float = 1.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "policy", RoutingPolicy.parse(self.policy))
        object.__setattr__(self, "area", (float(self.area[0]), float(self.area[1])))
        self.validate()

    def validate(self) -> None:
        w, h = self.area
        if not (w > 0 and h > 0):
            raise ConfigError(f"area must have positive width and height, got {w}x{h}")
        if self.num_nodes < 2:
            raise ConfigError(f"need at least 2 nodes to route, got {self.num_nodes}")
        if self.range <= 0:
            raise ConfigError(f"range must be positive, got {self.range}")
        if self.num_domains < 2:
            raise ConfigError(f"need at least 2 domains, got {self.num_domains}")
        if self.counter < 0:
            raise ConfigError(f"counter must be >= 0, got {self.counter}")
        if not 0.0 <= self.compromise_fraction <= 1.0:
            raise ConfigError(f"compromise fraction outside [0, 1]: {self.compromise_fraction}")
        for name in ("election_period", "reshuffle_period", "messages_per_run"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if self.runs < 1 or self.sim_rounds < 1:
            raise ConfigError("runs and sim_rounds must be positive")
        lo, hi = self.battery_range
        if not 0 <= lo <= hi:
            raise ConfigError(f"bad battery range {self.battery_range}")

    def with_(self, **changes: Any) -> "ScenarioConfig":
        return replace(self, **changes)

    def to_flat(self) -> dict[str, Any]:
        """Flat key/value form mirroring the field names (used for config files)."""
        out = asdict(self)
        out["policy"] = self.policy.value
        out["coding"] = str(self.coding)
        out["area"] = f"{self.area[0]:g}x{self.area[1]:g}"
        out["battery_range"] = f"{self.battery_range[0]}:{self.battery_range[1]}"
        return out

    @classmethod
    def from_flat(cls, values: Mapping[str, Any], base: "ScenarioConfig | None" = None) -> "ScenarioConfig":
        base = base or cls()
        known = {f.name for f in fields(cls)}
        unknown = set(values) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        changes: dict[str, Any] = {}
        for key, raw in values.items():
            changes[key] = _coerce(key, raw, getattr(base, key))
        return replace(base, **changes)


def parse_area(text: str) -> tuple[float, float]:
    try:
        w, h = text.lower().split("x")
        return float(w), float(h)
    except ValueError:
        raise ConfigError(f"area must look like WxH, got {text!r}") from None


def _coerce(key: str, raw: Any, current: Any) -> Any:
    if key == "policy":
        return RoutingPolicy.parse(raw)
    if key == "coding":
        return raw if isinstance(raw, CodingParams) else CodingParams.parse(str(raw))
    if key == "area":
        return tuple(raw) if isinstance(raw, (list, tuple)) else parse_area(str(raw))
    if key == "battery_range":
        if isinstance(raw, (list, tuple)):
            return (int(raw[0]), int(raw[1]))
        lo, hi = str(raw).split(":")
        return (int(lo), int(hi))
    if isinstance(current, bool):
        if isinstance(raw, str):
            return raw.strip().lower() in ("1", "true", "yes", "on")
        return bool(raw)
    try:
        return type(current)(raw)
    except (TypeError, ValueError):
        raise ConfigError(f"bad value for {key}: {raw!r}") from None
