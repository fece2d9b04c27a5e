"""Object facts and the data providers that supply them.

When a new object enters the task, its state variables (opening windows,
visit duration, movement durations) are instantiated from a provider. The
file-backed provider is authoritative in tests; an HTTP provider sharing the
same document schema is available for live deployments, and scenario events
may inline facts for self-contained runs.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Protocol

import requests

from opportune.errors import ProviderError
from opportune.task_model import Atom, parse_atom

WALKING_KMH = 5.0


@dataclass(frozen=True)
class ObjectFacts:
    object_id: str
    lat: float | None = None
    lon: float | None = None
    open_windows: tuple[tuple[int, int], ...] = ()
    visit_duration: int | None = None
    extra_atoms: tuple[Atom, ...] = ()
    walking_minutes: Mapping[str, int] = field(default_factory=dict)

    def __post_init__(self):
        for start, end in self.open_windows:
            if end <= start:
                raise ProviderError(
                    f"{self.object_id}: open window [{start}, {end}] is not well-ordered"
                )
        if self.visit_duration is not None and self.visit_duration <= 0:
            raise ProviderError(f"{self.object_id}: visit duration must be positive")

    @property
    def coordinates(self) -> tuple[float, float] | None:
        if self.lat is None or self.lon is None:
            return None
        return (self.lat, self.lon)


def facts_from_dict(object_id: str, data: dict) -> ObjectFacts:
    try:
        return ObjectFacts(
            object_id=object_id,
            lat=data.get("lat"),
            lon=data.get("lon"),
            open_windows=tuple((int(s), int(e)) for s, e in data.get("open", ())),
            visit_duration=data.get("visit_duration"),
            extra_atoms=tuple(parse_atom(a) for a in data.get("extra", ())),
            walking_minutes={k: int(v) for k, v in data.get("walking_minutes", {}).items()},
        )
    except (TypeError, ValueError) as exc:
        raise ProviderError(f"malformed facts for {object_id!r}: {exc}") from None


class DataProvider(Protocol):
    def facts(self, object_id: str) -> ObjectFacts | None: ...


class StaticProvider:
    """Facts held in memory (scenario payloads, tests)."""

    def __init__(self, facts: Mapping[str, ObjectFacts]):
        self._facts = dict(facts)

    def facts(self, object_id: str) -> ObjectFacts | None:
        return self._facts.get(object_id)


class FileProvider:
    """JSON document mapping object-id to its facts."""

    def __init__(self, path: str | Path):
        path = Path(path)
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except OSError as exc:
            raise ProviderError(f"cannot read provider file {path}: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ProviderError(f"{path}: invalid JSON ({exc})") from None
        if not isinstance(data, dict):
            raise ProviderError(f"{path}: expected an object map at top level")
        self._facts = {
            object_id: facts_from_dict(object_id, entry)
            for object_id, entry in data.items()
        }

    def facts(self, object_id: str) -> ObjectFacts | None:
        return self._facts.get(object_id)


class HttpProvider:
    """GET <base>/objects/<id> returning one facts document."""

    def __init__(self, endpoint: str, timeout: float = 5.0):
        self.endpoint = endpoint.rstrip("/")
        self.timeout = timeout

    def facts(self, object_id: str) -> ObjectFacts | None:
        try:
            response = requests.get(
                f"{self.endpoint}/objects/{object_id}", timeout=self.timeout
            )
            if response.status_code == 404:
                return None
            response.raise_for_status()
            return facts_from_dict(object_id, response.json())
        except (requests.RequestException, json.JSONDecodeError, ValueError) as exc:
            raise ProviderError(f"provider lookup of {object_id!r} failed: {exc}") from None


class LayeredProvider:
    """First provider with an answer wins (inline scenario facts, then files)."""

    def __init__(self, *providers: DataProvider):
        self.providers = [p for p in providers if p is not None]

    def facts(self, object_id: str) -> ObjectFacts | None:
        for provider in self.providers:
            found = provider.facts(object_id)
            if found is not None:
                return found
        return None


def haversine_km(a: tuple[float, float], b: tuple[float, float]) -> float:
    lat1, lon1 = map(math.radians, a)
    lat2, lon2 = map(math.radians, b)
    dlat = lat2 - lat1
    dlon = lon2 - lon1
    h = math.sin(dlat / 2) ** 2 + math.cos(lat1) * math.cos(lat2) * math.sin(dlon / 2) ** 2
    return 2 * 6371.0 * math.asin(math.sqrt(h))


def walking_minutes(a: tuple[float, float], b: tuple[float, float]) -> int:
    """Walking duration between coordinates at 5 km/h, whole minutes, rounded up."""
    return math.ceil(haversine_km(a, b) / WALKING_KMH * 60.0)
