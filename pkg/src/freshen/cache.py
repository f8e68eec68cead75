"""Runtime-local cache of prefetched data with TTL expiry."""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Any, Hashable


class _Miss:
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "MISS"

    def __bool__(self):
        return False


MISS = _Miss()


@dataclass(frozen=True)
class CacheRecord:
    key: Hashable
    value: Any
    fetched_at: float
    ttl: float
    version: int

    def fresh(self, now: float) -> bool:
        return now - self.fetched_at <= self.ttl


@dataclass
class CacheStats:
    hits: int = 0
    misses: int = 0
    upstream_fetches: int = 0


class FreshenCache:
    """TTL-only map; no capacity bound.

    Records are immutable and swapped under a lock, so a reader sees either
    the previous record or the new one in full.
    """

    def __init__(self):
        self._records: dict[Hashable, CacheRecord] = {}
        self._versions: dict[Hashable, int] = {}
        self._lock = threading.Lock()
        self.stats = CacheStats()

    def get(self, key: Hashable, now: float) -> Any:
        with self._lock:
            record = self._records.get(key)
            if record is None or not record.fresh(now):
                self.stats.misses += 1
                return MISS
            self.stats.hits += 1
            return record.value

    def record(self, key: Hashable) -> CacheRecord | None:
        with self._lock:
            return self._records.get(key)

    def put(self, key: Hashable, value: Any, ttl: float, now: float) -> int:
        if ttl < 0:
            raise ValueError("ttl must be >= 0")
        with self._lock:
            version = self._versions.get(key, 0) + 1
            self._versions[key] = version
            self._records[key] = CacheRecord(key, value, now, ttl, version)
            self.stats.upstream_fetches += 1
            return version

    def invalidate(self, key: Hashable) -> None:
        with self._lock:
            self._records.pop(key, None)

    def __contains__(self, key: Hashable) -> bool:
        with self._lock:
            return key in self._records

    def __len__(self) -> int:
        with self._lock:
            return len(self._records)

