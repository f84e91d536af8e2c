"""Professional/premium match pulls through the OpenDota explorer (SQL) endpoint."""

from __future__ import annotations

import logging
import time
from typing import Callable, Sequence

import requests

from ..errors import MalformedResponse, NetworkError, RateLimited
from .records import MatchRecord, filter_valid

logger = logging.getLogger(__name__)

DEFAULT_BASE_URL = "https://api.opendota.com"
PAGE_SIZE = 5000
LEAGUE_TIERS = ("professional", "premium")

ROW_FIELDS = ("match_id", "patch", "duration", "radiant_score", "dire_score", "radiant_win", "heroes")

QUERY_TEMPLATE = """\
SELECT m.match_id, mp.patch, m.duration, m.radiant_score, m.dire_score, m.radiant_win,
       array_agg(pm.hero_id ORDER BY pm.player_slot) AS heroes
FROM matches m
JOIN match_patch mp USING (match_id)
JOIN leagues l USING (leagueid)
JOIN player_matches pm USING (match_id)
WHERE mp.patch IN ({patches})
  AND l.tier IN ({tiers})
  AND m.match_id > {cursor}
GROUP BY m.match_id, mp.patch
HAVING count(*) = 10 AND bool_and(coalesce(pm.leaver_status, 0) = 0)
ORDER BY m.match_id
LIMIT {limit}"""


def _quote(values: Sequence[str]) -> str:
    out = []
    for v in values:
        if "'" in v:
            raise ValueError(f"refusing to quote {v!r}")
        out.append(f"'{v}'")
    return ", ".join(out)


def build_query(patches: Sequence[str], cursor: int = 0, limit: int = PAGE_SIZE) -> str:
    return QUERY_TEMPLATE.format(
        patches=_quote(patches), tiers=_quote(LEAGUE_TIERS), cursor=int(cursor), limit=int(limit)
    )


def row_to_record(row: dict) -> MatchRecord | None:
    """Map one explorer row; rows missing any field are dropped, never defaulted."""
    missing = [f for f in ROW_FIELDS if row.get(f) is None]
    if missing:
        logger.warning("dropping match %s: missing %s", row.get("match_id"), ", ".join(missing))
        return None
    heroes = row["heroes"]
    if not isinstance(heroes, list) or len(heroes) != 10 or any(h is None for h in heroes):
        logger.warning("dropping match %s: expected 10 hero slots", row["match_id"])
        return None
    if row.get("abandoned"):
        logger.warning("dropping match %s: flagged abandoned", row["match_id"])
        return None
    try:
        return MatchRecord(
            match_id=int(row["match_id"]),
            patch=str(row["patch"]),
            duration=int(row["duration"]),
            kills_radiant=int(row["radiant_score"]),
            kills_dire=int(row["dire_score"]),
            heroes=tuple(int(h) for h in heroes),
            radiant_win=bool(row["radiant_win"]),
        )
    except (TypeError, ValueError) as exc:
        logger.warning("dropping match %s: %s", row.get("match_id"), exc)
        return None


class ExplorerClient:
    def __init__(
        self,
        base_url: str = DEFAULT_BASE_URL,
        api_key: str | None = None,
        session: requests.Session | None = None,
        rate_limit: float = 1.0,
        max_retries: int = 5,
        backoff: float = 1.0,
        timeout: float = 60.0,
        sleep: Callable[[float], None] = time.sleep,
        clock: Callable[[], float] = time.monotonic,
    ):
        self.base_url = base_url.rstrip("/")
        self.api_key = api_key
        self.session = session or requests.Session()
        self.min_interval = 1.0 / rate_limit if rate_limit > 0 else 0.0
        self.max_retries = max_retries
        self.backoff = backoff
        self.timeout = timeout
        self._sleep = sleep
        self._clock = clock
        self._last = None

    def _throttle(self):
        if self._last is not None and self.min_interval:
            wait = self.min_interval - (self._clock() - self._last)
            if wait > 0:
                self._sleep(wait)
        self._last = self._clock()

    def query(self, sql: str) -> list[dict]:
        params = {"sql": sql}
        if self.api_key:
            params["api_key"] = self.api_key
        url = f"{self.base_url}/api/explorer"
        for attempt in range(self.max_retries + 1):
            self._throttle()
            try:
                resp = self.session.get(url, params=params, timeout=self.timeout)
            except requests.RequestException as exc:
                raise NetworkError(f"request to {url} failed: {exc}") from exc
            if resp.status_code == 429:
                if attempt == self.max_retries:
                    break
                delay = self.backoff * 2 ** attempt
                logger.info("rate limited; retrying in %.1fs", delay)
                self._sleep(delay)
                continue
            if resp.status_code >= 400:
                raise NetworkError(f"{url} returned HTTP {resp.status_code}")
            try:
                payload = resp.json()
            except ValueError as exc:
                raise MalformedResponse(f"{url} returned non-JSON body") from exc
            if not isinstance(payload, dict):
                raise MalformedResponse("explorer response is not an object")
            if payload.get("err"):
                raise MalformedResponse(f"explorer error: {payload['err']}")
            rows = payload.get("rows")
            if not isinstance(rows, list):
                raise MalformedResponse("explorer response has no 'rows' list")
            return rows
        raise RateLimited(f"still rate limited after {self.max_retries} retries")


def fetch_matches(
    patch_range: Sequence[str],
    client: ExplorerClient | None = None,
    page_size: int = PAGE_SIZE,
    max_pages: int | None = None,
) -> list[MatchRecord]:
    """Page through the explorer by match-id cursor and return valid records."""
    if not patch_range:
        raise ValueError("patch_range must name at least one patch")
    client = client or ExplorerClient()
    records: list[MatchRecord] = []
    cursor = 0
    pages = 0
    while max_pages is None or pages < max_pages:
        rows = client.query(build_query(patch_range, cursor, page_size))
        pages += 1
        for row in rows:
            if not isinstance(row, dict):
                raise MalformedResponse("explorer row is not an object")
            rec = row_to_record(row)
            if rec is not None:
                records.append(rec)
        ids = [row.get("match_id") for row in rows if isinstance(row.get("match_id"), int)]
        if len(rows) < page_size or not ids:
            break
        cursor = max(ids)
    valid = filter_valid(records)
    if len(valid) != len(records):
        logger.warning("dropped %d records violating match invariants", len(records) - len(valid))
    seen = set()
    unique = []
    for r in valid:
        if r.match_id not in seen:
            seen.add(r.match_id)
            unique.append(r)
    return unique
