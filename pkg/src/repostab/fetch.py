"""REST client that downloads a repository's history into a forge export.

Endpoints (GitHub REST dialect, relative to ``base_url``)::

    GET /repos/{owner}/{repo}/issues?state=all&per_page=N&page=K[&since=T]
    GET /repos/{owner}/{repo}/pulls?state=all&per_page=N&page=K
    GET /repos/{owner}/{repo}/issues/comments?per_page=N&page=K[&since=T]
    GET /repos/{owner}/{repo}/commits?per_page=N&page=K[&since=T]

The pulls listing takes no ``since`` filter, so every PR is fetched.
The issues listing also returns pull requests; entries carrying a
``pull_request`` key are dropped there and taken from the pulls listing. A
stream ends when the ``Link`` header has no ``rel="next"``, or, without a
Link header, on a short page.

Output directory: issues.json, pulls.json, comments.json, commits.json and
meta.json (the only file with a run-dependent field, ``fetched_at``). While a
run is in progress, fetch-journal.json records the last completed page of each
stream and <stream>.partial.json holds the records so far; a rerun resumes
from there.
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Callable

import httpx

from .model import format_timestamp

DEFAULT_BASE_URL = "https://api.github.com"
STREAMS = ("issues", "pulls", "comments", "commits")
OUTPUT_FILES = {s: f"{s}.json" for s in STREAMS}
JOURNAL = "fetch-journal.json"
BACKOFF_S = (1.0, 2.0, 4.0)


class FetchError(Exception):
    pass


class AuthFailed(FetchError):
    pass


class NotFound(FetchError):
    pass


class RateLimited(FetchError):
    def __init__(self, reset: int):
        super().__init__(f"rate limit exhausted until {format_timestamp(reset)}")
        self.reset = reset


class TransportFailed(FetchError):
    pass


@dataclass(frozen=True)
class FetchSpec:
    owner: str
    repo: str
    since: int | None = None
    auth_token: str | None = field(default=None, repr=False)
    page_size: int = 100
    base_url: str = DEFAULT_BASE_URL

    def __post_init__(self):
        if not self.owner or not self.repo:
            raise ValueError("owner and repo must be non-empty")
        if "/" in self.owner or "/" in self.repo:
            raise ValueError("owner and repo must not contain '/'")
        if not 1 <= self.page_size <= 100:
            raise ValueError("page_size must lie in 1..100")

    def path(self, stream: str) -> str:
        tail = {"issues": "issues", "pulls": "pulls", "comments": "issues/comments", "commits": "commits"}
        return f"/repos/{self.owner}/{self.repo}/{tail[stream]}"


def _login(user) -> str:
    if isinstance(user, dict) and user.get("login"):
        return user["login"]
    return "ghost"


def _trim(stream: str, raw: dict) -> dict | None:
    """Reduce an API record to the export schema (None = skip)."""
    if stream == "issues":
        if "pull_request" in raw:
            return None
        return {
            "number": raw["number"],
            "created_at": raw["created_at"],
            "closed_at": raw.get("closed_at"),
            "user": {"login": _login(raw.get("user"))},
        }
    if stream == "pulls":
        return {
            "number": raw["number"],
            "created_at": raw["created_at"],
            "closed_at": raw.get("closed_at"),
            "merged_at": raw.get("merged_at"),
            "user": {"login": _login(raw.get("user"))},
        }
    if stream == "comments":
        number = int(str(raw["issue_url"]).rstrip("/").rsplit("/", 1)[-1])
        return {
            "id": raw["id"],
            "number": number,
            "created_at": raw["created_at"],
            "user": {"login": _login(raw.get("user"))},
        }
    commit = raw.get("commit") or {}
    author = commit.get("author") or {}
    login = _login(raw.get("author")) if raw.get("author") else (author.get("email") or "unknown")
    return {"sha": raw["sha"], "created_at": author.get("date"), "user": {"login": login}}


class ForgeClient:
    """Sequential, resumable downloader.

    ``sleep`` and ``clock`` are injectable so tests run instantly and
    deterministically. Rate-limit waits happen only with ``wait_on_rate_limit``.
    """

    def __init__(
        self,
        spec: FetchSpec,
        transport: httpx.BaseTransport | None = None,
        sleep: Callable[[float], None] = time.sleep,
        clock: Callable[[], float] = time.time,
        wait_on_rate_limit: bool = False,
        max_retries: int = 3,
    ):
        self.spec = spec
        self.sleep = sleep
        self.clock = clock
        self.wait_on_rate_limit = wait_on_rate_limit
        self.max_retries = max_retries
        headers = {"Accept": "application/vnd.github+json", "User-Agent": "repostab"}
        if spec.auth_token:
            headers["Authorization"] = f"Bearer {spec.auth_token}"
        self.http = httpx.Client(base_url=spec.base_url, headers=headers, transport=transport, timeout=30.0)
        self.requests_made: list[str] = []

    def close(self) -> None:
        self.http.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def _params(self, stream: str, page: int) -> dict:
        params = {"per_page": self.spec.page_size, "page": page}
        if stream in ("issues", "pulls"):
            params["state"] = "all"
        if self.spec.since is not None and stream != "pulls":
            params["since"] = format_timestamp(self.spec.since)
        return params

    def get_page(self, stream: str, page: int) -> httpx.Response:
        path = self.spec.path(stream)
        params = self._params(stream, page)
        attempt = 0
        while True:
            try:
                response = self.http.get(path, params=params)
            except httpx.TransportError as exc:
                failure: str = f"{type(exc).__name__}: {exc}"
            else:
                self.requests_made.append(str(response.request.url))
                status = response.status_code
                if status < 300:
                    return response
                if status in (403, 429) and response.headers.get("x-ratelimit-remaining") == "0":
                    reset = int(response.headers.get("x-ratelimit-reset", "0"))
                    if not self.wait_on_rate_limit:
                        raise RateLimited(reset)
                    self.sleep(max(0.0, reset - self.clock()) + 1.0)
                    continue
                if status in (401, 403):
                    raise AuthFailed(f"{status} for {path}")
                if status == 404:
                    raise NotFound(f"{self.spec.owner}/{self.spec.repo}: {path} not found")
                if status < 500:
                    raise FetchError(f"unexpected status {status} for {path}")
                failure = f"server error {status}"
            if attempt >= self.max_retries:
                raise TransportFailed(f"{path} page {page}: {failure} after {attempt} retries")
            self.sleep(BACKOFF_S[min(attempt, len(BACKOFF_S) - 1)])
            attempt += 1

    def fetch_stream(self, stream: str, journal: "_Journal | None" = None) -> list[dict]:
        records = journal.records(stream) if journal else []
        page = journal.last_page(stream) + 1 if journal else 1
        if journal and journal.done(stream):
            return records
        while True:
            response = self.get_page(stream, page)
            body = response.json()
            if not isinstance(body, list):
                raise FetchError(f"{stream} page {page}: expected a JSON array")
            for raw in body:
                trimmed = _trim(stream, raw)
                if trimmed is not None:
                    records.append(trimmed)
            links = response.links
            last = ("next" not in links) if links else len(body) < self.spec.page_size
            if journal:
                journal.advance(stream, page, records, last)
            if last or not body:
                return records
            page += 1


class _Journal:
    def __init__(self, out_dir: str, key: dict):
        self.dir = out_dir
        self.path = os.path.join(out_dir, JOURNAL)
        self.key = key
        self.state = {"key": key, "streams": {}}
        if os.path.exists(self.path):
            with open(self.path, encoding="utf-8") as fh:
                saved = json.load(fh)
            if saved.get("key") == key:
                self.state = saved

    def _partial(self, stream: str) -> str:
        return os.path.join(self.dir, f"{stream}.partial.json")

    def last_page(self, stream: str) -> int:
        return self.state["streams"].get(stream, {}).get("page", 0)

    def done(self, stream: str) -> bool:
        return self.state["streams"].get(stream, {}).get("done", False)

    def records(self, stream: str) -> list[dict]:
        if not self.last_page(stream):
            return []
        with open(self._partial(stream), encoding="utf-8") as fh:
            return json.load(fh)

    def advance(self, stream: str, page: int, records: list[dict], done: bool) -> None:
        _write_json(self._partial(stream), records)
        self.state["streams"][stream] = {"page": page, "done": done}
        _write_json(self.path, self.state)

    def clear(self) -> None:
        for stream in STREAMS:
            if os.path.exists(self._partial(stream)):
                os.remove(self._partial(stream))
        if os.path.exists(self.path):
            os.remove(self.path)


def _write_json(path: str, doc) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, sort_keys=True, indent=2)
        fh.write("\n")
    os.replace(tmp, path)


def build_export(streams: dict[str, list[dict]]) -> dict[str, list[dict]]:
    """Split raw comment records into issue and PR comments using the PR numbers."""
    pr_numbers = {p["number"] for p in streams["pulls"]}
    comments = []
    for c in streams["comments"]:
        key = "pr_number" if c["number"] in pr_numbers else "issue_number"
        comments.append({"id": c["id"], key: c["number"], "created_at": c["created_at"], "user": c["user"]})
    return {
        "issues": streams["issues"],
        "pulls": streams["pulls"],
        "comments": comments,
        "commits": streams["commits"],
    }


def fetch_repository(
    spec: FetchSpec,
    out_dir: str | None = None,
    client: ForgeClient | None = None,
    **client_options,
) -> dict[str, list[dict]]:
    """Download all four streams and return the export documents.

    With ``out_dir``, progress is journaled there after each page and the
    export files are written at the end. Errors propagate after the journal
    is saved, so a rerun picks up where this one stopped.
    """
    own = client is None
    client = client or ForgeClient(spec, **client_options)
    journal = None
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        journal = _Journal(
            out_dir,
            {"owner": spec.owner, "repo": spec.repo, "since": spec.since, "page_size": spec.page_size},
        )
    try:
        streams = {s: client.fetch_stream(s, journal) for s in STREAMS}
    finally:
        if own:
            client.close()
    export = build_export(streams)
    if out_dir is not None:
        for stream in STREAMS:
            _write_json(os.path.join(out_dir, OUTPUT_FILES[stream]), export[stream])
        meta = {
            "owner": spec.owner,
            "repo": spec.repo,
            "since": None if spec.since is None else format_timestamp(spec.since),
            "counts": {s: len(export[s]) for s in STREAMS},
            "fetched_at": datetime.fromtimestamp(int(client.clock()), tz=timezone.utc).strftime(
                "%Y-%m-%dT%H:%M:%SZ"
            ),
        }
        _write_json(os.path.join(out_dir, "meta.json"), meta)
        journal.clear()
    return export
