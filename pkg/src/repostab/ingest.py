"""Readers for external histories: event JSONL, git log lines and forge exports.

Ingest is lenient where the input format allows it (a bad JSONL line is
reported and skipped); referential integrity is left to ``validate_log``.

Event JSONL, one object per line::

    {"type":"commit","id":S,"ts":RFC3339,"actor":S}
    {"type":"issue_opened","id":S,"ts":RFC3339,"actor":S}        (also pr_opened)
    {"type":"issue_closed","ref":S,"ts":RFC3339,"actor":S}       (also pr_merged, pr_closed)
    {"type":"comment","id":S,"ref":S,"ts":RFC3339,"actor":S}

Git log lines come from ``git log --pretty=format:'%H|%at|%ae'``.
"""

from __future__ import annotations

import io
import json
import os
import re
from dataclasses import dataclass, field
from typing import IO, Any, Callable, Iterable

from .model import Event, EventKind, format_timestamp, parse_timestamp


class IngestError(ValueError):
    pass


class InputUnreadable(IngestError):
    """The stream or file could not be read or decoded."""


class EmptyInput(IngestError):
    """Nothing parseable was found; usually the wrong file."""


class MalformedLine(IngestError):
    def __init__(self, line: int, reason: str):
        super().__init__(f"line {line}: {reason}")
        self.line = line


class SchemaError(IngestError):
    def __init__(self, path: str, reason: str = "missing or invalid"):
        super().__init__(f"{path}: {reason}")
        self.path = path


@dataclass
class IngestReport:
    events_read: int = 0
    events_dropped: int = 0
    warnings: list[tuple[str, str]] = field(default_factory=list)

    def warn(self, where: str, reason: str) -> None:
        self.warnings.append((where, reason))


_CLOSE_KINDS = {k.value for k in EventKind if k.is_close}
_KINDS = {k.value: k for k in EventKind}


def _event_from_obj(obj: Any) -> Event:
    if not isinstance(obj, dict):
        raise ValueError("not a JSON object")
    name = obj.get("type")
    kind = _KINDS.get(name) if isinstance(name, str) else None
    if kind is None:
        raise ValueError(f"unknown event type {name!r}")
    ts, actor = obj.get("ts"), obj.get("actor")
    if not isinstance(ts, str):
        raise ValueError("missing ts")
    if not isinstance(actor, str) or not actor:
        raise ValueError("missing actor")
    ref = obj.get("ref")
    if kind.value in _CLOSE_KINDS:
        if not isinstance(ref, str) or not ref:
            raise ValueError("missing ref")
        return Event.close(kind, ref, parse_timestamp(ts), actor)
    ident = obj.get("id")
    if not isinstance(ident, str) or not ident:
        raise ValueError("missing id")
    if kind is EventKind.COMMENT:
        if not isinstance(ref, str) or not ref:
            raise ValueError("missing ref")
    else:
        ref = None
    return Event(kind, ident, parse_timestamp(ts), actor, ref)


def _read_text(stream: IO) -> str:
    try:
        data = stream.read()
    except OSError as exc:
        raise InputUnreadable(str(exc)) from exc
    if isinstance(data, bytes):
        try:
            return data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise InputUnreadable(f"input is not UTF-8: {exc}") from exc
    return data


def parse_event_jsonl(stream: IO) -> tuple[list[Event], IngestReport]:
    """Parse event JSONL from a binary or text stream.

    Malformed lines are dropped and reported as ``("line N", reason)``; blank
    lines are ignored. Raises EmptyInput if no line yields an event.
    """
    report = IngestReport()
    events: list[Event] = []
    for lineno, line in enumerate(_read_text(stream).splitlines(), start=1):
        if not line.strip():
            continue
        report.events_read += 1
        try:
            events.append(_event_from_obj(json.loads(line)))
        except (ValueError, TypeError) as exc:
            report.events_dropped += 1
            report.warn(f"line {lineno}", str(exc))
    if not events:
        raise EmptyInput("no events parsed")
    return events, report


def event_to_obj(ev: Event) -> dict[str, str]:
    obj = {"type": ev.kind.value}
    if ev.kind.is_close:
        obj["ref"] = ev.ref
    else:
        obj["id"] = ev.id
        if ev.kind is EventKind.COMMENT:
            obj["ref"] = ev.ref
    obj["ts"] = format_timestamp(ev.ts)
    obj["actor"] = ev.actor
    return obj


_ENCODER = json.JSONEncoder(separators=(",", ":"), ensure_ascii=False)


def emit_jsonl(events: Iterable[Event]) -> str:
    """Serialise events one per line, keys in the documented order, LF endings."""
    encode = _ENCODER.encode
    return "".join(encode(event_to_obj(ev)) + "\n" for ev in events)


def parse_git_log(text: str) -> list[Event]:
    """Commits from ``%H|%at|%ae`` lines, in file order."""
    events = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.strip().split("|")
        if len(parts) != 3:
            raise MalformedLine(lineno, f"expected 3 '|'-separated fields, got {len(parts)}")
        sha, seconds, email = parts
        if not re.fullmatch(r"-?\d+", seconds):
            raise MalformedLine(lineno, f"non-numeric timestamp {seconds!r}")
        if not sha or not email:
            raise MalformedLine(lineno, "empty hash or author")
        events.append(Event(EventKind.COMMIT, sha, int(seconds), email))
    return events


def _get(obj: Any, path: str, *keys: str, nullable: bool = False) -> Any:
    cur = obj
    for key in keys:
        if not isinstance(cur, dict) or key not in cur:
            raise SchemaError(f"{path}.{'.'.join(keys)}")
        cur = cur[key]
    if cur is None and not nullable:
        raise SchemaError(f"{path}.{'.'.join(keys)}", "must not be null")
    return cur


def _ts(obj: Any, path: str, key: str, nullable: bool = False) -> int | None:
    value = _get(obj, path, key, nullable=nullable)
    if value is None:
        return None
    try:
        return parse_timestamp(value)
    except (TypeError, ValueError):
        raise SchemaError(f"{path}.{key}", f"bad timestamp {value!r}") from None


def _login(obj: Any, path: str) -> str:
    login = _get(obj, path, "user", "login")
    if not isinstance(login, str) or not login:
        raise SchemaError(f"{path}.user.login")
    return login


def _number(obj: Any, path: str, key: str = "number") -> int:
    value = _get(obj, path, key)
    if isinstance(value, bool) or not isinstance(value, int):
        raise SchemaError(f"{path}.{key}", "must be an integer")
    return value


def _array(doc: Any, name: str) -> list:
    if not isinstance(doc, list):
        raise SchemaError(name, "must be a JSON array")
    return doc


def parse_forge_export(
    issues: list, prs: list, comments: list, commits: list | None = None
) -> list[Event]:
    """Events from a forge export.

    Issues become ``i<number>`` and PRs ``pr<number>``. A PR with ``merged_at``
    yields only pr_merged even if ``closed_at`` is also set. Comments name their
    item through ``issue_number`` or ``pr_number``. Optional commit records
    carry ``sha``, ``created_at`` and ``user.login``.
    """
    events: list[Event] = []
    for n, item in enumerate(_array(issues, "issues")):
        path = f"issues[{n}]"
        ident = f"i{_number(item, path)}"
        actor = _login(item, path)
        events.append(Event(EventKind.ISSUE_OPENED, ident, _ts(item, path, "created_at"), actor))
        closed = _ts(item, path, "closed_at", nullable=True)
        if closed is not None:
            events.append(Event.close(EventKind.ISSUE_CLOSED, ident, closed, _closer(item, actor)))

    for n, item in enumerate(_array(prs, "prs")):
        path = f"prs[{n}]"
        ident = f"pr{_number(item, path)}"
        actor = _login(item, path)
        events.append(Event(EventKind.PR_OPENED, ident, _ts(item, path, "created_at"), actor))
        merged = _ts(item, path, "merged_at", nullable=True) if "merged_at" in item else None
        closed = _ts(item, path, "closed_at", nullable=True)
        if merged is not None:
            events.append(Event.close(EventKind.PR_MERGED, ident, merged, _closer(item, actor)))
        elif closed is not None:
            events.append(Event.close(EventKind.PR_CLOSED, ident, closed, _closer(item, actor)))

    for n, item in enumerate(_array(comments, "comments")):
        path = f"comments[{n}]"
        if isinstance(item, dict) and item.get("pr_number") is not None:
            ref = f"pr{_number(item, path, 'pr_number')}"
        else:
            ref = f"i{_number(item, path, 'issue_number')}"
        cid = item.get("id")
        ident = f"m{cid}" if cid is not None else f"m-{n}"
        events.append(Event(EventKind.COMMENT, ident, _ts(item, path, "created_at"), _login(item, path), ref))

    for n, item in enumerate(_array(commits or [], "commits")):
        path = f"commits[{n}]"
        sha = _get(item, path, "sha")
        if not isinstance(sha, str) or not sha:
            raise SchemaError(f"{path}.sha")
        events.append(Event(EventKind.COMMIT, sha, _ts(item, path, "created_at"), _login(item, path)))
    return events


def _closer(item: dict, opener: str) -> str:
    # exports rarely name who closed an item; fall back to the author
    closed_by = item.get("closed_by")
    if isinstance(closed_by, dict) and isinstance(closed_by.get("login"), str) and closed_by["login"]:
        return closed_by["login"]
    return opener


FORGE_FILES = {"issues": "issues.json", "prs": "pulls.json", "comments": "comments.json", "commits": "commits.json"}


def load_forge_dir(path: str | os.PathLike) -> list[Event]:
    """Read a forge export directory as written by the fetch client.

    issues.json, pulls.json and comments.json are required; commits.json is optional.
    """
    docs = {}
    for key, name in FORGE_FILES.items():
        file = os.path.join(path, name)
        if key == "commits" and not os.path.exists(file):
            docs[key] = None
            continue
        try:
            with open(file, encoding="utf-8") as fh:
                docs[key] = json.load(fh)
        except OSError as exc:
            raise InputUnreadable(f"{file}: {exc}") from exc
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            raise SchemaError(name, f"not valid JSON: {exc}") from exc
    events = parse_forge_export(docs["issues"], docs["prs"], docs["comments"], docs["commits"])
    if not events:
        raise EmptyInput(f"{path}: export contains no events")
    return events


BOT_PATTERN = r"(\[bot\]$)|(-bot$)|(^bot-)"


def exclude_actors(events: Iterable[Event], is_excluded: Callable[[str], bool]) -> list[Event]:
    """Drop activity by excluded accounts (typically bots).

    Commits and comments by them are removed. Issues and PRs they opened are
    removed together with their close events and comments. Closes they
    performed on other people's items are kept, since the item did get closed.
    """
    events = list(events)
    dropped_items = {
        (ev.kind, ev.id)
        for ev in events
        if ev.kind in (EventKind.ISSUE_OPENED, EventKind.PR_OPENED) and is_excluded(ev.actor)
    }
    issues_gone = {i for k, i in dropped_items if k is EventKind.ISSUE_OPENED}
    prs_gone = {i for k, i in dropped_items if k is EventKind.PR_OPENED}
    out = []
    for ev in events:
        if ev.kind in (EventKind.COMMIT, EventKind.COMMENT) and is_excluded(ev.actor):
            continue
        if ev.kind in (EventKind.ISSUE_OPENED, EventKind.PR_OPENED) and is_excluded(ev.actor):
            continue
        if ev.kind is EventKind.ISSUE_CLOSED and ev.ref in issues_gone:
            continue
        if ev.kind in (EventKind.PR_MERGED, EventKind.PR_CLOSED) and ev.ref in prs_gone:
            continue
        if ev.kind is EventKind.COMMENT and (ev.ref in issues_gone or ev.ref in prs_gone):
            continue
        out.append(ev)
    return out


def bot_filter(pattern: str = BOT_PATTERN) -> Callable[[str], bool]:
    rx = re.compile(pattern)
    return lambda actor: rx.search(actor) is not None


def read_events(path: str | os.PathLike, fmt: str) -> tuple[list[Event], IngestReport]:
    """Load events from ``path`` in format ``jsonl``, ``gitlog`` or ``forge``."""
    if fmt == "forge":
        events = load_forge_dir(path)
        return events, IngestReport(events_read=len(events))
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise InputUnreadable(f"{path}: {exc}") from exc
    if fmt == "jsonl":
        return parse_event_jsonl(io.BytesIO(raw))
    if fmt == "gitlog":
        try:
            text = raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise InputUnreadable(f"{path}: not UTF-8") from exc
        events = parse_git_log(text)
        if not events:
            raise EmptyInput(f"{path}: no commits")
        return events, IngestReport(events_read=len(events))
    raise ValueError(f"unknown input format {fmt!r}")
