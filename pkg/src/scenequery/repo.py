"""Organization-scoped knowledge-share repository of named queries.

Storage is a per-org directory of entry files plus an append-favoring index,
so entries stay diffable and shareable out-of-band.  Duplicate detection
happens at contribute time via the canonical query form; forks are exempt
so shared queries can be copied before editing.
"""

from __future__ import annotations

import json
import threading
import uuid
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

from .errors import EntryNotFound, InvalidDocument, StorageError
from .query import canonicalize, from_document, to_document, used_features

_ORG_LOCKS: dict[str, threading.Lock] = {}
_ORG_LOCKS_GUARD = threading.Lock()


def _org_lock(org_dir: Path) -> threading.Lock:
    key = str(org_dir)
    with _ORG_LOCKS_GUARD:
        return _ORG_LOCKS.setdefault(key, threading.Lock())


@dataclass(frozen=True)
class RepositoryEntry:
    entry_id: str
    org_id: str
    title: str
    description: str
    document: str
    canonical: str
    used_features: tuple[str, ...]
    author: str
    created_at: str
    seq: int
    forked_from: Optional[str] = None

    def to_json(self, include_document: bool = True) -> dict:
        out = {
            "entry_id": self.entry_id,
            "org_id": self.org_id,
            "title": self.title,
            "description": self.description,
            "canonical": self.canonical,
            "used_features": list(self.used_features),
            "author": self.author,
            "created_at": self.created_at,
            "forked_from": self.forked_from,
        }
        if include_document:
            out["document"] = json.loads(self.document)
        return out


@dataclass(frozen=True)
class DuplicateOf:
    """Returned by contribute when an equal canonical form is already stored."""

    entry_id: str


class QueryRepository:
    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    # -- storage layout: {root}/{org}/entries/{id}.json + {root}/{org}/index.jsonl

    def _org_dir(self, org_id: str) -> Path:
        if not org_id or "/" in org_id or org_id.startswith("."):
            raise StorageError(f"bad org id {org_id!r}")
        return self.root / org_id

    def _load_entries(self, org_id: str) -> list[RepositoryEntry]:
        org_dir = self._org_dir(org_id)
        index = org_dir / "index.jsonl"
        if not index.is_file():
            return []
        entries = []
        try:
            with index.open(encoding="utf-8") as fh:
                for seq, line in enumerate(fh):
                    line = line.strip()
                    if not line:
                        continue
                    meta = json.loads(line)
                    doc_path = org_dir / "entries" / f"{meta['entry_id']}.json"
                    stored = json.loads(doc_path.read_text(encoding="utf-8"))
                    entries.append(RepositoryEntry(
                        entry_id=meta["entry_id"],
                        org_id=org_id,
                        title=meta["title"],
                        description=meta["description"],
                        document=json.dumps(stored["document"], ensure_ascii=False, separators=(",", ":")),
                        canonical=meta["canonical"],
                        used_features=tuple(meta["used_features"]),
                        author=meta["author"],
                        created_at=meta["created_at"],
                        seq=seq,
                        forked_from=meta.get("forked_from"),
                    ))
        except (OSError, json.JSONDecodeError, KeyError) as exc:
            raise StorageError(f"corrupt repository partition {org_id!r}: {exc}")
        return entries

    def _append(self, org_id: str, entry: RepositoryEntry) -> None:
        org_dir = self._org_dir(org_id)
        entries_dir = org_dir / "entries"
        try:
            entries_dir.mkdir(parents=True, exist_ok=True)
            meta = {
                "entry_id": entry.entry_id,
                "title": entry.title,
                "description": entry.description,
                "canonical": entry.canonical,
                "used_features": list(entry.used_features),
                "author": entry.author,
                "created_at": entry.created_at,
                "forked_from": entry.forked_from,
            }
            payload = {"meta": meta, "document": json.loads(entry.document)}
            (entries_dir / f"{entry.entry_id}.json").write_text(
                json.dumps(payload, ensure_ascii=False, indent=2) + "\n", encoding="utf-8")
            with (org_dir / "index.jsonl").open("a", encoding="utf-8") as fh:
                fh.write(json.dumps(meta, ensure_ascii=False) + "\n")
        except OSError as exc:
            raise StorageError(str(exc))

    def _new_entry(self, org_id: str, title: str, description: str, document: str,
                   author: str, forked_from: Optional[str], seq: int) -> RepositoryEntry:
        try:
            node = from_document(document)
        except Exception as exc:
            raise InvalidDocument(f"document does not parse: {exc}")
        return RepositoryEntry(
            entry_id=uuid.uuid4().hex[:12],
            org_id=org_id,
            title=title,
            description=description,
            document=to_document(node),
            canonical=canonicalize(node),
            used_features=tuple(sorted(used_features(node))),
            author=author,
            created_at=datetime.now(timezone.utc).isoformat(),
            seq=seq,
            forked_from=forked_from,
        )

    # -- operations

    def contribute(self, org_id: str, title: str, description: str, document: str,
                   author: str) -> str | DuplicateOf:
        """Store a new query unless its canonical form already exists in the org."""
        org_dir = self._org_dir(org_id)
        with _org_lock(org_dir):
            existing = self._load_entries(org_id)
            entry = self._new_entry(org_id, title, description, document, author, None, len(existing))
            for other in existing:
                if other.canonical == entry.canonical:
                    return DuplicateOf(entry_id=other.entry_id)
            self._append(org_id, entry)
            return entry.entry_id

    def fork(self, org_id: str, entry_id: str, author: str) -> RepositoryEntry:
        """Copy an entry with lineage; the copy may be edited and re-contributed."""
        org_dir = self._org_dir(org_id)
        with _org_lock(org_dir):
            existing = self._load_entries(org_id)
            source = next((e for e in existing if e.entry_id == entry_id), None)
            if source is None:
                raise EntryNotFound(f"no entry {entry_id!r} in org {org_id!r}")
            entry = self._new_entry(
                org_id, source.title, source.description, source.document,
                author, forked_from=entry_id, seq=len(existing))
            self._append(org_id, entry)
            return entry

    def search(self, org_id: str, text: Optional[str] = None,
               features: Optional[set[str]] = None) -> list[RepositoryEntry]:
        """Substring match on title+description AND feature-subset filter; newest first."""
        entries = self._load_entries(org_id)
        if text:
            needle = text.casefold()
            entries = [e for e in entries if needle in e.title.casefold() or needle in e.description.casefold()]
        if features:
            wanted = set(features)
            entries = [e for e in entries if wanted <= set(e.used_features)]
        return sorted(entries, key=lambda e: (e.created_at, e.seq), reverse=True)

    def get(self, org_id: str, entry_id: str) -> RepositoryEntry:
        entry = next((e for e in self._load_entries(org_id) if e.entry_id == entry_id), None)
        if entry is None:
            raise EntryNotFound(f"no entry {entry_id!r} in org {org_id!r}")
        return entry

    def lineage(self, org_id: str, entry_id: str) -> list[RepositoryEntry]:
        """Entry followed by its fork ancestors, youngest first."""
        by_id = {e.entry_id: e for e in self._load_entries(org_id)}
        if entry_id not in by_id:
            raise EntryNotFound(f"no entry {entry_id!r} in org {org_id!r}")
        chain = []
        current: Optional[str] = entry_id
        while current is not None and current in by_id:
            entry = by_id[current]
            chain.append(entry)
            current = entry.forked_from
        return chain
