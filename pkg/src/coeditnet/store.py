"""Single-file sqlite store for mined commits and co-edit records.

Only one writer may hold a store at a time (advisory lock on ``<db>.lock``);
any number of read-only handles may be opened alongside it.
"""

from __future__ import annotations

import hashlib
import json
import sqlite3
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Optional, Sequence

from filelock import FileLock, Timeout

from . import __version__
from .errors import DuplicateCommit, IoFailure, ModeMismatch, StoreError, StoreLocked
from .records import (
    COEDIT_COLUMNS,
    GRANULARITIES,
    KINDS,
    CoEditRecord,
    CommitRecord,
    FileModification,
)

SCHEMA = """
CREATE TABLE IF NOT EXISTS meta (
    key TEXT PRIMARY KEY,
    value TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS commits (
    hash TEXT PRIMARY KEY,
    author_date INTEGER NOT NULL,
    author_email TEXT NOT NULL,
    author_name TEXT NOT NULL,
    author_timezone INTEGER NOT NULL,
    branches TEXT NOT NULL,
    committer_date INTEGER NOT NULL,
    committer_email TEXT NOT NULL,
    committer_name TEXT NOT NULL,
    committer_timezone INTEGER NOT NULL,
    in_main_branch INTEGER NOT NULL,
    merge INTEGER NOT NULL,
    modifications INTEGER NOT NULL,
    commit_message_len INTEGER NOT NULL,
    parents TEXT NOT NULL,
    project_name TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS coedits (
    id INTEGER PRIMARY KEY AUTOINCREMENT,
    mod_filename TEXT NOT NULL,
    mod_new_path TEXT,
    mod_old_path TEXT,
    pre_commit TEXT,
    post_commit TEXT NOT NULL REFERENCES commits(hash),
    kind TEXT NOT NULL,
    granularity TEXT NOT NULL,
    pre_line_num INTEGER,
    pre_line_len_in_chars INTEGER,
    pre_line_text_entropy REAL,
    post_line_num INTEGER,
    post_line_len_in_chars INTEGER,
    post_line_text_entropy REAL,
    pre_block_starting_line_num INTEGER,
    pre_block_len_in_lines INTEGER,
    pre_block_len_in_chars INTEGER,
    pre_block_text_entropy REAL,
    post_block_starting_line_num INTEGER,
    post_block_len_in_lines INTEGER,
    post_block_len_in_chars INTEGER,
    post_block_text_entropy REAL,
    attributed_line_count INTEGER NOT NULL,
    mod_added INTEGER NOT NULL,
    mod_removed INTEGER NOT NULL,
    levenshtein_dist INTEGER,
    mod_cyclomatic_complexity INTEGER,
    mod_loc INTEGER,
    mod_token_count INTEGER
);
CREATE INDEX IF NOT EXISTS coedits_post ON coedits(post_commit);
CREATE TABLE IF NOT EXISTS modifications (
    id INTEGER PRIMARY KEY AUTOINCREMENT,
    commit_hash TEXT NOT NULL REFERENCES commits(hash),
    old_path TEXT,
    new_path TEXT,
    filename TEXT NOT NULL,
    change_type TEXT NOT NULL,
    added INTEGER NOT NULL,
    removed INTEGER NOT NULL,
    binary INTEGER NOT NULL,
    loc INTEGER,
    token_count INTEGER
);
CREATE INDEX IF NOT EXISTS modifications_commit ON modifications(commit_hash);
CREATE TABLE IF NOT EXISTS failures (
    commit_hash TEXT PRIMARY KEY,
    error TEXT NOT NULL,
    attempts INTEGER NOT NULL
);
"""

COMMIT_COLUMNS = (
    "hash", "author_date", "author_email", "author_name", "author_timezone", "branches",
    "committer_date", "committer_email", "committer_name", "committer_timezone",
    "in_main_branch", "merge", "modifications", "commit_message_len", "parents",
    "project_name",
)
MODIFICATION_COLUMNS = (
    "commit_hash", "old_path", "new_path", "filename", "change_type", "added", "removed",
    "binary", "loc", "token_count",
)
# Tables compared by :func:`table_digest`; ``meta`` only contributes these keys.
DIGEST_TABLES = ("commits", "coedits", "modifications", "failures")
DIGEST_META_KEYS = ("mode",)


def _commit_row(commit: CommitRecord) -> tuple:
    return (
        commit.hash, commit.author_date, commit.author_email, commit.author_name,
        commit.author_timezone, ",".join(commit.branches), commit.committer_date,
        commit.committer_email, commit.committer_name, commit.committer_timezone,
        int(commit.in_main_branch), int(commit.merge), commit.modifications,
        commit.commit_message_len, ",".join(commit.parents), commit.project_name,
    )


def commit_from_row(row: Sequence) -> CommitRecord:
    values = dict(zip(COMMIT_COLUMNS, row))
    return CommitRecord(
        hash=values["hash"],
        author_date=values["author_date"],
        author_timezone=values["author_timezone"],
        author_name=values["author_name"],
        author_email=values["author_email"],
        committer_date=values["committer_date"],
        committer_timezone=values["committer_timezone"],
        committer_name=values["committer_name"],
        committer_email=values["committer_email"],
        parents=tuple(p for p in values["parents"].split(",") if p),
        branches=tuple(b for b in values["branches"].split(",") if b),
        in_main_branch=bool(values["in_main_branch"]),
        modifications=values["modifications"],
        commit_message_len=values["commit_message_len"],
        project_name=values["project_name"],
    )


def coedit_from_row(row: Sequence) -> CoEditRecord:
    return CoEditRecord(id=row[0], **dict(zip(COEDIT_COLUMNS, row[1:])))


@dataclass(frozen=True)
class StoredModification:
    commit_hash: str
    old_path: Optional[str]
    new_path: Optional[str]
    filename: str
    change_type: str
    added: int
    removed: int
    binary: bool
    loc: Optional[int]
    token_count: Optional[int]

    @property
    def path(self) -> str:
        return self.new_path if self.new_path is not None else self.old_path


@dataclass(frozen=True)
class JoinedCoEdit:
    """A co-edit row with the commits on both of its ends."""

    record: CoEditRecord
    post: CommitRecord
    pre: Optional[CommitRecord]


class Store:
    """Handle on a co-edit database. Use :func:`init_store` or :func:`open_store`."""

    def __init__(self, path, mode: Optional[str] = None, readonly: bool = False,
                 repository: Optional[str] = None):
        self.path = Path(path)
        self.readonly = readonly
        self._lock: Optional[FileLock] = None
        if readonly:
            if not self.path.exists():
                raise IoFailure(f"store {self.path} does not exist")
            try:
                self.conn = sqlite3.connect(f"file:{self.path}?mode=ro", uri=True)
                self.mode = self._meta().get("mode")
            except sqlite3.Error as exc:
                raise IoFailure(f"cannot open store {self.path}: {exc}") from exc
            if self.mode is None:
                raise StoreError(f"{self.path} is not a co-edit store")
            return

        if mode not in GRANULARITIES:
            raise ValueError(f"mode must be one of {GRANULARITIES}, got {mode!r}")
        self._lock = FileLock(str(self.path) + ".lock")
        try:
            self._lock.acquire(timeout=0)
        except Timeout:
            raise StoreLocked(f"{self.path} is being written by another process") from None
        except OSError as exc:
            raise IoFailure(f"cannot lock {self.path}: {exc}") from exc
        try:
            self.conn = sqlite3.connect(str(self.path))
            self.conn.executescript(SCHEMA)
            meta = self._meta()
            if "mode" in meta and meta["mode"] != mode:
                raise ModeMismatch(
                    f"{self.path} was mined with mode={meta['mode']}, requested mode={mode}"
                )
            with self.conn:
                self.conn.execute("INSERT OR IGNORE INTO meta VALUES ('mode', ?)", (mode,))
                if repository is not None:
                    self.conn.execute("INSERT OR IGNORE INTO meta VALUES ('repository', ?)",
                                      (repository,))
                self.conn.execute("INSERT OR REPLACE INTO meta VALUES ('tool_version', ?)",
                                  (__version__,))
        except sqlite3.Error as exc:
            self.close()
            raise IoFailure(f"cannot initialise store {self.path}: {exc}") from exc
        except StoreError:
            self.close()
            raise
        self.mode = mode

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def close(self):
        conn = getattr(self, "conn", None)
        if conn is not None:
            conn.close()
            self.conn = None
        if self._lock is not None:
            self._lock.release()
            self._lock = None

    def _meta(self) -> dict:
        try:
            return dict(self.conn.execute("SELECT key, value FROM meta"))
        except sqlite3.OperationalError:
            return {}

    @property
    def meta(self) -> dict:
        return self._meta()

    # -- writing ---------------------------------------------------------

    def write_commit(self, commit: CommitRecord, records: Iterable[CoEditRecord],
                     modifications: Iterable[FileModification] = ()) -> None:
        """Persist a commit with all of its rows in one transaction."""
        if self.readonly:
            raise StoreError("store opened read-only")
        records = list(records)
        for record in records:
            if record.kind not in KINDS or record.granularity != self.mode:
                raise StoreError(f"record {record.kind}/{record.granularity} does not fit "
                                 f"a {self.mode} store")
        placeholders = ",".join("?" * len(COEDIT_COLUMNS))
        try:
            with self.conn:
                self.conn.execute(
                    f"INSERT INTO commits VALUES ({','.join('?' * len(COMMIT_COLUMNS))})",
                    _commit_row(commit),
                )
                self.conn.executemany(
                    f"INSERT INTO coedits ({','.join(COEDIT_COLUMNS)}) VALUES ({placeholders})",
                    [tuple(getattr(r, c) for c in COEDIT_COLUMNS) for r in records],
                )
                self.conn.executemany(
                    f"INSERT INTO modifications ({','.join(MODIFICATION_COLUMNS)}) "
                    f"VALUES ({','.join('?' * len(MODIFICATION_COLUMNS))})",
                    [
                        (commit.hash, m.old_path, m.new_path, m.filename, m.change_type,
                         m.added_count, m.removed_count, int(m.binary), m.loc, m.token_count)
                        for m in modifications
                    ],
                )
                self.conn.execute("DELETE FROM failures WHERE commit_hash = ?", (commit.hash,))
        except sqlite3.IntegrityError as exc:
            if "commits.hash" in str(exc):
                raise DuplicateCommit(commit.hash) from None
            raise IoFailure(str(exc)) from exc
        except sqlite3.Error as exc:
            raise IoFailure(str(exc)) from exc

    def record_failure(self, commit_hash: str, error: str) -> None:
        try:
            with self.conn:
                self.conn.execute(
                    "INSERT INTO failures VALUES (?, ?, 1) ON CONFLICT(commit_hash) "
                    "DO UPDATE SET error = excluded.error, attempts = attempts + 1",
                    (commit_hash, error),
                )
        except sqlite3.Error as exc:
            raise IoFailure(str(exc)) from exc

    # -- reading ---------------------------------------------------------

    def _query(self, sql: str, params: Sequence = ()) -> list:
        try:
            return self.conn.execute(sql, params).fetchall()
        except sqlite3.Error as exc:
            raise IoFailure(str(exc)) from exc

    def processed_commits(self) -> set[str]:
        return {row[0] for row in self._query("SELECT hash FROM commits")}

    def failures(self) -> dict[str, str]:
        return dict(self._query("SELECT commit_hash, error FROM failures"))

    def commits(self) -> list[CommitRecord]:
        rows = self._query(f"SELECT {','.join(COMMIT_COLUMNS)} FROM commits "
                           "ORDER BY author_date, hash")
        return [commit_from_row(r) for r in rows]

    def coedits(self) -> list[CoEditRecord]:
        rows = self._query(f"SELECT id, {','.join(COEDIT_COLUMNS)} FROM coedits ORDER BY id")
        return [coedit_from_row(r) for r in rows]

    def modifications(self) -> list[StoredModification]:
        rows = self._query(f"SELECT {','.join(MODIFICATION_COLUMNS)} FROM modifications "
                           "ORDER BY id")
        return [
            StoredModification(*row[:7], bool(row[7]), *row[8:]) for row in rows
        ]

    def query_coedits(self, since: Optional[int] = None, until: Optional[int] = None,
                      author: Optional[str] = None, path_prefix: Optional[str] = None,
                      kind: Optional[str] = None) -> Iterator[JoinedCoEdit]:
        """Co-edit rows joined with their pre and post commits.

        ``since``/``until`` bound the post commit's author date as ``[since, until)``;
        ``author`` matches the post commit's author email case-insensitively.
        Rows come ordered by post commit author date, then id.
        """
        where, params = [], []
        if since is not None:
            where.append("post.author_date >= ?")
            params.append(since)
        if until is not None:
            where.append("post.author_date < ?")
            params.append(until)
        if author is not None:
            where.append("lower(post.author_email) = lower(?)")
            params.append(author)
        if path_prefix is not None:
            where.append("(substr(coalesce(c.mod_new_path, c.mod_old_path), 1, ?) = ?)")
            params += [len(path_prefix), path_prefix]
        if kind is not None:
            where.append("c.kind = ?")
            params.append(kind)
        cols = ",".join(f"c.{c}" for c in ("id",) + COEDIT_COLUMNS)
        post_cols = ",".join(f"post.{c}" for c in COMMIT_COLUMNS)
        pre_cols = ",".join(f"pre.{c}" for c in COMMIT_COLUMNS)
        sql = (
            f"SELECT {cols}, {post_cols}, {pre_cols} FROM coedits c "
            "JOIN commits post ON post.hash = c.post_commit "
            "LEFT JOIN commits pre ON pre.hash = c.pre_commit"
        )
        if where:
            sql += " WHERE " + " AND ".join(where)
        sql += " ORDER BY post.author_date, c.id"
        n_coedit, n_commit = len(COEDIT_COLUMNS) + 1, len(COMMIT_COLUMNS)
        for row in self._query(sql, params):
            pre_row = row[n_coedit + n_commit:]
            yield JoinedCoEdit(
                record=coedit_from_row(row[:n_coedit]),
                post=commit_from_row(row[n_coedit:n_coedit + n_commit]),
                pre=commit_from_row(pre_row) if pre_row[0] is not None else None,
            )

    def check_integrity(self) -> list[str]:
        """Descriptions of dangling references; empty when the store is consistent."""
        problems = []
        for (row_id, post) in self._query(
            "SELECT id, post_commit FROM coedits WHERE post_commit NOT IN (SELECT hash FROM commits)"
        ):
            problems.append(f"coedit {row_id}: post_commit {post} has no commits row")
        for (row_id, pre) in self._query(
            "SELECT id, pre_commit FROM coedits WHERE pre_commit IS NOT NULL "
            "AND pre_commit NOT IN (SELECT hash FROM commits)"
        ):
            problems.append(f"coedit {row_id}: pre_commit {pre} has no commits row")
        return problems

    def table_digest(self) -> str:
        """Order-insensitive digest of the mined contents, ignoring row ids."""
        digest = hashlib.sha256()
        meta = self._meta()
        digest.update(json.dumps({k: meta.get(k) for k in DIGEST_META_KEYS}).encode())
        for table in DIGEST_TABLES:
            cols = [r[1] for r in self._query(f"PRAGMA table_info({table})") if r[1] != "id"]
            rows = sorted(json.dumps(list(r)) for r in
                          self._query(f"SELECT {','.join(cols)} FROM {table}"))
            digest.update(table.encode())
            for row in rows:
                digest.update(row.encode() + b"\n")
        return digest.hexdigest()


def init_store(path, mode: str, repository: Optional[str] = None) -> Store:
    """Open (creating if needed) a store for writing with granularity ``mode``."""
    return Store(path, mode=mode, repository=repository)


def open_store(path) -> Store:
    """Open an existing store read-only."""
    return Store(path, readonly=True)


def processed_commits(store: Store) -> set[str]:
    return store.processed_commits()


def write_commit(store: Store, commit: CommitRecord, records: Iterable[CoEditRecord],
                 modifications: Iterable[FileModification] = ()) -> None:
    store.write_commit(commit, records, modifications)


def query_coedits(store: Store, **filters) -> Iterator[JoinedCoEdit]:
    return store.query_coedits(**filters)
