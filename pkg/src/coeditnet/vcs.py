"""Read-only access to a local git repository through the ``git`` binary.

Every :class:`Repository` owns its own ``git cat-file --batch`` child process,
so a handle must not be shared between worker processes; open one per worker.
"""

from __future__ import annotations

import os
import re
import subprocess
from pathlib import Path
from typing import Iterable, NamedTuple, Optional, Sequence

from .coedit import estimate_cyclomatic
from .errors import (
    BinaryFile,
    CommitNotFound,
    EmptyRepository,
    FileNotAtRevision,
    GitCommandError,
    MalformedDiff,
    NotARepository,
)
from .records import CommitRecord, FileModification

EMPTY_TREE = "4b825dc642cb6eb9a060e54bf8d69288fbee4904"
NULL_SHA = "0" * 40
BINARY_SNIFF_BYTES = 8000
GITLINK_MODE = "160000"

_FIELD = "\x1f"
_LOG_FORMAT = "%x1e" + "%x1f".join(
    ["%H", "%P", "%an", "%ae", "%at", "%ai", "%cn", "%ce", "%ct", "%ci", "%B"]
) + "%x1d"
_HUNK_HEADER = re.compile(r"^@@ -(\d+)(?:,(\d+))? \+(\d+)(?:,(\d+))? @@")
# Beyond this many separate -L ranges a full blame is cheaper to issue.
_MAX_BLAME_RANGES = 100


class LineOrigin(NamedTuple):
    commit: str
    author_email: str
    author_name: str


def _decode(raw: bytes) -> str:
    return raw.decode("utf-8", "surrogateescape")


def _text(raw: bytes) -> str:
    return raw.decode("utf-8", "replace")


def _tz_minutes(iso_date: str) -> int:
    offset = iso_date.rsplit(" ", 1)[-1]
    sign = -1 if offset.startswith("-") else 1
    digits = offset.lstrip("+-")
    return sign * (int(digits[:2]) * 60 + int(digits[2:4]))


def is_binary(content: Optional[bytes]) -> bool:
    return bool(content) and b"\0" in content[:BINARY_SNIFF_BYTES]


def count_lines(content: bytes) -> int:
    if not content:
        return 0
    return content.count(b"\n") + (0 if content.endswith(b"\n") else 1)


class Repository:
    """Handle on one on-disk repository."""

    def __init__(self, path):
        path = Path(path)
        if not path.is_dir():
            raise NotARepository(f"{path} is not a directory")
        proc = subprocess.run(
            ["git", "-C", str(path), "rev-parse", "--is-bare-repository", "--show-toplevel"],
            capture_output=True,
        )
        answer = _decode(proc.stdout).split("\n")
        if proc.returncode != 0 and answer[0] != "true":
            raise NotARepository(f"{path} is not a git repository")
        bare = answer[0] == "true"
        self.path = path.resolve() if bare else Path(answer[1])
        self.project_name = self.path.name.removesuffix(".git") or self.path.name
        self._batch: Optional[subprocess.Popen] = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def __getstate__(self):
        raise TypeError("Repository handles are per-process; pass the path instead")

    def close(self):
        if self._batch is not None:
            try:
                self._batch.stdin.close()
                self._batch.wait(timeout=5)
            except (OSError, subprocess.TimeoutExpired):
                self._batch.kill()
            self._batch = None

    def git(self, *args: str, check: bool = True) -> bytes:
        proc = subprocess.run(
            ["git", "-C", str(self.path), *args],
            capture_output=True,
            env={**os.environ, "GIT_TERMINAL_PROMPT": "0", "LC_ALL": "C"},
        )
        if check and proc.returncode != 0:
            raise GitCommandError(
                f"git {' '.join(args[:3])} failed: {_text(proc.stderr).strip()}"
            )
        return proc.stdout

    # -- objects ---------------------------------------------------------

    def read_object(self, name: str) -> Optional[bytes]:
        """Contents of an object (``sha`` or ``rev:path``), ``None`` if missing."""
        if name == NULL_SHA or "\n" in name:
            return None
        if self._batch is None:
            self._batch = subprocess.Popen(
                ["git", "-C", str(self.path), "cat-file", "--batch"],
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
            )
        self._batch.stdin.write(name.encode("utf-8", "surrogateescape") + b"\n")
        self._batch.stdin.flush()
        header = self._batch.stdout.readline()
        if not header or header.rstrip().endswith(b"missing") or b" " not in header:
            if not header:
                self._batch = None
            return None
        size = int(header.split()[2])
        data = self._batch.stdout.read(size)
        self._batch.stdout.read(1)
        return data

    def has_commit(self, rev: str) -> bool:
        proc = subprocess.run(
            ["git", "-C", str(self.path), "cat-file", "-e", f"{rev}^{{commit}}"],
            capture_output=True,
        )
        return proc.returncode == 0

    # -- commits ---------------------------------------------------------

    def list_commits(self, order: str = "chronological", branches: bool = False) -> list[CommitRecord]:
        """Every commit reachable from any ref, exactly once.

        ``order="topological"`` lists parents before children;
        ``order="chronological"`` sorts by committer date, then hash.
        """
        if order not in ("topological", "chronological"):
            raise ValueError(f"unknown commit order {order!r}")
        out = self.git(
            "log", "--all", "--topo-order", "--reverse", "--no-abbrev", "--raw", "-M",
            "--diff-merges=first-parent", "--no-color", f"--format={_LOG_FORMAT}",
        )
        main = self._reachable("HEAD")
        membership = self._branch_membership() if branches else {}
        commits = []
        for chunk in out.split(b"\x1e")[1:]:
            header, _, raw = chunk.partition(b"\x1d")
            commits.append(self._parse_log_entry(header, raw, main, membership))
        if not commits:
            raise EmptyRepository(f"{self.path} has no commits")
        if order == "chronological":
            commits.sort(key=lambda c: (c.committer_date, c.hash))
        return commits

    def get_commit(self, rev: str) -> CommitRecord:
        if not self.has_commit(rev):
            raise CommitNotFound(rev)
        out = self.git(
            "log", "-1", "--no-abbrev", "--raw", "-M", "--diff-merges=first-parent",
            "--no-color", f"--format={_LOG_FORMAT}", rev,
        )
        header, _, raw = out.split(b"\x1e")[1].partition(b"\x1d")
        return self._parse_log_entry(header, raw, self._reachable("HEAD"), {})

    def _parse_log_entry(self, header: bytes, raw: bytes, main: set, membership: dict) -> CommitRecord:
        fields = _text(header).split(_FIELD, 10)
        if len(fields) != 11:
            raise GitCommandError(f"unexpected log record: {fields[:1]}")
        sha, parents, an, ae, at, ai, cn, ce, ct, ci, message = fields
        modifications = 0
        for line in raw.split(b"\n"):
            if line.startswith(b":"):
                # gitlinks are skipped by the miner too
                old_mode, new_mode = line[1:].split(b" ", 2)[:2]
                if GITLINK_MODE.encode() not in (old_mode, new_mode):
                    modifications += 1
        return CommitRecord(
            hash=sha,
            author_date=int(at),
            author_timezone=_tz_minutes(ai),
            author_name=an,
            author_email=ae,
            committer_date=int(ct),
            committer_timezone=_tz_minutes(ci),
            committer_name=cn,
            committer_email=ce,
            parents=tuple(parents.split()),
            branches=tuple(membership.get(sha, ())),
            in_main_branch=sha in main,
            modifications=modifications,
            commit_message_len=len(message.strip()),
            project_name=self.project_name,
        )

    def _reachable(self, rev: str) -> set:
        proc = subprocess.run(
            ["git", "-C", str(self.path), "rev-list", rev, "--"], capture_output=True
        )
        if proc.returncode != 0:
            return set()
        return set(_text(proc.stdout).split())

    def _branch_membership(self) -> dict:
        names = _text(self.git("for-each-ref", "--format=%(refname:short)", "refs/heads")).split()
        membership: dict = {}
        for name in sorted(names):
            for sha in self._reachable(f"refs/heads/{name}"):
                membership.setdefault(sha, []).append(name)
        return membership

    # -- modifications ---------------------------------------------------

    def extract_modifications(self, commit, cyclomatic: bool = False) -> list[FileModification]:
        """Changed files of ``commit`` against its first parent (or the empty tree)."""
        if isinstance(commit, CommitRecord):
            sha, base = commit.hash, commit.first_parent
        else:
            sha = commit
            if not self.has_commit(sha):
                raise CommitNotFound(sha)
            base = self.get_commit(sha).first_parent
        base = base or EMPTY_TREE
        try:
            raw = self.git("diff-tree", "-r", "-M", "--raw", "-z", "--no-commit-id", base, sha)
            patch = self.git(
                "diff-tree", "-r", "-M", "-p", "-U0", "--no-color", "--no-ext-diff",
                "--full-index", "--diff-algorithm=myers", "--no-commit-id", base, sha,
            )
        except GitCommandError:
            if not self.has_commit(sha):
                raise CommitNotFound(sha) from None
            raise
        entries = _parse_raw_z(raw)
        sections = _split_patch(patch)
        if len(sections) != len(entries):
            sections = [self._patch_for(base, sha, e) for e in entries]

        mods = []
        for entry, section in zip(entries, sections):
            old_mode, new_mode, old_sha, new_sha, status, old_path, new_path = entry
            if GITLINK_MODE in (old_mode, new_mode):
                continue
            kind = status[0]
            if kind == "A":
                old_path = None
            if kind == "D":
                new_path = None
            old_content = self.read_object(old_sha) if old_path is not None else None
            new_content = self.read_object(new_sha) if new_path is not None else None
            binary = (
                is_binary(old_content)
                or is_binary(new_content)
                or "\nBinary files " in section
                or section.startswith("Binary files ")
            )
            diff_text = "" if binary else section
            added = removed = 0
            if diff_text:
                deleted_lines, added_lines = parse_diff(diff_text)
                added, removed = len(added_lines), len(deleted_lines)
            loc = token_count = complexity = None
            if new_content is not None and not binary:
                loc = count_lines(new_content)
                token_count = len(new_content.split())
                if cyclomatic:
                    complexity = estimate_cyclomatic(_decode(new_content), new_path)
            mods.append(
                FileModification(
                    old_path=old_path,
                    new_path=new_path,
                    diff_text=diff_text,
                    added_count=added,
                    removed_count=removed,
                    loc=loc,
                    token_count=token_count,
                    binary=binary,
                    change_type=kind,
                    cyclomatic_complexity=complexity,
                )
            )
        return mods

    def _patch_for(self, base: str, sha: str, entry) -> str:
        paths = [p for p in (entry[5], entry[6]) if p is not None]
        out = self.git(
            "diff-tree", "-r", "-M", "-p", "-U0", "--no-color", "--no-ext-diff",
            "--full-index", "--diff-algorithm=myers", "--no-commit-id", base, sha, "--", *paths,
        )
        sections = _split_patch(out)
        return sections[0] if sections else ""

    # -- blame -----------------------------------------------------------

    def blame_pre_image(self, path: str, revision: str, lines: Optional[Iterable[int]] = None) -> dict:
        """Map 1-based line numbers of ``path`` at ``revision`` to their origin.

        Plain line-history blame (no copy/move detection). With ``lines`` only
        the requested lines are resolved.
        """
        content = self.read_object(f"{revision}:{path}")
        if content is None:
            raise FileNotAtRevision(f"{path} does not exist at {revision}")
        if is_binary(content):
            raise BinaryFile(f"{path} is binary at {revision}")
        n_lines = count_lines(content)
        if n_lines == 0:
            return {}
        args = ["blame", "--porcelain"]
        if lines is not None:
            ranges = _ranges(sorted({n for n in lines if 1 <= n <= n_lines}))
            if not ranges:
                return {}
            if len(ranges) <= _MAX_BLAME_RANGES:
                for start, end in ranges:
                    args += ["-L", f"{start},{end}"]
        out = self.git(*args, revision, "--", path)
        return _parse_porcelain(out)


def _parse_raw_z(raw: bytes) -> list[tuple]:
    tokens = raw.split(b"\0")
    entries = []
    i = 0
    while i < len(tokens):
        head = tokens[i]
        if not head:
            i += 1
            continue
        if not head.startswith(b":"):
            raise GitCommandError(f"unexpected raw diff token {head[:40]!r}")
        old_mode, new_mode, old_sha, new_sha, status = _text(head[1:]).split(" ")
        if status[0] in "RC":
            old_path, new_path = _decode(tokens[i + 1]), _decode(tokens[i + 2])
            i += 3
        else:
            old_path = new_path = _decode(tokens[i + 1])
            i += 2
        entries.append((old_mode, new_mode, old_sha, new_sha, status, old_path, new_path))
    return entries


def _split_patch(patch: bytes) -> list[str]:
    sections: list[list[bytes]] = []
    for line in patch.split(b"\n"):
        if line.startswith(b"diff --git "):
            sections.append([line])
        elif sections:
            sections[-1].append(line)
    return [_decode(b"\n".join(s)).rstrip("\n") + "\n" for s in sections]


def _ranges(numbers: Sequence[int]) -> list[tuple[int, int]]:
    ranges: list[list[int]] = []
    for n in numbers:
        if ranges and n == ranges[-1][1] + 1:
            ranges[-1][1] = n
        else:
            ranges.append([n, n])
    return [(a, b) for a, b in ranges]


def _parse_porcelain(out: bytes) -> dict:
    origins: dict[int, LineOrigin] = {}
    authors: dict[str, tuple[str, str]] = {}
    lines = out.split(b"\n")
    i = 0
    while i < len(lines):
        header = lines[i]
        i += 1
        if not header:
            continue
        parts = header.split(b" ")
        sha, final_line = _text(parts[0]), int(parts[2])
        name = email = None
        while i < len(lines) and not lines[i].startswith(b"\t"):
            key, _, value = lines[i].partition(b" ")
            if key == b"author":
                name = _text(value)
            elif key == b"author-mail":
                email = _text(value).strip("<>")
            i += 1
        i += 1  # the content line
        if sha not in authors:
            authors[sha] = (email or "", name or "")
        email, name = authors[sha]
        origins[final_line] = LineOrigin(sha, email, name)
    return origins


def parse_diff(diff) -> tuple[list[tuple[int, str]], list[tuple[int, str]]]:
    """Deleted and added lines of a unified diff with their line numbers.

    Deleted lines carry pre-image coordinates, added lines post-image ones.
    Accepts a :class:`FileModification` or raw diff text.
    """
    text = diff.diff_text if isinstance(diff, FileModification) else diff
    deleted: list[tuple[int, str]] = []
    added: list[tuple[int, str]] = []
    if not text:
        return deleted, added
    lines = text.split("\n")
    if lines[-1] == "":
        lines.pop()
    i, n = 0, len(lines)
    while i < n:
        header = _HUNK_HEADER.match(lines[i])
        i += 1
        if header is None:
            if lines[i - 1].startswith("@@"):
                raise MalformedDiff(f"bad hunk header {lines[i - 1]!r}")
            continue
        pre, old_left = int(header.group(1)), int(header.group(2) or 1)
        post, new_left = int(header.group(3)), int(header.group(4) or 1)
        while old_left > 0 or new_left > 0:
            if i >= n:
                raise MalformedDiff("diff ends inside a hunk")
            line = lines[i]
            i += 1
            tag = line[:1]
            if tag == "\\":
                continue
            if tag == "-" and old_left > 0:
                deleted.append((pre, line[1:]))
                pre += 1
                old_left -= 1
            elif tag == "+" and new_left > 0:
                added.append((post, line[1:]))
                post += 1
                new_left -= 1
            elif tag in (" ", "") and old_left > 0 and new_left > 0:
                pre += 1
                post += 1
                old_left -= 1
                new_left -= 1
            else:
                raise MalformedDiff(f"unexpected line {line[:40]!r} in hunk")
    return deleted, added


def list_commits(repo_path, order: str = "chronological", branches: bool = False) -> list[CommitRecord]:
    with Repository(repo_path) as repo:
        return repo.list_commits(order=order, branches=branches)
