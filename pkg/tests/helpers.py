"""Scripted git repositories with known authorship, used as test fixtures."""

from __future__ import annotations

import os
import subprocess
from pathlib import Path
from typing import Optional, Union

from coeditnet.mining import MiningOptions, mine
from coeditnet.store import init_store

ALICE = ("Alice", "alice@example.com")
BOB = ("Bob", "bob@example.com")
CAROL = ("Carol", "carol@example.com")
DAVE = ("Dave", "dave@example.com")
HUB = ("Hub", "hub@example.com")

Content = Union[str, bytes, list, None]


def lines(*items: str) -> str:
    return "".join(f"{item}\n" for item in items)


class RepoBuilder:
    def __init__(self, path):
        self.path = Path(path)
        self.path.mkdir(parents=True, exist_ok=True)
        self.git("init", "-q", "-b", "main")
        self.commits: list[str] = []

    def git(self, *args: str, env: Optional[dict] = None) -> str:
        full_env = {
            **os.environ,
            "GIT_CONFIG_NOSYSTEM": "1",
            "GIT_CONFIG_GLOBAL": os.devnull,
            "GIT_AUTHOR_NAME": "Fixture",
            "GIT_AUTHOR_EMAIL": "fixture@example.com",
            "GIT_COMMITTER_NAME": "Fixture",
            "GIT_COMMITTER_EMAIL": "fixture@example.com",
            **(env or {}),
        }
        proc = subprocess.run(["git", "-C", str(self.path), *args], capture_output=True,
                              text=True, env=full_env)
        if proc.returncode != 0:
            raise RuntimeError(f"git {args}: {proc.stderr}")
        return proc.stdout.strip()

    def _env(self, author, when: str) -> dict:
        name, email = author
        return {
            "GIT_AUTHOR_NAME": name, "GIT_AUTHOR_EMAIL": email, "GIT_AUTHOR_DATE": when,
            "GIT_COMMITTER_NAME": name, "GIT_COMMITTER_EMAIL": email,
            "GIT_COMMITTER_DATE": when,
        }

    def write(self, rel: str, content: Content) -> None:
        target = self.path / rel
        if content is None:
            self.git("rm", "-q", "--", rel)
            return
        target.parent.mkdir(parents=True, exist_ok=True)
        if isinstance(content, list):
            content = lines(*content)
        if isinstance(content, str):
            content = content.encode()
        target.write_bytes(content)
        self.git("add", "--", rel)

    def commit(self, author, when: str, files: Optional[dict] = None,
               renames: Optional[dict] = None, message: str = "change") -> str:
        for old, new in (renames or {}).items():
            (self.path / new).parent.mkdir(parents=True, exist_ok=True)
            self.git("mv", "--", old, new)
        for rel, content in (files or {}).items():
            self.write(rel, content)
        self.git("commit", "-q", "--allow-empty", "-m", message, env=self._env(author, when))
        sha = self.git("rev-parse", "HEAD")
        self.commits.append(sha)
        return sha

    def checkout(self, branch: str, create: bool = False) -> None:
        self.git("checkout", "-q", *(["-b"] if create else []), branch)

    def merge(self, author, when: str, branch: str) -> str:
        self.git("merge", "-q", "--no-ff", "--no-edit", branch, env=self._env(author, when))
        sha = self.git("rev-parse", "HEAD")
        self.commits.append(sha)
        return sha


def mine_into(repo_path, db_path, granularity: str = "line", workers=1, **kwargs):
    options = MiningOptions(granularity=granularity, worker_count=workers, **kwargs)
    with init_store(db_path, granularity) as store:
        return mine(repo_path, store, options, progress=None)


# -- fixture repositories ------------------------------------------------


def build_e2e_repo(path) -> RepoBuilder:
    """Six commits by three authors; hand-traced rows in test_acceptance."""
    repo = RepoBuilder(path)
    repo.commit(ALICE, "2021-01-01T10:00:00+00:00", {"a.txt": ["l1", "l2", "l3", "l4"]})
    repo.commit(BOB, "2021-01-02T10:00:00+01:00", {"a.txt": ["l1", "L2 bob", "l3", "l4"]})
    repo.commit(CAROL, "2021-01-03T10:00:00-05:00",
                {"a.txt": ["l1", "L2 bob", "l4"], "b.txt": ["x", "y"]})
    repo.commit(ALICE, "2021-01-04T10:00:00+00:00", {"a.txt": ["l1", "L2 alice", "l4"]})
    repo.commit(BOB, "2021-01-05T10:00:00+00:00", {"b.txt": ["x", "yy", "z"]})
    repo.commit(CAROL, "2021-01-06T10:00:00+00:00",
                {"a.txt": ["l1", "L2 alice"], "b.txt": ["x2", "yy", "z"]})
    return repo


THREE_GROUP_PRE = ["p1", "p2", "p3", "p4", "p5", "p6", "p7", "p8", "p9"]
THREE_GROUP_POST = ["p1", "p3", "n3", "n4", "n5", "p6", "n7", "p9"]


def build_three_group_repo(path) -> RepoBuilder:
    """Pure deletion of line 2, lines 4-5 -> 3-5, lines 7-8 -> 7."""
    repo = RepoBuilder(path)
    repo.commit(ALICE, "2021-03-01T09:00:00+00:00", {"f.txt": THREE_GROUP_PRE})
    repo.commit(BOB, "2021-03-02T09:00:00+00:00", {"f.txt": THREE_GROUP_POST})
    return repo


def build_star_repo(path) -> RepoBuilder:
    """Four developers each write a file; a hub edits one line of each."""
    repo = RepoBuilder(path)
    for day, author in enumerate([ALICE, BOB, CAROL, DAVE], start=1):
        repo.commit(author, f"2021-02-0{day}T10:00:00+00:00",
                    {f"{author[0].lower()}.txt": [f"{author[0]} 1", f"{author[0]} 2"]})
    for day, author in enumerate([ALICE, BOB, CAROL, DAVE], start=5):
        name = author[0]
        repo.commit(HUB, f"2021-02-0{day}T10:00:00+00:00",
                    {f"{name.lower()}.txt": [f"{name} 1 hub", f"{name} 2"]})
    return repo


def build_cycle_repo(path) -> RepoBuilder:
    """A edits B's code, B edits C's, C edits D's, D edits A's."""
    repo = RepoBuilder(path)
    people = [ALICE, BOB, CAROL, DAVE]
    for day, author in enumerate(people, start=1):
        repo.commit(author, f"2021-02-0{day}T10:00:00+00:00",
                    {f"{author[0].lower()}.txt": [f"{author[0]} code"]})
    for day, (editor, owner) in enumerate(zip(people, people[1:] + people[:1]), start=5):
        repo.commit(editor, f"2021-02-0{day}T10:00:00+00:00",
                    {f"{owner[0].lower()}.txt": [f"{owner[0]} code edited by {editor[0]}"]})
    return repo


def build_window_delta_repo(path) -> RepoBuilder:
    """Alice writes a file; 200 days later only Bob edits her lines."""
    repo = RepoBuilder(path)
    repo.commit(ALICE, "2020-01-01T12:00:00+00:00", {"doc.txt": ["alpha", "beta", "gamma"]})
    repo.commit(BOB, "2020-07-19T12:00:00+00:00", {"doc.txt": ["alpha", "BETA", "gamma"]})
    return repo


def build_dag_repo(path) -> RepoBuilder:
    """Five commits on one file with scripted overlaps (see test_networks)."""
    repo = RepoBuilder(path)
    repo.commit(ALICE, "2021-04-01T10:00:00+00:00", {"f.c": ["a1", "a2", "a3", "a4"]})   # c1
    repo.commit(BOB, "2021-04-02T10:00:00+00:00", {"f.c": ["a1", "b2", "a3", "a4"]})     # c2: c1
    repo.commit(CAROL, "2021-04-03T10:00:00+00:00",
                {"f.c": ["a1", "b2", "a3", "a4", "c5", "c6"]})                          # c3: adds
    repo.commit(ALICE, "2021-04-04T10:00:00+00:00",
                {"f.c": ["a1", "B2", "a3", "a4", "C5", "c6"]})                          # c4: c2, c3
    repo.commit(BOB, "2021-04-05T10:00:00+00:00",
                {"f.c": ["A1", "B2", "a3", "a4", "C5", "c6"], "g.c": ["g"]})            # c5: c1
    return repo


def build_block_multi_origin_repo(path) -> RepoBuilder:
    """Lines 4-5 come from two commits and are replaced as one block."""
    repo = RepoBuilder(path)
    repo.commit(ALICE, "2021-05-01T10:00:00+00:00", {"m.txt": ["1", "2", "3", "four", "five"]})
    repo.commit(BOB, "2021-05-02T10:00:00+00:00", {"m.txt": ["1", "2", "3", "four", "FIVE"]})
    repo.commit(CAROL, "2021-05-03T10:00:00+00:00",
                {"m.txt": ["1", "2", "3", "new four and five", "more", "extra"]})
    return repo


def build_mixed_repo(path) -> RepoBuilder:
    """Renames, merges, binaries, vendor files, a deletion and a self-edit."""
    repo = RepoBuilder(path)
    repo.commit(ALICE, "2021-06-01T10:00:00+00:00",
                {"src/app.py": ["import os", "def main():", "    return 1"],
                 "vendor/lib.js": ["var a = 1;", "var b = 2;"],
                 "logo.bin": b"\x89PNG\0\0\x01binary"})
    repo.commit(BOB, "2021-06-02T10:00:00+00:00",
                {"src/app.py": ["import os", "def main():", "    return 2"],
                 "vendor/lib.js": ["var a = 10;", "var b = 2;"],
                 "logo.bin": b"\x89PNG\0\0\x02binary"})
    repo.commit(ALICE, "2021-06-03T10:00:00+00:00", renames={"src/app.py": "src/main.py"})
    repo.checkout("feature", create=True)
    repo.commit(CAROL, "2021-06-04T10:00:00+00:00",
                {"src/main.py": ["import os", "import sys", "def main():", "    return 2"]})
    repo.checkout("main")
    repo.commit(ALICE, "2021-06-05T10:00:00+00:00",
                {"src/main.py": ["import os", "def main():", "    return 3"]})
    repo.merge(BOB, "2021-06-06T10:00:00+00:00", "feature")
    repo.commit(BOB, "2021-06-07T10:00:00+00:00", {"vendor/lib.js": None})
    return repo


def coedit_rows(db_path, repo: RepoBuilder) -> list[tuple]:
    """Compact (kind, pre idx, post idx, original author, editor, path, pre line, post line,
    levenshtein, attributed lines) tuples, commits referred to by build order."""
    from coeditnet.store import open_store

    index = {sha: i for i, sha in enumerate(repo.commits)}
    rows = []
    with open_store(db_path) as store:
        for joined in store.query_coedits():
            r = joined.record
            pre_line = r.pre_line_num if r.granularity == "line" else r.pre_block_starting_line_num
            post_line = (r.post_line_num if r.granularity == "line"
                         else r.post_block_starting_line_num)
            rows.append((
                r.kind, index.get(r.pre_commit), index[r.post_commit],
                joined.pre.author_name if joined.pre else None, joined.post.author_name,
                r.path, pre_line, post_line, r.levenshtein_dist, r.attributed_line_count,
            ))
    return rows


def build_synthetic_repo(path, n_commits: int, n_files: int = 12, n_authors: int = 6,
                         seed: int = 1, lines_per_file: int = 60) -> Path:
    """A linear history of random line edits, written with ``git fast-import``."""
    import random

    rng = random.Random(seed)
    path = Path(path)
    RepoBuilder(path)
    files: dict[str, list[str]] = {}
    start = 1_500_000_000
    stream = []
    for n in range(n_commits):
        author = rng.randrange(n_authors)
        when = start + n * 3600
        changed = {}
        if n < n_files:
            name = f"src/mod{n:03d}.c"
            changed[name] = [f"int f{n}_{k}(void) {{ return {k}; }}" for k in range(lines_per_file)]
        else:
            for name in rng.sample(sorted(files), rng.randint(1, 3)):
                body = list(files[name])
                for _ in range(rng.randint(1, 4)):
                    op = rng.random()
                    at = rng.randrange(len(body)) if body else 0
                    if op < 0.5 and body:
                        body[at] = f"{body[at][:20]} /* a{author} c{n} */"
                    elif op < 0.75 or not body:
                        body.insert(at, f"int g{n}_{at}(void) {{ return {rng.randrange(999)}; }}")
                    else:
                        del body[at:at + rng.randint(1, 3)]
                changed[name] = body
        files.update(changed)
        stream.append(f"commit refs/heads/main\nmark :{n + 1}\n")
        ident = f"Dev{author} <dev{author}@example.com> {when} +0000"
        stream.append(f"author {ident}\ncommitter {ident}\n")
        message = f"commit {n}"
        stream.append(f"data {len(message)}\n{message}\n")
        if n:
            stream.append(f"from :{n}\n")
        for name, body in sorted(changed.items()):
            data = "".join(line + "\n" for line in body).encode()
            stream.append(f"M 100644 inline {name}\ndata {len(data)}\n")
            stream.append(data.decode() + "\n")
    subprocess.run(["git", "-C", str(path), "fast-import", "--quiet"], check=True,
                   input="".join(stream).encode())
    subprocess.run(["git", "-C", str(path), "checkout", "-q", "-f", "main"], check=True)
    return path
