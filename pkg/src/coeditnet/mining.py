"""Mining a repository into a co-edit store, optionally with worker processes."""

from __future__ import annotations

import fnmatch
import json
import logging
import multiprocessing
import os
import sys
import time
from concurrent.futures import FIRST_COMPLETED, ProcessPoolExecutor, wait
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable, Optional, Sequence, Union

from .coedit import attribute_events, group_edits, match_events
from .errors import CoeditError, ModeMismatch
from .records import GRANULARITIES, CoEditRecord, CommitRecord, FileModification
from .store import Store
from .vcs import Repository, parse_diff

log = logging.getLogger(__name__)

WORKERS_ENV = "GIT2NET_WORKERS"
PROGRESS_EVERY = 100


@dataclass
class MiningOptions:
    granularity: str = "line"
    exclude_paths: list[str] = field(default_factory=list)
    worker_count: Union[int, str] = "auto"
    include_merges: bool = True
    max_modifications_per_commit: Optional[int] = None
    entropy_filter_threshold: Optional[float] = None
    branches: bool = False
    cyclomatic: bool = False

    def __post_init__(self):
        if self.granularity not in GRANULARITIES:
            raise ValueError(f"granularity must be one of {GRANULARITIES}")
        if self.worker_count != "auto" and (
            not isinstance(self.worker_count, int) or self.worker_count < 1
        ):
            raise ValueError("worker_count must be a positive integer or 'auto'")
        if self.entropy_filter_threshold is not None and not (
            0 <= self.entropy_filter_threshold <= 8
        ):
            raise ValueError("entropy_filter_threshold must lie in [0, 8]")
        if self.max_modifications_per_commit is not None and self.max_modifications_per_commit < 0:
            raise ValueError("max_modifications_per_commit must be non-negative")

    def resolved_workers(self) -> int:
        if self.worker_count != "auto":
            return self.worker_count
        env = os.environ.get(WORKERS_ENV)
        if env:
            try:
                value = int(env)
            except ValueError:
                raise ValueError(f"{WORKERS_ENV} must be an integer, got {env!r}") from None
            if value < 1:
                raise ValueError(f"{WORKERS_ENV} must be positive")
            return value
        return os.cpu_count() or 1


@dataclass
class MiningStats:
    commits_processed: int = 0
    commits_skipped: int = 0
    commits_failed: int = 0
    coedits_written: int = 0
    wall_time: float = 0.0
    workers: int = 1

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


@dataclass
class CommitAnalysis:
    commit: CommitRecord
    records: list[CoEditRecord]
    modifications: list[FileModification]
    skipped_files: list[str] = field(default_factory=list)


def is_excluded(path: Optional[str], patterns: Iterable[str]) -> bool:
    """Whether ``path`` is matched by an exact path, a glob or a directory prefix."""
    if path is None:
        return False
    basename = path.rsplit("/", 1)[-1]
    for pattern in patterns:
        if path == pattern:
            return True
        if any(ch in pattern for ch in "*?["):
            if fnmatch.fnmatchcase(path, pattern) or fnmatch.fnmatchcase(basename, pattern):
                return True
            continue
        prefix = pattern.rstrip("/")
        if prefix and (path == prefix or path.startswith(prefix + "/")):
            return True
    return False


def read_exclude_file(path) -> list[str]:
    """One pattern per line; blank lines and ``#`` comments are ignored."""
    patterns = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if line:
                patterns.append(line)
    return patterns


def plan_work(all_commits: Sequence[CommitRecord], processed: set) -> list[CommitRecord]:
    """Unprocessed commits in chronological order (committer date, then hash)."""
    todo = [c for c in all_commits if c.hash not in processed]
    return sorted(todo, key=lambda c: (c.committer_date, c.hash))


def _passes_entropy_filter(record: CoEditRecord, threshold: Optional[float]) -> bool:
    if threshold is None:
        return True
    values = [v for v in (record.pre_entropy, record.post_entropy) if v is not None]
    return all(v <= threshold for v in values)


def analyze_commit(repo: Repository, commit: CommitRecord, options: MiningOptions) -> CommitAnalysis:
    """Extract the attributed co-edit records of one commit.

    A file whose analysis fails is logged and skipped; the remaining files of
    the commit are still analysed.
    """
    mods = [
        m for m in repo.extract_modifications(commit, cyclomatic=options.cyclomatic)
        if not (is_excluded(m.old_path, options.exclude_paths)
                or is_excluded(m.new_path, options.exclude_paths))
    ]
    analysis = CommitAnalysis(commit, [], mods)
    if commit.merge and not options.include_merges:
        return analysis
    cap = options.max_modifications_per_commit
    if cap is not None and len(mods) > cap:
        return analysis

    for mod in mods:
        if mod.binary or not mod.diff_text:
            continue
        try:
            deleted, added = parse_diff(mod)
            groups = group_edits(deleted, added)
            events = match_events(groups, options.granularity)
            blame = {}
            if deleted and commit.first_parent is not None:
                blame = repo.blame_pre_image(
                    mod.old_path, commit.first_parent, lines=[n for n, _ in deleted]
                )
            records = attribute_events(events, blame, commit, mod)
        except CoeditError as exc:
            log.warning("skipping %s in %s: %s", mod.path, commit.hash[:10], exc)
            analysis.skipped_files.append(mod.path)
            continue
        analysis.records.extend(
            r for r in records if _passes_entropy_filter(r, options.entropy_filter_threshold)
        )
    return analysis


_worker_repo: Optional[Repository] = None
_worker_options: Optional[MiningOptions] = None


def _init_worker(repo_path: str, options: MiningOptions) -> None:
    global _worker_repo, _worker_options
    _worker_repo = Repository(repo_path)
    _worker_options = options


def _work(commit: CommitRecord) -> CommitAnalysis:
    return analyze_commit(_worker_repo, commit, _worker_options)


def stderr_progress(done: int, total: int) -> None:
    print(f"mined {done}/{total} commits", file=sys.stderr, flush=True)


def mine(
    repo_path,
    store: Store,
    options: Optional[MiningOptions] = None,
    progress: Optional[Callable[[int, int], None]] = stderr_progress,
    on_commit: Optional[Callable[[CommitAnalysis], None]] = None,
) -> MiningStats:
    """Analyse every commit of ``repo_path`` not yet in ``store``.

    Workers analyse commits; this process is the only writer. At most
    ``2 * workers`` finished or pending commits are in flight at any time.
    ``on_commit`` is called after each commit has been written.
    """
    options = options or MiningOptions()
    if store.mode != options.granularity:
        raise ModeMismatch(f"store mode {store.mode} != granularity {options.granularity}")
    started = time.perf_counter()
    workers = options.resolved_workers()
    stats = MiningStats(workers=workers)

    with Repository(repo_path) as repo:
        all_commits = repo.list_commits(order="chronological", branches=options.branches)
        todo = plan_work(all_commits, store.processed_commits())
        stats.commits_skipped = len(all_commits) - len(todo)
        total = len(todo)

        def finish(analysis: CommitAnalysis) -> None:
            store.write_commit(analysis.commit, analysis.records, analysis.modifications)
            stats.commits_processed += 1
            stats.coedits_written += len(analysis.records)
            if progress is not None and stats.commits_processed % PROGRESS_EVERY == 0:
                progress(stats.commits_processed, total)
            if on_commit is not None:
                on_commit(analysis)

        def retry(commit: CommitRecord, first_error: BaseException) -> None:
            log.warning("commit %s failed (%s); retrying in the main process",
                        commit.hash[:10], first_error)
            try:
                analysis = analyze_commit(repo, commit, options)
            except Exception as exc:  # noqa: BLE001 - any failure is recorded
                log.error("commit %s failed twice: %s", commit.hash[:10], exc)
                store.record_failure(commit.hash, f"{type(exc).__name__}: {exc}")
                stats.commits_failed += 1
                return
            finish(analysis)

        if workers == 1 or total <= 1:
            for commit in todo:
                try:
                    analysis = analyze_commit(repo, commit, options)
                except Exception as exc:  # noqa: BLE001 - retried, then recorded
                    retry(commit, exc)
                    continue
                finish(analysis)
        else:
            _mine_parallel(repo, todo, options, workers, finish, retry)

    stats.wall_time = time.perf_counter() - started
    return stats


def _mine_parallel(repo, todo, options, workers, finish, retry) -> None:
    context = multiprocessing.get_context("spawn")
    bound = 2 * workers
    queue = iter(todo)
    pending: dict = {}
    with ProcessPoolExecutor(
        max_workers=workers, mp_context=context,
        initializer=_init_worker, initargs=(str(repo.path), options),
    ) as pool:
        def submit_next() -> bool:
            commit = next(queue, None)
            if commit is None:
                return False
            pending[pool.submit(_work, commit)] = commit
            return True

        while len(pending) < bound and submit_next():
            pass
        while pending:
            done, _ = wait(pending, return_when=FIRST_COMPLETED)
            for future in done:
                commit = pending.pop(future)
                error = future.exception()
                if error is not None:
                    retry(commit, error)
                else:
                    finish(future.result())
                submit_next()
