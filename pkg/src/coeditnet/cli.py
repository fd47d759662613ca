"""Command line interface: ``coeditnet mine|graph|analyze``.

Exit codes: 0 success, 1 usage error, 2 repository error, 3 store error.
"""

from __future__ import annotations

import argparse
import hashlib
import logging
import os
import shutil
import subprocess
import sys
from datetime import date, datetime, timezone
from pathlib import Path
from typing import Optional, Sequence

from . import networks
from .errors import CoeditError, InvalidWindow, PathNotFound, RepositoryError, StoreError
from .mining import WORKERS_ENV, MiningOptions, mine, read_exclude_file, stderr_progress
from .store import init_store, open_store

EXIT_OK, EXIT_USAGE, EXIT_REPOSITORY, EXIT_STORE = 0, 1, 2, 3
FAR_FUTURE = 2 ** 62


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return value


def _utc_midnight(text: str) -> int:
    try:
        day = date.fromisoformat(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected YYYY-MM-DD, got {text!r}") from None
    if len(text) != 10:
        raise argparse.ArgumentTypeError(f"expected YYYY-MM-DD, got {text!r}")
    return int(datetime(day.year, day.month, day.day, tzinfo=timezone.utc).timestamp())


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="coeditnet",
        description="Mine time-stamped co-editing networks from git repositories.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log per-file warnings")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    m = sub.add_parser("mine", help="mine a repository into a co-edit database")
    m.add_argument("repo", help="local repository directory or clone URL")
    m.add_argument("db", help="sqlite database to create or resume")
    m.add_argument("--exclude", metavar="FILE",
                   help="file listing paths, directory prefixes or globs to skip, one per line")
    m.add_argument("--use-blocks", action="store_true",
                   help="extract co-edits per contiguous block instead of per line")
    workers = m.add_mutually_exclusive_group()
    workers.add_argument("--no-parallel", action="store_true", help="use a single process")
    workers.add_argument("--numprocesses", metavar="N", type=_positive_int,
                         help=f"number of worker processes (default: ${WORKERS_ENV} or all cores)")
    m.add_argument("--include-merges", action=argparse.BooleanOptionalAction, default=True,
                   help="extract co-edits from merge commits, diffed against the first parent")
    m.add_argument("--branches", action="store_true",
                   help="record the branches containing each commit")
    m.add_argument("--max-modifications", metavar="N", type=int,
                   help="skip co-edit extraction for commits touching more than N files")
    m.add_argument("--entropy-threshold", metavar="BITS", type=float,
                   help="drop co-edits whose text entropy exceeds BITS (0-8)")
    m.add_argument("--cyclomatic", action="store_true",
                   help="estimate mod_cyclomatic_complexity for known languages")
    m.add_argument("--fresh-clone", action="store_true",
                   help="re-clone a remote repository instead of reusing the cache")
    m.add_argument("--cache-dir", metavar="DIR", help="where remote repositories are cloned")
    m.add_argument("--quiet", action="store_true", help="no progress lines")

    g = sub.add_parser("graph", help="export a network projection of a co-edit database")
    kind = g.add_mutually_exclusive_group(required=True)
    kind.add_argument("--coedit", dest="kind", action="store_const", const="coedit",
                      help="developer co-editing network")
    kind.add_argument("--bipartite", dest="kind", action="store_const", const="bipartite",
                      help="developer -> file network")
    kind.add_argument("--dag", dest="kind", action="store_const", const="dag",
                      help="commit DAG of one file (requires --file)")
    g.add_argument("db", help="mined co-edit database")
    g.add_argument("out", help="output file")
    g.add_argument("--from", dest="start", metavar="DATE", type=_utc_midnight,
                   help="window start, YYYY-MM-DD (UTC midnight, inclusive)")
    g.add_argument("--to", dest="end", metavar="DATE", type=_utc_midnight,
                   help="window end, YYYY-MM-DD (UTC midnight, exclusive)")
    g.add_argument("--weighting", choices=("count", "levenshtein"), default="count",
                   help="edge weight of --coedit networks (default: count)")
    g.add_argument("--file", metavar="PATH", help="repository path for --dag")
    g.add_argument("--format", choices=("csv", "json"),
                   help="output format (default: from the file extension, else csv)")
    g.add_argument("--temporal", action="store_true",
                   help="with --coedit: one row per time-stamped edge instead of aggregating")
    g.add_argument("--include-self", action="store_true",
                   help="with --coedit: keep edits of one's own code")
    g.add_argument("--no-deletions", action="store_true",
                   help="with --coedit: ignore deletions under count weighting")

    a = sub.add_parser("analyze", help="rolling-window time series of a co-edit database")
    metric = a.add_mutually_exclusive_group(required=True)
    metric.add_argument("--rolling", dest="metric", action="store_const", const="rolling",
                        help="developers, unique edges, mean out-degree, degree centralization "
                             "(default window 365 days, step 30)")
    metric.add_argument("--ownership", dest="metric", action="store_const", const="ownership",
                        help="Levenshtein effort on own vs foreign code (default 90/30)")
    metric.add_argument("--delta", dest="metric", action="store_const", const="delta",
                        help="file-based vs line-based link counts (default 90/30)")
    a.add_argument("db", help="mined co-edit database")
    a.add_argument("out", help="output CSV file")
    a.add_argument("--window", metavar="DAYS", type=_positive_int, help="window length in days")
    a.add_argument("--step", metavar="DAYS", type=_positive_int, help="window increment in days")
    return parser


def is_remote(repo: str) -> bool:
    return "://" in repo or repo.startswith("git@") or (
        repo.endswith(".git") and not Path(repo).exists()
    )


def clone_cached(url: str, cache_dir: Optional[str], fresh: bool) -> Path:
    root = Path(cache_dir) if cache_dir else Path(
        os.environ.get("XDG_CACHE_HOME", Path.home() / ".cache")
    ) / "coeditnet" / "clones"
    target = root / hashlib.sha256(url.encode()).hexdigest()[:16]
    if fresh and target.exists():
        shutil.rmtree(target)
    if not target.exists():
        root.mkdir(parents=True, exist_ok=True)
        proc = subprocess.run(["git", "clone", "--no-checkout", url, str(target)],
                              capture_output=True, text=True)
        if proc.returncode != 0:
            shutil.rmtree(target, ignore_errors=True)
            raise RepositoryError(f"cannot clone {url}: {proc.stderr.strip()}")
    return target


def cmd_mine(args) -> int:
    if args.max_modifications is not None and args.max_modifications < 0:
        raise UsageError("--max-modifications must be non-negative")
    if args.entropy_threshold is not None and not 0 <= args.entropy_threshold <= 8:
        raise UsageError("--entropy-threshold must lie in [0, 8]")
    try:
        exclude = read_exclude_file(args.exclude) if args.exclude else []
    except OSError as exc:
        raise UsageError(f"cannot read exclude file: {exc}") from None
    if args.no_parallel:
        worker_count = 1
    else:
        worker_count = args.numprocesses or "auto"
    try:
        options = MiningOptions(
            granularity="block" if args.use_blocks else "line",
            exclude_paths=exclude,
            worker_count=worker_count,
            include_merges=args.include_merges,
            max_modifications_per_commit=args.max_modifications,
            entropy_filter_threshold=args.entropy_threshold,
            branches=args.branches,
            cyclomatic=args.cyclomatic,
        )
        options.resolved_workers()
    except ValueError as exc:
        raise UsageError(str(exc)) from None

    if is_remote(args.repo):
        repo_path, identity = clone_cached(args.repo, args.cache_dir, args.fresh_clone), args.repo
    else:
        repo_path = Path(args.repo)
        identity = str(repo_path.resolve())
    with init_store(args.db, options.granularity, repository=identity) as store:
        stats = mine(repo_path, store, options,
                     progress=None if args.quiet else stderr_progress)
    print(stats.to_json())
    return EXIT_OK


def _window(args) -> Optional[tuple[int, int]]:
    if args.start is None and args.end is None:
        return None
    start = args.start if args.start is not None else -FAR_FUTURE
    end = args.end if args.end is not None else FAR_FUTURE
    if end <= start:
        raise UsageError("--to must be after --from")
    return start, end


def _output_format(args) -> str:
    if args.format:
        return args.format
    return "json" if str(args.out).endswith(".json") else "csv"


def cmd_graph(args) -> int:
    if args.kind == "dag" and not args.file:
        raise UsageError("--dag requires --file PATH")
    if args.file and args.kind != "dag":
        raise UsageError("--file only applies to --dag")
    window = _window(args)
    with open_store(args.db) as store:
        if args.kind == "coedit":
            edges = networks.coedit_edges(
                store, weighting=args.weighting, include_self=args.include_self,
                include_deletions=not args.no_deletions,
            )
            if args.temporal:
                graph = [e for e in edges if networks._in_window(e.timestamp, window)]
            else:
                graph = networks.aggregate(edges, window)
        elif args.kind == "bipartite":
            graph = networks.bipartite_edges(store, window)
        else:
            if window is not None:
                raise UsageError("--from/--to do not apply to --dag")
            graph = networks.commit_dag(store, args.file)
        networks.export_graph(graph, _output_format(args), args.out)
    return EXIT_OK


ANALYSES = {
    "rolling": (networks.rolling_metrics, 365, 30),
    "ownership": (networks.ownership_series, 90, 30),
    "delta": (networks.delta_series, 90, 30),
}


def cmd_analyze(args) -> int:
    function, window, step = ANALYSES[args.metric]
    with open_store(args.db) as store:
        series = function(store, window_days=args.window or window, step_days=args.step or step)
    networks.export_series(series, args.out)
    return EXIT_OK


COMMANDS = {"mine": cmd_mine, "graph": cmd_graph, "analyze": cmd_analyze}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (UsageError, InvalidWindow, PathNotFound) as exc:
        print(f"coeditnet: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except RepositoryError as exc:
        print(f"coeditnet: repository error: {exc}", file=sys.stderr)
        return EXIT_REPOSITORY
    except StoreError as exc:
        print(f"coeditnet: store error: {exc}", file=sys.stderr)
        return EXIT_STORE
    except CoeditError as exc:
        print(f"coeditnet: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
