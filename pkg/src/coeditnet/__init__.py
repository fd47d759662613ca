"""Mining time-stamped co-editing networks from git repositories."""

__version__ = "0.1.0"

from .coedit import entropy, levenshtein  # noqa: E402
from .mining import MiningOptions, MiningStats, mine  # noqa: E402
from .store import Store, init_store, open_store  # noqa: E402
from .vcs import Repository, list_commits, parse_diff  # noqa: E402

__all__ = [
    "MiningOptions",
    "MiningStats",
    "Repository",
    "Store",
    "entropy",
    "init_store",
    "levenshtein",
    "list_commits",
    "mine",
    "open_store",
    "parse_diff",
]
