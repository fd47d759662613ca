"""Value types shared by the miner, the store and the network builders."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Optional

DELETION = "deletion"
ADDITION = "addition"
REPLACEMENT = "replacement"
KINDS = (DELETION, ADDITION, REPLACEMENT)

LINE = "line"
BLOCK = "block"
GRANULARITIES = (LINE, BLOCK)


@dataclass(frozen=True)
class CommitRecord:
    """Metadata of one mined commit, one row of the ``commits`` table.

    Dates are UTC epoch seconds; timezones are offsets in minutes east of UTC
    (``+0200`` is stored as ``120``).
    """

    hash: str
    author_date: int
    author_timezone: int
    author_name: str
    author_email: str
    committer_date: int
    committer_timezone: int
    committer_name: str
    committer_email: str
    parents: tuple[str, ...] = ()
    branches: tuple[str, ...] = ()
    in_main_branch: bool = False
    modifications: int = 0
    commit_message_len: int = 0
    project_name: str = ""

    @property
    def merge(self) -> bool:
        return len(self.parents) >= 2

    @property
    def first_parent(self) -> Optional[str]:
        return self.parents[0] if self.parents else None


@dataclass(frozen=True)
class FileModification:
    """One changed path of a commit relative to its first parent."""

    old_path: Optional[str]
    new_path: Optional[str]
    diff_text: str = ""
    added_count: int = 0
    removed_count: int = 0
    loc: Optional[int] = None
    token_count: Optional[int] = None
    binary: bool = False
    change_type: str = "M"
    cyclomatic_complexity: Optional[int] = None

    def __post_init__(self):
        if self.old_path is None and self.new_path is None:
            raise ValueError("a modification needs an old or a new path")

    @property
    def path(self) -> str:
        """Post-rename path, or the old path for deletions."""
        return self.new_path if self.new_path is not None else self.old_path

    @property
    def filename(self) -> str:
        return self.path.rsplit("/", 1)[-1]


@dataclass
class CoEditRecord:
    """One attributed edit event, one row of the ``coedits`` table.

    ``pre_line_*``/``post_line_*`` are only set for line granularity and the
    ``*_block_*`` family only for block granularity. ``None`` always means
    "not applicable", never zero.
    """

    mod_filename: str
    mod_new_path: Optional[str]
    mod_old_path: Optional[str]
    pre_commit: Optional[str]
    post_commit: str
    kind: str
    granularity: str
    pre_line_num: Optional[int] = None
    pre_line_len_in_chars: Optional[int] = None
    pre_line_text_entropy: Optional[float] = None
    post_line_num: Optional[int] = None
    post_line_len_in_chars: Optional[int] = None
    post_line_text_entropy: Optional[float] = None
    pre_block_starting_line_num: Optional[int] = None
    pre_block_len_in_lines: Optional[int] = None
    pre_block_len_in_chars: Optional[int] = None
    pre_block_text_entropy: Optional[float] = None
    post_block_starting_line_num: Optional[int] = None
    post_block_len_in_lines: Optional[int] = None
    post_block_len_in_chars: Optional[int] = None
    post_block_text_entropy: Optional[float] = None
    attributed_line_count: int = 1
    mod_added: int = 0
    mod_removed: int = 0
    levenshtein_dist: Optional[int] = None
    mod_cyclomatic_complexity: Optional[int] = None
    mod_loc: Optional[int] = None
    mod_token_count: Optional[int] = None
    id: Optional[int] = field(default=None, compare=False)

    @property
    def pre_entropy(self) -> Optional[float]:
        if self.granularity == LINE:
            return self.pre_line_text_entropy
        return self.pre_block_text_entropy

    @property
    def post_entropy(self) -> Optional[float]:
        if self.granularity == LINE:
            return self.post_line_text_entropy
        return self.post_block_text_entropy

    @property
    def path(self) -> str:
        return self.mod_new_path if self.mod_new_path is not None else self.mod_old_path

    def event_key(self) -> tuple:
        """Rows produced by the same edit event share this key."""
        return (
            self.post_commit,
            self.mod_old_path,
            self.mod_new_path,
            self.granularity,
            self.kind,
            self.pre_line_num,
            self.post_line_num,
            self.pre_block_starting_line_num,
            self.post_block_starting_line_num,
        )


COEDIT_COLUMNS = tuple(f.name for f in dataclasses.fields(CoEditRecord) if f.name != "id")
