"""Turning parsed diffs plus blame data into attributed edit events.

Everything in here is a pure function of its inputs.
"""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence, Union

from .errors import MissingBlameEntry
from .records import (
    ADDITION,
    BLOCK,
    DELETION,
    LINE,
    REPLACEMENT,
    CoEditRecord,
    CommitRecord,
    FileModification,
)

Line = tuple[int, str]


@dataclass(frozen=True)
class EditGroup:
    """A run of deleted pre-image lines and the added lines replacing them."""

    deleted: tuple[Line, ...]
    added: tuple[Line, ...]


@dataclass(frozen=True)
class EditEvent:
    kind: str
    pre_lines: tuple[Line, ...]
    post_lines: tuple[Line, ...]
    granularity: str


@dataclass(frozen=True)
class TextMetrics:
    len_chars: int
    entropy_bits: float


def _run(lines: Sequence[Line], start: int) -> int:
    """Index one past the run of consecutive line numbers beginning at ``start``."""
    end = start + 1
    while end < len(lines) and lines[end][0] == lines[end - 1][0] + 1:
        end += 1
    return end


def group_edits(deleted: Sequence[Line], added: Sequence[Line]) -> list[EditGroup]:
    """Pair runs of deleted and added lines that sit at the same diff position.

    A deleted line ``p`` sits where post-image line ``p + offset`` would be,
    ``offset`` being the lines added minus the lines deleted before it.
    """
    groups = []
    i = j = 0
    offset = 0
    while i < len(deleted) or j < len(added):
        del_pos = deleted[i][0] + offset if i < len(deleted) else math.inf
        add_pos = added[j][0] if j < len(added) else math.inf
        i_end = _run(deleted, i) if del_pos <= add_pos else i
        j_end = _run(added, j) if add_pos <= del_pos else j
        groups.append(EditGroup(tuple(deleted[i:i_end]), tuple(added[j:j_end])))
        offset += (j_end - j) - (i_end - i)
        i, j = i_end, j_end
    return groups


def match_line_based(group: EditGroup) -> list[EditEvent]:
    paired = min(len(group.deleted), len(group.added))
    events = [
        EditEvent(REPLACEMENT, (d,), (a,), LINE)
        for d, a in zip(group.deleted[:paired], group.added[:paired])
    ]
    events += [EditEvent(DELETION, (d,), (), LINE) for d in group.deleted[paired:]]
    events += [EditEvent(ADDITION, (), (a,), LINE) for a in group.added[paired:]]
    return events


def match_block_based(group: EditGroup) -> list[EditEvent]:
    if group.deleted and group.added:
        kind = REPLACEMENT
    elif group.deleted:
        kind = DELETION
    else:
        kind = ADDITION
    return [EditEvent(kind, group.deleted, group.added, BLOCK)]


def match_events(groups: Sequence[EditGroup], granularity: str) -> list[EditEvent]:
    match = match_block_based if granularity == BLOCK else match_line_based
    return [event for group in groups for event in match(group)]


def levenshtein(a: str, b: str) -> int:
    """Unit-cost edit distance between two strings.

    Bit-parallel column computation (Myers/Hyyrö): the vertical deltas of the
    DP column over the shorter string are packed into two integers.
    """
    if a == b:
        return 0
    prefix = 0
    limit = min(len(a), len(b))
    while prefix < limit and a[prefix] == b[prefix]:
        prefix += 1
    a, b = a[prefix:], b[prefix:]
    while a and b and a[-1] == b[-1]:
        a, b = a[:-1], b[:-1]
    if len(a) < len(b):
        a, b = b, a
    m = len(b)
    if m == 0:
        return len(a)

    peq: dict[str, int] = {}
    for i, ch in enumerate(b):
        peq[ch] = peq.get(ch, 0) | (1 << i)
    mask = (1 << m) - 1
    top = 1 << (m - 1)
    pv, mv, score = mask, 0, m
    for ch in a:
        eq = peq.get(ch, 0)
        xv = eq | mv
        xh = (((eq & pv) + pv) ^ pv) | eq
        ph = mv | (~(xh | pv) & mask)
        mh = pv & xh
        if ph & top:
            score += 1
        elif mh & top:
            score -= 1
        ph = ((ph << 1) | 1) & mask
        mh = (mh << 1) & mask
        pv = mh | (~(xv | ph) & mask)
        mv = ph & xv
    return score


def as_bytes(content: Union[bytes, str]) -> bytes:
    if isinstance(content, str):
        return content.encode("utf-8", "surrogateescape")
    return content


def entropy(content: Union[bytes, str]) -> float:
    """Shannon entropy in bits of the byte-frequency distribution of ``content``."""
    data = as_bytes(content)
    n = len(data)
    if n == 0:
        return 0.0
    result = 0.0
    for count in Counter(data).values():
        p = count / n
        result -= p * math.log2(p)
    return result if result > 0 else 0.0


def text_metrics(text: str) -> TextMetrics:
    return TextMetrics(len(text), entropy(text))


def block_text(lines: Sequence[Line]) -> str:
    return "\n".join(text for _, text in lines)


def apportion(total: int, counts: Sequence[int]) -> list[int]:
    """Split an integer total proportionally to ``counts`` (largest remainder).

    The shares always sum to ``total``; ties go to the earlier entry.
    """
    denominator = sum(counts)
    if denominator <= 0:
        raise ValueError("counts must have a positive sum")
    shares = [total * c // denominator for c in counts]
    remainders = [total * c % denominator for c in counts]
    leftover = total - sum(shares)
    for index in sorted(range(len(counts)), key=lambda k: (-remainders[k], k))[:leftover]:
        shares[index] += 1
    return shares


def _origin_commit(blame: Mapping[int, object], line_no: int) -> str:
    try:
        origin = blame[line_no]
    except KeyError:
        raise MissingBlameEntry(f"no blame entry for pre-image line {line_no}") from None
    return getattr(origin, "commit", origin)


def _base_record(commit: CommitRecord, modification: FileModification, **fields) -> CoEditRecord:
    return CoEditRecord(
        mod_filename=modification.filename,
        mod_new_path=modification.new_path,
        mod_old_path=modification.old_path,
        post_commit=commit.hash,
        mod_added=modification.added_count,
        mod_removed=modification.removed_count,
        mod_loc=modification.loc,
        mod_token_count=modification.token_count,
        mod_cyclomatic_complexity=modification.cyclomatic_complexity,
        **fields,
    )


def _line_record(event: EditEvent, blame, commit, modification) -> CoEditRecord:
    fields: dict = {"pre_commit": None}
    pre_text = post_text = None
    if event.pre_lines:
        pre_no, pre_text = event.pre_lines[0]
        pre = text_metrics(pre_text)
        fields.update(
            pre_commit=_origin_commit(blame, pre_no),
            pre_line_num=pre_no,
            pre_line_len_in_chars=pre.len_chars,
            pre_line_text_entropy=pre.entropy_bits,
        )
    if event.post_lines:
        post_no, post_text = event.post_lines[0]
        post = text_metrics(post_text)
        fields.update(
            post_line_num=post_no,
            post_line_len_in_chars=post.len_chars,
            post_line_text_entropy=post.entropy_bits,
        )
    if event.kind == REPLACEMENT:
        fields["levenshtein_dist"] = levenshtein(pre_text, post_text)
    elif event.kind == ADDITION:
        fields["levenshtein_dist"] = len(post_text)
    return _base_record(commit, modification, kind=event.kind, granularity=LINE, **fields)


def _block_records(event: EditEvent, blame, commit, modification) -> list[CoEditRecord]:
    fields: dict = {}
    pre_text = post_text = None
    if event.pre_lines:
        pre_text = block_text(event.pre_lines)
        pre = text_metrics(pre_text)
        fields.update(
            pre_block_starting_line_num=event.pre_lines[0][0],
            pre_block_len_in_lines=len(event.pre_lines),
            pre_block_len_in_chars=pre.len_chars,
            pre_block_text_entropy=pre.entropy_bits,
        )
    if event.post_lines:
        post_text = block_text(event.post_lines)
        post = text_metrics(post_text)
        fields.update(
            post_block_starting_line_num=event.post_lines[0][0],
            post_block_len_in_lines=len(event.post_lines),
            post_block_len_in_chars=post.len_chars,
            post_block_text_entropy=post.entropy_bits,
        )
    if event.kind == REPLACEMENT:
        fields["levenshtein_dist"] = levenshtein(pre_text, post_text)
    elif event.kind == ADDITION:
        fields["levenshtein_dist"] = len(post_text)
        return [_base_record(commit, modification, kind=ADDITION, granularity=BLOCK,
                             pre_commit=None, **fields)]

    origins: dict[str, int] = {}
    for line_no, _ in event.pre_lines:
        origin = _origin_commit(blame, line_no)
        origins[origin] = origins.get(origin, 0) + 1
    return [
        _base_record(commit, modification, kind=event.kind, granularity=BLOCK,
                     pre_commit=origin, attributed_line_count=count, **fields)
        for origin, count in origins.items()
    ]


def attribute_events(
    events: Sequence[EditEvent],
    blame: Mapping[int, object],
    commit: CommitRecord,
    modification: FileModification,
) -> list[CoEditRecord]:
    """Attach original commits to events and compute their text metrics.

    Block events whose pre-lines come from several commits yield one record
    per origin commit, in order of first appearance.
    """
    records: list[CoEditRecord] = []
    for event in events:
        if event.granularity == LINE:
            records.append(_line_record(event, blame, commit, modification))
        else:
            records.extend(_block_records(event, blame, commit, modification))
    return records


_BRANCH_KEYWORDS = {
    "c-like": re.compile(r"\b(?:if|for|while|case|catch)\b|&&|\|\||\?"),
    "python": re.compile(r"\b(?:if|elif|for|while|except|and|or|case)\b"),
    "ruby": re.compile(r"\b(?:if|elsif|unless|for|while|until|when|rescue|and|or)\b|&&|\|\|"),
}
_LANGUAGES = {
    ".c": "c-like", ".h": "c-like", ".cc": "c-like", ".cpp": "c-like", ".hpp": "c-like",
    ".cxx": "c-like", ".java": "c-like", ".js": "c-like", ".ts": "c-like", ".go": "c-like",
    ".rs": "c-like", ".cs": "c-like", ".php": "c-like", ".kt": "c-like", ".swift": "c-like",
    ".py": "python", ".rb": "ruby",
}


def estimate_cyclomatic(text: str, path: Optional[str]) -> Optional[int]:
    """Crude file-level complexity: 1 + number of branching tokens.

    ``None`` for file types without a keyword table.
    """
    if not path or "." not in path.rsplit("/", 1)[-1]:
        return None
    language = _LANGUAGES.get("." + path.rsplit(".", 1)[-1].lower())
    if language is None:
        return None
    return 1 + len(_BRANCH_KEYWORDS[language].findall(text))
