import sqlite3
import subprocess
import sys
import textwrap

import pytest
from hypothesis import given, settings, HealthCheck
from hypothesis import strategies as st

from coeditnet.errors import DuplicateCommit, IoFailure, ModeMismatch, StoreError, StoreLocked
from coeditnet.records import COEDIT_COLUMNS, CoEditRecord, CommitRecord, FileModification
from coeditnet.store import init_store, open_store, processed_commits, query_coedits, write_commit


def make_commit(n, email="alice@example.com", date=None):
    return CommitRecord(
        hash=f"{n:040x}", author_date=date if date is not None else 1_600_000_000 + n * 86400,
        author_timezone=60, author_name=email.split("@")[0].title(), author_email=email,
        committer_date=1_600_000_000 + n, committer_timezone=-300, committer_name="C",
        committer_email="c@example.com", parents=(f"{n - 1:040x}",) if n > 1 else (),
        branches=("main", "dev"), in_main_branch=True, modifications=2, commit_message_len=11,
        project_name="demo",
    )


def make_record(post, pre=None, kind="replacement", path="src/a.py", **fields):
    base = dict(
        mod_filename=path.rsplit("/", 1)[-1], mod_new_path=path, mod_old_path=path,
        pre_commit=pre, post_commit=post, kind=kind, granularity="line",
        pre_line_num=None if kind == "addition" else 3,
        post_line_num=None if kind == "deletion" else 4,
        levenshtein_dist=None if kind == "deletion" else 0, mod_added=1, mod_removed=1,
    )
    base.update(fields)
    return CoEditRecord(**base)


def test_fresh_store_tables(tmp_path):
    db = tmp_path / "s.db"
    with init_store(db, "line", repository="/x/repo") as store:
        assert processed_commits(store) == set()
        assert store.meta["mode"] == "line" and store.meta["repository"] == "/x/repo"
        assert store.meta["tool_version"]
    tables = {r[0] for r in sqlite3.connect(db).execute("SELECT name FROM sqlite_master "
                                                        "WHERE type='table'")}
    assert {"commits", "coedits", "meta"} <= tables
    assert {"modifications", "failures"} <= tables


def test_mode_mismatch(tmp_path):
    db = tmp_path / "s.db"
    init_store(db, "block").close()
    with pytest.raises(ModeMismatch):
        init_store(db, "line")
    with open_store(db) as store:
        assert store.mode == "block"


def test_reopen_keeps_data(tmp_path):
    db = tmp_path / "s.db"
    with init_store(db, "line") as store:
        write_commit(store, make_commit(1), [make_record(make_commit(1).hash, kind="addition",
                                                         pre_line_num=None)])
    for _ in range(2):
        with init_store(db, "line") as store:
            assert processed_commits(store) == {make_commit(1).hash}
            assert len(store.coedits()) == 1


def test_commit_without_coedits(tmp_path):
    with init_store(tmp_path / "s.db", "line") as store:
        write_commit(store, make_commit(1), [])
        assert store.commits() == [make_commit(1)] and store.coedits() == []


def test_duplicate_commit(tmp_path):
    with init_store(tmp_path / "s.db", "line") as store:
        write_commit(store, make_commit(1), [])
        with pytest.raises(DuplicateCommit):
            write_commit(store, make_commit(1), [])
        assert len(store.commits()) == 1


def test_wrong_granularity_record_rejected(tmp_path):
    with init_store(tmp_path / "s.db", "block") as store:
        with pytest.raises(StoreError):
            write_commit(store, make_commit(1), [make_record(make_commit(1).hash)])
        assert store.processed_commits() == set()


def test_second_writer_is_locked_out(tmp_path):
    db = tmp_path / "s.db"
    with init_store(db, "line"):
        with pytest.raises(StoreLocked):
            init_store(db, "line")
        with open_store(db) as reader:
            assert reader.processed_commits() == set()
    init_store(db, "line").close()


def test_open_missing_store(tmp_path):
    with pytest.raises(IoFailure):
        open_store(tmp_path / "nope.db")
    (tmp_path / "junk.db").write_bytes(b"not a database at all" * 20)
    with pytest.raises(StoreError):
        open_store(tmp_path / "junk.db")


def test_read_only_store_rejects_writes(tmp_path):
    db = tmp_path / "s.db"
    init_store(db, "line").close()
    with open_store(db) as store:
        with pytest.raises(StoreError):
            store.write_commit(make_commit(1), [])


optional_int = st.one_of(st.none(), st.integers(0, 10_000))
optional_real = st.one_of(st.none(), st.floats(0, 8, allow_nan=False))
records = st.builds(
    CoEditRecord,
    mod_filename=st.text(min_size=1, max_size=8), mod_new_path=st.one_of(st.none(), st.text(max_size=12)),
    mod_old_path=st.one_of(st.none(), st.text(max_size=12)), pre_commit=st.just(None),
    post_commit=st.just(make_commit(1).hash),
    kind=st.sampled_from(["deletion", "addition", "replacement"]), granularity=st.just("line"),
    pre_line_num=optional_int, pre_line_len_in_chars=optional_int,
    pre_line_text_entropy=optional_real, post_line_num=optional_int,
    post_line_len_in_chars=optional_int, post_line_text_entropy=optional_real,
    attributed_line_count=st.integers(1, 9), mod_added=st.integers(0, 99),
    mod_removed=st.integers(0, 99), levenshtein_dist=optional_int,
    mod_cyclomatic_complexity=optional_int, mod_loc=optional_int, mod_token_count=optional_int,
)


@settings(max_examples=50, suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(st.lists(records, max_size=5))
def test_round_trip_is_field_identical(tmp_path_factory, rows):
    db = tmp_path_factory.mktemp("rt") / "s.db"
    with init_store(db, "line") as store:
        mod = FileModification(old_path=None, new_path="a", diff_text="", added_count=0,
                               removed_count=0, change_type="A")
        write_commit(store, make_commit(1), rows, [mod])
    with open_store(db) as store:
        back = store.coedits()
        assert back == rows
        assert [tuple(getattr(r, c) for c in COEDIT_COLUMNS) for r in back] == \
            [tuple(getattr(r, c) for c in COEDIT_COLUMNS) for r in rows]
        assert store.commits() == [make_commit(1)]
        assert [m.path for m in store.modifications()] == ["a"]


def test_absent_is_not_zero(tmp_path):
    db = tmp_path / "s.db"
    with init_store(db, "line") as store:
        c = make_commit(1)
        write_commit(store, c, [make_record(c.hash, c.hash, kind="deletion"),
                                make_record(c.hash, c.hash, levenshtein_dist=0)])
    raw = sqlite3.connect(db).execute("SELECT levenshtein_dist FROM coedits ORDER BY id").fetchall()
    assert raw == [(None,), (0,)]


def _populated(tmp_path):
    db = tmp_path / "q.db"
    c1, c2, c3 = make_commit(1), make_commit(2, "Bob@Example.com"), make_commit(3, "carol@example.com")
    with init_store(db, "line") as store:
        write_commit(store, c1, [make_record(c1.hash, kind="addition", pre_line_num=None)])
        write_commit(store, c2, [make_record(c2.hash, c1.hash),
                                 make_record(c2.hash, c1.hash, path="docs/x.md")])
        write_commit(store, c3, [make_record(c3.hash, c1.hash, kind="deletion"),
                                 make_record(c3.hash, c2.hash)])
    return db, (c1, c2, c3)


def test_query_filters(tmp_path):
    db, (c1, c2, c3) = _populated(tmp_path)
    with open_store(db) as store:
        assert len(list(query_coedits(store, kind="replacement"))) == 3
        assert len(list(query_coedits(store, kind="deletion"))) == 1
        assert [j.post.hash for j in query_coedits(store, author="bob@example.com")] == [c2.hash] * 2
        assert len(list(query_coedits(store, path_prefix="docs/"))) == 1
        window = list(query_coedits(store, since=c2.author_date, until=c3.author_date))
        assert [j.post.hash for j in window] == [c2.hash, c2.hash]
        assert list(query_coedits(store, since=0, until=10)) == []
        rows = list(query_coedits(store))
        assert [j.post.author_date for j in rows] == sorted(j.post.author_date for j in rows)
        addition = rows[0]
        assert addition.pre is None and addition.post == c1
        assert rows[-1].pre == c2


def test_query_empty_store(tmp_path):
    with init_store(tmp_path / "e.db", "line") as store:
        assert list(store.query_coedits()) == []


def test_integrity_check(tmp_path):
    db, _ = _populated(tmp_path)
    with open_store(db) as store:
        assert store.check_integrity() == []
    conn = sqlite3.connect(db)
    with conn:
        conn.execute("UPDATE coedits SET pre_commit = ? WHERE id = 2", ("e" * 40,))
    with open_store(db) as store:
        assert len(store.check_integrity()) == 1


def test_digest_ignores_row_order_and_ids(tmp_path):
    c1, c2 = make_commit(1), make_commit(2)
    rows = {c1.hash: [make_record(c1.hash, kind="addition", pre_line_num=None)],
            c2.hash: [make_record(c2.hash, c1.hash), make_record(c2.hash, c1.hash, kind="deletion")]}
    digests = []
    for name, order in (("a", [c1, c2]), ("b", [c2, c1])):
        with init_store(tmp_path / f"{name}.db", "line") as store:
            for c in order:
                write_commit(store, c, list(reversed(rows[c.hash])) if name == "b" else rows[c.hash])
            digests.append(store.table_digest())
    assert digests[0] == digests[1]
    with init_store(tmp_path / "c.db", "line") as store:
        write_commit(store, c1, [])
        assert store.table_digest() != digests[0]


def test_failures_are_recorded_and_cleared(tmp_path):
    with init_store(tmp_path / "f.db", "line") as store:
        store.record_failure("a" * 40, "boom")
        store.record_failure("a" * 40, "boom again")
        assert store.failures() == {"a" * 40: "boom again"}
        write_commit(store, make_commit(10), [])
        assert store.failures() == {"a" * 40: "boom again"}


def test_crash_between_writes_keeps_only_the_first_commit(tmp_path):
    db = tmp_path / "crash.db"
    script = textwrap.dedent(f"""
        import os, sys
        sys.path.insert(0, {str(__import__('pathlib').Path(__file__).parent)!r})
        from test_store import make_commit, make_record
        from coeditnet.store import init_store
        store = init_store({str(db)!r}, "line")
        c1, c2 = make_commit(1), make_commit(2)
        store.write_commit(c1, [make_record(c1.hash, kind="addition", pre_line_num=None)])
        # die in the middle of the second commit's transaction
        store.conn.execute("BEGIN")
        store.conn.execute("INSERT INTO commits (hash, author_date, author_email, author_name, "
                           "author_timezone, branches, committer_date, committer_email, "
                           "committer_name, committer_timezone, in_main_branch, merge, "
                           "modifications, commit_message_len, parents, project_name) "
                           "VALUES (?, 0, '', '', 0, '', 0, '', '', 0, 1, 0, 0, 0, '', '')",
                           (c2.hash,))
        os._exit(9)
    """)
    proc = subprocess.run([sys.executable, "-c", script])
    assert proc.returncode == 9
    with init_store(db, "line") as store:  # the stale lock must not block a new writer
        assert store.processed_commits() == {make_commit(1).hash}
        assert len(store.coedits()) == 1
