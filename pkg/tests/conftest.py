import os

import pytest

import helpers

# keep user/system git config (signing, hooks, ignoreRevs) out of fixtures and the code under test
os.environ["GIT_CONFIG_NOSYSTEM"] = "1"
os.environ["GIT_CONFIG_GLOBAL"] = os.devnull


@pytest.fixture
def builder(tmp_path):
    return helpers.RepoBuilder(tmp_path / "repo")


def _mined(build, granularity="line"):
    @pytest.fixture(scope="module")
    def fixture(tmp_path_factory):
        root = tmp_path_factory.mktemp(build.__name__)
        repo = build(root / "repo")
        db = root / "coedits.db"
        helpers.mine_into(repo.path, db, granularity)
        return repo, db
    return fixture


e2e_mined = _mined(helpers.build_e2e_repo)
e2e_block_mined = _mined(helpers.build_e2e_repo, "block")
star_mined = _mined(helpers.build_star_repo)
cycle_mined = _mined(helpers.build_cycle_repo)
dag_mined = _mined(helpers.build_dag_repo)
delta_mined = _mined(helpers.build_window_delta_repo)
mixed_mined = _mined(helpers.build_mixed_repo)
multi_origin_mined = _mined(helpers.build_block_multi_origin_repo, "block")


def pytest_terminal_summary(terminalreporter):
    """One pass/fail line per acceptance criterion, from ``record_property``."""
    results = {}
    for outcome in ("passed", "failed", "error"):
        for report in terminalreporter.stats.get(outcome, []):
            props = dict(getattr(report, "user_properties", []))
            if "criterion" not in props or getattr(report, "when", "call") not in ("call", "setup"):
                continue
            ok = outcome == "passed" and results.get(props["criterion"], (True,))[0]
            if report.when == "setup" and outcome == "passed":
                continue
            results[props["criterion"]] = (ok, props.get("title", ""), props.get("detail", ""))
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results, key=int):
        ok, title, detail = results[number]
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {title}"
        terminalreporter.write_line(line + (f"  [{detail}]" if detail else ""))
