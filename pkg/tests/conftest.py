import os

import pytest

os.environ.setdefault("NUMBA_THREADING_LAYER", "omp")

_RESULTS: dict[str, list] = {}


def pytest_runtest_makereport(item, call):
    if call.when != "call":
        return
    m = item.get_closest_marker("criterion")
    if m is None:
        return
    cid, title = m.args
    ok = call.excinfo is None
    detail = "" if ok else str(call.excinfo.value).splitlines()[0][:160]
    _RESULTS.setdefault(cid.rstrip("abcdefgh"), []).append((cid, title, ok, detail))


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for num in sorted(_RESULTS, key=int):
        parts = _RESULTS[num]
        ok = all(p[2] for p in parts)
        subs = ", ".join(f"{cid} {'pass' if good else 'FAIL'}" for cid, _, good, _ in parts)
        tr.write_line(f"criterion {num}: {'PASS' if ok else 'FAIL'} ({subs})")
        for cid, title, good, detail in parts:
            if not good:
                tr.write_line(f"    {cid} {title}: {detail}")


@pytest.fixture(scope="session")
def f2():
    from hyperperc.groups import parse_presentation

    return parse_presentation("free:2")


@pytest.fixture(scope="session")
def ball6():
    from hyperperc.groups import build_ball

    return build_ball("free:2", 6)
