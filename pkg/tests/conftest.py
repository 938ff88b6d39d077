"""Collects acceptance verdicts and prints them at the end of the run."""

ACCEPTANCE: dict[int, str] = {}


def record(n: int, ok: bool, detail: str, elapsed: float, limit: float | None = None) -> bool:
    """Store one verdict line; a stated runtime limit is part of the verdict."""
    in_time = limit is None or elapsed < limit
    ok = bool(ok and in_time)
    lim = f" (limit {limit:g} s)" if limit is not None else ""
    line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}  [{elapsed:.1f} s{lim}]"
    ACCEPTANCE[n] = line
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])
