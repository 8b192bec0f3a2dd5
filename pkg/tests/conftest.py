"""Collects the acceptance verdicts and prints them once at the end of the run."""

VERDICTS: dict[int, tuple[bool, str]] = {}


def record(number: int, ok: bool, detail: str) -> None:
    VERDICTS[number] = (bool(ok), detail)
    print(verdict_line(number))


def verdict_line(number: int) -> str:
    ok, detail = VERDICTS[number]
    return f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(VERDICTS):
        terminalreporter.write_line(verdict_line(number))
