import contextlib

# criterion number -> (passed, description, detail); filled by test_acceptance
ACCEPTANCE: dict[int, tuple[bool, str, str]] = {}


@contextlib.contextmanager
def criterion(number: int, description: str):
    """Record PASS/FAIL for one acceptance criterion; ``detail`` can be set on the yielded dict."""
    info = {"detail": ""}
    try:
        yield info
    except BaseException as exc:
        ACCEPTANCE[number] = (False, description, info["detail"] or f"{type(exc).__name__}: {exc}")
        raise
    ACCEPTANCE[number] = (True, description, info["detail"])


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        ok, description, detail = ACCEPTANCE[number]
        line = f"[{'PASS' if ok else 'FAIL'}] {number}. {description}"
        terminalreporter.write_line(f"{line} :: {detail}" if detail else line)
