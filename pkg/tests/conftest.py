import os

# keep thread pools small by default under test; individual tests override
os.environ.setdefault("REALIZER_THREADS", "2")

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(ACCEPTANCE_LINES, key=lambda s: s.split()[1]):
        terminalreporter.write_line(line)
