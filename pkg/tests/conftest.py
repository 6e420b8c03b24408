"""Shared pytest hooks.

The acceptance tests register one verdict line each; replaying them in
the terminal summary keeps the lines visible even though output capture
swallows prints made while a test is running.
"""

VERDICT_LINES = []


def pytest_terminal_summary(terminalreporter):
    if VERDICT_LINES:
        terminalreporter.section("acceptance verdicts")
        for line in VERDICT_LINES:
            terminalreporter.write_line(line)
