"""Shared pytest wiring.

The release-gate tests in test_acceptance.py report one line per
criterion; collect them here and print them after the run so they are
visible even though capture swallows test stdout.
"""

_gate_lines: list[str] = []


def record_gate_line(line: str) -> None:
    _gate_lines.append(line)


def pytest_terminal_summary(terminalreporter):
    if _gate_lines:
        terminalreporter.section("acceptance summary")
        for line in _gate_lines:
            terminalreporter.write_line(line)
