"""Shared pytest wiring: replay acceptance-gate verdict lines after the run."""


def pytest_configure(config):
    config._acceptance_lines = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance gates")
        for line in lines:
            terminalreporter.write_line(line)
