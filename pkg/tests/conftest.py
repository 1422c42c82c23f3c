import fixtures


def pytest_terminal_summary(terminalreporter):
    if fixtures.ACCEPTANCE:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(fixtures.ACCEPTANCE):
            terminalreporter.write_line(line)
