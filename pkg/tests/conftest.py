import support


def pytest_terminal_summary(terminalreporter):
    if not support.ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(support.ACCEPTANCE):
        status, text = support.ACCEPTANCE[number]
        terminalreporter.write_line(f"{status} criterion {number:>2}: {text}")
