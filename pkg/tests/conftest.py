def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS, result_lines

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in result_lines():
            terminalreporter.write_line(line)
