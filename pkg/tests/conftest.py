def pytest_terminal_summary(terminalreporter):
    from tests.test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for key in sorted(RESULTS, key=lambda k: (int(k.rstrip("ab")), k)):
            terminalreporter.write_line(RESULTS[key])
