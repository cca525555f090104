import re

import helpers


def _order(key):
    # keys look like 4, "5a" or "6.1"
    key = str(key)
    return int(re.match(r"\d+", key).group()), key


def pytest_terminal_summary(terminalreporter):
    if not helpers.VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(helpers.VERDICTS, key=_order):
        ok, detail = helpers.VERDICTS[key]
        terminalreporter.write_line(f"criterion {key}: {'PASS' if ok else 'FAIL'}  {detail}")
