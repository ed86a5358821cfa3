import pytest

from hypsim import GenConfig, generate_split

SEED = 7

_results = {}


@pytest.fixture(scope="session")
def original_split():
    return generate_split(GenConfig(n_images=100, split="original", seed=SEED))


@pytest.fixture(scope="session")
def balanced_split():
    return generate_split(GenConfig(n_images=200, split="balanced", seed=SEED))


@pytest.fixture(scope="session")
def two_action_split():
    return generate_split(GenConfig(n_images=20, split="2hop-ta", seed=SEED))


@pytest.fixture(scope="session")
def logic_split():
    return generate_split(GenConfig(n_images=10, split="2hop-qh", seed=SEED))


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or report.when not in ("setup", "call"):
        return
    number, title = marker.args
    failed = report.failed or (report.when == "setup" and report.skipped)
    prev = _results.get(number, (title, True))
    if report.when == "call" or failed:
        _results[number] = (title, prev[1] and not failed)


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_results):
        title, ok = _results[number]
        terminalreporter.write_line(f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {title}")
