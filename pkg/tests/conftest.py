import pytest

from lsa_rec.evaluation import make_dataset
from lsa_rec.synth import SynthConfig, generate

_acceptance: dict[int, tuple[str, str]] = {}


@pytest.fixture(scope="session")
def tiny_data():
    """A 30-user synthetic corpus, small enough for per-test training."""
    reviews, truth = generate(SynthConfig(n_users=30, n_items=15, n_aspects=10, interactions_per_user=6,
                                          n_topics=2, seed=3))
    return make_dataset(reviews, min_freq=1, seed=3)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is None:
        return
    number, name = mark.args
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        status = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}[rep.outcome]
        prev = _acceptance.get(number)
        if prev is None or prev[1] == "PASS":
            _acceptance[number] = (name, status)


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_acceptance):
        name, status = _acceptance[number]
        terminalreporter.write_line(f"[{status}] {number:>2}. {name}")
