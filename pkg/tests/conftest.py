import functools
from collections import OrderedDict
from fractions import Fraction

import pytest

from wirelessmr.model import SystemConfig
from wirelessmr.placement import assign_files, assign_functions, required_ivs
from wirelessmr.shuffle import schedule

# criterion id -> (title, [outcomes])
_CRITERIA = OrderedDict()


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(num, title): acceptance criterion covered by the test")


def pytest_collection_modifyitems(items):
    for item in items:
        mark = item.get_closest_marker("criterion")
        if mark is not None:
            num, title = mark.args
            _CRITERIA.setdefault(num, (title, []))


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _CRITERIA[mark.args[0]][1].append((item.name, report.outcome))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_CRITERIA):
        title, outcomes = _CRITERIA[num]
        if not outcomes:
            continue
        failed = [name for name, result in outcomes if result != "passed"]
        verdict = "PASS" if not failed else "FAIL"
        line = f"criterion {num}: {verdict} - {title} ({len(outcomes) - len(failed)}/{len(outcomes)} checks)"
        terminalreporter.write_line(line)
        for name in failed:
            terminalreporter.write_line(f"    failed: {name}")


def worked_example(**kw) -> SystemConfig:
    """K=4, N=6, Q=4, mu=1/2, alpha=2/3."""
    base = dict(F=240, alpha=Fraction(2, 3), P=1e12)
    base.update(kw)
    return SystemConfig.build(4, Fraction(1, 2), 4, **base)


@functools.lru_cache(maxsize=None)
def cached_plan(cfg: SystemConfig, scheme: str):
    """Plans depend on the combinatorics only, so they are shared across seeds."""
    cfg = cfg.with_(seed=0, P=1e6)
    placement = assign_files(cfg)
    assignment = assign_functions(cfg)
    return schedule(scheme, cfg, placement, assignment, required_ivs(cfg, placement, assignment))


@pytest.fixture
def example_cfg():
    return worked_example()
