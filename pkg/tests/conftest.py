import pytest


def criterion(label):
    """Tag an acceptance test with its criterion label for the report line."""
    def deco(fn):
        fn._criterion = label
        return fn
    return deco


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if rep.when == "call":
        label = getattr(item.function, "_criterion", None)
        if label:
            print(f"\n[acceptance] {label}: {'PASS' if rep.passed else 'FAIL'}")
