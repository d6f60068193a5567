import numpy as np
import pytest

from rppg_vitals.synth import synth_trace
from rppg_vitals.trace import CombinedSeries, prepare_series


def synth_series(hr=75.0, duration=30.0, fs=30.0, noise=0.0, seed=0, amplitude=0.01) -> CombinedSeries:
    trace, _ = synth_trace(hr, duration, fs, amplitude_frac=amplitude, noise_sigma_frac=noise, seed=seed)
    return prepare_series(trace, fs)


def tone(freq, fs=30.0, duration=30.0, amp=1.0, phase=0.0):
    t = np.arange(int(round(duration * fs))) / fs
    return amp * np.sin(2 * np.pi * freq * t + phase)


@pytest.fixture
def series75():
    return synth_series(75.0, 30.0, 30.0)


# one PASS/FAIL line per acceptance criterion in the terminal summary

_acceptance: dict[str, str] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if item.module.__name__.endswith("test_acceptance") and item.function.__doc__:
        label = item.function.__doc__.strip().splitlines()[0]
        if rep.when == "call" or rep.failed:
            prev = _acceptance.get(label, "PASS")
            _acceptance[label] = "FAIL" if (rep.failed or prev == "FAIL") else ("SKIP" if rep.skipped else "PASS")


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for label in sorted(_acceptance):
        terminalreporter.write_line(f"{_acceptance[label]:4}  {label}")
