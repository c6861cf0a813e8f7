"""Tests for the built-in self-check suites."""

import pytest

from src.selfcheck import SUITES, run_selfcheck


def failures(results):
    return [f"{r.name}: {r.detail}" for r in results if not r.passed]


@pytest.mark.parametrize("suite", ["raster", "stats"])
def test_suite_passes(suite):
    results = run_selfcheck([suite])
    assert results
    assert {r.suite for r in results} == {suite}
    assert not failures(results)


@pytest.mark.slow
def test_gradient_suite_covers_layers_and_stacks():
    results = run_selfcheck(["gradient"])
    names = {r.name.split("[")[0] for r in results}
    assert {"linear", "conv2d", "attention", "shallow_cnn", "deep_cnn", "oscnn", "fusion_head"} <= names
    assert len(results) == 3 * len(names)
    assert not failures(results)


def test_default_runs_every_suite(monkeypatch):
    calls = []
    for name in SUITES:
        monkeypatch.setitem(SUITES, name, lambda name=name: calls.append(name) or [])
    assert run_selfcheck() == []
    assert calls == list(SUITES)


def test_raster_suite_covers_every_resolution():
    results = {r.name: r for r in run_selfcheck(["raster"])}
    for resolution in (64, 128, 256):
        assert results[f"constant_series_centered[{resolution}]"].passed
        assert f"label_frame[{resolution}]" in results
        assert f"every_step_inked[scatter@{resolution}]" in results
