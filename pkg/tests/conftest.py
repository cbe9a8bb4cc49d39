"""Shared test helpers: a scripted world stub and canonical structures."""

from __future__ import annotations

import pytest

from policylab import experiments
from policylab.core import Status


class ScriptedWorld:
    """Minimal tick-protocol stub with hand-set conditions and durations.

    Conditions are true iff their key is in ``truths``. Started skills
    run for ``durations[name]`` advances (default 2) and then finish
    with ``results[name]`` (default SUCCESS). starts/cancels are applied
    immediately, which is what the engine unit tests want.
    """

    def __init__(self, truths=(), durations=None, results=None):
        self.truths = set(truths)
        self.durations = dict(durations or {})
        self.results = dict(results or {})
        self.running: dict = {}
        self.finished: dict = {}
        self.started: list = []
        self.cancelled: list = []

    def set_true(self, *keys):
        self.truths.update(keys)

    def set_false(self, *keys):
        self.truths.difference_update(keys)

    def evaluate(self, literal) -> bool:
        return literal.key() in self.truths

    def skill_running(self, skill, args) -> bool:
        return (skill, tuple(args)) in self.running

    def skill_result(self, skill, args):
        return self.finished.get((skill, tuple(args)))

    def request_start(self, skill, args) -> None:
        key = (skill, tuple(args))
        self.started.append(key)
        if key not in self.running:
            self.finished.pop(key, None)
            self.running[key] = self.durations.get(skill, 2)

    def request_cancel(self, skill, args) -> None:
        key = (skill, tuple(args))
        if key in self.running:
            del self.running[key]
            self.cancelled.append(key)

    def advance(self, ticks: int = 1) -> None:
        for _ in range(ticks):
            for key in list(self.running):
                self.running[key] -= 1
                if self.running[key] <= 0:
                    del self.running[key]
                    self.finished[key] = self.results.get(key[0], Status.SUCCESS)


@pytest.fixture
def fetch_tree():
    return experiments.fetch_bt()


@pytest.fixture
def fetch_machine():
    return experiments.fetch_fsm()


@pytest.fixture
def scripted_world():
    return ScriptedWorld()
