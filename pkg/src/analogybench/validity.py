"""Metric sanity testers over aggregated score tables.

Two checks decide whether a metric is trustworthy enough for relative
comparison on this task:

* Ordering test: best-prompt means must strictly increase from the
  plain-explanation control, to bare-target analogies, to source-given
  analogies (NO_ANLGY < NO_SRC < WSRC).
* Random-perturbation test: for every setting, the mean against a random
  reference must stay strictly below the mean against matched references.

"Best-prompt mean" is the maximum over prompt/preset conditions of the
condition mean for that setting, mode, and metric.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Mapping, Sequence

from .errors import MissingModeError, MissingSettingError
from .analysis import mean_by_condition
from .scoring import RefMode, ScoreRecord

ORDERED_SETTINGS = ("NO_ANLGY", "NO_SRC", "WSRC")


class TesterKind(str, Enum):
    OT = "ot"
    RPT = "rpt"


@dataclass(frozen=True)
class SettingMeans:
    """Best-prompt mean per (setting, ref mode) for one metric."""

    metric: str
    means: Mapping[tuple[str, RefMode], float]

    def get(self, setting: str, mode: RefMode) -> float | None:
        return self.means.get((setting, mode))

    def settings(self) -> list[str]:
        return sorted({setting for setting, _ in self.means})


def build_setting_means(scores: Sequence[ScoreRecord], metric: str) -> SettingMeans:
    """Aggregate raw score records into best-prompt means per setting and mode."""
    means: dict[tuple[str, RefMode], float] = {}
    for mode in RefMode:
        conditions = mean_by_condition(
            [s for s in scores if s.metric == metric], ref_mode=mode
        )
        best: dict[str, float] = {}
        for key, sample in conditions.items():
            current = best.get(key.setting)
            if current is None or sample.mean > current:
                best[key.setting] = sample.mean
        for setting, value in best.items():
            means[(setting, mode)] = value
    return SettingMeans(metric=metric, means=means)


@dataclass(frozen=True)
class TesterVerdict:
    tester: TesterKind
    metric: str
    passed: bool
    details: tuple[dict, ...]  # ordered comparisons, enough to recompute `passed`

    def summary(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{self.tester.value.upper()} [{self.metric}]: {status}"


def ordering_test(means: SettingMeans) -> TesterVerdict:
    """Strict NO_ANLGY < NO_SRC < WSRC on matched-mode best-prompt means."""
    values = []
    for setting in ORDERED_SETTINGS:
        value = means.get(setting, RefMode.MATCHED)
        if value is None:
            raise MissingSettingError(f"ordering test needs matched-mode means for {setting}")
        values.append(value)
    comparisons = []
    passed = True
    for (low_name, low), (high_name, high) in zip(
        zip(ORDERED_SETTINGS, values), zip(ORDERED_SETTINGS[1:], values[1:])
    ):
        ok = low < high
        passed = passed and ok
        comparisons.append(
            {"lesser": low_name, "greater": high_name, "lesser_mean": low,
             "greater_mean": high, "gap": high - low, "ok": ok}
        )
    return TesterVerdict(tester=TesterKind.OT, metric=means.metric, passed=passed,
                         details=tuple(comparisons))


def random_perturbation_test(means: SettingMeans) -> TesterVerdict:
    """Random-reference mean must fall below the matched mean in every setting."""
    comparisons = []
    passed = True
    for setting in means.settings():
        matched = means.get(setting, RefMode.MATCHED)
        randomized = means.get(setting, RefMode.RANDOM)
        if matched is None or randomized is None:
            raise MissingModeError(f"setting {setting} lacks a matched or random mean")
        ok = randomized < matched
        passed = passed and ok
        comparisons.append(
            {"setting": setting, "random_mean": randomized, "matched_mean": matched,
             "gap": matched - randomized, "ok": ok}
        )
    return TesterVerdict(tester=TesterKind.RPT, metric=means.metric, passed=passed,
                         details=tuple(comparisons))
