import itertools

import pytest

from analogybench import validity
from analogybench.errors import MissingModeError, MissingSettingError
from analogybench.scoring import RefMode, ScoreRecord
from analogybench.validity import (
    SettingMeans,
    build_setting_means,
    ordering_test,
    random_perturbation_test,
)

# best-prompt means reported for the reference learned metric
FIXTURE = {
    ("NO_ANLGY", RefMode.MATCHED): 0.445,
    ("NO_ANLGY", RefMode.RANDOM): 0.349,
    ("NO_SRC", RefMode.MATCHED): 0.462,
    ("NO_SRC", RefMode.RANDOM): 0.375,
    ("WSRC", RefMode.MATCHED): 0.515,
    ("WSRC", RefMode.RANDOM): 0.385,
}


def _means(mapping, metric="external:bleurt"):
    return SettingMeans(metric=metric, means=mapping)


class TestOrderingTest:
    def test_reference_fixture_passes(self):
        verdict = ordering_test(_means(FIXTURE))
        assert verdict.passed
        assert verdict.tester is validity.TesterKind.OT
        assert [d["gap"] for d in verdict.details] == pytest.approx([0.017, 0.053])

    def test_reversed_fixture_fails(self):
        reversed_fixture = dict(FIXTURE)
        reversed_fixture[("NO_ANLGY", RefMode.MATCHED)] = 0.515
        reversed_fixture[("NO_SRC", RefMode.MATCHED)] = 0.462
        reversed_fixture[("WSRC", RefMode.MATCHED)] = 0.445
        assert not ordering_test(_means(reversed_fixture)).passed

    def test_equal_values_fail(self):
        flat = {(s, RefMode.MATCHED): 0.4 for s in ("NO_ANLGY", "NO_SRC", "WSRC")}
        assert not ordering_test(_means(flat)).passed

    def test_missing_setting_is_error(self):
        partial = {k: v for k, v in FIXTURE.items() if k[0] != "WSRC"}
        with pytest.raises(MissingSettingError):
            ordering_test(_means(partial))

    def test_details_recompute_pass(self):
        verdict = ordering_test(_means(FIXTURE))
        assert verdict.passed == all(d["ok"] for d in verdict.details)


class TestRandomPerturbationTest:
    def test_reference_fixture_passes(self):
        verdict = random_perturbation_test(_means(FIXTURE))
        assert verdict.passed
        assert verdict.tester is validity.TesterKind.RPT
        assert len(verdict.details) == 3

    def test_one_inverted_setting_fails(self):
        broken = dict(FIXTURE)
        broken[("NO_SRC", RefMode.RANDOM)] = 0.5  # above the matched 0.462
        assert not random_perturbation_test(_means(broken)).passed

    def test_tie_fails(self):
        broken = dict(FIXTURE)
        broken[("WSRC", RefMode.RANDOM)] = FIXTURE[("WSRC", RefMode.MATCHED)]
        assert not random_perturbation_test(_means(broken)).passed

    def test_single_setting_table(self):
        single = {("NO_SRC", RefMode.MATCHED): 0.4, ("NO_SRC", RefMode.RANDOM): 0.2}
        assert random_perturbation_test(_means(single)).passed

    def test_missing_mode_is_error(self):
        partial = {("NO_SRC", RefMode.MATCHED): 0.4}
        with pytest.raises(MissingModeError):
            random_perturbation_test(_means(partial))


class TestSyntheticGrids:
    def test_ot_verdict_matches_inequality_on_all_small_grids(self):
        grid = [0.1, 0.2, 0.3]
        for a, b, c in itertools.product(grid, repeat=3):
            means = _means(
                {
                    ("NO_ANLGY", RefMode.MATCHED): a,
                    ("NO_SRC", RefMode.MATCHED): b,
                    ("WSRC", RefMode.MATCHED): c,
                }
            )
            assert ordering_test(means).passed == (a < b < c)

    def test_rpt_verdict_matches_inequality_on_all_small_grids(self):
        grid = [0.1, 0.2]
        for ra, ma, rb, mb in itertools.product(grid, repeat=4):
            means = _means(
                {
                    ("NO_SRC", RefMode.MATCHED): ma,
                    ("NO_SRC", RefMode.RANDOM): ra,
                    ("WSRC", RefMode.MATCHED): mb,
                    ("WSRC", RefMode.RANDOM): rb,
                }
            )
            assert random_perturbation_test(means).passed == (ra < ma and rb < mb)


class TestBuildSettingMeans:
    def _score(self, concept, prompt_id, value, ref_mode=RefMode.MATCHED, sample_index=0):
        return ScoreRecord(
            concept_id=concept, prompt_id=prompt_id, preset="tl", model_id="m",
            sample_index=sample_index, perturb="none", metric="rouge_l",
            ref_mode=ref_mode, reference_id="r", value=value,
        )

    def test_best_prompt_is_max_of_condition_means(self):
        scores = [
            self._score("c1", "NO_SRC.P1", 0.2),
            self._score("c2", "NO_SRC.P1", 0.4),  # P1 mean 0.3
            self._score("c1", "NO_SRC.P2", 0.5),
            self._score("c2", "NO_SRC.P2", 0.1),  # P2 mean 0.3
            self._score("c1", "NO_SRC.P3", 0.45),
            self._score("c2", "NO_SRC.P3", 0.35),  # P3 mean 0.4 <- best
        ]
        means = build_setting_means(scores, "rouge_l")
        assert means.get("NO_SRC", RefMode.MATCHED) == pytest.approx(0.4)

    def test_sample_averaging_applies(self):
        scores = [
            self._score("c1", "NO_SRC.P1", 1.0, sample_index=0),
            self._score("c1", "NO_SRC.P1", 0.0, sample_index=1),
        ]
        means = build_setting_means(scores, "rouge_l")
        assert means.get("NO_SRC", RefMode.MATCHED) == pytest.approx(0.5)

    def test_row_order_invariance(self):
        scores = [
            self._score("c1", "NO_SRC.P1", 0.2),
            self._score("c1", "NO_SRC.P2", 0.6),
            self._score("c1", "NO_SRC.P1", 0.4, ref_mode=RefMode.RANDOM),
            self._score("c1", "NO_SRC.P2", 0.1, ref_mode=RefMode.RANDOM),
        ]
        forward = build_setting_means(scores, "rouge_l")
        backward = build_setting_means(list(reversed(scores)), "rouge_l")
        assert forward.means == backward.means
        verdict_f = random_perturbation_test(forward)
        verdict_b = random_perturbation_test(backward)
        assert verdict_f.passed == verdict_b.passed
