import logging

import numpy as np
import pytest

from pyvitac.errors import ScoreError
from pyvitac.hns import (StageSpec, SuccessRule, available_schemes,
                         check_reference_rows, evaluate_run, hns, load_scheme,
                         parse_scheme, score_sheet, success, synth_stage_scores)
from pyvitac.rollout import RolloutResult
from pyvitac.synthworld import WorldConfig


OURS = {
    'peg_insertion': ([3.0, 2.7], 0.9333),
    'cap_twist': ([3.0, 2.9], 0.9833),
    'vase_wipe': ([3.0, 2.9], 0.9833),
    'book_flip': ([3.0, 2.6], 0.9333),
}


def rollout_result(success, min_distance, final_distance):
    return RolloutResult(success, 'done' if success else 'approach', 10, min_distance,
                         final_distance, np.zeros((11, 2)), np.zeros((10, 6)), 2)


class TestSchemes:

    def test_shipped_schemes(self):
        assert available_schemes() == ['book_flip', 'cap_twist', 'make_hamburger',
                                       'peg_insertion', 'synth_insertion', 'vase_wipe']
        hamburger = load_scheme('make_hamburger')
        assert len(hamburger) == 11
        assert sum(hamburger.weights) == 16

    @pytest.mark.parametrize('task', sorted(OURS))
    def test_best_rows_pass(self, task):
        scores, expected = OURS[task]
        scheme = load_scheme(task)
        assert round(hns(scores, scheme.stages), 4) == expected
        assert success(scores, scheme)

    def test_unknown_task(self):
        with pytest.raises(ScoreError):
            load_scheme('juggling')

    def test_undefined_stage_in_rule(self):
        with pytest.raises(ScoreError) as info:
            parse_scheme("task = t\nstage = 1, A\nsuccess = s2 >= 1\n")
        assert info.value.row == 3

    def test_malformed_rule(self):
        with pytest.raises(ScoreError):
            SuccessRule.parse("s1 => 3", 1)

    def test_unknown_key(self):
        with pytest.raises(ScoreError) as info:
            parse_scheme("task = t\nweight = 2\n")
        assert info.value.row == 2


class TestReferenceRows:

    def test_hamburger(self, caplog):
        with caplog.at_level(logging.WARNING):
            checks = check_reference_rows(load_scheme('make_hamburger'))
        by_label = dict((c.label, c) for c in checks)
        assert by_label['Ours'].recomputed == pytest.approx(42.4 / 48)
        assert by_label['Ours'].ok
        assert by_label['w/o Touch'].recomputed == pytest.approx(0.61875)
        assert not by_label['w/o Touch'].ok
        assert 'w/o Touch' in caplog.text

    def test_peg_mismatches(self):
        checks = check_reference_rows(load_scheme('peg_insertion'))
        assert sorted(c.label for c in checks if not c.ok) == ['ACT w/T', 'DP']


class TestScoring:

    def test_zero_scores(self):
        scheme = load_scheme('peg_insertion')
        report = evaluate_run([[0.0, 0.0]], scheme)
        assert report.mean_hns == 0.0
        assert report.success_rate == 0.0

    def test_range(self):
        with pytest.raises(ScoreError):
            hns([3.5, 1.0], [StageSpec(1, 1), StageSpec(2, 2)])
        with pytest.raises(ScoreError):
            hns([1.0], [StageSpec(1, 1), StageSpec(2, 2)])

    def test_stage_weights_must_be_positive(self):
        with pytest.raises(ScoreError):
            StageSpec(1, 0)

    def test_raising_one_stage_never_lowers_the_score(self):
        stages = load_scheme('make_hamburger').stages
        rng = np.random.default_rng(11)
        for _ in range(20):
            scores = list(rng.uniform(0.0, 3.0, size=len(stages)))
            base = hns(scores, stages)
            for i in range(len(stages)):
                raised = list(scores)
                raised[i] = min(3.0, raised[i] + rng.uniform(0.0, 1.0))
                assert hns(raised, stages) >= base

    @pytest.mark.parametrize('factor', [0.25, 2.0, 1024.0])
    def test_scaling_the_weights_changes_nothing(self, factor):
        stages = load_scheme('make_hamburger').stages
        scaled = [StageSpec(s.index, s.weight * factor, s.description) for s in stages]
        scores = list(np.random.default_rng(12).uniform(0.0, 3.0, size=len(stages)))
        assert hns(scores, scaled) == hns(scores, stages)

    def test_odd_weight_scaling_changes_nothing_but_rounding(self):
        stages = load_scheme('make_hamburger').stages
        tripled = [StageSpec(s.index, s.weight * 3.0) for s in stages]
        scores = [3.0, 2.5, 0.0, 1.0, 3.0, 2.0, 1.5, 3.0, 0.5, 2.0, 3.0]
        assert hns(scores, tripled) == pytest.approx(hns(scores, stages), rel=1e-12)

    def test_report_table(self):
        report = evaluate_run([[3.0, 3.0], [3.0, 1.0]], load_scheme('peg_insertion'))
        lines = report.to_table().splitlines()
        assert lines[0] == "run\ts1\ts2\tHNS\tsuccess"
        assert lines[1].endswith("1.0000\t1")
        assert lines[-1] == "mean\t3.0000\t2.0000\t0.7778\t0.5000"


class TestSheets:

    def test_sheet(self):
        reports = score_sheet("peg_insertion 3.0 2.7\npeg_insertion, 3, 3\n# done\n")
        assert len(reports) == 1
        assert [round(r.hns, 4) for r in reports[0].runs] == [0.9333, 1.0]

    def test_tasks_are_grouped(self):
        reports = score_sheet("cap_twist 3 3\npeg_insertion 3 3\ncap_twist 0 0\n")
        assert [r.scheme.task for r in reports] == ['cap_twist', 'peg_insertion']
        assert len(reports[0].runs) == 2

    def test_wrong_task(self):
        with pytest.raises(ScoreError) as info:
            score_sheet("peg_insertion 3 3\ncap_twist 3 3\n", task='peg_insertion')
        assert info.value.row == 2

    def test_malformed_line(self):
        with pytest.raises(ScoreError) as info:
            score_sheet("peg_insertion 3 3\npeg_insertion 3 x\n")
        assert info.value.row == 2

    def test_wrong_number_of_scores(self):
        with pytest.raises(ScoreError):
            score_sheet("peg_insertion 3 3 3\n")


class TestSynthStages:

    def test_success_scores_full(self):
        assert synth_stage_scores(rollout_result(True, 0.01, 0.01), WorldConfig()) == [3.0, 3.0]

    def test_partial_runs(self):
        config = WorldConfig()
        assert synth_stage_scores(rollout_result(False, 0.3, 0.3), config) == [2.0, 0.0]
        assert synth_stage_scores(rollout_result(False, 0.04, 0.08), config) == [3.0, 2.0]
        assert synth_stage_scores(rollout_result(False, 2.0, 2.0), config) == [0.0, 0.0]

    def test_scores_feed_the_scheme(self):
        scheme = load_scheme('synth_insertion')
        results = [rollout_result(True, 0.0, 0.0), rollout_result(False, 0.3, 0.3)]
        report = evaluate_run([synth_stage_scores(r, WorldConfig()) for r in results], scheme)
        assert report.success_rate == 0.5
        assert report.mean_hns == pytest.approx((1.0 + 2.0 / 9) / 2)
