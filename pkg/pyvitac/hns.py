"""Human normalized scores: per-task stage weights, success rules, score
sheets and report tables.

A run is scored per stage from 0 to 3 (averages of several judgments are
fine).  Its human normalized score is

    HNS = sum(w_i * s_i) / (3 * sum(w_i))

so it lies in [0, 1].  Task schemes are small text files shipped in
pyvitac/schemes; each names its stages with their weights, a success rule,
and optionally published reference rows to check the arithmetic against:

    task = peg_insertion
    stage = 1, Grasp
    stage = 2, Insertion
    success = s1 == 3 and s2 >= 2
    reference = Ours: 3.0 2.7 = 0.93
"""

import logging
import operator
import os
import re

from pyvitac.errors import ScoreError
from pyvitac.utilities import _log, parse_key_values, split_fields, strip_comment


MAX_SCORE = 3.0
REFERENCE_TOLERANCE = 0.005
SCHEME_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), 'schemes')
SCHEME_SUFFIX = '.scheme'

OPERATORS = {
    '>=': operator.ge,
    '>': operator.gt,
    '==': operator.eq,
    '<=': operator.le,
    '<': operator.lt,
}
CLAUSE = re.compile(r'^(?:s(\d+)|(all))\s*(>=|<=|==|>|<)\s*([0-9]+(?:\.[0-9]*)?)$')


class StageSpec(object):
    """One scored stage of a task: its 1-based index, weight and what it
    covers"""

    def __init__(self, index, weight, description=''):
        weight = float(weight)
        if not weight > 0:
            raise ScoreError("stage weights must be positive",
                             context={'stage': index, 'weight': weight})
        self.index = index
        self.weight = weight
        self.description = description

    def __repr__(self):
        return "<StageSpec %d w=%g %s>" % (self.index, self.weight, self.description)


class Clause(object):
    """One `sN OP value` or `all OP value` comparison"""

    def __init__(self, stage, op, value):
        self.stage = stage
        self.op = op
        self.value = float(value)

    def holds(self, scores):
        compare = OPERATORS[self.op]
        if self.stage is None:
            return all(compare(s, self.value) for s in scores)
        return compare(scores[self.stage - 1], self.value)

    def __str__(self):
        name = 'all' if self.stage is None else 's%d' % self.stage
        return "%s %s %g" % (name, self.op, self.value)


class SuccessRule(object):
    """A conjunction of clauses over the stage scores"""

    def __init__(self, clauses):
        self.clauses = list(clauses)

    @classmethod
    def parse(cls, text, n_stages, row=None):
        """
        >>> rule = SuccessRule.parse("s1 == 3 and s2 >= 2", 2)
        >>> rule.holds([3, 2]), rule.holds([3, 1.9])
        (True, False)
        """
        clauses = []
        for part in re.split(r'\s+and\s+', text.strip()):
            match = CLAUSE.match(part.strip())
            if match is None:
                raise ScoreError("malformed success clause %r" % part, row=row)
            stage = int(match.group(1)) if match.group(1) else None
            if stage is not None and not 1 <= stage <= n_stages:
                raise ScoreError("success rule names undefined stage s%d" % stage, row=row,
                                 context={'stages': n_stages})
            clauses.append(Clause(stage, match.group(3), match.group(4)))
        return cls(clauses)

    def holds(self, scores):
        return all(clause.holds(scores) for clause in self.clauses)

    def __str__(self):
        return " and ".join(str(c) for c in self.clauses)


class ReferenceRow(object):
    """A published per-stage score row with its printed HNS"""

    def __init__(self, label, scores, printed):
        self.label = label
        self.scores = [float(s) for s in scores]
        self.printed = float(printed)


class TaskScheme(object):
    """Stages, success rule and reference rows of one task"""

    def __init__(self, task, stages, rule, references=None):
        if not stages:
            raise ScoreError("a task needs at least one stage", context={'task': task})
        self.task = task
        self.stages = list(stages)
        self.rule = rule
        self.references = list(references or [])

    @property
    def weights(self):
        return [s.weight for s in self.stages]

    def __len__(self):
        return len(self.stages)


def parse_scheme(text):
    """Parses a scheme document.  Errors name the offending line."""
    task = None
    stages = []
    rule_text = None
    rule_row = None
    references = []
    for row, key, value in parse_key_values(text):
        if value is None:
            raise ScoreError("expected key = value", row=row)
        if key == 'task':
            task = value
        elif key == 'stage':
            weight, _, description = value.partition(',')
            try:
                stages.append(StageSpec(len(stages) + 1, float(weight), description.strip()))
            except ValueError:
                raise ScoreError("malformed stage weight %r" % weight, row=row)
        elif key == 'success':
            rule_text, rule_row = value, row
        elif key == 'reference':
            label, _, rest = value.partition(':')
            scores, _, printed = rest.partition('=')
            try:
                references.append(ReferenceRow(label.strip(), split_fields(scores),
                                               float(printed)))
            except ValueError:
                raise ScoreError("malformed reference row", row=row)
        else:
            raise ScoreError("unknown scheme key %r" % key, row=row)
    if task is None or rule_text is None:
        raise ScoreError("a scheme needs a task and a success rule")
    rule = SuccessRule.parse(rule_text, len(stages), rule_row)
    for reference in references:
        if len(reference.scores) != len(stages):
            raise ScoreError("reference row %r has the wrong number of scores" % reference.label)
    return TaskScheme(task, stages, rule, references)


def available_schemes():
    return sorted(name[:-len(SCHEME_SUFFIX)] for name in os.listdir(SCHEME_DIR)
                  if name.endswith(SCHEME_SUFFIX))


def load_scheme(task):
    """Loads a shipped scheme by task name, or a scheme file by path"""
    path = task if os.path.isfile(task) else os.path.join(SCHEME_DIR, task + SCHEME_SUFFIX)
    if not os.path.isfile(path):
        raise ScoreError("unknown task %r" % task,
                         context={'known': ",".join(available_schemes())})
    with open(path) as handle:
        return parse_scheme(handle.read())


### Scoring

def _check_scores(scores, specs, row=None):
    if len(scores) != len(specs):
        raise ScoreError("expected %d stage scores, got %d" % (len(specs), len(scores)), row=row)
    for index, score in enumerate(scores):
        if not 0.0 <= score <= MAX_SCORE:
            raise ScoreError("stage score outside [0, 3]", row=row,
                             context={'stage': index + 1, 'score': score})


def hns(scores, specs, row=None):
    """The human normalized score of one run.

    >>> hns([3.0, 3.0], [StageSpec(1, 1), StageSpec(2, 2)])
    1.0
    >>> round(hns([3.0, 2.7], [StageSpec(1, 1), StageSpec(2, 2)]), 4)
    0.9333
    """
    scores = [float(s) for s in scores]
    _check_scores(scores, specs, row)
    weighted = sum(spec.weight * s for spec, s in zip(specs, scores))
    return weighted / (MAX_SCORE * sum(spec.weight for spec in specs))


def success(scores, scheme):
    return scheme.rule.holds([float(s) for s in scores])


class RunScore(object):

    def __init__(self, run, scores, value, succeeded):
        self.run = run
        self.scores = scores
        self.hns = value
        self.success = succeeded


class HnsReport(object):
    """Scores of a set of runs of one task, with their means"""

    def __init__(self, scheme, runs, label=None):
        self.scheme = scheme
        self.runs = runs
        self.label = label

    @property
    def mean_hns(self):
        return sum(r.hns for r in self.runs) / float(len(self.runs)) if self.runs else 0.0

    @property
    def success_rate(self):
        return sum(1 for r in self.runs if r.success) / float(len(self.runs)) if self.runs else 0.0

    @property
    def stage_means(self):
        if not self.runs:
            return [0.0] * len(self.scheme)
        return [sum(r.scores[i] for r in self.runs) / float(len(self.runs))
                for i in range(len(self.scheme))]

    def to_table(self, delimiter="\t"):
        """Per-run rows and a closing mean row: run, s1..sN, HNS, success"""
        columns = (['run'] + ['s%d' % s.index for s in self.scheme.stages]
                   + ['HNS', 'success'])
        lines = [delimiter.join(columns)]
        for r in self.runs:
            lines.append(delimiter.join([str(r.run)] + ["%.4f" % s for s in r.scores]
                                        + ["%.4f" % r.hns, '1' if r.success else '0']))
        lines.append(delimiter.join(['mean'] + ["%.4f" % s for s in self.stage_means]
                                    + ["%.4f" % self.mean_hns, "%.4f" % self.success_rate]))
        return "\n".join(lines) + "\n"


def evaluate_run(score_rows, scheme, label=None):
    """Scores a list of per-run stage score lists under a scheme"""
    runs = []
    for index, scores in enumerate(score_rows):
        scores = [float(s) for s in scores]
        runs.append(RunScore(index, scores, hns(scores, scheme.stages, row=index + 1),
                             success(scores, scheme)))
    return HnsReport(scheme, runs, label)


def parse_score_sheet(text):
    """Parses a score sheet: one run per line, the task name then the stage
    scores, separated by whitespace or commas.

    Returns:
        list of (row number, task, scores)

    >>> parse_score_sheet("peg_insertion 3.0 2.7\\n# note\\npeg_insertion, 3, 2")
    [(1, 'peg_insertion', [3.0, 2.7]), (3, 'peg_insertion', [3.0, 2.0])]
    """
    rows = []
    for number, raw in enumerate(text.splitlines(), start=1):
        fields = split_fields(strip_comment(raw))
        if not fields:
            continue
        if len(fields) < 2:
            raise ScoreError("a sheet line needs a task and at least one score", row=number)
        try:
            scores = [float(f) for f in fields[1:]]
        except ValueError:
            raise ScoreError("malformed score", row=number)
        rows.append((number, fields[0], scores))
    return rows


def score_sheet(text, task=None):
    """Scores a sheet.  Lines of tasks other than `task` (when given) are
    rejected, as are scores that don't fit the task's scheme.

    Returns:
        list of HnsReport, one per task in order of first appearance
    """
    grouped = []
    by_task = {}
    for number, name, scores in parse_score_sheet(text):
        if task is not None and name != task:
            raise ScoreError("sheet line is for task %r, expected %r" % (name, task), row=number)
        if name not in by_task:
            by_task[name] = (load_scheme(name), [])
            grouped.append(name)
        scheme, runs = by_task[name]
        value = hns(scores, scheme.stages, row=number)
        runs.append(RunScore(len(runs), scores, value, success(scores, scheme)))
    return [HnsReport(by_task[name][0], by_task[name][1]) for name in grouped]


### Published rows

class ReferenceCheck(object):

    def __init__(self, task, label, printed, recomputed):
        self.task = task
        self.label = label
        self.printed = printed
        self.recomputed = recomputed

    @property
    def ok(self):
        return abs(self.recomputed - self.printed) <= REFERENCE_TOLERANCE + 1e-12


def check_reference_rows(scheme):
    """Recomputes every reference row of a scheme.  Rows whose printed HNS
    is off by more than rounding are logged as warnings."""
    checks = []
    for reference in scheme.references:
        check = ReferenceCheck(scheme.task, reference.label, reference.printed,
                               hns(reference.scores, scheme.stages))
        if not check.ok:
            _log("%s %s: printed HNS %.2f but the stage scores give %.4f"
                 % (scheme.task, check.label, check.printed, check.recomputed),
                 level=logging.WARNING, log_name="pyvitac.hns")
        checks.append(check)
    return checks


### Synthetic world stages

def synth_stage_scores(result, world_config):
    """Stage scores of a rollout in the synthetic world.

    Reach scores the closest approach to the target: within one grid cell
    3, two cells 2, four cells 1.  Insert scores the end state: done within
    tolerance 3, otherwise within two, four tolerances 2, 1.
    """
    q = world_config.quantization
    tol = world_config.tolerance
    closest = result.min_distance
    if closest <= q:
        reach = 3
    elif closest <= 2 * q:
        reach = 2
    elif closest <= 4 * q:
        reach = 1
    else:
        reach = 0
    final = result.final_distance
    if result.success:
        insert = 3
    elif final < 2 * tol:
        insert = 2
    elif final < 4 * tol:
        insert = 1
    else:
        insert = 0
    return [float(reach), float(insert)]
