import os

import pytest

from pyvitac import tensor as T
from pyvitac.checkpoint import save_checkpoint
from pyvitac.cli import ABLATION_NAME, EVAL_REPORT_NAME, HNS_REPORT_NAME, main
from pyvitac.config import RunConfig
from pyvitac.episodes import MANIFEST_NAME
from pyvitac.errors import EXIT_CONFIG, EXIT_DATA, EXIT_OK, EXIT_VERIFY
from pyvitac.policy import PolicyModel, PolicyVariant
from pyvitac.utilities import file_digest


CONFIG_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), os.pardir, 'configs')
MICRO = os.path.join(CONFIG_DIR, 'micro.conf')


def write_config(path, config):
    path.write_text(config.to_text())
    return str(path)


def report_lines(path):
    with open(path) as handle:
        return handle.read().splitlines()


class TestHns:

    def test_sheet(self, tmp_path, capsys):
        sheet = tmp_path / 'scores.txt'
        sheet.write_text("peg_insertion 3.0 2.7\npeg_insertion 3 3\n")
        assert main(['hns', '--sheet', str(sheet), '--out', str(tmp_path)]) == EXIT_OK
        out = capsys.readouterr().out
        assert '0.9333' in out
        assert out.splitlines()[0] == '# task peg_insertion'

    def test_sheet_report(self, tmp_path, capsys):
        sheet = tmp_path / 'scores.txt'
        sheet.write_text("peg_insertion 3.0 2.7\n")
        out = str(tmp_path / 'scores')
        assert main(['hns', '--sheet', str(sheet), '--out', out]) == EXIT_OK
        lines = report_lines(os.path.join(out, HNS_REPORT_NAME))
        assert lines[0] == '# config_digest=' + RunConfig.desk().digest()
        assert lines[1:] == capsys.readouterr().out.splitlines()
        assert lines[2] == 'run\ts1\ts2\tHNS\tsuccess'

    def test_malformed_sheet(self, tmp_path):
        sheet = tmp_path / 'scores.txt'
        sheet.write_text("peg_insertion 3.0 lots\n")
        assert main(['hns', '--sheet', str(sheet), '--out', str(tmp_path)]) == EXIT_DATA
        assert not os.path.exists(str(tmp_path / HNS_REPORT_NAME))

    def test_missing_sheet(self, tmp_path):
        assert main(['hns', '--sheet', str(tmp_path / 'nowhere.txt'),
                     '--out', str(tmp_path)]) == EXIT_DATA

    def test_reference_rows(self, tmp_path, capsys):
        assert main(['hns', '--task', 'make_hamburger', '--out', str(tmp_path)]) == EXIT_OK
        lines = capsys.readouterr().out.splitlines()
        assert lines[0].startswith('make_hamburger\tw/o Touch\tprinted=0.61\t')
        assert lines[0].endswith('MISMATCH')
        assert lines[1].endswith('\tok')
        assert report_lines(str(tmp_path / HNS_REPORT_NAME))[1:] == lines

    def test_nothing_to_score(self, tmp_path):
        assert main(['hns', '--out', str(tmp_path)]) == EXIT_CONFIG


class TestGradcheck:

    def test_passes(self, capsys):
        assert main(['gradcheck', '--config', MICRO]) == EXIT_OK
        assert 'model' in capsys.readouterr().out

    def test_broken_rule(self, monkeypatch, capsys):
        monkeypatch.setitem(T.BACKWARD_RULES, 'exp', lambda node, grad: (grad * 2.0,))
        assert main(['gradcheck']) == EXIT_VERIFY
        assert 'FAILED' in capsys.readouterr().out


class TestDatagen:

    def test_identical_runs(self, tmp_path):
        first, second = str(tmp_path / 'a'), str(tmp_path / 'b')
        assert main(['datagen', '--config', MICRO, '--out', first]) == EXIT_OK
        assert main(['datagen', '--config', MICRO, '--out', second, '--workers', '2']) == EXIT_OK
        for name in sorted(n for n in os.listdir(first) if n.endswith('.pvep')):
            assert (file_digest(os.path.join(first, name))
                    == file_digest(os.path.join(second, name)))
        manifest = report_lines(os.path.join(first, MANIFEST_NAME))
        assert manifest[0] == '# config_digest=' + RunConfig.micro().digest()

    def test_infeasible_world(self, tmp_path):
        conf = tmp_path / 'bad.conf'
        conf.write_text("quantization = 0.05\ntolerance = 0.05\n")
        assert main(['datagen', '--config', str(conf), '--out', str(tmp_path)]) == EXIT_CONFIG

    def test_unknown_key(self, tmp_path):
        conf = tmp_path / 'bad.conf'
        conf.write_text("epoch = 3\n")
        assert main(['datagen', '--config', str(conf), '--out', str(tmp_path)]) == EXIT_CONFIG


class TestTrainAndEval:

    def test_train_on_a_written_dataset(self, tmp_path, capsys):
        data, run = str(tmp_path / 'data'), str(tmp_path / 'run')
        assert main(['datagen', '--config', MICRO, '--out', data]) == EXIT_OK
        assert main(['train', '--config', MICRO, '--data', data, '--out', run]) == EXIT_OK
        assert sorted(os.listdir(run)) == ['checkpoint.pvck', 'metrics.tsv']
        assert 'epoch 1 L_total=' in capsys.readouterr().out

    def test_train_on_a_missing_dataset(self, tmp_path):
        assert main(['train', '--config', MICRO, '--data', str(tmp_path / 'none'),
                     '--out', str(tmp_path)]) == EXIT_DATA

    def test_expert_evaluation(self, tmp_path, capsys):
        assert main(['eval', '--config', MICRO, '--checkpoint', 'expert',
                     '--out', str(tmp_path)]) == EXIT_OK
        lines = report_lines(str(tmp_path / EVAL_REPORT_NAME))
        assert lines[0] == '# config_digest=' + RunConfig.micro().digest()
        assert lines[1] == 'run\ts1\ts2\tHNS\tsuccess'
        assert lines[-1] == 'mean\t3.0000\t3.0000\t1.0000\t1.0000'
        assert 'success rate 1.00' in capsys.readouterr().out

    def test_checkpoint_of_another_model(self, tmp_path):
        path = str(tmp_path / 'model.pvck')
        save_checkpoint(PolicyModel(RunConfig.micro().policy_config()), path)
        wider = write_config(tmp_path / 'wider.conf', RunConfig.micro(model_dim=16))
        assert main(['eval', '--config', wider, '--checkpoint', path,
                     '--out', str(tmp_path)]) == EXIT_CONFIG

    def test_learned_checkpoint(self, tmp_path):
        path = str(tmp_path / 'model.pvck')
        save_checkpoint(PolicyModel(RunConfig.micro().policy_config()), path)
        assert main(['eval', '--config', MICRO, '--checkpoint', path, '--runs', '1',
                     '--out', str(tmp_path)]) == EXIT_OK
        assert len(report_lines(str(tmp_path / EVAL_REPORT_NAME))) == 4

    def test_eval_needs_a_two_stage_task(self, tmp_path):
        assert main(['eval', '--config', MICRO, '--checkpoint', 'expert',
                     '--task', 'make_hamburger', '--out', str(tmp_path)]) == EXIT_CONFIG


def tiny_ablation(tmp_path):
    config = RunConfig.micro(episodes=2, epochs=1, ablate_seeds=[0], runs=1, horizon=20)
    return write_config(tmp_path / 'tiny.conf', config)


def test_ablation_table(tmp_path):
    out = str(tmp_path / 'sweep')
    assert main(['ablate', '--config', tiny_ablation(tmp_path), '--quick',
                 '--out', out]) == EXIT_OK
    lines = report_lines(os.path.join(out, ABLATION_NAME))
    assert lines[0].startswith('# config_digest=')
    rows = [line.split('\t') for line in lines[2:]]
    assert [row[0] for row in rows] == list(PolicyVariant.LADDER)
    assert [row[1] for row in rows] == [PolicyVariant.LABELS[v] for v in PolicyVariant.LADDER]
    assert len(set(row[-1] for row in rows)) == 1
    assert [row[5] == '0' for row in rows] == [True] * 3 + [False] * 3


@pytest.mark.slow
def test_desk_ablation_ordering(tmp_path):
    out = str(tmp_path / 'sweep')
    conf = write_config(tmp_path / 'desk.conf', RunConfig.desk(runs=20, workers=4))
    assert main(['ablate', '--config', conf, '--out', out]) == EXIT_OK
    rows = dict((line.split('\t')[0], line.split('\t'))
                for line in report_lines(os.path.join(out, ABLATION_NAME))[2:])
    assert len(rows) == 6
    touchless = float(rows[PolicyVariant.WITHOUT_TOUCH][8])
    full = float(rows[PolicyVariant.FULL][8])
    # the camera cannot resolve the target within tolerance
    assert touchless < 1.0
    assert full >= touchless
