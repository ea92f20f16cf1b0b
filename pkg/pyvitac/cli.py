"""Command line front end.

    pyvitac datagen   --config desk.conf --out data/
    pyvitac train     --config desk.conf --data data/ --out run/
    pyvitac eval      --config desk.conf --checkpoint run/checkpoint.pvck --out run/
    pyvitac ablate    --config desk.conf --data data/ --out sweep/ [--quick]
    pyvitac gradcheck [--config micro.conf]
    pyvitac hns       --sheet scores.txt [--task peg_insertion] --out scores/

Every report written to disk starts with the digest of the run
configuration.  Exit codes: 0 success, 2 configuration error, 3 numeric
failure, 4 failed verification, 5 unreadable data.
"""

import argparse
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor

from pyvitac.checkpoint import load_checkpoint
from pyvitac.config import RunConfig
from pyvitac.episodes import (SampleSet, dataset_digest, read_dataset,
                              write_dataset)
from pyvitac.errors import (EXIT_OK, EXIT_VERIFY, ConfigError, exit_code_for,
                            is_error)
from pyvitac.hns import (check_reference_rows, evaluate_run, load_scheme,
                         score_sheet, synth_stage_scores)
from pyvitac.policy import PolicyVariant
from pyvitac.rollout import ExpertChunkPolicy, LearnedPolicy, evaluate
from pyvitac.synthworld import generate_dataset
from pyvitac.training import train
from pyvitac.utilities import _log
from pyvitac.verify import run_suites


LOG_NAME = "pyvitac.cli"
DIGEST_PREFIX = "# config_digest="
EVAL_REPORT_NAME = "eval_report.tsv"
ABLATION_NAME = "ablation.tsv"
HNS_REPORT_NAME = "hns_report.tsv"
EXPERT_CHECKPOINT = 'expert'
ABLATION_COLUMNS = ('variant', 'label', 'L_total', 'L_KL', 'L_JA', 'L_tactile', 'L_arm',
                    'HNS', 'success_rate', 'dataset')


def _emit(text):
    sys.stdout.write(text)
    if not text.endswith("\n"):
        sys.stdout.write("\n")


def _load_config(args, default='desk'):
    if args.config:
        config = RunConfig.load(args.config)
    else:
        config = RunConfig.micro() if default == 'micro' else RunConfig.desk()
    overrides = {}
    if args.seed is not None:
        overrides[args.seed_key] = args.seed
    if getattr(args, 'runs', None) is not None:
        overrides['runs'] = args.runs
    if getattr(args, 'workers', None) is not None:
        overrides['workers'] = args.workers
    if getattr(args, 'task', None) and args.command == 'eval':
        overrides['task'] = args.task
    return config.replace(**overrides) if overrides else config


def _write_report(path, config, body):
    directory = os.path.dirname(path)
    if directory and not os.path.isdir(directory):
        os.makedirs(directory)
    with open(path, 'w') as handle:
        handle.write(DIGEST_PREFIX + config.digest() + "\n")
        handle.write(body)


def _episodes(args, config):
    """The dataset of --data, or one generated from the configuration"""
    world = config.world_config()
    if args.data:
        episodes, _ = read_dataset(args.data, expect=world)
        return episodes
    _log("no --data given, generating %d episodes" % config.episodes, log_name=LOG_NAME)
    return generate_dataset(config.episodes, config.data_seed, world, config.workers)


def _eval_scheme(config):
    scheme = load_scheme(config.task)
    if len(scheme) != 2:
        raise ConfigError("closed loop evaluation scores reach and insert stages; task %r "
                          "has %d stages" % (config.task, len(scheme)))
    return scheme


def _score(policy, config, label=None):
    world = config.world_config()
    results = evaluate(policy, world, config.runs, config.eval_seed,
                       config.replan_every, config.blend_horizon)
    rows = [synth_stage_scores(result, world) for result in results]
    return evaluate_run(rows, _eval_scheme(config), label)


### Commands

def cmd_datagen(args):
    config = _load_config(args)
    episodes = generate_dataset(config.episodes, config.data_seed, config.world_config(),
                                config.workers)
    manifest = write_dataset(episodes, args.out, config.digest())
    successes = sum(1 for e in episodes if e.success)
    _emit("%d episodes (%d successful, %d frames) written, manifest %s"
          % (len(episodes), successes, sum(e.length for e in episodes), manifest))
    return EXIT_OK


def cmd_train(args):
    config = _load_config(args)
    result = train(_episodes(args, config), config, out_dir=args.out)
    final = result.final
    _emit("epoch %d L_total=%.6g L_KL=%.6g L_JA=%.6g L_tactile=%.6g L_arm=%.6g\n"
          "metrics %s\ncheckpoint %s"
          % (final.epoch, final.total, final.kl, final.ja, final.tactile, final.arm,
             result.metrics_path, result.checkpoint_path))
    return EXIT_OK


def cmd_eval(args):
    config = _load_config(args)
    if not args.checkpoint:
        raise ConfigError("eval needs --checkpoint (a file, or 'expert')")
    if args.checkpoint == EXPERT_CHECKPOINT:
        policy = ExpertChunkPolicy(config.action_horizon)
    else:
        model = load_checkpoint(args.checkpoint, config.policy_config(),
                                weights=config.loss_weights())
        policy = LearnedPolicy(model, config.latent_mode, config.eval_seed)
    report = _score(policy, config, label=args.checkpoint)
    table = report.to_table()
    _write_report(os.path.join(args.out, EVAL_REPORT_NAME), config, table)
    _emit(table)
    _emit("mean HNS %.4f, success rate %.2f" % (report.mean_hns, report.success_rate))
    return EXIT_OK


def _ablation_cell(episodes, samples, config, variant, seed):
    result = train(episodes, config, variant=variant, seed=seed, samples=samples)
    policy = LearnedPolicy(result.model, config.latent_mode, config.eval_seed)
    return result.final, _score(policy, config, label=variant)


def cmd_ablate(args):
    config = _load_config(args)
    episodes = _episodes(args, config)
    digest = dataset_digest(episodes)
    seeds = list(config.ablate_seeds)
    if args.quick:
        seeds = seeds[:2]
    samples = SampleSet(episodes, config.policy_config(), floor=config.std_floor)
    jobs = [(variant, seed) for variant in PolicyVariant.LADDER for seed in seeds]
    with ThreadPoolExecutor(max_workers=config.workers) as pool:
        futures = [pool.submit(_ablation_cell, episodes, samples, config, variant, seed)
                   for variant, seed in jobs]
        cells = [future.result() for future in futures]

    lines = ["\t".join(ABLATION_COLUMNS)]
    for index, variant in enumerate(PolicyVariant.LADDER):
        mine = cells[index * len(seeds):(index + 1) * len(seeds)]
        count = float(len(mine))
        losses = [sum(getattr(final, part) for final, _ in mine) / count
                  for part in ('total', 'kl', 'ja', 'tactile', 'arm')]
        score = sum(report.mean_hns for _, report in mine) / count
        rate = sum(report.success_rate for _, report in mine) / count
        lines.append("\t".join([variant, PolicyVariant.LABELS[variant]]
                               + ["%.6g" % v for v in losses]
                               + ["%.4f" % score, "%.4f" % rate, digest[:16]]))
    table = "\n".join(lines) + "\n"
    _write_report(os.path.join(args.out, ABLATION_NAME), config, table)
    _emit(table)
    return EXIT_OK


def cmd_gradcheck(args):
    config = _load_config(args, default='micro')
    report = run_suites(config)
    _emit(report.to_text())
    if not report.passed:
        _log("gradient check failed: %s" % ", ".join(report.failing()),
             level=logging.ERROR, log_name=LOG_NAME)
        return EXIT_VERIFY
    return EXIT_OK


def cmd_hns(args):
    config = _load_config(args)
    if not args.sheet:
        if not args.task:
            raise ConfigError("hns needs --sheet, or --task to check its reference rows")
        scheme = load_scheme(args.task)
        lines = ["%s\t%s\tprinted=%.2f\trecomputed=%.4f\t%s"
                 % (scheme.task, check.label, check.printed, check.recomputed,
                    'ok' if check.ok else 'MISMATCH')
                 for check in check_reference_rows(scheme)]
    else:
        with open(args.sheet) as handle:
            reports = score_sheet(handle.read(), args.task)
        lines = []
        for report in reports:
            lines.append("# task %s" % report.scheme.task)
            lines.append(report.to_table().rstrip("\n"))
    text = "\n".join(lines) + "\n"
    _emit(text)
    _write_report(os.path.join(args.out, HNS_REPORT_NAME), config, text)
    return EXIT_OK


COMMANDS = {
    'datagen': (cmd_datagen, 'data_seed', "generate expert demonstrations"),
    'train': (cmd_train, 'seed', "train a policy on a dataset"),
    'eval': (cmd_eval, 'eval_seed', "roll a checkpoint out and score it"),
    'ablate': (cmd_ablate, 'seed', "train and score every policy variant"),
    'gradcheck': (cmd_gradcheck, 'seed', "finite difference gradient checks"),
    'hns': (cmd_hns, 'seed', "score a sheet of stage scores"),
}


def build_parser():
    parser = argparse.ArgumentParser(prog='pyvitac', description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest='command')
    for name in ('datagen', 'train', 'eval', 'ablate', 'gradcheck', 'hns'):
        handler, seed_key, help_text = COMMANDS[name]
        p = sub.add_parser(name, help=help_text)
        p.set_defaults(handler=handler, seed_key=seed_key)
        p.add_argument('--config', help="run configuration file (key = value lines)")
        p.add_argument('--out', default='.', help="output directory")
        p.add_argument('--seed', type=int, help="overrides the %s key" % seed_key)
        p.add_argument('--verbose', action='store_true', help="log at debug level")
        if name in ('train', 'ablate'):
            p.add_argument('--data', help="dataset directory written by datagen")
        if name in ('datagen', 'ablate'):
            p.add_argument('--workers', type=int, help="worker threads")
        if name in ('eval', 'ablate'):
            p.add_argument('--runs', type=int, help="closed loop runs per evaluation")
        if name == 'eval':
            p.add_argument('--checkpoint', help="checkpoint file, or 'expert'")
        if name in ('eval', 'hns'):
            p.add_argument('--task', help="scoring scheme")
        if name == 'hns':
            p.add_argument('--sheet', help="score sheet, one run per line")
        if name == 'ablate':
            p.add_argument('--quick', action='store_true',
                           help="only the first two ablation seeds")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if not getattr(args, 'handler', None):
        parser.print_help()
        return EXIT_OK
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    try:
        return args.handler(args)
    except Exception as error:
        if not (is_error(error) or isinstance(error, (IOError, OSError))):
            raise
        _log("%s: %s" % (type(error).__name__, error), level=logging.ERROR, log_name=LOG_NAME)
        return exit_code_for(error)


if __name__ == '__main__':
    sys.exit(main())
