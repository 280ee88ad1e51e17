#!/usr/bin/env python3
"""
Command-line entry point for the meta-path search toolkit.

    generate   synthetic scenario -> graph directory + ground truth
    ingest     CSV database + schema manifest -> graph directory
    learn      meta-path search, one trained model per learned path
    train      train an MPS-GNN on given meta-paths
    evaluate   sufficiency and necessity of a trained model's meta-paths
    oracle     occurrence count and induced subgraph size for one node

Options may also come from a JSON file given with --config (keys are option
names with dashes replaced by underscores); flags on the command line win.
Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""

import argparse
import json
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import torch

from app import config
from app.baselines import run_baselines
from app.errors import DataError, MpsGnnError, UsageError
from app.explain_eval import faithfulness_sweep, inside_edit_self_test, sufficiency_check
from app.graph import HeteroGraph, MetaPath, count_occurrences, induced_subgraph
from app.ingest import group_supernodes, load_database, load_graph, load_manifest, save_graph
from app.metapath_search import SearchConfig, compare_with_greedy, format_comparison, learn_metapaths
from app.model import TrainConfig, load_checkpoint, save_checkpoint, train
from app.reporting import log, read_json, write_csv, write_json, write_run_manifest
from app.scoring import OptimizerConfig
from app.synthetic import PRESETS, ScenarioSpec, ground_truth_from_dict, make_lookahead_fixture, preset
from app.synthetic import generate as generate_scenario
from app.toy_graphs import FIXTURES

GROUND_TRUTH_FILE = "ground_truth.json"
LEARN_FIXTURES = sorted(FIXTURES) + ['lookahead']


class CliParser(argparse.ArgumentParser):
    """ArgumentParser that reports bad arguments as UsageError instead of exiting."""

    def error(self, message):
        raise UsageError(f"{message}\n{self.format_usage().strip()}")


# ---------------------------------------------------------------------- helpers


def _metapath_arg(g: HeteroGraph, text: str, l_max: int) -> MetaPath:
    names = [name.strip() for name in text.split(",") if name.strip()]
    if not names:
        raise UsageError("Empty meta-path")
    return MetaPath.from_names(g, names, l_max=max(l_max, len(names)))


def _fractions_arg(text: str) -> List[float]:
    try:
        return [float(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid fraction list '{text}'")


def _ground_truth(graph_dir: Optional[Path], g: HeteroGraph) -> Optional[MetaPath]:
    if graph_dir is None or not (graph_dir / GROUND_TRUTH_FILE).exists():
        return None
    return ground_truth_from_dict(g, read_json(graph_dir / GROUND_TRUTH_FILE)).metapath


def _train_config(args: argparse.Namespace) -> TrainConfig:
    return TrainConfig(
        max_epochs=args.epochs,
        patience=args.patience,
        embedding_dim=args.embedding_dim,
        activation=args.activation,
        skip_connection=not args.no_skip,
        seed=args.seed,
    )


def _resolved(args: argparse.Namespace) -> Dict[str, Any]:
    resolved = {}
    for key, value in sorted(vars(args).items()):
        if key == 'handler':
            continue
        resolved[key] = str(value) if isinstance(value, Path) else value
    return resolved


def _load_inputs(args: argparse.Namespace) -> Tuple[HeteroGraph, Dict[int, int], Optional[MetaPath]]:
    """Graph, labels and ground truth from a graph directory or a named fixture."""
    fixture = getattr(args, 'fixture', None)
    if fixture:
        if fixture == 'lookahead':
            g, labels, truth = make_lookahead_fixture(seed=args.seed)
            return g, labels, truth.metapath
        g, labels = FIXTURES[fixture]()
        return g, labels, None
    if args.graph is None:
        raise UsageError("Give a graph directory or --fixture")
    g, labels, _ = load_graph(args.graph)
    if not labels:
        raise DataError(f"{args.graph} has no labels")
    return g, labels, _ground_truth(args.graph, g)


# ---------------------------------------------------------------------- commands


def cmd_generate(args: argparse.Namespace) -> int:
    triple = (args.relations, args.count, args.length)
    options = dict(
        num_targets=args.targets,
        positive_fraction=args.positive_fraction,
        feature_constrained=args.feature_constrained,
        seed=args.seed,
    )
    if args.preset and any(v is not None for v in triple):
        raise UsageError("Give either --preset or --relations/--count/--length, not both")
    if args.preset:
        spec = preset(args.preset, **options)
    elif all(v is not None for v in triple):
        spec = ScenarioSpec(num_relations=args.relations, threshold=args.count, path_length=args.length, **options)
    else:
        raise UsageError("Give --preset or all of --relations, --count and --length")

    g, labels, truth = generate_scenario(spec)
    out = args.output
    save_graph(g, out, labels)
    payload = truth.to_dict(g)
    payload['spec'] = spec.to_dict()
    write_json(out / GROUND_TRUTH_FILE, payload)
    write_run_manifest(out, 'generate', _resolved(args), args.seed)
    print(f"Generated {g.num_nodes} nodes, {g.num_edges} edges, {sum(labels.values())}/{len(labels)} positive "
          f"targets; ground truth {truth.metapath.describe(g)} -> {out}")
    return 0


def cmd_ingest(args: argparse.Namespace) -> int:
    manifest = load_manifest(args.manifest)
    data_dir = args.data or args.manifest.parent
    g, labels, report = load_database(manifest, data_dir)
    for spec in args.group or []:
        table, sep, column = spec.partition(":")
        if not sep or not table or not column:
            raise UsageError(f"--group expects TABLE:COLUMN, got '{spec}'")
        g, new_id = group_supernodes(g, report, table, column)
        labels = {int(new_id[v]): y for v, y in labels.items()}
        report = report.with_node_ranges(g.node_types, list(g.type_names))
    save_graph(g, args.output, labels, report)
    write_run_manifest(args.output, 'ingest', _resolved(args), args.seed,
                       {'manifest': args.manifest, 'data': data_dir})
    print(f"Ingested {g.num_nodes} nodes, {g.num_edges} edges, {g.num_relations} relations, "
          f"{len(labels)} labels -> {args.output}")
    return 0


def cmd_learn(args: argparse.Namespace) -> int:
    g, labels, truth = _load_inputs(args)
    out = args.output
    if args.fixture:
        save_graph(g, out / "graph", labels)
    search = SearchConfig(
        l_max=args.lmax,
        eta=args.eta,
        beam_k=args.beam,
        seed=args.seed,
        optimizer=OptimizerConfig(steps=args.scoring_steps, aggregation=args.aggregation),
        train=TrainConfig(max_epochs=args.search_epochs, patience=config.SEARCH_PATIENCE),
    )
    final = _train_config(args)

    if args.greedy_f1:
        report = compare_with_greedy(g, labels, search, truth, final)
        write_json(out / "comparison.json", report)
        write_run_manifest(out, 'learn', _resolved(args), args.seed, {'graph': args.graph or args.fixture})
        print(format_comparison(report))
        return 0

    metapaths, trace = learn_metapaths(g, labels, search)
    write_json(out / "search_trace.json", trace.to_dict())
    write_json(out / "metapaths.json", [mp.names(g) for mp in metapaths])

    metrics = []
    for k, mp in enumerate(metapaths):
        model, result = train(g, [mp], labels, final)
        save_checkpoint(model, out / f"model_{k}.ckpt", g)
        metrics.append({'metapath': mp.names(g), **result.to_dict()})
    summary: Dict[str, Any] = {'models': metrics, 'baselines': run_baselines(g, labels, args.seed)}
    if truth is not None:
        summary['ground_truth'] = truth.names(g)
        summary['matches_ground_truth'] = bool(metapaths) and metapaths[0] == truth
    write_json(out / "metrics.json", summary)
    write_run_manifest(out, 'learn', _resolved(args), args.seed, {'graph': args.graph or args.fixture})

    if not metapaths:
        print("No relation passed the scoring threshold; no meta-path learned")
        return 0
    for mp, m in zip(metapaths, metrics):
        print(f"{mp.describe(g)}\tval F1 {m['val_f1']:.3f}\ttest F1 {m['test_f1']:.3f}")
    if truth is not None:
        print(f"ground truth {truth.describe(g)}: {'recovered' if summary['matches_ground_truth'] else 'not recovered'}")
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    g, labels, truth = _load_inputs(args)
    if args.metapath:
        mps = [_metapath_arg(g, text, config.L_MAX) for text in args.metapath]
    elif truth is not None:
        mps = [truth]
    else:
        raise UsageError("Give --metapath (or a graph directory with a ground truth)")
    model, metrics = train(g, mps, labels, _train_config(args))
    save_checkpoint(model, args.output / "model.ckpt", g)
    write_json(args.output / "metrics.json", {'metapaths': [mp.names(g) for mp in mps], **metrics.to_dict()})
    write_run_manifest(args.output, 'train', _resolved(args), args.seed, {'graph': args.graph or args.fixture})
    print(f"{', '.join(mp.describe(g) for mp in mps)}\tval F1 {metrics.val_f1:.3f}\ttest F1 {metrics.test_f1:.3f}")
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    g, labels, _ = load_graph(args.graph)
    if not labels:
        raise DataError(f"{args.graph} has no labels")
    model = load_checkpoint(args.model)
    targets = sorted(labels)
    model.check_compatible(g, model.metapaths)

    report = faithfulness_sweep(model, g, labels, args.fractions, args.seed)
    write_json(args.output / "faithfulness.json", report.to_dict())
    write_csv(args.output / "faithfulness.csv", report.csv_rows(), ['fraction', 'f1', 'necessity'])

    sufficiency = sufficiency_check(model, g, targets, num_perturbations=args.sufficiency_perturbations,
                                    seed=args.seed)
    payload = sufficiency.to_dict()
    payload['self_test'] = inside_edit_self_test(model, g, targets, seed=args.seed)
    write_json(args.output / "sufficiency.json", payload)
    write_run_manifest(args.output, 'evaluate', _resolved(args), args.seed,
                       {'graph': args.graph, 'model': args.model})

    print(f"baseline F1 {report.baseline_f1:.3f}")
    for row in report.csv_rows():
        print(f"fraction {row['fraction']:.2f}\tF1 {row['f1']:.3f}\tnecessity {row['necessity']:.4f}")
    print(f"sufficiency: {sufficiency.verdict} ({sufficiency.perturbations} edits)")
    return 0 if sufficiency.passed else 2


def cmd_oracle(args: argparse.Namespace) -> int:
    g, _, _ = load_graph(args.graph)
    mp = _metapath_arg(g, args.metapath, config.L_MAX)
    g.check_node(args.node)
    sub = induced_subgraph(g, [args.node], mp)
    result = {
        'node': args.node,
        'metapath': mp.names(g),
        'occurrences': count_occurrences(g, args.node, mp),
        'induced_nodes': int(len(sub.nodes())),
        'induced_edges': sub.num_edges,
    }
    print(json.dumps(result, sort_keys=True))
    return 0


# ---------------------------------------------------------------------- parser


def _common(parser: argparse.ArgumentParser, output: bool = True):
    parser.add_argument('--seed', type=int, default=config.DEFAULT_SEED, help="Master seed (env MPSGNN_SEED)")
    parser.add_argument('--threads', type=int, default=config.NUM_THREADS, help="torch thread count")
    parser.add_argument('--quiet', action='store_true', help="Suppress progress lines on stderr")
    parser.add_argument('--config', type=Path, default=None, help="JSON file with option defaults")
    if output:
        parser.add_argument('-o', '--output', type=Path, default=config.OUTPUT_DIR, help="Output directory")


def _training(parser: argparse.ArgumentParser):
    parser.add_argument('--epochs', type=int, default=config.MAX_EPOCHS)
    parser.add_argument('--patience', type=int, default=config.PATIENCE)
    parser.add_argument('--embedding-dim', type=int, default=config.EMBEDDING_DIM)
    parser.add_argument('--activation', choices=['logistic', 'relu'], default=config.ACTIVATION)
    parser.add_argument('--no-skip', action='store_true', help="Disable the skip connection to the raw features")


def _inputs(parser: argparse.ArgumentParser):
    parser.add_argument('graph', type=Path, nargs='?', default=None, help="Graph directory")
    parser.add_argument('--fixture', choices=LEARN_FIXTURES, default=None, help="Use a built-in graph instead")


def build_parser() -> CliParser:
    parser = CliParser(prog='mpsgnn', description="Meta-path search and MPS-GNN toolkit")
    sub = parser.add_subparsers(dest='command', parser_class=CliParser)
    sub.required = True

    p = sub.add_parser('generate', help="Generate a synthetic scenario")
    _common(p)
    p.add_argument('--preset', choices=sorted(PRESETS), default=None)
    p.add_argument('--relations', type=int, default=None, help="Number of relations")
    p.add_argument('--count', type=int, default=None, help="Occurrence threshold c")
    p.add_argument('--length', type=int, default=None, help="Ground-truth meta-path length")
    p.add_argument('--targets', type=int, default=config.SYNTHETIC_TARGETS)
    p.add_argument('--positive-fraction', type=float, default=config.POSITIVE_FRACTION)
    p.add_argument('--feature-constrained', action='store_true')
    p.set_defaults(handler=cmd_generate)

    p = sub.add_parser('ingest', help="Convert a CSV database into a graph directory")
    _common(p)
    p.add_argument('manifest', type=Path, help="Schema manifest (JSON)")
    p.add_argument('--data', type=Path, default=None, help="Directory of the CSV files (default: manifest's)")
    p.add_argument('--group', action='append', default=None, metavar='TABLE:COLUMN',
                   help="Merge rows sharing a categorical value (repeatable)")
    p.set_defaults(handler=cmd_ingest)

    p = sub.add_parser('learn', help="Learn meta-paths and train one model per path")
    _common(p)
    _inputs(p)
    _training(p)
    p.add_argument('--beam', type=int, default=config.BEAM_SIZE)
    p.add_argument('--lmax', type=int, default=config.L_MAX)
    p.add_argument('--eta', type=float, default=config.ETA)
    p.add_argument('--aggregation', choices=['sum', 'max'], default='sum')
    p.add_argument('--scoring-steps', type=int, default=config.SCORING_STEPS)
    p.add_argument('--search-epochs', type=int, default=config.SEARCH_EPOCHS)
    p.add_argument('--greedy-f1', action='store_true', help="Compare against the greedy-by-F1 construction")
    p.set_defaults(handler=cmd_learn)

    p = sub.add_parser('train', help="Train an MPS-GNN on given meta-paths")
    _common(p)
    _inputs(p)
    _training(p)
    p.add_argument('--metapath', action='append', default=None, metavar='R1,R2,...',
                   help="Relation names of one meta-path (repeatable, one tower each)")
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser('evaluate', help="Faithfulness of a trained model's meta-paths")
    _common(p)
    p.add_argument('graph', type=Path, help="Graph directory")
    p.add_argument('--model', type=Path, required=True, help="Checkpoint written by learn or train")
    p.add_argument('--fractions', type=_fractions_arg, default=list(config.REMOVAL_FRACTIONS))
    p.add_argument('--sufficiency-perturbations', type=int, default=config.SUFFICIENCY_PERTURBATIONS)
    p.set_defaults(handler=cmd_evaluate)

    p = sub.add_parser('oracle', help="Count meta-path occurrences from one node")
    _common(p, output=False)
    p.add_argument('graph', type=Path, help="Graph directory")
    p.add_argument('--node', type=int, required=True)
    p.add_argument('--metapath', required=True, metavar='R1,R2,...')
    p.set_defaults(handler=cmd_oracle)
    return parser


def _config_defaults(argv: Sequence[str]) -> Dict[str, Any]:
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument('--config', type=Path, default=None)
    known, _ = pre.parse_known_args(argv)
    if known.config is None:
        return {}
    if not known.config.exists():
        raise DataError(f"Config file {known.config} does not exist")
    try:
        payload = read_json(known.config)
    except json.JSONDecodeError as e:
        raise DataError(f"Config file {known.config} is not valid JSON: {e}")
    if not isinstance(payload, dict):
        raise DataError(f"Config file {known.config} must hold a JSON object")
    return {key.replace('-', '_'): value for key, value in payload.items()}


def parse_args(argv: Sequence[str]) -> argparse.Namespace:
    parser = build_parser()
    defaults = _config_defaults(argv)
    if defaults:
        subparsers = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
        for name, subparser in subparsers.choices.items():
            dests = {action.dest for action in subparser._actions}
            subparser.set_defaults(**{k: v for k, v in defaults.items() if k in dests})
        known = set().union(*({a.dest for a in s._actions} for s in subparsers.choices.values()))
        unknown = sorted(set(defaults) - known)
        if unknown:
            raise UsageError(f"Unknown option(s) in config file: {', '.join(unknown)}")
    args = parser.parse_args(argv)
    for key in ('output', 'graph', 'model', 'manifest', 'data'):
        if isinstance(getattr(args, key, None), str):
            setattr(args, key, Path(getattr(args, key)))
    return args


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    verbose = config.VERBOSE
    try:
        args = parse_args(argv)
        if args.quiet:
            config.VERBOSE = False
        if args.threads < 1:
            raise UsageError("--threads must be at least 1")
        torch.set_num_threads(args.threads)
        torch.use_deterministic_algorithms(True)
        log("CLI", f"{args.command} (seed {args.seed})")
        return args.handler(args)
    except MpsGnnError as e:
        print(f"Error: {e}", file=sys.stderr)
        return e.exit_code
    finally:
        config.VERBOSE = verbose


if __name__ == "__main__":
    sys.exit(main())
