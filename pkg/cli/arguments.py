"""
Command-line parser and the mapping from flags to config overrides.
"""

import argparse

from logic.config import COMMANDS

COMMAND_HELP = {
    "train": "train an encoder on a dataset and write a checkpoint and loss CSV",
    "encode": "write embeddings of a dataset with a trained checkpoint",
    "classify": "linear-SVM accuracy of embeddings (train on --data, score on --test)",
    "cluster": "k-means on embeddings, scored by RI and NMI",
    "detect": "window-level anomaly detection with an isolation forest",
    "gradcheck": "compare analytic gradients with finite differences",
    "sweep-tau": "train one model per temperature and score each on --test",
    "explain": "best-matching window of every shapelet for every sample",
    "synth": "write the synthetic motif dataset and anomaly streams",
}

# flag dest -> path in the nested config
OVERRIDES = {
    "data": ("paths", "dataset"),
    "test": ("paths", "test"),
    "checkpoint": ("paths", "checkpoint"),
    "out": ("paths", "output"),
    "dims": ("data", "dims"),
    "labeled": ("data", "labeled"),
    "seed": ("train", "seed"),
    "lr": ("train", "lr"),
    "batch_size": ("train", "batch_size"),
    "epochs": ("train", "epochs"),
    "momentum": ("train", "momentum"),
    "init_from_data": ("train", "init_from_data"),
    "scales": ("train", "scale_range"),
    "tau": ("train", "loss", "tau"),
    "lam": ("train", "loss", "lam"),
    "lambda_s": ("train", "loss", "lambda_s"),
    "alpha": ("train", "loss", "alpha"),
    "symmetric": ("train", "loss", "symmetric"),
    "no_coarse": ("train", "loss", "disable_coarse"),
    "no_fine": ("train", "loss", "disable_fine"),
    "no_align": ("train", "loss", "disable_alignment"),
    "repr_dim": ("train", "encoder", "repr_dim"),
    "n_scales": ("train", "encoder", "n_scales"),
    "l_min": ("train", "encoder", "l_min_frac"),
    "l_max": ("train", "encoder", "l_max_frac"),
    "k": ("evaluate", "k"),
    "window": ("evaluate", "window"),
    "stride": ("evaluate", "stride"),
    "score_stride": ("evaluate", "score_stride"),
    "n_trees": ("evaluate", "n_trees"),
    "psi": ("evaluate", "psi"),
    "svm_c": ("evaluate", "svm_c"),
    "svm_iter": ("evaluate", "svm_iter"),
    "nmi_average": ("evaluate", "nmi_average"),
    "raw_baseline": ("evaluate", "raw_baseline"),
    "per_scale": ("evaluate", "per_scale"),
    "report": ("sweep", "report"),
    "instances": ("gradcheck", "instances"),
}

# flags whose presence sets the opposite boolean
NEGATED = {
    "no_normalize": ("data", "normalize"),
    "no_align_batchnorm": ("train", "loss", "align_batchnorm"),
    "no_early_stop": ("train", "early_stop"),
}


def _comma_list(text):
    return [item.strip() for item in text.split(",") if item.strip()]


def _float_list(text):
    return [float(item) for item in _comma_list(text)]


def _common_parser():
    parent = argparse.ArgumentParser(add_help=False)
    io = parent.add_argument_group("input and output")
    io.add_argument("--config", help="JSON or YAML run configuration")
    io.add_argument("--data", help="dataset (.ts, delimited text, or stream .csv for detect)")
    io.add_argument("--test", help="held-out dataset or test stream")
    io.add_argument("--checkpoint", help="checkpoint to read (or to write for train)")
    io.add_argument("--out", help="output directory")
    io.add_argument("--seed", type=int)
    io.add_argument("--verbose", action="store_true", help="show per-step details on the console")
    io.add_argument("--log-file", help="write a DEBUG log to this file")

    data = parent.add_argument_group("data")
    data.add_argument("--dims", type=int, help="dimensions per row of a delimited file")
    data.add_argument("--labeled", action="store_true", default=None,
                      help="delimited rows end with an integer label")
    data.add_argument("--no-normalize", action="store_true", default=None)

    hyper = parent.add_argument_group("training")
    hyper.add_argument("--lr", type=float)
    hyper.add_argument("--batch-size", type=int)
    hyper.add_argument("--epochs", type=int)
    hyper.add_argument("--momentum", type=float)
    hyper.add_argument("--no-early-stop", action="store_true", default=None)
    hyper.add_argument("--tau", type=float)
    hyper.add_argument("--lambda", dest="lam", type=float)
    hyper.add_argument("--lambda-s", type=float)
    hyper.add_argument("--alpha", type=float)
    hyper.add_argument("--repr-dim", type=int)
    hyper.add_argument("--n-scales", type=int)
    hyper.add_argument("--l-min", type=float, help="shortest shapelet as a fraction of T")
    hyper.add_argument("--l-max", type=float, help="longest shapelet as a fraction of T")
    hyper.add_argument("--init-from-data", action="store_true", default=None)

    ablation = parent.add_argument_group("ablations")
    ablation.add_argument("--measures", help="euclidean, cosine, cross, all, or a comma list")
    ablation.add_argument("--scales", choices=("short", "long", "all"))
    ablation.add_argument("--no-coarse", action="store_true", default=None)
    ablation.add_argument("--no-fine", action="store_true", default=None)
    ablation.add_argument("--no-align", action="store_true", default=None)
    ablation.add_argument("--disable-aug", action="append", metavar="NAME",
                          help="drop an augmentation (repeatable)")
    ablation.add_argument("--symmetric", action="store_true", default=None)
    ablation.add_argument("--no-align-batchnorm", action="store_true", default=None)

    evaluate = parent.add_argument_group("evaluation")
    evaluate.add_argument("--k", type=int, help="clusters (default: number of classes)")
    evaluate.add_argument("--window", type=int, help="window length for detect")
    evaluate.add_argument("--stride", type=int, help="training window stride for detect (default: window)")
    evaluate.add_argument("--score-stride", type=int, help="scored window stride for detect (default: 1)")
    evaluate.add_argument("--n-trees", type=int)
    evaluate.add_argument("--psi", type=int)
    evaluate.add_argument("--svm-c", type=float)
    evaluate.add_argument("--svm-iter", type=int)
    evaluate.add_argument("--nmi-average", choices=("geometric", "arithmetic"))
    evaluate.add_argument("--raw-baseline", action="store_true", default=None)
    evaluate.add_argument("--per-scale", action="store_true", default=None)
    evaluate.add_argument("--taus", type=_float_list, help="comma list for sweep-tau")
    evaluate.add_argument("--report", help="sweep-tau table (.csv or .xlsx)")
    evaluate.add_argument("--instances", type=int, help="gradcheck instances per component")
    evaluate.add_argument("--components", type=_comma_list, help="gradcheck components")
    evaluate.add_argument("--inject-fault", help=argparse.SUPPRESS)
    return parent


def build_parser():
    parser = argparse.ArgumentParser(
        prog="csl", description="Contrastive shapelet learning for multivariate time series")
    common = _common_parser()
    sub = parser.add_subparsers(dest="command", metavar="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=COMMAND_HELP[name], description=COMMAND_HELP[name])
    return parser


def _assign(target, path, value):
    for key in path[:-1]:
        target = target.setdefault(key, {})
    target[path[-1]] = value


def overrides_from_args(args):
    """Nested override dict holding only the flags given on the command line"""
    overrides = {}
    for dest, path in OVERRIDES.items():
        value = getattr(args, dest, None)
        if value is not None:
            _assign(overrides, path, value)
    for dest, path in NEGATED.items():
        if getattr(args, dest, None):
            _assign(overrides, path, False)
    if getattr(args, "measures", None):
        measures = "all" if args.measures == "all" else _comma_list(args.measures)
        _assign(overrides, ("train", "encoder", "measures"), measures)
    if getattr(args, "taus", None):
        _assign(overrides, ("sweep", "taus"), args.taus)
    if getattr(args, "components", None):
        _assign(overrides, ("gradcheck", "components"), args.components)
    return overrides
