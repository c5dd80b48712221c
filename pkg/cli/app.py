"""
Command-line application: one method per command, each writing its outputs
under the run's output directory.
"""

import copy
import io
import json
from pathlib import Path

import numpy as np
import pandas as pd

from cli.arguments import build_parser, overrides_from_args
from logic.checkpoint import CheckpointManager
from logic.config import ConfigManager, config_hash
from logic.data import (Dataset, Series, equalize, load_dataset, load_stream_csv, serialize_delimited,
                        serialize_ts, windows_dataset, write_stream_csv, znormalize)
from logic.downstream import (accuracy, cluster_accuracy, f1_best_threshold, iforest_fit, iforest_score,
                              kmeans, nmi, rand_index, svm_fit, svm_predict)
from logic.encoder import embedding_blocks
from logic.errors import ConfigError, CSLError, LabelError
from logic.file_ops import FileOperations
from logic.gradcheck import run_gradcheck
from logic.synthetic import make_anomaly_streams, make_motif_split
from logic.train import LOSS_COLUMNS, ShapeletTrainer, TrainConfig
from utils.logging import STDERR, LoggingMixin

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_INPUT_ERROR = 2

CHECKPOINT_NAME = "checkpoint.json"
LOSS_HISTORY_NAME = "loss_history.csv"


def _frame_text(frame, header=True):
    buffer = io.StringIO()
    frame.to_csv(buffer, index=False, header=header, lineterminator="\n")
    return buffer.getvalue()


class ShapeletLearnerApp(LoggingMixin):
    """Runs one command per process against a resolved RunConfig"""

    def __init__(self, console=STDERR):
        super().__init__(console)
        self.file_ops = FileOperations(self)
        self.config_manager = ConfigManager(self)
        self.checkpoints = CheckpointManager(self)
        self.inject_fault = None

    # ----------------------------------------------------------- entry point
    def main(self, argv=None):
        """Parse argv, build the RunConfig and run the command; returns the exit code"""
        return self.run_args(build_parser().parse_args(argv))

    def run_args(self, args):
        if args.verbose:
            self.set_verbose_logging(True)
        self.inject_fault = args.inject_fault
        try:
            run_config = self.config_manager.build(args.command, args.config, overrides_from_args(args))
            if args.disable_aug:
                run_config.train.augment = run_config.train.augment.without(*args.disable_aug)
        except CSLError as e:
            self.log_message(f"❌ Configuration error: {str(e)}")
            return EXIT_INPUT_ERROR
        return self.run(run_config)

    def run(self, run_config):
        handler = getattr(self, "cmd_" + run_config.command.replace("-", "_"))
        try:
            code = handler(run_config)
            self.record_operation(run_config.command, "Success" if code == EXIT_OK else "Failed",
                                  run_config.paths.output)
            return code
        except (CSLError, OSError) as e:
            self.log_message(f"❌ {run_config.command} error: {str(e)}")
            self.record_operation(run_config.command, "Error", str(e))
            return EXIT_INPUT_ERROR
        except Exception as e:
            self.logger.exception("Unexpected error in %s", run_config.command)
            self.log_message(f"❌ Unexpected {run_config.command} error: {str(e)}")
            self.record_operation(run_config.command, "Error", str(e))
            return EXIT_INPUT_ERROR

    # --------------------------------------------------------------- helpers
    def _out(self, run_config, name=None):
        out_dir = self.file_ops.ensure_dir(run_config.paths.output)
        return out_dir if name is None else out_dir / name

    def _load(self, run_config, path, role="dataset"):
        path = self.file_ops.require_file(path)
        dataset = load_dataset(path, run_config.data.dims, run_config.data.labeled)
        if run_config.data.normalize:
            dataset = znormalize(dataset)
        self.log_message(f"📁 Loaded {role} {path.name}: {len(dataset)} series, D={dataset.n_dims}, "
                         f"T={min(dataset.lengths)}..{max(dataset.lengths)}")
        return dataset

    def _load_model(self, run_config):
        if run_config.paths.checkpoint is None:
            raise ConfigError("this command needs --checkpoint")
        model, _ = self.checkpoints.load(run_config.paths.checkpoint)
        return model

    def _write_csv(self, run_config, name, frame, header=True):
        path = self._out(run_config, name)
        self.file_ops.atomic_write_text(path, _frame_text(frame, header))
        return path

    def _write_metrics(self, run_config, task, metrics, extra=None):
        """{task}_metrics.json with one record per metric, stamped with the config hash"""
        digest = config_hash(run_config)
        payload = {
            "task": task,
            "config_hash": digest,
            "results": [{"task": task, "metric": name, "value": float(value), "config_hash": digest}
                        for name, value in metrics.items()],
            "operations": [list(entry[1:]) for entry in self.operation_history],
        }
        if extra:
            payload.update(extra)
        path = self._out(run_config, f"{task}_metrics.json")
        self.file_ops.atomic_write_text(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")
        for name, value in metrics.items():
            self.log_message(f"✅ {task} {name} = {float(value):.6f}")
        return path

    @staticmethod
    def _require_labels(dataset, role):
        if dataset.labels is None:
            raise LabelError(f"the {role} set has no class labels")
        return dataset.labels

    def _fit(self, run_config, dataset, train_config=None):
        train_config = train_config or run_config.train
        result = ShapeletTrainer(self, train_config).fit(dataset)
        self.record_operation("Train", "Success", f"{result.epochs_run} epochs")
        return result

    # -------------------------------------------------------------- commands
    def cmd_train(self, run_config):
        dataset = self._load(run_config, run_config.paths.dataset)
        result = self._fit(run_config, dataset)
        checkpoint = run_config.paths.checkpoint or self._out(run_config, CHECKPOINT_NAME)
        self.checkpoints.save(checkpoint, result.model, run_config.train)
        self._write_csv(run_config, LOSS_HISTORY_NAME, pd.DataFrame(result.history, columns=LOSS_COLUMNS))
        self.config_manager.save_config(run_config, run_config.paths.output)
        return EXIT_OK

    def cmd_encode(self, run_config):
        model = self._load_model(run_config)
        dataset = self._load(run_config, run_config.paths.dataset)
        z = model.encode(dataset)
        embedded = Dataset(samples=[Series(row, id=s.id) for row, s in zip(z, dataset.samples)],
                           labels=dataset.labels)
        path = self._out(run_config, "embeddings.csv")
        self.file_ops.atomic_write_text(path, serialize_delimited(embedded))
        self.config_manager.save_config(run_config, run_config.paths.output)
        return EXIT_OK

    def cmd_classify(self, run_config):
        if run_config.paths.test is None:
            raise ConfigError("classify needs --test")
        options = run_config.evaluate
        model = self._load_model(run_config)
        train_set = self._load(run_config, run_config.paths.dataset)
        test_set = self._load(run_config, run_config.paths.test, role="test set")
        y_train = self._require_labels(train_set, "training")
        y_test = self._require_labels(test_set, "test")
        z_train, z_test = model.encode(train_set), model.encode(test_set)

        def linear_accuracy(a, b):
            svm = svm_fit(a, y_train, C=options.svm_c, n_iter=options.svm_iter)
            return accuracy(y_test, svm_predict(svm, b))

        metrics = {"accuracy": linear_accuracy(z_train, z_test)}
        if options.raw_baseline:
            t = min(min(train_set.lengths), min(test_set.lengths))
            metrics["raw_accuracy"] = linear_accuracy(
                equalize(train_set).to_array()[:, :, :t].reshape(len(train_set), -1),
                equalize(test_set).to_array()[:, :, :t].reshape(len(test_set), -1))
        if options.per_scale:
            n_scales = model.encoder.n_scales
            for r, (a, b) in enumerate(zip(embedding_blocks(z_train, n_scales),
                                           embedding_blocks(z_test, n_scales))):
                metrics[f"accuracy_scale_{r}"] = linear_accuracy(a, b)
        self._write_metrics(run_config, "classify", metrics)
        self.config_manager.save_config(run_config, run_config.paths.output)
        return EXIT_OK

    def cmd_cluster(self, run_config):
        options = run_config.evaluate
        model = self._load_model(run_config)
        dataset = self._load(run_config, run_config.paths.test or run_config.paths.dataset)
        labels = self._require_labels(dataset, "clustering")
        k = options.k or dataset.n_classes
        result = kmeans(model.encode(dataset), k, seed=run_config.train.seed, n_init=options.kmeans_restarts)
        metrics = {
            "rand_index": rand_index(labels, result.labels),
            "nmi": nmi(labels, result.labels, average_method=options.nmi_average),
            "cluster_accuracy": cluster_accuracy(labels, result.labels),
        }
        self._write_csv(run_config, "clusters.csv", pd.DataFrame({
            "sample": [s.id for s in dataset.samples], "label": labels, "cluster": result.labels}))
        self._write_metrics(run_config, "cluster", metrics, {"k": int(k), "inertia": float(result.inertia)})
        self.config_manager.save_config(run_config, run_config.paths.output)
        return EXIT_OK

    def _load_stream(self, path, role):
        series, flags = load_stream_csv(self.file_ops.require_file(path))
        self.log_message(f"📁 Loaded {role} {Path(path).name}: D={series.n_dims}, T={series.length}")
        return series, flags

    def cmd_detect(self, run_config):
        options = run_config.evaluate
        w = options.window
        stride = options.stride or w
        score_stride = options.score_stride
        train_stream, train_flags = self._load_stream(run_config.paths.dataset, "training stream")
        test_stream, flags = train_stream, train_flags
        if run_config.paths.test is not None:
            test_stream, flags = self._load_stream(run_config.paths.test, "test stream")
        if flags is None:
            raise LabelError("the scored stream has no label column")

        if run_config.data.normalize:
            mean = train_stream.values.mean(axis=1, keepdims=True)
            std = train_stream.values.std(axis=1, keepdims=True)
            std = np.where(std < 1e-8, 1.0, std)
            train_stream = Series((train_stream.values - mean) / std, id=train_stream.id)
            test_stream = Series((test_stream.values - mean) / std, id=test_stream.id)

        train_windows, _ = windows_dataset(train_stream, None, w, stride)
        test_windows, window_set = windows_dataset(test_stream, flags, w, score_stride)
        if run_config.paths.checkpoint is not None:
            model = self._load_model(run_config)
        else:
            model = self._fit(run_config, train_windows).model
            self.checkpoints.save(self._out(run_config, CHECKPOINT_NAME), model, run_config.train)

        forest = iforest_fit(model.encode(train_windows), n_trees=options.n_trees, psi=options.psi,
                             seed=run_config.train.seed)
        scores = iforest_score(forest, model.encode(test_windows))
        f1, threshold = f1_best_threshold(scores, window_set.window_labels)
        self._write_csv(run_config, "window_scores.csv", pd.DataFrame({
            "start": window_set.starts, "label": window_set.window_labels, "score": scores}))
        self._write_metrics(run_config, "detect", {"f1": f1, "threshold": threshold}, {
            "window": w, "stride": stride, "score_stride": score_stride, "n_windows": len(window_set),
            "anomalous_windows": int(window_set.window_labels.sum())})
        self.config_manager.save_config(run_config, run_config.paths.output)
        return EXIT_OK

    def cmd_gradcheck(self, run_config):
        options = run_config.gradcheck
        report = run_gradcheck(seed=run_config.train.seed, instances=options.instances,
                               tolerance=options.tolerance, components=options.components,
                               inject_fault=self.inject_fault, app=self)
        path = self._out(run_config, "gradcheck.json")
        self.file_ops.atomic_write_text(path, json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
        if not report.passed:
            names = ", ".join(report.failures)
            self.log_message(f"❌ Gradient check failed: {names}")
            return EXIT_CHECK_FAILED
        self.log_message(f"✅ Gradient check passed for {len(report.results)} components")
        return EXIT_OK

    def cmd_sweep_tau(self, run_config):
        if run_config.paths.test is None:
            raise ConfigError("sweep-tau needs --test")
        options = run_config.evaluate
        train_set = self._load(run_config, run_config.paths.dataset)
        test_set = self._load(run_config, run_config.paths.test, role="test set")
        y_train = self._require_labels(train_set, "training")
        y_test = self._require_labels(test_set, "test")

        rows = []
        for tau in run_config.sweep.taus:
            train_config = TrainConfig.from_dict(copy.deepcopy(run_config.train.to_dict()))
            train_config.loss.tau = float(tau)
            self.log_message(f"🚀 Sweep: tau={tau}")
            result = self._fit(run_config, train_set, train_config)
            self.checkpoints.save(self._out(run_config, f"tau_{tau:g}") / CHECKPOINT_NAME,
                                  result.model, train_config)
            z_train, z_test = result.model.encode(train_set), result.model.encode(test_set)
            svm = svm_fit(z_train, y_train, C=options.svm_c, n_iter=options.svm_iter)
            clusters = kmeans(z_test, test_set.n_classes, seed=run_config.train.seed,
                              n_init=options.kmeans_restarts)
            rows.append({
                "tau": float(tau),
                "accuracy": accuracy(y_test, svm_predict(svm, z_test)),
                "rand_index": rand_index(y_test, clusters.labels),
                "nmi": nmi(y_test, clusters.labels, average_method=options.nmi_average),
                "final_loss": result.epoch_losses[-1],
                "epochs": result.epochs_run,
            })

        table = pd.DataFrame(rows)
        report = self._out(run_config, run_config.sweep.report)
        if report.suffix.lower() == ".xlsx":
            table.to_excel(report, index=False, sheet_name="tau_sweep", engine="openpyxl")
            self.log_message(f"💾 Wrote {report}")
        else:
            self.file_ops.atomic_write_text(report, _frame_text(table))
        best = table.loc[table["accuracy"].idxmax()]
        self._write_metrics(run_config, "sweep_tau", {"best_tau": best["tau"], "best_accuracy": best["accuracy"]})
        self.config_manager.save_config(run_config, run_config.paths.output)
        return EXIT_OK

    def cmd_explain(self, run_config):
        model = self._load_model(run_config)
        dataset = equalize(self._load(run_config, run_config.paths.dataset))
        data = dataset.to_array()
        transformer = model.transformer()
        records = []
        for start in range(0, len(data), 64):
            for record in transformer.best_match_positions(data[start:start + 64]):
                record["sample"] += start
                records.append(record)
        frame = pd.DataFrame(records)
        frame.insert(1, "sample_id", [dataset.samples[i].id for i in frame["sample"]])
        if dataset.labels is not None:
            frame.insert(2, "label", dataset.labels[frame["sample"].to_numpy()])
        self._write_csv(run_config, "explain.csv", frame)
        return EXIT_OK

    def cmd_synth(self, run_config):
        seed = run_config.train.seed
        train_set, test_set = make_motif_split(seed=seed)
        self.file_ops.atomic_write_text(self._out(run_config, "motifs_TRAIN.ts"), serialize_ts(train_set, "motifs"))
        self.file_ops.atomic_write_text(self._out(run_config, "motifs_TEST.ts"), serialize_ts(test_set, "motifs"))
        train_stream, train_flags, test_stream, test_flags = make_anomaly_streams(seed=seed)
        write_stream_csv(self._out(run_config, "stream_train.csv"), train_stream, train_flags)
        write_stream_csv(self._out(run_config, "stream_test.csv"), test_stream, test_flags)
        self.log_message(f"✅ Synthetic data written to {run_config.paths.output}")
        return EXIT_OK
