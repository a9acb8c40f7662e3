import hashlib
import json

import numpy as np
import pytest

from deepform.commands.pipeline import (
    BenchCommand, EmbedCommand, EvaluateCommand, FormationMethod, FormCommand, GradCheckCommand, IngestCommand,
    RecommendCommand, SweepCommand, SynthCommand, TrainCommand
)
from deepform.commands.pipeline.ingest_command import stats_path_for
from deepform.commands.pipeline.evaluate_command import text_path_for
from deepform.commands.pipeline.train_command import log_path_for
from deepform.errors import ShapeMismatchError, UsageError
from deepform.evaluation.pipeline import EvaluationMode
from deepform.grouprec.aggregation import RANKING_COLUMNS, AggregationStrategy
from deepform.models.events.event_types import FormationEvents
from deepform.models.state.config import TrainConfig
from deepform.models.state.run_context import RunContext
from deepform.services.data_managers.report_manager import MANIFEST_NAME
from deepform.training.trainer import TrainLog


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """Synthetic data, a short training run and its embedding, shared by the tests below."""
    root = tmp_path_factory.mktemp("pipeline")
    context = RunContext()
    run = context.command_executor.execute_command
    synth = SynthCommand(context, root / "data", n_users=30, n_items=30, noise=0.0, seed=0)
    run(synth)
    config = TrainConfig(epochs=2, d=4, h1=8, h2=6, k_max=4, lr=1e-3, n_neg=2, graph_top_k=10)
    run(TrainCommand(context, synth.dataset_path, config, root / "model.dfck"))
    run(EmbedCommand(context, root / "model.dfck", synth.dataset_path, root / "z.dfem"))
    return {"root": root, "dataset": synth.dataset_path, "labels": synth.labels_path, "config": config}


def execute(command):
    return command.context.command_executor.execute_command(command)


class TestDataCommands:

    def test_synth_writes_log_labels_and_cache(self, workspace, run_context):
        data = workspace["root"] / "data"
        lines = (data / "interactions.tsv").read_text(encoding="utf-8").splitlines()
        assert len(lines[0].split("\t")) == 4
        labels = run_context.report_manager.read_table(workspace["labels"], dtype={"user_id": str})
        assert list(labels.columns) == ["user_id", "level_1"]
        dataset = run_context.dataset_manager.load_dataset(workspace["dataset"])
        assert dataset.n_users == 30
        assert dataset.normalized

    def test_ingest_the_synthetic_log(self, workspace, run_context, tmp_path):
        out = tmp_path / "ingested.dfrm"
        stats = execute(IngestCommand(run_context, workspace["root"] / "data" / "interactions.tsv", out,
                                      min_interactions=5))
        assert stats.n_users == 30
        assert stats.n_train + stats.n_test == stats.n_interactions
        assert json.loads(stats_path_for(out).read_text(encoding="utf-8"))["users"] == 30

        manifest = run_context.report_manager.load_manifest(tmp_path / MANIFEST_NAME)
        assert manifest.command == "ingest"
        assert manifest.outputs == [str(out), str(stats_path_for(out))]
        assert manifest.extra["min_interactions"] == 5


class TestModelCommands:

    def test_training_outputs(self, workspace, run_context):
        root = workspace["root"]
        checkpoint = run_context.checkpoint_manager.load_checkpoint(root / "model.dfck")
        assert checkpoint.epoch == 2
        assert checkpoint.meta["config_hash"] == workspace["config"].config_hash()
        assert TrainLog.read(log_path_for(root / "model.dfck"))["epoch"].tolist() == [1, 2]

    def test_resume_extends_log(self, workspace, run_context, tmp_path):
        config = workspace["config"].with_overrides({"epochs": 3})
        result = execute(TrainCommand(run_context, workspace["dataset"], config, tmp_path / "more.dfck",
                                      resume=workspace["root"] / "model.dfck",
                                      log_path=tmp_path / "log.csv"))
        assert result.checkpoint.epoch == 3
        assert TrainLog.read(tmp_path / "log.csv")["epoch"].tolist() == [3]

    def test_embedding_shape(self, workspace, run_context):
        z_final = run_context.embedding_manager.load_embeddings(workspace["root"] / "z.dfem")
        assert z_final.shape == (30, 4)
        assert z_final.dtype == np.float32

    def test_embed_rejects_foreign_dataset(self, workspace, run_context, tmp_path):
        other = SynthCommand(run_context, tmp_path / "other", n_users=12, n_items=30, seed=1)
        execute(other)
        with pytest.raises(ShapeMismatchError):
            execute(EmbedCommand(run_context, workspace["root"] / "model.dfck", other.dataset_path,
                                 tmp_path / "z.dfem"))
        assert not (tmp_path / "z.dfem").exists()

    def test_gradcheck_report(self, run_context, tmp_path):
        config = TrainConfig(d=6, h1=8, h2=7, n_neg=2)
        report = execute(GradCheckCommand(run_context, config, tmp_path / "grad.csv", n_coords=3,
                                          tolerance=1e-3))
        assert report.passed
        assert (tmp_path / "grad.csv").exists()


class TestGroupCommands:

    @pytest.fixture
    def groups_path(self, workspace, run_context, tmp_path):
        path = tmp_path / "groups.csv"
        execute(FormCommand(run_context, path, k=3, embeddings_path=workspace["root"] / "z.dfem",
                            dataset_path=workspace["dataset"]))
        return path

    def test_form_writes_user_ids(self, groups_path, run_context, workspace):
        frame = run_context.report_manager.read_table(groups_path, dtype={"user_id": str})
        dataset = run_context.dataset_manager.load_dataset(workspace["dataset"])
        assert frame["user_id"].tolist() == list(dataset.user_ids)
        assert set(frame["group_id"]) == {0, 1, 2}

    def test_form_publishes_event(self, workspace, run_context, tmp_path):
        events = []
        run_context.event_bus.subscribe(FormationEvents.FORMATION_COMPLETED, events.append)
        execute(FormCommand(run_context, tmp_path / "g.csv", k=4, embeddings_path=workspace["root"] / "z.dfem"))
        assert events[0]["k"] == 4
        frame = run_context.report_manager.read_table(tmp_path / "g.csv")
        assert frame["user_id"].tolist() == list(range(30))

    def test_form_leaves_embeddings_untouched(self, workspace, run_context, tmp_path):
        embeddings = workspace["root"] / "z.dfem"
        before = hashlib.sha256(embeddings.read_bytes()).hexdigest()
        execute(FormCommand(run_context, tmp_path / "g.csv", k=3, embeddings_path=embeddings,
                            max_group_size=12))
        assert hashlib.sha256(embeddings.read_bytes()).hexdigest() == before

    @pytest.mark.parametrize("method", [FormationMethod.KMEANS, FormationMethod.GMM, FormationMethod.SIMILARITY])
    def test_baseline_methods(self, workspace, run_context, tmp_path, method):
        assignment = execute(FormCommand(run_context, tmp_path / "g.csv", k=3, method=method,
                                         dataset_path=workspace["dataset"]))
        assert assignment.method == method.value
        manifest = run_context.report_manager.load_manifest(tmp_path / MANIFEST_NAME)
        assert manifest.extra["method"] == method.value

    def test_form_usage_errors(self, workspace, run_context, tmp_path):
        with pytest.raises(UsageError):
            execute(FormCommand(run_context, tmp_path / "g.csv", k=3))
        with pytest.raises(UsageError):
            execute(FormCommand(run_context, tmp_path / "g.csv", k=3, method=FormationMethod.KMEANS))
        with pytest.raises(UsageError):
            execute(FormCommand(run_context, tmp_path / "g.csv", k=31, embeddings_path=workspace["root"] / "z.dfem"))
        assert not (tmp_path / "g.csv").exists()

    def test_recommend(self, groups_path, workspace, run_context, tmp_path):
        out = tmp_path / "recs.csv"
        lists = execute(RecommendCommand(run_context, groups_path, workspace["dataset"], out,
                                         AggregationStrategy.BORDA, top_n=5))
        frame = run_context.report_manager.read_table(out)
        assert list(frame.columns) == RANKING_COLUMNS
        assert len(lists) == 3
        assert frame.groupby("group_id")["rank"].max().le(5).all()

    def test_evaluate(self, groups_path, workspace, run_context, tmp_path):
        out = tmp_path / "metrics.csv"
        report = execute(EvaluateCommand(run_context, groups_path, workspace["dataset"], out,
                                         AggregationStrategy.AVG, k_list=(5, 10),
                                         mode=EvaluationMode.SAMPLED, n_negatives=10, seed=1))
        assert run_context.report_manager.read_table(out)["k"].tolist() == [5, 10]
        assert "strategy avg" in text_path_for(out).read_text(encoding="utf-8")
        assert report.extra["preferences"] == "user_knn"
        assert report.users_evaluated + report.users_excluded == 30


class TestAnalysisCommands:

    def test_bench_with_plot(self, workspace, run_context, tmp_path):
        bench = execute(BenchCommand(run_context, workspace["root"] / "z.dfem", tmp_path / "bench.csv",
                                     k_list=[2, 4, 8], plot_path=tmp_path / "bench.png"))
        assert bench.frame["k"].tolist() == [2, 4, 8]
        assert (tmp_path / "bench.png").exists()
        manifest = run_context.report_manager.load_manifest(tmp_path / MANIFEST_NAME)
        assert "slope_seconds_per_k" in manifest.extra

    def test_sweep_skips_unreachable_k(self, workspace, run_context, tmp_path):
        frame = execute(SweepCommand(run_context, workspace["root"] / "z.dfem", workspace["dataset"],
                                     tmp_path / "sweep.csv", k_values=(2, 3, 64), k_list=(5,),
                                     labels_path=workspace["labels"], plot_path=tmp_path / "sweep.png"))
        assert frame["groups"].tolist() == [2, 3]
        assert {"ari", "nmi"} <= set(frame.columns)
        assert (tmp_path / "sweep.png").exists()
