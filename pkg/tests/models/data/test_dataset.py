import numpy as np
import pandas as pd

from deepform.models.data.dataset import InteractionRecord, records_frame, to_records
from deepform.models.data.manifest import RunManifest, collect_versions


class TestDataset:

    def test_sizes_and_stats(self, toy_dataset):
        stats = toy_dataset.stats
        assert (toy_dataset.n_users, toy_dataset.n_items) == (4, 5)
        assert stats.to_dict() == {'users': 4, 'items': 5, 'interactions': 8, 'train': 5, 'test': 3}

    def test_item_lookups(self, toy_dataset):
        np.testing.assert_array_equal(toy_dataset.train_items(2), [0, 1])
        np.testing.assert_array_equal(toy_dataset.test_items(1), [4])
        assert len(toy_dataset.test_items(2)) == 0
        np.testing.assert_array_equal(toy_dataset.users_with_test(), [0, 1, 3])

    def test_indices(self, toy_dataset):
        assert toy_dataset.user_index()["c"] == 2
        assert toy_dataset.item_index()["i4"] == 4

    def test_str(self, toy_dataset):
        assert str(toy_dataset) == "Dataset(users=4, items=5, train=5, test=3)"


class TestInteractionRecord:

    def test_records_round_trip(self):
        frame = pd.DataFrame({
            "user_id": ["u1", "u2"],
            "item_id": ["i1", "i1"],
            "rating": [4.0, 2.5],
            "timestamp": pd.array([10, None], dtype="Int64"),
        })
        records = to_records(frame)
        assert records[0] == InteractionRecord("u1", "i1", 4.0, 10)
        assert records[1].timestamp is None
        pd.testing.assert_frame_equal(records_frame(records), frame)


class TestRunManifest:

    def test_from_dict_defaults(self):
        manifest = RunManifest.from_dict({"command": "embed"})
        assert manifest.command == "embed"
        assert manifest.inputs == []
        assert manifest.config_hash is None

    def test_versions_include_python(self):
        versions = collect_versions()
        assert "python" in versions
        assert "scipy" in versions
