import numpy as np
import pytest

from figkit.io import (ManifestMismatchError, SchemaError, interior_to_grid,
                       manifest_hash, read_manifest, read_table,
                       read_trajectory, sibling_manifest,
                       verify_against_manifest)


class TestManifest:
    def test_round_trip_and_self_hash(self, convergence_run):
        items = read_manifest(convergence_run / "manifest.txt")
        assert items["study"] == "truncation"
        assert items["manifest_hash"] == manifest_hash(items)

    def test_hash_excludes_timestamp(self):
        items = {"a": "1", "b": "2"}
        h = manifest_hash(items)
        items["created"] = "whenever"
        assert manifest_hash(items) == h


class TestReadTable:
    def test_columns_slopes_and_hash(self, convergence_run):
        table = read_table(convergence_run / "truncation.csv")
        assert table.columns == ["s", "err_state", "err_T"]
        assert np.array_equal(table.column("s"), [2, 4, 8, 16])
        assert table.slopes == {"err_state": -1.6, "err_T": -1.7}
        assert len(table.manifest_hash) == 64

    def test_missing_hash_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("a,b\n1,2\n")
        with pytest.raises(SchemaError, match="manifest hash"):
            read_table(path)

    def test_empty_table_rejected(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("# manifest_hash=deadbeef\na,b\n")
        with pytest.raises(SchemaError, match="no data rows"):
            read_table(path)

    def test_ragged_rows_rejected(self, tmp_path):
        path = tmp_path / "ragged.csv"
        path.write_text("# manifest_hash=deadbeef\na,b\n1,2\n3\n")
        with pytest.raises(SchemaError, match="ragged"):
            read_table(path)

    def test_missing_column_named(self, convergence_run):
        table = read_table(convergence_run / "truncation.csv")
        with pytest.raises(SchemaError, match="err_S"):
            table.column("err_S")


class TestReadTrajectory:
    def test_grid_metadata_and_values(self, field_run):
        dump = read_trajectory(field_run / "control.csv")
        assert (dump.level, dump.n_steps, dump.horizon) == (2, 4, 1.0)
        assert dump.values.shape == (5, 9)
        assert np.all(dump.values == 0.7)
        assert dump.label == "test"

    def test_metadata_required(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("# manifest_hash=beef\nk,t,node,value\n0,0.0,0,1.0\n")
        with pytest.raises(SchemaError, match="grid metadata"):
            read_trajectory(path)


class TestVerification:
    def test_matching_pair_passes(self, convergence_run):
        table = read_table(convergence_run / "truncation.csv")
        items = verify_against_manifest(table, sibling_manifest(str(table.path)))
        assert items["study"] == "truncation"

    def test_edited_manifest_rejected(self, convergence_run):
        manifest = convergence_run / "manifest.txt"
        manifest.write_text(manifest.read_text().replace("seed = 1", "seed = 99"))
        table = read_table(convergence_run / "truncation.csv")
        with pytest.raises(ManifestMismatchError, match="manifest edited"):
            verify_against_manifest(table, str(manifest))

    def test_altered_embedded_hash_rejected(self, convergence_run):
        csv = convergence_run / "truncation.csv"
        text = csv.read_text()
        first, rest = text.split("\n", 1)
        tampered = "# manifest_hash=" + "0" * 64
        csv.write_text(tampered + "\n" + rest)
        table = read_table(csv)
        with pytest.raises(ManifestMismatchError, match="does not"):
            verify_against_manifest(table, sibling_manifest(str(csv)))

    def test_missing_manifest_rejected(self, tmp_path, convergence_run):
        table = read_table(convergence_run / "truncation.csv")
        with pytest.raises(ManifestMismatchError, match="not found"):
            verify_against_manifest(table, str(tmp_path / "nope" / "manifest.txt"))


class TestGridEmbedding:
    def test_boundary_zeros(self):
        grid = interior_to_grid(2, np.arange(1.0, 10.0))
        assert grid.shape == (5, 5)
        assert np.all(grid[0] == 0) and np.all(grid[-1] == 0)
        assert np.all(grid[:, 0] == 0) and np.all(grid[:, -1] == 0)
        assert grid[1, 1] == 1.0 and grid[3, 3] == 9.0

    def test_length_mismatch_rejected(self):
        with pytest.raises(SchemaError, match="level"):
            interior_to_grid(3, np.ones(9))
