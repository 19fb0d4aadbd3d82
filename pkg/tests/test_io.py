"""Tests for artifact readers and writers."""

import json

import numpy as np
import pytest

from app.core.exceptions import ArtifactError, GridMismatchError
from app.models.grid import Grid
from app.models.operator import EnergyOperator
from app.schemas.solver import IterationRecord
from app.services.io_service import io_service


class TestBinaries:
    def test_operator_file(self, tmp_path, disk_operator: EnergyOperator) -> None:
        path = io_service.write_operator(tmp_path / "operator.bin", disk_operator)
        header, weights, kappa = io_service.read_operator(path)
        assert header.n == disk_operator.n
        assert header.grid == disk_operator.grid.metadata()
        assert header.near_weights == disk_operator.near_weights
        np.testing.assert_array_equal(weights, disk_operator.weights)
        np.testing.assert_array_equal(kappa, disk_operator.kappa)

    def test_truncated_operator_file(self, tmp_path, disk_operator: EnergyOperator) -> None:
        path = io_service.write_operator(tmp_path / "operator.bin", disk_operator)
        path.write_bytes(path.read_bytes()[:-8])
        with pytest.raises(ArtifactError):
            io_service.read_operator(path)
        path.write_bytes(b"\x01")
        with pytest.raises(ArtifactError):
            io_service.read_operator(path)

    def test_fields_file(self, tmp_path, disk_grid: Grid, rng) -> None:
        u, v = rng.standard_normal((2, disk_grid.n_interior))
        path, meta = io_service.write_fields(tmp_path / "fields.bin", disk_grid, [u, v], ["u1", "u2"], seed=5)
        assert path.stat().st_size == 2 * disk_grid.n_interior * 8
        sidecar, values = io_service.read_fields(path)
        assert sidecar.names == ["u1", "u2"]
        assert sidecar.seed == 5
        np.testing.assert_array_equal(values, np.stack((u, v)))
        io_service.check_grid(sidecar, disk_grid)
        assert json.loads(meta.read_text())["count"] == 2

    def test_fields_on_another_grid(self, tmp_path, disk_grid: Grid, annulus_grid: Grid) -> None:
        path, _ = io_service.write_fields(
            tmp_path / "fields.bin", disk_grid, [np.zeros(disk_grid.n_interior)], ["u"]
        )
        sidecar, _ = io_service.read_fields(path)
        with pytest.raises(GridMismatchError):
            io_service.check_grid(sidecar, annulus_grid)

    def test_short_field_payload(self, tmp_path, disk_grid: Grid) -> None:
        path, _ = io_service.write_fields(tmp_path / "fields.bin", disk_grid, [np.ones(disk_grid.n_interior)], ["u"])
        path.write_bytes(path.read_bytes()[:16])
        with pytest.raises(ArtifactError):
            io_service.read_fields(path)

    def test_names_must_match_fields(self, tmp_path, disk_grid: Grid) -> None:
        with pytest.raises(ArtifactError):
            io_service.write_fields(tmp_path / "f.bin", disk_grid, [np.ones(disk_grid.n_interior)], ["a", "b"])

    def test_grid_mask(self, tmp_path, annulus_grid: Grid) -> None:
        path, _ = io_service.write_grid(tmp_path / "grid.bin", annulus_grid)
        metadata, mask = io_service.read_grid(path)
        assert metadata == annulus_grid.metadata()
        np.testing.assert_array_equal(mask, annulus_grid.inside)


class TestText:
    def test_json_is_deterministic(self) -> None:
        assert io_service.dumps({"b": 1, "a": [1.5]}) == '{\n  "a": [\n    1.5\n  ],\n  "b": 1\n}\n'

    def test_unreadable_json(self, tmp_path) -> None:
        path = tmp_path / "broken.json"
        path.write_text("{")
        with pytest.raises(ArtifactError):
            io_service.read_json(path)
        path.write_text("[1, 2]")
        with pytest.raises(ArtifactError):
            io_service.read_json(path)

    def test_field_table(self, tmp_path, disk_grid: Grid) -> None:
        u = disk_grid.interior_points[:, 0]
        io_service.write_field_table(tmp_path / "fields.csv", disk_grid, [u], ["u"])
        header, rows = io_service.read_csv(tmp_path / "fields.csv")
        assert header == ["x", "y", "u"]
        assert len(rows) == disk_grid.n_interior
        assert all(float(x) == float(value) for x, _, value in rows)

    def test_iteration_log(self, tmp_path) -> None:
        log = [IterationRecord(iteration=10, J=1.25, residual=0.5, step=0.1)]
        io_service.write_log(tmp_path / "log.csv", log)
        header, rows = io_service.read_csv(tmp_path / "log.csv")
        assert header == ["iteration", "J", "residual", "step"]
        assert rows == [["10", "1.25", "0.5", "0.1"]]
