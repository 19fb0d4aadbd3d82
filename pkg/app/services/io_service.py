"""Readers and writers for reports, fields, operators and CSV tables."""

import csv
import json
import struct
from collections.abc import Iterable, Sequence
from pathlib import Path
from typing import Any

import numpy as np
import structlog
from pydantic import BaseModel

from app.core.exceptions import ArtifactError, GridMismatchError
from app.models.grid import BoolArray, FloatArray, Grid
from app.models.operator import EnergyOperator
from app.schemas.artifacts import FieldSidecar, OperatorHeader
from app.schemas.geometry import GridMetadata
from app.schemas.solver import IterationRecord

logger = structlog.get_logger()

# Little-endian unsigned 64-bit header length
HEADER_PREFIX = struct.Struct("<Q")

FIELD_DTYPE = np.dtype("<f8")


class IOService:
    """Service for on-disk artifacts."""

    # ------------------------------------------------------------------
    # JSON
    # ------------------------------------------------------------------

    def dumps(self, payload: BaseModel | dict[str, Any]) -> str:
        """Deterministic JSON: sorted keys, fixed indentation."""
        data = payload.model_dump(mode="json") if isinstance(payload, BaseModel) else payload
        return json.dumps(data, sort_keys=True, indent=2) + "\n"

    def write_json(self, path: Path, payload: BaseModel | dict[str, Any]) -> Path:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.dumps(payload), encoding="utf-8")
        logger.debug("JSON written", path=str(path))
        return path

    def read_json(self, path: Path) -> dict[str, Any]:
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ArtifactError("Cannot read JSON", details={"path": str(path), "error": str(exc)}) from exc
        if not isinstance(data, dict):
            raise ArtifactError("JSON root must be an object", details={"path": str(path)})
        return data

    # ------------------------------------------------------------------
    # Operators
    # ------------------------------------------------------------------

    def write_operator(self, path: Path, op: EnergyOperator) -> Path:
        """
        Operator binary: 8-byte header length, JSON header, then W and kappa as <f8.

        W is stored row-major (n x n), followed by the n entries of kappa.
        """
        header = OperatorHeader(
            n=op.n,
            grid=op.grid.metadata(),
            kernel=op.kernel,
            cutoff_radius=op.cutoff_radius,
            near_weights=op.near_weights,
        )
        encoded = self.dumps(header).encode("utf-8")
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("wb") as fh:
            fh.write(HEADER_PREFIX.pack(len(encoded)))
            fh.write(encoded)
            fh.write(np.ascontiguousarray(op.weights, dtype=FIELD_DTYPE).tobytes())
            fh.write(np.ascontiguousarray(op.kappa, dtype=FIELD_DTYPE).tobytes())
        logger.info("Operator written", path=str(path), nodes=op.n)
        return path

    def read_operator(self, path: Path) -> tuple[OperatorHeader, FloatArray, FloatArray]:
        """Inverse of write_operator; returns (header, W, kappa)."""
        raw = path.read_bytes()
        if len(raw) < HEADER_PREFIX.size:
            raise ArtifactError("Operator file is truncated", details={"path": str(path)})
        (length,) = HEADER_PREFIX.unpack_from(raw)
        start = HEADER_PREFIX.size + length
        header = OperatorHeader.model_validate_json(raw[HEADER_PREFIX.size : start])
        payload = np.frombuffer(raw, dtype=FIELD_DTYPE, offset=start)
        n = header.n
        if payload.size != n * n + n:
            raise ArtifactError(
                "Operator payload size does not match its header",
                details={"expected": n * n + n, "got": int(payload.size)},
            )
        weights = payload[: n * n].reshape(n, n).astype(np.float64)
        kappa = payload[n * n :].astype(np.float64)
        return header, weights, kappa

    # ------------------------------------------------------------------
    # Grids
    # ------------------------------------------------------------------

    def write_grid(self, path: Path, grid: Grid) -> tuple[Path, Path]:
        """Membership mask as flat uint8 (C order over the box) plus GridMetadata JSON."""
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(np.ascontiguousarray(grid.inside, dtype=np.uint8).tobytes())
        meta_path = path.with_suffix(".json")
        self.write_json(meta_path, grid.metadata())
        return path, meta_path

    def read_grid(self, path: Path) -> tuple[GridMetadata, BoolArray]:
        metadata = GridMetadata.model_validate(self.read_json(path.with_suffix(".json")))
        mask = np.fromfile(path, dtype=np.uint8)
        if mask.size != metadata.n_nodes:
            raise ArtifactError(
                "Grid mask size does not match its metadata",
                details={"expected": metadata.n_nodes, "got": int(mask.size)},
            )
        return metadata, mask.astype(bool)

    # ------------------------------------------------------------------
    # Fields
    # ------------------------------------------------------------------

    def write_fields(
        self,
        path: Path,
        grid: Grid,
        fields: Sequence[FloatArray],
        names: Sequence[str],
        seed: int | None = None,
        source: str | None = None,
    ) -> tuple[Path, Path]:
        """Flat <f8 binary of stacked interior vectors plus a JSON sidecar."""
        if len(fields) != len(names):
            raise ArtifactError("Each field needs a name")
        stacked = np.stack([grid.check_field(u) for u in fields])
        sidecar = FieldSidecar(
            n=grid.n_interior,
            count=len(fields),
            names=list(names),
            grid=grid.metadata(),
            seed=seed,
            source=source,
        )
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(np.ascontiguousarray(stacked, dtype=FIELD_DTYPE).tobytes())
        meta_path = path.with_suffix(".json")
        self.write_json(meta_path, sidecar)
        return path, meta_path

    def read_fields(self, path: Path) -> tuple[FieldSidecar, FloatArray]:
        """Read a field binary and its sidecar; returns (sidecar, array of shape (count, n))."""
        meta_path = path.with_suffix(".json")
        sidecar = FieldSidecar.model_validate(self.read_json(meta_path))
        values = np.fromfile(path, dtype=FIELD_DTYPE)
        if values.size != sidecar.count * sidecar.n:
            raise ArtifactError(
                "Field payload size does not match its sidecar",
                details={"expected": sidecar.count * sidecar.n, "got": int(values.size)},
            )
        return sidecar, values.reshape(sidecar.count, sidecar.n).astype(np.float64)

    def check_grid(self, sidecar: FieldSidecar, grid: Grid) -> None:
        if sidecar.grid != grid.metadata():
            raise GridMismatchError(
                "Stored fields belong to a different grid",
                details={"stored": sidecar.grid.model_dump(mode="json")},
            )

    # ------------------------------------------------------------------
    # CSV
    # ------------------------------------------------------------------

    def write_csv(self, path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for row in rows:
                writer.writerow([repr(float(v)) if isinstance(v, float | np.floating) else v for v in row])
        return path

    def read_csv(self, path: Path) -> tuple[list[str], list[list[str]]]:
        with path.open(newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, [])
            return header, [row for row in reader if row]

    def write_field_table(
        self, path: Path, grid: Grid, fields: Sequence[FloatArray], names: Sequence[str]
    ) -> Path:
        """Plot table: one row per interior node with coordinates x1..xN and field values."""
        coords = ["x", "y", "z"][: grid.dimension] if grid.dimension <= 3 else [
            f"x{i + 1}" for i in range(grid.dimension)
        ]
        points = grid.interior_points
        values = np.stack([grid.check_field(u) for u in fields], axis=1)
        rows = (list(map(float, p)) + list(map(float, v)) for p, v in zip(points, values))
        return self.write_csv(path, [*coords, *names], rows)

    def write_log(self, path: Path, log: Sequence[IterationRecord]) -> Path:
        return self.write_csv(
            path,
            ["iteration", "J", "residual", "step"],
            ([r.iteration, r.J, r.residual, r.step] for r in log),
        )


io_service = IOService()
