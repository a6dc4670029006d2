"""Ordered, single-writer report output.

Rows arrive per instance in submission order. CSV tables are streamed as
they arrive; the JSON report and the summary are written on close. No
timestamps go into the artifacts, so identical config and seed give
identical bytes.
"""

import csv
import hashlib
import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, TextIO, Union

from config import ExperimentConfig
from formatters import SCHEMA_VERSION, TABLES, dumps, format_row, to_jsonable
from logging_config import get_state_file_path

logger = logging.getLogger(__name__)


def canonical_config_bytes(config: ExperimentConfig) -> bytes:
    return json.dumps(config.model_dump(mode="json"), sort_keys=True, separators=(",", ":")).encode()


def content_hash(data: bytes) -> str:
    """Git-style blob hash: sha1 of ``"blob <len>\\0" + data``."""
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


class ReportSink:
    """Writes the tables of one scan under ``directory``."""

    def __init__(
        self,
        scan: str,
        config: ExperimentConfig,
        directory: Optional[Union[str, Path]] = None,
        fmt: str = "csv",
    ) -> None:
        if fmt not in {"csv", "json"}:
            raise ValueError(f"unknown report format '{fmt}'")
        self.scan = scan
        self.config = config
        self.fmt = fmt
        self.directory = Path(directory) if directory is not None else get_state_file_path(scan).parent
        self.directory.mkdir(parents=True, exist_ok=True)
        self.rows: Dict[str, List[dict]] = {}
        self.provenance: List[dict] = []
        self.fits: Dict[str, Any] = {}
        self.errors = 0
        self._files: Dict[str, TextIO] = {}
        self._writers: Dict[str, Any] = {}

    @property
    def stem(self) -> str:
        return self.scan.replace("-", "_")

    def table_path(self, table: str) -> Path:
        return self.directory / f"{self.stem}.{table}.{self.fmt}"

    @property
    def summary_path(self) -> Path:
        return self.directory / f"{self.stem}.summary.json"

    def _csv_writer(self, table: str):
        if table not in self._writers:
            handle = open(self.table_path(table), "w", newline="")
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(TABLES[table])
            self._files[table] = handle
            self._writers[table] = writer
        return self._writers[table]

    def write(self, tables: Dict[str, List[dict]], provenance: Optional[dict] = None) -> None:
        """Append the rows one instance produced."""
        for table, rows in tables.items():
            if table not in TABLES:
                raise KeyError(f"unknown report table '{table}'")
            self.rows.setdefault(table, []).extend(rows)
            self.errors += sum(1 for row in rows if row.get("status") == "error")
            if self.fmt == "csv":
                writer = self._csv_writer(table)
                for row in rows:
                    writer.writerow(format_row(table, row))
                self._files[table].flush()
        if provenance is not None:
            self.provenance.append(provenance)

    def add_fit(self, name: str, fit: Any) -> None:
        self.fits[name] = fit._asdict() if hasattr(fit, "_asdict") else fit

    def summary(self) -> dict:
        config_bytes = canonical_config_bytes(self.config)
        return {
            "scan": self.scan,
            "schema_version": SCHEMA_VERSION,
            "config": self.config.model_dump(mode="json"),
            "input_hash": content_hash(config_bytes),
            "fits": self.fits,
            "rows": {table: len(rows) for table, rows in sorted(self.rows.items())},
            "errors": self.errors,
            "provenance": self.provenance,
        }

    def close(self) -> dict:
        for handle in self._files.values():
            handle.close()
        self._files.clear()
        if self.fmt == "json":
            for table, rows in self.rows.items():
                report = {
                    "scan": self.scan,
                    "table": table,
                    "columns": TABLES[table],
                    "rows": [{column: row.get(column) for column in TABLES[table]} for row in rows],
                }
                self.table_path(table).write_text(dumps(report))
        summary = self.summary()
        self.summary_path.write_text(dumps(summary))
        logger.info(
            "Wrote %s report to %s (%d rows, %d errors)",
            self.scan, self.directory, sum(len(r) for r in self.rows.values()), self.errors,
        )
        return to_jsonable(summary)

    def __enter__(self) -> "ReportSink":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()
