"""
Output files. Every record stream is written as NDJSON with a CSV mirror;
plots are SVG. The first NDJSON line, the CSV comment header and the SVG
description all carry the resolved run configuration.
"""

import json
import logging
import pathlib
import threading

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import pandas as pd  # noqa: E402
from pydantic import BaseModel  # noqa: E402

logger = logging.getLogger(__name__)

# Stable SVG element ids across runs.
matplotlib.rcParams["svg.hashsalt"] = "vortexstrip"


class RecordWriter:
    """Single writer for all files of one command run.

    Scan workers hand their records back to the parent process; only this
    object touches the output directory.
    """

    def __init__(self, out_dir: str | pathlib.Path, config: dict):
        self.out_dir = pathlib.Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.config = config
        self._lock = threading.Lock()
        self._rows: dict[str, list[dict]] = {}
        self._header = json.dumps({"record": "header", "config": config}, sort_keys=True)

    def path(self, name: str, suffix: str) -> pathlib.Path:
        return self.out_dir / f"{name}{suffix}"

    def emit(self, name: str, record: BaseModel) -> None:
        line = record.model_dump_json()
        with self._lock:
            target = self.path(name, ".ndjson")
            if name not in self._rows:
                self._rows[name] = []
                target.write_text(self._header + "\n")
            with target.open("a") as fh:
                fh.write(line + "\n")
            self._rows[name].append(record.model_dump(mode="json"))

    def emit_all(self, name: str, records: list[BaseModel]) -> None:
        for record in records:
            self.emit(name, record)

    def rows(self, name: str) -> list[dict]:
        return list(self._rows.get(name, []))

    def _write_csv(self, name: str) -> None:
        frame = pd.json_normalize(self._rows[name])
        for column in frame.columns:
            if frame[column].map(lambda v: isinstance(v, (list, dict))).any():
                frame[column] = frame[column].map(json.dumps)
        target = self.path(name, ".csv")
        with target.open("w") as fh:
            fh.write("# " + self._header + "\n")
            frame.to_csv(fh, index=False)

    def close(self) -> list[pathlib.Path]:
        """Write CSV mirrors; returns every NDJSON and CSV path written."""
        written = []
        with self._lock:
            for name in sorted(self._rows):
                self._write_csv(name)
                written += [self.path(name, ".ndjson"), self.path(name, ".csv")]
        logger.info("wrote %d record files to %s", len(written), self.out_dir)
        return written

    def write_svg(self, name: str, fig: plt.Figure) -> pathlib.Path:
        target = self.path(name, ".svg")
        with self._lock:
            fig.savefig(
                target,
                format="svg",
                metadata={"Date": None, "Description": self._header},
            )
        plt.close(fig)
        logger.info("wrote plot %s", target)
        return target


def read_records(path: str | pathlib.Path) -> tuple[dict, list[dict]]:
    """(config, records) from an NDJSON file written by RecordWriter."""
    lines = pathlib.Path(path).read_text().splitlines()
    header = json.loads(lines[0])
    return header["config"], [json.loads(line) for line in lines[1:] if line]
