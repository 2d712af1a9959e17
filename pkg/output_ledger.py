# output_ledger.py - Output file hashing and change detection
import hashlib
import json
import logging
import math
from pathlib import Path

import pandas as pd

LEDGER_FILE = "ledger.json"


def _get_file_hash(filepath):
    """Get SHA256 hash of a file"""
    if not Path(filepath).exists():
        return None
    sha256_hash = hashlib.sha256()
    with open(filepath, "rb") as f:
        for chunk in iter(lambda: f.read(4096), b""):
            sha256_hash.update(chunk)
    return sha256_hash.hexdigest()


def _json_safe(value):
    # NaN/inf are not valid JSON; write them as null
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, dict):
        return {k: _json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_safe(v) for v in value]
    return value


class OutputLedger:
    """Records the SHA-256 of every file written to an output directory."""

    def __init__(self, out_dir):
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.ledger_path = self.out_dir / LEDGER_FILE
        self.hashes = {}
        if self.ledger_path.exists():
            try:
                with open(self.ledger_path, "r", encoding="utf-8") as f:
                    self.hashes = json.load(f)
            except (json.JSONDecodeError, OSError) as e:
                logging.error(f"Could not read {self.ledger_path}, starting a new ledger: {e}")
                self.hashes = {}

    def record(self, path) -> str:
        path = Path(path)
        key = path.relative_to(self.out_dir).as_posix() if path.is_relative_to(self.out_dir) else path.as_posix()
        current = _get_file_hash(path)
        previous = self.hashes.get(key)
        if previous is not None and previous != current:
            self.log_output_event("OUTPUT_CHANGED", f"{key} differs from the previous run", level=logging.WARNING)
        else:
            self.log_output_event("OUTPUT_WRITTEN", f"{key} sha256={current}")
        self.hashes[key] = current
        self._save()
        return current

    def log_output_event(self, event_type, details="", level=logging.INFO):
        logging.log(level, f"--- OUTPUT: {event_type} - {details} ---")

    def _save(self):
        with open(self.ledger_path, "w", encoding="utf-8") as f:
            json.dump(self.hashes, f, indent=2, sort_keys=True)
            f.write("\n")

    def write_frame(self, frame: pd.DataFrame, name: str, fmt: str = "csv") -> Path:
        """Writes a table as CSV or JSON records and records its hash."""
        path = self.out_dir / f"{name}.{fmt}"
        if fmt == "csv":
            frame.to_csv(path, index=False, lineterminator="\n")
        elif fmt == "json":
            frame.to_json(path, orient="records", indent=2)
        else:
            raise ValueError(f"unsupported output format '{fmt}'")
        self.record(path)
        return path

    def write_json(self, payload: dict, name: str) -> Path:
        path = self.out_dir / f"{name}.json"
        with open(path, "w", encoding="utf-8") as f:
            json.dump(_json_safe(payload), f, indent=2)
            f.write("\n")
        self.record(path)
        return path

    def write_text(self, text: str, filename: str) -> Path:
        path = self.out_dir / filename
        with open(path, "w", encoding="utf-8") as f:
            f.write(text)
        self.record(path)
        return path
