"""CSV ingestion and label encoding for the classifier pipeline."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from ..errors import EmptyDatasetError, MalformedCsvError, MissingColumnError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class LabelEncoder:
    """Bijection between label strings and 0..n-1, first-occurrence order."""

    classes: tuple[str, ...]

    @classmethod
    def from_labels(cls, labels: Sequence[str]) -> "LabelEncoder":
        seen: dict[str, None] = {}
        for label in labels:
            seen.setdefault(label, None)
        return cls(classes=tuple(seen))

    @property
    def index(self) -> dict[str, int]:
        return {label: i for i, label in enumerate(self.classes)}

    def encode(self, labels: Sequence[str]) -> np.ndarray:
        index = self.index
        return np.asarray([index[label] for label in labels], dtype=np.int64)

    def decode(self, ids: Sequence[int]) -> list[str]:
        return [self.classes[int(i)] for i in ids]

    def __len__(self) -> int:
        return len(self.classes)


@dataclass(frozen=True)
class LoadedDataset:
    texts: list[str]
    labels: np.ndarray  # encoded ids
    encoder: LabelEncoder
    dropped_rows: int

    @property
    def label_names(self) -> list[str]:
        return self.encoder.decode(self.labels)


def load_dataset(csv_path: str | Path, text_column: str, label_column: str) -> LoadedDataset:
    """Read a text/label CSV (RFC-4180 quoting); rows with an empty text or
    label are dropped and counted."""
    path = Path(csv_path)
    texts: list[str] = []
    labels: list[str] = []
    dropped = 0
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise EmptyDatasetError()
        for column in (text_column, label_column):
            if column not in reader.fieldnames:
                raise MissingColumnError(column)
        try:
            for row in reader:
                text = (row.get(text_column) or "").strip()
                label = (row.get(label_column) or "").strip()
                if not text or not label:
                    dropped += 1
                    continue
                texts.append(text)
                labels.append(label)
        except csv.Error as exc:
            raise MalformedCsvError(reader.line_num, str(exc)) from exc
    if not texts:
        raise EmptyDatasetError()
    if dropped:
        logger.info("dropped %d rows with empty %s/%s", dropped, text_column, label_column)
    encoder = LabelEncoder.from_labels(labels)
    return LoadedDataset(
        texts=texts, labels=encoder.encode(labels), encoder=encoder, dropped_rows=dropped
    )
