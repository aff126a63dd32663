"""Ingest the clinicaltrials.gov CSV export into trial records."""

from __future__ import annotations

import csv
import io
import logging
import re
from dataclasses import dataclass, field
from typing import BinaryIO, Iterable, Mapping, Optional, Union

log = logging.getLogger(__name__)

NCT_PATTERN = re.compile(r"NCT\d{8}")

# Header names of the current clinicaltrials.gov CSV export. Older exports used
# other spellings, hence the override map.
DEFAULT_COLUMNS = {
    "nct_id": "NCT Number",
    "primary_outcomes": "Primary Outcome Measures",
    "secondary_outcomes": "Secondary Outcome Measures",
    "condition": "Conditions",
}
REQUIRED_KEYS = ("nct_id", "primary_outcomes", "secondary_outcomes")


class IngestError(Exception):
    pass


class MissingColumn(IngestError):
    pass


class MalformedRow(IngestError):
    pass


class InvalidNctId(IngestError):
    pass


class DuplicateNctId(IngestError):
    pass


class EmptyOutcomes(IngestError):
    pass


class EncodingError(IngestError):
    pass


@dataclass(frozen=True)
class ClinicalTrial:
    nct_id: str
    primary_outcomes: str = ""
    secondary_outcomes: str = ""
    condition: str = ""

    @property
    def promotable(self) -> bool:
        return bool(self.primary_outcomes.strip() or self.secondary_outcomes.strip())


@dataclass(frozen=True)
class IngestWarning:
    line: int
    kind: str
    message: str
    dropped: bool


@dataclass
class IngestResult:
    trials: list = field(default_factory=list)
    warnings: list = field(default_factory=list)
    data_rows: int = 0

    @property
    def rejected(self) -> int:
        return sum(1 for w in self.warnings if w.dropped)


def resolve_column_map(overrides: Optional[Mapping[str, str]] = None) -> dict:
    columns = dict(DEFAULT_COLUMNS)
    for key, value in (overrides or {}).items():
        if key not in DEFAULT_COLUMNS:
            raise MissingColumn(f"unknown column key {key!r}; expected one of {sorted(DEFAULT_COLUMNS)}")
        columns[key] = value
    return columns


def _decode(source: Union[bytes, BinaryIO, str]) -> str:
    if isinstance(source, str):
        return source
    data = source if isinstance(source, bytes) else source.read()
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise EncodingError(f"input is not valid UTF-8 (byte offset {exc.start})") from exc
    return text[1:] if text.startswith("\ufeff") else text


def parse_trials_csv(
    source: Union[bytes, BinaryIO, str],
    column_map: Optional[Mapping[str, str]] = None,
    *,
    strict: bool = False,
) -> IngestResult:
    """Parse a CSV export into :class:`ClinicalTrial` rows.

    Row-level problems (bad quoting, bad NCT ids, duplicates, two empty
    outcome fields) are collected as warnings; with ``strict=True`` the
    first malformed row or bad id raises instead.
    """
    columns = resolve_column_map(column_map)
    text = _decode(source)
    result = IngestResult()
    reader = csv.reader(io.StringIO(text, newline=""), strict=True)

    def warn(line: int, exc: IngestError, dropped: bool) -> None:
        if strict and dropped and not isinstance(exc, DuplicateNctId):
            raise exc
        result.warnings.append(IngestWarning(line, type(exc).__name__, str(exc), dropped))
        log.warning("row at line %d: %s", line, exc)

    try:
        header = next(reader)
    except StopIteration:
        return result
    except csv.Error as exc:
        raise MalformedRow(f"unreadable header: {exc}") from exc

    positions = {}
    for key, name in columns.items():
        if name in header:
            positions[key] = header.index(name)
        elif key in REQUIRED_KEYS:
            raise MissingColumn(f"column {name!r} ({key}) not in header {header}")

    seen: set[str] = set()
    while True:
        start_line = reader.line_num + 1
        try:
            row = next(reader)
        except StopIteration:
            break
        except csv.Error as exc:
            result.data_rows += 1
            warn(start_line, MalformedRow(f"line {start_line}: {exc}"), dropped=True)
            continue
        if not row:
            continue
        result.data_rows += 1
        if len(row) != len(header):
            warn(start_line, MalformedRow(f"line {start_line}: {len(row)} fields, header has {len(header)}"), dropped=True)
            continue
        values = {key: row[pos] for key, pos in positions.items()}
        nct = values["nct_id"].strip()
        if not NCT_PATTERN.fullmatch(nct):
            warn(start_line, InvalidNctId(f"line {start_line}: {nct!r} is not an NCT id"), dropped=True)
            continue
        if nct in seen:
            warn(start_line, DuplicateNctId(f"line {start_line}: duplicate {nct}, keeping first occurrence"), dropped=True)
            continue
        seen.add(nct)
        trial = ClinicalTrial(
            nct_id=nct,
            primary_outcomes=values["primary_outcomes"],
            secondary_outcomes=values["secondary_outcomes"],
            condition=values.get("condition", ""),
        )
        if not trial.promotable:
            warn(start_line, EmptyOutcomes(f"line {start_line}: {nct} has no outcome text"), dropped=False)
        result.trials.append(trial)
    return result


def write_trials_csv(trials: Iterable[ClinicalTrial], column_map: Optional[Mapping[str, str]] = None) -> str:
    """Serialize trials back to CSV, used to build fixtures."""
    columns = resolve_column_map(column_map)
    keys = list(DEFAULT_COLUMNS)
    buf = io.StringIO(newline="")
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow([columns[k] for k in keys])
    for t in trials:
        writer.writerow([getattr(t, k) for k in keys])
    return buf.getvalue()


def read_trials(path, column_map=None, *, strict=False) -> IngestResult:
    with open(path, "rb") as fh:
        return parse_trials_csv(fh, column_map, strict=strict)
