"""Per-trial cost/time breakdowns, extrapolation, and report rendering.

Money is handled as :class:`~decimal.Decimal` end to end; values are rounded
to four decimal places (and times to whole seconds) only when a breakdown
row is produced.
"""

from __future__ import annotations

import csv
import io
import json
import sys
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

CENT4 = Decimal("0.0001")
SECOND = Decimal("1")
PHASES = ("generation", "merge")


class CostingError(ValueError):
    pass


class KindMismatch(CostingError):
    pass


class NoRecords(CostingError):
    pass


def money(value) -> Decimal:
    return value if isinstance(value, Decimal) else Decimal(str(value))


@dataclass(frozen=True)
class CostModel:
    pricing_kind: str
    input_rate: Decimal = Decimal(0)
    output_rate: Decimal = Decimal(0)
    hourly_rate: Decimal = Decimal(0)
    currency: str = "USD"
    as_of: str = ""
    note: str = ""

    def __post_init__(self):
        if self.pricing_kind not in ("per_token", "per_hour"):
            raise KindMismatch(f"unknown pricing kind {self.pricing_kind!r}")
        for name in ("input_rate", "output_rate", "hourly_rate"):
            object.__setattr__(self, name, money(getattr(self, name)))
            if getattr(self, name) < 0:
                raise CostingError(f"{name} must be >= 0")

    @classmethod
    def from_mapping(cls, data: Mapping) -> "CostModel":
        kind = data.get("pricing_kind")
        needed = ("input_rate", "output_rate") if kind == "per_token" else ("hourly_rate",)
        missing = [k for k in needed if k not in data]
        if missing:
            raise KindMismatch(f"{kind} pricing needs {missing}")
        return cls(
            pricing_kind=kind,
            input_rate=money(data.get("input_rate", 0)),
            output_rate=money(data.get("output_rate", 0)),
            hourly_rate=money(data.get("hourly_rate", 0)),
            currency=data.get("currency", "USD"),
            as_of=str(data.get("as_of", "")),
            note=data.get("note", ""),
        )


def load_pricing(path) -> dict:
    """Read ``[models."<model_id>"]`` tables from a TOML pricing file."""
    with open(path, "rb") as fh:
        data = tomllib.load(fh)
    return {model_id: CostModel.from_mapping(entry) for model_id, entry in data.get("models", {}).items()}


def default_pricing_path() -> Path:
    return Path(__file__).with_name("data") / "pricing.toml"


@dataclass(frozen=True)
class RunRecord:
    nct_id: str
    model_id: str
    phase: str
    prompt_tokens: int = 0
    completion_tokens: int = 0
    wall_time: float = 0.0
    attempts: int = 1
    valid: bool = True
    label: Optional[str] = None

    def __post_init__(self):
        if self.phase not in PHASES:
            raise CostingError(f"phase must be one of {PHASES}")
        if self.prompt_tokens < 0 or self.completion_tokens < 0:
            raise CostingError("token counts must be >= 0")
        if self.wall_time < 0:
            raise CostingError("wall time must be >= 0")

    @property
    def group(self) -> str:
        return self.label or self.model_id

    def as_dict(self) -> dict:
        return {
            "nct_id": self.nct_id,
            "model_id": self.model_id,
            "label": self.group,
            "phase": self.phase,
            "prompt_tokens": self.prompt_tokens,
            "completion_tokens": self.completion_tokens,
            "wall_time": self.wall_time,
            "attempts": self.attempts,
            "valid": self.valid,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "RunRecord":
        return cls(
            nct_id=d["nct_id"],
            model_id=d["model_id"],
            phase=d["phase"],
            prompt_tokens=int(d.get("prompt_tokens", 0)),
            completion_tokens=int(d.get("completion_tokens", 0)),
            wall_time=float(d.get("wall_time", 0.0)),
            attempts=int(d.get("attempts", 1)),
            valid=bool(d.get("valid", True)),
            label=d.get("label"),
        )


def cost_of(record: RunRecord, model: CostModel) -> Decimal:
    """Cost of one record; token counts already cover every attempt."""
    if model.pricing_kind == "per_token":
        return (
            Decimal(record.prompt_tokens) / 1000 * model.input_rate
            + Decimal(record.completion_tokens) / 1000 * model.output_rate
        )
    if model.pricing_kind == "per_hour":
        return money(record.wall_time) / 3600 * model.hourly_rate
    raise KindMismatch(model.pricing_kind)


@dataclass(frozen=True)
class BreakdownRow:
    label: str
    gen_cost_per_trial: Decimal
    gen_time_per_trial: Decimal
    merge_cost_per_trial: Decimal
    merge_time_per_trial: Decimal
    total_cost_per_trial: Decimal
    total_time_per_trial: Decimal
    included_fraction: float
    n_trials: int = 0

    def as_dict(self) -> dict:
        return {
            "label": self.label,
            "gen_cost_per_trial": str(self.gen_cost_per_trial),
            "gen_time_per_trial": str(self.gen_time_per_trial),
            "merge_cost_per_trial": str(self.merge_cost_per_trial),
            "merge_time_per_trial": str(self.merge_time_per_trial),
            "total_cost_per_trial": str(self.total_cost_per_trial),
            "total_time_per_trial": str(self.total_time_per_trial),
            "included_fraction": self.included_fraction,
            "n_trials": self.n_trials,
        }


def make_row(label, gen_cost, gen_time, merge_cost, merge_time, included_fraction, n_trials=0) -> BreakdownRow:
    """Round phase values for display; totals sum the unrounded phases."""
    gen_cost, gen_time, merge_cost, merge_time = map(money, (gen_cost, gen_time, merge_cost, merge_time))
    if not 0 <= included_fraction <= 1:
        raise CostingError("included fraction must lie in [0, 1]")

    def c(v):
        return v.quantize(CENT4, ROUND_HALF_UP)

    def t(v):
        return v.quantize(SECOND, ROUND_HALF_UP)

    return BreakdownRow(
        label,
        c(gen_cost),
        t(gen_time),
        c(merge_cost),
        t(merge_time),
        c(gen_cost + merge_cost),
        t(gen_time + merge_time),
        float(included_fraction),
        n_trials,
    )


# Manual baseline, extrapolated from 14 hand-built trial ontologies at $20/h.
# Used when the pricing file carries no [baseline] tables.
HUMAN_BASELINE = make_row("Human", "3.33", 600, "1.67", 300, 1.0)


def load_baselines(path) -> list[BreakdownRow]:
    """Fixed comparison rows from ``[baseline."<label>"]`` tables of a pricing file."""
    with open(path, "rb") as fh:
        data = tomllib.load(fh).get("baseline")
    if data is None:
        return [HUMAN_BASELINE]
    rows = []
    for label, b in data.items():
        try:
            rows.append(make_row(label, b["gen_cost"], b["gen_time"], b["merge_cost"], b["merge_time"], b.get("included_fraction", 1.0)))
        except KeyError as exc:
            raise CostingError(f"baseline {label!r} lacks {exc.args[0]!r}") from None
    return rows


def breakdown(
    records: Iterable[RunRecord],
    costs: Mapping[str, CostModel],
    labels: Optional[Sequence[str]] = None,
) -> list[BreakdownRow]:
    """Average cost and time per trial, per model label and phase."""
    grouped: dict[str, list[RunRecord]] = {}
    for r in records:
        grouped.setdefault(r.group, []).append(r)
    labels = list(labels) if labels is not None else sorted(grouped)
    rows = []
    for label in labels:
        recs = grouped.get(label)
        if not recs:
            raise NoRecords(f"no run records for {label!r}")
        gen = [r for r in recs if r.phase == "generation"]
        trials = {r.nct_id for r in gen} or {r.nct_id for r in recs}
        n = len(trials)
        sums = {p: [Decimal(0), Decimal(0)] for p in PHASES}
        for r in recs:
            model = costs.get(r.model_id)
            if model is None:
                raise NoRecords(f"no pricing for model {r.model_id!r}")
            sums[r.phase][0] += cost_of(r, model)
            sums[r.phase][1] += money(r.wall_time)
        valid = sum(1 for r in gen if r.valid)
        included = valid / n if gen else 0.0
        rows.append(
            make_row(
                label,
                sums["generation"][0] / n,
                sums["generation"][1] / n,
                sums["merge"][0] / n,
                sums["merge"][1] / n,
                included,
                n,
            )
        )
    return rows


@dataclass(frozen=True)
class Extrapolation:
    label: str
    n_trials: int
    total_cost: Decimal
    total_seconds: Decimal

    @property
    def hours(self) -> Decimal:
        return self.total_seconds / 3600

    @property
    def days(self) -> Decimal:
        return self.total_seconds / 86400

    @property
    def working_days(self) -> Decimal:
        return self.hours / 8

    @property
    def working_weeks(self) -> Decimal:
        return self.hours / 40

    def as_dict(self) -> dict:
        q = Decimal("0.01")
        return {
            "label": self.label,
            "n_trials": self.n_trials,
            "total_cost": str(self.total_cost.quantize(q, ROUND_HALF_UP)),
            "total_seconds": str(self.total_seconds),
            "hours": str(self.hours.quantize(q, ROUND_HALF_UP)),
            "days": str(self.days.quantize(q, ROUND_HALF_UP)),
            "working_days_8h": str(self.working_days.quantize(q, ROUND_HALF_UP)),
            "working_weeks_40h": str(self.working_weeks.quantize(q, ROUND_HALF_UP)),
        }


def extrapolate(row: BreakdownRow, n_trials: int) -> Extrapolation:
    return Extrapolation(row.label, n_trials, row.total_cost_per_trial * n_trials, row.total_time_per_trial * n_trials)


# --------------------------------------------------------------------------
# reports

_BREAKDOWN_COLS = [
    ("Model", lambda r: r.label),
    ("Gen. cost / trial", lambda r: f"${r.gen_cost_per_trial}"),
    ("Gen. time / trial", lambda r: f"{r.gen_time_per_trial} s"),
    ("Merge cost / trial", lambda r: f"${r.merge_cost_per_trial}"),
    ("Merge time / trial", lambda r: f"{r.merge_time_per_trial} s"),
    ("Total cost / trial", lambda r: f"${r.total_cost_per_trial}"),
    ("Total time / trial", lambda r: f"{r.total_time_per_trial} s"),
    ("Included", lambda r: f"{r.included_fraction * 100:.0f}%"),
]


def _md_table(header: list[str], rows: list[list[str]]) -> list[str]:
    out = ["| " + " | ".join(header) + " |", "|" + "|".join("---" for _ in header) + "|"]
    out += ["| " + " | ".join(r) + " |" for r in rows]
    return out


def _fmt_metric(v) -> str:
    return "n/a" if v is None else f"{v:.4f}"


def emit_report(rows: Sequence[BreakdownRow], metrics: Mapping, fmt: str = "markdown", n_extrapolate: int = 6200) -> str:
    """Render the breakdown, NOCOnto and extrapolation tables deterministically."""
    extrap = [extrapolate(r, n_extrapolate) for r in rows]
    metric_labels = sorted(metrics)
    if fmt == "markdown":
        lines = ["# Run report", "", "## Cost and time per trial", ""]
        lines += _md_table([h for h, _ in _BREAKDOWN_COLS], [[f(r) for _, f in _BREAKDOWN_COLS] for r in rows])
        lines += ["", "## NOCOnto", ""]
        lines += _md_table(
            ["Model", "NOCOnto", "NOCOnto (normalized)", "Included"],
            [
                [
                    lbl,
                    _fmt_metric(metrics[lbl].noconto),
                    _fmt_metric(metrics[lbl].noconto_normalized),
                    f"{metrics[lbl].included_fraction * 100:.0f}%",
                ]
                for lbl in metric_labels
            ],
        )
        lines += ["", f"## Extrapolation to {n_extrapolate} trials", ""]
        lines += _md_table(
            ["Model", "Total cost", "Total time", "Hours", "Days", "8-hour days", "40-hour weeks"],
            [
                [
                    d["label"],
                    f"${d['total_cost']}",
                    f"{d['total_seconds']} s",
                    d["hours"],
                    d["days"],
                    d["working_days_8h"],
                    d["working_weeks_40h"],
                ]
                for d in (e.as_dict() for e in extrap)
            ],
        )
        return "\n".join(lines) + "\n"
    if fmt == "csv":
        buf = io.StringIO(newline="")
        w = csv.writer(buf, lineterminator="\n")
        header = list(BreakdownRow.__dataclass_fields__) + ["noconto", "noconto_normalized", "extrapolated_cost", "extrapolated_seconds"]
        w.writerow(header)
        for r, e in zip(rows, extrap):
            m = metrics.get(r.label)
            d = r.as_dict()
            w.writerow(
                [d[k] for k in BreakdownRow.__dataclass_fields__]
                + [
                    "" if m is None or m.noconto is None else f"{m.noconto:.6f}",
                    "" if m is None or m.noconto_normalized is None else f"{m.noconto_normalized:.6f}",
                    e.as_dict()["total_cost"],
                    e.as_dict()["total_seconds"],
                ]
            )
        return buf.getvalue()
    if fmt == "json":
        doc = {
            "breakdown": [r.as_dict() for r in rows],
            "metrics": {lbl: _metrics_dict(metrics[lbl]) for lbl in metric_labels},
            "extrapolation": {"n_trials": n_extrapolate, "rows": [e.as_dict() for e in extrap]},
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"
    raise ValueError(f"unknown report format {fmt!r}")


def _metrics_dict(m) -> dict:
    return dict(m.__dict__) if not isinstance(m, dict) else dict(m)
