"""Rebuild per-trial totals and the 6200-trial extrapolation from phase values.

Each row gives generation and merge cost/time per trial plus the included
fraction; the script feeds them through ``breakdown`` as 50 synthetic trials
and prints the resulting report.

    python3 scripts/reproduce_tables.py [--format markdown|csv|json]
"""

import argparse
from decimal import Decimal

from ontoforge.costing import HUMAN_BASELINE, CostModel, RunRecord, breakdown, emit_report

ROWS = {
    "GPT3": ("0.0022", 43, "0.0033", 100, 0.76),
    "chainedGPT3": ("0.0030", 88, "0.0042", 121, 0.80),
    "GPT4": ("0.0594", 36, "0.0030", 71, 0.26),
    "chainedGPT4": ("0.0899", 47, "0.0043", 165, 0.86),
    "Llama3 (8b)": ("0.0016", 17, "0.0037", 39, 0.28),
    "chainedLlama3 (8b)": ("0.0015", 16, "0.0067", 71, 0.24),
    "Llama3 (70b)": ("0.0189", 36, "0.0389", 74, 0.54),
    "chainedLlama3 (70b)": ("0.0189", 36, "0.0709", 135, 0.74),
}
N = 50
UNIT = CostModel("per_token", input_rate="0.1", output_rate="0", note="1 token = 0.0001")


def records():
    for label, (gc, gt, mc, mt, inc) in ROWS.items():
        valid = round(inc * N)
        for i in range(N):
            nct = f"NCT{i:08d}"
            yield RunRecord(nct, "unit", "generation", int(Decimal(gc) * 10000), 0, gt, valid=i < valid, label=label)
            yield RunRecord(nct, "unit", "merge", int(Decimal(mc) * 10000), 0, mt, label=label)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--format", default="markdown", choices=("markdown", "csv", "json"))
    ap.add_argument("--n", type=int, default=6200, help="trials to extrapolate to")
    args = ap.parse_args()
    rows = [HUMAN_BASELINE, *breakdown(records(), {"unit": UNIT}, list(ROWS))]
    print(emit_report(rows, {}, args.format, args.n), end="")


if __name__ == "__main__":
    main()
