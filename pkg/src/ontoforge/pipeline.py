"""Pipeline stages. Every stage reads and writes plain files, so any stage
can be rerun or resumed from what is already on disk.

Layout under ``<out>/<run>/``::

    <label>/<NCT>.ttl         canonical Turtle (valid generations only)
    <label>/<NCT>.raw.txt     uncleaned model output of the final attempt
    <label>/<NCT>.meta.json   usage, latency, attempts and validity
    <label>/main.ttl, main.provenance.csv, synonyms.cache.json, merge.json
    <label>/metrics.json, metrics.txt
    report.md, report.csv, report.json
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from . import costing
from .config import RunConfig
from .llm import Backend, FixtureRecorder, RecordingBackend, chat_with_retry, make_backend
from .merge import IdentitySynonyms, LlmSynonyms, Merger
from .metrics import MetricsReport, evaluate, render_text
from .prompts import EmptyTrial, build_prompt, fill_stage2, load_templates, default_templates
from .trials import ClinicalTrial, read_trials
from .turtle import NoOntologyFound, OntologyDoc, clean_llm_output, load_ontology, repair_prefixes, serialize

log = logging.getLogger(__name__)


def dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


@dataclass
class Validated:
    doc: OntologyDoc
    cleaned: str


def to_ontology(raw: str, nct: Optional[str] = None, repair: bool = False) -> Validated:
    """clean -> optional prefix repair -> parse; never raises."""
    try:
        cleaned = clean_llm_output(raw)
    except NoOntologyFound as exc:
        return Validated(OntologyDoc.invalid(f"NoOntologyFound: {exc}", nct), "")
    if repair:
        cleaned = repair_prefixes(cleaned)
    return Validated(load_ontology(cleaned, nct), cleaned)


def open_backend(cfg: RunConfig) -> Backend:
    backend = make_backend(cfg.backend_config())
    if cfg.record is not None:
        backend = RecordingBackend(backend, FixtureRecorder(cfg.record))
    return backend


def _attempt_entry(stage: str, resp, accepted: bool) -> dict:
    return {
        "stage": stage,
        "attempt": resp.attempt,
        "seed": resp.seed,
        "prompt_tokens": resp.prompt_tokens,
        "completion_tokens": resp.completion_tokens,
        "latency_ms": round(resp.latency * 1000, 3),
        "accepted": accepted,
        "estimated": resp.estimated,
    }


def generate_trial(trial: ClinicalTrial, backend: Backend, cfg: RunConfig, templates) -> dict:
    cfg_b = backend.config
    meta = {
        "nct_id": trial.nct_id,
        "model_id": cfg_b.model_id,
        "label": cfg.model_label,
        "mode": cfg.mode,
        "temperature": cfg_b.temperature,
        "seed": cfg_b.seed,
        "repair_prefixes": cfg.repair_prefixes,
    }
    try:
        plan = build_prompt(cfg.mode, trial, templates=templates)
    except EmptyTrial as exc:
        meta.update(valid=False, reason=f"EmptyTrial: {exc}", attempts=0, prompt_tokens=0, completion_tokens=0, wall_time=0.0, attempt_log=[], estimated=False)
        return meta

    log_entries = []
    prompt_tokens = completion_tokens = 0
    wall = 0.0
    estimated = False
    if plan.mode == "single":
        messages = list(plan.stages[0])
    else:
        first = backend.chat(list(plan.stages[0]))
        log_entries.append(_attempt_entry("extraction", first, True))
        prompt_tokens += first.prompt_tokens
        completion_tokens += first.completion_tokens
        wall += first.latency
        estimated |= first.estimated
        messages = fill_stage2(plan, first.text)

    outcome = chat_with_retry(
        backend, messages, lambda text: to_ontology(text, trial.nct_id, cfg.repair_prefixes).doc.valid
    )
    for resp in outcome.attempts:
        accepted = outcome.valid and resp is outcome.response
        log_entries.append(_attempt_entry("ontology", resp, accepted))
        estimated |= resp.estimated
    result = to_ontology(outcome.response.text, trial.nct_id, cfg.repair_prefixes)
    meta.update(
        valid=result.doc.valid,
        reason=result.doc.reason,
        attempts=len(outcome.attempts),
        prompt_tokens=prompt_tokens + outcome.prompt_tokens,
        completion_tokens=completion_tokens + outcome.completion_tokens,
        wall_time=round(wall + outcome.latency, 6),
        attempt_log=log_entries,
        estimated=estimated,
    )
    out = cfg.model_dir
    write_text(out / f"{trial.nct_id}.raw.txt", outcome.response.text)
    ttl = out / f"{trial.nct_id}.ttl"
    if result.doc.valid:
        write_text(ttl, serialize(result.doc))
    elif ttl.exists():
        ttl.unlink()
    return meta


def generation_record(meta: dict) -> costing.RunRecord:
    return costing.RunRecord(
        nct_id=meta["nct_id"],
        model_id=meta["model_id"],
        phase="generation",
        prompt_tokens=meta["prompt_tokens"],
        completion_tokens=meta["completion_tokens"],
        wall_time=meta["wall_time"],
        attempts=meta["attempts"],
        valid=meta["valid"],
        label=meta.get("label"),
    )


def cmd_generate(cfg: RunConfig) -> list[costing.RunRecord]:
    cfg.validate(need_trials=True)
    ingest = read_trials(cfg.trials, cfg.column_map, strict=cfg.strict_ingest)
    templates = load_templates(cfg.templates) if cfg.templates else default_templates()
    out = cfg.model_dir
    pending = []
    for trial in ingest.trials:
        if cfg.resume and (out / f"{trial.nct_id}.meta.json").exists():
            continue
        pending.append(trial)
    if not ingest.trials:
        return []
    out.mkdir(parents=True, exist_ok=True)
    backend = open_backend(cfg)
    try:
        def work(trial):
            meta = generate_trial(trial, backend, cfg, templates)
            write_text(out / f"{trial.nct_id}.meta.json", dump_json(meta))
            return meta

        if cfg.concurrency > 1:
            with ThreadPoolExecutor(max_workers=cfg.concurrency) as pool:
                list(pool.map(work, pending))
        else:
            for trial in pending:
                work(trial)
    finally:
        backend.close()
    metas = load_metas(out)
    log.info("generated %d ontologies, %d valid", len(metas), sum(m["valid"] for m in metas))
    return [generation_record(m) for m in metas]


def load_metas(model_dir: Path) -> list[dict]:
    metas = []
    for p in sorted(model_dir.glob("*.meta.json")):
        with open(p, encoding="utf-8") as fh:
            metas.append(json.load(fh))
    return metas


def load_docs(model_dir: Path) -> list[OntologyDoc]:
    docs = []
    for meta in load_metas(model_dir):
        nct = meta["nct_id"]
        ttl = model_dir / f"{nct}.ttl"
        if meta.get("valid") and ttl.exists():
            docs.append(load_ontology(ttl.read_text(encoding="utf-8"), nct))
        else:
            docs.append(OntologyDoc.invalid(meta.get("reason") or "invalid", nct))
    return docs


def cmd_merge(cfg: RunConfig):
    out = cfg.model_dir
    docs = load_docs(out) if out.is_dir() else []
    backend = None
    if cfg.synonyms == "llm" and docs:
        cfg.validate()
        backend = open_backend(cfg)
        templates = load_templates(cfg.templates) if cfg.templates else None
        source = LlmSynonyms(backend, templates)
    else:
        source = IdentitySynonyms()
    try:
        merger = Merger(source)
        for doc in docs:
            merger.offer(doc)
    finally:
        if backend is not None:
            backend.close()
    main = merger.main()
    records = []
    model_id = cfg.backend_config().model_id
    for doc in docs:
        if not doc.valid:
            continue
        usage = getattr(source, "usage_by_source", {}).get(doc.source_nct)
        records.append(
            costing.RunRecord(
                nct_id=doc.source_nct,
                model_id=model_id,
                phase="merge",
                prompt_tokens=usage.prompt_tokens if usage else 0,
                completion_tokens=usage.completion_tokens if usage else 0,
                wall_time=round(usage.latency, 6) if usage else 0.0,
                attempts=usage.calls if usage else 0,
                label=cfg.model_label,
            )
        )
    write_text(out / "main.ttl", serialize(main))
    write_text(out / "main.provenance.csv", merger.provenance_csv())
    write_text(out / "synonyms.cache.json", source.cache_json())
    write_text(out / "merge.json", dump_json({"stats": merger.stats.as_dict(), "records": [r.as_dict() for r in records]}))
    return main, merger.stats, records


def included_fraction(metas: list[dict]) -> float:
    return sum(1 for m in metas if m["valid"]) / len(metas) if metas else 0.0


def cmd_eval(cfg: RunConfig) -> MetricsReport:
    out = cfg.model_dir
    main_path = out / "main.ttl"
    if not main_path.exists():
        raise FileNotFoundError(f"{main_path} missing; run the merge stage first")
    doc = load_ontology(main_path.read_text(encoding="utf-8"))
    if not doc.valid:
        raise RuntimeError(f"{main_path} does not parse: {doc.reason}")
    report = evaluate(doc, included_fraction(load_metas(out)))
    write_text(out / "metrics.json", report.to_json())
    write_text(out / "metrics.txt", render_text(report))
    return report


def collect_run(run_dir: Path):
    """Records and metrics for every model label found under a run directory."""
    records, metrics = [], {}
    for model_dir in sorted(p for p in run_dir.iterdir() if p.is_dir()):
        metas = load_metas(model_dir)
        if not metas:
            continue
        records += [generation_record(m) for m in metas]
        merge_file = model_dir / "merge.json"
        if merge_file.exists():
            data = json.loads(merge_file.read_text(encoding="utf-8"))
            records += [costing.RunRecord.from_dict(r) for r in data["records"]]
        metrics_file = model_dir / "metrics.json"
        if metrics_file.exists():
            metrics[metas[0].get("label") or model_dir.name] = MetricsReport.from_dict(json.loads(metrics_file.read_text(encoding="utf-8")))
    return records, metrics


def cmd_report(cfg: RunConfig) -> dict:
    cfg.validate()
    run_dir = cfg.run_dir
    records, metrics = collect_run(run_dir) if run_dir.is_dir() else ([], {})
    prices = costing.load_pricing(cfg.pricing_path())
    rows = costing.breakdown(records, prices) if records else []
    if cfg.include_human:
        rows = [*costing.load_baselines(cfg.pricing_path()), *rows]
    docs = {}
    for fmt, ext in (("markdown", "md"), ("csv", "csv"), ("json", "json")):
        docs[ext] = costing.emit_report(rows, metrics, fmt, cfg.n_extrapolate)
        write_text(run_dir / f"report.{ext}", docs[ext])
    return docs


def cmd_run(cfg: RunConfig) -> dict:
    cmd_generate(cfg)
    cmd_merge(cfg)
    cmd_eval(cfg)
    return cmd_report(cfg)
