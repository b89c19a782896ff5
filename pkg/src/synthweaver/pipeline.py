"""Stage drivers: wire config, oracle, environments, and the run store.

Each function runs one pipeline stage over a run directory and leaves the
store in a resumable state. Worker counts above one parallelize across
independent units (sites, tasks, trajectories) with a thread pool; one
worker runs everything inline so record order is byte-reproducible.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from decimal import Decimal
from pathlib import Path
from typing import Any, Callable, Iterable, TypeVar

from . import runstore as rs
from .actions import render_action
from .collector import Collector
from .config import RunConfig, SiteSpec, api_key_for
from .dataset import corpus_stats, export_dataset, ExportResult
from .environment import SimulatorSession, load_site_graph
from .errors import ConfigError, SchemaViolation
from .explorer import Explorer, ExplorationResult, judge_task_diversity
from .model import (
    Task,
    Trajectory,
    observation_to_dict,
    task_from_dict,
    task_to_dict,
    trajectory_from_dict,
    trajectory_to_dict,
)
from .oracle import (
    CostLedger,
    HttpTransport,
    MockScript,
    MockTransport,
    OracleClient,
    Pricing,
    RetryPolicy,
    TemplateName,
    render,
)
from .refiner import Refiner, summarize_trajectory
from .runstore import RunStore

T = TypeVar("T")
U = TypeVar("U")


def make_oracle(config: RunConfig, store: RunStore) -> tuple[OracleClient, CostLedger]:
    settings = config.oracle
    snapshot = store.read_json(rs.LEDGER)
    if snapshot is not None:
        ledger = CostLedger.from_snapshot(snapshot)
    else:
        budget = settings.budget_usd
        ledger = CostLedger(budget_usd=None if budget is None else Decimal(budget))
    if settings.backend == "mock":
        transport: Any = MockTransport(MockScript.load(settings.mock_script))
    else:
        transport = HttpTransport(
            settings.endpoint_url,
            settings.model,
            api_key=api_key_for(settings),
            temperature=settings.temperature,
            top_p=settings.top_p,
            max_tokens=settings.max_tokens,
            timeout_s=settings.timeout_s,
        )
    pricing = Pricing(
        prompt_per_token=Decimal(settings.prompt_cost_per_token),
        completion_per_token=Decimal(settings.completion_cost_per_token),
    )
    policy = RetryPolicy(
        transport_retries=settings.transport_retries,
        reparse_attempts=settings.reparse_attempts,
        backoff_base_s=settings.backoff_base_s,
    )
    client = OracleClient(transport, ledger, pricing=pricing, policy=policy)
    return client, ledger


def make_session_factory(site: SiteSpec, config: RunConfig) -> Callable[[], Any]:
    if site.graph:
        graph = load_site_graph(site.graph)
        return lambda: SimulatorSession(graph)
    if site.start_url:
        from .browser import BrowserConfig, BrowserSession

        if not config.browser.endpoint_url:
            raise ConfigError(
                f"site {site.name!r} uses start_url but browser.endpoint_url is unset"
            )
        browser_config = BrowserConfig(
            endpoint_url=config.browser.endpoint_url,
            viewport=(config.browser.viewport_width, config.browser.viewport_height),
            nav_timeout_ms=config.browser.nav_timeout_ms,
            screenshot_dir=config.browser.screenshot_dir,
            start_url=site.start_url,
        )
        return lambda: BrowserSession(browser_config)
    raise ConfigError(f"site {site.name!r} has neither graph nor start_url")


def _map_jobs(
    workers: int, jobs: list[T], fn: Callable[[T], U]
) -> list[U]:
    if workers <= 1:
        return [fn(job) for job in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs))


# ======================================================================
# explore
# ======================================================================

def run_explore(config: RunConfig, store: RunStore) -> dict[str, int]:
    client, ledger = make_oracle(config, store)
    state = store.load_state()
    done = set(state.get("explored_sites", []))
    todo = [site for site in config.sites if site.name not in done]

    # A crash mid-site may have left partial records; exploration is
    # all-or-nothing per site, so records for unfinished sites are wiped.
    todo_names = {site.name for site in todo}
    for name in (rs.TASKS, rs.TRIPLETS):
        records = list(store.read_records(name))
        kept = [r for r in records if r.get("site") not in todo_names]
        if len(kept) != len(records):
            store.rewrite_records(name, kept)

    explorer = Explorer(client, config, on_event=store.event)

    def explore_one(site: SiteSpec) -> ExplorationResult:
        factory = make_session_factory(site, config)
        return explorer.explore_site(site, factory())

    results = _map_jobs(config.workers, todo, explore_one)
    counts = {"sites": 0, "tasks": 0, "triplets": 0}
    for site, result in zip(todo, results):
        task_rows = [{"site": site.name, **task_to_dict(t)} for t in result.tasks]
        triplet_rows = [
            {
                "id": record.id,
                "site": record.site,
                "category": record.category,
                "task_id": record.task_id,
                "before": observation_to_dict(record.triplet.before),
                "action": render_action(record.triplet.action),
                "after": observation_to_dict(record.triplet.after),
            }
            for record in result.triplets
        ]
        store.append_records(rs.TASKS, task_rows)
        store.append_records(rs.TRIPLETS, triplet_rows)
        state = store.load_state()
        state.setdefault("explored_sites", []).append(site.name)
        store.save_state(state)
        counts["sites"] += 1
        counts["tasks"] += len(task_rows)
        counts["triplets"] += len(triplet_rows)
    store.write_json(rs.LEDGER, ledger.snapshot())
    store.mark_stage("explore")
    return counts


# ======================================================================
# collect
# ======================================================================

def _tasks_by_site(store: RunStore) -> dict[str, list[Task]]:
    grouped: dict[str, list[Task]] = {}
    for record in store.read_records(rs.TASKS):
        site = record.get("site", "")
        payload = {k: v for k, v in record.items() if k != "site"}
        grouped.setdefault(site, []).append(task_from_dict(payload))
    return grouped


def run_collect(config: RunConfig, store: RunStore) -> dict[str, int]:
    client, ledger = make_oracle(config, store)
    collector = Collector(client, config, on_event=store.event)
    grouped = _tasks_by_site(store)
    existing = {
        record["task"]["id"] for record in store.read_records(rs.TRAJECTORIES_RAW)
    }
    sites = {site.name: site for site in config.sites}
    jobs: list[tuple[SiteSpec, Task, Callable[[], Any]]] = []
    for name, tasks in grouped.items():
        site = sites.get(name)
        if site is None:
            store.event("collect.unknown_site", {"site": name, "n_tasks": len(tasks)})
            continue
        factory = make_session_factory(site, config)
        for task in tasks:
            if task.id not in existing:
                jobs.append((site, task, factory))

    def collect_one(job: tuple[SiteSpec, Task, Callable[[], Any]]) -> int:
        site, task, factory = job
        result = collector.collect_one(task, factory, site=site.name)
        if isinstance(result, Trajectory):
            store.append_record(
                rs.TRAJECTORIES_RAW, {"site": site.name, **trajectory_to_dict(result)}
            )
            return 1
        return 0

    collected = sum(_map_jobs(config.workers, jobs, collect_one))
    store.write_json(rs.LEDGER, ledger.snapshot())
    store.mark_stage("collect")
    return {"tasks": len(jobs), "trajectories": collected}


# ======================================================================
# refine
# ======================================================================

def _raw_trajectories(store: RunStore) -> list[tuple[str, Trajectory]]:
    out = []
    for record in store.read_records(rs.TRAJECTORIES_RAW):
        site = record.get("site", "")
        payload = {k: v for k, v in record.items() if k != "site"}
        out.append((site, trajectory_from_dict(payload)))
    return out


def _refined_trajectories(store: RunStore) -> list[tuple[str, Trajectory]]:
    out = []
    for record in store.read_records(rs.TRAJECTORIES_REFINED):
        site = record.get("site", "")
        payload = {
            k: v for k, v in record.items() if k not in ("site", "decision", "score")
        }
        out.append((site, trajectory_from_dict(payload)))
    return out


def run_refine(config: RunConfig, store: RunStore) -> dict[str, int]:
    client, ledger = make_oracle(config, store)
    refiner = Refiner(client, config, on_event=store.event)
    raw = _raw_trajectories(store)
    done = {r["task"]["id"] for r in store.read_records(rs.TRAJECTORIES_REFINED)}
    done |= {r["trajectory_id"] for r in store.read_records(rs.DROPS)}
    jobs = [(site, t) for site, t in raw if t.id not in done]

    def refine_one(job: tuple[str, Trajectory]) -> str:
        site, trajectory = job
        outcome = refiner.refine_trajectory(trajectory, site=site)
        if outcome.refined is not None:
            store.append_record(
                rs.TRAJECTORIES_REFINED,
                {
                    "site": site,
                    "decision": outcome.decision,
                    "score": outcome.score,
                    **trajectory_to_dict(outcome.refined),
                },
            )
        else:
            store.append_record(
                rs.DROPS,
                {
                    "site": site,
                    "trajectory_id": outcome.trajectory_id,
                    "decision": "drop",
                    "score": outcome.score,
                    "reason": outcome.drop_reason,
                },
            )
        return outcome.decision

    decisions = _map_jobs(config.workers, jobs, refine_one)
    store.write_json(rs.LEDGER, ledger.snapshot())
    store.mark_stage("refine")
    return {
        "trajectories": len(jobs),
        "kept": sum(1 for d in decisions if d == "keep"),
        "refined": sum(1 for d in decisions if d == "refine"),
        "dropped": sum(1 for d in decisions if d == "drop"),
    }


# ======================================================================
# export and stats
# ======================================================================

def run_export(config: RunConfig, store: RunStore, *, window: int | None = None) -> ExportResult:
    refined = _refined_trajectories(store)
    result = export_dataset(
        refined,
        store.dataset_dir(),
        window=config.context_window if window is None else window,
    )
    manifest = store.read_json(rs.MANIFEST, default={})
    manifest.update(
        {
            "seed": config.seed,
            "sites": [site.name for site in config.sites],
            "dataset": result.manifest,
        }
    )
    store.write_json(rs.MANIFEST, manifest)
    store.mark_stage("export")
    return result


def run_stats(
    config: RunConfig,
    store: RunStore,
    *,
    judge_quality: bool = False,
    with_diversity: bool = True,
) -> dict[str, Any]:
    raw = _raw_trajectories(store)
    refined = _refined_trajectories(store)
    decisions = [
        {"site": r.get("site"), "decision": r.get("decision"), "score": r.get("score")}
        for r in store.read_records(rs.TRAJECTORIES_REFINED)
    ]
    decisions += [
        {"site": r.get("site"), "decision": "drop", "score": r.get("score")}
        for r in store.read_records(rs.DROPS)
    ]
    stats = corpus_stats(raw, refined, decisions)
    ledger_snapshot = store.read_json(rs.LEDGER)
    if ledger_snapshot is not None:
        stats["oracle"] = ledger_snapshot

    needs_oracle = with_diversity or judge_quality
    if needs_oracle:
        client, ledger = make_oracle(config, store)
    if with_diversity:
        tasks_by_site = _tasks_by_site(store)
        diversity: dict[str, Any] = {}
        for name in sorted(tasks_by_site):
            tasks = tasks_by_site[name]
            if not tasks:
                continue
            reply = judge_task_diversity(
                client, tasks, site=name, sample_size=config.diversity_sample_size
            )
            diversity[name] = {
                "score": reply.score,
                "subscores": dict(reply.subscores),
                "n_sampled": min(len(tasks), config.diversity_sample_size),
            }
        stats["diversity"] = diversity
    if judge_quality:
        scores_by_site: dict[str, list[int]] = {}
        for site, trajectory in refined:
            prompt = render(
                TemplateName.JUDGE_QUALITY,
                {
                    "trajectory": summarize_trajectory(trajectory),
                    "high_level_task": trajectory.task.text,
                },
            )
            try:
                reply = client.call(prompt, site=site, stage="stats")
            except SchemaViolation:
                continue
            scores_by_site.setdefault(site, []).append(reply.parsed.score)
        all_scores = [s for scores in scores_by_site.values() for s in scores]
        stats["quality"] = {
            "overall": {
                "mean_score": round(sum(all_scores) / len(all_scores), 2)
                if all_scores
                else 0.0,
                "n_judged": len(all_scores),
            },
            "by_site": {
                site: {
                    "mean_score": round(sum(scores) / len(scores), 2),
                    "n_judged": len(scores),
                }
                for site, scores in sorted(scores_by_site.items())
            },
        }
    if needs_oracle:
        store.write_json(rs.LEDGER, ledger.snapshot())
        stats["oracle"] = ledger.snapshot()
    store.write_json(rs.STATS, stats)
    store.mark_stage("stats")
    return stats
