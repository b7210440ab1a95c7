import operator
from dataclasses import dataclass, field
from typing import Annotated, List, Optional, TypedDict

import numpy as np
from langgraph.graph import END, StateGraph

from src.core.belief import (
    init_belief, nota_triggered, pinned_junctions, regenerate, snapshot, true_map_mass, update_many,
)
from src.core.decision import build_cost_table, build_proposal, choose_path, simulated_minutes
from src.core.explorer import EdgeKnowledge, attempt, plan_route, random_step, step_bound, traversal_reading
from src.core.hierarchy import AbstractionLevel, abstract_cost, abstract_map, active_level, build_hierarchy
from src.core.sensing import scan, select_detector
from src.core.world_model import map_from_document, map_to_document, sample_map, shortest_route
from src.models.models import (
    AttemptRecord, BeliefRecord, BeliefState, CorridorLayout, DecisionRecord, EdgeStatus, EpisodeLog,
    EpisodeMetrics, HierarchyRecord, Intersection, NavigationMethod, PathChoice, ReadingRecord, RegenerationRecord,
    Scenario, TaskRecord, TaskSpec, edge_between,
)
from src.utils.custom_logging import get_logger
from src.utils.errors import AllDetectorsUsed, ConfigError, Unreachable

logger = get_logger(__name__)

WORLD_ATTEMPTS = 1000


def _round(value: float) -> float:
    return round(float(value), 12)


def sample_world(scenario: Scenario, rng: np.random.Generator) -> CorridorLayout:
    """The embedded world, or a sampled one in which every task endpoint is an LDP."""
    if scenario.world is not None:
        try:
            return map_from_document(scenario.world)
        except ValueError as e:
            raise ConfigError(f"scenario world is invalid: {e}") from e
    endpoints = {p for t in scenario.tasks for p in (t.origin, t.destination)}
    if scenario.start is not None:
        endpoints.add(scenario.start)
    world = sample_map(scenario.grid, rng)
    for _ in range(WORLD_ATTEMPTS):
        if all(world.is_ldp(p) for p in endpoints):
            return world
        world = sample_map(scenario.grid, rng)
    logger.warning("no sampled world makes every task endpoint an LDP; using the last sample")
    return world


@dataclass
class EpisodeContext:
    """Mutable episode bookkeeping shared by the graph nodes."""
    scenario: Scenario
    rng: np.random.Generator
    world: CorridorLayout
    belief: BeliefState
    knowledge: EdgeKnowledge
    position: Intersection
    queue: List[TaskSpec]
    hierarchy: List[AbstractionLevel] = field(default_factory=list)
    current: Optional[TaskSpec] = None
    route: List[Intersection] = field(default_factory=list)
    scanned: set = field(default_factory=set)
    step: int = 0
    level: Optional[int] = None
    task_attempts: int = 0
    traversals: int = 0
    readings: int = 0
    regenerations: int = 0
    tasks_drawn: int = 0
    tasks_completed: int = 0


class EpisodeState(TypedDict):
    records: Annotated[list, operator.add]
    context: EpisodeContext
    next_node: str


class EpisodeRunner:
    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        self._build_graph()

    def _build_graph(self):
        """Supervisor graph: the supervisor routes to sense, decide or travel, all of which report back."""
        self.graph = StateGraph(EpisodeState)

        self.graph.add_node("supervisor", self._supervisor_node)
        self.graph.add_node("sense", self._sense_node)
        self.graph.add_node("decide", self._decide_node)
        self.graph.add_node("travel", self._travel_node)

        self.graph.add_conditional_edges(
            "supervisor",
            self._supervisor_decision,
            {
                "sense": "sense",
                "decide": "decide",
                "travel": "travel",
                "END": END,
            },
        )

        self.graph.add_edge("sense", "supervisor")
        self.graph.add_edge("decide", "supervisor")
        self.graph.add_edge("travel", "supervisor")

        self.graph.set_entry_point("supervisor")
        self.runnable = self.graph.compile()

    # ---------- Setup ----------

    def _draw_tasks(self, rng: np.random.Generator) -> List[TaskSpec]:
        tasks = self.scenario.tasks
        if not tasks or self.scenario.draws == 0:
            return []
        counts = np.array([t.expected_count for t in tasks], dtype=float)
        p = counts / counts.sum() if counts.sum() > 0 else np.full(len(tasks), 1.0 / len(tasks))
        picks = rng.choice(len(tasks), size=self.scenario.draws, p=p)
        return [tasks[int(i)] for i in picks]

    def _context(self) -> EpisodeContext:
        scenario = self.scenario
        rng = np.random.default_rng(scenario.seed)
        world = sample_world(scenario, rng)
        belief = init_belief(scenario.grid, scenario.hypotheses, rng, scenario.noise, scenario.structure)
        queue = self._draw_tasks(rng)
        if scenario.start is not None:
            position = scenario.start
        elif queue:
            position = queue[0].origin
        else:
            ldps = world.ldps()
            position = ldps[0] if ldps else (0, 0)
        return EpisodeContext(
            scenario=scenario,
            rng=rng,
            world=world,
            belief=belief,
            knowledge=EdgeKnowledge(grid=scenario.grid),
            position=position,
            queue=queue,
            hierarchy=build_hierarchy(scenario.grid) if scenario.hierarchy.enabled else [],
        )

    def run(self) -> EpisodeLog:
        """Play the scenario's task draws and return the full episode log."""
        ctx = self._context()
        logger.info(
            f"episode {self.scenario.name}: seed {self.scenario.seed}, {len(ctx.queue)} tasks, "
            f"K={self.scenario.hypotheses}, world with {ctx.world.edge_total()} corridors"
        )
        initial_state = {"records": [], "context": ctx, "next_node": ""}
        grid = self.scenario.grid
        limit = 8 * (len(ctx.queue) + 1) * (step_bound(grid) + grid.nx * grid.ny + 10)
        result = self.runnable.invoke(initial_state, config={"recursion_limit": limit})
        ctx = result["context"]
        metrics = EpisodeMetrics(
            total_traversal_cost=ctx.traversals,
            tasks_drawn=ctx.tasks_drawn,
            tasks_completed=ctx.tasks_completed,
            readings=ctx.readings,
            regenerations=ctx.regenerations,
            posterior_true_mass=_round(true_map_mass(ctx.belief, ctx.world)),
            simulated_minutes=_round(simulated_minutes(ctx.traversals, ctx.readings, self.scenario.time)),
        )
        logger.info(
            f"episode {self.scenario.name} done: {ctx.tasks_completed}/{ctx.tasks_drawn} tasks, "
            f"cost {ctx.traversals}, true-map mass {metrics.posterior_true_mass:.4f}"
        )
        return EpisodeLog(
            scenario=self.scenario.name,
            seed=self.scenario.seed,
            world=map_to_document(ctx.world),
            records=result["records"],
            metrics=metrics,
        )

    # ---------- Routing ----------

    def _supervisor_decision(self, state: EpisodeState) -> str:
        return state["next_node"]

    def _supervisor_node(self, state: EpisodeState):
        """Pick up, finish or abandon tasks, then route to the next worker."""
        ctx = state["context"]
        records = []
        while True:
            if ctx.current is None:
                if not ctx.queue:
                    return {"next_node": "END", "records": records, "context": ctx}
                task = ctx.queue.pop(0)
                ctx.current = TaskSpec(
                    id=task.id, origin=ctx.position, destination=task.destination,
                    expected_count=task.expected_count,
                )
                ctx.tasks_drawn += 1
                ctx.task_attempts = 0
                ctx.route = []
                records.append(self._task_record(ctx, "started"))
                continue
            if ctx.world.is_ldp(ctx.position) and ctx.position not in ctx.scanned:
                return {"next_node": "sense", "records": records, "context": ctx}
            if ctx.position == ctx.current.destination:
                ctx.tasks_completed += 1
                records.append(self._task_record(ctx, "completed"))
                ctx.current = None
                continue
            if ctx.task_attempts >= step_bound(self.scenario.grid):
                logger.warning(f"task {ctx.current.id} hit the step bound")
                records.append(self._task_record(ctx, "step_bound_exceeded"))
                ctx.current = None
                continue
            if ctx.route:
                return {"next_node": "travel", "records": records, "context": ctx}
            return {"next_node": "decide", "records": records, "context": ctx}

    def _task_record(self, ctx: EpisodeContext, status: str) -> TaskRecord:
        return TaskRecord(
            step=ctx.step,
            task_id=ctx.current.id,
            origin=ctx.current.origin,
            destination=ctx.current.destination,
            status=status,
        )

    # ---------- Workers ----------

    def _belief_record(self, ctx: EpisodeContext) -> BeliefRecord:
        return BeliefRecord(step=ctx.step, entries=[(i, _round(p)) for i, p in snapshot(ctx.belief)])

    def _maybe_regenerate(self, ctx: EpisodeContext) -> list:
        if not nota_triggered(ctx.belief):
            return []
        ctx.belief = regenerate(ctx.belief, ctx.rng)
        ctx.regenerations += 1
        logger.info(f"NOTA triggered at step {ctx.step}: regenerated {ctx.belief.k} maps")
        return [
            RegenerationRecord(
                step=ctx.step,
                hypothesis_count=ctx.belief.k,
                exhaustive=ctx.belief.hypotheses.exhaustive,
                pinned=len(pinned_junctions(ctx.belief.grid, ctx.belief.evidence)),
            ),
            self._belief_record(ctx),
        ]

    def _sense_node(self, state: EpisodeState):
        """Full detector scan of a newly reached LDP."""
        ctx = state["context"]
        readings = scan(ctx.world, ctx.position, self.scenario.noise, ctx.rng, ctx.step)
        ctx.scanned.add(ctx.position)
        ctx.readings += len(readings)
        ctx.belief = update_many(ctx.belief, readings)
        records = [
            ReadingRecord(
                step=ctx.step, x=r.location[0], y=r.location[1],
                feature=r.detector.feature, wedge=r.detector.wedge, result=r.result,
            )
            for r in readings
        ]
        records.append(self._belief_record(ctx))
        records.extend(self._maybe_regenerate(ctx))
        return {"records": records, "context": ctx}

    def _hierarchy_step(self, ctx: EpisodeContext) -> Optional[list]:
        """Above the base level the configured method steps without the decision network."""
        level, estimate = active_level(ctx.hierarchy, ctx.belief, self.scenario.hierarchy.threshold)
        descended = ctx.level is not None and level < ctx.level
        if ctx.level != level:
            logger.info(f"active abstraction level {level} (estimate {estimate:g})")
        ctx.level = level
        cost = None
        if level > 0:
            plan = ctx.belief.hypotheses.maps[int(np.argmax(ctx.belief.probs[:-1]))]
            try:
                cost = _round(abstract_cost(ctx.current, abstract_map(ctx.hierarchy[level], plan)))
            except Unreachable:
                cost = None
        record = HierarchyRecord(
            step=ctx.step, active_level=level, consistent_estimate=_round(estimate),
            descended=descended, abstract_cost=cost,
        )
        if level == 0:
            return [record] if descended else None
        if self.scenario.method == NavigationMethod.RANDOM_WALK:
            edge = random_step(ctx.position, ctx.knowledge, ctx.rng)
            if edge is None:
                return [record] + self._blocked(ctx)
            a, b = edge.endpoints()
            ctx.route = [b if a == ctx.position else a]
            return [record]
        route = self._method_route(ctx)
        if route is None:
            return [record] + self._blocked(ctx)
        ctx.route = route[1:2]
        return [record]

    def _method_route(self, ctx: EpisodeContext) -> Optional[List[Intersection]]:
        return plan_route(self.scenario.method, ctx.position, ctx.current.destination, ctx.knowledge, ctx.belief.hypotheses)

    def _blocked(self, ctx: EpisodeContext) -> list:
        logger.info(f"task {ctx.current.id} blocked at {ctx.position}")
        record = self._task_record(ctx, "blocked")
        ctx.current = None
        ctx.route = []
        return [record]

    def _proposal_detectors(self, ctx: EpisodeContext, frontier: Intersection):
        chosen = []
        for _ in range(self.scenario.proposal_detectors):
            try:
                chosen.append(select_detector(ctx.belief, frontier, exclude=chosen))
            except AllDetectorsUsed:
                break
        return chosen

    def _decide_node(self, state: EpisodeState):
        """Choose between the known route and one exploratory step."""
        ctx = state["context"]
        records = []
        if ctx.hierarchy:
            hierarchy_records = self._hierarchy_step(ctx)
            if hierarchy_records is not None and ctx.level:
                return {"records": hierarchy_records, "context": ctx}
            records.extend(hierarchy_records or [])

        task = ctx.current
        plan_map = ctx.knowledge.known_map()
        known_route = shortest_route(plan_map, ctx.position, task.destination)
        unknown_route = self._method_route(ctx)
        if known_route is None and unknown_route is None:
            records.extend(self._blocked(ctx))
            return {"records": records, "context": ctx}
        frontier_edge = None
        if unknown_route is not None:
            for a, b in zip(unknown_route, unknown_route[1:]):
                if ctx.knowledge.status(edge_between(a, b)) == EdgeStatus.UNKNOWN:
                    frontier_edge = (a, b)
                    break
        if frontier_edge is None:
            # nothing left to explore on the candidate route
            ctx.route = list((known_route or unknown_route)[1:])
            return {"records": records, "context": ctx}

        frontier = frontier_edge[1]
        detectors = self._proposal_detectors(ctx, frontier)
        proposal = build_proposal(ctx.belief, frontier, detectors, unknown_route)
        table = build_cost_table(self.scenario.tasks, ctx.belief.hypotheses, plan_map)
        trace = choose_path(task, plan_map, ctx.belief, proposal, table)
        choice = trace.choice
        if known_route is None:
            choice = PathChoice.UNKNOWN
        records.append(DecisionRecord(
            step=ctx.step, ev_pk=_round(trace.ev_pk), ev_pu=_round(trace.ev_pu),
            choice=choice, frontier=frontier,
        ))
        if choice == PathChoice.KNOWN:
            ctx.route = list(known_route[1:])
        else:
            ctx.route = list(unknown_route[1:2])
        return {"records": records, "context": ctx}

    def _travel_node(self, state: EpisodeState):
        """Attempt the next edge of the committed route."""
        ctx = state["context"]
        target = ctx.route.pop(0)
        edge = edge_between(ctx.position, target)
        ctx.position, attempt_record, ctx.knowledge, ctx.belief = attempt(
            edge, ctx.position, ctx.world, ctx.knowledge, ctx.belief, ctx.step
        )
        ctx.step += 1
        ctx.traversals += 1
        ctx.task_attempts += 1
        if not attempt_record.success:
            ctx.route = []
        reading = traversal_reading(
            attempt_record.origin, attempt_record.target, attempt_record.success, attempt_record.step
        )
        records = [
            attempt_record,
            ReadingRecord(
                step=attempt_record.step, x=reading.location[0], y=reading.location[1],
                feature=reading.detector.feature, wedge=reading.detector.wedge,
                result=reading.result, source=reading.source,
            ),
        ]
        records.extend(self._maybe_regenerate(ctx))
        return {"records": records, "context": ctx}


def run_episode(scenario: Scenario) -> EpisodeLog:
    return EpisodeRunner(scenario).run()
