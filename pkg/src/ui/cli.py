# src/ui/cli.py
import argparse
import os
import sys
from typing import List, Optional

import numpy as np
from pydantic import ValidationError

from src.core.belief import init_belief, map_id
from src.core.inference import posterior_over_maps
from src.core.world_model import map_to_document, sample_map
from src.models.models import GridSpec, NavigationMethod, PosteriorDocument, Scenario, TaskSpec
from src.orchestrator.experiments import EXPLORATION_LENGTHS, HYPOTHESIS_SIZES, clique_cost_sweep, compare_methods
from src.orchestrator.orchestrator import run_episode
from src.utils import storage
from src.utils.config import get_settings
from src.utils.custom_logging import get_logger
from src.utils.errors import ConfigError, ScoutError

logger = get_logger(__name__)


def _int_list(text: str) -> List[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from e


def _default_out(name: str) -> str:
    return os.path.join(get_settings().data_dir, name)


def _add_grid_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--nx", type=int, default=None, help="vertical grid lines")
    p.add_argument("--ny", type=int, default=None, help="horizontal grid lines")


def _add_scenario_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--scenario", help="scenario JSON file")
    _add_grid_flags(p)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--hypotheses", "-k", type=int, default=None, help="hypothesis count K")
    p.add_argument("--false-negative", type=float, default=None)
    p.add_argument("--false-positive", type=float, default=None)
    p.add_argument("--structure", choices=["singly", "multiply"], default=None)
    p.add_argument("--method", choices=[m.value for m in NavigationMethod], default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="corridor-scout",
        description="Decision-theoretic exploration of corridor grids.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="sample a true world or a scenario")
    g.add_argument("kind", choices=["world", "scenario"])
    _add_grid_flags(g)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--tasks", type=int, default=3, help="task count for generated scenarios")
    g.add_argument("--hypotheses", "-k", type=int, default=10)
    g.add_argument("--embed-world", action="store_true", help="store the sampled world in the scenario")
    g.add_argument("--out", "-o")

    s = sub.add_parser("simulate", help="run one episode and write its log")
    _add_scenario_flags(s)
    s.add_argument("--hierarchy", action="store_true", help="enable the abstraction hierarchy")
    s.add_argument("--threshold", type=float, default=None, help="descend threshold")
    s.add_argument("--out", "-o")

    b = sub.add_parser("benchmark", help="largest clique cost sweep over |H| and exploration length")
    _add_grid_flags(b)
    b.add_argument("--sizes", type=_int_list, default=list(HYPOTHESIS_SIZES))
    b.add_argument("--lengths", type=_int_list, default=list(EXPLORATION_LENGTHS))
    b.add_argument("--runs", type=int, default=10)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--measure-time", action="store_true", help="also time one propagation per cell")
    b.add_argument("--out", "-o")

    c = sub.add_parser("compare", help="compare navigation methods")
    _add_scenario_flags(c)
    c.add_argument("--methods", default=",".join(m.value for m in NavigationMethod))
    c.add_argument("--trials", type=int, default=10)
    c.add_argument("--rollouts", type=int, default=20)
    c.add_argument("--out", "-o")

    i = sub.add_parser("infer", help="posterior over hypotheses for an evidence file")
    _add_scenario_flags(i)
    i.add_argument("--evidence", required=True, help="evidence JSON file")
    i.add_argument("--out", "-o")
    return parser

# ---------- Scenario assembly ----------

def scenario_from_args(args: argparse.Namespace) -> Scenario:
    """Scenario file (or a bare grid) with command-line overrides applied."""
    if args.scenario:
        data = storage.load_scenario(args.scenario).model_dump(mode="json")
    else:
        if args.nx is None or args.ny is None:
            raise ConfigError("either --scenario or both --nx and --ny are required")
        data = {"grid": {"nx": args.nx, "ny": args.ny}}
    if args.nx is not None and args.ny is not None:
        data["grid"] = {"nx": args.nx, "ny": args.ny}
    if args.seed is not None:
        data["seed"] = args.seed
    if args.hypotheses is not None:
        data["hypotheses"] = args.hypotheses
    noise = dict(data.get("noise") or {})
    if args.false_negative is not None:
        noise["false_negative"] = args.false_negative
    if args.false_positive is not None:
        noise["false_positive"] = args.false_positive
    if noise:
        data["noise"] = noise
    if args.structure is not None:
        data["structure"] = args.structure
    if args.method is not None:
        data["method"] = args.method
    if getattr(args, "hierarchy", False) or getattr(args, "threshold", None) is not None:
        hierarchy = dict(data.get("hierarchy") or {})
        hierarchy["enabled"] = True
        if args.threshold is not None:
            hierarchy["threshold"] = args.threshold
        data["hierarchy"] = hierarchy
    try:
        return Scenario.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"invalid scenario: {e}") from e


def _grid(args: argparse.Namespace, default: int) -> GridSpec:
    try:
        return GridSpec(nx=args.nx or default, ny=args.ny or default)
    except ValidationError as e:
        raise ConfigError(f"invalid grid: {e}") from e

# ---------- Commands ----------

def cmd_generate(args: argparse.Namespace) -> str:
    grid = _grid(args, 3)
    rng = np.random.default_rng(args.seed)
    world = sample_map(grid, rng)
    if args.kind == "world":
        return storage.save_map(map_to_document(world), args.out or _default_out("world.json"))
    ldps = world.ldps()
    if len(ldps) < 2:
        raise ConfigError("the sampled world has fewer than two LDPs; try another seed")
    tasks = []
    for t in range(args.tasks):
        a, b = rng.choice(len(ldps), size=2, replace=False)
        tasks.append(TaskSpec(id=f"T{t}", origin=ldps[int(a)], destination=ldps[int(b)]))
    scenario = Scenario(
        name=f"generated-{grid.nx}x{grid.ny}-{args.seed}",
        grid=grid,
        seed=args.seed,
        hypotheses=args.hypotheses,
        tasks=tasks,
        world=map_to_document(world) if args.embed_world else None,
    )
    return storage.save_scenario(scenario, args.out or _default_out("scenario.json"))


def cmd_simulate(args: argparse.Namespace) -> str:
    scenario = scenario_from_args(args)
    log = run_episode(scenario)
    return storage.save_episode_log(log, args.out or _default_out(f"episode_{scenario.seed}.json"))


def cmd_benchmark(args: argparse.Namespace) -> str:
    rows = clique_cost_sweep(
        grid=_grid(args, 4),
        hypothesis_sizes=args.sizes,
        exploration_lengths=args.lengths,
        runs=args.runs,
        seed=args.seed,
        measure_time=args.measure_time,
    )
    return storage.save_benchmark_csv(rows, args.out or _default_out("benchmark.csv"))


def cmd_compare(args: argparse.Namespace) -> str:
    scenario = scenario_from_args(args)
    try:
        methods = [NavigationMethod(m.strip()) for m in args.methods.split(",") if m.strip()]
    except ValueError as e:
        raise ConfigError(f"unknown navigation method: {e}") from e
    rows = compare_methods(scenario, methods, args.trials, args.rollouts)
    return storage.save_compare_csv(rows, args.out or _default_out("compare.csv"))


def cmd_infer(args: argparse.Namespace) -> str:
    scenario = scenario_from_args(args)
    readings = storage.load_evidence(args.evidence)
    outside = [r.location for r in readings if not scenario.grid.contains(r.location)]
    if outside:
        raise ConfigError(f"evidence locations {outside} lie outside the grid")
    belief = init_belief(scenario.grid, scenario.hypotheses, scenario.seed, scenario.noise, scenario.structure)
    belief = belief.model_copy(update={"evidence": tuple(readings)})
    posterior = posterior_over_maps(belief)
    entries = [(map_id(i), round(float(p), 12)) for i, p in enumerate(posterior[:-1])]
    entries.append(("NOTA", round(float(posterior[-1]), 12)))
    doc = PosteriorDocument(
        structure=scenario.structure,
        entries=entries,
        maps={map_id(i): map_to_document(m) for i, m in enumerate(belief.hypotheses.maps)},
    )
    return storage.save_posterior(doc, args.out or _default_out("posterior.json"))


COMMANDS = {
    "generate": cmd_generate,
    "simulate": cmd_simulate,
    "benchmark": cmd_benchmark,
    "compare": cmd_compare,
    "infer": cmd_infer,
}


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        path = COMMANDS[args.command](args)
    except ScoutError as e:
        logger.error(f"{args.command} failed: {e}")
        return 2
    print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
