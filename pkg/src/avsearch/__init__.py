"""Active object search on known grid maps: an online Monte-Carlo POMDP
planner drives exploration, a shortest-path docking phase with re-planning
drives the final approach, and a seeded harness evaluates both against
baselines."""

from .docking import (
    DockingPlan,
    NoVantagePointError,
    UnreachableError,
    approach_step,
    destination_pose,
    ground_truth_destinations,
    make_plan,
    shortest_path,
)
from .harness import (
    EpisodeConfig,
    EpisodeResult,
    MetricsSummary,
    RunMatrix,
    World,
    compute_metrics,
    format_summary,
    random_walk_policy,
    run_bench,
    run_episode,
    solver_vs_oracle,
    sweep_degradation,
)
from .oracle import OracleTooLargeError, expectimax_oracle
from .perception import Detection, DetectorProfile, observe, planner_observation
from .pomcp import (
    Belief,
    BeliefEmptyError,
    GenerativeModel,
    PomdpConfig,
    SearchNode,
    plan,
    prune_tree,
    rollout,
    simulate,
    ucb1_select,
    update_belief,
)
from .scenario import (
    Scenario,
    ScenarioError,
    load_scenario,
    parse_scenario,
    save_scenario,
    serialize_scenario,
)
from .generator import GenerationError, GeneratorSpec, generate_scenario, spec_for
from .world import (
    Action,
    AvsModel,
    AvsState,
    CandidateSet,
    Cell,
    DomainError,
    GridMap,
    ObjectLayout,
    Pose,
    PoseGraph,
    RewardConfig,
    VisConfig,
    avs_step,
    build_pose_graph,
    build_visibility_matrix,
    legal_actions,
    sample_layout,
    visibility,
)

__version__ = "0.1.0"
