"""Particle swarm trajectory planning in the control space of SE(2) paths."""

from .control_space import (
    Control,
    ControlSequence,
    Pose,
    apply_control,
    interpolate_controls,
    inverse_control,
    rollout,
)
from .engine import Swarm, SwarmConfig, SwarmStats, initialize_swarm, optimize
from .environment import (
    DrivingMode,
    DynamicObstacle,
    EnvironmentSnapshot,
    OccupancyGrid,
    StopLine,
    extract_obstacle_polygons,
)
from .errors import NoValidParticle, ParseError, PlannerError, PlanningFailure, ValidationError
from .evaluation import (
    CostBreakdown,
    CostParameters,
    CostWeights,
    Limits,
    evaluate_constraints,
    evaluate_costs,
)
from .geometry import FootprintModel, Polygon
from .replanner import PlanResult, plan_once, run_simulation
from .scenario import CycleConfig, PlannerConfig, Scenario, load_scenario, parse_scenario
from .trajectory import Trajectory, derive_kinematics, extend_to_horizon, truncate_and_freeze

__version__ = "0.1.0"
