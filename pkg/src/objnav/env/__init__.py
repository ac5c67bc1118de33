"""Houses, geodesic oracles, synthetic sensing and the navigation simulator."""
from .geometry import (GoalField, NavGraph, cell_center, euclidean_distance, geodesic_distance,
                       goal_field, navgraph, point_cell)
from .house import (CELL, FOOTPRINTS, OBJECT_CLASSES, PLACEMENT_PRIOR, House, HouseParams,
                    ObjectInstance, RoomType, class_index, generate_house)
from .planner import plan_path_length, shortest_path_plan, shortest_path_steps
from .sensing import NO_ACTION, Observation, visible_cells
from .sim import (ACTIONS, FORWARD, N_ACTIONS, STOP, TURN_LEFT, TURN_RIGHT, AgentState, EnvConfig,
                  NavEnv, StepOutcome, render_observation, shaped_reward)
