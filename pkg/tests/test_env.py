import math
from collections import deque

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from objnav.env import (CELL, EnvConfig, FORWARD, House, HouseParams, NavEnv, RoomType, STOP,
                        TURN_LEFT, TURN_RIGHT, euclidean_distance, generate_house, geodesic_distance,
                        shaped_reward, shortest_path_plan, visible_cells)
from objnav.env.geometry import (COS_TABLE, LATTICE_STEP, SIN_TABLE, crossed_cells, goal_field,
                                 lattice_advance, lattice_position, navgraph, point_cell)
from objnav.env.house import OBJECT_CLASSES, PLACEMENT_PRIOR, connected_component, open_room
from objnav.env.planner import action_distance_bound, relaxed_index
from objnav.env.sensing import ray_angles, scene_histogram
from objnav.errors import ConfigError, ContractError, GenerationError, Unreachable

from oracles import episode, oracle_geodesic, oracle_graph, random_free_point


HOUSES = [generate_house(seed) for seed in range(6)]


# houses ---------------------------------------------------------------------

def test_same_seed_gives_identical_serialization():
    assert generate_house(11).to_json() == generate_house(11).to_json()
    assert generate_house(11).to_json() != generate_house(12).to_json()


def test_json_round_trip():
    h = HOUSES[2]
    again = House.from_json(h.to_json())
    assert again.to_json() == h.to_json()
    assert np.array_equal(again.blocked, h.blocked)


def test_sinks_only_in_kitchens_and_bathrooms():
    allowed = {RoomType.KITCHEN, RoomType.BATHROOM}
    sink = OBJECT_CLASSES.index("Sink")
    count = 0
    for seed in range(100):
        h = generate_house(seed)
        for obj in h.objects:
            if obj.cls == sink:
                rooms = {int(h.room_map[rc]) for rc in obj.cells}
                assert len(rooms) == 1
                assert h.rooms[rooms.pop()] in allowed
                count += 1
    assert count >= 100


def test_placement_prior_rows_sum_to_one():
    assert np.allclose(PLACEMENT_PRIOR.sum(axis=1), 1.0)
    sink = PLACEMENT_PRIOR[OBJECT_CLASSES.index("Sink")]
    assert sink[RoomType.KITCHEN] + sink[RoomType.BATHROOM] == pytest.approx(1.0)


def test_minimal_params_single_room():
    h = generate_house(5, HouseParams(rooms=(1, 1), objects_per_class=(1, 1)))
    assert len(h.objects) == 5
    assert {int(h.room_map[rc]) for o in h.objects for rc in o.cells} == {0}


@pytest.mark.parametrize("house", HOUSES)
def test_house_invariants(house):
    free = np.argwhere(~house.blocked)
    assert len(connected_component(house.blocked, tuple(free[0]))) == len(free)
    assert house.walls[0].all() and house.walls[-1].all()
    assert house.walls[:, 0].all() and house.walls[:, -1].all()
    for obj in house.objects:
        assert obj.cells
        assert not any(house.walls[rc] for rc in obj.cells)
        assert len({int(house.room_map[rc]) for rc in obj.cells}) == 1


def test_infeasible_params_raise():
    with pytest.raises(GenerationError):
        generate_house(0, HouseParams(height=8, width=8, rooms=(5, 6)))


# lattice and distances ------------------------------------------------------

def test_lattice_steps_match_trigonometry():
    for k in range(12):
        x, y = lattice_position((0.0, 0.0), LATTICE_STEP[k])
        angle = math.radians(30 * k)
        assert x == pytest.approx(CELL * math.cos(angle), abs=1e-15)
        assert y == pytest.approx(CELL * math.sin(angle), abs=1e-15)
        assert SIN_TABLE[k] == pytest.approx(math.sin(angle), abs=1e-15)
        assert COS_TABLE[k] == pytest.approx(math.cos(angle), abs=1e-15)


def test_lattice_round_trip_is_exact():
    lat = (0, 0, 0, 0)
    for k in (0, 1, 5, 7, 3, 11):
        lat = lattice_advance(lat, k)
    for k in (6, 7, 11, 1, 9, 5):
        lat = lattice_advance(lat, k)
    assert lat == (0, 0, 0, 0)
    assert lattice_position((1.3, 2.7), lat) == (1.3, 2.7)


def test_euclidean_examples():
    assert euclidean_distance((1.0, 2.0), (1.0, 2.0)) == 0.0
    assert euclidean_distance((0.0, 0.0), (3.0, 4.0)) == 5.0


def test_geodesic_trivial_cases():
    h = open_room(4, 4)
    assert geodesic_distance(h, (0.6, 0.6), (0.6, 0.6)) == 0.0
    a, b = (0.375, 0.375), (0.625, 0.375)
    assert geodesic_distance(h, a, b) == pytest.approx(0.25, abs=1e-12)
    with pytest.raises(ContractError):
        geodesic_distance(h, (0.1, 0.1), a)


def test_geodesic_disconnected():
    h = open_room(3, 5)
    walls = h.walls.copy()
    walls[:, 3] = True
    split = House(walls, np.where(walls, -1, 0), {0: RoomType.HALLWAY}, [], 0)
    with pytest.raises(Unreachable):
        geodesic_distance(split, (0.375, 0.375), (1.125, 0.375))


def test_crossed_cells_examples():
    assert crossed_cells(1, 1) == ()
    assert crossed_cells(0, 1) == ()
    assert set(crossed_cells(1, 2)) == {(0, 1), (1, 1)}
    # passes exactly through the grid corner at (x=2, y=1)
    assert set(crossed_cells(1, 3)) == {(0, 1), (1, 2)}


def test_geodesic_matches_brute_force_dijkstra():
    rng = np.random.default_rng(7)
    houses = HOUSES[:4]
    graphs = [oracle_graph(h) for h in houses]
    for i in range(200):
        k = i % len(houses)
        a, b = random_free_point(houses[k], rng), random_free_point(houses[k], rng)
        ours = geodesic_distance(houses[k], a, b)
        assert ours == pytest.approx(oracle_geodesic(houses[k], graphs[k], a, b), abs=1e-12)
        assert geodesic_distance(houses[k], b, a) == ours


def test_navgraph_symmetric_positive():
    g = navgraph(HOUSES[0])
    edges = {(u, v): w for u, v, w in g.edges()}
    for (u, v), w in edges.items():
        assert w > 0
        assert edges[(v, u)] == w


def test_euclid_bounded_by_geodesic():
    rng = np.random.default_rng(3)
    for i in range(200):
        h = HOUSES[i % len(HOUSES)]
        a, b = random_free_point(h, rng), random_free_point(h, rng)
        assert euclidean_distance(a, b) <= geodesic_distance(h, a, b) + CELL * math.sqrt(2) + 1e-12


def test_goal_field_lower_bounded_by_euclid():
    rng = np.random.default_rng(4)
    for h in HOUSES[:3]:
        for cls in sorted(h.classes_present()):
            f = goal_field(h, cls)
            for _ in range(30):
                x, y = random_free_point(h, rng)
                assert f.geodesic(x, y) >= f.boundary_distance(x, y) - 1e-12


# simulator -----------------------------------------------------------------

CHAIR = OBJECT_CLASSES.index("Chair")


@pytest.fixture
def room():
    # interior rows/cols 1..3; chair occupies the square x, y in [0.5, 0.75]
    return open_room(3, 3, [("Chair", [(2, 2)])])


def test_env_config_defaults():
    cfg = EnvConfig()
    assert (cfg.forward_step, cfg.turn_angle, cfg.success_distance, cfg.max_steps, cfg.hfov) == \
        (0.25, 30.0, 0.1, 500, 79.0)
    with pytest.raises(ConfigError):
        EnvConfig(max_steps=0)
    with pytest.raises(ConfigError):
        EnvConfig(turn_angle=45.0)


def test_reset_pose_and_goal(room):
    env = NavEnv(room)
    obs = env.reset(episode(room, 0.375, 0.375, 4, CHAIR))
    assert obs.pose.tolist() == [0.0, 0.0, 0.0, 1.0]
    assert obs.goal == CHAIR
    assert obs.prev_action == 4
    again = env.reset(episode(room, 0.375, 0.375, 4, CHAIR))
    for a, b in zip((obs.seg_grid, obs.scene_vec, obs.pose), (again.seg_grid, again.scene_vec, again.pose)):
        assert np.array_equal(a, b)


def test_reset_rejects_invalid_episodes(room):
    env = NavEnv(room)
    with pytest.raises(ContractError):
        env.reset(episode(room, 0.1, 0.1, 0, CHAIR))
    with pytest.raises(ContractError):
        env.reset(episode(room, 0.375, 0.375, 0, OBJECT_CLASSES.index("Sink")))
    with pytest.raises(ContractError):
        env.reset(episode(room, 0.375, 0.375, 12, CHAIR))


def test_turn_left_then_right_restores(room):
    env = NavEnv(room)
    env.reset(episode(room, 0.375, 0.375, 5, CHAIR))
    before = env.agent
    env.step(TURN_LEFT)
    assert env.agent.heading == 6
    env.step(TURN_RIGHT)
    assert (env.agent.x, env.agent.y, env.agent.heading) == (before.x, before.y, before.heading)


def test_forward_into_wall_needs_a_turn(room):
    env = NavEnv(room)
    env.reset(episode(room, 0.625, 0.375, 9, CHAIR))  # facing -y, wall row 0 next
    out = env.step(FORWARD)
    assert out.info["collided"] and (env.agent.x, env.agent.y) == (0.625, 0.375)
    out = env.step(FORWARD)
    assert out.info["collided"] and (env.agent.x, env.agent.y) == (0.625, 0.375)
    env.step(TURN_LEFT)
    assert not env.agent.collided
    out = env.step(FORWARD)  # heading 10: toward free space in +x, -y
    assert out.info["collided"]
    for _ in range(2):
        env.step(TURN_LEFT)
    out = env.step(FORWARD)  # heading 0: +x
    assert not out.info["collided"]
    assert env.agent.x == pytest.approx(0.875)


@pytest.mark.parametrize("x, success", [(0.8, True), (0.9, False), (0.849, True), (0.851, False)])
def test_stop_threshold(room, x, success):
    env = NavEnv(room)
    env.reset(episode(room, x, 0.625, 0, CHAIR))
    out = env.step(STOP)
    assert out.done and out.info["success"] is success
    if success:
        assert env.dts() == 0.0


def test_action_after_done_raises(room):
    env = NavEnv(room)
    env.reset(episode(room, 0.8, 0.625, 0, CHAIR))
    env.step(STOP)
    with pytest.raises(ContractError):
        env.step(TURN_LEFT)


def test_step_cap_ends_episode_with_failure(room):
    env = NavEnv(room)
    env.reset(episode(room, 0.8, 0.625, 0, CHAIR), observe=False)
    for t in range(499):
        out = env.step(TURN_LEFT, observe=False)
        assert not out.done
    out = env.step(TURN_LEFT, observe=False)
    assert out.done and not out.info["success"] and out.info["steps"] == 500
    with pytest.raises(ContractError):
        env.step(STOP)


def test_stop_on_last_allowed_step_counts(room):
    env = NavEnv(room, EnvConfig(max_steps=3))
    env.reset(episode(room, 0.8, 0.625, 0, CHAIR), observe=False)
    env.step(TURN_LEFT, observe=False)
    env.step(TURN_RIGHT, observe=False)
    out = env.step(STOP, observe=False)
    assert out.done and out.info["success"]


def test_shaped_reward_examples():
    assert shaped_reward(1.0, 0.75, False) == pytest.approx(0.24)
    assert shaped_reward(0.5, 0.5, False) == pytest.approx(-0.01)
    assert shaped_reward(0.05, 0.05, True) == pytest.approx(2.5 - 0.01)
    assert shaped_reward(1.0, 0.75, False, EnvConfig(shaping=False)) == pytest.approx(-0.01)


def test_simulated_rewards():
    h = open_room(3, 10, [("Chair", [(2, 9)])])
    env = NavEnv(h)
    env.reset(episode(h, 1.0 + 1 / 24, 0.625, 0, CHAIR))
    assert env.step(FORWARD).reward == pytest.approx(0.24, abs=1e-9)
    assert env.step(TURN_LEFT).reward == pytest.approx(-0.01, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 5), start=st.integers(0, 10_000),
       actions=st.lists(st.sampled_from([FORWARD, FORWARD, TURN_LEFT, TURN_RIGHT]), max_size=80))
def test_random_walks_stay_free_and_replay_exactly(seed, start, actions):
    h = HOUSES[seed]
    x, y = random_free_point(h, np.random.default_rng(start))
    goal = min(h.classes_present())
    finals = []
    for _ in range(2):
        env = NavEnv(h)
        env.reset(episode(h, x, y, start % 12, goal), observe=False)
        for a in actions:
            env.step(a, observe=False)
            assert h.is_free_point(env.agent.x, env.agent.y)
        finals.append(env.agent)
    assert finals[0] == finals[1]


# sensing --------------------------------------------------------------------

def test_observation_ranges():
    rng = np.random.default_rng(0)
    for h in HOUSES[:3]:
        env = NavEnv(h)
        x, y = random_free_point(h, rng)
        obs = env.reset(episode(h, x, y, 3, min(h.classes_present())))
        for a in rng.integers(0, 3, size=20):
            obs = env.step(int(a)).observation
            assert obs.seg_grid.shape == (11, 11, 7)
            assert obs.seg_grid.min() >= 0 and obs.seg_grid.max() <= 1
            cover = obs.seg_grid.sum(axis=2)
            assert np.all((cover <= 1 + 1e-12))
            assert obs.scene_vec.sum() == pytest.approx(1.0, abs=1e-9)
            assert np.all(np.isfinite(obs.pose))


def test_pose_tracks_start_frame(room):
    env = NavEnv(room)
    env.reset(episode(room, 0.375, 0.375, 3, CHAIR))  # facing +y
    obs = env.step(TURN_RIGHT).observation
    assert obs.pose[2:].tolist() == [-0.5, COS_TABLE[11]]
    obs = env.step(TURN_LEFT).observation
    obs = env.step(FORWARD).observation  # moves along +y, which is "ahead" in the start frame
    assert obs.pose[0] == pytest.approx(0.25) and obs.pose[1] == pytest.approx(0.0, abs=1e-15)


def test_seg_grid_sees_object_ahead():
    h = open_room(5, 9, [("Table", [(3, 5)])])
    env = NavEnv(h)
    obs = env.reset(episode(h, 0.375, 0.875, 0, OBJECT_CLASSES.index("Table")))
    k = 11
    center = k // 2
    table = obs.seg_grid[:, :, OBJECT_CLASSES.index("Table")]
    # the table cell is four cells ahead on the center column
    assert table[center - 4, center] == pytest.approx(1.0)
    assert table.sum() == pytest.approx(1.0)
    assert obs.seg_grid[center, center, 6] == pytest.approx(1.0)
    assert obs.seg_grid[center + 1:, :, :].sum() == 0.0  # nothing behind is visible


def test_enclosed_agent_sees_only_its_room():
    walls = np.ones((7, 12), dtype=bool)
    walls[1:6, 1:5] = False
    walls[1:6, 6:11] = False
    walls[5, 5] = False  # door at the bottom
    room_map = np.full(walls.shape, -1)
    room_map[1:6, 1:5] = 0
    room_map[1:6, 5:11] = 1
    room_map[5, 5] = 0
    h = House(walls, room_map, {0: RoomType.BEDROOM, 1: RoomType.KITCHEN}, [], 0)
    seen = visible_cells(h.walls, 4.5 * CELL, 1.5 * CELL, 0, 79.0, 3.0)
    hist = scene_histogram(h, seen)
    assert hist[RoomType.BEDROOM] == 1.0 and hist.sum() == 1.0


def test_cell_behind_is_never_visible():
    rng = np.random.default_rng(1)
    h = open_room(16, 16)
    for _ in range(100):
        heading = int(rng.integers(12))
        x, y = 1.5 + 2 * rng.random(), 1.5 + 2 * rng.random()
        angle = math.radians(30 * heading + 180)
        behind = point_cell(x + 0.5 * math.cos(angle), y + 0.5 * math.sin(angle))
        assert not visible_cells(h.walls, x, y, heading, 79.0, 3.0)[behind]


def slab_visibility(walls, x, y, angles, max_range):
    """Brute force: intersect each ray with every cell square and sort by entry."""
    h, w = walls.shape
    seen = np.zeros_like(walls)
    seen[point_cell(x, y)] = True
    rows, cols = np.mgrid[0:h, 0:w]
    x0, x1 = cols * CELL, (cols + 1) * CELL
    y0, y1 = rows * CELL, (rows + 1) * CELL
    for a in angles:
        dx, dy = math.cos(a), math.sin(a)
        with np.errstate(divide="ignore", invalid="ignore"):
            tx0, tx1 = (x0 - x) / dx, (x1 - x) / dx
            ty0, ty1 = (y0 - y) / dy, (y1 - y) / dy
        enter = np.maximum(np.minimum(tx0, tx1), np.minimum(ty0, ty1))
        leave = np.minimum(np.maximum(tx0, tx1), np.maximum(ty0, ty1))
        hit = (leave > enter) & (leave > 0) & (enter <= max_range)
        order = np.argsort(np.where(hit, enter, np.inf), axis=None)
        for idx in order[: int(hit.sum())]:
            r, c = divmod(int(idx), w)
            seen[r, c] = True
            if walls[r, c]:
                break
    return seen


def test_full_turn_visibility_matches_brute_force():
    rng = np.random.default_rng(5)
    for h in HOUSES[:3]:
        for _ in range(3):
            x, y = random_free_point(h, rng)
            union = np.zeros_like(h.walls)
            for heading in range(12):
                union |= visible_cells(h.walls, x, y, heading, 79.0, 3.0)
            angles = np.concatenate([ray_angles(k, 79.0) for k in range(12)])
            assert np.array_equal(union, slab_visibility(h.walls, x, y, angles, 3.0))


def test_ray_fan_is_one_degree():
    angles = np.rad2deg(ray_angles(0, 79.0))
    assert len(angles) == 80 and angles[0] == -39.5 and angles[-1] == 39.5


# planner --------------------------------------------------------------------

def straight_room():
    # chair face at x = 2.5; agent row center y = 0.875
    return open_room(5, 12, [("Chair", [(3, 10)])])


def test_plan_four_forwards_when_facing():
    h = straight_room()
    plan = shortest_path_plan(h, (2.5 - 1.05, 0.875, 0), CHAIR)
    assert plan == [FORWARD] * 4


def test_plan_turns_when_facing_away():
    h = straight_room()
    plan = shortest_path_plan(h, (2.5 - 1.05, 0.875, 3), CHAIR)
    assert len(plan) == 7
    assert plan.count(FORWARD) == 4


def test_plan_empty_when_already_there():
    h = straight_room()
    assert shortest_path_plan(h, (2.45, 0.875, 6), CHAIR) == []


def bfs_steps(house, start, goal, limit=14):
    env = NavEnv(house)
    env.reset(episode(house, *start, goal), observe=False)
    field = goal_field(house, goal)
    origin = (start[0], start[1])
    root = ((0, 0, 0, 0), start[2])
    depth = {root: 0}
    queue = deque([root])
    while queue:
        lat, heading = queue.popleft()
        x, y = lattice_position(origin, lat)
        if field.boundary_distance(x, y) < 0.1:
            return depth[(lat, heading)]
        if depth[(lat, heading)] >= limit:
            continue
        nxt = [(lat, (heading + 1) % 12), (lat, (heading - 1) % 12)]
        nl = lattice_advance(lat, heading)
        if house.is_free_point(*lattice_position(origin, nl)):
            nxt.append((nl, heading))
        for s in nxt:
            if s not in depth:
                depth[s] = depth[(lat, heading)] + 1
                queue.append(s)
    return None


def test_planner_matches_breadth_first_search():
    rng = np.random.default_rng(9)
    checked = 0
    while checked < 25:
        h = HOUSES[checked % 3]
        goal = sorted(h.classes_present())[checked % len(h.classes_present())]
        field = goal_field(h, goal)
        x, y = random_free_point(h, rng)
        if not 0.1 <= field.boundary_distance(x, y) <= 0.9:
            continue
        start = (x, y, int(rng.integers(12)))
        expected = bfs_steps(h, start, goal)
        if expected is None:
            continue
        assert len(shortest_path_plan(h, start, goal)) == expected
        checked += 1


def test_relaxed_bound_is_admissible():
    rng = np.random.default_rng(2)
    h = HOUSES[1]
    for goal in sorted(h.classes_present())[:2]:
        bound = action_distance_bound(h, goal)
        for _ in range(15):
            x, y = random_free_point(h, rng)
            heading = int(rng.integers(12))
            plan = shortest_path_plan(h, (x, y, heading), goal)
            assert bound[relaxed_index(x, y) + (heading,)] <= len(plan)


def test_plan_replays_to_success():
    rng = np.random.default_rng(11)
    for i in range(20):
        h = HOUSES[i % len(HOUSES)]
        goal = sorted(h.classes_present())[i % len(h.classes_present())]
        x, y = random_free_point(h, rng)
        if goal_field(h, goal).boundary_distance(x, y) < 0.1:
            continue
        plan = shortest_path_plan(h, (x, y, i % 12), goal)
        env = NavEnv(h)
        env.reset(episode(h, x, y, i % 12, goal), observe=False)
        for a in plan:
            assert not env.step(a, observe=False).done
        assert env.step(STOP, observe=False).info["success"]
