"""Versioned text format for search scenarios: a structured header plus a
character grid, designed to be human-diffable and to round-trip exactly."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from .world import (
    CHAR_CELLS,
    Cell,
    DomainError,
    GridMap,
    ObjectLayout,
    Pose,
    RewardConfig,
    VisConfig,
)

FORMAT_MAGIC = "avs-scenario"
FORMAT_VERSION = 1


class ScenarioError(ValueError):
    """Base for scenario file violations; carries the offending line."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        where = f" (line {line})" if line is not None else ""
        super().__init__(message + where)


class UnknownVersionError(ScenarioError):
    pass


class DimensionMismatchError(ScenarioError):
    pass


class InvalidCellError(ScenarioError):
    pass


class DanglingIndexError(ScenarioError):
    """A placement, target id or start pose refers to nothing valid."""


class MalformedFieldError(ScenarioError):
    pass


@dataclass(frozen=True)
class Scenario:
    """Validated scenario: world geometry plus the experiment fixtures."""

    grid: GridMap
    headings: int
    vis: VisConfig
    rewards: RewardConfig
    layout: ObjectLayout
    starts: dict[str, Pose]
    difficulty: str | None = None
    format_version: int = FORMAT_VERSION

    def with_target(self, target_index: int) -> "Scenario":
        return replace(self, layout=ObjectLayout(self.layout.placements, target_index))


_REQUIRED = ("width", "height", "headings", "placements", "target")


def parse_scenario(text: str) -> Scenario:
    """Parse and validate; raises a distinct ScenarioError subclass naming
    the first violated field or line."""
    lines = text.splitlines()
    if not lines:
        raise ScenarioError("empty scenario file")
    head = lines[0].split()
    if len(head) != 2 or head[0] != FORMAT_MAGIC:
        raise UnknownVersionError(f"expected '{FORMAT_MAGIC} <version>' header", 1)
    if head[1] != str(FORMAT_VERSION):
        raise UnknownVersionError(f"unsupported format version {head[1]!r}", 1)

    fields: dict[str, str] = {}
    starts: dict[str, Pose] = {}
    start_specs: list[tuple[str, int, int, int, int]] = []
    grid_rows: list[str] = []
    grid_at: int | None = None
    in_grid = False
    for no, raw in enumerate(lines[1:], start=2):
        line = raw.rstrip("\n")
        if in_grid:
            if line.strip() == "" and len(grid_rows) >= int(fields.get("height", 0)):
                continue
            grid_rows.append(line)
            continue
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if stripped == "map:":
            in_grid = True
            grid_at = no
            continue
        if stripped.startswith("start "):
            parts = stripped.split()
            if len(parts) != 5:
                raise MalformedFieldError("start needs: start <name> <x> <y> <theta>", no)
            try:
                start_specs.append(
                    (parts[1], int(parts[2]), int(parts[3]), int(parts[4]), no)
                )
            except ValueError:
                raise MalformedFieldError(f"non-integer start pose {stripped!r}", no)
            continue
        if ":" not in stripped:
            raise MalformedFieldError(f"expected 'key: value', got {stripped!r}", no)
        key, _, value = stripped.partition(":")
        fields[key.strip()] = value.strip()

    for key in _REQUIRED:
        if key not in fields:
            raise MalformedFieldError(f"missing required field {key!r}")
    if not grid_rows:
        raise DimensionMismatchError("missing map block")

    width = _int_field(fields, "width")
    height = _int_field(fields, "height")
    if len(grid_rows) != height:
        raise DimensionMismatchError(
            f"declared height {height} but map has {len(grid_rows)} rows", grid_at
        )
    cells_rows = []
    for i, row in enumerate(grid_rows):
        if len(row) != width:
            raise DimensionMismatchError(
                f"map row {i} has {len(row)} cells, declared width {width}"
            )
        for x, ch in enumerate(row):
            if ch not in CHAR_CELLS:
                raise InvalidCellError(f"invalid cell character {ch!r} at ({x}, {i})")
        cells_rows.append(row)
    grid = GridMap.from_rows(cells_rows, cell_size=_float_field(fields, "cell_size", 1.0))

    candidates = grid.candidate_cells()
    if not candidates:
        raise InvalidCellError("map has no candidate cell")

    headings = _int_field(fields, "headings")
    if headings < 2:
        raise MalformedFieldError(f"headings must be >= 2, got {headings}")
    try:
        vis = VisConfig(
            fov=_float_field(fields, "fov", 90.0),
            max_range=_float_field(fields, "max_range", 6.0),
        )
        rewards = RewardConfig(
            r_find=_float_field(fields, "r_find", 100.0),
            r_step=_float_field(fields, "r_step", -1.0),
            r_revisit=_float_field(fields, "r_revisit", -25.0),
            move_budget=_int_field(fields, "move_budget", 200),
        )
    except DomainError as e:
        raise MalformedFieldError(str(e))

    try:
        placements = tuple(int(v) for v in fields["placements"].split())
    except ValueError:
        raise MalformedFieldError(f"placements must be integers: {fields['placements']!r}")
    k = len(candidates)
    for p in placements:
        if not (0 <= p < k):
            raise DanglingIndexError(f"placement {p} outside candidate range 0..{k - 1}")
    target = _int_field(fields, "target")
    if not (0 <= target < len(placements)):
        raise DanglingIndexError(f"target id {target} outside 0..{len(placements) - 1}")
    try:
        layout = ObjectLayout(placements, target)
    except DomainError as e:
        raise DanglingIndexError(str(e))

    for name, x, y, theta, no in start_specs:
        if name in starts:
            raise MalformedFieldError(f"duplicate start pose name {name!r}", no)
        if not grid.is_empty(x, y):
            raise DanglingIndexError(f"start {name!r} at ({x}, {y}) is not an empty cell", no)
        if not (0 <= theta < headings):
            raise DanglingIndexError(f"start {name!r} heading {theta} outside 0..{headings - 1}", no)
        starts[name] = Pose(x, y, theta)
    if not starts:
        raise MalformedFieldError("scenario declares no start pose")

    return Scenario(
        grid=grid,
        headings=headings,
        vis=vis,
        rewards=rewards,
        layout=layout,
        starts=starts,
        difficulty=fields.get("difficulty") or None,
    )


def _int_field(fields: dict, key: str, default: int | None = None) -> int:
    if key not in fields:
        if default is None:
            raise MalformedFieldError(f"missing required field {key!r}")
        return default
    try:
        return int(fields[key])
    except ValueError:
        raise MalformedFieldError(f"field {key!r} must be an integer, got {fields[key]!r}")


def _float_field(fields: dict, key: str, default: float) -> float:
    if key not in fields:
        return default
    try:
        return float(fields[key])
    except ValueError:
        raise MalformedFieldError(f"field {key!r} must be a number, got {fields[key]!r}")


def _num(v: float) -> str:
    return f"{v:g}"


def serialize_scenario(sc: Scenario) -> str:
    """Canonical text form; `parse_scenario` inverts it exactly."""
    out = [f"{FORMAT_MAGIC} {sc.format_version}"]
    out.append(f"width: {sc.grid.width}")
    out.append(f"height: {sc.grid.height}")
    out.append(f"cell_size: {_num(sc.grid.cell_size)}")
    out.append(f"headings: {sc.headings}")
    out.append(f"fov: {_num(sc.vis.fov)}")
    out.append(f"max_range: {_num(sc.vis.max_range)}")
    out.append(f"r_find: {_num(sc.rewards.r_find)}")
    out.append(f"r_step: {_num(sc.rewards.r_step)}")
    out.append(f"r_revisit: {_num(sc.rewards.r_revisit)}")
    out.append(f"move_budget: {sc.rewards.move_budget}")
    out.append(f"placements: {' '.join(str(p) for p in sc.layout.placements)}")
    out.append(f"target: {sc.layout.target_index}")
    if sc.difficulty:
        out.append(f"difficulty: {sc.difficulty}")
    for name, pose in sc.starts.items():
        out.append(f"start {name} {pose.x} {pose.y} {pose.theta}")
    out.append("map:")
    out.extend(sc.grid.to_rows())
    return "\n".join(out) + "\n"


def load_scenario(path) -> Scenario:
    with open(path, "r", encoding="utf-8") as f:
        return parse_scenario(f.read())


def save_scenario(sc: Scenario, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(serialize_scenario(sc))
