"""Experiment I/O: JSON specs, XYZ clouds, scene generation, perturbations.

An experiment spec bundles a robot document, a scene source (inline points,
an XYZ side file, or a procedural tunnel generator), a task path, planner
configs, perturbation grids, and a seed. Loading is strict: unknown shapes,
missing fields, and invariant violations fail with the offending field path.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import geometry, kinematics
from .cspace import CSpaceConfig
from .hybrid import TaskPath
from .nullspace import (NullSpaceConfig, ProjectedGradientDescent,
                        UnitSphereSampling)

SCHEMA_VERSION = 1


class SpecError(ValueError):
    pass


def _req(doc: dict, key: str, path: str):
    if key not in doc:
        raise SpecError(f"{path}: missing required field '{key}'")
    return doc[key]


def _num(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SpecError(f"{path}: expected a number, got {type(value).__name__}")
    return float(value)


def _int(value, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise SpecError(f"{path}: expected an integer, got {type(value).__name__}")
    return value


def _vec(value, n: int, path: str) -> np.ndarray:
    if not isinstance(value, (list, tuple)) or len(value) != n:
        raise SpecError(f"{path}: expected a list of {n} numbers")
    return np.array([_num(v, f"{path}[{i}]") for i, v in enumerate(value)])


def _mat(value, cols: int, path: str) -> np.ndarray:
    if not isinstance(value, list):
        raise SpecError(f"{path}: expected a list of rows")
    return np.array([_vec(row, cols, f"{path}[{i}]") for i, row in enumerate(value)])


# ---------------------------------------------------------------------------
# XYZ side files


def load_xyz(path: str | Path) -> np.ndarray:
    """Read an 'x y z' per line cloud file (meters)."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise SpecError(f"cannot read xyz file {path}: {e}") from e
    rows = []
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.strip()
        if not stripped:
            continue
        parts = stripped.split()
        if len(parts) != 3:
            raise SpecError(f"{path}:{lineno}: expected 3 values, got {len(parts)}")
        try:
            rows.append([float(p) for p in parts])
        except ValueError:
            raise SpecError(f"{path}:{lineno}: malformed number") from None
    if not rows:
        raise SpecError(f"{path}: no points found")
    return np.asarray(rows, dtype=float)


def save_xyz(points: np.ndarray, path: str | Path) -> None:
    points = np.asarray(points, dtype=float)
    lines = [f"{p[0]:.17g} {p[1]:.17g} {p[2]:.17g}" for p in points]
    Path(path).write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# Robot documents


def _parse_origin(doc, path: str) -> np.ndarray:
    if not isinstance(doc, dict):
        raise SpecError(f"{path}: expected an object with 'xyz' and optional 'rpy'")
    xyz = _vec(_req(doc, "xyz", path), 3, f"{path}.xyz")
    rot = None
    if "rpy" in doc:
        rpy = _vec(doc["rpy"], 3, f"{path}.rpy")
        rot = kinematics.rpy_matrix(*rpy)
    return kinematics.rigid_transform(rotation=rot, translation=xyz)


def parse_robot(doc: dict, path: str = "robot"):
    """Robot document -> (RobotModel, initial state)."""
    if not isinstance(doc, dict):
        raise SpecError(f"{path}: expected an object")
    name = doc.get("name", "robot")
    joints_doc = _req(doc, "joints", path)
    if not isinstance(joints_doc, list) or not joints_doc:
        raise SpecError(f"{path}.joints: expected a non-empty list")
    joints = []
    for i, jd in enumerate(joints_doc):
        jp = f"{path}.joints[{i}]"
        axis = _vec(_req(jd, "axis", jp), 3, f"{jp}.axis")
        origin = _parse_origin(_req(jd, "origin", jp), f"{jp}.origin")
        try:
            joints.append(kinematics.Joint(axis=axis, origin=origin))
        except kinematics.KinematicsError as e:
            raise SpecError(f"{jp}: {e}") from e
    limits = _mat(_req(doc, "joint_limits", path), 2, f"{path}.joint_limits")
    caps_doc = _req(doc, "link_capsules", path)
    capsules = []
    for i, cd in enumerate(caps_doc):
        cp = f"{path}.link_capsules[{i}]"
        try:
            capsules.append(kinematics.CapsuleSpec(
                link=_int(_req(cd, "link", cp), f"{cp}.link"),
                p0=_vec(_req(cd, "p0", cp), 3, f"{cp}.p0"),
                p1=_vec(_req(cd, "p1", cp), 3, f"{cp}.p1"),
                radius=_num(_req(cd, "radius", cp), f"{cp}.radius"),
            ))
        except kinematics.KinematicsError as e:
            raise SpecError(f"{cp}: {e}") from e
    tp_doc = _req(doc, "tool_point", path)
    tool = kinematics.BodyPoint(
        link=_int(_req(tp_doc, "link", f"{path}.tool_point"), f"{path}.tool_point.link"),
        offset=_vec(_req(tp_doc, "offset", f"{path}.tool_point"), 3,
                    f"{path}.tool_point.offset"),
    )
    try:
        model = kinematics.RobotModel(joints, limits, capsules, tool, name=name)
    except kinematics.KinematicsError as e:
        raise SpecError(f"{path}: {e}") from e
    x_init = _vec(_req(doc, "initial_state", path), model.dof, f"{path}.initial_state")
    if not model.within_limits(x_init):
        raise SpecError(f"{path}.initial_state: violates joint limits")
    return model, x_init


# ---------------------------------------------------------------------------
# Tunnel scene generator


@dataclass(frozen=True)
class TunnelParams:
    """Box tunnel bored through a face plate, with a weld seam inside.

    The bore runs along +x from `entrance` (window center) with interior
    dims (length, width, height). The corridor is the allowed region for the
    arm: a box reaching from behind the robot base to just past the bore.
    The weld is a root-start pass: it begins partway up the rear wall, drops
    to the bottom-right interior edge, runs that edge back to the window, and
    ends `approach` outside it, so trials start with the arm already threaded
    into the bore.
    """

    bore: tuple[float, float, float] = (0.31, 0.24, 0.34)
    density: float = 3000.0
    waypoints: int = 100
    seed: int = 0
    entrance: tuple[float, float, float] = (0.48, 0.0, 0.34)
    corridor_min: tuple[float, float, float] = (-0.40, -0.50, 0.02)
    corridor_max: tuple[float, float, float] = (0.88, 0.50, 0.75)
    seam_inset: float = 0.06
    approach: float = 0.06
    climb_fraction: float = 0.40
    dead_end: bool = True
    baffle: bool = False
    baffle_depth: float = 0.5
    baffle_pos: float = 0.4
    pinch: bool = False
    pinch_gap: float = 0.10
    pinch_lift: float = 0.02
    pinch_pos: float = 0.4
    sill: bool = False
    sill_height: float = 0.06
    sill_pos: float = 0.1
    sill_depth: float = 0.06
    fin: bool = False
    fin_y: float = 0.0
    fin_pos: float = -0.26
    fin_len: float = 0.65
    fin_top: float = 0.18
    gate: bool = False
    gate_y: float = 0.105
    gate_len: float = 0.18
    gate_gap: float = 0.0
    gate_z0: float = 0.25
    gate_z1: float = 0.55
    exit_y_offset: float = 0.0
    exit_z: float | None = None
    plates: tuple = ()

    def __post_init__(self):
        if any(v <= 0.0 for v in self.bore):
            raise SpecError("tunnel bore dims must be positive")
        if self.density <= 0.0:
            raise SpecError("tunnel density must be positive")
        if self.waypoints < 2:
            raise SpecError("tunnel waypoints must be >= 2")
        if not 0.0 < self.seam_inset < min(self.bore[1], self.bore[2]) / 2.0:
            raise SpecError("seam_inset must fit inside the bore cross-section")
        if not 0.0 < self.baffle_depth < 1.0 or not 0.0 < self.baffle_pos < 1.0:
            raise SpecError("baffle_depth and baffle_pos must lie in (0, 1)")
        if self.pinch:
            z_mid = self.seam_inset + self.pinch_lift
            if not 0.0 < self.pinch_pos < 1.0 or self.pinch_gap <= 0.0:
                raise SpecError("pinch_pos must lie in (0, 1), pinch_gap > 0")
            if z_mid - self.pinch_gap / 2.0 <= 0.0 \
                    or z_mid + self.pinch_gap / 2.0 >= self.bore[2]:
                raise SpecError("pinch strips must have positive height")
        if self.sill:
            if not 0.0 < self.sill_pos < 1.0:
                raise SpecError("sill_pos must lie in (0, 1)")
            if not 0.0 < self.sill_height < self.bore[2]:
                raise SpecError("sill_height must lie inside the bore height")
            if not 0.0 < self.sill_depth < self.bore[0]:
                raise SpecError("sill_depth must lie inside the bore length")
        if self.fin:
            if self.fin_len <= 0.0:
                raise SpecError("fin_len must be positive")
            if not 0.0 < self.fin_top <= self.bore[2]:
                raise SpecError("fin_top must lie inside the bore height")
            if abs(self.fin_y) >= self.bore[1] / 2.0:
                raise SpecError("fin_y must lie inside the bore width")
        if self.gate:
            if self.gate_len <= 0.0:
                raise SpecError("gate_len must be positive")
            if self.gate_z0 >= self.gate_z1:
                raise SpecError("gate_z0 must lie below gate_z1")
        for i, plate in enumerate(self.plates):
            if len(plate) != 9:
                raise SpecError(f"plates[{i}] must have 9 numbers")
            edge = np.subtract(plate[3:6], plate[0:3])
            if float(np.dot(edge, edge)) <= 0.0:
                raise SpecError(f"plates[{i}] edge must have positive length")
            if plate[6] == 0.0 and plate[7] == 0.0:
                raise SpecError(f"plates[{i}] up vector must be nonzero")
            if plate[8] <= 0.0:
                raise SpecError(f"plates[{i}] density multiplier must be positive")


def _stratified_rect(rng: np.random.Generator, origin, u_axis, v_axis,
                     u_len: float, v_len: float, density: float) -> np.ndarray:
    """One jittered point per grid cell of roughly 1/density area."""
    nu = max(1, int(math.ceil(u_len * math.sqrt(density))))
    nv = max(1, int(math.ceil(v_len * math.sqrt(density))))
    iu, iv = np.meshgrid(np.arange(nu), np.arange(nv), indexing="ij")
    u = (iu + rng.random((nu, nv))) * (u_len / nu)
    v = (iv + rng.random((nu, nv))) * (v_len / nv)
    origin = np.asarray(origin, dtype=float)
    u_axis = np.asarray(u_axis, dtype=float)
    v_axis = np.asarray(v_axis, dtype=float)
    pts = origin[None, :] + u.reshape(-1, 1) * u_axis + v.reshape(-1, 1) * v_axis
    return pts


def _polyline_waypoints(vertices: np.ndarray, count: int) -> np.ndarray:
    """count points spaced evenly by arclength along a polyline."""
    vertices = np.asarray(vertices, dtype=float)
    seg = np.linalg.norm(np.diff(vertices, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    stations = np.linspace(0.0, s[-1], count)
    out = np.empty((count, 3))
    for i, st in enumerate(stations):
        j = min(int(np.searchsorted(s, st, side="right")) - 1, len(seg) - 1)
        t = 0.0 if seg[j] == 0.0 else (st - s[j]) / seg[j]
        out[i] = vertices[j] + t * (vertices[j + 1] - vertices[j])
    return out


def generate_tunnel_scene(params: TunnelParams, excluded_links=frozenset({5}),
                          safety_margin: float = 0.0,
                          cell_size: float | None = None):
    """Build the synthetic workpiece scene and its weld path.

    Returns (Scene, TaskPath). Walls are stratified point samples: front
    plate around the entrance window, four bore walls, and (dead_end) a rear
    plate closing the bore.
    """
    rng = np.random.default_rng(params.seed)
    L, W, H = params.bore
    ex, ey, ez = params.entrance
    cmin = np.asarray(params.corridor_min, dtype=float)
    cmax = np.asarray(params.corridor_max, dtype=float)
    if np.any(cmin >= cmax):
        raise SpecError("corridor_min must be below corridor_max")
    ux = np.array([1.0, 0.0, 0.0])
    uy = np.array([0.0, 1.0, 0.0])
    uz = np.array([0.0, 0.0, 1.0])
    wy, wz = W / 2.0, H / 2.0
    dens = params.density

    patches = []
    # Front plate: corridor cross-section at x=ex minus the bore window.
    y0, y1 = cmin[1], cmax[1]
    z0, z1 = cmin[2], cmax[2]
    patches.append(_stratified_rect(rng, (ex, y0, z0), uy, uz, y1 - y0, ez - wz - z0, dens))
    patches.append(_stratified_rect(rng, (ex, y0, ez + wz), uy, uz, y1 - y0, z1 - (ez + wz), dens))
    patches.append(_stratified_rect(rng, (ex, y0, ez - wz), uy, uz, (ey - wy) - y0, H, dens))
    patches.append(_stratified_rect(rng, (ex, ey + wy, ez - wz), uy, uz, y1 - (ey + wy), H, dens))
    # Bore walls.
    patches.append(_stratified_rect(rng, (ex, ey - wy, ez - wz), ux, uy, L, W, dens))  # floor
    patches.append(_stratified_rect(rng, (ex, ey - wy, ez + wz), ux, uy, L, W, dens))  # ceiling
    patches.append(_stratified_rect(rng, (ex, ey - wy, ez - wz), ux, uz, L, H, dens))  # left
    patches.append(_stratified_rect(rng, (ex, ey + wy, ez - wz), ux, uz, L, H, dens))  # right
    if params.dead_end:
        patches.append(_stratified_rect(rng, (ex + L, ey - wy, ez - wz), uy, uz, W, H, dens))
    if params.baffle:
        # Strip hanging from the bore ceiling: forces postures to duck under.
        bx = ex + params.baffle_pos * L
        bz = ez + wz - params.baffle_depth * H
        patches.append(_stratified_rect(rng, (bx, ey - wy, bz), uy, uz,
                                        W, params.baffle_depth * H, dens))
    if params.pinch:
        # Opposed floor/ceiling strips leaving a narrow slot above the seam:
        # misaligned link postures contact both sides and wedge.
        px = ex + params.pinch_pos * L
        z_mid = ez - wz + params.seam_inset + params.pinch_lift
        z_lo = z_mid - params.pinch_gap / 2.0
        z_hi = z_mid + params.pinch_gap / 2.0
        patches.append(_stratified_rect(rng, (px, ey - wy, ez - wz), uy, uz,
                                        W, z_lo - (ez - wz), dens))
        patches.append(_stratified_rect(rng, (px, ey - wy, z_hi), uy, uz,
                                        W, (ez + wz) - z_hi, dens))
    if params.sill:
        # Full-width box step on the bore floor near the mouth. The exempt
        # torch reaches through it to the seam; every collision-checked link
        # must clear its top across its depth while the tool stays on the
        # seam, which pins the wrist into a thin band under the tool reach.
        sx = ex + params.sill_pos * L
        top = ez - wz + params.sill_height
        patches.append(_stratified_rect(rng, (sx, ey - wy, ez - wz), uy, uz,
                                        W, params.sill_height, dens))
        patches.append(_stratified_rect(rng, (sx, ey - wy, top), ux, uy,
                                        params.sill_depth, W, dens))
        patches.append(_stratified_rect(rng, (sx + params.sill_depth, ey - wy,
                                        ez - wz), uy, uz, W,
                                        params.sill_height, dens))
    if params.fin:
        # Vertical jig rib straddling the window plane. It splits the
        # approach into two lanes; only the seam-side lane leaves the torch
        # enough lateral reach to keep the tip on the seam.
        fx = ex + params.fin_pos * L
        patches.append(_stratified_rect(rng, (fx, params.fin_y, ez - wz - 0.02),
                                        ux, uz, params.fin_len * L,
                                        params.fin_top + 0.02, dens))
    if params.gate:
        # Gate plate outside the window on the seam side. The retreat leg
        # parks the torch laterally past it; near the plate the wrist runs
        # out of lateral tool throw and must dive under the bottom edge.
        gx = ex - params.gate_gap - params.gate_len
        patches.append(_stratified_rect(rng, (gx, params.gate_y,
                                        params.gate_z0),
                                        ux, uz, params.gate_len,
                                        params.gate_z1 - params.gate_z0, dens))
    for plate in params.plates:
        # Free-form jig plate: bottom edge p0 -> p1 extruded along a y-z up
        # vector, optionally sampled denser than the walls.
        p0 = np.asarray(plate[0:3], dtype=float)
        edge = np.asarray(plate[3:6], dtype=float) - p0
        up = np.array([0.0, plate[6], plate[7]])
        elen = float(np.linalg.norm(edge))
        ulen = float(np.linalg.norm(up))
        patches.append(_stratified_rect(rng, p0, edge / elen, up / ulen,
                                        elen, ulen, dens * plate[8]))
    points = np.vstack(patches)

    corridor = geometry.Box(center=(cmin + cmax) / 2.0,
                            half_extents=(cmax - cmin) / 2.0)
    cloud = geometry.PointCloud(points, cell_size=cell_size)
    scene = geometry.Scene(cloud=cloud, tunnel=corridor,
                           excluded_links=frozenset(excluded_links),
                           safety_margin=safety_margin)

    inset = params.seam_inset
    y_s = ey + wy - inset
    z_bot = ez - wz + inset
    seam_mouth = np.array([ex, y_s, z_bot])
    seam_corner = np.array([ex + L - inset, y_s, z_bot])
    climb_top = np.array([ex + L - inset, y_s,
                          z_bot + params.climb_fraction * (H - 2.0 * inset)])
    exit_z = ez if params.exit_z is None else params.exit_z
    exit_point = np.array([ex - params.approach, ey + params.exit_y_offset,
                           exit_z])
    # Root-start weld: begin at the top of the vertical pass deep in the
    # bore, run down and out along the seam, then retreat past the window.
    vertices = np.vstack([climb_top, seam_corner, seam_mouth, exit_point])
    path = TaskPath(targets=_polyline_waypoints(vertices, params.waypoints))
    return scene, path


def parse_tunnel_params(doc: dict, path: str = "scene.generator") -> TunnelParams:
    if not isinstance(doc, dict):
        raise SpecError(f"{path}: expected an object")
    kwargs = {}
    if "tunnel" in doc:
        kwargs["bore"] = tuple(_vec(doc["tunnel"], 3, f"{path}.tunnel"))
    for key in ("density", "seam_inset", "approach", "climb_fraction",
                "baffle_depth", "baffle_pos", "pinch_gap", "pinch_lift",
                "pinch_pos", "sill_height", "sill_pos", "sill_depth",
                "fin_y", "fin_pos", "fin_len", "fin_top", "gate_y",
                "gate_len", "gate_gap", "gate_z0", "gate_z1",
                "exit_y_offset", "exit_z"):
        if key in doc:
            kwargs[key] = _num(doc[key], f"{path}.{key}")
    for key in ("waypoints", "seed"):
        if key in doc:
            kwargs[key] = _int(doc[key], f"{path}.{key}")
    for key in ("entrance", "corridor_min", "corridor_max"):
        if key in doc:
            kwargs[key] = tuple(_vec(doc[key], 3, f"{path}.{key}"))
    for key in ("dead_end", "baffle", "pinch", "sill", "fin", "gate"):
        if key in doc:
            if not isinstance(doc[key], bool):
                raise SpecError(f"{path}.{key}: expected a boolean")
            kwargs[key] = doc[key]
    if "plates" in doc:
        if not isinstance(doc["plates"], list):
            raise SpecError(f"{path}.plates: expected a list")
        kwargs["plates"] = tuple(
            tuple(_vec(p, 9, f"{path}.plates[{i}]"))
            for i, p in enumerate(doc["plates"]))
    return TunnelParams(**kwargs)


# ---------------------------------------------------------------------------
# Scene / path / config documents


def parse_scene(doc: dict, model: kinematics.RobotModel,
                base_dir: Path | None = None, path: str = "scene"):
    """Scene document -> (Scene, TaskPath | None).

    The path is non-None only for generator scenes, which produce their weld
    path together with the walls.
    """
    if not isinstance(doc, dict):
        raise SpecError(f"{path}: expected an object")
    sources = [k for k in ("points", "xyz_file", "generator") if k in doc]
    if len(sources) != 1:
        raise SpecError(
            f"{path}: exactly one of points/xyz_file/generator required, "
            f"got {sources or 'none'}"
        )
    margin = _num(doc.get("safety_margin", 0.0), f"{path}.safety_margin")
    if margin < 0.0:
        raise SpecError(f"{path}.safety_margin: must be >= 0")
    excluded = doc.get("excluded_links", [])
    if not isinstance(excluded, list):
        raise SpecError(f"{path}.excluded_links: expected a list")
    excluded = frozenset(_int(v, f"{path}.excluded_links[{i}]")
                         for i, v in enumerate(excluded))
    cell = 2.0 * model.max_capsule_radius + margin
    if cell <= 0.0:
        cell = None

    if sources[0] == "generator":
        params = parse_tunnel_params(doc["generator"], f"{path}.generator")
        scene, gen_path = generate_tunnel_scene(
            params, excluded_links=excluded, safety_margin=margin, cell_size=cell)
        return scene, gen_path

    if sources[0] == "points":
        points = _mat(doc["points"], 3, f"{path}.points")
    else:
        file_path = Path(doc["xyz_file"])
        if base_dir is not None and not file_path.is_absolute():
            file_path = base_dir / file_path
        points = load_xyz(file_path)
    tunnel_doc = _req(doc, "tunnel", path)
    center = _vec(_req(tunnel_doc, "center", f"{path}.tunnel"), 3, f"{path}.tunnel.center")
    half = _vec(_req(tunnel_doc, "half_extents", f"{path}.tunnel"), 3,
                f"{path}.tunnel.half_extents")
    rot = None
    if "rpy" in tunnel_doc:
        rot = kinematics.rpy_matrix(*_vec(tunnel_doc["rpy"], 3, f"{path}.tunnel.rpy"))
    try:
        tunnel = geometry.Box(center=center, half_extents=half,
                              rotation=rot if rot is not None else np.eye(3))
        cloud = geometry.PointCloud(points, cell_size=cell)
        scene = geometry.Scene(cloud=cloud, tunnel=tunnel,
                               excluded_links=excluded, safety_margin=margin)
    except geometry.GeometryError as e:
        raise SpecError(f"{path}: {e}") from e
    return scene, None


def parse_path(doc: dict, path: str = "path") -> TaskPath:
    if not isinstance(doc, dict):
        raise SpecError(f"{path}: expected an object")
    targets = _mat(_req(doc, "targets", path), 3, f"{path}.targets")
    max_step = _num(doc.get("max_step", 0.05), f"{path}.max_step")
    try:
        return TaskPath(targets=targets, max_step=max_step)
    except Exception as e:
        raise SpecError(f"{path}: {e}") from e


def parse_configs(doc: dict | None, path: str = "configs"):
    doc = doc or {}
    if not isinstance(doc, dict):
        raise SpecError(f"{path}: expected an object")
    cs_doc = doc.get("cspace", {})
    ns_doc = dict(doc.get("nullspace", {}))
    try:
        cs_cfg = CSpaceConfig(**cs_doc)
    except (TypeError, ValueError) as e:
        raise SpecError(f"{path}.cspace: {e}") from e
    strategy_doc = ns_doc.pop("strategy", None)
    strategy = None
    if strategy_doc is not None:
        sp = f"{path}.nullspace.strategy"
        kind = _req(strategy_doc, "kind", sp)
        opts = {k: v for k, v in strategy_doc.items() if k != "kind"}
        try:
            if kind == "sampling":
                strategy = UnitSphereSampling(**opts)
            elif kind == "gradient":
                strategy = ProjectedGradientDescent(**opts)
            else:
                raise SpecError(f"{sp}.kind: unknown strategy '{kind}'")
        except TypeError as e:
            raise SpecError(f"{sp}: {e}") from e
    try:
        if strategy is not None:
            ns_cfg = NullSpaceConfig(strategy=strategy, **ns_doc)
        else:
            ns_cfg = NullSpaceConfig(**ns_doc)
    except (TypeError, ValueError) as e:
        raise SpecError(f"{path}.nullspace: {e}") from e
    return cs_cfg, ns_cfg


@dataclass(frozen=True)
class RobotGrid:
    joints: tuple[int, ...] = (2, 3, 4)
    delta: float = 0.1
    steps: int = 5


@dataclass(frozen=True)
class WorkpieceGrid:
    yaw_deg: float = 15.0
    pitch_deg: float = 15.0
    steps: int = 7


@dataclass(frozen=True)
class Perturbations:
    robot: RobotGrid | None = None
    workpiece: WorkpieceGrid | None = None


def parse_perturbations(doc: dict | None, dof: int,
                        path: str = "perturbations") -> Perturbations:
    if doc is None:
        return Perturbations()
    if not isinstance(doc, dict):
        raise SpecError(f"{path}: expected an object")
    robot = None
    if "robot" in doc:
        rd = doc["robot"]
        rp = f"{path}.robot"
        joints = rd.get("joints", [2, 3, 4])
        if not isinstance(joints, list) or not joints:
            raise SpecError(f"{rp}.joints: expected a non-empty list")
        joints = tuple(_int(j, f"{rp}.joints[{i}]") for i, j in enumerate(joints))
        for j in joints:
            if not 0 <= j < dof:
                raise SpecError(f"{rp}.joints: index {j} out of range [0, {dof})")
        robot = RobotGrid(
            joints=joints,
            delta=_num(rd.get("delta", 0.1), f"{rp}.delta"),
            steps=_int(rd.get("steps", 5), f"{rp}.steps"),
        )
        if robot.delta <= 0.0 or robot.steps < 2:
            raise SpecError(f"{rp}: delta must be > 0 and steps >= 2")
    workpiece = None
    if "workpiece" in doc:
        wd = doc["workpiece"]
        wp = f"{path}.workpiece"
        workpiece = WorkpieceGrid(
            yaw_deg=_num(wd.get("yaw_deg", 15.0), f"{wp}.yaw_deg"),
            pitch_deg=_num(wd.get("pitch_deg", 15.0), f"{wp}.pitch_deg"),
            steps=_int(wd.get("steps", 7), f"{wp}.steps"),
        )
        if workpiece.steps < 2:
            raise SpecError(f"{wp}.steps: must be >= 2")
    return Perturbations(robot=robot, workpiece=workpiece)


# ---------------------------------------------------------------------------
# Experiment specs


@dataclass
class ExperimentSpec:
    model: kinematics.RobotModel
    x_init: np.ndarray
    scene: geometry.Scene
    path: TaskPath
    cs_cfg: CSpaceConfig
    ns_cfg: NullSpaceConfig
    perturbations: Perturbations
    seed: int
    doc: dict


def spec_from_doc(doc: dict, base_dir: Path | None = None) -> ExperimentSpec:
    if not isinstance(doc, dict):
        raise SpecError("spec: expected a JSON object at top level")
    version = _req(doc, "version", "spec")
    if version != SCHEMA_VERSION:
        raise SpecError(f"spec.version: unsupported version {version!r} "
                        f"(supported: {SCHEMA_VERSION})")
    seed = _int(_req(doc, "seed", "spec"), "spec.seed")
    model, x_init = parse_robot(_req(doc, "robot", "spec"))
    scene, gen_path = parse_scene(_req(doc, "scene", "spec"), model, base_dir)
    if gen_path is not None:
        if "path" in doc:
            raise SpecError("spec.path: must be absent when the scene has a generator")
        path = gen_path
    else:
        path = parse_path(_req(doc, "path", "spec"))
    cs_cfg, ns_cfg = parse_configs(doc.get("configs"))
    perts = parse_perturbations(doc.get("perturbations"), model.dof)
    return ExperimentSpec(model=model, x_init=x_init, scene=scene, path=path,
                          cs_cfg=cs_cfg, ns_cfg=ns_cfg, perturbations=perts,
                          seed=seed, doc=doc)


def load_spec(path: str | Path) -> ExperimentSpec:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise SpecError(f"cannot read spec {path}: {e}") from e
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise SpecError(f"{path}:{e.lineno}:{e.colno}: invalid JSON: {e.msg}") from e
    return spec_from_doc(doc, base_dir=path.parent)


def save_spec(spec: ExperimentSpec, path: str | Path) -> None:
    Path(path).write_text(json.dumps(spec.doc, indent=2) + "\n")


# ---------------------------------------------------------------------------
# Perturbation expansion


@dataclass
class Trial:
    trial_id: str
    spec: ExperimentSpec
    valid: bool = True
    invalid_reason: str = ""


def _transform_scene(scene: geometry.Scene, rotation: np.ndarray,
                     pivot: np.ndarray) -> geometry.Scene:
    translation = pivot - rotation @ pivot
    points = scene.cloud.points @ rotation.T + translation
    return geometry.Scene(
        cloud=geometry.PointCloud(points, cell_size=scene.cloud.cell_size),
        tunnel=scene.tunnel.transformed(rotation, translation),
        excluded_links=scene.excluded_links,
        safety_margin=scene.safety_margin,
    )


def workpiece_pivot(scene: geometry.Scene) -> np.ndarray:
    """Pivot for workpiece perturbations: the cloud's bounding-box center."""
    pts = scene.cloud.points
    return (pts.min(axis=0) + pts.max(axis=0)) / 2.0


def perturb(spec: ExperimentSpec) -> list[Trial]:
    """Expand perturbation grids into trials (Cartesian product of axes).

    Trials whose perturbed initial state leaves the joint limits are flagged
    invalid rather than dropped, so reports can count them.
    """
    robot_offsets: list[tuple[str, np.ndarray]] = [("", np.zeros(spec.model.dof))]
    if spec.perturbations.robot is not None:
        grid = spec.perturbations.robot
        deltas = np.linspace(-grid.delta, grid.delta, grid.steps)
        robot_offsets = []
        index = np.zeros(len(grid.joints), dtype=int)
        total = grid.steps ** len(grid.joints)
        for flat in range(total):
            rem = flat
            offset = np.zeros(spec.model.dof)
            for axis in range(len(grid.joints) - 1, -1, -1):
                index[axis] = rem % grid.steps
                rem //= grid.steps
            for axis, joint in enumerate(grid.joints):
                offset[joint] = deltas[index[axis]]
            robot_offsets.append((f"robot{flat:03d}", offset))

    work_rots: list[tuple[str, np.ndarray | None]] = [("", None)]
    if spec.perturbations.workpiece is not None:
        grid = spec.perturbations.workpiece
        yaws = np.deg2rad(np.linspace(-grid.yaw_deg, grid.yaw_deg, grid.steps))
        pitches = np.deg2rad(np.linspace(-grid.pitch_deg, grid.pitch_deg, grid.steps))
        work_rots = []
        for i, yaw in enumerate(yaws):
            Ry = kinematics.rotation_about_axis(np.array([0.0, 1.0, 0.0]), yaw)
            for j, pitch in enumerate(pitches):
                Rz = kinematics.rotation_about_axis(np.array([0.0, 0.0, 1.0]), pitch)
                work_rots.append((f"work{i * grid.steps + j:03d}", Ry @ Rz))

    pivot = workpiece_pivot(spec.scene)
    trials: list[Trial] = []
    scene_cache: dict[str, tuple[geometry.Scene, TaskPath]] = {}
    for wname, rot in work_rots:
        if rot is None:
            scene, path = spec.scene, spec.path
        else:
            if wname not in scene_cache:
                translation = pivot - rot @ pivot
                targets = spec.path.targets @ rot.T + translation
                scene_cache[wname] = (
                    _transform_scene(spec.scene, rot, pivot),
                    TaskPath(targets=targets, max_step=spec.path.max_step),
                )
            scene, path = scene_cache[wname]
        for rname, offset in robot_offsets:
            trial_id = "_".join(n for n in (rname, wname) if n) or "base"
            x_init = spec.x_init + offset
            trial_spec = dataclasses.replace(
                spec, x_init=x_init, scene=scene, path=path)
            if not spec.model.within_limits(x_init):
                trials.append(Trial(trial_id, trial_spec, valid=False,
                                    invalid_reason="initial state outside joint limits"))
            else:
                trials.append(Trial(trial_id, trial_spec))
    return trials


# ---------------------------------------------------------------------------
# Bundled documents


def default_robot_doc(initial_state=None) -> dict:
    """Desk-scale 6R arm used by the bundled benchmark scenes."""
    if initial_state is None:
        initial_state = [0.085601, -0.6279, 0.968521, -0.002157, 0.262055, 0.0]
    return {
        "name": "desk6r",
        "joints": [
            {"axis": [0, 0, 1], "origin": {"xyz": [0.0, 0.0, 0.16]}},
            {"axis": [0, 1, 0], "origin": {"xyz": [0.0, 0.0, 0.12]}},
            {"axis": [0, 1, 0], "origin": {"xyz": [0.35, 0.0, 0.0]}},
            {"axis": [1, 0, 0], "origin": {"xyz": [0.18, 0.0, 0.0]}},
            {"axis": [0, 1, 0], "origin": {"xyz": [0.16, 0.0, 0.0]}},
            {"axis": [1, 0, 0], "origin": {"xyz": [0.08, 0.0, 0.0]}},
        ],
        "joint_limits": [
            [-3.1, 3.1],
            [-1.6, 2.4],
            [-2.8, 2.8],
            [-3.1, 3.1],
            [-2.5, 2.5],
            [-3.1, 3.1],
        ],
        "link_capsules": [
            {"link": 1, "p0": [0, 0, 0], "p1": [0.35, 0, 0], "radius": 0.055},
            {"link": 2, "p0": [0, 0, 0], "p1": [0.18, 0, 0], "radius": 0.05},
            {"link": 3, "p0": [0, 0, 0], "p1": [0.16, 0, 0], "radius": 0.045},
            {"link": 4, "p0": [0, 0, 0], "p1": [0.08, 0, 0], "radius": 0.04},
            {"link": 5, "p0": [0, 0, 0], "p1": [0.04, 0, 0], "radius": 0.03},
        ],
        "tool_point": {"link": 5, "offset": [0.04, 0.0, 0.0]},
        "initial_state": list(initial_state),
    }


def tunnel_experiment_doc(perturbation: str = "robot", seed: int = 20240,
                          waypoints: int = 100, generator: dict | None = None,
                          initial_state=None, configs: dict | None = None) -> dict:
    """Complete experiment document around the generated tunnel scene."""
    gen = {"tunnel": [0.31, 0.30, 0.30], "density": 3000.0,
           "waypoints": waypoints, "seed": 7}
    if generator:
        gen.update(generator)
    doc = {
        "version": SCHEMA_VERSION,
        "seed": seed,
        "robot": default_robot_doc(initial_state),
        "scene": {
            "generator": gen,
            "excluded_links": [5],
            "safety_margin": 0.0,
        },
        "configs": configs or {},
    }
    if perturbation == "robot":
        doc["perturbations"] = {"robot": {"joints": [2, 3, 4], "delta": 0.1, "steps": 5}}
    elif perturbation == "workpiece":
        doc["perturbations"] = {"workpiece": {"yaw_deg": 15.0, "pitch_deg": 15.0, "steps": 7}}
    elif perturbation != "none":
        raise SpecError(f"unknown perturbation kind '{perturbation}'")
    return doc


def bundled_spec_path(name: str) -> Path:
    """Path of a spec file shipped in the package data directory."""
    from importlib.resources import files

    p = files("hybridplan").joinpath("data", name)
    return Path(str(p))
