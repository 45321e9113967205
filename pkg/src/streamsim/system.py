"""Analytic system model: bandwidth thinning, rooflines, operating points.

The interconnect is a tree: clusters feed S1 groups, S1 groups feed S2, S2
feed S3, S3 feed a chiplet's memory channel. Each level thins bandwidth, so a
lone cluster sees its full S1 uplink while all clusters together are bound by
the root. Everything here is closed-form; nothing simulates cycles.

Performance accounting is double precision with one FMA = 2 flops; every peak
derives from cores x 2 x frequency.
"""

import csv
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import yaml

from .errors import ConfigError, MissingEnergyData

FLOPS_PER_FMA = 2

# reporting scenarios quoted for full-system workloads
DETACH_LOW_INTENSITY = 0.05
DETACH_HIGH_INTENSITY = 0.14
DETACH_NEAR_RIDGE = 0.34

_DATA_DIR = Path(__file__).parent / "data"
DEFAULT_SYSTEM_YAML = _DATA_DIR / "system.yaml"
DEFAULT_WORKLOADS_CSV = _DATA_DIR / "workloads.csv"


@dataclass(frozen=True)
class Level:
    name: str
    fanout: int                  # members per parent node
    uplink_bandwidth: float      # bytes/s per uplink


@dataclass(frozen=True)
class HierarchyTree:
    levels: tuple                # leaf to root, chiplet level last
    chiplets: int
    hbm_channels: tuple          # bytes/s per channel

    def __post_init__(self):
        if not self.levels or self.chiplets < 1 or not self.hbm_channels:
            raise ConfigError("topology needs levels, chiplets and HBM channels")
        for lvl in self.levels:
            if lvl.fanout < 1 or lvl.uplink_bandwidth <= 0:
                raise ConfigError(f"level '{lvl.name}' has a non-positive "
                                  "fanout or bandwidth")

    @property
    def n_clusters(self):
        n = self.chiplets
        for lvl in self.levels:
            n *= lvl.fanout
        return n

    @property
    def root_bandwidth(self):
        return sum(self.hbm_channels)

    def uplinks(self, level: Level):
        """Number of uplinks of this level in the whole system."""
        per = 1
        for lvl in self.levels:
            per *= lvl.fanout
            if lvl is level:
                return self.n_clusters // per
        raise ConfigError(f"level '{level.name}' is not in this tree")


def sustainable_cluster_bandwidth(tree: HierarchyTree, active_clusters: int):
    """Bytes/s one cluster can sustain from root memory with
    `active_clusters` streaming uniformly.

    Each level contributes min(own uplink, fair share of that level's
    aggregate); the result is the tightest level, never more than the root
    divided across all active clusters.
    """
    if not 1 <= active_clusters <= tree.n_clusters:
        raise ConfigError(f"active_clusters {active_clusters} outside "
                          f"1..{tree.n_clusters}")
    share = tree.root_bandwidth / active_clusters
    for lvl in tree.levels:
        count = tree.uplinks(lvl)
        if active_clusters > count:
            level_share = lvl.uplink_bandwidth * count / active_clusters
        else:
            level_share = lvl.uplink_bandwidth
        share = min(share, level_share)
    return share


# ------------------------------------------------------------------ roofline

@dataclass(frozen=True)
class RooflineParams:
    peak_flops: float
    mem_bandwidth: float

    def __post_init__(self):
        if self.peak_flops <= 0 or self.mem_bandwidth <= 0:
            raise ConfigError("roofline parameters must be positive")

    @property
    def ridge_intensity(self):
        return self.peak_flops / self.mem_bandwidth


class WorkloadKind(Enum):
    COMPUTE_BOUND = "compute"
    MEMORY_BOUND = "memory"


@dataclass(frozen=True)
class WorkloadDescriptor:
    name: str
    flops: float
    bytes: float
    kind: WorkloadKind | None = None    # classified against the ridge if None

    def __post_init__(self):
        if self.flops < 0 or self.bytes < 0 or (self.flops == 0 and self.bytes == 0):
            raise ConfigError(f"workload '{self.name}' needs non-negative "
                              "flops/bytes, not both zero")

    @property
    def intensity(self):
        if self.bytes == 0:
            return math.inf
        return self.flops / self.bytes

    def classify(self, roofline: RooflineParams) -> WorkloadKind:
        if self.kind is not None:
            return self.kind
        return (WorkloadKind.COMPUTE_BOUND
                if self.intensity >= roofline.ridge_intensity
                else WorkloadKind.MEMORY_BOUND)


def attainable_performance(workload: WorkloadDescriptor, roofline: RooflineParams,
                           detachment: float = 0.0):
    """Flop/s bound: (1 - detachment) x min(peak, bandwidth x intensity)."""
    if not 0.0 <= detachment < 1.0:
        raise ConfigError(f"detachment {detachment} outside [0, 1)")
    i = workload.intensity
    bound = roofline.peak_flops if math.isinf(i) else \
        min(roofline.peak_flops, roofline.mem_bandwidth * i)
    return (1.0 - detachment) * bound


def roofline_report(workloads, roofline: RooflineParams, measured=None):
    """Rows of (name, intensity, kind, attainable, measured, detachment).

    `measured` maps workload name to achieved flop/s; detachment is the
    relative shortfall below the detachment-0 bound.
    """
    if not workloads:
        raise ConfigError("no workloads to report on")
    measured = measured or {}
    rows = []
    for w in workloads:
        bound = attainable_performance(w, roofline)
        m = measured.get(w.name)
        rows.append({
            "name": w.name,
            "intensity": w.intensity,
            "kind": w.classify(roofline).value,
            "attainable": bound,
            "measured": m,
            "detachment": None if m is None else 1.0 - m / bound,
        })
    return rows


# ------------------------------------------------------------------ DVFS points

@dataclass(frozen=True)
class OperatingPoint:
    name: str
    vdd: float
    freq: float
    perf_24core: float           # stated figure; checked against 24 x 2 x freq
    efficiency: float | None = None   # flop/s per watt

    def __post_init__(self):
        computed = 24 * FLOPS_PER_FMA * self.freq
        if abs(self.perf_24core - computed) > 0.05 * computed:
            raise ConfigError(
                f"operating point '{self.name}': stated {self.perf_24core:g} "
                f"flop/s is more than 5% from 24 x 2 x {self.freq:g} Hz")


def scale_performance(point: OperatingPoint, n_cores: int):
    """Peak flop/s of n_cores at this point (derived, not the stated figure)."""
    if n_cores < 1:
        raise ConfigError(f"n_cores {n_cores} must be at least 1")
    return n_cores * FLOPS_PER_FMA * point.freq


def power_and_efficiency(point: OperatingPoint, n_cores: int):
    """(watts, flop/s/W) for n_cores; power follows the stated performance
    figure linearly, so the efficiency is invariant under core count."""
    if point.efficiency is None:
        raise MissingEnergyData(
            f"operating point '{point.name}' carries no efficiency figure")
    if n_cores < 1:
        raise MissingEnergyData(f"degenerate core count {n_cores}")
    perf = point.perf_24core * n_cores / 24
    return perf / point.efficiency, point.efficiency


def cluster_roofline(point: OperatingPoint, n_cores=8, uplink_bandwidth=32.0e9):
    """Single-cluster roofline at an operating point: smallest unit the
    cycle-level simulator can be compared against."""
    return RooflineParams(peak_flops=scale_performance(point, n_cores),
                          mem_bandwidth=uplink_bandwidth)


# ------------------------------------------------------------------ config IO

@dataclass(frozen=True)
class SystemModel:
    tree: HierarchyTree
    points: dict                 # name -> OperatingPoint

    def point(self, name):
        try:
            return self.points[name]
        except KeyError:
            raise ConfigError(f"unknown operating point '{name}'") from None


def load_system(path=None) -> SystemModel:
    path = Path(path) if path is not None else DEFAULT_SYSTEM_YAML
    try:
        raw = yaml.safe_load(path.read_text())
    except (OSError, yaml.YAMLError) as e:
        raise ConfigError(f"cannot load system config {path}: {e}") from e
    try:
        topo = raw["topology"]
        levels = tuple(Level(str(l["name"]), int(l["fanout"]),
                             float(l["uplink_bandwidth"]))
                       for l in topo["levels"])
        tree = HierarchyTree(levels=levels, chiplets=int(topo["chiplets"]),
                             hbm_channels=tuple(float(b) for b in
                                                topo["hbm_channels"]))
        points = {}
        for name, p in raw["operating_points"].items():
            points[name] = OperatingPoint(
                name=name, vdd=float(p["vdd"]), freq=float(p["freq"]),
                perf_24core=float(p["perf_24core"]),
                efficiency=float(p["efficiency"]) if "efficiency" in p else None)
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigError(f"malformed system config {path}: {e}") from e
    return SystemModel(tree=tree, points=points)


def load_workloads(path=None):
    path = Path(path) if path is not None else DEFAULT_WORKLOADS_CSV
    out = []
    try:
        with open(path, newline="") as f:
            for row in csv.DictReader(f):
                kind = row.get("kind", "").strip()
                out.append(WorkloadDescriptor(
                    name=row["name"].strip(),
                    flops=float(row["flops"]),
                    bytes=float(row["bytes"]),
                    kind=WorkloadKind(kind) if kind else None))
    except (OSError, KeyError, ValueError) as e:
        raise ConfigError(f"cannot load workloads {path}: {e}") from e
    if not out:
        raise ConfigError(f"no workloads in {path}")
    return out
