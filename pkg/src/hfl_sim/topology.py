"""Network geometry: macro base station at the origin, hexagonal small-cell
clusters around it, and mobile users scattered uniformly over a disk.

Cluster centers follow a hexagonal packing: the center cell sits at the
origin and up to six ring cells sit at a distance equal to the inscribed
diameter of a hexagon, so adjacent centers are exactly one cell pitch apart.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace

import numpy as np

# Path loss d**alpha diverges as d -> 0; points closer than this to any
# small-cell base station are resampled.
MIN_MU_SBS_DISTANCE = 1.0


@dataclass(frozen=True)
class GeoPoint:
    x: float
    y: float


def distance(a: GeoPoint, b: GeoPoint) -> float:
    """Euclidean distance in meters."""
    return math.hypot(a.x - b.x, a.y - b.y)


@dataclass(frozen=True)
class LayoutConfig:
    """Geometry knobs. Defaults give the 7-cluster deployment used throughout:
    750 m deployment disk, 500 m hexagon inscribed diameter, reuse pattern one
    (no sub-carrier splitting; raise reuse_distance_d_th above the 500 m
    center spacing to force a 3-color split instead)."""

    deployment_radius: float = 750.0
    hex_inscribed_diameter: float = 500.0
    n_clusters: int = 7
    mus_per_cluster: int = 4
    reuse_distance_d_th: float = 0.0
    seed: int = 0

    def validate(self) -> list[str]:
        errs = []
        if not self.deployment_radius > 0:
            errs.append("layout.deployment_radius must be > 0")
        if not self.hex_inscribed_diameter > 0:
            errs.append("layout.hex_inscribed_diameter must be > 0")
        if self.n_clusters < 1:
            errs.append("layout.n_clusters must be >= 1")
        if self.n_clusters > 7:
            errs.append("layout.n_clusters > 7 unsupported (center cell plus one ring)")
        if self.mus_per_cluster < 1:
            errs.append("layout.mus_per_cluster must be >= 1")
        if self.reuse_distance_d_th < 0:
            errs.append("layout.reuse_distance_d_th must be >= 0")
        if self.n_clusters > 1 and self.hex_inscribed_diameter > self.deployment_radius:
            errs.append("layout: ring SBS centers would fall outside the deployment disk")
        return errs


@dataclass
class NetworkLayout:
    mbs: GeoPoint
    sbs_positions: list[GeoPoint]
    mu_positions: list[GeoPoint]
    cluster_of_mu: list[int]
    color_of_cluster: list[int]
    n_colors: int

    @property
    def n_clusters(self) -> int:
        return len(self.sbs_positions)

    @property
    def n_mus(self) -> int:
        return len(self.mu_positions)

    def cluster_members(self, n: int) -> list[int]:
        return [k for k, c in enumerate(self.cluster_of_mu) if c == n]

    def mu_sbs_distance(self, k: int) -> float:
        return distance(self.mu_positions[k], self.sbs_positions[self.cluster_of_mu[k]])

    def mu_mbs_distance(self, k: int) -> float:
        return distance(self.mu_positions[k], self.mbs)


def _ring_positions(n_ring: int, pitch: float) -> list[GeoPoint]:
    pts = []
    for i in range(n_ring):
        ang = math.radians(60.0 * i)
        pts.append(GeoPoint(pitch * math.cos(ang), pitch * math.sin(ang)))
    return pts


def _rebalance(mus, sbs, assign, target):
    """Move the farthest member of the most overfull cluster to the nearest
    deficient cluster until every cluster holds exactly `target` MUs."""
    assign = list(assign)
    n_sbs = len(sbs)
    while True:
        sizes = [0] * n_sbs
        for c in assign:
            sizes[c] += 1
        over = [n for n in range(n_sbs) if sizes[n] > target]
        if not over:
            break
        src = max(over, key=lambda n: (sizes[n], -n))
        members = [k for k, c in enumerate(assign) if c == src]
        mover = max(members, key=lambda k: (distance(mus[k], sbs[src]), -k))
        deficient = [n for n in range(n_sbs) if sizes[n] < target]
        dest = min(deficient, key=lambda n: (distance(mus[mover], sbs[n]), n))
        assign[mover] = dest
    return assign


def build_layout(config: LayoutConfig) -> NetworkLayout:
    """Generate a layout: place SBSs on the hexagonal grid, sample MU positions
    uniformly over the deployment disk, attach each MU to the nearest SBS and
    rebalance so every cluster ends up with exactly mus_per_cluster members.

    Pure function of the config (including its seed).
    """
    problems = config.validate()
    if problems:
        raise ValueError("; ".join(problems))
    sbs = [GeoPoint(0.0, 0.0)]
    sbs += _ring_positions(config.n_clusters - 1, config.hex_inscribed_diameter)

    rng = np.random.default_rng(np.random.SeedSequence(config.seed))
    total = config.n_clusters * config.mus_per_cluster
    mus: list[GeoPoint] = []
    while len(mus) < total:
        r = config.deployment_radius * math.sqrt(rng.random())
        theta = 2.0 * math.pi * rng.random()
        p = GeoPoint(r * math.cos(theta), r * math.sin(theta))
        if min(distance(p, s) for s in sbs) < MIN_MU_SBS_DISTANCE:
            continue
        mus.append(p)

    assign = [min(range(len(sbs)), key=lambda n: (distance(p, sbs[n]), n)) for p in mus]
    assign = _rebalance(mus, sbs, assign, config.mus_per_cluster)
    layout = NetworkLayout(
        mbs=GeoPoint(0.0, 0.0),
        sbs_positions=sbs,
        mu_positions=mus,
        cluster_of_mu=assign,
        color_of_cluster=[0] * len(sbs),
        n_colors=1,
    )
    return color_clusters(layout, config.reuse_distance_d_th)


def color_clusters(layout: NetworkLayout, d_th: float) -> NetworkLayout:
    """Greedy conflict-graph coloring. Two clusters conflict when their centers
    are closer than d_th; vertices are colored in descending-degree order
    (ties by index) with the smallest free color."""
    n = layout.n_clusters
    adj = [[False] * n for _ in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            if distance(layout.sbs_positions[i], layout.sbs_positions[j]) < d_th:
                adj[i][j] = adj[j][i] = True
    degree = [sum(row) for row in adj]
    order = sorted(range(n), key=lambda i: (-degree[i], i))
    colors = [-1] * n
    for i in order:
        used = {colors[j] for j in range(n) if adj[i][j] and colors[j] >= 0}
        c = 0
        while c in used:
            c += 1
        colors[i] = c
    return replace(
        layout,
        color_of_cluster=colors,
        n_colors=max(colors) + 1,
    )


def layout_to_json(layout: NetworkLayout) -> str:
    return json.dumps(
        {
            "mbs": [layout.mbs.x, layout.mbs.y],
            "sbs_positions": [[p.x, p.y] for p in layout.sbs_positions],
            "mu_positions": [[p.x, p.y] for p in layout.mu_positions],
            "cluster_of_mu": list(layout.cluster_of_mu),
            "color_of_cluster": list(layout.color_of_cluster),
            "n_colors": layout.n_colors,
        },
        sort_keys=True,
    )


def layout_from_json(text: str) -> NetworkLayout:
    raw = json.loads(text)
    return NetworkLayout(
        mbs=GeoPoint(*raw["mbs"]),
        sbs_positions=[GeoPoint(*p) for p in raw["sbs_positions"]],
        mu_positions=[GeoPoint(*p) for p in raw["mu_positions"]],
        cluster_of_mu=[int(c) for c in raw["cluster_of_mu"]],
        color_of_cluster=[int(c) for c in raw["color_of_cluster"]],
        n_colors=int(raw["n_colors"]),
    )
