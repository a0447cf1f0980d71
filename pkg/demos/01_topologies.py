"""
Two road layouts on the same city blocks
========================================

A zonal layout wraps every 250 m block in a one-way loop; neighbouring loops
turn in opposite directions, so traffic on a shared boundary flows the same
way and vehicles transfer with zipper merges instead of crossing. The
traditional layout is a two-way grid with signalized junctions.

This script draws both layouts, counts conflict points per junction type and
measures how much longer zonal routes are.
"""

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from zonalsim.harness import default_out_root
from zonalsim.netcore import Router, route_length_ratio, sample_anchor_pairs, validate_network
from zonalsim.topogen import GridSpec, build_network, count_conflict_points

out = default_out_root() / "demos"
out.mkdir(parents=True, exist_ok=True)

# %% Build a 3x3 district in both layouts and check they are well formed
spec = GridSpec(rows=3, cols=3)
zonal = build_network("zonal", spec)
trad = build_network("trad-static", spec)
for name, net in (("zonal", zonal), ("traditional", trad)):
    issues = validate_network(net)
    print(f"{name:12s} {len(net.nodes):4d} nodes {len(net.edges):4d} edges, "
          f"{len(net.controllers)} signals, {len(net.merge_zones)} merge zones, issues: {len(issues)}")

# %% Draw them side by side; merge edges in orange, signalized junctions in red
fig, axes = plt.subplots(1, 2, figsize=(11, 5.5))
for ax, (title, net) in zip(axes, (("zonal loops", zonal), ("signalized grid", trad))):
    for e in net.edges.values():
        xs, ys = zip(*e.geometry)
        ax.plot(xs, ys, color="tab:orange" if e.kind == "zipper-merge" else "0.4", lw=1)
    for c in net.controllers:
        x, y = net.nodes[c.junction].position
        ax.plot(x, y, "o", color="tab:red", ms=4)
    ax.set_title(title)
    ax.set_aspect("equal")
    ax.set_axis_off()
fig.tight_layout()
fig.savefig(out / "topologies.svg")
print("layout plot:", out / "topologies.svg")

# %% Conflict points per junction type
for kind in ("signalized-intersection", "roundabout", "zonal-boundary"):
    c = count_conflict_points(kind)
    print(f"{kind:24s} crossing {c.crossing:2d} merging {c.merging:2d} diverging {c.diverging:2d} total {c.total:2d}")

# %% The price of no crossings: zonal routes are longer
big = GridSpec(rows=10, cols=10)
z10, t10 = build_network("zonal", big), build_network("trad-static", big)
pairs = sample_anchor_pairs([z10, t10], 1000, seed=1)
ratio = route_length_ratio(z10, t10, pairs, Router(z10), Router(t10))
print(f"10x10 mean route length, zonal over traditional: {ratio:.3f}")
