"""
A small capacity sweep
======================

Sweeps the demand rate upward on a 3x3 district for two seeds per rate,
marks the first rate where N(t) keeps growing after warmup as the saturation
rate, and writes the trend tables and plots. The full desk-scale experiment
lives in configs/acceptance.toml; run it with the ``zonalsim sweep`` command.
"""

from zonalsim.harness import ExperimentConfig, default_out_root, emit_report, run_sweep
from zonalsim.topogen import GridSpec

out = default_out_root() / "demos" / "sweep"
cfg = ExperimentConfig(
    grid=GridSpec(rows=3, cols=3),
    rates=(100.0, 400.0, 100.0),
    rounds=2,
    duration=900.0,
    log_sample=0,
    out=out,
)


def progress(topo, rate, slope, stable):
    print(f"{topo:14s} {rate:5g} veh/h/zone  slope {slope:+.4f}  {'stable' if stable else 'unstable'}")


sweep = run_sweep(cfg, progress=progress)
print("saturation rate per layout:", sweep.saturation)
for path in emit_report(out, ("csv", "svg")):
    print("wrote", path)
