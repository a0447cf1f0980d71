"""
Scoring a drive cycle
=====================

The energy model is a longitudinal EV model: drive energy at the battery,
regenerated braking energy and a constant auxiliary draw, with
used = output - input + lost. Halts count spells under 10 km/h lasting at
least 2 s. This script scores a stop-and-go cycle against a steady cruise of
the same distance.
"""

import numpy as np

from zonalsim.energy import EVParams, ledger_for_cycle
from zonalsim.metrics import detect_halts

p = EVParams()
v = 50 / 3.6

# %% Stop-and-go: three signal stops between short cruises
block = [min(v, 2.6 * k) for k in range(1, 7)] + [v] * 8 + [max(0.0, v - 4.5 * k) for k in range(1, 5)] + [0.0] * 20
stop_go = block * 3
dist = float(np.sum(stop_go))
cruise = [v] * int(round(dist / v))

# the cruise is already at speed when scoring starts
for name, cyc, v0 in (("stop-and-go", stop_go, 0.0), ("cruise", cruise, v)):
    led = ledger_for_cycle(cyc, 1.0, p, v0=v0)
    print(f"{name:12s} {len(cyc):4d} s {np.sum(cyc):6.0f} m  used {led.used / 1e3:7.1f} kJ "
          f"(out {led.output / 1e3:6.1f}, regen {led.input / 1e3:5.1f}, aux {led.lost / 1e3:5.1f})  "
          f"halts {detect_halts(cyc, 1.0)}")
