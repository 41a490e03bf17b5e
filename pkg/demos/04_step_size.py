#!/usr/bin/env python3
"""How the velocity ripple depends on the integration step.

The switching term is discontinuous on the sliding surface; at a fixed step
the velocity error rattles with an amplitude proportional to h.
"""
from lagsync import published_scenario, run_closed_loop

prev = None
print("      h     ripple   position err   ratio")
for h in (2e-4, 1e-4, 5e-5, 2.5e-5):
    s = published_scenario(horizon=6.0, step=h)
    traj = run_closed_loop(s, record_every=max(1, round(1e-3 / h)))
    tail = traj.times >= 4.0
    ripple = traj.error_series("velocity")[tail].max()
    pos = traj.error_series("position")[tail].max()
    ratio = "" if prev is None else f"{prev / ripple:6.2f}"
    print(f"{h:9.2e}  {ripple:9.3e}  {pos:11.3e}   {ratio}")
    prev = ripple
