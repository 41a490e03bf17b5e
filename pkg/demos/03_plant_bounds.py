#!/usr/bin/env python3
"""Grid check of the inertia, Coriolis and gravity bounds.

The published constants are tested over the whole parameter box. One of them
fails; the grid then suggests constants that hold, and the domination term
is sampled under those.
"""
from lagsync.agents import PUBLISHED_BOUNDS, PUBLISHED_THETA_RANGES, certify_bounds, tight_bounds
from lagsync.controller import RobustConfig, sample_domination_slack

cert = certify_bounds(PUBLISHED_THETA_RANGES, PUBLISHED_BOUNDS, raise_on_violation=False)
print("published constants:", PUBLISHED_BOUNDS)
print(f"  pass over {cert.samples_checked} samples: {cert.passed}")
if not cert.passed:
    w = cert.witness
    print(f"  worst case: {w['check']} exceeded by {w['excess']:.4g} at theta={w['theta']}, q={w['q']}")

tight = tight_bounds(PUBLISHED_THETA_RANGES, margin=0.01)
print("\ngrid-certified constants:", {k: round(v, 5) for k, v in tight.items()})
print("  pass:", certify_bounds(PUBLISHED_THETA_RANGES, tight, raise_on_violation=False).passed)

for kappa in (1.0, 3.0):
    res = sample_domination_slack(PUBLISHED_THETA_RANGES, RobustConfig.from_bounds(tight, kappa), 10_000)
    print(f"  kappa={kappa:g}: largest domination slack over 1e4 draws {res['max_slack']:.3e}")
