#!/usr/bin/env python3
"""Walk through the gain ledger for alpha = 7/9, beta = 9/7.

The published gains (gamma = 10, k1 = 20, k2 = 15) clear the gamma bounds but
sit far below the k bounds; build_ledger produces gains that pass everything.
"""
from lagsync.controller import build_ledger, check_gains, ledger_for, p_constants
from lagsync.numerics import OddRational

a, b = OddRational(7, 9), OddRational(9, 7)
print("p constants:", ", ".join(str(p) for p in p_constants(a, b)))

published = ledger_for(a, b, 10.0, 10.0, 20.0, 15.0)
print("\npublished gains")
for k, v in published.margins.items():
    print(f"  {k:7s} slack {v:+.4g}")
print("  certified:", published.certified)

built = build_ledger(a, b, margin=0.05)
print("\nconstructed with a 5% margin")
print(f"  L1 = {built.L1:.6g}, L2 = {built.L2:.6g}")
print(f"  gamma1 = {built.gamma1:.6g}, gamma2 = {built.gamma2:.6g}")
print(f"  k1 = {built.k1:.6g}, k2 = {built.k2:.6g}")
print("  check:", check_gains(a, b, built.gamma1, built.gamma2, built.k1, built.k2)["certified"])
