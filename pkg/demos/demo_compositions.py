"""Regenerative compositions two ways: chain increments and balls in gaps.

A strictly decreasing chain spells out a composition of n through its
increments.  The same law arises by throwing n uniforms into the gaps of
the range of 1 - exp(-xi) for the matching subordinator.  We sample both
constructions for a compound-Poisson jump measure and compare the block
counts against the exact chain probabilities.
"""

import math

import numpy as np

from sschain import (LevyTriple, absorption_distribution, composition_from_path,
                     composition_kernel, levy_atom, sample_gap_compositions,
                     sample_path)

omega = levy_atom(1.0, math.log(2.0))
kernel = composition_kernel(omega)
triple = LevyTriple(0.0, 0.0, omega)

print("chain rows (jump measure: unit atom at log 2, so gaps halve):")
for n in (2, 3, 4):
    print(f"  row {n}:", np.round(kernel.row(n), 4))

n = 4
reps = 20_000
pmf, _ = absorption_distribution(kernel, n, k_max=n)
print(f"\nexact block-count law at n = {n}:",
      {k: round(float(pmf[k]), 4) for k in range(1, n + 1)})

gap_comps = sample_gap_compositions(triple, n, reps, seed=5)
gap_counts = np.bincount([c.length for c in gap_comps], minlength=n + 1)[1:] / reps
print("balls-in-gaps frequencies:  ",
      {k: round(float(v), 4) for k, v in enumerate(gap_counts, 1)})

chain_counts = np.zeros(n, dtype=int)
for i in range(reps):
    c = composition_from_path(sample_path(kernel, n, seed=6, stream=i))
    chain_counts[c.length - 1] += 1
print("chain-increment frequencies:",
      {k: round(float(v), 4) for k, v in enumerate(chain_counts / reps, 1)})

first = gap_comps[0]
print(f"\nfirst sampled composition of {n}: parts = {first.parts} "
      f"(length {first.length})")
