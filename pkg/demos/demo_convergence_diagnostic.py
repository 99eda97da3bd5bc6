"""Watch every kernel in the zoo converge to its limiting exponent.

For each transition law we tabulate a_n (1 - G_n(lambda)) along a
doubling grid of start states and compare it with the Laplace exponent of
the kernel's limit measure.  The relative errors should march down; the
composition kernel is even exact at lambda = 1, where only float noise
remains.
"""

import numpy as np

from sschain import (barrier_kernel, barrier_levy_measure, beta_coalescent_kernel,
                     canonical_kernel, composition_kernel, hypothesis_h_diagnostic,
                     ignored_jump_kernel, lebesgue, power_tail, truncated_kernel)

GRID = [2 ** k for k in range(7, 14)]
LAMBDAS = [0.5, 1.0, 2.0]

pt = power_tail(0.5)
zoo = {
    "barrier walk, tail index 1/2": barrier_kernel(pt),
    "truncated walk (killed limit)": truncated_kernel(pt),
    "ignored-jump walk": ignored_jump_kernel(pt),
    "canonical kernel over Lebesgue": canonical_kernel(lebesgue(), gamma=0.5),
    "Beta(3/2, 1) coalescent": beta_coalescent_kernel(1.5, 1.0),
    "regenerative composition chain": composition_kernel(barrier_levy_measure(0.5)),
}

for title, kernel in zoo.items():
    print(f"\n=== {title} ===")
    diag = hypothesis_h_diagnostic(kernel, LAMBDAS, GRID)
    for lam in LAMBDAS:
        rows = [e for e in diag.entries if e.lam == lam]
        target = rows[0].target
        errs = " ".join(f"{e.rel_error:9.2e}" for e in rows)
        print(f"  lambda = {lam:<4g} target = {target:8.5f}   rel errors: {errs}")
    print("  scalings a_n:", np.round([kernel.scaling(n) for n in GRID], 2))
