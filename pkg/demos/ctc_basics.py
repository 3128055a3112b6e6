"""Tour of the CTC building blocks on tiny hand-checkable lattices.

Run: python3 demos/ctc_basics.py
"""

import numpy as np

from punctasr.ctc import (
    brute_force_ctc,
    collapse,
    ctc_grad,
    ctc_loss,
    greedy_decode,
    prefix_beam_decode,
    random_lattice,
)

rng = np.random.default_rng(0)

print("collapse merges runs, then drops blanks (blank = 0):")
for path in ([1, 1, 0, 2], [0, 0], [1, 0, 1]):
    print(f"  {path} -> {collapse(path)}")

print("\nloss by dynamic programming vs. explicit path enumeration:")
lattice = random_lattice(4, 3, rng)
for target in ([], [1], [1, 2], [2, 2]):
    dp = ctc_loss(lattice, target)
    brute = brute_force_ctc(lattice, target)
    print(f"  target {target}: dp={dp:.6f} brute={brute:.6f} diff={abs(dp - brute):.2e}")

print("\ngradient against central finite differences:")
target = [1, 2]
grad = ctc_grad(lattice, target)
eps = 1e-6
for t, v in ((0, 1), (2, 2), (3, 0)):
    up, dn = lattice.copy(), lattice.copy()
    up[t, v] += eps
    dn[t, v] -= eps
    fd = (ctc_loss(up, target) - ctc_loss(dn, target)) / (2 * eps)
    print(f"  d loss / d lattice[{t},{v}]: analytic={grad[t, v]:+.6f} fd={fd:+.6f}")

print("\ngreedy vs. prefix beam decoding on a lattice where they disagree:")
probs = np.array(
    [
        [0.5, 0.4, 0.1],
        [0.5, 0.4, 0.1],
    ]
)
lattice = np.log(probs)
greedy = greedy_decode(lattice)
beam = prefix_beam_decode(lattice, beam_width=4)
print(f"  greedy (per-frame argmax):    {greedy}")
print(f"  beam (sums over alignments):  {beam}")
print(f"  loss of greedy output: {ctc_loss(lattice, greedy):.4f}")
print(f"  loss of beam output:   {ctc_loss(lattice, beam):.4f}")
