"""Scale sequence, induction arithmetic, recursion contraction and the tail sum."""
import mpmath

from cylperc.renorm import (A0_FULL, ScaleSequence, a0_hat, check_induction_step,
                            induction_exponents, iterate_recursion, smallest_k0, tail_bound)

for lhs, rhs in induction_exponents():
    print(f"exponent check {lhs} < {rhs}: {lhs < rhs}")
for c in (1, 10):
    print(f"induction step with c={c}: {check_induction_step(a0_hat(c, c), c, c)}")

for n, p, q, pt, qt in iterate_recursion(ScaleSequence(a0_hat(1, 1)), 6):
    print(f"n={n}  log10 p={float(mpmath.log10(p)):.4g} (threshold {float(mpmath.log10(pt)):.4g})")

print(f"tail sum at a0_hat=1e16, k0=1: {float(tail_bound(1e16, 1)):.4g}")
print(f"smallest k0 with tail < 1/3 at a0_hat=288^6: {smallest_k0(A0_FULL)}")
