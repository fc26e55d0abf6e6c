"""How fast the polynomial window approaches the Lorentzian η Im g^z."""
import numpy as np

from qmix import approx as ap

a, z = 4.0, 0.3 + 0.25j
n0 = ap.min_degree(z.imag, a)
print(f"degree needed by the precondition: n = {n0}")
for n in (10, 20, 40, 80, 160, n0):
    w = ap.resolvent_poly(z, a, n, strict=False)
    print(f"n={n:5d}  degree {w.degree:5d}  sup error {w.error:.3e}"
          f"  target e^(-1/ε) = {w.bound:.3e}  precondition {w.precondition}")

lam = np.linspace(-a, a, 9)
w = ap.resolvent_poly(z, a, n0)
print("λ      poly      target")
for x, u, v in zip(lam, w(lam), w.target(lam)):
    print(f"{x:+.1f}  {u:.6f}  {v:.6f}")
