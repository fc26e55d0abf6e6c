"""Counting eigenvalues on a long cycle against a rigorous bracket.

On Z/M the ball of radius 2n sees no loop when 2n < M, so the bad set is
empty and the Fejér bracket around M·μ(J) is non-trivial.
"""
from qmix import actions as ac
from qmix import approx as ap
from qmix import group_core as gc
from qmix import limit_resolvent as lr
from qmix import spectra as spc
from qmix.group_algebra import AlgebraElement

J, I = (-1.0, 1.0), (-1.1, 1.1)
line = lr.Lattice(1)
C0 = ap.density_bound(line, I)
for M in (100, 200, 400, 800):
    act = ac.torus_action(M, 1)
    p = AlgebraElement.indicator(gc.standard_generators(act.spec))
    sys = spc.eigendecompose(ac.representation_matrix(act, p))
    n = (M - 1) // 2
    r = ap.cms_check(sys, line, act, p, J, n, eps_dist=0.1, C0=C0, I=I)
    print(f"M={M:4d} n={n:4d}  {r['lower']:8.1f} <= {r['count']:4d} <= {r['upper']:8.1f}"
          f"   M·μ(J) = {M * r['mass']:.1f}")
