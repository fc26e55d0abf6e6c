"""Random 4-regular Schreier graphs converge to the Kesten-McKay law.

Prints the Kolmogorov distance between the empirical eigenvalue
distribution of a random action of F_2 and the limiting CDF.
"""
from qmix import actions as ac
from qmix import group_core as gc
from qmix import limit_resolvent as lr
from qmix import spectra as spc
from qmix.group_algebra import AlgebraElement

tree = lr.RegularTree(4)
for N in (250, 500, 1000, 2000):
    act = ac.random_free_action(N, 2, seed=N)
    p = AlgebraElement.indicator(gc.standard_generators(act.spec))
    sys = spc.eigendecompose(ac.representation_matrix(act, p))
    dist = spc.kolmogorov_distance(spc.empirical_measure(sys), tree.kesten_mckay_cdf)
    print(f"N={N:5d}  sup|F_N - F_KM| = {dist:.4f}")
