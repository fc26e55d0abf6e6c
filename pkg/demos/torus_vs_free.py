"""Mixing on an expanding family versus a torus.

On the cycle a Fourier observable stays correlated across eigenvectors no
matter how small the energy window. On random 4-regular graphs an iid
observable has a quantum-ergodicity average that decays with N, and the
window moment falls as the window shrinks.
"""
from qmix import actions as ac
from qmix import group_core as gc
from qmix import quantum_stats as qs
from qmix import spectra as spc
from qmix.group_algebra import AlgebraElement


def eigensystem(act):
    p = AlgebraElement.indicator(gc.standard_generators(act.spec))
    return spc.eigendecompose(ac.representation_matrix(act, p))


print("   size   cycle qm(η=1)   free qe")
for M in (50, 100, 200, 400, 800):
    torus = ac.torus_action(M, 1)
    qm_t = qs.qm_statistic(eigensystem(torus), qs.fourier_observable(torus, [1]), torus, 0.0, 0.0, 1.0)
    free = ac.random_free_action(M, 2, seed=M)
    qe_f = qs.qe_statistic(eigensystem(free), qs.iid_observable(M, seed=M), free, (-1.5, 1.5))
    print(f"{M:7d}   {qm_t:13.3f}   {qe_f:7.5f}")

N = 2000
free = ac.random_free_action(N, 2, seed=1)
sys = eigensystem(free)
obs = qs.iid_observable(N, seed=1)
print(f"\nfree graph, N={N}")
for eta in (1.0, 0.5, 0.25, 0.125):
    print(f"η={eta:5.3f}  qm = {qs.qm_statistic(sys, obs, free, 0.0, 0.0, eta):.4f}")
