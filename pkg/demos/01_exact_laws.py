"""Exact laws of a discrete compound Poisson variable.

A DCP variable is ``Y = sum_k k * N_k`` with independent ``N_k ~ Po(lam a_k)``.
Its p.m.f. can be computed two ways: by summing over integer partitions, or
from the first row of a nilpotent-plus-identity matrix exponential. We check
they agree, then view a negative binomial law through its DCP representation.
"""
import numpy as np

from dcpp import DcpParams, NbParams, moments, nb_pmf, nb_to_dcp, pgf_eval, pmf_partition, pmf_vector

# A law with jumps of size 1, 2 and 4.
law = DcpParams(lam=2.5, alphas=(0.5, 0.3, 0.0, 0.2))
print("order:", law.order, " moments (mean, var):", tuple(round(v, 6) for v in moments(law)))

by_matrix = pmf_vector(law, law.lam, 12)
print("\n k   partition        matrix           |diff|")
for k in range(13):
    by_part = pmf_partition(law, law.lam, k)
    print(f"{k:2d}   {by_part:.12f}   {by_matrix[k]:.12f}   {abs(by_part - by_matrix[k]):.1e}")

# The generating function is the p.m.f. series.
z = 0.6
series = float(np.sum(pmf_vector(law, law.lam, 120) * z ** np.arange(121)))
print(f"\nG({z}) closed form {pgf_eval(law, z):.12f}   series {series:.12f}")

# Negative binomial as an infinite-order DCP, truncated at tail mass 1e-12.
nb = NbParams(r=2.0, q=0.3)
dcp = nb_to_dcp(nb, tol=1e-12)
print(f"\nNB(r=2, q=0.3): lam = {dcp.lam:.6f}, kept {dcp.order} weights, tail mass {dcp.tail_mass:.1e}")
err = np.max(np.abs(pmf_vector(dcp, dcp.lam, 20) - nb_pmf(nb, np.arange(21))))
print(f"max |DCP p.m.f. - NB closed form| over n <= 20: {err:.1e}")
