"""Tail bounds for DCP sums and point-process integrals, checked by simulation.

For a few laws and levels we compute the deviation threshold and probability
bound, estimate the actual tail by Monte Carlo and compare with the exact tail
obtained from the p.m.f.
"""
import numpy as np

from dcpp import DcpParams, Region, RngStream, bound_thm31, bound_thm32, empirical_tail, moments, pmf_vector

law = DcpParams(lam=1.0, alphas=(0.5, 0.5))
mean = moments(law).mean
pmf = pmf_vector(law, law.lam, 200)
stat = np.arange(201) - mean

print("finite-order sum, upper tail")
print("   x   threshold   bound     exact tail   MC estimate [99% CI]")
for i, x in enumerate((0.5, 1.0, 2.0, 4.0)):
    spec = bound_thm31([law], x)[0]
    exact = pmf[spec.exceeds(stat)].sum()
    rep = empirical_tail(lambda g, n: g.poisson(law.levy(), (n, 2)) @ [1, 2] - mean, spec, 100_000, RngStream(3, i))
    print(f"{x:4.1f}   {spec.threshold:8.4f}   {spec.bound:.5f}   {exact:.6f}     "
          f"{rep.empirical:.5f} [{rep.ci_low:.5f}, {rep.ci_high:.5f}]")

print("\nintegral of f = 1 over a unit cell of mass 3 (Poisson jumps)")
region = Region.unit_cell(3.0)
pmf3 = pmf_vector(DcpParams.poisson(3.0), 3.0, 200)
for y in (0.5, 1.0, 2.0):
    spec = bound_thm32(region, (1.0,), np.ones(1), y)
    exact = pmf3[spec.exceeds(np.arange(201) - 3.0)].sum()
    print(f"y={y:3.1f}: threshold {spec.threshold:.4f}, bound {spec.bound:.4f}, exact tail {exact:.5f}")
