"""
Finite-key length for a measured session
========================================

Compute the deviation bounds and the final key length from sifted counts
and error rates, then compare with an unbiased run of the same size.
"""

from ebqkd import FiniteKeyInput, key_length, key_rate

# counts and error rates of a 34644-pair run with a Z-heavy bias
inp = FiniteKeyInput(n_x=1395, n_z=22300, e_bx=0.069, e_bz=0.065, f_x=1.1, f_z=1.12, eps_per_basis=3e-3)
res = key_length(inp)
print("theta_x = %.4f  theta_z = %.4f" % (res.theta_x, res.theta_z))
print("error correction leaks %.0f bits, privacy amplification removes %.0f" % (res.k_ec, res.k_pr))
print("final key: %d bits, %.4f per raw pair" % (res.final_key_len, key_rate(res, 34644)))

# same raw count, both bases equally likely: a quarter of the pairs land in each sifted basis
flat = key_length(FiniteKeyInput(34644 // 4, 34644 // 4, 0.069, 0.065, 1.1, 1.12, 3e-3))
print("unbiased: %d bits, %.4f per raw pair" % (flat.final_key_len, key_rate(flat, 34644)))

# the asymptotic limit drops the statistical penalty entirely
print("asymptotic: %d bits" % key_length(inp, asymptotic=True).final_key_len)
