"""
Biased basis choice from ten random bits
========================================

A ten-bit random word is compared against a fixed reference. Words below
the reference select Z, so the bias is quantised in steps of 1/1024.
"""

import numpy as np

from ebqkd import BiasComparator, RandomBitSource, draw_bases, set_bias

comp = set_bias(0.8)
print("reference %d, exact P(Z) = %.6f" % (comp.reference, comp.probability_z))

# every word once: the Z count equals the reference exactly
words = np.arange(1024)
print("Z outcomes over all words:", int(draw_bases(comp, words).sum()))

# a seeded bit source reproduces the same basis sequence
src = RandomBitSource(seed=5)
z = src.bases(comp, 100_000)
print("empirical P(Z) over 1e5 draws: %.4f" % z.mean())

for q in (0.5, 0.79, 0.96, 1.0):
    c = BiasComparator(set_bias(q).reference)
    print("q=%.2f -> N0=%4d -> P(Z)=%.4f" % (q, c.reference, c.probability_z))
