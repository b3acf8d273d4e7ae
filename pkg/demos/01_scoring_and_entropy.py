"""Scoring basics: the overfit oracle and direction entropy.

A generated sample is compared against two poles of a joint embedding
space: the anchor direction it was asked to realize, and the distractor
(non-subject) semantics it must shed. Samples that sit closer to the
distractor are overfit; the per-direction overfit fraction feeds a binary
entropy that peaks where the model is most uncertain.
"""

import math

import numpy as np

from gal_engine import compute_beta, entropy, normalize, phi, score_batch

anchor = normalize(np.array([1.0, 0.0, 0.0]))
distractor = normalize(np.array([0.0, 1.0, 0.0]))

print("oracle verdicts (True = overfit):")
for label, vec in [
    ("pure anchor     ", [1.0, 0.0, 0.0]),
    ("pure distractor ", [0.0, 1.0, 0.0]),
    ("exact tie       ", [1.0, 1.0, 0.0]),
    ("leaning anchor  ", [0.9, 0.4, 0.2]),
]:
    sample = normalize(np.array(vec))
    print(f"  {label} -> {phi(sample, anchor, distractor)}")

print("\na batch of ten noisy generations:")
rng = np.random.default_rng(7)
batch = []
for j in range(10):
    center = anchor.values if rng.uniform() < 0.6 else distractor.values
    batch.append(normalize(center + 0.05 * rng.standard_normal(3)))
scored = score_batch(batch, anchor, distractor)
flags = [flag for _, _, flag in scored]
beta = compute_beta(flags)
print(f"  overfit flags : {['x' if f else '.' for f in flags]}")
print(f"  beta (overfit fraction) = {beta:.2f}")
print(f"  direction entropy       = {entropy(beta):.5f} nats")
print(f"  maximum possible        = {math.log(2):.5f} nats (at beta = 0.5)")
