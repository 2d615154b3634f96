"""The synthetic corpus and its planted joint rule.

A sample is NonNegative exactly when the planted token appears in the
transcript AND the bright blob appears in the image. Either signal alone
caps out at 77.5% accuracy; together they determine the label exactly,
which is what lets fused models beat unimodal ones on this data.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from fusionbench import synth_dataset
from fusionbench.data import PLANT_ID

data = synth_dataset(512, seed=0)
labels = data.labels
print(f"512 samples: {int(labels.sum())} NonNegative / {int((1 - labels).sum())} Negative")

def text_bit(i):
    row = data.tokens[i][data.mask[i] > 0]
    return int((row == PLANT_ID).any())

def image_bit(i):
    windows = sliding_window_view(data.images[i, 0], (16, 16))
    return int(windows.mean(axis=(2, 3)).max() > 1.0)

t = np.array([text_bit(i) for i in range(len(data))])
v = np.array([image_bit(i) for i in range(len(data))])

print(f"joint rule t AND v recovers the label on {np.mean((t & v) == labels) * 100:.1f}% of samples")
print(f"text bit alone  (predict label = t): {np.mean(t == labels) * 100:.1f}%")
print(f"image bit alone (predict label = v): {np.mean(v == labels) * 100:.1f}%")
print("single-bit Bayes optimum is 77.5%: negatives are weighted toward the "
      "one-bit-on combinations, so one modality keeps firing on negatives")

same_seed = synth_dataset(512, seed=0)
print(f"\nregeneration with the same seed is byte-identical: "
      f"{same_seed.content_hash() == data.content_hash()}")
