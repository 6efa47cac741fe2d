"""Small dataset builders shared by the tests."""

import numpy as np

from calfrocket.core import BEHAVIOURS, Dataset, LabeledWindow


def make_dataset(class_counts, length=20, channels=1, seed=0, label_set=BEHAVIOURS):
    """Windows of noise; ``class_counts[calf]`` maps labels to window counts."""
    rng = np.random.default_rng(seed)
    windows = []
    for calf, per_label in class_counts.items():
        for label, n in per_label.items():
            for i in range(n):
                windows.append(LabeledWindow(calf, f"{calf}-{label}", label, rng.normal(size=(channels, length)), i))
    present = {l for per in class_counts.values() for l, n in per.items() if n}
    return Dataset(tuple(windows), tuple(l for l in label_set if l in present))
