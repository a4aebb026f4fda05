"""Can each simulated human model recognize its own behaviour? Prints the likelihood matrix."""

import numpy as np

from cobotadapt.human import build_human_model, likelihood_matrix, validation_types

types = validation_types()
models = [build_human_model(t, seed=i) for i, t in enumerate(types)]
L = likelihood_matrix(models, n_tasks=30, length=40, seed=0)
np.set_printoptions(precision=3, suppress=True, linewidth=160)
for i, (t, row) in enumerate(zip(types, L)):
    mark = "ok" if row.argmax() == i else "--"
    print(f"{t.label():<28} {row}  {mark}")
