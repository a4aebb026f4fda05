"""Same simulated people, same random streams: proactive planner against the reactive rule set.

    python demos/02_proactive_vs_reactive.py [n_seeds]
"""

import sys

import numpy as np

from cobotadapt.apomdp import build_base_model
from cobotadapt.experiments import ExperimentConfig, short_term_seed
from cobotadapt.human import Level, make_type_space

n_seeds = int(sys.argv[1]) if len(sys.argv) > 1 else 6
# people who drift off or push back are where anticipation should matter
types = [t.encode() for t in make_type_space() if t.attention == Level.Low or t.collaborativeness == Level.Low]
cfg = ExperimentConfig(human_types={"types": types})
model = build_base_model()

print(f"{'seed':>4}  {'human':<28} {'proactive':>10} {'reactive':>10} {'warn P':>7} {'warn R':>7}")
for seed in range(n_seeds):
    ret = {"proactive": [], "reactive": []}
    warn = {"proactive": 0, "reactive": 0}
    label = ""
    for cond, _k, label, log in short_term_seed(cfg, model, seed, 5):
        if cond in ret:
            ret[cond].append(log.summary["discountedReturn"])
            warn[cond] += log.summary["warnings"]
    print(f"{seed:>4}  {label:<28} {np.mean(ret['proactive']):>10.2f} {np.mean(ret['reactive']):>10.2f} {warn['proactive']:>7} {warn['reactive']:>7}")
