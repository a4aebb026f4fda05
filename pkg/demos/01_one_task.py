"""Walk through a single task with the proactive robot and print what it saw and did.

    python demos/01_one_task.py [human-type-index 0..15]
"""

import sys

from cobotadapt.apomdp import RobotState, build_base_model
from cobotadapt.env import TaskConfig
from cobotadapt.human import InteractionCounters, build_human_model, make_type_space
from cobotadapt.metrics import compute_metrics
from cobotadapt.simulation import ProactiveController, run_episode

idx = int(sys.argv[1]) if len(sys.argv) > 1 else 2
human_type = make_type_space()[idx]
model = build_base_model()
res = run_episode(TaskConfig(task_type=4), build_human_model(human_type), ProactiveController(model), seed=7, counters=InteractionCounters(), record_belief=True)

print(f"human type: {human_type.label()}")
print(f"{'tick':>4} {'human':<16} {'robot':<14} {'score':>5}  most likely robot state")
for r in res.log.records:
    if not r.get("decided"):
        continue
    b = r.get("belief")
    top = RobotState(max(range(len(b)), key=b.__getitem__)).name if b else "-"
    print(f"{r['tick']:>4} {r['humanAction']:<16} {r['robotAction']:<14} {r['score']:>5.1f}  {top}")

m = compute_metrics(res.log)
print(f"\nsuccess rate {m.S_task:.2f}, human contribution {m.C_human:.2f}, warnings {m.warnings}, return {m.discountedReturn:.2f}")
