"""Needle-in-a-haystack recall grids for three methods.

Each cell of a grid is the mean recall over seeded runs at one
(context length, needle depth decile) coordinate. Entropy-based selection
reaches any depth; truncation baselines only recall needles that happen to
fall inside the token ranges they keep.
"""

from xl3m import SchedulerConfig, make_method, oracle_backend, run_needle_grid
from xl3m.harness import Xl3mMethod

backend = oracle_backend()
lengths = (8192, 16384, 32768)

for method in (
    Xl3mMethod(sched=SchedulerConfig(max_parallel=8)),
    make_method("stream_truncate"),   # first 128 + last 1792 tokens
    make_method("tail_truncate"),     # last 2048 tokens only
):
    grid = run_needle_grid(
        backend, method, lengths=lengths, n_deciles=10, runs_per_cell=3, seed=1
    )
    print(f"\n=== {method.name} ===")
    print(grid.render_heatmap())
    print(f"mean recall: {grid.recall.mean():.3f}")
