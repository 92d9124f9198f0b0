"""Drive the pipeline against a real model process over the wire protocol.

Requires the companion server package (`pip install -e server/`). We launch
`xl3m-server` with its built-in tiny random transformer, connect the remote
backend to it, and run the pipeline end to end through HTTP. Swap --model
for any small Hugging Face causal LM to serve a real one.
"""

import subprocess
import sys
import time

import xl3m

PORT = 8399
proc = subprocess.Popen(
    ["xl3m-server", "--model", "tiny-random", "--port", str(PORT),
     "--context-window", "256", "--max-parallel", "4"],
    stdout=subprocess.DEVNULL,
    stderr=subprocess.DEVNULL,
)
try:
    backend = None
    for _ in range(50):  # wait for startup
        time.sleep(0.2)
        try:
            backend = xl3m.remote_backend(f"http://127.0.0.1:{PORT}", timeout_s=60)
            break
        except xl3m.TransportError:
            continue
    if backend is None:
        sys.exit("server did not come up")

    info = backend.info()
    print(f"serving {info.name}: vocab {info.vocab_size}, window {info.context_window}")

    text = "The pipeline only ever sends the model window-sized requests. " * 30
    tokens = backend.tokenize(text)
    print(f"input: {tokens.size} tokens, window: {info.context_window}")

    seg = xl3m.SegmentationConfig(window=64, overlap=16, task_len=32,
                                  header_len=16, context_window=256)
    key, generated = xl3m.run_pipeline(
        backend,
        tokens,
        seg_cfg=seg,
        sel_cfg=xl3m.SelectionConfig(k=3),
        sched=xl3m.SchedulerConfig(max_parallel=4),
        gen_cfg=xl3m.GenerationConfig(max_new_tokens=16),
    )
    print(f"selected segments {list(key.selected_indices)}, "
          f"key context {key.budget_used} tokens")
    print(f"generated {generated.size} tokens: {backend.detokenize(generated)!r}")
    print("(random weights generate noise; the point is the protocol round trip)")
    backend.close()
finally:
    proc.terminate()
    proc.wait(timeout=10)
