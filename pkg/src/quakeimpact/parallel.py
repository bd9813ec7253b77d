"""Worker-pool plumbing shared by the inference engines.

Workers receive the prepared event contexts once (via the pool initializer)
instead of per task.  Because every stochastic task derives its stream from
(seed, step, indices), results are identical for any worker count, and
results are gathered in submission order.
"""

import pickle
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass


@dataclass
class WorkerContext:
    """Shared state every evaluation task needs."""

    events: list          # prepared SimContext list
    loss_config: object
    prior_spec: object
    seed: int
    scorer: object = None  # optional callable(params, rng_factory) replacing dataset_loss


_WORKER_CTX = None


def _init_worker(payload):
    global _WORKER_CTX
    _WORKER_CTX = pickle.loads(payload)


def _run_task(args):
    fn, payload = args
    return fn(_WORKER_CTX, payload)


class EvalPool:
    """Maps module-level task functions over payloads, inline when threads=1."""

    def __init__(self, threads, context):
        self.threads = max(1, int(threads))
        self.context = context
        self._executor = None
        if self.threads > 1:
            self._executor = ProcessPoolExecutor(
                max_workers=self.threads,
                initializer=_init_worker,
                initargs=(pickle.dumps(context),),
            )

    def map(self, fn, payloads):
        payloads = list(payloads)
        if self._executor is None:
            return [fn(self.context, p) for p in payloads]
        chunksize = max(1, len(payloads) // (self.threads * 4))
        return list(self._executor.map(_run_task, [(fn, p) for p in payloads], chunksize=chunksize))

    def close(self):
        if self._executor is not None:
            self._executor.shutdown()
            self._executor = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
