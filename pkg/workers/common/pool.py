"""
In-process worker pool for per-instance stage tasks.

Each StageWorker thread drains a shared queue until it is empty or the stop
event is set. Handlers return a payload; results come back in task order.
NumPy releases the GIL inside its kernels, so threads overlap the heavy work.
"""
from __future__ import annotations

import queue
import threading
import time
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

from autodiff.tape import default_dtype, set_default_dtype
from core.observability.emitter import emit_runtime_event
from core.observability.events import EventLevel
from core.runtime.errors import ParameterError
from core.schemas.contracts import StageResult, StageStatus, StageTask

Handler = Callable[[StageTask], Any]


class StageWorker(threading.Thread):
    def __init__(
        self,
        tasks: "queue.Queue[Tuple[int, StageTask]]",
        handler: Handler,
        results: Dict[int, StageResult],
        errors: Dict[int, BaseException],
        stop_event: threading.Event,
    ) -> None:
        super().__init__(daemon=True)
        # tensor precision is thread-local; inherit the caller's
        self.dtype = default_dtype()
        self.tasks = tasks
        self.handler = handler
        self.results = results
        self.errors = errors
        self.stop_event = stop_event

    def run(self) -> None:
        set_default_dtype(self.dtype)
        while not self.stop_event.is_set():
            try:
                index, task = self.tasks.get_nowait()
            except queue.Empty:
                return
            self.results[index] = self.handle_task(index, task)
            self.tasks.task_done()

    def handle_task(self, index: int, task: StageTask) -> StageResult:
        started = time.perf_counter()
        try:
            payload = self.handler(task)
        except Exception as exc:  # noqa: BLE001
            self.errors[index] = exc
            emit_runtime_event(
                runtime=task.stage,
                event_type="task_failed",
                payload={"key": task.key, "error": str(exc)},
                level=EventLevel.ERROR,
            )
            return StageResult(task_id=task.task_id, key=task.key, status=StageStatus.FAILURE, log_output=str(exc))
        artifacts = getattr(payload, "artifacts_path", None)
        return StageResult(
            task_id=task.task_id,
            key=task.key,
            status=StageStatus.SUCCESS,
            log_output=f"{task.stage} {task.key} done in {time.perf_counter() - started:.2f}s",
            artifacts_path=str(artifacts) if artifacts is not None else None,
            payload=payload,
        )


def run_pool(
    tasks: Sequence[StageTask],
    handler: Handler,
    jobs: int = 1,
    *,
    raise_on_failure: bool = True,
    stop_event: Optional[threading.Event] = None,
) -> List[StageResult]:
    """Run ``handler`` over ``tasks`` on ``jobs`` threads; results keep task order.

    With ``raise_on_failure`` the first failed task (in task order) re-raises
    its original exception after every worker has finished.
    """
    if jobs < 1:
        raise ParameterError("jobs must be >= 1")
    work: "queue.Queue[Tuple[int, StageTask]]" = queue.Queue()
    for index, task in enumerate(tasks):
        work.put((index, task))
    results: Dict[int, StageResult] = {}
    errors: Dict[int, BaseException] = {}
    stop = stop_event or threading.Event()
    workers = [StageWorker(work, handler, results, errors, stop) for _ in range(min(jobs, max(len(tasks), 1)))]
    if jobs == 1:
        workers[0].run()
    else:
        for worker in workers:
            worker.start()
        for worker in workers:
            worker.join()
    if raise_on_failure and errors:
        raise errors[min(errors)]
    return [results[i] for i in sorted(results)]
