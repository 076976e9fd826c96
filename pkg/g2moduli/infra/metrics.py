import logging
import time
from collections import defaultdict, deque
from functools import wraps
from typing import Deque, Dict

from prometheus_client import CollectorRegistry, Counter, Histogram, write_to_textfile

logger = logging.getLogger(__name__)

REGISTRY = CollectorRegistry()

STAGE_SECONDS = Histogram(
    'g2moduli_stage_seconds',
    'Wall time spent in each pipeline stage',
    ['stage'],
    registry=REGISTRY,
)

STAGE_FAILURES = Counter(
    'g2moduli_stage_failures',
    'Pipeline stages that raised',
    ['stage'],
    registry=REGISTRY,
)

# Last 100 timings per stage
_recent: Dict[str, Deque[float]] = defaultdict(lambda: deque(maxlen=100))


def measure_time(stage: str):
    """Decorator recording the wall time of a pipeline stage"""
    def decorator(f):
        @wraps(f)
        def wrapper(*args, **kwargs):
            start = time.perf_counter()
            try:
                return f(*args, **kwargs)
            except Exception:
                STAGE_FAILURES.labels(stage=stage).inc()
                raise
            finally:
                elapsed = time.perf_counter() - start
                STAGE_SECONDS.labels(stage=stage).observe(elapsed)
                _recent[stage].append(elapsed)
                logger.debug('stage %s took %.3fs', stage, elapsed)
        return wrapper
    return decorator


def average_time(stage: str) -> float:
    """Average of the most recent timings of a stage"""
    times = _recent.get(stage)
    if not times:
        return 0.0
    return sum(times) / len(times)


def recent_timings() -> Dict[str, float]:
    return {stage: average_time(stage) for stage in sorted(_recent)}


def write_metrics(path: str) -> None:
    """Writes the stage metrics in the Prometheus text format"""
    write_to_textfile(path, REGISTRY)
