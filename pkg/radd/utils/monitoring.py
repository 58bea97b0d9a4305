"""
Monitoring and observability utilities using Prometheus.

Counters are process-global. The HTTP exporter is only started when a port
is configured; otherwise the counters are still updated and can be read
back through get_metrics_summary().
"""

import logging
from typing import Dict, Optional

from prometheus_client import REGISTRY, Counter, Histogram, Info, start_http_server

from radd import __version__


logger = logging.getLogger(__name__)


system_info = Info(
    'radd_system',
    'Information about the radd toolkit'
)

# Sampling metrics
model_evaluations = Counter(
    'radd_model_evaluations_total',
    'Number of conditional-model evaluations (NFE)',
    ['backend']
)

cache_hits = Counter(
    'radd_cache_hits_total',
    'Total number of cache hits',
    ['cache_type']
)

cache_misses = Counter(
    'radd_cache_misses_total',
    'Total number of cache misses',
    ['cache_type']
)

euler_clamp_events = Counter(
    'radd_euler_clamp_events_total',
    'Euler unmask probabilities clamped into [0, 1]'
)

force_fill_events = Counter(
    'radd_force_fill_events_total',
    'Trajectories with masks left after the final step'
)

# Training metrics
train_steps = Counter(
    'radd_train_steps_total',
    'Optimizer steps taken',
    ['loss']
)

# Command metrics
command_runs = Counter(
    'radd_command_runs_total',
    'CLI command invocations',
    ['command', 'status']
)

command_duration = Histogram(
    'radd_command_duration_seconds',
    'Time spent running CLI commands',
    ['command']
)

# Error tracking
error_count = Counter(
    'radd_errors_total',
    'Total number of errors',
    ['component', 'error_type']
)


def setup_monitoring(port: Optional[int] = None) -> None:
    """
    Start the Prometheus exporter.

    Args:
        port: Port to expose metrics on; nothing is started when None
    """
    if port is None:
        logger.debug("Metrics exporter disabled")
        return

    try:
        start_http_server(port)
        logger.info(f"Prometheus metrics server started on port {port}")
        system_info.info({'version': __version__})
    except Exception as e:
        logger.error(f"Failed to start Prometheus metrics server: {e}")
        raise


def track_model_evaluation(backend: str, count: int = 1) -> None:
    """Count model evaluations for one backend."""
    if count > 0:
        model_evaluations.labels(backend=backend).inc(count)


def track_cache_access(cache_type: str, hit: bool) -> None:
    """
    Track a cache access.

    Args:
        cache_type: Type of cache
        hit: Whether it was a cache hit
    """
    if hit:
        cache_hits.labels(cache_type=cache_type).inc()
    else:
        cache_misses.labels(cache_type=cache_type).inc()


def track_command(command: str, status: str, duration: float) -> None:
    """
    Track a command execution.

    Args:
        command: Subcommand name
        status: Execution status (success/failure/error)
        duration: Execution duration in seconds
    """
    command_runs.labels(command=command, status=status).inc()
    command_duration.labels(command=command).observe(duration)


def track_error(component: str, error_type: str) -> None:
    """
    Track an error occurrence.

    Args:
        component: Component where error occurred
        error_type: Type of error
    """
    error_count.labels(component=component, error_type=error_type).inc()


def get_metrics_summary() -> Dict[str, float]:
    """Current totals of the radd counters, keyed by sample name and labels."""
    summary: Dict[str, float] = {}
    for metric in REGISTRY.collect():
        if not metric.name.startswith('radd_'):
            continue
        for sample in metric.samples:
            if not sample.name.endswith('_total'):
                continue
            labels = ",".join(f"{k}={v}" for k, v in sorted(sample.labels.items()))
            key = f"{sample.name}{{{labels}}}" if labels else sample.name
            summary[key] = sample.value
    return summary


def track_euler_clamp(count: int = 1) -> None:
    """Count Euler unmask probabilities clamped into [0, 1]."""
    if count > 0:
        euler_clamp_events.inc(count)


def track_force_fill() -> None:
    """Count a trajectory that still held masks after its last step."""
    force_fill_events.inc()


def track_train_step(loss: str) -> None:
    """Count one optimizer step for a loss kind."""
    train_steps.labels(loss=loss).inc()
