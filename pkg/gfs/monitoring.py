"""In-process statistics for bench trials."""

import threading
from typing import Any, Dict

# Trials report from worker threads
_LOCK = threading.Lock()

# In-memory stats storage
STATS = {
    "trials_total": 0,
    "trials_failed": 0,
    "total_latency_ms": 0.0,
    "methods": {},
}


def reset_stats():
    with _LOCK:
        STATS["trials_total"] = 0
        STATS["trials_failed"] = 0
        STATS["total_latency_ms"] = 0.0
        STATS["methods"] = {}


def record_trial(method: str, latency_ms: float, success: bool):
    """Record one trial's outcome and latency."""
    with _LOCK:
        STATS["trials_total"] += 1
        if not success:
            STATS["trials_failed"] += 1
        else:
            STATS["total_latency_ms"] += latency_ms

        if method not in STATS["methods"]:
            STATS["methods"][method] = {"count": 0, "total_latency": 0.0, "errors": 0}

        STATS["methods"][method]["count"] += 1
        if success:
            STATS["methods"][method]["total_latency"] += latency_ms
        else:
            STATS["methods"][method]["errors"] += 1


def get_stats() -> Dict[str, Any]:
    """Get current stats."""
    avg_latency = 0.0
    success_count = STATS["trials_total"] - STATS["trials_failed"]
    if success_count > 0:
        avg_latency = STATS["total_latency_ms"] / success_count

    method_stats = {}
    for method, data in STATS["methods"].items():
        m_success = data["count"] - data["errors"]
        m_avg = data["total_latency"] / m_success if m_success > 0 else 0.0
        method_stats[method] = {
            "count": data["count"],
            "errors": data["errors"],
            "average_latency_ms": round(m_avg, 2),
        }

    return {
        "global": {
            "total_trials": STATS["trials_total"],
            "failed_trials": STATS["trials_failed"],
            "average_latency_ms": round(avg_latency, 2),
        },
        "methods": method_stats,
    }
