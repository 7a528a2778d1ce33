import time
import uuid
from datetime import datetime, timezone


def time_iso() -> str:
    """Returns the current time in ISO 8601 format."""
    return datetime.now(timezone.utc).isoformat()


def monotonic() -> float:
    """Clock used for stage durations."""
    return time.perf_counter()


def gen_trace_id() -> str:
    """Generates a new run ID."""
    return f"run_{uuid.uuid4().hex}"


def gen_span_id() -> str:
    """Generates a new stage span ID."""
    return f"stage_{uuid.uuid4().hex[:24]}"
