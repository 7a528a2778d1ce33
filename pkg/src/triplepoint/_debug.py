import os


def _debug_flag_enabled(flag: str) -> bool:
    flag_value = os.getenv(flag)
    return flag_value is not None and (flag_value == "1" or flag_value.lower() == "true")


DISABLE_TRACING = _debug_flag_enabled("TRIPLEPOINT_DISABLE_TRACING")
"""Set this flag to skip stage span collection. Numerical results are unaffected; run manifests
then carry empty timing tables.
"""

LOG_STEPS = _debug_flag_enabled("TRIPLEPOINT_LOG_STEPS")
"""By default the tracer and the integrators don't log individual continuation or refinement
steps, since a single oval can take tens of thousands of them. Set this flag to log them at DEBUG.
"""
