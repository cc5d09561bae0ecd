import os
import sys

import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile(
    "ddq", max_examples=150, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("ddq")

from ddq._backend import available_backends  # noqa: E402

BACKENDS = available_backends()


@pytest.fixture(params=sorted(BACKENDS))
def backend(request, monkeypatch):
    """Swap the kernel module used by every library module."""
    import ddq.assignment
    import ddq.duplicate_removal
    import ddq.geometry
    import ddq.roi_features

    mod = BACKENDS[request.param]
    for m in (ddq.assignment, ddq.duplicate_removal, ddq.geometry, ddq.roi_features):
        monkeypatch.setattr(m, "kernels", mod)
    return mod
